#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnidpo/datagen.hpp"
#include "omnidpo/eval.hpp"
#include "omnidpo/serialize.hpp"
#include "omnidpo/trainer.hpp"

namespace omnidpo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Tensor <-> JSON (nested numeric arrays).

inline json tensor_to_json(const Tensor& t) {
  if (t.rank() == 2) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.rows(); ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  }
  json flat = json::array();
  for (double v : t.data()) flat.push_back(v);
  return flat;
}

inline Tensor tensor_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("tensor_from_json: not an array");
  if (!j.empty() && j[0].is_array()) {
    std::size_t r = j.size(), c = j[0].size();
    Tensor t = Tensor::matrix(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      if (j[i].size() != c) throw std::runtime_error("tensor_from_json: ragged rows");
      for (std::size_t k = 0; k < c; ++k) t(i, k) = j[i][k].get<double>();
    }
    return t;
  }
  std::vector<double> data;
  for (const json& v : j) data.push_back(v.get<double>());
  return Tensor::vec(std::move(data));
}

// ---------------------------------------------------------------------------
// Dataset records (line-delimited JSON).

inline json answer_to_json(const Answer& a) { return json(a.tokens); }
inline Answer answer_from_json(const json& j) {
  return Answer{j.get<std::vector<int>>()};
}

inline json record_to_json(const TextPairRecord& r) {
  json j;
  j["record_id"] = r.id;
  j["family"] = "text_preference";
  j["scene_id"] = r.scene_id;
  j["video"] = tensor_to_json(r.pair.x.video);
  j["audio"] = tensor_to_json(r.pair.x.audio);
  j["question"] = r.pair.x.text;
  j["y_plus"] = answer_to_json(r.pair.y_plus);
  j["y_minus"] = answer_to_json(r.pair.y_minus);
  j["style"] = r.style == PromptStyle::qa ? "qa" : "caption";
  j["corruption"] = r.corruption;
  if (r.fabricated_token >= 0) j["fabricated_token"] = r.fabricated_token;
  return j;
}

inline json record_to_json(const RobustnessRecord& r) {
  json j;
  j["record_id"] = r.id;
  j["family"] = r.pair.degraded_modality == Modality::visual
                    ? "visual_robustness"
                    : "audio_robustness";
  j["scene_id"] = r.scene_id;
  j["video"] = tensor_to_json(r.pair.x_full.video);
  j["audio"] = tensor_to_json(r.pair.x_full.audio);
  if (r.pair.degraded_modality == Modality::visual) {
    j["video_degraded"] = tensor_to_json(r.pair.x_degraded.video);
  } else {
    j["audio_degraded"] = tensor_to_json(r.pair.x_degraded.audio);
  }
  j["question"] = r.pair.x_full.text;
  j["y_plus"] = answer_to_json(r.pair.y_plus);
  j["style"] = r.style == PromptStyle::qa ? "qa" : "caption";
  return j;
}

inline TextPairRecord text_record_from_json(const json& j) {
  TextPairRecord r;
  r.id = j.at("record_id").get<std::string>();
  r.scene_id = j.at("scene_id").get<std::uint64_t>();
  r.pair.x.video = tensor_from_json(j.at("video"));
  r.pair.x.audio = tensor_from_json(j.at("audio"));
  r.pair.x.text = j.at("question").get<std::vector<int>>();
  r.pair.y_plus = answer_from_json(j.at("y_plus"));
  r.pair.y_minus = answer_from_json(j.at("y_minus"));
  r.style = j.at("style") == "qa" ? PromptStyle::qa : PromptStyle::caption;
  r.corruption = j.at("corruption").get<std::string>();
  if (j.contains("fabricated_token")) r.fabricated_token = j["fabricated_token"];
  return r;
}

inline RobustnessRecord robustness_record_from_json(const json& j) {
  RobustnessRecord r;
  r.id = j.at("record_id").get<std::string>();
  r.scene_id = j.at("scene_id").get<std::uint64_t>();
  r.pair.x_full.video = tensor_from_json(j.at("video"));
  r.pair.x_full.audio = tensor_from_json(j.at("audio"));
  r.pair.x_full.text = j.at("question").get<std::vector<int>>();
  r.pair.x_degraded = r.pair.x_full;
  if (j.at("family") == "visual_robustness") {
    r.pair.degraded_modality = Modality::visual;
    r.pair.x_degraded.video = tensor_from_json(j.at("video_degraded"));
  } else {
    r.pair.degraded_modality = Modality::audio;
    r.pair.x_degraded.audio = tensor_from_json(j.at("audio_degraded"));
  }
  r.pair.y_plus = answer_from_json(j.at("y_plus"));
  r.style = j.at("style") == "qa" ? PromptStyle::qa : PromptStyle::caption;
  return r;
}

inline json probe_to_json(const Probe& p) {
  json j;
  j["probe_id"] = p.id;
  j["scene_id"] = p.scene_id;
  j["modality"] = to_string(p.modality);
  j["video"] = tensor_to_json(p.input.video);
  j["audio"] = tensor_to_json(p.input.audio);
  j["question"] = p.input.text;
  j["label"] = p.label_yes ? "yes" : "no";
  j["target_token"] = p.target_token;
  return j;
}

inline Probe probe_from_json(const json& j) {
  Probe p;
  p.id = j.at("probe_id").get<std::string>();
  p.scene_id = j.at("scene_id").get<std::uint64_t>();
  std::string m = j.at("modality").get<std::string>();
  p.modality = m == "visual" ? ProbeModality::visual
               : m == "audio" ? ProbeModality::audio
                              : ProbeModality::audio_visual;
  p.input.video = tensor_from_json(j.at("video"));
  p.input.audio = tensor_from_json(j.at("audio"));
  p.input.text = j.at("question").get<std::vector<int>>();
  p.label_yes = j.at("label") == "yes";
  p.target_token = j.at("target_token").get<int>();
  return p;
}

inline json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["counts"] = {{"text_preference", m.text_pairs},
                 {"visual_robustness", m.visual_pairs},
                 {"audio_robustness", m.audio_pairs},
                 {"total", m.total()}};
  j["scene_count"] = m.scene_count;
  j["seed"] = m.seed;
  j["noise"] = {{"sigma_v", m.noise.sigma_v},
                {"sigma_a", m.noise.sigma_a},
                {"mode", m.noise.mode == NoiseConfig::Mode::gaussian
                             ? "gaussian"
                             : "zero_mask"}};
  j["catalog_checksum"] = m.catalog_checksum;
  return j;
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.text_pairs = j.at("counts").at("text_preference").get<std::size_t>();
  m.visual_pairs = j.at("counts").at("visual_robustness").get<std::size_t>();
  m.audio_pairs = j.at("counts").at("audio_robustness").get<std::size_t>();
  m.scene_count = j.at("scene_count").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.noise.sigma_v = j.at("noise").at("sigma_v").get<double>();
  m.noise.sigma_a = j.at("noise").at("sigma_a").get<double>();
  m.noise.mode = j.at("noise").at("mode") == "gaussian"
                     ? NoiseConfig::Mode::gaussian
                     : NoiseConfig::Mode::zero_mask;
  m.catalog_checksum = j.at("catalog_checksum").get<std::uint64_t>();
  return m;
}

// ---------------------------------------------------------------------------
// Corpus files on disk.

inline void write_corpus(const GeneratedCorpus& corpus, const std::string& dir) {
  {
    std::ofstream f(dir + "/dataset.jsonl", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + dir + "/dataset.jsonl");
    for (const TextPairRecord& r : corpus.dataset.text) f << record_to_json(r) << "\n";
    for (const RobustnessRecord& r : corpus.dataset.visual) f << record_to_json(r) << "\n";
    for (const RobustnessRecord& r : corpus.dataset.audio) f << record_to_json(r) << "\n";
  }
  {
    std::ofstream f(dir + "/probes.jsonl", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + dir + "/probes.jsonl");
    for (const Probe& p : corpus.probes) f << probe_to_json(p) << "\n";
  }
  {
    std::ofstream f(dir + "/eval_pairs.jsonl", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + dir + "/eval_pairs.jsonl");
    for (const RobustnessRecord& r : corpus.eval_pairs) f << record_to_json(r) << "\n";
    for (const TextPairRecord& r : corpus.eval_text) f << record_to_json(r) << "\n";
  }
  write_file(dir + "/manifest.json", manifest_to_json(corpus.manifest).dump(2) + "\n");
}

struct LoadedCorpus {
  Dataset dataset;
  DatasetManifest manifest;
  std::vector<Probe> probes;
  std::vector<RobustnessRecord> eval_pairs;
  std::vector<TextPairRecord> eval_text;
};

inline void for_each_jsonl(const std::string& path,
                           const std::function<void(const json&)>& fn) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    fn(json::parse(line));
  }
}

inline LoadedCorpus load_corpus(const std::string& dir) {
  LoadedCorpus out;
  out.manifest = manifest_from_json(json::parse(read_file(dir + "/manifest.json")));
  for_each_jsonl(dir + "/dataset.jsonl", [&](const json& j) {
    std::string family = j.at("family").get<std::string>();
    if (family == "text_preference") {
      out.dataset.text.push_back(text_record_from_json(j));
    } else if (family == "visual_robustness") {
      out.dataset.visual.push_back(robustness_record_from_json(j));
    } else {
      out.dataset.audio.push_back(robustness_record_from_json(j));
    }
  });
  if (out.dataset.text.size() != out.manifest.text_pairs ||
      out.dataset.visual.size() != out.manifest.visual_pairs ||
      out.dataset.audio.size() != out.manifest.audio_pairs) {
    throw std::runtime_error("load_corpus: manifest counts disagree with records");
  }
  for_each_jsonl(dir + "/probes.jsonl",
                 [&](const json& j) { out.probes.push_back(probe_from_json(j)); });
  for_each_jsonl(dir + "/eval_pairs.jsonl", [&](const json& j) {
    if (j.at("family") == "text_preference") {
      out.eval_text.push_back(text_record_from_json(j));
    } else {
      out.eval_pairs.push_back(robustness_record_from_json(j));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Metrics report (JSON + aligned text table).

inline json rates_to_json(const RateSet& r) {
  auto put = [](json& j, const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v; else j[k] = nullptr;
  };
  json j;
  put(j, "accuracy", r.accuracy);
  put(j, "precision", r.precision);
  put(j, "recall", r.recall);
  put(j, "f1", r.f1);
  put(j, "yes_rate", r.yes_rate);
  return j;
}

inline json sub_report_to_json(const SubReport& s) {
  json j;
  j["counts"] = {{"tp", s.counts.tp}, {"fp", s.counts.fp},
                 {"tn", s.counts.tn}, {"fn", s.counts.fn}};
  j["rates"] = rates_to_json(s.rates);
  j["pa"] = s.pa ? json(*s.pa) : json(nullptr);
  j["hr"] = s.hr ? json(*s.hr) : json(nullptr);
  return j;
}

inline json report_to_json(const MetricsReport& r) {
  json j;
  j["overall"] = sub_report_to_json(r.overall);
  json per;
  for (const auto& [k, v] : r.per_modality) per[k] = sub_report_to_json(v);
  j["per_modality"] = per;
  j["gap_visual"] = r.gap_visual ? json(*r.gap_visual) : json(nullptr);
  j["gap_audio"] = r.gap_audio ? json(*r.gap_audio) : json(nullptr);
  j["probe_count"] = r.probe_count;
  j["probe_set_checksum"] = r.probe_set_checksum;
  return j;
}

inline std::string fmt_rate(const std::optional<double>& v) {
  if (!v) return "   n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.4f", *v);
  return buf;
}

inline std::string report_to_table(const MetricsReport& r) {
  std::ostringstream os;
  os << "split          acc    prec   rec    f1     yes%   pa     hr\n";
  auto row = [&](const std::string& name, const SubReport& s) {
    os << name;
    for (std::size_t i = name.size(); i < 13; ++i) os << ' ';
    os << ' ' << fmt_rate(s.rates.accuracy) << ' ' << fmt_rate(s.rates.precision)
       << ' ' << fmt_rate(s.rates.recall) << ' ' << fmt_rate(s.rates.f1) << ' '
       << fmt_rate(s.rates.yes_rate) << ' ' << fmt_rate(s.pa) << ' '
       << fmt_rate(s.hr) << "\n";
  };
  row("overall", r.overall);
  for (const auto& [k, v] : r.per_modality) row(k, v);
  os << "modality gap: visual=" << fmt_rate(r.gap_visual)
     << " audio=" << fmt_rate(r.gap_audio) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Flat key=value config files ('#' starts a comment).

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  void num(const char* key, double& out) {
    if (auto it = kv_.find(key); it != kv_.end()) {
      out = std::stod(it->second);
      kv_.erase(it);
    }
  }
  template <typename T>
    requires std::is_unsigned_v<T>
  void num(const char* key, T& out) {
    if (auto it = kv_.find(key); it != kv_.end()) {
      out = static_cast<T>(std::stoull(it->second));
      kv_.erase(it);
    }
  }
  void str(const char* key, std::string& out) {
    if (auto it = kv_.find(key); it != kv_.end()) {
      out = it->second;
      kv_.erase(it);
    }
  }

  void finish(const std::string& what) const {
    if (!kv_.empty()) {
      throw std::runtime_error("unknown " + what + " config key: " +
                               kv_.begin()->first);
    }
  }

 private:
  std::map<std::string, std::string> kv_;
};

inline GenConfig gen_config_from_kv(const std::map<std::string, std::string>& kv) {
  GenConfig c;
  KvReader r(kv);
  r.num("scenes", c.scenes);
  r.num("pairs_per_scene", c.pairs_per_scene);
  r.num("v_max", c.bounds.v_max);
  r.num("a_max", c.bounds.a_max);
  r.num("p_silent", c.bounds.p_silent);
  r.num("frames", c.frames);
  r.num("windows", c.windows);
  r.num("render_jitter", c.render_jitter);
  r.num("sigma_v", c.noise.sigma_v);
  r.num("sigma_a", c.noise.sigma_a);
  std::string mode = c.noise.mode == NoiseConfig::Mode::gaussian ? "gaussian" : "zero_mask";
  r.str("noise_mode", mode);
  if (mode == "gaussian") c.noise.mode = NoiseConfig::Mode::gaussian;
  else if (mode == "zero_mask") c.noise.mode = NoiseConfig::Mode::zero_mask;
  else throw std::runtime_error("noise_mode must be gaussian or zero_mask");
  r.num("qa_fraction", c.qa_fraction);
  r.num("rob_qa_fraction", c.rob_qa_fraction);
  r.num("yes_bias", c.yes_bias);
  r.num("rob_yes_bias", c.rob_yes_bias);
  r.num("seed", c.seed);
  r.num("eval_scenes", c.eval_scenes);
  r.num("eval_pairs_per_scene", c.eval_pairs_per_scene);
  r.num("video_dim", c.video_dim);
  r.num("audio_dim", c.audio_dim);
  r.num("n_objects", c.n_objects);
  r.num("n_events", c.n_events);
  r.finish("gen");
  return c;
}

inline std::string gen_config_to_kv(const GenConfig& c) {
  std::ostringstream os;
  os << "scenes = " << c.scenes << "\n"
     << "pairs_per_scene = " << c.pairs_per_scene << "\n"
     << "v_max = " << c.bounds.v_max << "\n"
     << "a_max = " << c.bounds.a_max << "\n"
     << "p_silent = " << c.bounds.p_silent << "\n"
     << "frames = " << c.frames << "\n"
     << "windows = " << c.windows << "\n"
     << "render_jitter = " << c.render_jitter << "\n"
     << "sigma_v = " << c.noise.sigma_v << "\n"
     << "sigma_a = " << c.noise.sigma_a << "\n"
     << "noise_mode = "
     << (c.noise.mode == NoiseConfig::Mode::gaussian ? "gaussian" : "zero_mask")
     << "\n"
     << "qa_fraction = " << c.qa_fraction << "\n"
     << "rob_qa_fraction = " << c.rob_qa_fraction << "\n"
     << "yes_bias = " << c.yes_bias << "\n"
     << "rob_yes_bias = " << c.rob_yes_bias << "\n"
     << "seed = " << c.seed << "\n"
     << "eval_scenes = " << c.eval_scenes << "\n"
     << "eval_pairs_per_scene = " << c.eval_pairs_per_scene << "\n"
     << "video_dim = " << c.video_dim << "\n"
     << "audio_dim = " << c.audio_dim << "\n"
     << "n_objects = " << c.n_objects << "\n"
     << "n_events = " << c.n_events << "\n";
  return os.str();
}

struct FullTrainConfig {
  PolicyConfig policy;
  TrainConfig train;
};

inline FullTrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv) {
  FullTrainConfig c;
  KvReader r(kv);
  r.num("dim", c.policy.dim);
  r.num("layers", c.policy.layers);
  r.num("ffn_dim", c.policy.ffn_dim);
  r.num("vocab", c.policy.vocab);
  r.num("video_dim", c.policy.video_dim);
  r.num("audio_dim", c.policy.audio_dim);
  r.num("base_lr", c.train.base_lr);
  r.num("warmup_ratio", c.train.warmup_ratio);
  r.num("total_steps", c.train.total_steps);
  r.num("batch_text", c.train.batch_text);
  r.num("batch_vis", c.train.batch_vis);
  r.num("batch_aud", c.train.batch_aud);
  r.num("beta", c.train.loss.beta);
  r.num("lambda_v", c.train.loss.lambda_v);
  r.num("lambda_a", c.train.loss.lambda_a);
  r.num("seed", c.train.seed);
  r.num("checkpoint_every", c.train.checkpoint_every);
  r.num("grad_clip", c.train.grad_clip);
  r.finish("train");
  return c;
}

inline std::string train_config_to_kv(const FullTrainConfig& c) {
  std::ostringstream os;
  os << "dim = " << c.policy.dim << "\n"
     << "layers = " << c.policy.layers << "\n"
     << "ffn_dim = " << c.policy.ffn_dim << "\n"
     << "vocab = " << c.policy.vocab << "\n"
     << "video_dim = " << c.policy.video_dim << "\n"
     << "audio_dim = " << c.policy.audio_dim << "\n"
     << "base_lr = " << c.train.base_lr << "\n"
     << "warmup_ratio = " << c.train.warmup_ratio << "\n"
     << "total_steps = " << c.train.total_steps << "\n"
     << "batch_text = " << c.train.batch_text << "\n"
     << "batch_vis = " << c.train.batch_vis << "\n"
     << "batch_aud = " << c.train.batch_aud << "\n"
     << "beta = " << c.train.loss.beta << "\n"
     << "lambda_v = " << c.train.loss.lambda_v << "\n"
     << "lambda_a = " << c.train.loss.lambda_a << "\n"
     << "seed = " << c.train.seed << "\n"
     << "checkpoint_every = " << c.train.checkpoint_every << "\n"
     << "grad_clip = " << c.train.grad_clip << "\n";
  return os.str();
}

}  // namespace omnidpo
