// Command-line front end for the omnidpo library: dataset generation,
// preference training with ablation presets, evaluation, gradient checking,
// and report comparison. Every subcommand is a thin wrapper over library
// calls; all state flows through files and flags.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "omnidpo/eval.hpp"
#include "omnidpo/gradcheck_suite.hpp"
#include "omnidpo/io.hpp"
#include "omnidpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace omnidpo;

namespace {

std::map<std::string, std::string> read_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_kv(read_file(path));
}

void apply_preset(const std::string& preset, LossConfig& loss) {
  if (preset == "full") {
    loss.lambda_v = 1.0;
    loss.lambda_a = 1.0;
  } else if (preset == "dpo_only") {
    loss.lambda_v = 0.0;
    loss.lambda_a = 0.0;
  } else if (preset == "audio_only") {
    loss.lambda_v = 0.0;
    loss.lambda_a = 1.0;
  } else if (preset == "video_only") {
    loss.lambda_v = 1.0;
    loss.lambda_a = 0.0;
  } else {
    throw std::runtime_error("unknown preset: " + preset +
                             " (expected full, dpo_only, audio_only, video_only)");
  }
}

int cmd_gen(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir, bool dump, bool full_scale) {
  // --config entries override the chosen base (defaults or --full-scale).
  std::string merged =
      full_scale ? gen_config_to_kv(full_scale_config()) : std::string();
  for (const auto& [k, v] : read_config(config_path)) {
    merged += k + " = " + v + "\n";
  }
  GenConfig cfg = gen_config_from_kv(parse_kv(merged));
  if (seed) cfg.seed = *seed;
  if (dump) {
    std::cout << gen_config_to_kv(cfg);
    return 0;
  }
  fs::create_directories(out_dir);
  GeneratedCorpus corpus = build_corpus(cfg);
  write_corpus(corpus, out_dir);
  std::printf("scenes=%zu text_pairs=%zu visual_pairs=%zu audio_pairs=%zu "
              "total_pairs=%zu probes=%zu eval_pairs=%zu\n",
              corpus.manifest.scene_count, corpus.manifest.text_pairs,
              corpus.manifest.visual_pairs, corpus.manifest.audio_pairs,
              corpus.manifest.total(), corpus.probes.size(),
              corpus.eval_pairs.size());
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& preset, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path,
              bool dump) {
  FullTrainConfig cfg = train_config_from_kv(read_config(config_path));
  if (seed) cfg.train.seed = *seed;
  if (!preset.empty()) apply_preset(preset, cfg.train.loss);
  if (dump) {
    std::cout << train_config_to_kv(cfg);
    return 0;
  }
  LoadedCorpus corpus = load_corpus(data_dir);

  Policy policy;
  std::optional<TrainerState> resume;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    if (ck.policy.config != cfg.policy) {
      throw std::runtime_error("resume checkpoint config differs from --config");
    }
    if (!ck.trainer) {
      throw std::runtime_error("resume checkpoint has no optimizer state");
    }
    policy = std::move(ck.policy);
    resume = std::move(ck.trainer);
  } else {
    policy = init_policy(cfg.policy, cfg.train.seed);
  }
  Policy ref = freeze_reference(init_policy(cfg.policy, cfg.train.seed));

  fs::create_directories(out_dir);
  std::string ckpt_path = out_dir + "/checkpoint.bin";
  std::ofstream log(out_dir + "/train_log.csv",
                    resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + out_dir + "/train_log.csv");
  if (!resume) log << train_log_header() << "\n";

  std::uint64_t ref_before = weight_checksum(ref);
  train(policy, ref, corpus.dataset, cfg.train, resume, ckpt_path,
        [&](const TrainLogRow& row) { log << to_csv(row) << "\n"; });
  if (weight_checksum(ref) != ref_before) {
    throw std::runtime_error("reference weights changed during training");
  }
  std::printf("trained %zu steps; checkpoint=%s log=%s\n",
              cfg.train.total_steps, ckpt_path.c_str(),
              (out_dir + "/train_log.csv").c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  LoadedCorpus corpus = load_corpus(data_dir);
  std::vector<RobustnessPair> gap_pairs;
  for (const RobustnessRecord& r : corpus.eval_pairs) gap_pairs.push_back(r.pair);
  MetricsReport rep = evaluate(ck.policy, corpus.probes, gap_pairs);
  fs::create_directories(out_dir);
  write_file(out_dir + "/report.json", report_to_json(rep).dump(2) + "\n");
  write_file(out_dir + "/report.txt", report_to_table(rep));
  std::cout << report_to_table(rep);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  std::vector<GradCheckReport> reports = run_gradcheck_suite(seed, 10);
  double worst = 0.0;
  std::string worst_op = "none";
  bool ok = true;
  for (const GradCheckReport& r : reports) {
    std::printf("%-18s max_rel_err=%.3e %s\n", r.op.c_str(), r.max_rel_err,
                r.max_rel_err < 1e-4 ? "ok" : "FAIL");
    if (r.max_rel_err >= 1e-4) ok = false;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_op = r.op;
    }
  }
  std::printf("worst: %s %.3e\n", worst_op.c_str(), worst);
  return ok ? 0 : 1;
}

double num_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

int cmd_compare(const std::string& path_a, const std::string& path_b) {
  json a = json::parse(read_file(path_a));
  json b = json::parse(read_file(path_b));
  if (a.at("probe_set_checksum") != b.at("probe_set_checksum")) {
    throw std::runtime_error("reports were produced on different probe sets");
  }
  std::printf("%-28s %10s %10s %10s\n", "metric", "a", "b", "delta");
  auto row = [&](const std::string& name, const json& ja, const json& jb) {
    double va = num_or_nan(ja), vb = num_or_nan(jb);
    std::printf("%-28s %10.4f %10.4f %+10.4f\n", name.c_str(), va, vb, vb - va);
  };
  auto sub = [&](const std::string& prefix, const json& sa, const json& sb) {
    for (const char* k : {"accuracy", "precision", "recall", "f1", "yes_rate"}) {
      row(prefix + k, sa.at("rates").at(k), sb.at("rates").at(k));
    }
    row(prefix + "pa", sa.at("pa"), sb.at("pa"));
    row(prefix + "hr", sa.at("hr"), sb.at("hr"));
  };
  sub("overall.", a.at("overall"), b.at("overall"));
  for (const auto& [k, v] : a.at("per_modality").items()) {
    if (b.at("per_modality").contains(k)) {
      sub(k + ".", v, b.at("per_modality").at(k));
    }
  }
  row("gap_visual", a.at("gap_visual"), b.at("gap_visual"));
  row("gap_audio", a.at("gap_audio"), b.at("gap_audio"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omnidpo: preference optimization over audio-visual-text toys"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", data_dir, preset, resume_path,
              checkpoint_path, report_a, report_b;
  std::optional<std::uint64_t> seed;
  std::uint64_t gradcheck_seed = 0;
  bool dump = false, full_scale = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "key=value config file");
  gen->add_option("--seed", seed, "seed override");
  gen->add_option("--out", out_dir, "output directory");
  gen->add_flag("--dump-config", dump, "print the effective config and exit");
  gen->add_flag("--full-scale", full_scale,
                "start from the large reference corpus settings");

  CLI::App* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed, "seed override");
  train->add_option("--preset", preset,
                    "full | dpo_only | audio_only | video_only");
  train->add_option("--data", data_dir, "corpus directory")->required();
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_flag("--dump-config", dump, "print the effective config and exit");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "corpus directory")->required();
  ev->add_option("--out", out_dir, "output directory");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit");
  gc->add_option("--seed", gradcheck_seed, "seed");

  CLI::App* cmp = app.add_subcommand("compare", "diff two evaluation reports");
  cmp->add_option("report_a", report_a, "first report.json")->required();
  cmp->add_option("report_b", report_b, "second report.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config_path, seed, out_dir, dump, full_scale);
    if (train->parsed()) {
      return cmd_train(config_path, seed, preset, data_dir, out_dir,
                       resume_path, dump);
    }
    if (ev->parsed()) return cmd_eval(checkpoint_path, data_dir, out_dir);
    if (gc->parsed()) return cmd_gradcheck(gradcheck_seed);
    if (cmp->parsed()) return cmd_compare(report_a, report_b);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
