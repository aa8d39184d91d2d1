#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnidpo/losses.hpp"
#include "omnidpo/model.hpp"
#include "omnidpo/rng.hpp"

namespace omnidpo {

// ---------------------------------------------------------------------------
// Catalog: the synthetic world's vocabulary of visual objects and audio
// events, plus the token layout shared with the model.

namespace tok {
constexpr int kEos = kEosToken;  // 0
constexpr int kYes = 1;
constexpr int kNo = 2;
constexpr int kSee = 3;
constexpr int kHear = 4;
constexpr int kWhat = 5;
constexpr int kAnd = 6;
constexpr int kFirstItem = 7;
}  // namespace tok

struct CatalogItem {
  std::string name;
  int token;         // id in the model vocabulary
  Tensor embedding;  // unit-norm feature vector
};

struct Catalog {
  std::vector<CatalogItem> objects;  // visual, embeddings in R^{d_v}
  std::vector<CatalogItem> events;   // auditory, embeddings in R^{d_a}
  std::size_t video_dim = 0;
  std::size_t audio_dim = 0;

  std::size_t vocab_used() const {
    return tok::kFirstItem + objects.size() + events.size();
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto* group : {&objects, &events}) {
      for (const CatalogItem& it : *group) {
        h = fnv1a(it.name.data(), it.name.size(), h);
        h = fnv1a(&it.token, sizeof(it.token), h);
        h = fnv1a(it.embedding, h);
      }
    }
    return h;
  }
};

inline Catalog default_catalog(std::size_t video_dim, std::size_t audio_dim,
                               std::size_t n_objects = 8,
                               std::size_t n_events = 8,
                               std::uint64_t seed = 0x0dca7a106ull) {
  static const char* kObjectNames[] = {"dog",  "cat",   "car",  "man",
                                       "woman", "bird", "train", "guitar"};
  static const char* kEventNames[] = {"barking",  "meowing",  "honking",
                                      "speaking", "singing",  "chirping",
                                      "rumbling", "strumming"};
  if (n_objects > 8 || n_events > 8 || n_objects == 0) {
    throw std::invalid_argument("default_catalog: unsupported catalog size");
  }
  Catalog cat;
  cat.video_dim = video_dim;
  cat.audio_dim = audio_dim;
  Rng rng(seed);
  auto unit_vec = [&](std::size_t d) {
    Tensor v({d});
    double norm = 0.0;
    do {
      rng.fill_gaussian(v, 0.0, 1.0);
      norm = 0.0;
      for (double x : v.data()) norm += x * x;
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v.data()) x /= norm;
    return v;
  };
  int next_token = tok::kFirstItem;
  for (std::size_t i = 0; i < n_objects; ++i) {
    cat.objects.push_back({kObjectNames[i], next_token++, unit_vec(video_dim)});
  }
  for (std::size_t i = 0; i < n_events; ++i) {
    cat.events.push_back({kEventNames[i], next_token++, unit_vec(audio_dim)});
  }
  return cat;
}

// ---------------------------------------------------------------------------
// Scenes.

struct SceneBounds {
  std::size_t v_max = 2;   // max visual objects (>= 1 always present)
  std::size_t a_max = 2;   // max audio events
  double p_silent = 0.2;   // probability of zero audio events
};

struct Scene {
  std::vector<int> objects;  // catalog indices, sorted ascending
  std::vector<int> events;   // catalog indices, sorted ascending
  std::uint64_t scene_id = 0;
  std::uint64_t seed = 0;

  bool has_object(int idx) const {
    return std::find(objects.begin(), objects.end(), idx) != objects.end();
  }
  bool has_event(int idx) const {
    return std::find(events.begin(), events.end(), idx) != events.end();
  }
};

inline std::vector<int> sample_without_replacement(Rng& rng, std::size_t n,
                                                   std::size_t k) {
  std::vector<int> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
  rng.shuffle(all);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

inline Scene sample_scene(const Catalog& catalog, Rng& rng,
                          const SceneBounds& bounds = {}) {
  if (catalog.objects.empty()) {
    throw std::invalid_argument("sample_scene: empty catalog");
  }
  if (bounds.v_max > catalog.objects.size() ||
      bounds.a_max > catalog.events.size() || bounds.v_max == 0) {
    throw std::invalid_argument("sample_scene: bounds exceed catalog size");
  }
  Scene s;
  std::size_t n_obj = 1 + static_cast<std::size_t>(rng.below(bounds.v_max));
  s.objects = sample_without_replacement(rng, catalog.objects.size(), n_obj);
  if (bounds.a_max > 0 && rng.uniform() >= bounds.p_silent) {
    std::size_t n_ev = 1 + static_cast<std::size_t>(rng.below(bounds.a_max));
    s.events = sample_without_replacement(rng, catalog.events.size(), n_ev);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Feature-level rendering: frame/window = sum of present embeddings plus a
// small render jitter.

inline Tensor render_video(const Scene& scene, const Catalog& catalog, Rng& rng,
                           std::size_t frames, double jitter = 0.02) {
  if (frames < 1) throw std::invalid_argument("render_video: frames >= 1");
  Tensor out = Tensor::matrix(frames, catalog.video_dim);
  for (std::size_t f = 0; f < frames; ++f) {
    for (int idx : scene.objects) {
      const Tensor& e = catalog.objects[idx].embedding;
      for (std::size_t j = 0; j < catalog.video_dim; ++j) out(f, j) += e[j];
    }
    for (std::size_t j = 0; j < catalog.video_dim; ++j) {
      out(f, j) += rng.gaussian(0.0, jitter);
    }
  }
  return out;
}

inline Tensor render_audio(const Scene& scene, const Catalog& catalog, Rng& rng,
                           std::size_t windows, double jitter = 0.02) {
  if (windows < 1) throw std::invalid_argument("render_audio: windows >= 1");
  Tensor out = Tensor::matrix(windows, catalog.audio_dim);
  for (std::size_t w = 0; w < windows; ++w) {
    for (int idx : scene.events) {
      const Tensor& e = catalog.events[idx].embedding;
      for (std::size_t j = 0; j < catalog.audio_dim; ++j) out(w, j) += e[j];
    }
    for (std::size_t j = 0; j < catalog.audio_dim; ++j) {
      out(w, j) += rng.gaussian(0.0, jitter);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Degradations.

struct NoiseConfig {
  enum class Mode { gaussian, zero_mask };
  double sigma_v = 1.0;
  double sigma_a = 1.0;
  Mode mode = Mode::gaussian;

  void validate() const {
    if (!(sigma_v >= 0.0) || !(sigma_a >= 0.0) ||
        !std::isfinite(sigma_v) || !std::isfinite(sigma_a)) {
      throw std::invalid_argument("NoiseConfig: sigmas must be finite and >= 0");
    }
  }
};

inline Tensor degrade(const Tensor& t, double sigma, NoiseConfig::Mode mode,
                      Rng& rng) {
  if (mode == NoiseConfig::Mode::zero_mask) return t.zeros_like();
  Tensor out = t;
  for (double& v : out.data()) v += rng.gaussian(0.0, sigma);
  return out;
}

inline Tensor degrade_visual(const Tensor& v, const NoiseConfig& cfg, Rng& rng) {
  cfg.validate();
  return degrade(v, cfg.sigma_v, cfg.mode, rng);
}

inline Tensor degrade_audio(const Tensor& a, const NoiseConfig& cfg, Rng& rng) {
  cfg.validate();
  return degrade(a, cfg.sigma_a, cfg.mode, rng);
}

// ---------------------------------------------------------------------------
// Questions and answers.

enum class PromptStyle { caption, qa };

inline std::vector<int> caption_question() {
  return {tok::kWhat, tok::kSee, tok::kAnd, tok::kHear};
}

inline std::vector<int> see_question(const Catalog& cat, int obj_idx) {
  return {tok::kSee, cat.objects[obj_idx].token};
}

inline std::vector<int> hear_question(const Catalog& cat, int ev_idx) {
  return {tok::kHear, cat.events[ev_idx].token};
}

inline std::vector<int> see_and_hear_question(const Catalog& cat, int obj_idx,
                                              int ev_idx) {
  return {tok::kSee, cat.objects[obj_idx].token, tok::kAnd, tok::kHear,
          cat.events[ev_idx].token};
}

// Truthful caption: all object tokens then all event tokens, ascending.
inline Answer caption_answer(const Scene& scene, const Catalog& cat) {
  std::vector<int> t;
  for (int o : scene.objects) t.push_back(cat.objects[o].token);
  for (int e : scene.events) t.push_back(cat.events[e].token);
  t.push_back(tok::kEos);
  return Answer{std::move(t)};
}

inline Answer yes_answer() { return Answer{{tok::kYes, tok::kEos}}; }

inline Answer no_answer() { return Answer{{tok::kNo, tok::kEos}}; }

// Items of a catalog group absent from the scene.
inline std::vector<int> absent_events(const Scene& s, const Catalog& cat) {
  std::vector<int> out;
  for (std::size_t i = 0; i < cat.events.size(); ++i) {
    if (!s.has_event(static_cast<int>(i))) out.push_back(static_cast<int>(i));
  }
  return out;
}

inline std::vector<int> absent_objects(const Scene& s, const Catalog& cat) {
  std::vector<int> out;
  for (std::size_t i = 0; i < cat.objects.size(); ++i) {
    if (!s.has_object(static_cast<int>(i))) out.push_back(static_cast<int>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation config.

struct GenConfig {
  std::size_t scenes = 600;
  std::size_t pairs_per_scene = 3;  // per family
  SceneBounds bounds;
  std::size_t frames = 4;
  std::size_t windows = 4;
  double render_jitter = 0.02;
  // Degrading a modality zeroes it out by default: "all evidence removed" is
  // the cleanest contrast for teaching answers to lean on that evidence.
  NoiseConfig noise{1.0, 1.0, NoiseConfig::Mode::zero_mask};
  double qa_fraction = 0.5;      // QA-style vs caption-style text prompts
  // Robustness-pair prompts are caption-style by default: caption answers
  // carry no yes/no tokens, so the intact-vs-degraded margin grounds content
  // without disturbing the answer prior the probes measure.
  double rob_qa_fraction = 0.0;
  double yes_bias = 0.75;        // P(QA text prompt targets a present item)
  double rob_yes_bias = 0.5;     // P(QA robustness prompt targets a present item)
  std::uint64_t seed = 0;
  std::size_t eval_scenes = 100;          // held-out probe/gap scenes
  std::size_t eval_pairs_per_scene = 2;   // held-out robustness pairs
  std::size_t video_dim = 16;
  std::size_t audio_dim = 16;
  std::size_t n_objects = 8;
  std::size_t n_events = 8;

  void validate() const {
    if (scenes == 0 || pairs_per_scene == 0) {
      throw std::invalid_argument("GenConfig: scenes and pairs_per_scene > 0");
    }
    if (qa_fraction < 0 || qa_fraction > 1 || rob_qa_fraction < 0 ||
        rob_qa_fraction > 1 || yes_bias < 0 || yes_bias > 1 ||
        rob_yes_bias < 0 || rob_yes_bias > 1 || bounds.p_silent < 0 ||
        bounds.p_silent > 1) {
      throw std::invalid_argument("GenConfig: probabilities must be in [0,1]");
    }
    noise.validate();
  }
};

// Full-scale preset: expected pair count matches the reference corpus
// (about 9141 pairs over 1076 scenes: 6 robustness pairs per scene plus 3
// text pairs for the ~83% of scenes with audio).
inline GenConfig full_scale_config() {
  GenConfig cfg;
  cfg.scenes = 1076;
  cfg.pairs_per_scene = 3;
  cfg.bounds.p_silent = 0.1685;
  return cfg;
}

// ---------------------------------------------------------------------------
// Pair construction.

struct TextPairRecord {
  std::string id;
  std::uint64_t scene_id = 0;
  TextPreferencePair pair;
  PromptStyle style = PromptStyle::caption;
  std::string corruption;         // "omission" or "fabrication"
  int fabricated_token = -1;      // event token fabricated in y_minus, if any
};

struct RobustnessRecord {
  std::string id;
  std::uint64_t scene_id = 0;
  RobustnessPair pair;
  PromptStyle style = PromptStyle::caption;
};

inline OmniInput render_input(const Scene& scene, const Catalog& cat, Rng& rng,
                              const GenConfig& cfg, std::vector<int> question) {
  OmniInput x;
  x.video = render_video(scene, cat, rng, cfg.frames, cfg.render_jitter);
  x.audio = render_audio(scene, cat, rng, cfg.windows, cfg.render_jitter);
  x.text = std::move(question);
  return x;
}

// Perception-informed Y+ vs perception-blind Y-. Caption style mirrors the
// chosen/rejected caption pattern; QA style asks about one item in either
// modality and the blind answer denies a present item or affirms an absent
// one. Both modalities are asked about so that every preset shares a single
// source of yes/no competence for both question families.
inline TextPairRecord make_text_preference_pair(const Scene& scene,
                                                const Catalog& cat, Rng& rng,
                                                const GenConfig& cfg) {
  if (scene.events.empty()) {
    throw std::invalid_argument(
        "make_text_preference_pair: scene has no audio events");
  }
  TextPairRecord rec;
  rec.scene_id = scene.scene_id;
  bool qa = rng.uniform() < cfg.qa_fraction;
  rec.style = qa ? PromptStyle::qa : PromptStyle::caption;
  std::vector<int> absent = absent_events(scene, cat);
  if (qa) {
    bool about_video = rng.uniform() < 0.5;
    const std::vector<int>& present_items =
        about_video ? scene.objects : scene.events;
    std::vector<int> absent_items =
        about_video ? absent_objects(scene, cat) : absent;
    const std::vector<CatalogItem>& entries =
        about_video ? cat.objects : cat.events;
    bool target_present = rng.uniform() < cfg.yes_bias;
    if (absent_items.empty()) target_present = true;
    auto question = [&](int item) {
      return about_video ? see_question(cat, item) : hear_question(cat, item);
    };
    if (target_present) {
      int item = static_cast<int>(present_items[rng.below(present_items.size())]);
      rec.pair.x = render_input(scene, cat, rng, cfg, question(item));
      rec.pair.y_plus = yes_answer();
      rec.pair.y_minus = no_answer();  // blind answer denies the present item
      rec.corruption = "omission";
    } else {
      int item = absent_items[rng.below(absent_items.size())];
      rec.pair.x = render_input(scene, cat, rng, cfg, question(item));
      rec.pair.y_plus = no_answer();
      rec.pair.y_minus = yes_answer();
      rec.corruption = "fabrication";
      rec.fabricated_token = entries[item].token;
    }
  } else {
    rec.pair.x = render_input(scene, cat, rng, cfg, caption_question());
    rec.pair.y_plus = caption_answer(scene, cat);
    bool fabricate = !absent.empty() && rng.uniform() < 0.5;
    std::vector<int> t;
    for (int o : scene.objects) t.push_back(cat.objects[o].token);
    if (fabricate) {
      int ev = absent[rng.below(absent.size())];
      t.push_back(cat.events[ev].token);
      rec.corruption = "fabrication";
      rec.fabricated_token = cat.events[ev].token;
    } else {
      rec.corruption = "omission";  // all audio events dropped
    }
    t.push_back(tok::kEos);
    rec.pair.y_minus = Answer{std::move(t)};
  }
  return rec;
}

// (X, X_degraded, Y+) with only the chosen modality's tensor differing.
inline RobustnessRecord make_robustness_pair(const Scene& scene,
                                             const Catalog& cat, Rng& rng,
                                             const GenConfig& cfg,
                                             Modality modality) {
  RobustnessRecord rec;
  rec.scene_id = scene.scene_id;
  bool qa = rng.uniform() < cfg.rob_qa_fraction;
  std::vector<int> question;
  Answer y_plus;
  // QA-style pairs ask about this modality's items; the preferred answer is
  // the truthful one for the intact input (present target -> "yes", absent
  // target -> "no", mixed by rob_yes_bias). Preferring the intact input over
  // the degraded one teaches the answer to lean on the modality that
  // actually carries the evidence.
  bool about_present = rng.uniform() < cfg.rob_yes_bias;
  const std::vector<int>& present_items =
      modality == Modality::visual ? scene.objects : scene.events;
  std::vector<int> absent_items = modality == Modality::visual
                                      ? absent_objects(scene, cat)
                                      : absent_events(scene, cat);
  if (about_present && present_items.empty()) about_present = false;
  if (!about_present && absent_items.empty()) about_present = true;
  if (present_items.empty() && absent_items.empty()) qa = false;
  rec.style = qa ? PromptStyle::qa : PromptStyle::caption;
  if (qa) {
    const std::vector<int>& pool = about_present ? present_items : absent_items;
    int item = pool[rng.below(pool.size())];
    question = modality == Modality::visual ? see_question(cat, item)
                                            : hear_question(cat, item);
    y_plus = about_present ? yes_answer() : no_answer();
  } else {
    question = caption_question();
    y_plus = caption_answer(scene, cat);
  }
  rec.pair.x_full = render_input(scene, cat, rng, cfg, question);
  rec.pair.x_degraded = rec.pair.x_full;
  rec.pair.y_plus = y_plus;
  rec.pair.degraded_modality = modality;
  if (modality == Modality::visual) {
    rec.pair.x_degraded.video = degrade_visual(rec.pair.x_full.video, cfg.noise, rng);
  } else {
    rec.pair.x_degraded.audio = degrade_audio(rec.pair.x_full.audio, cfg.noise, rng);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Probes (paired yes/no questions, per modality).

enum class ProbeModality { visual, audio, audio_visual };

inline const char* to_string(ProbeModality m) {
  switch (m) {
    case ProbeModality::visual: return "visual";
    case ProbeModality::audio: return "audio";
    default: return "audio_visual";
  }
}

struct Probe {
  std::string id;
  std::uint64_t scene_id = 0;
  ProbeModality modality = ProbeModality::visual;
  OmniInput input;  // input.text is the probing question
  bool label_yes = false;
  int target_token = -1;
};

// Six probes per scene: a yes/no pair for each of the visual, audio and
// audio-visual tags. Throws when the scene leaves no valid target.
inline std::vector<Probe> make_probes_for_scene(const Scene& scene,
                                                const Catalog& cat, Rng& rng,
                                                const GenConfig& cfg) {
  std::vector<int> obj_absent = absent_objects(scene, cat);
  std::vector<int> ev_absent = absent_events(scene, cat);
  if (scene.objects.empty() || obj_absent.empty()) {
    throw std::invalid_argument("make_probes_for_scene: no valid visual yes/no targets");
  }
  if (scene.events.empty() || ev_absent.empty()) {
    throw std::invalid_argument("make_probes_for_scene: no valid audio yes/no targets");
  }
  auto pick = [&](const std::vector<int>& v) { return v[rng.below(v.size())]; };
  std::vector<Probe> out;
  auto add = [&](ProbeModality m, std::vector<int> q, bool yes, int target) {
    Probe p;
    p.scene_id = scene.scene_id;
    p.modality = m;
    p.input = render_input(scene, cat, rng, cfg, std::move(q));
    p.label_yes = yes;
    p.target_token = target;
    p.id = std::to_string(scene.scene_id) + "-" + to_string(m) + (yes ? "-y" : "-n");
    out.push_back(std::move(p));
  };
  int oy = pick(scene.objects), on = pick(obj_absent);
  add(ProbeModality::visual, see_question(cat, oy), true, cat.objects[oy].token);
  add(ProbeModality::visual, see_question(cat, on), false, cat.objects[on].token);
  int ey = pick(scene.events), en = pick(ev_absent);
  add(ProbeModality::audio, hear_question(cat, ey), true, cat.events[ey].token);
  add(ProbeModality::audio, hear_question(cat, en), false, cat.events[en].token);
  // Cross-modal: "yes" needs both cues; the "no" side pairs a real cue in
  // one modality with a missing one in the other.
  int vo = pick(scene.objects), ve = pick(scene.events);
  add(ProbeModality::audio_visual, see_and_hear_question(cat, vo, ve), true,
      cat.events[ve].token);
  if (rng.uniform() < 0.5) {
    add(ProbeModality::audio_visual,
        see_and_hear_question(cat, pick(scene.objects), pick(ev_absent)), false,
        cat.events[en].token);
  } else {
    add(ProbeModality::audio_visual,
        see_and_hear_question(cat, pick(obj_absent), pick(scene.events)), false,
        cat.objects[on].token);
  }
  return out;
}

inline std::vector<Probe> make_probe_set(const std::vector<Scene>& scenes,
                                         const Catalog& cat, Rng& rng,
                                         const GenConfig& cfg) {
  if (scenes.empty()) throw std::invalid_argument("make_probe_set: no scenes");
  std::vector<Probe> out;
  for (const Scene& s : scenes) {
    std::vector<Probe> p = make_probes_for_scene(s, cat, rng, cfg);
    out.insert(out.end(), std::make_move_iterator(p.begin()),
               std::make_move_iterator(p.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full corpus.

struct Dataset {
  std::vector<TextPairRecord> text;
  std::vector<RobustnessRecord> visual;
  std::vector<RobustnessRecord> audio;

  std::size_t total_pairs() const {
    return text.size() + visual.size() + audio.size();
  }
};

struct DatasetManifest {
  std::size_t text_pairs = 0;
  std::size_t visual_pairs = 0;
  std::size_t audio_pairs = 0;
  std::size_t scene_count = 0;
  std::uint64_t seed = 0;
  NoiseConfig noise;
  std::uint64_t catalog_checksum = 0;

  std::size_t total() const { return text_pairs + visual_pairs + audio_pairs; }
};

struct GeneratedCorpus {
  Catalog catalog;
  Dataset dataset;
  DatasetManifest manifest;
  std::vector<Probe> probes;                 // held-out scenes
  std::vector<RobustnessRecord> eval_pairs;  // held-out modality-gap pairs
  std::vector<TextPairRecord> eval_text;     // held-out text-preference pairs
};

// Per-scene child seeds make generation order-independent; a held-out
// stream id space keeps eval scenes disjoint from training scenes.
inline GeneratedCorpus build_corpus(const GenConfig& cfg) {
  cfg.validate();
  GeneratedCorpus out;
  out.catalog = default_catalog(cfg.video_dim, cfg.audio_dim, cfg.n_objects,
                                cfg.n_events);
  const Catalog& cat = out.catalog;
  if (cfg.bounds.v_max > cat.objects.size() || cfg.bounds.a_max > cat.events.size()) {
    throw std::invalid_argument("build_corpus: bounds exceed catalog size");
  }
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    Rng rng = Rng::child(cfg.seed, i);
    Scene scene = sample_scene(cat, rng, cfg.bounds);
    scene.scene_id = i;
    for (std::size_t k = 0; k < cfg.pairs_per_scene; ++k) {
      if (!scene.events.empty()) {
        TextPairRecord t = make_text_preference_pair(scene, cat, rng, cfg);
        t.id = "t-" + std::to_string(i) + "-" + std::to_string(k);
        out.dataset.text.push_back(std::move(t));
      }
      RobustnessRecord v = make_robustness_pair(scene, cat, rng, cfg, Modality::visual);
      v.id = "v-" + std::to_string(i) + "-" + std::to_string(k);
      out.dataset.visual.push_back(std::move(v));
      RobustnessRecord a = make_robustness_pair(scene, cat, rng, cfg, Modality::audio);
      a.id = "a-" + std::to_string(i) + "-" + std::to_string(k);
      out.dataset.audio.push_back(std::move(a));
    }
  }
  // Held-out scenes for probes and modality-gap pairs. Scenes must admit
  // yes/no probes in every modality; resample until they do.
  constexpr std::uint64_t kEvalStream = 1ull << 40;
  for (std::size_t i = 0; i < cfg.eval_scenes; ++i) {
    Rng rng = Rng::child(cfg.seed, kEvalStream + i);
    Scene scene;
    for (;;) {
      scene = sample_scene(cat, rng, cfg.bounds);
      if (!scene.events.empty() && scene.events.size() < cat.events.size() &&
          scene.objects.size() < cat.objects.size()) {
        break;
      }
    }
    scene.scene_id = kEvalStream + i;
    std::vector<Probe> probes = make_probes_for_scene(scene, cat, rng, cfg);
    out.probes.insert(out.probes.end(), std::make_move_iterator(probes.begin()),
                      std::make_move_iterator(probes.end()));
    for (std::size_t k = 0; k < cfg.eval_pairs_per_scene; ++k) {
      RobustnessRecord v = make_robustness_pair(scene, cat, rng, cfg, Modality::visual);
      v.id = "ev-" + std::to_string(i) + "-" + std::to_string(k);
      out.eval_pairs.push_back(std::move(v));
      RobustnessRecord a = make_robustness_pair(scene, cat, rng, cfg, Modality::audio);
      a.id = "ea-" + std::to_string(i) + "-" + std::to_string(k);
      out.eval_pairs.push_back(std::move(a));
      TextPairRecord t = make_text_preference_pair(scene, cat, rng, cfg);
      t.id = "et-" + std::to_string(i) + "-" + std::to_string(k);
      out.eval_text.push_back(std::move(t));
    }
  }
  out.manifest.text_pairs = out.dataset.text.size();
  out.manifest.visual_pairs = out.dataset.visual.size();
  out.manifest.audio_pairs = out.dataset.audio.size();
  out.manifest.scene_count = cfg.scenes;
  out.manifest.seed = cfg.seed;
  out.manifest.noise = cfg.noise;
  out.manifest.catalog_checksum = cat.checksum();
  return out;
}

}  // namespace omnidpo
