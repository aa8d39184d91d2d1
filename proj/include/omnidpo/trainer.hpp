#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnidpo/datagen.hpp"
#include "omnidpo/losses.hpp"
#include "omnidpo/model.hpp"
#include "omnidpo/rng.hpp"
#include "omnidpo/serialize.hpp"

namespace omnidpo {

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup to base_lr, then cosine decay to 0.

struct TrainConfig {
  double base_lr = 1e-3;
  double warmup_ratio = 0.1;
  std::size_t total_steps = 1600;
  std::size_t batch_text = 16;
  std::size_t batch_vis = 16;
  std::size_t batch_aud = 16;
  LossConfig loss;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  double grad_clip = 0.0;            // 0 = off; global-norm clip otherwise

  void validate() const {
    if (base_lr <= 0.0) throw std::invalid_argument("TrainConfig: base_lr > 0");
    if (total_steps == 0) throw std::invalid_argument("TrainConfig: total_steps > 0");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0) {
      throw std::invalid_argument("TrainConfig: warmup_ratio in [0,1]");
    }
    if (warmup_ratio > 0.0 && warmup_ratio * double(total_steps) < 1.0) {
      throw std::invalid_argument("TrainConfig: warmup shorter than one step");
    }
    loss.validate();
  }
};

inline std::size_t warmup_steps(const TrainConfig& cfg) {
  return static_cast<std::size_t>(
      std::llround(cfg.warmup_ratio * double(cfg.total_steps)));
}

inline double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw std::invalid_argument("lr_schedule: step out of range");
  }
  std::size_t w = warmup_steps(cfg);
  if (w > 0 && step <= w) {
    return cfg.base_lr * double(step) / double(w);
  }
  double t = double(step - w) / double(cfg.total_steps - w);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;  // per-parameter moments, visit order

  static AdamState init(const Policy& p, AdamConfig cfg = {}) {
    AdamState st;
    st.cfg = cfg;
    p.visit_params([&](const std::string&, const Tensor& t) {
      st.m.push_back(t.zeros_like());
      st.v.push_back(t.zeros_like());
    });
    return st;
  }
};

inline void adam_step(std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads, AdamState& st,
                      double lr,
                      const std::vector<std::string>* names = nullptr) {
  if (params.size() != grads.size() || params.size() != st.m.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      std::string name = names ? (*names)[i] : ("param " + std::to_string(i));
      throw std::runtime_error("adam_step: non-finite gradient in " + name);
    }
  }
  st.step += 1;
  double bc1 = 1.0 - std::pow(st.cfg.beta1, double(st.step));
  double bc2 = 1.0 - std::pow(st.cfg.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = st.cfg.beta1 * m[j] + (1.0 - st.cfg.beta1) * g[j];
      v[j] = st.cfg.beta2 * v[j] + (1.0 - st.cfg.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Without-replacement epoch sampling, one independent stream per family so
// a family with batch size 0 never perturbs the others.

class EpochSampler {
 public:
  EpochSampler() = default;
  EpochSampler(std::size_t n, std::uint64_t seed) : rng_(seed), n_(n) {}

  std::vector<std::size_t> sample(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (cursor_ >= perm_.size()) reshuffle();
      out.push_back(perm_[cursor_++]);
    }
    return out;
  }

  void serialize(ByteWriter& w) const {
    w.u64(n_);
    w.str(rng_.serialize());
    w.u64_vec(perm_);
    w.u64(cursor_);
  }

  void deserialize(ByteReader& r) {
    n_ = r.u64();
    rng_.deserialize(r.str());
    perm_ = r.u64_vec();
    cursor_ = r.u64();
  }

 private:
  void reshuffle() {
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
    rng_.shuffle(perm_);
    cursor_ = 0;
  }

  Rng rng_;
  std::size_t n_ = 0;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

struct TrainLogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss_dpo = 0.0, loss_vis = 0.0, loss_aud = 0.0, loss_omni = 0.0;
  double margin_text = 0.0, margin_vis = 0.0, margin_aud = 0.0;
};

struct TrainerState {
  AdamState adam;
  EpochSampler text_sampler, vis_sampler, aud_sampler;
  std::size_t next_step = 0;
};

struct Checkpoint {
  Policy policy;
  std::optional<TrainerState> trainer;
};

inline void save_checkpoint(const std::string& path, const Policy& policy,
                            const TrainerState* trainer = nullptr) {
  ByteWriter w;
  w.str("ODPOCKP1");
  const PolicyConfig& c = policy.config;
  for (std::size_t v : {c.dim, c.layers, c.ffn_dim, c.vocab, c.video_dim, c.audio_dim}) {
    w.u64(v);
  }
  std::size_t count = 0;
  policy.visit_params([&](const std::string&, const Tensor&) { ++count; });
  w.u64(count);
  policy.visit_params([&](const std::string& name, const Tensor& t) {
    w.str(name);
    w.tensor(t);
  });
  w.u64(trainer ? 1 : 0);
  if (trainer) {
    w.f64(trainer->adam.cfg.beta1);
    w.f64(trainer->adam.cfg.beta2);
    w.f64(trainer->adam.cfg.eps);
    w.u64(trainer->adam.step);
    for (const Tensor& t : trainer->adam.m) w.tensor(t);
    for (const Tensor& t : trainer->adam.v) w.tensor(t);
    trainer->text_sampler.serialize(w);
    trainer->vis_sampler.serialize(w);
    trainer->aud_sampler.serialize(w);
    w.u64(trainer->next_step);
  }
  std::string data = w.buffer();
  std::uint64_t sum = fnv1a(data.data(), data.size());
  data.append(reinterpret_cast<const char*>(&sum), sizeof(sum));
  write_file(path, data);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < sizeof(std::uint64_t)) {
    throw std::runtime_error("checkpoint: file too short: " + path);
  }
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + data.size() - sizeof(stored), sizeof(stored));
  data.resize(data.size() - sizeof(stored));
  std::uint64_t actual = fnv1a(data.data(), data.size());
  if (stored != actual) {
    throw std::runtime_error("checkpoint: checksum mismatch (corrupt file): " + path);
  }
  ByteReader r(std::move(data));
  if (r.str() != "ODPOCKP1") {
    throw std::runtime_error("checkpoint: bad magic: " + path);
  }
  Checkpoint ck;
  PolicyConfig c;
  c.dim = r.u64();
  c.layers = r.u64();
  c.ffn_dim = r.u64();
  c.vocab = r.u64();
  c.video_dim = r.u64();
  c.audio_dim = r.u64();
  ck.policy = init_policy(c, 0);
  std::size_t count = r.u64();
  std::size_t seen = 0;
  ck.policy.visit_params([&](const std::string& name, Tensor& t) {
    std::string got = r.str();
    if (got != name) {
      throw std::runtime_error("checkpoint: unexpected tensor '" + got + "'");
    }
    Tensor loaded = r.tensor();
    if (!loaded.same_shape(t)) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    t = std::move(loaded);
    ++seen;
  });
  if (seen != count) throw std::runtime_error("checkpoint: tensor count mismatch");
  if (r.u64() == 1) {
    TrainerState ts;
    ts.adam.cfg.beta1 = r.f64();
    ts.adam.cfg.beta2 = r.f64();
    ts.adam.cfg.eps = r.f64();
    ts.adam.step = r.u64();
    for (std::size_t i = 0; i < count; ++i) ts.adam.m.push_back(r.tensor());
    for (std::size_t i = 0; i < count; ++i) ts.adam.v.push_back(r.tensor());
    ts.text_sampler.deserialize(r);
    ts.vis_sampler.deserialize(r);
    ts.aud_sampler.deserialize(r);
    ts.next_step = r.u64();
    ck.trainer = std::move(ts);
  }
  return ck;
}

struct TrainResult {
  std::vector<TrainLogRow> log;
  TrainerState state;
};

// Deterministic optimization loop over the three pair families. The
// reference must be frozen by the caller; it is never written here.
inline TrainResult train(
    Policy& policy, const Policy& ref, const Dataset& dataset,
    const TrainConfig& cfg,
    const std::optional<TrainerState>& resume = std::nullopt,
    const std::string& checkpoint_path = {},
    const std::function<void(const TrainLogRow&)>& on_row = {}) {
  cfg.validate();
  bool use_text = cfg.batch_text > 0;
  bool use_vis = cfg.batch_vis > 0 && cfg.loss.lambda_v > 0.0;
  bool use_aud = cfg.batch_aud > 0 && cfg.loss.lambda_a > 0.0;
  if (use_text && dataset.text.empty()) {
    throw std::invalid_argument("train: text-preference family is empty");
  }
  if (use_vis && dataset.visual.empty()) {
    throw std::invalid_argument("train: visual-robustness family is empty (lambda_v > 0)");
  }
  if (use_aud && dataset.audio.empty()) {
    throw std::invalid_argument("train: audio-robustness family is empty (lambda_a > 0)");
  }
  if (!use_text && !use_vis && !use_aud) {
    throw std::invalid_argument("train: no active loss family");
  }

  TrainResult res;
  if (resume) {
    res.state = *resume;
  } else {
    res.state.adam = AdamState::init(policy);
    res.state.text_sampler = EpochSampler(dataset.text.size(), cfg.seed * 3 + 1);
    res.state.vis_sampler = EpochSampler(dataset.visual.size(), cfg.seed * 3 + 2);
    res.state.aud_sampler = EpochSampler(dataset.audio.size(), cfg.seed * 3 + 3);
  }

  std::vector<Tensor*> param_ptrs;
  std::vector<std::string> param_names;
  policy.visit_params([&](const std::string& name, Tensor& t) {
    param_ptrs.push_back(&t);
    param_names.push_back(name);
  });

  for (std::size_t step = res.state.next_step; step < cfg.total_steps; ++step) {
    std::vector<TextPreferencePair> text_batch;
    std::vector<RobustnessPair> vis_batch, aud_batch;
    if (use_text) {
      for (std::size_t i : res.state.text_sampler.sample(cfg.batch_text)) {
        text_batch.push_back(dataset.text[i].pair);
      }
    }
    if (use_vis) {
      for (std::size_t i : res.state.vis_sampler.sample(cfg.batch_vis)) {
        vis_batch.push_back(dataset.visual[i].pair);
      }
    }
    if (use_aud) {
      for (std::size_t i : res.state.aud_sampler.sample(cfg.batch_aud)) {
        aud_batch.push_back(dataset.audio[i].pair);
      }
    }

    Tape tape;
    PolicyNodes pn = bind_policy(tape, policy);
    OmniLossTerms terms =
        loss_omni_graph(tape, pn, ref, text_batch, vis_batch, aud_batch, cfg.loss);
    if (!std::isfinite(terms.loss_omni->value.item())) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    }
    tape.backward(terms.loss_omni);

    std::vector<Tensor> grads;
    grads.reserve(pn.params.size());
    for (Node* n : pn.params) grads.push_back(n->grad);
    if (cfg.grad_clip > 0.0) {
      double norm2 = 0.0;
      for (const Tensor& g : grads) {
        for (double x : g.data()) norm2 += x * x;
      }
      double norm = std::sqrt(norm2);
      if (norm > cfg.grad_clip) {
        double s = cfg.grad_clip / norm;
        for (Tensor& g : grads) {
          for (double& x : g.data()) x *= s;
        }
      }
    }

    double lr = lr_schedule(step + 1, cfg);
    TrainLogRow row;
    row.step = step;
    row.lr = lr;
    row.loss_dpo = terms.loss_dpo;
    row.loss_vis = terms.loss_vis;
    row.loss_aud = terms.loss_aud;
    row.loss_omni = terms.loss_omni->value.item();
    row.margin_text = terms.margin_text;
    row.margin_vis = terms.margin_vis;
    row.margin_aud = terms.margin_aud;
    res.log.push_back(row);
    if (on_row) on_row(row);

    adam_step(param_ptrs, grads, res.state.adam, lr, &param_names);
    res.state.next_step = step + 1;

    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(checkpoint_path, policy, &res.state);
    }
  }
  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, policy, &res.state);
  }
  return res;
}

// CSV log layout shared by the trainer and the CLI.
inline std::string train_log_header() {
  return "step,lr,loss_dpo,loss_vis,loss_aud,loss_omni,margin_text,margin_vis,margin_aud";
}

inline std::string to_csv(const TrainLogRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step,
                r.lr, r.loss_dpo, r.loss_vis, r.loss_aud, r.loss_omni,
                r.margin_text, r.margin_vis, r.margin_aud);
  return buf;
}

}  // namespace omnidpo
