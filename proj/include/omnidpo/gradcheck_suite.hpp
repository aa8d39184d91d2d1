#pragma once

#include <string>
#include <utility>
#include <vector>

#include "omnidpo/autodiff.hpp"
#include "omnidpo/datagen.hpp"
#include "omnidpo/losses.hpp"
#include "omnidpo/model.hpp"
#include "omnidpo/rng.hpp"

namespace omnidpo {

// Finite-difference verification of every differentiable path: elementary
// ops, the sequence scoring graph, and the three preference losses plus
// their weighted sum. Shared by the `gradcheck` subcommand and the tests.

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
};

namespace detail {

inline std::vector<Tensor> policy_param_copy(const Policy& p) {
  std::vector<Tensor> out;
  p.visit_params([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

inline void load_policy_params(Policy& p, const std::vector<Tensor>& params) {
  std::size_t i = 0;
  p.visit_params([&](const std::string&, Tensor& t) { t = params[i++]; });
}

inline OmniInput random_input(const PolicyConfig& cfg, Rng& rng,
                              std::size_t frames, std::size_t windows,
                              std::size_t text_len) {
  OmniInput x;
  x.video = Tensor({frames, cfg.video_dim});
  x.audio = Tensor({windows, cfg.audio_dim});
  rng.fill_gaussian(x.video, 0.0, 1.0);
  rng.fill_gaussian(x.audio, 0.0, 1.0);
  for (std::size_t i = 0; i < text_len; ++i) {
    x.text.push_back(static_cast<int>(rng.below(cfg.vocab)));
  }
  return x;
}

inline Answer random_answer(const PolicyConfig& cfg, Rng& rng, std::size_t len) {
  Answer y;
  for (std::size_t i = 0; i + 1 < len; ++i) {
    y.tokens.push_back(static_cast<int>(1 + rng.below(cfg.vocab - 1)));
  }
  y.tokens.push_back(kEosToken);
  return y;
}

}  // namespace detail

// Runs one trial of every checked op with fresh random draws; returns the
// worst relative error per op name.
inline std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed,
                                                        std::size_t trials = 10,
                                                        double eps = 1e-5) {
  using detail::load_policy_params;
  using detail::policy_param_copy;
  using detail::random_answer;
  using detail::random_input;

  // Deliberately tiny: finite differences cost two forwards per parameter
  // coordinate, so suite runtime scales roughly quadratically with width.
  // Two layers still exercise every op and the layer-stacking path.
  PolicyConfig cfg;
  cfg.dim = 4;
  cfg.layers = 2;
  cfg.ffn_dim = 5;
  cfg.vocab = 10;
  cfg.video_dim = 3;
  cfg.audio_dim = 3;

  std::vector<GradCheckReport> reports = {
      {"log_sigmoid", 0.0}, {"log_softmax", 0.0},     {"sequence_logprob", 0.0},
      {"loss_dpo", 0.0},    {"loss_vis", 0.0},        {"loss_aud", 0.0},
      {"loss_omni", 0.0},
  };
  auto record = [&](const std::string& op, double err) {
    for (GradCheckReport& r : reports) {
      if (r.op == op && err > r.max_rel_err) r.max_rel_err = err;
    }
  };

  Rng rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    {
      Tensor x({7});
      rng.fill_gaussian(x, 0.0, 1.0);
      record("log_sigmoid",
             grad_check(
                 [](std::vector<Tensor>& p, std::vector<Tensor>* g) {
                   Tape tape;
                   Node* leaf = tape.leaf(p[0]);
                   Node* n = tape.sum(tape.log_sigmoid(leaf));
                   if (g) {
                     tape.backward(n);
                     (*g)[0] = leaf->grad;
                   }
                   return n->value.item();
                 },
                 {x}, eps));
    }
    {
      Tensor x({3, 5});
      rng.fill_gaussian(x, 0.0, 1.0);
      std::size_t row = rng.below(3), col = rng.below(5);
      record("log_softmax",
             grad_check(
                 [row, col](std::vector<Tensor>& p, std::vector<Tensor>* g) {
                   Tape tape;
                   Node* leaf = tape.leaf(p[0]);
                   Node* n = tape.pick_sum(tape.log_softmax(leaf),
                                           {{row, col}});
                   if (g) {
                     tape.backward(n);
                     (*g)[0] = leaf->grad;
                   }
                   return n->value.item();
                 },
                 {x}, eps));
    }

    Policy policy = init_policy(cfg, seed * 1000 + trial);
    Policy ref = init_policy(cfg, seed * 1000 + trial + 1);
    OmniInput x = random_input(cfg, rng, 2, 2, 2);
    Answer y_plus = random_answer(cfg, rng, 2);
    Answer y_minus = random_answer(cfg, rng, 3);

    auto policy_check = [&](const std::string& op,
                            const std::function<Node*(Tape&, const PolicyNodes&)>&
                                build) {
      Policy work = policy;
      record(op, grad_check(
                     [&](std::vector<Tensor>& p, std::vector<Tensor>* g) {
                       load_policy_params(work, p);
                       Tape tape;
                       PolicyNodes pn = bind_policy(tape, work);
                       Node* root = build(tape, pn);
                       if (g) {
                         tape.backward(root);
                         for (std::size_t i = 0; i < pn.params.size(); ++i) {
                           (*g)[i] = pn.params[i]->grad;
                         }
                       }
                       return root->value.item();
                     },
                     policy_param_copy(policy), eps));
    };

    policy_check("sequence_logprob", [&](Tape& tape, const PolicyNodes& pn) {
      return sequence_logprob_graph(tape, pn, x, y_plus);
    });

    LossConfig lcfg;
    lcfg.beta = 0.5;  // larger beta exercises the sigmoid away from 1/2
    std::vector<TextPreferencePair> text = {{x, y_plus, y_minus}};
    OmniInput x_deg_v = x, x_deg_a = x;
    rng.fill_gaussian(x_deg_v.video, 0.0, 1.0);
    rng.fill_gaussian(x_deg_a.audio, 0.0, 1.0);
    std::vector<RobustnessPair> vis = {{x, x_deg_v, y_plus, Modality::visual}};
    std::vector<RobustnessPair> aud = {{x, x_deg_a, y_plus, Modality::audio}};

    policy_check("loss_dpo", [&](Tape& tape, const PolicyNodes& pn) {
      return loss_dpo_graph(tape, pn, ref, text, lcfg).loss;
    });
    policy_check("loss_vis", [&](Tape& tape, const PolicyNodes& pn) {
      return loss_vis_graph(tape, pn, ref, vis, lcfg).loss;
    });
    policy_check("loss_aud", [&](Tape& tape, const PolicyNodes& pn) {
      return loss_aud_graph(tape, pn, ref, aud, lcfg).loss;
    });
    policy_check("loss_omni", [&](Tape& tape, const PolicyNodes& pn) {
      return loss_omni_graph(tape, pn, ref, text, vis, aud, lcfg).loss_omni;
    });
  }
  return reports;
}

}  // namespace omnidpo
