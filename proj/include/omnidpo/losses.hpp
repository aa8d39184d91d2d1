#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnidpo/autodiff.hpp"
#include "omnidpo/model.hpp"

namespace omnidpo {

enum class Modality { visual, audio };

inline const char* to_string(Modality m) {
  return m == Modality::visual ? "visual" : "audio";
}

// (X, Y+, Y-): same input, audio-informed vs audio-blind answer.
struct TextPreferencePair {
  OmniInput x;
  Answer y_plus;
  Answer y_minus;
};

// (X, X_degraded, Y+): same answer, full vs degraded input. Only the
// declared modality's tensor differs between the two inputs.
struct RobustnessPair {
  OmniInput x_full;
  OmniInput x_degraded;
  Answer y_plus;
  Modality degraded_modality;
};

struct LossConfig {
  double beta = 0.1;
  double lambda_v = 1.0;
  double lambda_a = 1.0;

  void validate() const {
    if (beta <= 0.0) throw std::invalid_argument("LossConfig: beta must be > 0");
    if (lambda_v < 0.0 || lambda_a < 0.0) {
      throw std::invalid_argument("LossConfig: lambdas must be >= 0");
    }
  }
};

// log P_theta(y|x) - log P_ref(y|x), the building block of every loss.
inline double log_ratio(const Policy& policy, const Policy& ref,
                        const OmniInput& x, const Answer& y) {
  return sequence_logprob(policy, x, y) - sequence_logprob(ref, x, y);
}

struct LossTerm {
  Node* loss = nullptr;   // scalar node on the caller's tape
  double mean_margin = 0; // mean of beta * (preferred - dispreferred log ratio)
};

// Mean over the batch of -log sigma(beta * margin). Reference scores enter
// the graph as constants; only the policy side carries gradients.
inline LossTerm loss_dpo_graph(Tape& tape, const PolicyNodes& policy,
                               const Policy& ref,
                               std::span<const TextPreferencePair> batch,
                               const LossConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("loss_dpo: empty batch");
  Node* total = nullptr;
  double margin_sum = 0.0;
  for (const TextPreferencePair& pair : batch) {
    double ref_plus = sequence_logprob(ref, pair.x, pair.y_plus);
    double ref_minus = sequence_logprob(ref, pair.x, pair.y_minus);
    Node* lp_plus = sequence_logprob_graph(tape, policy, pair.x, pair.y_plus);
    Node* lp_minus = sequence_logprob_graph(tape, policy, pair.x, pair.y_minus);
    Node* margin = tape.scale(
        tape.add_const(tape.sub(lp_plus, lp_minus),
                       Tensor::scalar(ref_minus - ref_plus)),
        cfg.beta);
    margin_sum += margin->value.item();
    Node* nll = tape.scale(tape.log_sigmoid(margin), -1.0);
    total = total ? tape.add(total, nll) : nll;
  }
  LossTerm out;
  out.loss = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  out.mean_margin = margin_sum / static_cast<double>(batch.size());
  return out;
}

// Shared body of the visual and audio preference losses: the preferred
// scenario is (x_full, y+), the dispreferred one (x_degraded, y+).
inline LossTerm loss_robustness_graph(Tape& tape, const PolicyNodes& policy,
                                      const Policy& ref,
                                      std::span<const RobustnessPair> batch,
                                      const LossConfig& cfg, Modality expect) {
  cfg.validate();
  if (batch.empty()) {
    throw std::invalid_argument(std::string("loss_") +
                                (expect == Modality::visual ? "vis" : "aud") +
                                ": empty batch");
  }
  Node* total = nullptr;
  double margin_sum = 0.0;
  for (const RobustnessPair& pair : batch) {
    if (pair.degraded_modality != expect) {
      throw std::invalid_argument(
          std::string("loss_") + (expect == Modality::visual ? "vis" : "aud") +
          ": pair with degraded modality " + to_string(pair.degraded_modality));
    }
    double ref_full = sequence_logprob(ref, pair.x_full, pair.y_plus);
    double ref_deg = sequence_logprob(ref, pair.x_degraded, pair.y_plus);
    Node* lp_full = sequence_logprob_graph(tape, policy, pair.x_full, pair.y_plus);
    Node* lp_deg =
        sequence_logprob_graph(tape, policy, pair.x_degraded, pair.y_plus);
    Node* margin = tape.scale(
        tape.add_const(tape.sub(lp_full, lp_deg),
                       Tensor::scalar(ref_deg - ref_full)),
        cfg.beta);
    margin_sum += margin->value.item();
    Node* nll = tape.scale(tape.log_sigmoid(margin), -1.0);
    total = total ? tape.add(total, nll) : nll;
  }
  LossTerm out;
  out.loss = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  out.mean_margin = margin_sum / static_cast<double>(batch.size());
  return out;
}

inline LossTerm loss_vis_graph(Tape& tape, const PolicyNodes& policy,
                               const Policy& ref,
                               std::span<const RobustnessPair> batch,
                               const LossConfig& cfg) {
  return loss_robustness_graph(tape, policy, ref, batch, cfg, Modality::visual);
}

inline LossTerm loss_aud_graph(Tape& tape, const PolicyNodes& policy,
                               const Policy& ref,
                               std::span<const RobustnessPair> batch,
                               const LossConfig& cfg) {
  return loss_robustness_graph(tape, policy, ref, batch, cfg, Modality::audio);
}

// L_DPO + lambda_V * L_vis + lambda_A * L_aud. Absent sub-batches
// contribute 0; all three absent is rejected.
struct OmniLossTerms {
  Node* loss_omni = nullptr;
  double loss_dpo = 0.0, loss_vis = 0.0, loss_aud = 0.0;
  double margin_text = 0.0, margin_vis = 0.0, margin_aud = 0.0;
};

inline OmniLossTerms loss_omni_graph(Tape& tape, const PolicyNodes& policy,
                                     const Policy& ref,
                                     std::span<const TextPreferencePair> text,
                                     std::span<const RobustnessPair> vis,
                                     std::span<const RobustnessPair> aud,
                                     const LossConfig& cfg) {
  cfg.validate();
  if (text.empty() && vis.empty() && aud.empty()) {
    throw std::invalid_argument("loss_omni: all sub-batches empty");
  }
  OmniLossTerms out;
  Node* total = nullptr;
  if (!text.empty()) {
    LossTerm t = loss_dpo_graph(tape, policy, ref, text, cfg);
    out.loss_dpo = t.loss->value.item();
    out.margin_text = t.mean_margin;
    total = t.loss;
  }
  if (!vis.empty()) {
    LossTerm t = loss_vis_graph(tape, policy, ref, vis, cfg);
    out.loss_vis = t.loss->value.item();
    out.margin_vis = t.mean_margin;
    Node* scaled = tape.scale(t.loss, cfg.lambda_v);
    total = total ? tape.add(total, scaled) : scaled;
  }
  if (!aud.empty()) {
    LossTerm t = loss_aud_graph(tape, policy, ref, aud, cfg);
    out.loss_aud = t.loss->value.item();
    out.margin_aud = t.mean_margin;
    Node* scaled = tape.scale(t.loss, cfg.lambda_a);
    total = total ? tape.add(total, scaled) : scaled;
  }
  out.loss_omni = total;
  return out;
}

// Evaluation-only wrappers (no gradients wanted).

inline double loss_dpo(const Policy& policy, const Policy& ref,
                       std::span<const TextPreferencePair> batch,
                       const LossConfig& cfg) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  return loss_dpo_graph(tape, pn, ref, batch, cfg).loss->value.item();
}

inline double loss_vis(const Policy& policy, const Policy& ref,
                       std::span<const RobustnessPair> batch,
                       const LossConfig& cfg) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  return loss_vis_graph(tape, pn, ref, batch, cfg).loss->value.item();
}

inline double loss_aud(const Policy& policy, const Policy& ref,
                       std::span<const RobustnessPair> batch,
                       const LossConfig& cfg) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  return loss_aud_graph(tape, pn, ref, batch, cfg).loss->value.item();
}

inline double loss_omni(const Policy& policy, const Policy& ref,
                        std::span<const TextPreferencePair> text,
                        std::span<const RobustnessPair> vis,
                        std::span<const RobustnessPair> aud,
                        const LossConfig& cfg) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  return loss_omni_graph(tape, pn, ref, text, vis, aud, cfg)
      .loss_omni->value.item();
}

}  // namespace omnidpo
