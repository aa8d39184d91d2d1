#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnidpo/datagen.hpp"
#include "omnidpo/losses.hpp"
#include "omnidpo/model.hpp"

namespace omnidpo {

struct ProbeResult {
  std::string id;
  ProbeModality modality = ProbeModality::visual;
  bool label_yes = false;
  bool pred_yes = false;
  double logp_yes = 0.0;
  double logp_no = 0.0;
};

// Scores the fixed answers "yes" and "no" and takes the argmax; exact ties
// predict "no" (the hallucination-conservative choice).
inline ProbeResult answer_probe(const Policy& policy, const Probe& probe) {
  ProbeResult r;
  r.id = probe.id;
  r.modality = probe.modality;
  r.label_yes = probe.label_yes;
  r.logp_yes = sequence_logprob(policy, probe.input, Answer{{tok::kYes, tok::kEos}});
  r.logp_no = sequence_logprob(policy, probe.input, Answer{{tok::kNo, tok::kEos}});
  r.pred_yes = r.logp_yes > r.logp_no;
  return r;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

// "yes" is the positive class.
inline Confusion confusion(std::span<const ProbeResult> results) {
  if (results.empty()) throw std::invalid_argument("confusion: empty results");
  Confusion c;
  for (const ProbeResult& r : results) {
    if (r.label_yes && r.pred_yes) ++c.tp;
    else if (!r.label_yes && r.pred_yes) ++c.fp;
    else if (!r.label_yes && !r.pred_yes) ++c.tn;
    else ++c.fn;
  }
  return c;
}

// PA = TP / (TP+FN), HR = TN / (TN+FP). Requires both label classes.
inline std::pair<double, double> pa_hr(const Confusion& c) {
  if (c.tp + c.fn == 0) {
    throw std::invalid_argument("pa_hr: no ground-truth 'yes' probes");
  }
  if (c.tn + c.fp == 0) {
    throw std::invalid_argument("pa_hr: no ground-truth 'no' probes");
  }
  return {double(c.tp) / double(c.tp + c.fn), double(c.tn) / double(c.tn + c.fp)};
}

inline std::pair<double, double> pa_hr(std::span<const ProbeResult> results) {
  return pa_hr(confusion(results));
}

// Zero-denominator rates are reported as undefined, never coerced to 0.
struct RateSet {
  std::optional<double> accuracy, precision, recall, f1, yes_rate;
};

inline RateSet prf1_yes(const Confusion& c) {
  if (c.total() == 0) throw std::invalid_argument("prf1_yes: no probes");
  RateSet r;
  double n = double(c.total());
  r.accuracy = double(c.tp + c.tn) / n;
  r.yes_rate = double(c.tp + c.fp) / n;
  if (c.tp + c.fp > 0) r.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = double(c.tp) / double(c.tp + c.fn);
  if (r.precision && r.recall && *r.precision + *r.recall > 0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

inline RateSet prf1_yes(std::span<const ProbeResult> results) {
  return prf1_yes(confusion(results));
}

// Mean drop in log P(Y+) when one modality is degraded, per family.
struct ModalityGap {
  std::vector<double> visual;  // per-pair gaps
  std::vector<double> audio;

  static std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
  }
  std::optional<double> visual_mean() const { return mean_of(visual); }
  std::optional<double> audio_mean() const { return mean_of(audio); }

  static std::optional<double> stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return std::nullopt;
    double m = *mean_of(v), ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
  }
};

inline ModalityGap modality_gap(const Policy& policy,
                                std::span<const RobustnessPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("modality_gap: empty pairs");
  ModalityGap g;
  for (const RobustnessPair& p : pairs) {
    double gap = sequence_logprob(policy, p.x_full, p.y_plus) -
                 sequence_logprob(policy, p.x_degraded, p.y_plus);
    (p.degraded_modality == Modality::visual ? g.visual : g.audio).push_back(gap);
  }
  return g;
}

struct SubReport {
  Confusion counts;
  RateSet rates;
  std::optional<double> pa, hr;
};

inline SubReport make_sub_report(std::span<const ProbeResult> results) {
  SubReport s;
  s.counts = confusion(results);
  s.rates = prf1_yes(s.counts);
  if (s.counts.tp + s.counts.fn > 0 && s.counts.tn + s.counts.fp > 0) {
    auto [pa, hr] = pa_hr(s.counts);
    s.pa = pa;
    s.hr = hr;
  }
  return s;
}

struct MetricsReport {
  SubReport overall;
  std::map<std::string, SubReport> per_modality;  // keyed "visual"/"audio"/"audio_visual"
  std::optional<double> gap_visual, gap_audio;
  std::size_t probe_count = 0;
  std::uint64_t probe_set_checksum = 0;
  std::vector<ProbeResult> results;
};

inline std::uint64_t probe_set_checksum(std::span<const Probe> probes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Probe& p : probes) {
    h = fnv1a(p.id.data(), p.id.size(), h);
    int lab = p.label_yes ? 1 : 0;
    h = fnv1a(&lab, sizeof(lab), h);
    h = fnv1a(p.input.video, h);
    h = fnv1a(p.input.audio, h);
    h = fnv1a(p.input.text.data(), p.input.text.size() * sizeof(int), h);
  }
  return h;
}

inline MetricsReport evaluate(const Policy& policy,
                              std::span<const Probe> probes,
                              std::span<const RobustnessPair> robustness_pairs) {
  if (probes.empty()) throw std::invalid_argument("evaluate: empty probe set");
  MetricsReport rep;
  rep.probe_count = probes.size();
  rep.probe_set_checksum = probe_set_checksum(probes);
  for (const Probe& p : probes) rep.results.push_back(answer_probe(policy, p));
  rep.overall = make_sub_report(rep.results);
  for (ProbeModality m : {ProbeModality::visual, ProbeModality::audio,
                          ProbeModality::audio_visual}) {
    std::vector<ProbeResult> sub;
    for (const ProbeResult& r : rep.results) {
      if (r.modality == m) sub.push_back(r);
    }
    if (!sub.empty()) rep.per_modality[to_string(m)] = make_sub_report(sub);
  }
  if (!robustness_pairs.empty()) {
    ModalityGap g = modality_gap(policy, robustness_pairs);
    rep.gap_visual = g.visual_mean();
    rep.gap_audio = g.audio_mean();
  }
  return rep;
}

}  // namespace omnidpo
