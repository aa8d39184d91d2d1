#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "omnidpo/autodiff.hpp"
#include "omnidpo/rng.hpp"
#include "omnidpo/tensor.hpp"

namespace omnidpo {

// Token id 0 terminates every answer and doubles as the greedy tie-break
// winner (lowest id).
constexpr int kEosToken = 0;

struct PolicyConfig {
  std::size_t dim = 32;       // model width d
  std::size_t layers = 2;     // decoder layers
  std::size_t ffn_dim = 64;   // feed-forward hidden width
  std::size_t vocab = 64;     // token vocabulary size
  std::size_t video_dim = 16; // d_v, per-frame feature width
  std::size_t audio_dim = 16; // d_a, per-window feature width

  bool operator==(const PolicyConfig&) const = default;

  void validate() const {
    if (dim == 0 || layers == 0 || ffn_dim == 0 || vocab == 0 ||
        video_dim == 0 || audio_dim == 0) {
      throw std::invalid_argument("PolicyConfig: all dimensions must be > 0");
    }
  }
};

// X = {V, A, T}. A silent or blank modality is an all-zeros tensor of the
// declared shape, never an absent field.
struct OmniInput {
  Tensor video;           // F x d_v
  Tensor audio;           // W x d_a
  std::vector<int> text;  // question / prompt tokens
};

struct Answer {
  std::vector<int> tokens;  // non-empty, ends with kEosToken

  void validate(std::size_t vocab) const {
    if (tokens.empty()) throw std::invalid_argument("Answer: empty");
    if (tokens.back() != kEosToken) {
      throw std::invalid_argument("Answer: must end with EOS");
    }
    for (int t : tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
        throw std::invalid_argument("Answer: token " + std::to_string(t) +
                                    " out of vocabulary");
      }
    }
  }

  bool operator==(const Answer&) const = default;
};

struct DecoderLayer {
  Tensor wq, wk, wv, wo;  // d x d each
  Tensor w1, b1;          // d x f, f
  Tensor w2, b2;          // f x d, d
};

// The trainable omni-modal policy pi_theta. A copy with reference=true
// serves as the frozen pi_ref.
struct Policy {
  PolicyConfig config;
  Tensor visual_proj, visual_bias;  // d_v x d, d
  Tensor audio_proj, audio_bias;    // d_a x d, d
  Tensor token_embed;               // vocab x d
  std::vector<DecoderLayer> layers;
  Tensor out_proj, out_bias;        // d x vocab, vocab
  bool reference = false;

  template <typename F>
  void visit_params(F&& f) {
    f("visual_proj", visual_proj);
    f("visual_bias", visual_bias);
    f("audio_proj", audio_proj);
    f("audio_bias", audio_bias);
    f("token_embed", token_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      f(p + "wq", layers[l].wq);
      f(p + "wk", layers[l].wk);
      f(p + "wv", layers[l].wv);
      f(p + "wo", layers[l].wo);
      f(p + "w1", layers[l].w1);
      f(p + "b1", layers[l].b1);
      f(p + "w2", layers[l].w2);
      f(p + "b2", layers[l].b2);
    }
    f("out_proj", out_proj);
    f("out_bias", out_bias);
  }

  template <typename F>
  void visit_params(F&& f) const {
    const_cast<Policy*>(this)->visit_params(
        [&](const std::string& name, Tensor& t) {
          f(name, static_cast<const Tensor&>(t));
        });
  }
};

inline std::size_t param_count(const PolicyConfig& c) {
  std::size_t n = 0;
  n += (c.video_dim + 1) * c.dim;  // visual encoder + bias
  n += (c.audio_dim + 1) * c.dim;  // audio encoder + bias
  n += c.vocab * c.dim;            // token embedding
  n += c.layers * (4 * c.dim * c.dim + c.dim * c.ffn_dim + c.ffn_dim +
                   c.ffn_dim * c.dim + c.dim);
  n += c.dim * c.vocab + c.vocab;  // output projection + bias
  return n;
}

inline Policy init_policy(const PolicyConfig& config, std::uint64_t seed) {
  config.validate();
  Policy p;
  p.config = config;
  double scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  Rng rng(seed);
  auto mat = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    rng.fill_gaussian(t, 0.0, scale);
    return t;
  };
  p.visual_proj = mat(config.video_dim, config.dim);
  p.visual_bias = Tensor({config.dim});
  p.audio_proj = mat(config.audio_dim, config.dim);
  p.audio_bias = Tensor({config.dim});
  p.token_embed = mat(config.vocab, config.dim);
  p.layers.resize(config.layers);
  for (DecoderLayer& l : p.layers) {
    l.wq = mat(config.dim, config.dim);
    l.wk = mat(config.dim, config.dim);
    l.wv = mat(config.dim, config.dim);
    l.wo = mat(config.dim, config.dim);
    l.w1 = mat(config.dim, config.ffn_dim);
    l.b1 = Tensor({config.ffn_dim});
    l.w2 = mat(config.ffn_dim, config.dim);
    l.b2 = Tensor({config.dim});
  }
  p.out_proj = mat(config.dim, config.vocab);
  p.out_bias = Tensor({config.vocab});
  return p;
}

inline Policy freeze_reference(const Policy& policy) {
  Policy ref = policy;  // deep copy (value semantics)
  ref.reference = true;
  return ref;
}

inline std::uint64_t weight_checksum(const Policy& p) {
  std::uint64_t h = 14695981039346656037ull;
  p.visit_params([&](const std::string&, const Tensor& t) { h = fnv1a(t, h); });
  return h;
}

// Shared sinusoidal positional encoding over the whole fused sequence.
inline Tensor positional_encoding(std::size_t len, std::size_t dim) {
  Tensor pe = Tensor::matrix(len, dim);
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      double freq = std::pow(10000.0, -2.0 * double(i / 2) / double(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(double(p) * freq)
                              : std::cos(double(p) * freq);
    }
  }
  return pe;
}

inline Tensor causal_mask(std::size_t len) {
  Tensor m = Tensor::matrix(len, len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = i + 1; j < len; ++j) m(i, j) = -1e30;
  return m;
}

// Policy weights bound to a tape as leaves, in visit order.
struct PolicyNodes {
  PolicyConfig config;
  std::vector<std::string> names;
  std::vector<Node*> params;  // visit order
  Node* visual_proj;
  Node* visual_bias;
  Node* audio_proj;
  Node* audio_bias;
  Node* token_embed;
  struct LayerNodes {
    Node *wq, *wk, *wv, *wo, *w1, *b1, *w2, *b2;
  };
  std::vector<LayerNodes> layers;
  Node* out_proj;
  Node* out_bias;
};

inline PolicyNodes bind_policy(Tape& tape, const Policy& p) {
  PolicyNodes pn;
  pn.config = p.config;
  p.visit_params([&](const std::string& name, const Tensor& t) {
    pn.names.push_back(name);
    pn.params.push_back(tape.leaf(t));
  });
  std::size_t i = 0;
  pn.visual_proj = pn.params[i++];
  pn.visual_bias = pn.params[i++];
  pn.audio_proj = pn.params[i++];
  pn.audio_bias = pn.params[i++];
  pn.token_embed = pn.params[i++];
  for (std::size_t l = 0; l < p.config.layers; ++l) {
    PolicyNodes::LayerNodes ln;
    ln.wq = pn.params[i++];
    ln.wk = pn.params[i++];
    ln.wv = pn.params[i++];
    ln.wo = pn.params[i++];
    ln.w1 = pn.params[i++];
    ln.b1 = pn.params[i++];
    ln.w2 = pn.params[i++];
    ln.b2 = pn.params[i++];
    pn.layers.push_back(ln);
  }
  pn.out_proj = pn.params[i++];
  pn.out_bias = pn.params[i++];
  return pn;
}

inline void validate_input(const PolicyConfig& c, const OmniInput& x) {
  if (x.video.rank() != 2 || x.video.cols() != c.video_dim || x.video.rows() < 1) {
    throw std::invalid_argument("OmniInput: video must be F x d_v with F >= 1");
  }
  if (x.audio.rank() != 2 || x.audio.cols() != c.audio_dim || x.audio.rows() < 1) {
    throw std::invalid_argument("OmniInput: audio must be W x d_a with W >= 1");
  }
  for (int t : x.text) {
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab) {
      throw std::invalid_argument("OmniInput: text token out of vocabulary");
    }
  }
}

// Rows: projected video frames, projected audio windows, embedded question
// tokens, in that fixed order.
inline Node* encode_prefix_graph(Tape& tape, const PolicyNodes& pn,
                                 const OmniInput& x, bool add_positional = true) {
  validate_input(pn.config, x);
  Node* vid = tape.add_rowvec(tape.matmul(tape.leaf(x.video), pn.visual_proj),
                              pn.visual_bias);
  Node* aud = tape.add_rowvec(tape.matmul(tape.leaf(x.audio), pn.audio_proj),
                              pn.audio_bias);
  std::vector<Node*> parts = {vid, aud};
  if (!x.text.empty()) parts.push_back(tape.gather_rows(pn.token_embed, x.text));
  Node* prefix = tape.concat_rows(parts);
  if (add_positional) {
    prefix = tape.add_const(
        prefix, positional_encoding(prefix->value.rows(), pn.config.dim));
  }
  return prefix;
}

inline Tensor encode_prefix(const Policy& policy, const OmniInput& x) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  return encode_prefix_graph(tape, pn, x)->value;
}

// Causal decoder stack over already position-encoded input rows; returns
// token logits per position.
inline Node* decoder_logits_graph(Tape& tape, const PolicyNodes& pn, Node* x) {
  std::size_t s = x->value.rows();
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(pn.config.dim));
  Tensor mask = causal_mask(s);
  for (const PolicyNodes::LayerNodes& l : pn.layers) {
    Node* q = tape.matmul(x, l.wq);
    Node* k = tape.matmul(x, l.wk);
    Node* v = tape.matmul(x, l.wv);
    Node* scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d);
    Node* attn = tape.row_softmax(scores, &mask);
    x = tape.add(x, tape.matmul(tape.matmul(attn, v), l.wo));
    Node* h = tape.tanh_(tape.add_rowvec(tape.matmul(x, l.w1), l.b1));
    x = tape.add(x, tape.add_rowvec(tape.matmul(h, l.w2), l.b2));
  }
  return tape.add_rowvec(tape.matmul(x, pn.out_proj), pn.out_bias);
}

// Sum_t log P(y_t | prefix(x), y_<t). The row at position P-1+t predicts
// y_t, so the last answer token is never fed as input.
inline Node* sequence_logprob_graph(Tape& tape, const PolicyNodes& pn,
                                    const OmniInput& x, const Answer& y) {
  y.validate(pn.config.vocab);
  Node* prefix = encode_prefix_graph(tape, pn, x, /*add_positional=*/false);
  std::size_t p_len = prefix->value.rows();
  std::vector<Node*> parts = {prefix};
  if (y.tokens.size() > 1) {
    std::vector<int> fed(y.tokens.begin(), y.tokens.end() - 1);
    parts.push_back(tape.gather_rows(pn.token_embed, fed));
  }
  Node* seq = parts.size() > 1 ? tape.concat_rows(parts) : prefix;
  seq = tape.add_const(seq,
                       positional_encoding(seq->value.rows(), pn.config.dim));
  Node* logits = decoder_logits_graph(tape, pn, seq);
  Node* logprobs = tape.log_softmax(logits);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  coords.reserve(y.tokens.size());
  for (std::size_t t = 0; t < y.tokens.size(); ++t) {
    coords.emplace_back(p_len - 1 + t, static_cast<std::size_t>(y.tokens[t]));
  }
  return tape.pick_sum(logprobs, coords);
}

inline double sequence_logprob(const Policy& policy, const OmniInput& x,
                               const Answer& y) {
  Tape tape;
  PolicyNodes pn = bind_policy(tape, policy);
  double v = sequence_logprob_graph(tape, pn, x, y)->value.item();
  if (!std::isfinite(v)) {
    throw std::runtime_error("sequence_logprob: non-finite result");
  }
  return v;
}

// Argmax decoding until EOS or max_len tokens; ties break to the lowest
// token id. If max_len is reached without EOS, an EOS is appended so the
// Answer invariant holds.
inline Answer greedy_decode(const Policy& policy, const OmniInput& x,
                            std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len >= 1");
  std::vector<int> out;
  for (std::size_t step = 0; step < max_len; ++step) {
    Tape tape;
    PolicyNodes pn = bind_policy(tape, policy);
    Node* prefix = encode_prefix_graph(tape, pn, x, /*add_positional=*/false);
    std::size_t p_len = prefix->value.rows();
    Node* seq = prefix;
    if (!out.empty()) {
      seq = tape.concat_rows({prefix, tape.gather_rows(pn.token_embed, out)});
    }
    seq = tape.add_const(seq,
                         positional_encoding(seq->value.rows(), policy.config.dim));
    Node* logits = decoder_logits_graph(tape, pn, seq);
    std::size_t row = p_len - 1 + out.size();
    int best = 0;
    double best_v = logits->value(row, 0);
    for (std::size_t j = 1; j < policy.config.vocab; ++j) {
      if (logits->value(row, j) > best_v) {
        best_v = logits->value(row, j);
        best = static_cast<int>(j);
      }
    }
    out.push_back(best);
    if (best == kEosToken) break;
  }
  if (out.back() != kEosToken) out.push_back(kEosToken);
  return Answer{std::move(out)};
}

}  // namespace omnidpo
