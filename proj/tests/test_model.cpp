#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "omnidpo/model.hpp"
#include "omnidpo/rng.hpp"

using namespace omnidpo;

namespace {

PolicyConfig tiny_config() {
  PolicyConfig c;
  c.dim = 6;
  c.layers = 2;
  c.ffn_dim = 8;
  c.vocab = 10;
  c.video_dim = 4;
  c.audio_dim = 3;
  return c;
}

OmniInput tiny_input(const PolicyConfig& c, Rng& rng) {
  OmniInput x;
  x.video = Tensor::matrix(2, c.video_dim);
  x.audio = Tensor::matrix(2, c.audio_dim);
  rng.fill_gaussian(x.video, 0.0, 1.0);
  rng.fill_gaussian(x.audio, 0.0, 1.0);
  x.text = {3, 7};
  return x;
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Mat mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Plain-loop reimplementation of the decoder forward pass, written without
// the tape so the graph version has an independent cross-check.
double oracle_sequence_logprob(const Policy& p, const OmniInput& x,
                               const Answer& y) {
  const PolicyConfig& c = p.config;
  Mat rows;
  Mat vp = to_mat(p.visual_proj), ap = to_mat(p.audio_proj);
  for (std::size_t f = 0; f < x.video.rows(); ++f) {
    std::vector<double> r(c.dim, 0.0);
    for (std::size_t j = 0; j < c.dim; ++j) {
      for (std::size_t k = 0; k < c.video_dim; ++k) r[j] += x.video(f, k) * vp[k][j];
      r[j] += p.visual_bias[j];
    }
    rows.push_back(r);
  }
  for (std::size_t w = 0; w < x.audio.rows(); ++w) {
    std::vector<double> r(c.dim, 0.0);
    for (std::size_t j = 0; j < c.dim; ++j) {
      for (std::size_t k = 0; k < c.audio_dim; ++k) r[j] += x.audio(w, k) * ap[k][j];
      r[j] += p.audio_bias[j];
    }
    rows.push_back(r);
  }
  std::size_t p_len;
  {
    std::vector<int> fed = x.text;
    p_len = rows.size() + x.text.size();
    for (std::size_t t = 0; t + 1 < y.tokens.size(); ++t) fed.push_back(y.tokens[t]);
    for (int tok : fed) {
      std::vector<double> r(c.dim);
      for (std::size_t j = 0; j < c.dim; ++j) r[j] = p.token_embed(std::size_t(tok), j);
      rows.push_back(r);
    }
  }
  std::size_t s = rows.size();
  for (std::size_t pos = 0; pos < s; ++pos) {
    for (std::size_t i = 0; i < c.dim; ++i) {
      double freq = std::pow(10000.0, -2.0 * double(i / 2) / double(c.dim));
      rows[pos][i] += (i % 2 == 0) ? std::sin(double(pos) * freq)
                                   : std::cos(double(pos) * freq);
    }
  }
  double inv_sqrt_d = 1.0 / std::sqrt(double(c.dim));
  for (const DecoderLayer& l : p.layers) {
    Mat q = mul(rows, to_mat(l.wq)), k = mul(rows, to_mat(l.wk)),
        v = mul(rows, to_mat(l.wv));
    Mat attn(s, std::vector<double>(s, 0.0));
    for (std::size_t i = 0; i < s; ++i) {
      double mx = -1e300;
      std::vector<double> sc(s, -1e300);
      for (std::size_t j = 0; j <= i; ++j) {
        sc[j] = 0.0;
        for (std::size_t d = 0; d < c.dim; ++d) sc[j] += q[i][d] * k[j][d];
        sc[j] *= inv_sqrt_d;
        mx = std::max(mx, sc[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) z += std::exp(sc[j] - mx);
      for (std::size_t j = 0; j <= i; ++j) attn[i][j] = std::exp(sc[j] - mx) / z;
    }
    Mat ctx = mul(mul(attn, v), to_mat(l.wo));
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < c.dim; ++j) rows[i][j] += ctx[i][j];
    Mat h = mul(rows, to_mat(l.w1));
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < c.ffn_dim; ++j) h[i][j] = std::tanh(h[i][j] + l.b1[j]);
    Mat ffn = mul(h, to_mat(l.w2));
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < c.dim; ++j) rows[i][j] += ffn[i][j] + l.b2[j];
  }
  Mat logits = mul(rows, to_mat(p.out_proj));
  double total = 0.0;
  for (std::size_t t = 0; t < y.tokens.size(); ++t) {
    std::size_t row = p_len - 1 + t;
    double mx = -1e300;
    for (std::size_t j = 0; j < c.vocab; ++j) {
      logits[row][j] += p.out_bias[j];
      mx = std::max(mx, logits[row][j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c.vocab; ++j) z += std::exp(logits[row][j] - mx);
    total += logits[row][std::size_t(y.tokens[t])] - mx - std::log(z);
  }
  return total;
}

}  // namespace

TEST_CASE("param_count matches the bound tensors") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 11);
  std::size_t total = 0;
  p.visit_params([&](const std::string&, const Tensor& t) { total += t.size(); });
  CHECK(total == param_count(c));
}

TEST_CASE("initialization is a pure function of config and seed") {
  PolicyConfig c = tiny_config();
  CHECK(weight_checksum(init_policy(c, 5)) == weight_checksum(init_policy(c, 5)));
  CHECK(weight_checksum(init_policy(c, 5)) != weight_checksum(init_policy(c, 6)));
}

TEST_CASE("freeze_reference is a deep copy flagged as reference") {
  Policy p = init_policy(tiny_config(), 2);
  Policy ref = freeze_reference(p);
  CHECK(ref.reference);
  CHECK_FALSE(p.reference);
  CHECK(weight_checksum(ref) == weight_checksum(p));
  p.out_bias[0] = 99.0;  // mutating the policy must not touch the reference
  CHECK(weight_checksum(ref) != weight_checksum(p));
}

TEST_CASE("prefix stacks video, audio and text rows in order") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 3);
  Rng rng(4);
  OmniInput x = tiny_input(c, rng);
  Tensor prefix = encode_prefix(p, x);
  CHECK(prefix.rows() == x.video.rows() + x.audio.rows() + x.text.size());
  CHECK(prefix.cols() == c.dim);
}

TEST_CASE("sequence_logprob matches a straight-line reimplementation") {
  PolicyConfig c = tiny_config();
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Policy p = init_policy(c, 100 + std::uint64_t(trial));
    OmniInput x = tiny_input(c, rng);
    Answer y{{4, 1, 0}};
    double got = sequence_logprob(p, x, y);
    double want = oracle_sequence_logprob(p, x, y);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("sequence_logprob behaves like a log probability") {
  // Answers of length <= 2 are disjoint events, so their probability mass
  // must stay strictly inside (0, 1).
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 8);
  Rng rng(9);
  OmniInput x = tiny_input(c, rng);
  double mass = std::exp(sequence_logprob(p, x, Answer{{0}}));
  CHECK(mass > 0.0);
  CHECK(mass < 1.0);
  for (int t = 1; t < int(c.vocab); ++t) {
    double lp = sequence_logprob(p, x, Answer{{t, 0}});
    CHECK(lp < 0.0);
    mass += std::exp(lp);
  }
  CHECK(mass < 1.0);
}

TEST_CASE("answers must end in EOS and stay in vocabulary") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 8);
  Rng rng(10);
  OmniInput x = tiny_input(c, rng);
  CHECK_THROWS_AS((void)sequence_logprob(p, x, Answer{{1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS((void)sequence_logprob(p, x, Answer{{}}), std::invalid_argument);
  CHECK_THROWS_AS((void)sequence_logprob(p, x, Answer{{55, 0}}), std::invalid_argument);
}

TEST_CASE("malformed inputs are rejected") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 8);
  OmniInput x;
  x.video = Tensor::matrix(2, c.video_dim + 1);
  x.audio = Tensor::matrix(2, c.audio_dim);
  CHECK_THROWS_AS((void)sequence_logprob(p, x, Answer{{0}}), std::invalid_argument);
}

TEST_CASE("greedy ties break to the lowest token id") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 8);
  // Zero output head: every token gets an identical logit, so the argmax
  // tie must resolve to token 0 (EOS) immediately.
  p.out_proj = Tensor::matrix(c.dim, c.vocab);
  p.out_bias = Tensor({c.vocab});
  Rng rng(11);
  OmniInput x = tiny_input(c, rng);
  Answer a = greedy_decode(p, x, 5);
  CHECK(a.tokens == std::vector<int>{0});
}

TEST_CASE("greedy decoding terminates with EOS at max_len") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 8);
  // Bias token 5 so high that it always wins: max_len forces termination.
  p.out_bias[5] = 1e6;
  Rng rng(12);
  OmniInput x = tiny_input(c, rng);
  Answer a = greedy_decode(p, x, 3);
  CHECK(a.tokens.size() == 4);
  CHECK(a.tokens.back() == kEosToken);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.tokens[i] == 5);
}

TEST_CASE("greedy decoding is deterministic") {
  PolicyConfig c = tiny_config();
  Policy p = init_policy(c, 13);
  Rng rng(14);
  OmniInput x = tiny_input(c, rng);
  CHECK(greedy_decode(p, x, 8) == greedy_decode(p, x, 8));
}
