#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "omnidpo/autodiff.hpp"
#include "omnidpo/rng.hpp"

using namespace omnidpo;

TEST_CASE("log_sigmoid matches independently computed values") {
  // Values computed with arbitrary-precision arithmetic and frozen here.
  Tape tape;
  Node* x = tape.leaf(Tensor::vec({0.0, 2.0, -3.5, 0.1}));
  Node* y = tape.log_sigmoid(x);
  CHECK(y->value[0] == doctest::Approx(-0.69314718055994529).epsilon(1e-14));
  CHECK(y->value[1] == doctest::Approx(-0.12692801104297263).epsilon(1e-14));
  CHECK(y->value[2] == doctest::Approx(-3.5297504182726205).epsilon(1e-14));
  CHECK(y->value[3] == doctest::Approx(-0.64439666007357088).epsilon(1e-14));
}

TEST_CASE("log_sigmoid is numerically stable at large magnitudes") {
  Tape tape;
  Node* y = tape.log_sigmoid(tape.leaf(Tensor::vec({30.0, -30.0, 700.0, -700.0})));
  CHECK(y->value[0] == doctest::Approx(-9.3480778673442548e-14).epsilon(1e-6));
  CHECK(y->value[1] == doctest::Approx(-30.000000000000092).epsilon(1e-14));
  CHECK(std::isfinite(y->value[2]));
  CHECK(y->value[3] == doctest::Approx(-700.0).epsilon(1e-14));
}

TEST_CASE("log_softmax matches a frozen hand computation") {
  Tape tape;
  Tensor x = Tensor::matrix(1, 3);
  x(0, 0) = 0.5;
  x(0, 1) = -1.25;
  x(0, 2) = 2.0;
  Node* y = tape.log_softmax(tape.leaf(x));
  CHECK(y->value(0, 0) == doctest::Approx(-1.7326219831020326).epsilon(1e-14));
  CHECK(y->value(0, 1) == doctest::Approx(-3.4826219831020326).epsilon(1e-14));
  CHECK(y->value(0, 2) == doctest::Approx(-0.23262198310203266).epsilon(1e-14));
}

TEST_CASE("log_softmax is shift invariant and normalized") {
  Rng rng(3);
  Tensor x = Tensor::matrix(4, 6);
  rng.fill_gaussian(x, 0.0, 3.0);
  Tensor shifted = x;
  for (std::size_t i = 0; i < shifted.rows(); ++i) {
    for (std::size_t j = 0; j < shifted.cols(); ++j) shifted(i, j) += 100.0;
  }
  Tape tape;
  Node* a = tape.log_softmax(tape.leaf(x));
  Node* b = tape.log_softmax(tape.leaf(shifted));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      CHECK(a->value(i, j) == doctest::Approx(b->value(i, j)).epsilon(1e-10));
      total += std::exp(a->value(i, j));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul forward matches a hand-multiplied example") {
  Tape tape;
  Tensor a = Tensor::matrix(2, 3);
  double av[] = {1, 2, 3, 4, 5, 6};
  for (std::size_t i = 0; i < 6; ++i) a.data()[i] = av[i];
  Tensor b = Tensor::matrix(3, 2);
  double bv[] = {7, 8, 9, 10, 11, 12};
  for (std::size_t i = 0; i < 6; ++i) b.data()[i] = bv[i];
  Node* c = tape.matmul(tape.leaf(a), tape.leaf(b));
  CHECK(c->value(0, 0) == 58.0);
  CHECK(c->value(0, 1) == 64.0);
  CHECK(c->value(1, 0) == 139.0);
  CHECK(c->value(1, 1) == 154.0);
}

TEST_CASE("matmul rejects mismatched shapes with a descriptive error") {
  Tape tape;
  Node* a = tape.leaf(Tensor::matrix(2, 3));
  Node* b = tape.leaf(Tensor::matrix(4, 2));
  CHECK_THROWS_AS((void)tape.matmul(a, b), std::invalid_argument);
}

TEST_CASE("gradients accumulate when a node is reused") {
  Tape tape;
  Node* x = tape.leaf(Tensor::scalar(1.5));
  Node* y = tape.add(x, x);  // y = 2x
  tape.backward(y);
  CHECK(x->grad.item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backward through a diamond-shaped graph") {
  // z = (x + x) + tanh(x); dz/dx = 2 + (1 - tanh(x)^2)
  Tape tape;
  Node* x = tape.leaf(Tensor::scalar(0.3));
  Node* z = tape.add(tape.add(x, x), tape.tanh_(x));
  tape.backward(z);
  double th = std::tanh(0.3);
  CHECK(x->grad.item() == doctest::Approx(2.0 + 1.0 - th * th).epsilon(1e-12));
}

TEST_CASE("grad_check validates composite expressions") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = Tensor::matrix(3, 4);
    Tensor b = Tensor::matrix(4, 3);
    Tensor c = Tensor::vec({0, 0, 0});
    rng.fill_gaussian(a, 0.0, 1.0);
    rng.fill_gaussian(b, 0.0, 1.0);
    rng.fill_gaussian(c, 0.0, 1.0);
    double err = grad_check(
        [](std::vector<Tensor>& p, std::vector<Tensor>* g) {
          Tape tape;
          Node* a = tape.leaf(p[0]);
          Node* b = tape.leaf(p[1]);
          Node* c = tape.leaf(p[2]);
          Node* m = tape.tanh_(tape.add_rowvec(tape.matmul(a, b), c));
          Node* out = tape.mean(tape.log_sigmoid(tape.log_softmax(m)));
          if (g) {
            tape.backward(out);
            (*g)[0] = a->grad;
            (*g)[1] = b->grad;
            (*g)[2] = c->grad;
          }
          return out->value.item();
        },
        {a, b, c}, 1e-5);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("grad_check flags a deliberately corrupted gradient") {
  Tensor x = Tensor::vec({0.4, -0.7});
  double err = grad_check(
      [](std::vector<Tensor>& p, std::vector<Tensor>* g) {
        Tape tape;
        Node* leaf = tape.leaf(p[0]);
        Node* out = tape.sum(tape.tanh_(leaf));
        if (g) {
          tape.backward(out);
          (*g)[0] = leaf->grad;
          (*g)[0][0] += 0.5;  // sabotage one coordinate
        }
        return out->value.item();
      },
      {x}, 1e-5);
  CHECK(err > 0.1);
}

TEST_CASE("grad_check rejects non-finite objectives and bad eps") {
  Tensor x = Tensor::scalar(1.0);
  auto bad = [](std::vector<Tensor>&, std::vector<Tensor>* g) {
    if (g) (*g)[0] = Tensor::scalar(0.0);
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS((void)grad_check(bad, {x}, 1e-5), GradCheckFailure);
  auto fine = [](std::vector<Tensor>& p, std::vector<Tensor>* g) {
    if (g) (*g)[0] = Tensor::scalar(1.0);
    return p[0].item();
  };
  CHECK_THROWS_AS((void)grad_check(fine, {x}, 0.0), std::invalid_argument);
}

TEST_CASE("row_softmax with causal mask zeroes future positions") {
  Tape tape;
  Tensor x = Tensor::matrix(3, 3);
  Rng rng(5);
  rng.fill_gaussian(x, 0.0, 1.0);
  Tensor mask = Tensor::matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) mask(i, j) = -1e30;
  Node* a = tape.row_softmax(tape.leaf(x), &mask);
  CHECK(a->value(0, 1) == 0.0);
  CHECK(a->value(0, 2) == 0.0);
  CHECK(a->value(1, 2) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += a->value(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}
