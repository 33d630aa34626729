#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bblv/adam.hpp"
#include "bblv/tensor.hpp"

using namespace bblv;

TEST_CASE("zero gradients leave parameters untouched") {
  Tensor w = Tensor::vec({1.0f, -2.0f, 3.0f});
  Tensor g = Tensor::zeros({3});
  AdamState st = AdamState::init({&w}, AdamConfig{});
  for (int i = 0; i < 5; ++i) adam_step({&w}, {&g}, st);
  CHECK(w.data == std::vector<float>{1.0f, -2.0f, 3.0f});
}

TEST_CASE("first step moves by roughly lr in the negative gradient direction") {
  AdamConfig cfg;
  cfg.lr = 0.1f;
  Tensor w = Tensor::vec({0.0f, 0.0f});
  Tensor g = Tensor::vec({0.5f, -4.0f});
  AdamState st = AdamState::init({&w}, cfg);
  adam_step({&w}, {&g}, st);
  // With bias correction the first update is lr * g / (|g| + eps).
  CHECK(w.data[0] == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(w.data[1] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("matches an independent recursion on (w - 3)^2") {
  AdamConfig cfg;
  cfg.lr = 0.05f;
  Tensor w = Tensor::vec({0.0f});
  AdamState st = AdamState::init({&w}, cfg);

  // Reference in double precision, written straight from the update rule.
  double m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    double before = w.data[0];
    float gf = 2.0f * (w.data[0] - 3.0f);
    Tensor g = Tensor::vec({gf});
    adam_step({&w}, {&g}, st);

    double grad = static_cast<double>(gf);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    double expected = before - 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(w.data[0] - expected) < 5e-4);
  }
  CHECK(w.data[0] > 0.5f);  // actually making progress toward 3
}

TEST_CASE("non-finite gradient names the offending parameter") {
  Tensor w = Tensor::vec({1.0f});
  Tensor g = Tensor::vec({std::numeric_limits<float>::quiet_NaN()});
  AdamState st = AdamState::init({&w}, AdamConfig{});
  try {
    adam_step({&w}, {&g}, st, {"enc.w2"});
    FAIL("expected a throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("enc.w2") != std::string::npos);
  }
}

TEST_CASE("shape mismatch between parameter and gradient is an error") {
  Tensor w = Tensor::vec({1.0f, 2.0f});
  Tensor g = Tensor::vec({1.0f});
  AdamState st = AdamState::init({&w}, AdamConfig{});
  CHECK_THROWS(adam_step({&w}, {&g}, st));
}
