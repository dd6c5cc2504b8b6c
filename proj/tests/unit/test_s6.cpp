#include <cmath>
#include <numbers>
#include <random>

#include "diff_ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace gleason;

namespace {

struct Instance {
  s6::DiscretizedStep step;
  Tensor C, D, x;
};

Instance random_instance(std::size_t l, std::size_t d, std::size_t n, std::mt19937_64& rng) {
  const Tensor A = Tensor::uniform({d, n}, rng, -3.0, -0.05);
  const Tensor B = Tensor::randn({l, n}, rng);
  const Tensor delta = Tensor::uniform({l, d}, rng, 0.01, 1.0);
  return {s6::discretize(A, B, delta), Tensor::randn({l, n}, rng), Tensor::randn({d}, rng), Tensor::randn({l, d}, rng)};
}

s6::DiscretizedStep constant_step(std::size_t l, double a_bar, double b_bar) {
  return {Tensor::full({l, 1, 1}, a_bar), Tensor::full({l, 1, 1}, b_bar)};
}

}  // namespace

TEST_CASE("project_inputs") {
  std::mt19937_64 rng(1);
  auto p = s6::S6Params::init(3, 4, rng);
  const auto zero = s6::project_inputs(Tensor({5, 3}), p);
  for (double v : zero.delta.data()) CHECK(v == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

  p.W_B.fill(0.0);
  const auto noB = s6::project_inputs(Tensor::randn({5, 3}, rng), p);
  CHECK(max_abs(noB.B) == 0.0);

  const auto big = s6::project_inputs(Tensor::randn({50, 3}, rng, 30.0), p);
  for (double v : big.delta.data()) CHECK(v > 0.0);
}

TEST_CASE("init makes A negative") {
  std::mt19937_64 rng(2);
  const auto p = s6::S6Params::init(2, 5, rng);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t s = 0; s < 5; ++s) CHECK(p.A.at({c, s}) == -static_cast<double>(s + 1));
}

TEST_CASE("discretize closed forms") {
  auto [a_bar, b_bar] = s6::discretize_lane(-1.0, std::numbers::ln2, 1.0);
  CHECK(std::abs(a_bar - 0.5) < 1e-12);
  CHECK(std::abs(b_bar - 0.5) < 1e-12);

  std::tie(a_bar, b_bar) = s6::discretize_lane(0.0, 0.3, 2.0);
  CHECK(a_bar == 1.0);
  CHECK(std::abs(b_bar - 0.6) < 1e-15);

  std::tie(a_bar, b_bar) = s6::discretize_lane(-1.0, 1e-8, 2.0);
  CHECK(std::abs(b_bar - 2e-8) < 1e-14);
}

TEST_CASE("discretization is first-order consistent") {
  const double a = -1.7, B = 0.8, delta = 1e-6;
  const auto [a_bar, b_bar] = s6::discretize_lane(a, delta, B);
  CHECK(std::abs(((a_bar - 1.0) / delta - a) / a) < 1e-5);
  CHECK(std::abs((b_bar / delta - B) / B) < 1e-5);
}

TEST_CASE("discretized step invariants") {
  std::mt19937_64 rng(3);
  const auto inst = random_instance(40, 3, 5, rng);
  for (double v : inst.step.A_bar.data()) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(inst.step.B_bar.all_finite());
}

TEST_CASE("sequential scan examples") {
  const Tensor zeros = s6::scan_sequential(constant_step(4, 0.5, 1.0), Tensor::full({4, 1}, 1.0), Tensor({1}),
                                           Tensor({4, 1}));
  CHECK(max_abs(zeros) == 0.0);

  const Tensor y = s6::scan_sequential(constant_step(3, 0.5, 1.0), Tensor::full({3, 1}, 1.0), Tensor({1}),
                                       Tensor::full({3, 1}, 1.0));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 1.5);
  CHECK(y[2] == 1.75);

  const Tensor skip = s6::scan_sequential(constant_step(1, 0.5, 1.0), Tensor({1, 1}), Tensor({1}, {2.0}),
                                          Tensor({1, 1}, {3.0}));
  CHECK(skip[0] == 6.0);
}

TEST_CASE("parallel scan examples") {
  std::mt19937_64 rng(4);
  const auto one = random_instance(1, 3, 4, rng);
  CHECK(max_abs_diff(s6::scan_parallel(one.step, one.C, one.D, one.x),
                     s6::scan_sequential(one.step, one.C, one.D, one.x)) == 0.0);

  const std::size_t l = 300;
  const Tensor count = s6::scan_parallel(constant_step(l, 1.0, 1.0), Tensor::full({l, 1}, 1.0), Tensor({1}),
                                         Tensor::full({l, 1}, 1.0));
  for (std::size_t t = 0; t < l; ++t) CHECK(count[t] == static_cast<double>(t + 1));
}

TEST_CASE("parallel scan matches the sequential oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> L(1, 1024), Dd(1, 8), N(1, 16);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t l = trial == 0 ? 1024 : L(rng), d = Dd(rng), n = N(rng);
    const auto inst = random_instance(l, d, n, rng);
    Tensor states_seq, states_par;
    const Tensor ys = s6::scan_sequential(inst.step, inst.C, inst.D, inst.x, {}, &states_seq);
    const Tensor yp = s6::scan_parallel(inst.step, inst.C, inst.D, inst.x, {}, &states_par);
    CHECK(max_rel_diff(yp, ys) < 1e-10);
    CHECK(max_rel_diff(states_par, states_seq) < 1e-10);
    CHECK(max_rel_diff(ys, oracle::naive_scan(inst.step.A_bar, inst.step.B_bar, inst.C, inst.D, inst.x)) < 1e-12);
  }
}

TEST_CASE("nonzero initial state") {
  std::mt19937_64 rng(6);
  const auto inst = random_instance(77, 2, 3, rng);
  const Tensor h0 = Tensor::randn({2, 3}, rng);
  CHECK(max_rel_diff(s6::scan_parallel(inst.step, inst.C, inst.D, inst.x, h0),
                     s6::scan_sequential(inst.step, inst.C, inst.D, inst.x, h0)) < 1e-10);
}

TEST_CASE("state stays bounded over a long sequence") {
  std::mt19937_64 rng(7);
  const std::size_t l = 100000;
  const auto inst = random_instance(l, 1, 2, rng);
  Tensor states;
  s6::scan_sequential(inst.step, inst.C, inst.D, inst.x, {}, &states);
  double max_a = 0.0, max_drive = 0.0;
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      max_a = std::max(max_a, inst.step.A_bar[t * 2 + s]);
      max_drive = std::max(max_drive, std::abs(inst.step.B_bar[t * 2 + s] * inst.x[t]));
    }
  }
  const double bound = max_drive / (1.0 - max_a);
  CHECK(states.all_finite());
  CHECK(max_abs(states) <= bound * (1.0 + 1e-12));
}

TEST_CASE("selectivity: equal first tokens give equal first outputs") {
  std::mt19937_64 rng(8);
  const auto p = s6::S6Params::init(3, 4, rng);
  Tensor x1 = Tensor::randn({5, 3}, rng), x2 = Tensor::randn({5, 3}, rng);
  for (std::size_t c = 0; c < 3; ++c) x2[c] = x1[c];
  const Tensor y1 = s6::forward(x1, p), y2 = s6::forward(x2, p);
  for (std::size_t c = 0; c < 3; ++c) CHECK(y1[c] == y2[c]);
  CHECK(max_abs_diff(y1, y2) > 0.0);
}

TEST_CASE("backward") {
  std::mt19937_64 rng(9);
  auto p = s6::S6Params::init(2, 4, rng);
  p.D = Tensor::randn({2}, rng);
  p.b_delta = Tensor::randn({2}, rng, 0.3);
  p.b_B = Tensor::randn({4}, rng, 0.3);
  p.b_C = Tensor::randn({4}, rng, 0.3);
  const Tensor x = Tensor::randn({8, 2}, rng);

  SUBCASE("grad_check") {
    for (auto mode : {s6::ScanMode::sequential, s6::ScanMode::parallel}) {
      CHECK(grad_check(diffops::s6_op(p, mode), diffops::s6_inputs(x, p)) < 1e-4);
    }
    const Tensor long_x = Tensor::randn({70, 2}, rng);
    CHECK(grad_check(diffops::s6_op(p), diffops::s6_inputs(long_x, p), 1e-5, 3) < 1e-4);
  }
  SUBCASE("zero cotangent") {
    s6::Cache cache;
    s6::forward(x, p, s6::ScanMode::parallel, &cache);
    const auto g = s6::backward(p, cache, Tensor({8, 2}));
    CHECK(max_abs(g.x) == 0.0);
    for (const Tensor* t : g.params.tensors()) CHECK(max_abs(*t) == 0.0);
  }
  SUBCASE("D gradient is sum of cotangent times input") {
    s6::Cache cache;
    s6::forward(x, p, s6::ScanMode::parallel, &cache);
    const Tensor gy = Tensor::randn({8, 2}, rng);
    const auto g = s6::backward(p, cache, gy);
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t t = 0; t < 8; ++t) expect += gy[t * 2 + c] * x[t * 2 + c];
      CHECK(g.params.D[c] == doctest::Approx(expect).epsilon(1e-13));
    }
  }
}

TEST_CASE("backward through the series branch") {
  std::mt19937_64 rng(10);
  auto p = s6::S6Params::init(2, 3, rng);
  p.A.fill(-1e-9);  // |delta * a| below the series threshold
  const Tensor x = Tensor::randn({6, 2}, rng);
  CHECK(grad_check(diffops::s6_op(p), diffops::s6_inputs(x, p)) < 1e-4);
}
