// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "catch_amalgamated.hpp"
#include "m3s/autodiff/gradcheck.hpp"
#include "m3s/autodiff/ops.hpp"
#include "m3s/autodiff/tensor.hpp"
#include "m3s/errors.hpp"
#include "support/fixtures.hpp"

using namespace m3s;
using ad::Tensor;
using Catch::Approx;
using D = Tensor<double>;

namespace {

D param(ad::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return testing::random_tensor<double>(std::move(s), seed, true, lo, hi);
}

D fixed(ad::Shape s, std::uint64_t seed) { return testing::random_tensor<double>(std::move(s), seed); }

// sum(w * f(x)) with a fixed random w so every output element matters.
ad::GradcheckReport check_unary(ad::Shape in, const std::function<D(const D&)>& f, std::uint64_t seed,
                                double lo = -1.0, double hi = 1.0) {
  D x = param(in, seed, lo, hi);
  D probe;
  {
    ad::NoTapeScope<double> off;
    probe = f(x);
  }
  const D w = fixed(probe.shape(), seed + 100);
  return ad::gradcheck([&] { return ad::sum_all(ad::mul(f(x), w)); }, {{"x", x}});
}

ad::GradcheckReport check_binary(ad::Shape sa, ad::Shape sb, const std::function<D(const D&, const D&)>& f,
                                 std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  D a = param(sa, seed, lo, hi);
  D b = param(sb, seed + 1, lo, hi);
  D probe;
  {
    ad::NoTapeScope<double> off;
    probe = f(a, b);
  }
  const D w = fixed(probe.shape(), seed + 100);
  return ad::gradcheck([&] { return ad::sum_all(ad::mul(f(a, b), w)); }, {{"a", a}, {"b", b}});
}

}  // namespace

TEST_CASE("tensor construction rejects bad shapes") {
  CHECK_THROWS_AS(D::constant({2, 0}, {}), ConfigError);
  CHECK_THROWS_AS(D::constant({2, 2}, {1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(D::constant({}, {}), ConfigError);
  const D s = D::scalar(3.5);
  CHECK(s.item() == 3.5);
  CHECK_FALSE(s.requires_grad());
}

TEST_CASE("add broadcasts a trailing vector over rows") {
  const D a = D::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  const D b = D::constant({3}, {10, 20, 30});
  const D c = ad::add(a, b);
  CHECK(c.shape() == ad::Shape{2, 3});
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK_THROWS_AS(ad::add(a, D::constant({2}, {1, 2})), ConfigError);
}

TEST_CASE("matmul matches hand products") {
  const D a = D::constant({2, 2}, {1, 2, 3, 4});
  const D b = D::constant({2, 2}, {5, 6, 7, 8});
  const D c = ad::matmul(a, b);
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{19, 22, 43, 50});
  const D ct = ad::matmul(a, b, true);  // a * b^T
  CHECK(std::vector<double>(ct.data().begin(), ct.data().end()) == std::vector<double>{17, 23, 39, 53});
  // batched [2,1,2] x [2,2] shares b
  const D x = D::constant({2, 1, 2}, {1, 0, 0, 1});
  const D y = ad::matmul(x, b);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("softmax rows sum to one and log_softmax agrees") {
  const D a = fixed({3, 5}, 1);
  const D s = ad::softmax(a, 1);
  const D ls = ad::log_softmax(a, 1);
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      total += s.at({r, c});
      CHECK(ls.at({r, c}) == Approx(std::log(s.at({r, c}))).epsilon(1e-12));
    }
    CHECK(total == Approx(1.0).epsilon(1e-14));
  }
  // large logits stay finite
  const D big = D::constant({1, 3}, {1000, 1001, 1002});
  CHECK(ad::softmax(big, 1).at({0, 2}) == Approx(1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0))));
}

TEST_CASE("layer_norm gives zero mean and unit variance with identity affine") {
  const D a = fixed({2, 6}, 3);
  const D g = D::constant({6}, std::vector<double>(6, 1.0));
  const D b = D::constant({6}, std::vector<double>(6, 0.0));
  const D y = ad::layer_norm(a, g, b, 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y.at({r, c}) / 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m) / 6;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("gelu and sigmoid reference values") {
  const D x = D::constant({3}, {-1.0, 0.0, 2.0});
  const D g = ad::gelu(x);
  auto ref = [](double v) { return 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v))); };
  CHECK(g.at({0}) == Approx(ref(-1.0)).epsilon(1e-14));
  CHECK(g.at({1}) == 0.0);
  CHECK(g.at({2}) == Approx(ref(2.0)).epsilon(1e-14));
  const D s = ad::sigmoid(D::constant({2}, {-800.0, 800.0}));
  CHECK(s.at({0}) >= 0.0);
  CHECK(s.at({1}) == 1.0);
}

TEST_CASE("embedding gathers rows and rejects out-of-range ids") {
  const D table = D::constant({3, 2}, {0, 1, 10, 11, 20, 21});
  const std::vector<std::int32_t> ids{2, 0};
  const D e = ad::embedding(table, std::span<const std::int32_t>(ids), {2});
  CHECK(std::vector<double>(e.data().begin(), e.data().end()) == std::vector<double>{20, 21, 0, 1});
  const std::vector<std::int32_t> bad{3};
  CHECK_THROWS_AS(ad::embedding(table, std::span<const std::int32_t>(bad), {1}), DataError);
}

TEST_CASE("masked_fill passes no gradient through masked entries") {
  D x = param({2, 3}, 5);
  const std::vector<std::uint8_t> mask{1, 0, 0, 0, 1, 0};
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    const D y = ad::masked_fill(x, mask, -1e9);
    CHECK(y.at({0, 0}) == -1e9);
    const D loss = ad::sum_all(ad::mul(y, fixed({2, 3}, 6)));
    tape.backward(loss);
  }
  const auto g = x.grad();
  for (std::size_t i = 0; i < 6; ++i) {
    if (mask[i]) {
      CHECK(g[i] == 0.0);
    } else {
      CHECK(g[i] != 0.0);
    }
  }
}

TEST_CASE("non-finite outputs raise NumericError naming the op") {
  const D zero = D::constant({2}, {0.0, 1.0});
  try {
    ad::log(zero);
    FAIL("log(0) should throw");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::div(D::scalar(1.0), D::scalar(0.0)), NumericError);
  CHECK_THROWS_AS(ad::cosine_similarity(D::constant({1, 2}, {0, 0}), D::constant({1, 2}, {1, 0})), NumericError);
  CHECK_THROWS_AS(ad::l2_normalize(D::constant({1, 2}, {0, 0})), NumericError);
}

TEST_CASE("backward needs a scalar loss and only taped ops record") {
  D x = param({2}, 1);
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    const D y = ad::scale(x, 2.0);
    CHECK(tape.size() == 1);
    CHECK_THROWS_AS(tape.backward(y), ConfigError);
    {
      ad::NoTapeScope<double> off;
      ad::scale(x, 3.0);
    }
    CHECK(tape.size() == 1);
  }
  CHECK(ad::active_tape<double>() == nullptr);
}

TEST_CASE("gradients accumulate across reuse of a tensor") {
  D x = D::parameter({1}, {3.0});
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    const D y = ad::add(ad::mul(x, x), x);  // x^2 + x
    tape.backward(y);
  }
  CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("detach blocks gradient") {
  D x = D::parameter({1}, {2.0});
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    const D y = ad::mul(ad::detach(x), x);
    tape.backward(y);
  }
  CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("gradcheck: elementwise and reduction ops") {
  const double tol = 1e-6;
  CHECK(check_binary({3, 4}, {4}, [](const D& a, const D& b) { return ad::add(a, b); }, 1).max_rel_error < tol);
  CHECK(check_binary({3, 4}, {3, 4}, [](const D& a, const D& b) { return ad::sub(a, b); }, 2).max_rel_error < tol);
  CHECK(check_binary({2, 3}, {3}, [](const D& a, const D& b) { return ad::mul(a, b); }, 3).max_rel_error < tol);
  CHECK(check_binary({2, 3}, {2, 3}, [](const D& a, const D& b) { return ad::div(a, b); }, 4, 0.5, 2.0)
            .max_rel_error < tol);
  CHECK(check_unary({4}, [](const D& a) { return ad::add_scalar(a, 2.0); }, 5).max_rel_error < tol);
  CHECK(check_unary({4}, [](const D& a) { return ad::scale(a, -1.5); }, 6).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::log(a); }, 7, 0.5, 2.0).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::exp(a); }, 8).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::sigmoid(a); }, 9, -3, 3).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::tanh(a); }, 10, -2, 2).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::gelu(a); }, 11, -3, 3).max_rel_error < tol);
  CHECK(check_unary({2, 3, 4}, [](const D& a) { return ad::sum(a, 1); }, 12).max_rel_error < tol);
  CHECK(check_unary({2, 3, 4}, [](const D& a) { return ad::mean(a, 2); }, 13).max_rel_error < tol);
  CHECK(check_unary({2, 3}, [](const D& a) { return ad::mean_all(a); }, 14).max_rel_error < tol);
}

TEST_CASE("gradcheck: shape ops") {
  const double tol = 1e-6;
  CHECK(check_unary({2, 3, 4}, [](const D& a) { return ad::reshape(a, {6, 4}); }, 20).max_rel_error < tol);
  CHECK(check_unary({2, 3, 4}, [](const D& a) { return ad::permute(a, {2, 0, 1}); }, 21).max_rel_error < tol);
  CHECK(check_unary({2, 3, 4}, [](const D& a) { return ad::transpose(a); }, 22).max_rel_error < tol);
  CHECK(check_unary({2, 5}, [](const D& a) { return ad::slice(a, 1, 1, 3); }, 23).max_rel_error < tol);
  CHECK(check_binary({2, 3}, {2, 2}, [](const D& a, const D& b) { return ad::concat<double>({a, b}, 1); }, 24)
            .max_rel_error < tol);
  CHECK(check_unary({2, 5},
                    [](const D& a) {
                      auto parts = ad::split(a, 1, {2, 3});
                      return ad::concat<double>({parts[1], parts[0]}, 1);
                    },
                    25)
            .max_rel_error < tol);
  const std::vector<std::size_t> rows{2, 0, 2};
  CHECK(check_unary({3, 4}, [&](const D& a) { return ad::gather_rows(a, std::span<const std::size_t>(rows)); }, 26)
            .max_rel_error < tol);
  const std::vector<std::int32_t> idx{1, 3, 0};
  CHECK(check_unary({3, 4}, [&](const D& a) { return ad::pick(a, std::span<const std::int32_t>(idx)); }, 27)
            .max_rel_error < tol);
}

TEST_CASE("gradcheck: matmul, softmax, layer_norm, embedding, masked_fill, cosine") {
  const double tol = 1e-6;
  CHECK(check_binary({2, 3, 4}, {4, 5}, [](const D& a, const D& b) { return ad::matmul(a, b); }, 30).max_rel_error < tol);
  CHECK(check_binary({2, 3, 4}, {2, 5, 4}, [](const D& a, const D& b) { return ad::matmul(a, b, true); }, 31)
            .max_rel_error < tol);
  CHECK(check_unary({3, 5}, [](const D& a) { return ad::softmax(a, 1); }, 32).max_rel_error < tol);
  CHECK(check_unary({3, 5}, [](const D& a) { return ad::softmax(a, 0); }, 33).max_rel_error < tol);
  CHECK(check_unary({3, 5}, [](const D& a) { return ad::log_softmax(a, 1); }, 34).max_rel_error < tol);

  D x = param({3, 4}, 35);
  D g = param({4}, 36, 0.5, 1.5);
  D b = param({4}, 37);
  const D w = fixed({3, 4}, 38);
  CHECK(ad::gradcheck([&] { return ad::sum_all(ad::mul(ad::layer_norm(x, g, b, 1e-5), w)); },
                      {{"x", x}, {"gamma", g}, {"beta", b}})
            .max_rel_error < tol);

  D table = param({5, 3}, 39);
  const std::vector<std::int32_t> ids{4, 1, 1, 0};
  const D we = fixed({2, 2, 3}, 40);
  CHECK(ad::gradcheck([&] { return ad::sum_all(ad::mul(ad::embedding(table, std::span<const std::int32_t>(ids), {2, 2}), we)); },
                      {{"table", table}})
            .max_rel_error < tol);

  const std::vector<std::uint8_t> mask{0, 1, 0, 0, 1, 1};
  CHECK(check_unary({2, 3}, [&](const D& a) { return ad::masked_fill(a, mask, 0.25); }, 41).max_rel_error < tol);
  CHECK(check_binary({3, 4}, {3, 4}, [](const D& a, const D& b) { return ad::cosine_similarity(a, b); }, 42)
            .max_rel_error < tol);
  CHECK(check_unary({3, 4}, [](const D& a) { return ad::l2_normalize(a); }, 43).max_rel_error < tol);
}

TEST_CASE("gradcheck reports a wrong gradient") {
  // A hand-built op with a deliberately wrong backward rule.
  D x = param({3}, 50);
  auto broken = [&] {
    const D y = ad::mul(x, x);
    return ad::sum_all(ad::add(y, ad::detach(y)));  // value uses 2x^2, gradient only sees x^2
  };
  const auto report = ad::gradcheck(broken, {{"x", x}});
  CHECK_FALSE(report.passed());
  CHECK(report.entries.at(0).flagged > 0);
  CHECK(report.summary().find("x") != std::string::npos);
}

TEST_CASE("gradcheck guards its preconditions") {
  D x = param({2}, 60);
  const auto f = [&] { return ad::sum_all(ad::mul(x, x)); };
  CHECK_THROWS_AS(ad::gradcheck(f, {{"x", x}}, 1e-8), ConfigError);
  CHECK_THROWS_AS(ad::gradcheck(f, {{"x", x}}, 1e-2), ConfigError);
  std::mt19937_64 rng(1);
  const auto noisy = [&] { return ad::add_scalar(ad::sum_all(x), static_cast<double>(rng() % 1000)); };
  CHECK_THROWS_AS(ad::gradcheck(noisy, {{"x", x}}), ContractViolation);
  const D c = fixed({2}, 61);
  CHECK_THROWS_AS(ad::gradcheck([&] { return ad::sum_all(ad::mul(c, x)); }, {{"c", c}}), ConfigError);
}
