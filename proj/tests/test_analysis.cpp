#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "nspca/analysis.hpp"
#include "nspca/errors.hpp"
#include "nspca/model.hpp"

using namespace nspca;
using linalg::Matrix;
using linalg::Vector;

TEST_CASE("lower bound without drift is the pure sampling term") {
  const auto lb = analysis::lower_bound_s(1.0, 0.0, 1.0, 100);
  CHECK(lb.drift_term == 0.0);
  CHECK(lb.s == doctest::Approx(std::sqrt(2.0) / 10.0).epsilon(1e-14));
  CHECK(std::isinf(lb.t_star));
}

TEST_CASE("lower bound T to infinity limit and gamma homogeneity") {
  const double gamma = 1e-6;
  const auto lb_far = analysis::lower_bound_s(1.0, gamma, 1.0, 4000000000000L);
  CHECK(lb_far.s == doctest::Approx(lb_far.drift_term).epsilon(1e-5));

  const auto lb1 = analysis::lower_bound_s(1.0, gamma, 1.0, 1000);
  const auto lb2 = analysis::lower_bound_s(1.0, 2.0 * gamma, 1.0, 1000);
  CHECK(lb2.drift_term == doctest::Approx(std::cbrt(2.0) * lb1.drift_term).epsilon(1e-12));
}

TEST_CASE("lower bound monotone in T, gamma, sigma") {
  double prev = 1e9;
  for (long T : {10L, 100L, 1000L, 10000L}) {
    const double s = analysis::lower_bound_s(1.0, 1e-5, 1.0, T).s;
    CHECK(s <= prev);
    prev = s;
  }
  prev = 0.0;
  for (double gamma : {0.0, 1e-8, 1e-6, 1e-4, 1e-2}) {
    const double s = analysis::lower_bound_s(1.0, gamma, 1.0, 1000).s;
    CHECK(s >= prev);
    prev = s;
  }
  prev = 0.0;
  for (double sigma : {0.1, 0.5, 1.0, 2.0}) {
    const double s = analysis::lower_bound_s(1.0, 1e-5, sigma, 1000).s;
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("approach to the plateau follows the exact 1 + sqrt(t_star/T) law") {
  // At T = c * t_star the bound equals the limit times (1 + 1/sqrt(c)); the
  // 5%-band is reached at c = 400, not at c = 10.
  const auto ref = analysis::lower_bound_s(1.0, 1e-6, 1.0, 100);
  for (double c : {1.0, 10.0, 100.0, 400.0}) {
    const long T = static_cast<long>(c * ref.t_star);
    const auto lb = analysis::lower_bound_s(1.0, 1e-6, 1.0, T);
    CHECK(lb.s / lb.drift_term ==
          doctest::Approx(1.0 + std::sqrt(ref.t_star / static_cast<double>(T))).epsilon(1e-6));
  }
  const auto far = analysis::lower_bound_s(1.0, 1e-6, 1.0, static_cast<long>(450 * ref.t_star));
  CHECK(far.s <= 1.05 * far.drift_term);
}

TEST_CASE("noise bound point value") {
  // log T = 1 at T = e, so the bound collapses to sqrt(C p / B) = 1.
  const auto nb = analysis::noise_bound(4, std::exp(1.0), 4.0, 0.0, 1.0);
  CHECK(nb.value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::isinf(nb.b_star));
}

TEST_CASE("noise bound minimizer matches the calculus solution") {
  const int p = 10;
  const double T = 1e5, gamma = 0.01, C = 1.0;
  const auto nb = analysis::noise_bound(p, T, 100.0, gamma, C);
  const auto at_star = analysis::noise_bound(p, T, nb.b_star, gamma, C);
  CHECK(at_star.value == doctest::Approx(nb.value_at_b_star).epsilon(1e-12));
  // Strictly worse away from the minimizer, and divergent for large B.
  CHECK(analysis::noise_bound(p, T, 2.0 * nb.b_star, gamma, C).value > 1.05 * nb.value_at_b_star);
  CHECK(analysis::noise_bound(p, T, 0.5 * nb.b_star, gamma, C).value > 1.05 * nb.value_at_b_star);
  CHECK(analysis::noise_bound(p, T, 1e6 * nb.b_star, gamma, C).value >
        1e5 * nb.value_at_b_star);
}

TEST_CASE("empirical noise of a repeated vector block is zero") {
  Vector v(4);
  v << 1, -2, 0.5, 3;
  Matrix block(4, 32);
  for (int t = 0; t < 32; ++t) block.col(t) = v;
  CHECK(analysis::empirical_noise(block, v * v.transpose()) <= 1e-12);
}

TEST_CASE("empirical noise concentrates for an isotropic stream") {
  rng::Stream stream(991);
  Matrix block(10, 100000);
  stream.fill_gaussian(block);
  CHECK(analysis::empirical_noise(block, Matrix::Identity(10, 10)) <= 0.05);
}

namespace {

model::SubspacePath one_factor(double delta, double theta) {
  Matrix a = Matrix::Zero(2, 1);
  a(0, 0) = std::sqrt(delta) * std::cos(theta);
  a(1, 0) = std::sqrt(delta) * std::sin(theta);
  model::SubspacePath path;
  path.factors = {a};
  return path;
}

}  // namespace

TEST_CASE("single-step divergence closed form matches the Gaussian oracle") {
  const auto p0 = one_factor(1.0, 0.0);
  const auto p1 = one_factor(1.0, std::numbers::pi / 6.0);
  const double closed = analysis::kl_paths(p0, p1, 1.0, 1.0);
  CHECK(closed == doctest::Approx(0.125).epsilon(1e-10));
  const Vector oracle = analysis::gaussian_kl_steps(p0, p1, 1.0);
  REQUIRE(oracle.size() == 1);
  CHECK(std::abs(closed - oracle(0)) <= 1e-8);
  CHECK(analysis::kl_paths(p0, p0, 1.0, 1.0) == 0.0);
}

TEST_CASE("divergence of a full hypothesis pair matches per step and stays capped") {
  const double delta = 1.0, sigma = 1.0, gamma = 1e-4;
  const auto pair = model::hypothesis_pair(delta, gamma, sigma, 400);
  const Vector oracle = analysis::gaussian_kl_steps(pair.h0, pair.h1, sigma);
  const double coef = delta * delta / (sigma * sigma * (sigma * sigma + delta));
  double total = 0.0;
  for (long t = 0; t < 400; ++t) {
    const double d = linalg::projection_distance(pair.h0.factors[t], pair.h1.factors[t]);
    const double closed_step = coef * d * d;
    CHECK(std::abs(closed_step - oracle(t)) <= 1e-8);
    total += closed_step;
  }
  CHECK(analysis::kl_paths(pair.h0, pair.h1, sigma, delta) ==
        doctest::Approx(total).epsilon(1e-12));

  // T-independent cap across two decades.
  for (long T : {100L, 1000L, 10000L}) {
    const auto pr = model::hypothesis_pair(delta, gamma, sigma, T);
    CHECK(analysis::kl_paths(pr.h0, pr.h1, sigma, delta) <= 16.0);
  }
}

TEST_CASE("assumption report without drift reduces to the stationary forms") {
  const auto r = analysis::check_assumptions(0.1, 1.0, 1.0, 0.0, 50, 3, 1000000, 1.0);
  CHECK(r.eta == 0.0);
  CHECK(r.eta_defined);
  CHECK(r.a4.holds);
  CHECK(r.a4.margin == doctest::Approx(0.1).epsilon(1e-14));
  const double eps = 0.1, cap = 0.025;
  const double expected_phi =
      (2.0 - cap / std::sqrt(1.0 - eps * eps)) / (1.0 + cap) * (1.0 - eps * eps);
  CHECK(r.phi == doctest::Approx(expected_phi).epsilon(1e-14));
}

TEST_CASE("assumption report golden values") {
  const auto r = analysis::check_assumptions(0.1, 1.0, 1.0, 1e-6, 50, 3, 1000000, 1.0);
  CHECK(r.B == 88399);
  CHECK(r.L == 15);
  CHECK(r.Delta == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(r.eta == doctest::Approx(0.096971152949590869).epsilon(1e-9));
  CHECK(r.phi == doctest::Approx(1.8516043880017816).epsilon(1e-9));
  CHECK(r.s_lower == doctest::Approx(0.01401342406132183).epsilon(1e-9));
  CHECK(r.t_star == doctest::Approx(12599.210498948727).epsilon(1e-9));
  CHECK(r.noise_bound_at_B == doctest::Approx(0.13259797963193556).epsilon(1e-9));
  CHECK(r.epsilon_floor == doctest::Approx(1.414378449401867).epsilon(1e-9));
  CHECK_FALSE(r.a1.holds);
  CHECK(r.a2.holds);
  CHECK(r.phi > 1.0);
  CHECK_FALSE(r.a3.holds);
  CHECK(r.a4.holds);
  CHECK_FALSE(r.epsilon_window_ok);
  CHECK(r.delta_sigma_ok);
}

TEST_CASE("infeasible epsilon is reported, not thrown") {
  const auto r = analysis::check_assumptions(0.01, 1.0, 1.0, 1e-2, 20, 3, 10000, 1.0);
  CHECK_FALSE(r.epsilon_window_ok);
  CHECK(r.epsilon_floor > 0.01);
}

TEST_CASE("undefined eta is flagged when the block drifts past delta") {
  // Huge B forced by tiny epsilon with sizable gamma: B*gamma exceeds delta.
  const auto r = analysis::check_assumptions(0.25, 1.0, 1.0, 0.9e-3, 50, 3, 100000000, 1.0);
  if (!r.eta_defined) {
    CHECK_FALSE(r.a2.holds);
  } else {
    CHECK(r.eta >= 0.0);
  }
}

TEST_CASE("recommended run reaches the T = B*L fixpoint") {
  const auto r = analysis::recommend_run(0.1, 1.0, 1.0, 0.0, 20, 2, 1.0, 1000000);
  REQUIRE(r.L > 0);
  CHECK(r.T == r.B * static_cast<long>(r.L));
}

TEST_CASE("report serializes with the documented keys") {
  const auto r = analysis::check_assumptions(0.1, 1.0, 1.0, 0.0, 10, 2, 100000, 1.0);
  const auto j = nlohmann::json::parse(r.to_json());
  for (const char* key : {"s_lower", "t_star", "B", "L", "Delta", "eta", "phi",
                          "a1", "a2", "a3", "a4", "margins", "C"})
    CHECK(j.contains(key));
  CHECK(j["margins"].size() == 4);
  CHECK(r.to_text().find("phi") != std::string::npos);
}
