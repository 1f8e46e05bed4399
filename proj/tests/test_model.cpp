#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "nspca/analysis.hpp"
#include "nspca/errors.hpp"
#include "nspca/model.hpp"

using namespace nspca;
using linalg::Matrix;
using linalg::Vector;

TEST_CASE("zero drift keeps the path constant") {
  model::SpikedParams params{5, 2, 1.0, 1.0, 0.0, 7};
  const auto path = model::generate_rotating_path(params, 20);
  CHECK(path.gamma_certified == 0.0);
  for (const auto& a : path.factors)
    CHECK((a - path.factors.front()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(model::drift_check(path) == 0.0);
}

TEST_CASE("length-one path has zero certified drift") {
  model::SpikedParams params{4, 1, 2.0, 0.5, 0.2, 3};
  const auto path = model::generate_rotating_path(params, 1);
  CHECK(path.length() == 1);
  CHECK(path.gamma_certified == 0.0);
}

TEST_CASE("rotating path honors the drift bound at every step") {
  model::SpikedParams params{4, 1, 1.0, 1.0, 0.1, 42};
  const auto path = model::generate_rotating_path(params, 50);
  const double observed = model::drift_check(path);
  CHECK(observed <= 0.1 + 1e-10);
  // Every step rotates by exactly asin(gamma/delta), so the dense evaluation
  // should match the certificate, not just stay below it.
  CHECK(observed == doctest::Approx(path.gamma_certified).epsilon(1e-9));
  CHECK(model::min_spike_energy(path, params.k) >= params.delta - 1e-10);
}

TEST_CASE("single Givens step drift has the closed form delta*sin(phi)") {
  const double delta = 1.7, phi = 0.3;
  Matrix a = Matrix::Zero(3, 1), b = Matrix::Zero(3, 1);
  a(0, 0) = std::sqrt(delta);
  b(0, 0) = std::sqrt(delta) * std::cos(phi);
  b(1, 0) = std::sqrt(delta) * std::sin(phi);
  model::SubspacePath path;
  path.factors = {a, b};
  CHECK(model::drift_check(path) == doctest::Approx(delta * std::sin(phi)).epsilon(1e-12));
}

TEST_CASE("path generation is deterministic in the seed") {
  model::SpikedParams params{6, 2, 1.0, 0.5, 0.05, 99};
  const auto p1 = model::generate_rotating_path(params, 30);
  const auto p2 = model::generate_rotating_path(params, 30);
  for (long t = 0; t < 30; ++t)
    CHECK((p1.factors[t] - p2.factors[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(model::SpikedParams({4, 4, 1.0, 1.0, 0.0, 0}).validate(), InvalidParamsError);
  CHECK_THROWS_AS(model::SpikedParams({4, 1, 0.5, 1.0, 0.6, 0}).validate(), InvalidParamsError);
  CHECK_THROWS_AS(model::SpikedParams({4, 1, 1.0, 1.0, 1.0, 0}).validate(), InvalidParamsError);
}

TEST_CASE("hypothesis pair without drift is constant with terminal gap 2s") {
  const auto pair = model::hypothesis_pair(1.0, 0.0, 1.0, 100);
  const double s_expected = std::sqrt(2.0) / 10.0;
  CHECK(pair.s == doctest::Approx(s_expected).epsilon(1e-14));
  CHECK_FALSE(pair.theta_clamped);
  for (long t = 0; t < 100; ++t) {
    CHECK(pair.theta(t) == doctest::Approx(std::asin(2.0 * s_expected)).epsilon(1e-14));
    CHECK((pair.h1.factors[t] - pair.h1.factors.front()).cwiseAbs().maxCoeff() == 0.0);
  }
  const double gap = linalg::projection_distance(pair.h0.factors.back(), pair.h1.factors.back());
  CHECK(gap == doctest::Approx(2.0 * s_expected).epsilon(1e-10));
}

TEST_CASE("fast drift clamps early angles to zero so the paths coincide") {
  const auto pair = model::hypothesis_pair(1.0, 0.5, 0.1, 50);
  for (long t = 0; t + 1 < 50; ++t) {
    CHECK(pair.theta(t) == 0.0);
    CHECK((pair.h1.factors[t] - pair.h0.factors[t]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(pair.theta(49) > 0.0);
}

TEST_CASE("clamped terminal angle is flagged") {
  // sigma large makes 2s exceed 1.
  const auto pair = model::hypothesis_pair(1.0, 0.0, 5.0, 4);
  CHECK(pair.theta_clamped);
  CHECK(pair.theta(3) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
}

TEST_CASE("noiseless samples stay in the subspace") {
  Matrix a = Matrix::Zero(5, 1);
  a(0, 0) = 1.0;
  rng::Stream stream(123);
  const Matrix x = model::sample_block({a}, 0.0, 40, stream);
  CHECK(x.bottomRows(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(x.topRows(1).cwiseAbs().minCoeff() > 0.0);
}

TEST_CASE("pure-noise sample covariance concentrates to the identity") {
  const Matrix a = Matrix::Zero(10, 1);
  rng::Stream stream(2024);
  const long B = 100000;
  const Matrix x = model::sample_block({a}, 1.0, B, stream);
  const Matrix cov = x * x.transpose() / static_cast<double>(B);
  CHECK(linalg::sym_spectral_norm(cov - Matrix::Identity(10, 10)) <= 0.05);
}

TEST_CASE("sampling is bit-identical for a fixed stream key") {
  Matrix a(3, 2);
  a << 1, 0, 0, 1, 0.5, -0.5;
  rng::Stream s1(555), s2(555);
  const Matrix x1 = model::sample_block({a}, 0.7, 16, s1);
  const Matrix x2 = model::sample_block({a}, 0.7, 16, s2);
  CHECK((x1 - x2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stationary block covariance matches the model covariance") {
  model::SpikedParams params{10, 2, 1.0, 1.0, 0.0, 31};
  model::BlockSampler sampler(params, rng::derive(params.seed, {rng::kTagTrial}));
  const long B = 100000;
  Matrix cov = Matrix::Zero(10, 10);
  Matrix x(10, 1000);
  for (long done = 0; done < B; done += 1000) {
    sampler.next_chunk(x);
    cov.noalias() += x * x.transpose();
  }
  cov /= static_cast<double>(B);
  const Matrix& frame = sampler.walker().frame();
  Matrix truth = params.delta * (frame * frame.transpose());
  truth.diagonal().array() += 1.0;
  // Concentration at the model's own scale: C sqrt(p log(2/alpha) / B) with
  // alpha = 0.01 and C = 3 sits comfortably above the observed error.
  const double bound = 3.0 * std::sqrt(10.0 * std::log(200.0) / static_cast<double>(B));
  CHECK(linalg::sym_spectral_norm(cov - truth) <= bound);
}

TEST_CASE("walker frames stay orthonormal over long drifting runs") {
  model::SpikedParams params{8, 2, 1.0, 1.0, 1e-3, 77};
  model::BlockSampler sampler(params, 12345);
  Matrix x(8, 64);
  for (int i = 0; i < 160; ++i) sampler.next_chunk(x);  // > 10k steps
  const Matrix& frame = sampler.walker().frame();
  const Matrix defect = frame.transpose() * frame - Matrix::Identity(2, 2);
  CHECK(defect.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(sampler.samples_drawn() == 160 * 64);
}

TEST_CASE("path save/load round trip is exact") {
  model::SpikedParams params{4, 2, 1.3, 0.8, 0.02, 918};
  const auto path = model::generate_rotating_path(params, 12);
  std::stringstream ss;
  model::save_path(ss, path, params);
  const auto [loaded, lparams] = model::load_path(ss);
  REQUIRE(loaded.length() == path.length());
  CHECK(lparams.p == params.p);
  CHECK(lparams.k == params.k);
  CHECK(lparams.delta == params.delta);
  CHECK(lparams.gamma == params.gamma);
  CHECK(lparams.sigma == params.sigma);
  CHECK(lparams.seed == params.seed);
  CHECK(loaded.gamma_certified == path.gamma_certified);
  for (long t = 0; t < path.length(); ++t)
    CHECK((loaded.factors[t] - path.factors[t]).cwiseAbs().maxCoeff() == 0.0);
}
