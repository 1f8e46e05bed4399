#include <doctest.h>

#include <cmath>

#include "nspca/analysis.hpp"
#include "nspca/errors.hpp"
#include "nspca/verify.hpp"

using namespace nspca;
using linalg::Matrix;
using linalg::Vector;

namespace {

// Spiked symmetric matrix with a seeded random eigenbasis.
struct Spiked {
  Matrix m;
  Matrix u;
};

Spiked make_spiked(int n, int k, double delta, double sigma2, std::uint64_t key) {
  rng::Stream stream(key);
  Matrix g(n, n);
  stream.fill_gaussian(g);
  Spiked out;
  out.u = linalg::orthonormal_basis(g);
  Vector spectrum(n);
  for (int i = 0; i < n; ++i) spectrum(i) = i < k ? delta + sigma2 : sigma2;
  out.m = out.u * spectrum.asDiagonal() * out.u.transpose();
  out.m = 0.5 * (out.m + out.m.transpose());
  return out;
}

}  // namespace

TEST_CASE("pm_stat margin on the aligned input is zero on both sides") {
  const auto sp = make_spiked(6, 2, 1.0, 0.5, 41);
  const auto dec = linalg::svd(sp.m);
  const double margin = verify::verify_pm_stat(sp.m, dec.V.leftCols(2));
  CHECK(margin >= -1e-10);
  CHECK(margin <= 1e-9);
}

TEST_CASE("pm_stat tight diagonal case matches the closed form") {
  Matrix m = Matrix::Zero(2, 2);
  m.diagonal() << 2.0, 1.0;
  Matrix n(2, 1);
  n << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  // The bound is tight in tangent: the achieved sine is sin(atan(1/2))
  // against a bound of 1/2.
  const double margin = verify::verify_pm_stat(m, n);
  CHECK(margin == doctest::Approx(0.5 - std::sin(std::atan(0.5))).epsilon(1e-12));
}

TEST_CASE("pm_stat preconditions surface as typed errors") {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 1.0;  // s_2 = 0
  Matrix n(3, 2);
  n.setRandom();
  CHECK_THROWS_AS(verify::verify_pm_stat(m, n), PreconditionViolatedError);
}

TEST_CASE("nbar construction, invertible case: span is pulled back exactly") {
  const auto sp = make_spiked(8, 3, 1.0, 0.4, 7);
  const Matrix y = sp.u.rightCols(5);
  const Matrix nbar = verify::construct_nbar(sp.m, Matrix::Zero(8, 8), y);
  CHECK((nbar.transpose() * nbar - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(linalg::projection_distance(nbar, y) <= 1e-10);
  const Matrix image = sp.m * nbar;
  const Matrix resid = image - y * (y.transpose() * image);
  CHECK(linalg::spectral_norm(resid) <= 1e-8 * linalg::spectral_norm(image));
}

TEST_CASE("nbar construction, null case: the image vanishes") {
  const double sigma2 = 0.02;
  const auto sp = make_spiked(8, 3, 1.0, sigma2, 8);
  const Matrix e = -sigma2 * Matrix::Identity(8, 8);
  const Matrix y = sp.u.rightCols(5);
  const Matrix nbar = verify::construct_nbar(sp.m, e, y);
  CHECK((nbar.transpose() * nbar - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(linalg::spectral_norm((sp.m + e) * nbar) <= 1e-10);
}

TEST_CASE("nbar construction, intermediate rank: containment within tolerance") {
  const double sigma2 = 0.02;
  const auto sp = make_spiked(10, 3, 1.0, sigma2, 9);
  const Matrix uj = sp.u.middleCols(3, 2);
  const Matrix e = -sigma2 * (uj * uj.transpose());  // rank drops to 8
  const Matrix y = sp.u.rightCols(7);
  const Matrix nbar = verify::construct_nbar(sp.m, e, y);
  CHECK((nbar.transpose() * nbar - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-10);
  const Matrix image = (sp.m + e) * nbar;
  const Matrix resid = image - y * (y.transpose() * image);
  CHECK(linalg::spectral_norm(resid) <= 1e-8 * std::max(1e-12, linalg::spectral_norm(image)));
}

TEST_CASE("lemma 1 on the exact eigenbasis instance") {
  const double eps = 0.2, eta = 0.02, sigma2 = 0.5;
  const auto sp = make_spiked(9, 3, 1.0, sigma2, 10);
  const Matrix y = sp.u.rightCols(6);
  const auto out = verify::verify_lemma1(sp.m, Matrix::Zero(9, 9), y, eps, eta);
  // nbar spans the noise eigenspace, so the overlap with the spike vanishes
  // and the full eps budget is left over.
  CHECK(out.margin_align == doctest::Approx(eps).epsilon(1e-9));
  CHECK(out.containment_residual <= 1e-10);
  const double eh = eps + eta;
  const double bound = (sigma2 + eps * 1.0 / 4.0) / std::sqrt(1.0 - eh * eh);
  CHECK(out.margin_norm == doctest::Approx(bound - sigma2).epsilon(1e-9));
}

TEST_CASE("lemma 2 tight tilt at sigma zero") {
  const double eps = 0.2, eta = 0.05, delta = 1.0;
  const int n = 8, k = 2;
  const auto sp = make_spiked(n, k, delta, 0.0, 11);
  const double eh = eps + eta;
  const double angle = std::asin(eh);
  Matrix w(n, k);
  w.col(0) = std::cos(angle) * sp.u.col(0) + std::sin(angle) * sp.u.col(k);
  w.col(1) = sp.u.col(1);
  const auto out = verify::verify_lemma2(sp.m, Matrix::Zero(n, n), w, eps, eta);
  // Smallest singular value achieves sqrt(1-(eps+eta)^2) * delta exactly, so
  // the slack equals the unused noise budget Delta.
  CHECK(out.margin_smallest == doctest::Approx(eps * delta / 4.0).epsilon(1e-9));
  // The image lies inside the spike eigenspace: distance zero, full margin.
  CHECK(out.margin_distance == doctest::Approx(eps).epsilon(1e-9));
}

TEST_CASE("davis-kahan margin matches the 2x2 eigenvector closed form") {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 2.0, 1.0;
  Matrix b = Matrix::Zero(2, 2);
  b(0, 1) = b(1, 0) = 0.1;
  const double margin = verify::verify_davis_kahan(a, b, 1);
  const double theta = 0.5 * std::atan2(2.0 * 0.1, 1.0);
  const double expected = 0.1 / (1.0 - 0.1) - std::sin(theta);
  CHECK(margin == doctest::Approx(expected).epsilon(1e-10));

  CHECK(verify::verify_davis_kahan(a, Matrix::Zero(2, 2), 1) ==
        doctest::Approx(0.0).epsilon(1e-12));
  Matrix big = Matrix::Zero(2, 2);
  big(0, 1) = big(1, 0) = 2.0;
  CHECK_THROWS_AS(verify::verify_davis_kahan(a, big, 1), PreconditionViolatedError);
}

TEST_CASE("sin-sum closed form equals the literal sum") {
  for (double gamma : {0.0, 0.01, 0.3}) {
    const double delta = 1.0, sigma = 1.0;
    const long T = 1500;
    const auto res = verify::verify_sin_sum(delta, gamma, sigma, T);
    const double s = analysis::lower_bound_s(delta, gamma, sigma, T).s;
    const double a = std::asin(std::min(1.0, 2.0 * s));
    const double d = gamma > 0.0 ? std::asin(gamma / delta) : 0.0;
    double literal = 0.0;
    for (long t = 1; t <= T; ++t) {
      const double theta = std::max(0.0, a - static_cast<double>(T - t) * d);
      literal += std::sin(theta) * std::sin(theta);
    }
    CHECK(res.sum == doctest::Approx(literal).epsilon(1e-10));
  }
}

TEST_CASE("sin-sum without drift is exactly four times the cap base") {
  const auto res = verify::verify_sin_sum(1.0, 0.0, 1.0, 100);
  CHECK(res.fitted_c == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_FALSE(res.large_t_case);
}

TEST_CASE("sin-sum tracks the integral estimate in the large-T case") {
  const double delta = 1.0, sigma = 1.0, gamma = 1e-3;
  const auto probe = verify::verify_sin_sum(delta, gamma, sigma, 100);
  const long T = static_cast<long>(5.0 * probe.case_boundary);
  const auto res = verify::verify_sin_sum(delta, gamma, sigma, T);
  REQUIRE(res.large_t_case);
  const double s = analysis::lower_bound_s(delta, gamma, sigma, T).s;
  const double a = std::asin(std::min(1.0, 2.0 * s));
  const double d = std::asin(gamma / delta);
  const double integral = (a / 2.0 - std::sin(2.0 * a) / 4.0) / d;
  CHECK(res.sum <= 2.0 * integral);
  CHECK(res.sum >= 0.5 * integral);
}

TEST_CASE("sin-sum stays below a T-independent cap across decades") {
  for (long T : {100L, 1000L, 10000L, 100000L}) {
    const auto res = verify::verify_sin_sum(1.0, 1e-5, 1.0, T);
    CHECK(res.fitted_c <= 64.0);
  }
}

TEST_CASE("randomized suites run clean at unit-test scale") {
  struct Quick {
    verify::LemmaId id;
    long trials;
  };
  for (const auto& q : {Quick{verify::LemmaId::PM_STAT, 500},
                        Quick{verify::LemmaId::LEM1, 300},
                        Quick{verify::LemmaId::LEM2, 300},
                        Quick{verify::LemmaId::DAVIS_KAHAN, 500},
                        Quick{verify::LemmaId::SIN_SUM, 30},
                        Quick{verify::LemmaId::WEYL, 300},
                        Quick{verify::LemmaId::NORM_INEQ, 300}}) {
    const auto report = verify::run_suite(q.id, q.trials, 20240811);
    INFO(verify::lemma_name(q.id));
    CHECK(report.violations == 0);
    CHECK(report.sampler_ok());
    CHECK(report.evaluated + report.rejected == q.trials);
    CHECK(report.to_json().find("worst_margin") != std::string::npos);
  }
}

TEST_CASE("suite results are deterministic in the seed") {
  const auto a = verify::run_suite(verify::LemmaId::LEM2, 100, 5);
  const auto b = verify::run_suite(verify::LemmaId::LEM2, 100, 5);
  CHECK(a.worst_margin == b.worst_margin);
  CHECK(a.evaluated == b.evaluated);
}
