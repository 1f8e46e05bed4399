#pragma once

#include <cstdint>
#include <string>

#include "nspca/linalg.hpp"

namespace nspca::verify {

using linalg::Matrix;

enum class LemmaId { PM_STAT, LEM1, LEM2, DAVIS_KAHAN, SIN_SUM, WEYL, NORM_INEQ };

const char* lemma_name(LemmaId id);

// One randomized suite's outcome. A violation is an inequality that failed by
// more than the slack; rejected instances missed the statement's own
// hypotheses and were discarded. A suite that rejects almost everything is
// reported as broken (the sampler, not the statement, is then at fault).
struct LemmaReport {
  LemmaId id = LemmaId::PM_STAT;
  long requested = 0;
  long evaluated = 0;
  long rejected = 0;
  long violations = 0;
  double worst_margin = 0.0;
  double slack = 1e-8;

  bool sampler_ok() const {
    return evaluated > 0 &&
           rejected * 100 <= requested * 99;
  }
  bool passed() const { return violations == 0 && sampler_ok(); }
  std::string to_json() const;
};

// Margin (bound minus achieved value) of the multiplication-perturbation
// bound: d(U_{1:k}, M N) against the singular-value ratio product, with
// k = cols(N). Throws PreconditionViolatedError when s_k(M) or
// s_k(V_{1:k}^T N) vanish.
double verify_pm_stat(const Matrix& m, const Matrix& n);

// Orthonormal nbar with span((M+E) nbar) inside span(Y), built case by case
// from the numerical rank of M+E (invertible / rank <= k / intermediate).
Matrix construct_nbar(const Matrix& m, const Matrix& e, const Matrix& y);

struct Lemma1Outcome {
  double margin_align = 0.0;        // eps - s_1(U_{1:k}^T nbar)
  double margin_norm = 0.0;         // norm bound minus s_1((M+E) nbar)
  double containment_residual = 0.0;  // relative
};

Lemma1Outcome verify_lemma1(const Matrix& m, const Matrix& e, const Matrix& y,
                            double eps, double eta);

struct Lemma2Outcome {
  double margin_smallest = 0.0;  // s_k((M+E)W) minus its lower bound
  double margin_distance = 0.0;  // eps - d(U_{1:k}, (M+E)W)
};

Lemma2Outcome verify_lemma2(const Matrix& m, const Matrix& e, const Matrix& w,
                            double eps, double eta);

// Margin of ||P_k(A) - P_k(A+B)|| against ||B|| / (gap - ||B||). Requires the
// spectral gap of A at k to exceed ||B||; throws GapTooSmall (as
// PreconditionViolatedError) otherwise.
double verify_davis_kahan(const Matrix& a, const Matrix& b, int k);

struct SinSumResult {
  double sum = 0.0;        // sum of sin^2(theta_t)
  double cap_base = 0.0;   // sigma^2 (sigma^2 + delta) / delta^2
  double fitted_c = 0.0;   // sum / cap_base
  double case_boundary = 0.0;
  bool large_t_case = false;
};

SinSumResult verify_sin_sum(double delta, double gamma, double sigma, long T);

LemmaReport run_suite(LemmaId id, long trials, std::uint64_t seed);

}  // namespace nspca::verify
