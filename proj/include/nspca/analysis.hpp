#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nspca/linalg.hpp"
#include "nspca/model.hpp"

namespace nspca::analysis {

using linalg::Matrix;
using linalg::Vector;

// Minimax recovery-error scale: a drift term that is independent of the
// stream length plus a sampling term decaying as 1/sqrt(T). t_star marks the
// crossover where the drift term takes over and more samples stop helping.
struct LowerBound {
  double s = 0.0;
  double drift_term = 0.0;
  double sampling_term = 0.0;
  double t_star = 0.0;  // +inf when gamma == 0
};

LowerBound lower_bound_s(double delta, double gamma, double sigma, long T);

// Upper bound on the spectral norm of the per-block covariance error:
// sqrt(C p log(T) / B) + B gamma / 2, with the block size that minimizes it.
struct NoiseBound {
  double value = 0.0;
  double b_star = 0.0;        // +inf when gamma == 0
  double value_at_b_star = 0.0;
};

NoiseBound noise_bound(int p, double T, double B, double gamma, double C);

// || (1/B) sum x x^T - M_true ||_2, dense evaluation (p-by-p allowed here).
double empirical_noise(const Matrix& block, const Matrix& m_true);

struct AssumptionCheck {
  bool holds = false;
  double margin = 0.0;  // positive means satisfied with room
};

// Everything the iteration guarantee needs, evaluated as plain arithmetic.
// Failures are data: nothing here throws on an infeasible configuration.
struct BoundReport {
  double s_lower = 0.0;
  double t_star = 0.0;
  long B = 0;            // recommended block size
  int L = 0;             // recommended iteration count (0 when infeasible)
  double Delta = 0.0;    // per-block noise budget, (epsilon/4) delta
  double eta = 0.0;      // per-block subspace motion, B gamma / (delta - B gamma)
  bool eta_defined = true;
  double phi = 0.0;      // per-iteration contraction factor, want > 1
  double noise_bound_at_B = 0.0;
  AssumptionCheck a1, a2, a3, a4;
  bool delta_sigma_ok = true;    // delta >= sigma^2 / 8
  bool epsilon_window_ok = true; // epsilon_floor <= epsilon <= 1/4
  double epsilon_floor = 0.0;
  double C = 1.0;
  double epsilon = 0.0;
  double delta = 0.0, sigma = 0.0, gamma = 0.0;
  int p = 0, k = 0;
  long T = 0;

  bool all_assumptions_hold() const {
    return a1.holds && a2.holds && a3.holds && a4.holds && eta_defined;
  }
  std::string to_text() const;
  std::string to_json() const;
};

BoundReport check_assumptions(double epsilon, double delta, double sigma, double gamma,
                              int p, int k, long T, double C);

// Fixpoint of T = B(T) * L(T): resolves the circularity between the stream
// length fed to the block-size formula and the stream the run will consume.
BoundReport recommend_run(double epsilon, double delta, double sigma, double gamma,
                          int p, int k, double C, long T_initial = 1000000);

// Closed-form divergence between the observation sequences of a hypothesis
// pair: delta^2 / (sigma^2 (sigma^2 + delta)) * sum_t sin^2(theta_t), with
// the angles read off the realized paths.
double kl_paths(const model::SubspacePath& a, const model::SubspacePath& b,
                double sigma, double delta);

// Generic log-det + trace divergence per step between the zero-mean Gaussians
// with covariances A_t A_t^T + sigma^2 I. Independent evaluation route used to
// cross-validate kl_paths.
Vector gaussian_kl_steps(const model::SubspacePath& a, const model::SubspacePath& b,
                         double sigma);

}  // namespace nspca::analysis
