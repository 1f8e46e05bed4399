#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nspca/analysis.hpp"
#include "nspca/model.hpp"
#include "nspca/npm.hpp"

namespace nspca::harness {

enum class BPolicy {
  kExplicit,     // B given, L = T / B
  kFromTheorem,  // B and L from check_assumptions
  kNoiseOptimal, // B = argmin of the noise bound, L = T / B
  kFullWindow,   // B = T, L = 1 (batch baseline cells)
};

const char* policy_name(BPolicy p);
std::optional<BPolicy> policy_from_name(const std::string& name);

struct SweepSpec {
  std::vector<int> p_grid{50};
  std::vector<int> k_grid{3};
  std::vector<double> delta_grid{1.0};
  std::vector<double> sigma_grid{1.0};
  std::vector<double> gamma_grid{0.0};
  std::vector<long> t_grid{100000};
  double epsilon = 0.1;
  int trials = 50;
  std::uint64_t seed = 1;
  BPolicy policy = BPolicy::kFromTheorem;
  long b_explicit = 0;
  int l_override = 0;  // 0 = derive from policy
  double C = 1.0;
  std::vector<std::string> methods{"npm", "sliding_window", "oracle"};
  int threads = 0;  // 0 = hardware concurrency

  std::string to_json() const;
  static SweepSpec from_json(const std::string& text);
};

struct TrialRecord {
  int p = 0, k = 0;
  double delta = 0.0, sigma = 0.0, gamma = 0.0;
  long T = 0, B = 0;
  int L = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;  // derived per-trial data seed
  int trial = 0;
  std::string method;
  double final_error = 0.0;
  std::string status = "ok";
  long wall_time_ms = 0;
};

extern const char* kCsvHeader;
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const TrialRecord& r);

// Runs the full grid; rows stream to `csv` (if non-null) cell by cell so a
// partial run still leaves a usable file. Deterministic for a fixed
// (spec, seed) regardless of thread count.
std::vector<TrialRecord> run_sweep(const SweepSpec& spec, std::ostream* csv);

// Batch PCA over the last `window` samples of a length-T stream; returns the
// subspace error against the terminal covariance.
double window_baseline_error(const model::SpikedParams& params, long T, long window,
                             std::uint64_t run_key);

// Stationary-only replication of the power iterate's distribution: each block
// action (1/B) X X^T Q is drawn directly as a Wishart(B, Sigma)/B sample via
// the Bartlett factorization instead of streaming B observations. Exact in
// distribution because the block Gram matrix is independent of the iterate;
// used where thousands of multi-million-sample stationary runs are needed.
npm::RunResult run_npm_stationary_wishart(const model::SpikedParams& params,
                                          const npm::NpmConfig& config);

struct NoiseFitSpec {
  std::vector<int> p_grid{10, 25, 50};
  std::vector<long> b_grid{4000, 16000};
  std::vector<double> gamma_grid{0.0};
  double delta = 1.0;
  double sigma = 1.0;
  int k = 3;
  int blocks = 25;
  std::uint64_t seed = 0x5EED;
};

struct NoiseCellFit {
  int p = 0;
  long B = 0;
  double gamma = 0.0;
  double T = 0.0;
  double max_noise = 0.0;
  double c_fit = 0.0;
  bool skipped = false;
  std::string reason;
};

struct NoiseFitResult {
  double C = 0.0;  // 99th-percentile cell fit
  std::vector<NoiseCellFit> cells;
  long skipped = 0;
};

// Calibrates the absolute constant of the noise bound from measured
// per-block covariance errors. delta == 0 with sigma == 0 cells are skipped
// (zero-variance stream).
NoiseFitResult fit_constant_C(const NoiseFitSpec& spec);

// Fraction of measured cells whose max noise stays below the bound at C.
double noise_coverage(const NoiseFitResult& fit, double C);

double median(std::vector<double> values);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace nspca::harness
