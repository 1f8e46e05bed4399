#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nspca/linalg.hpp"
#include "nspca/model.hpp"

namespace nspca::npm {

using linalg::Matrix;

struct NpmConfig {
  int p = 0;
  int k = 0;
  long B = 0;              // block size
  int L = 0;               // number of blocks
  double epsilon = 0.1;    // target accuracy, <= 1/4 unless overridden
  std::uint64_t seed = 0;
  bool allow_large_epsilon = false;

  long stream_length() const { return B * static_cast<long>(L); }
  void validate() const;
};

struct NpmState {
  Matrix Q;                         // p-by-k, orthonormal columns
  long blocks_consumed = 0;
  int rank_recoveries = 0;          // degenerate blocks recovered from
  std::optional<double> last_error_vs_oracle;
  std::uint64_t recovery_key = 0;
};

NpmState init_iterate(int p, int k, std::uint64_t seed);

// (1/B) sum_t x_t (x_t^T q), streamed through the block in column chunks of
// O(p) width; the p-by-p covariance is never formed.
Matrix power_accumulate(const Matrix& block, const Matrix& q);

// One power iteration: accumulate, then re-orthonormalize. A rank-collapsed
// accumulator is repaired by re-seeding the dead directions with fresh
// Gaussian columns orthogonal to the surviving ones; the event is counted.
void block_update(NpmState& state, const Matrix& block);

struct RunResult {
  NpmState state;
  std::vector<double> error_trace;  // distance to the oracle subspace per block
  long samples_consumed = 0;
  long samples_dropped = 0;         // trailing samples beyond B*L
};

// Runs L block updates over fresh observations drawn along a materialized
// path. error_trace[l] measures the iterate against the top-k eigenspace of
// the covariance at the block's terminal sample index.
RunResult run_npm(const model::SpikedParams& params, const NpmConfig& config,
                  const model::SubspacePath& path);

// Same algorithm with the path generated on the fly; memory stays O(p*k)
// regardless of the stream length.
RunResult run_npm_streaming(const model::SpikedParams& params, const NpmConfig& config);

// Top-k eigenspace of a symmetric PSD matrix (batch baseline).
Matrix oracle_subspace(const Matrix& m, int k);

// Batch PCA of one window: top-k eigenspace of (1/B) * window * window^T.
Matrix sliding_window_baseline(const Matrix& window, int k);

}  // namespace nspca::npm
