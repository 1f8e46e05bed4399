#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "nspca/linalg.hpp"
#include "nspca/rng.hpp"

namespace nspca::model {

using linalg::Matrix;
using linalg::Vector;

struct SpikedParams {
  int p = 0;                // ambient dimension
  int k = 0;                // latent rank, 1 <= k < p
  double delta = 1.0;       // spike energy, s_k(A A^T) >= delta
  double sigma = 1.0;       // isotropic noise std
  double gamma = 0.0;       // per-step drift bound on A_t A_t^T
  std::uint64_t seed = 0;

  void validate() const;    // throws InvalidParamsError
};

// A realized sequence {A_t} of p-by-k factors together with the exact maximal
// one-step drift of A_t A_t^T actually incurred.
struct SubspacePath {
  std::vector<Matrix> factors;
  double gamma_certified = 0.0;

  long length() const { return static_cast<long>(factors.size()); }
};

// Incremental generator of a slowly rotating sqrt(delta)-scaled orthonormal
// frame. Each step applies a Givens rotation of angle asin(min(1,gamma/delta))
// in the plane of one random in-subspace direction and one random direction
// from the orthogonal complement; the induced covariance drift is exactly
// delta*sin(angle) per step. Used both to materialize SubspacePath objects
// and to stream arbitrarily long paths in O(p*k) memory.
class FrameWalker {
 public:
  FrameWalker(const SpikedParams& params, std::uint64_t init_key, std::uint64_t plane_key);
  FrameWalker(Matrix frame, const SpikedParams& params, std::uint64_t plane_key);

  void step();

  const Matrix& frame() const { return frame_; }         // orthonormal p-by-k
  Matrix factor() const { return std::sqrt(params_.delta) * frame_; }
  double step_drift() const;                             // exact, per step
  long steps_taken() const { return steps_; }

 private:
  void reorthonormalize();

  SpikedParams params_;
  Matrix frame_;
  double phi_step_ = 0.0;
  rng::Stream plane_stream_;
  long steps_ = 0;
  Vector dir_in_, dir_out_, coeffs_;  // scratch
};

SubspacePath generate_rotating_path(const SpikedParams& params, long T);

// Maximal one-step covariance drift over the path, evaluated densely.
double drift_check(const SubspacePath& path);

// Smallest s_k(A_t A_t^T) over the path, evaluated densely.
double min_spike_energy(const SubspacePath& path, int k);

// The two-hypothesis construction behind the minimax bound: a fixed
// coordinate-aligned path and a second path whose last column tilts from
// coordinate k into coordinate k+1 by angles theta_t that close linearly
// toward the final separation asin(2s).
struct HypothesisPair {
  SubspacePath h0;
  SubspacePath h1;
  Vector theta;          // length T
  double s = 0.0;        // target terminal separation scale
  bool theta_clamped = false;  // 2s exceeded 1, terminal angle clamped to pi/2
};

HypothesisPair hypothesis_pair(double delta, double gamma, double sigma, long T,
                               int p = 2, int k = 1);

// One block of observations x_t = A_t z_t + sigma w_t as a p-by-B matrix.
// `segment` holds either one factor (stationary reuse) or exactly B factors.
Matrix sample_block(const std::vector<Matrix>& segment, double sigma, long B,
                    rng::Stream& stream);

// Streams observations chunk by chunk without materializing the path.
class BlockSampler {
 public:
  BlockSampler(const SpikedParams& params, std::uint64_t run_key);

  // Fills x (p-by-c) with the next c observations; the walker ends on the
  // frame of the last sample drawn.
  void next_chunk(Eigen::Ref<Matrix> x);

  const FrameWalker& walker() const { return walker_; }
  long samples_drawn() const { return samples_; }

 private:
  SpikedParams params_;
  FrameWalker walker_;
  rng::Stream latent_stream_, noise_stream_;
  long samples_ = 0;
  Matrix z_, w_;  // scratch
};

// Path file round-trip; the schema is documented in the README.
void save_path(std::ostream& os, const SubspacePath& path, const SpikedParams& params);
std::pair<SubspacePath, SpikedParams> load_path(std::istream& is);

}  // namespace nspca::model
