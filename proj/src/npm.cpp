#include "nspca/npm.hpp"

#include <algorithm>
#include <cmath>

#include "nspca/errors.hpp"
#include "nspca/rng.hpp"

namespace nspca::npm {

namespace {

Eigen::Index chunk_width(int p) {
  return std::clamp<Eigen::Index>(8L * p, 64L, 2048L);
}

// Rebuild a full-rank orthonormal iterate from a rank-collapsed accumulator.
Matrix revive_iterate(const Matrix& accum, NpmState& state) {
  const linalg::Svd dec = linalg::svd(accum);
  const double tol = linalg::rank_tolerance(dec.D.size() > 0 ? dec.D(0) : 0.0,
                                            accum.rows(), accum.cols());
  Eigen::Index r = 0;
  while (r < dec.D.size() && dec.D(r) > tol && dec.D(r) > 0.0) ++r;
  Matrix combined(accum.rows(), accum.cols());
  if (r > 0) combined.leftCols(r) = dec.U.leftCols(r);
  rng::Stream fresh(rng::derive(state.recovery_key,
                                {rng::kTagIterateInit,
                                 static_cast<std::uint64_t>(state.blocks_consumed),
                                 static_cast<std::uint64_t>(state.rank_recoveries)}));
  Matrix g(accum.rows(), accum.cols() - r);
  fresh.fill_gaussian(g);
  if (r > 0) g.noalias() -= combined.leftCols(r) * (combined.leftCols(r).transpose() * g);
  combined.rightCols(accum.cols() - r) = g;
  ++state.rank_recoveries;
  return linalg::orthonormal_basis(combined);
}

}  // namespace

void NpmConfig::validate() const {
  if (k < 1 || k >= p) throw InvalidParamsError("NpmConfig: need 1 <= k < p");
  if (B < 1) throw InvalidParamsError("NpmConfig: B must be >= 1");
  if (L < 1) throw InvalidParamsError("NpmConfig: L must be >= 1");
  if (!(epsilon > 0.0)) throw InvalidParamsError("NpmConfig: epsilon must be positive");
  if (epsilon > 0.25 && !allow_large_epsilon)
    throw InvalidParamsError("NpmConfig: epsilon > 1/4 requires the override flag");
}

NpmState init_iterate(int p, int k, std::uint64_t seed) {
  if (k < 1 || k >= p) throw InvalidParamsError("init_iterate: need 1 <= k < p");
  NpmState state;
  state.recovery_key = rng::derive(seed, {rng::kTagIterateInit, 0xFEEDull});
  rng::Stream stream(rng::derive(seed, {rng::kTagIterateInit}));
  Matrix g(p, k);
  stream.fill_gaussian(g);
  state.Q = linalg::orthonormal_basis(g);
  return state;
}

Matrix power_accumulate(const Matrix& block, const Matrix& q) {
  if (block.rows() != q.rows())
    throw ShapeMismatchError("power_accumulate: block/iterate rows differ");
  const Eigen::Index p = block.rows();
  const Eigen::Index big_b = block.cols();
  const Eigen::Index cw = chunk_width(static_cast<int>(p));
  Matrix accum = Matrix::Zero(p, q.cols());
  Matrix s;  // chunk-by-k scratch, O(p*k)
  for (Eigen::Index start = 0; start < big_b; start += cw) {
    const Eigen::Index c = std::min(cw, big_b - start);
    const auto x = block.middleCols(start, c);
    s.noalias() = x.transpose() * q;
    accum.noalias() += x * s;
  }
  return accum / static_cast<double>(big_b);
}

void block_update(NpmState& state, const Matrix& block) {
  const Matrix accum = power_accumulate(block, state.Q);
  try {
    state.Q = linalg::orthonormal_basis(accum);
  } catch (const RankDeficientError&) {
    state.Q = revive_iterate(accum, state);
  }
  ++state.blocks_consumed;
}

RunResult run_npm(const model::SpikedParams& params, const NpmConfig& config,
                  const model::SubspacePath& path) {
  params.validate();
  config.validate();
  if (params.p != config.p || params.k != config.k)
    throw InvalidParamsError("run_npm: params/config dimensions differ");
  if (path.length() < config.stream_length())
    throw InvalidParamsError("run_npm: path shorter than B*L");

  RunResult out;
  out.state = init_iterate(config.p, config.k, config.seed);
  out.samples_dropped = path.length() - config.stream_length();
  rng::Stream stream(rng::derive(config.seed, {rng::kTagSampleLatent}));

  std::vector<Matrix> segment;
  for (int l = 0; l < config.L; ++l) {
    const std::size_t begin = static_cast<std::size_t>(l) * static_cast<std::size_t>(config.B);
    segment.assign(path.factors.begin() + begin,
                   path.factors.begin() + begin + static_cast<std::size_t>(config.B));
    const Matrix block = model::sample_block(segment, params.sigma, config.B, stream);
    block_update(out.state, block);
    out.samples_consumed += config.B;
    const Matrix oracle = linalg::orthonormal_basis(segment.back());
    out.error_trace.push_back(linalg::projection_distance(out.state.Q, oracle));
  }
  out.state.last_error_vs_oracle = out.error_trace.back();
  return out;
}

RunResult run_npm_streaming(const model::SpikedParams& params, const NpmConfig& config) {
  params.validate();
  config.validate();
  if (params.p != config.p || params.k != config.k)
    throw InvalidParamsError("run_npm_streaming: params/config dimensions differ");

  RunResult out;
  out.state = init_iterate(config.p, config.k, config.seed);
  model::BlockSampler sampler(params, rng::derive(params.seed, {rng::kTagTrial}));

  const Eigen::Index cw = chunk_width(config.p);
  Matrix x(config.p, cw), s;
  Matrix accum(config.p, config.k);
  for (int l = 0; l < config.L; ++l) {
    accum.setZero();
    long remaining = config.B;
    while (remaining > 0) {
      const Eigen::Index c = std::min<long>(cw, remaining);
      auto xc = x.leftCols(c);
      sampler.next_chunk(xc);
      s.noalias() = xc.transpose() * out.state.Q;
      accum.noalias() += xc * s;
      remaining -= c;
    }
    accum /= static_cast<double>(config.B);
    try {
      out.state.Q = linalg::orthonormal_basis(accum);
    } catch (const RankDeficientError&) {
      out.state.Q = revive_iterate(accum, out.state);
    }
    ++out.state.blocks_consumed;
    out.samples_consumed += config.B;
    out.error_trace.push_back(
        linalg::projection_distance(out.state.Q, sampler.walker().frame()));
  }
  out.state.last_error_vs_oracle = out.error_trace.back();
  return out;
}

Matrix oracle_subspace(const Matrix& m, int k) {
  if (m.rows() != m.cols()) throw ShapeMismatchError("oracle_subspace: not square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + m.cwiseAbs().maxCoeff()))
    throw InvalidParamsError("oracle_subspace: input is not symmetric");
  return linalg::top_eigenvectors_sym(m, k);
}

Matrix sliding_window_baseline(const Matrix& window, int k) {
  const double b = static_cast<double>(window.cols());
  const Matrix cov = (window * window.transpose()) / b;
  return linalg::top_eigenvectors_sym(cov, k);
}

}  // namespace nspca::npm
