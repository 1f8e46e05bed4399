#include "nspca/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "nspca/analysis.hpp"
#include "nspca/errors.hpp"

namespace nspca::model {

namespace {

constexpr long kReorthPeriod = 4096;

void append_double(std::string& line, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  line.append(buf, ptr);
}

}  // namespace

void SpikedParams::validate() const {
  if (k < 1 || k >= p) throw InvalidParamsError("SpikedParams: need 1 <= k < p");
  if (!(delta > 0.0)) throw InvalidParamsError("SpikedParams: delta must be positive");
  if (!(sigma >= 0.0)) throw InvalidParamsError("SpikedParams: sigma must be nonnegative");
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw InvalidParamsError("SpikedParams: gamma must lie in [0, 1)");
  if (gamma > 0.0 && gamma / delta >= 1.0)
    throw InvalidParamsError("SpikedParams: gamma/delta must be < 1");
}

FrameWalker::FrameWalker(const SpikedParams& params, std::uint64_t init_key,
                         std::uint64_t plane_key)
    : params_(params), plane_stream_(plane_key) {
  params_.validate();
  rng::Stream init(init_key);
  Matrix g(params.p, params.k);
  init.fill_gaussian(g);
  frame_ = linalg::orthonormal_basis(g);
  phi_step_ = params.gamma > 0.0 ? std::asin(std::min(1.0, params.gamma / params.delta)) : 0.0;
}

FrameWalker::FrameWalker(Matrix frame, const SpikedParams& params, std::uint64_t plane_key)
    : params_(params), frame_(std::move(frame)), plane_stream_(plane_key) {
  params_.validate();
  if (frame_.rows() != params.p || frame_.cols() != params.k)
    throw ShapeMismatchError("FrameWalker: frame shape does not match params");
  phi_step_ = params.gamma > 0.0 ? std::asin(std::min(1.0, params.gamma / params.delta)) : 0.0;
}

double FrameWalker::step_drift() const {
  return params_.delta * std::sin(phi_step_);
}

void FrameWalker::step() {
  ++steps_;
  if (phi_step_ == 0.0) return;

  const int p = params_.p;
  const int k = params_.k;
  coeffs_.resize(k);
  plane_stream_.fill_gaussian(coeffs_.data(), k);
  coeffs_ /= coeffs_.norm();

  dir_in_.noalias() = frame_ * coeffs_;

  // A complement direction; resample on the (measure-zero) degenerate draw.
  dir_out_.resize(p);
  for (;;) {
    plane_stream_.fill_gaussian(dir_out_.data(), p);
    dir_out_.noalias() -= frame_ * (frame_.transpose() * dir_out_);
    const double nrm = dir_out_.norm();
    if (nrm > 1e-12 * std::sqrt(static_cast<double>(p))) {
      dir_out_ /= nrm;
      break;
    }
  }

  const double c = std::cos(phi_step_);
  const double s = std::sin(phi_step_);
  frame_.noalias() += ((c - 1.0) * dir_in_ + s * dir_out_) * coeffs_.transpose();

  if (steps_ % kReorthPeriod == 0) reorthonormalize();
}

void FrameWalker::reorthonormalize() {
  Eigen::HouseholderQR<Matrix> qr(frame_);
  Matrix q = qr.householderQ() * Matrix::Identity(params_.p, params_.k);
  // Keep column orientation stable across the cleanup.
  Matrix r = qr.matrixQR().topRows(params_.k).triangularView<Eigen::Upper>();
  for (int j = 0; j < params_.k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  frame_ = std::move(q);
}

SubspacePath generate_rotating_path(const SpikedParams& params, long T) {
  params.validate();
  if (T < 1) throw InvalidParamsError("generate_rotating_path: T must be >= 1");
  FrameWalker walker(params,
                     rng::derive(params.seed, {rng::kTagPathInit}),
                     rng::derive(params.seed, {rng::kTagPathPlane}));
  SubspacePath path;
  path.factors.reserve(static_cast<std::size_t>(T));
  path.factors.push_back(walker.factor());
  for (long t = 1; t < T; ++t) {
    walker.step();
    path.factors.push_back(walker.factor());
  }
  path.gamma_certified = (T > 1) ? walker.step_drift() : 0.0;
  if (path.gamma_certified > params.gamma + 1e-10)
    throw InvalidParamsError("generate_rotating_path: drift certificate exceeded gamma");
  return path;
}

double drift_check(const SubspacePath& path) {
  double worst = 0.0;
  for (std::size_t t = 1; t < path.factors.size(); ++t) {
    const Matrix& a = path.factors[t - 1];
    const Matrix& b = path.factors[t];
    const Matrix diff = b * b.transpose() - a * a.transpose();
    worst = std::max(worst, linalg::sym_spectral_norm(diff));
  }
  return worst;
}

double min_spike_energy(const SubspacePath& path, int k) {
  double lo = std::numeric_limits<double>::infinity();
  for (const Matrix& a : path.factors) {
    const Vector s = linalg::singular_values(a);
    if (s.size() < static_cast<Eigen::Index>(k))
      throw IndexOutOfRangeError("min_spike_energy: k exceeds factor rank");
    lo = std::min(lo, s(k - 1) * s(k - 1));
  }
  return lo;
}

HypothesisPair hypothesis_pair(double delta, double gamma, double sigma, long T, int p, int k) {
  if (T < 1) throw InvalidParamsError("hypothesis_pair: T must be >= 1");
  if (k < 1 || p < k + 1)
    throw InvalidParamsError("hypothesis_pair: need p >= k + 1");
  if (!(delta > 0.0)) throw InvalidParamsError("hypothesis_pair: delta must be positive");
  if (gamma < 0.0 || (gamma > 0.0 && gamma / delta >= 1.0))
    throw InvalidParamsError("hypothesis_pair: gamma/delta must be < 1");

  HypothesisPair out;
  out.s = analysis::lower_bound_s(delta, gamma, sigma, T).s;

  const double two_s = 2.0 * out.s;
  out.theta_clamped = two_s > 1.0;
  const double angle_final = std::asin(std::min(1.0, two_s));
  const double angle_step = gamma > 0.0 ? std::asin(gamma / delta) : 0.0;

  const double root = std::sqrt(delta);
  Matrix base = Matrix::Zero(p, k);
  for (int j = 0; j < k; ++j) base(j, j) = root;

  out.theta.resize(T);
  out.h0.factors.assign(static_cast<std::size_t>(T), base);
  out.h0.gamma_certified = 0.0;
  out.h1.factors.reserve(static_cast<std::size_t>(T));
  double prev_theta = 0.0;
  double worst_drift = 0.0;
  for (long t = 1; t <= T; ++t) {
    const double theta =
        std::max(0.0, angle_final - static_cast<double>(T - t) * angle_step);
    out.theta(t - 1) = theta;
    Matrix a = base;
    a(k - 1, k - 1) = root * std::cos(theta);
    a(k, k - 1) = root * std::sin(theta);
    out.h1.factors.push_back(std::move(a));
    if (t > 1) worst_drift = std::max(worst_drift, delta * std::abs(std::sin(theta - prev_theta)));
    prev_theta = theta;
  }
  out.h1.gamma_certified = worst_drift;

  // The construction promises membership in the drift class, one-step drift
  // within gamma, and a cross-hypothesis gap of delta*sin(theta_t); verify all
  // three densely before handing the pair out.
  if (drift_check(out.h1) > gamma + 1e-10)
    throw ConstructionFailedError("hypothesis_pair: drift bound violated");
  for (long t = 0; t < T; ++t) {
    const Matrix& a0 = out.h0.factors[static_cast<std::size_t>(t)];
    const Matrix& a1 = out.h1.factors[static_cast<std::size_t>(t)];
    const double gap = linalg::sym_spectral_norm(a1 * a1.transpose() - a0 * a0.transpose());
    if (gap > delta * std::abs(std::sin(out.theta(t))) + 1e-10)
      throw ConstructionFailedError("hypothesis_pair: cross-hypothesis gap violated");
  }
  if (min_spike_energy(out.h1, k) < delta - 1e-10)
    throw ConstructionFailedError("hypothesis_pair: spike energy dropped below delta");
  return out;
}

Matrix sample_block(const std::vector<Matrix>& segment, double sigma, long B,
                    rng::Stream& stream) {
  if (segment.empty()) throw InvalidParamsError("sample_block: empty segment");
  const bool stationary = segment.size() == 1;
  if (!stationary && static_cast<long>(segment.size()) != B)
    throw ShapeMismatchError("sample_block: segment length must be 1 or B");
  const Eigen::Index p = segment.front().rows();
  const Eigen::Index k = segment.front().cols();

  Matrix z(k, B), w(p, B);
  stream.fill_gaussian(z);
  stream.fill_gaussian(w);

  Matrix x(p, B);
  if (stationary) {
    x.noalias() = segment.front() * z;
  } else {
    for (long t = 0; t < B; ++t) {
      const Matrix& a = segment[static_cast<std::size_t>(t)];
      if (a.rows() != p || a.cols() != k)
        throw ShapeMismatchError("sample_block: ragged segment");
      x.col(t).noalias() = a * z.col(t);
    }
  }
  if (sigma > 0.0) x.noalias() += sigma * w;
  return x;
}

BlockSampler::BlockSampler(const SpikedParams& params, std::uint64_t run_key)
    : params_(params),
      walker_(params, rng::derive(run_key, {rng::kTagPathInit}),
              rng::derive(run_key, {rng::kTagPathPlane})),
      latent_stream_(rng::derive(run_key, {rng::kTagSampleLatent})),
      noise_stream_(rng::derive(run_key, {rng::kTagSampleNoise})) {}

void BlockSampler::next_chunk(Eigen::Ref<Matrix> x) {
  const Eigen::Index c = x.cols();
  const int p = params_.p;
  const int k = params_.k;
  z_.resize(k, c);
  latent_stream_.fill_gaussian(z_);

  x.setZero();
  if (params_.sigma > 0.0) {
    w_.resize(p, c);
    noise_stream_.fill_gaussian(w_);
    x = params_.sigma * w_;
  }

  const double root = std::sqrt(params_.delta);
  if (params_.gamma == 0.0) {
    // Stationary: one dense product for the whole chunk.
    x.noalias() += root * (walker_.frame() * z_);
    samples_ += c;
    return;
  }
  for (Eigen::Index t = 0; t < c; ++t) {
    if (samples_ > 0) walker_.step();
    x.col(t).noalias() += root * (walker_.frame() * z_.col(t));
    ++samples_;
  }
}

void save_path(std::ostream& os, const SubspacePath& path, const SpikedParams& params) {
  std::string line = "p,k,T,delta,gamma,sigma,seed,gamma_certified\n";
  os << line;
  line.clear();
  line += std::to_string(params.p);
  line += ',';
  line += std::to_string(params.k);
  line += ',';
  line += std::to_string(path.length());
  line += ',';
  append_double(line, params.delta);
  line += ',';
  append_double(line, params.gamma);
  line += ',';
  append_double(line, params.sigma);
  line += ',';
  line += std::to_string(params.seed);
  line += ',';
  append_double(line, path.gamma_certified);
  line += '\n';
  os << line;
  for (const Matrix& a : path.factors) {
    line.clear();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (i != 0 || j != 0) line += ',';
        append_double(line, a(i, j));
      }
    line += '\n';
    os << line;
  }
}

std::pair<SubspacePath, SpikedParams> load_path(std::istream& is) {
  std::string header, meta;
  if (!std::getline(is, header) || !std::getline(is, meta))
    throw InvalidParamsError("load_path: truncated header");
  std::stringstream ms(meta);
  std::string tok;
  std::vector<std::string> fields;
  while (std::getline(ms, tok, ',')) fields.push_back(tok);
  if (fields.size() != 8) throw InvalidParamsError("load_path: malformed metadata row");

  SpikedParams params;
  params.p = std::stoi(fields[0]);
  params.k = std::stoi(fields[1]);
  const long T = std::stol(fields[2]);
  params.delta = std::stod(fields[3]);
  params.gamma = std::stod(fields[4]);
  params.sigma = std::stod(fields[5]);
  params.seed = std::stoull(fields[6]);

  SubspacePath path;
  path.gamma_certified = std::stod(fields[7]);
  path.factors.reserve(static_cast<std::size_t>(T));
  std::string row;
  for (long t = 0; t < T; ++t) {
    if (!std::getline(is, row)) throw InvalidParamsError("load_path: truncated factors");
    std::stringstream rs(row);
    Matrix a(params.p, params.k);
    for (Eigen::Index i = 0; i < params.p; ++i)
      for (Eigen::Index j = 0; j < params.k; ++j) {
        if (!std::getline(rs, tok, ','))
          throw InvalidParamsError("load_path: short factor row");
        a(i, j) = std::stod(tok);
      }
    path.factors.push_back(std::move(a));
  }
  return {std::move(path), params};
}

}  // namespace nspca::model
