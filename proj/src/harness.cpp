#include "nspca/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include <Eigen/Dense>
#include <json.hpp>

#include "nspca/errors.hpp"
#include "nspca/rng.hpp"

namespace nspca::harness {

namespace {

using linalg::Matrix;
using linalg::Vector;

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

struct Cell {
  int p, k;
  double delta, sigma, gamma;
  long T;
};

struct ResolvedCell {
  long B = 0;
  int L = 0;
  bool ok = false;
  std::string reason;
};

ResolvedCell resolve_cell(const SweepSpec& spec, const Cell& cell) {
  ResolvedCell r;
  if (cell.k < 1 || cell.k >= cell.p) {
    r.reason = "need 1 <= k < p";
    return r;
  }
  if (cell.gamma > 0.0 && cell.gamma / cell.delta >= 1.0) {
    r.reason = "gamma/delta >= 1";
    return r;
  }
  switch (spec.policy) {
    case BPolicy::kExplicit:
      r.B = spec.b_explicit;
      break;
    case BPolicy::kFullWindow:
      r.B = cell.T;
      break;
    case BPolicy::kFromTheorem: {
      const auto rep = analysis::check_assumptions(spec.epsilon, cell.delta, cell.sigma,
                                                   cell.gamma, cell.p, cell.k, cell.T, spec.C);
      r.B = rep.B;
      if (spec.l_override <= 0 && rep.L > 0 && rep.B * static_cast<long>(rep.L) <= cell.T) {
        r.L = rep.L;
      }
      break;
    }
    case BPolicy::kNoiseOptimal: {
      if (cell.gamma <= 0.0) {
        r.reason = "noise-optimal B undefined for gamma=0";
        return r;
      }
      const auto nb = analysis::noise_bound(cell.p, static_cast<double>(std::max<long>(cell.T, 2)),
                                            1.0, cell.gamma, spec.C);
      r.B = static_cast<long>(std::ceil(nb.b_star));
      break;
    }
  }
  if (r.B < 1) {
    r.reason = "resolved block size below 1";
    return r;
  }
  if (spec.l_override > 0) r.L = spec.l_override;
  if (r.L <= 0) r.L = static_cast<int>(cell.T / r.B);
  if (r.L < 1) {
    r.reason = "stream shorter than one block";
    return r;
  }
  if (r.B * static_cast<long>(r.L) > cell.T) {
    r.reason = "B*L exceeds T";
    return r;
  }
  r.ok = true;
  return r;
}

TrialRecord base_record(const Cell& cell, const ResolvedCell& rc, const SweepSpec& spec) {
  TrialRecord rec;
  rec.p = cell.p;
  rec.k = cell.k;
  rec.delta = cell.delta;
  rec.sigma = cell.sigma;
  rec.gamma = cell.gamma;
  rec.T = cell.T;
  rec.B = rc.B;
  rec.L = rc.L;
  rec.epsilon = spec.epsilon;
  return rec;
}

// Draws one Gamma(shape, 1) variate; Marsaglia-Tsang, valid for shape >= 1.
double gamma_variate(rng::Stream& stream, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stream.next_gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.next_unit();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

const char* policy_name(BPolicy p) {
  switch (p) {
    case BPolicy::kExplicit: return "explicit";
    case BPolicy::kFromTheorem: return "from-theorem";
    case BPolicy::kNoiseOptimal: return "noise-optimal";
    case BPolicy::kFullWindow: return "full-window";
  }
  return "unknown";
}

std::optional<BPolicy> policy_from_name(const std::string& name) {
  if (name == "explicit") return BPolicy::kExplicit;
  if (name == "from-theorem") return BPolicy::kFromTheorem;
  if (name == "noise-optimal") return BPolicy::kNoiseOptimal;
  if (name == "full-window") return BPolicy::kFullWindow;
  return std::nullopt;
}

std::string SweepSpec::to_json() const {
  nlohmann::json j;
  j["p"] = p_grid;
  j["k"] = k_grid;
  j["delta"] = delta_grid;
  j["sigma"] = sigma_grid;
  j["gamma"] = gamma_grid;
  j["T"] = t_grid;
  j["epsilon"] = epsilon;
  j["trials"] = trials;
  j["seed"] = seed;
  j["policy"] = policy_name(policy);
  j["B"] = b_explicit;
  j["L"] = l_override;
  j["C"] = C;
  j["methods"] = methods;
  j["threads"] = threads;
  return j.dump(2);
}

SweepSpec SweepSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SweepSpec s;
  if (j.contains("p")) s.p_grid = j["p"].get<std::vector<int>>();
  if (j.contains("k")) s.k_grid = j["k"].get<std::vector<int>>();
  if (j.contains("delta")) s.delta_grid = j["delta"].get<std::vector<double>>();
  if (j.contains("sigma")) s.sigma_grid = j["sigma"].get<std::vector<double>>();
  if (j.contains("gamma")) s.gamma_grid = j["gamma"].get<std::vector<double>>();
  if (j.contains("T")) s.t_grid = j["T"].get<std::vector<long>>();
  if (j.contains("epsilon")) s.epsilon = j["epsilon"].get<double>();
  if (j.contains("trials")) s.trials = j["trials"].get<int>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("policy")) {
    const auto p = policy_from_name(j["policy"].get<std::string>());
    if (!p) throw InvalidParamsError("SweepSpec: unknown policy");
    s.policy = *p;
  }
  if (j.contains("B")) s.b_explicit = j["B"].get<long>();
  if (j.contains("L")) s.l_override = j["L"].get<int>();
  if (j.contains("C")) s.C = j["C"].get<double>();
  if (j.contains("methods")) s.methods = j["methods"].get<std::vector<std::string>>();
  if (j.contains("threads")) s.threads = j["threads"].get<int>();
  return s;
}

const char* kCsvHeader = "p,k,delta,sigma,gamma,T,B,L,epsilon,seed,trial,method,final_error,status,wall_time_ms";

void write_csv_header(std::ostream& os) { os << kCsvHeader << "\n"; }

void write_csv_row(std::ostream& os, const TrialRecord& r) {
  os << r.p << ',' << r.k << ',' << fmt_double(r.delta) << ',' << fmt_double(r.sigma)
     << ',' << fmt_double(r.gamma) << ',' << r.T << ',' << r.B << ',' << r.L << ','
     << fmt_double(r.epsilon) << ',' << r.seed << ',' << r.trial << ',' << r.method
     << ',' << fmt_double(r.final_error) << ',' << r.status << ',' << r.wall_time_ms
     << "\n";
}

double window_baseline_error(const model::SpikedParams& params, long T, long window,
                             std::uint64_t run_key) {
  params.validate();
  if (window < 1 || window > T)
    throw InvalidParamsError("window_baseline_error: need 1 <= window <= T");

  model::SpikedParams local = params;
  model::FrameWalker walker(local, rng::derive(run_key, {rng::kTagPathInit}),
                            rng::derive(run_key, {rng::kTagPathPlane}));
  // Only the last `window` samples feed the estimate; fast-forward the path.
  for (long t = 1; t + window <= T; ++t) walker.step();

  rng::Stream latent(rng::derive(run_key, {rng::kTagSampleLatent}));
  rng::Stream noise(rng::derive(run_key, {rng::kTagSampleNoise}));
  const int p = local.p;
  const double root = std::sqrt(local.delta);
  const Eigen::Index cw = std::clamp<Eigen::Index>(8L * p, 64L, 2048L);
  Matrix cov = Matrix::Zero(p, p);
  Matrix x(p, cw), z(local.k, cw), w(p, cw);
  long remaining = window;
  bool first = true;  // the fast-forward already sits on the first window frame
  while (remaining > 0) {
    const Eigen::Index c = std::min<long>(cw, remaining);
    latent.fill_gaussian(z.leftCols(c));
    noise.fill_gaussian(w.leftCols(c));
    for (Eigen::Index t = 0; t < c; ++t) {
      if (!first) walker.step();
      first = false;
      x.col(t).noalias() = root * (walker.frame() * z.col(t));
    }
    if (local.sigma > 0.0) x.leftCols(c).noalias() += local.sigma * w.leftCols(c);
    cov.noalias() += x.leftCols(c) * x.leftCols(c).transpose();
    remaining -= c;
  }
  cov /= static_cast<double>(window);
  const Matrix estimate = linalg::top_eigenvectors_sym(cov, local.k);
  return linalg::projection_distance(estimate, walker.frame());
}

npm::RunResult run_npm_stationary_wishart(const model::SpikedParams& params,
                                          const npm::NpmConfig& config) {
  params.validate();
  config.validate();
  if (params.gamma != 0.0)
    throw InvalidParamsError("run_npm_stationary_wishart: gamma must be 0");
  if (params.p != config.p || params.k != config.k)
    throw InvalidParamsError("run_npm_stationary_wishart: dimension mismatch");
  if (config.B < 2L * params.p)
    throw InvalidParamsError("run_npm_stationary_wishart: needs B >= 2p");

  const int p = params.p;
  const int k = params.k;
  model::FrameWalker walker(params, rng::derive(params.seed, {rng::kTagPathInit}),
                            rng::derive(params.seed, {rng::kTagPathPlane}));
  const Matrix& frame = walker.frame();
  Matrix cov = params.delta * (frame * frame.transpose());
  cov.diagonal().array() += params.sigma * params.sigma;
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ConvergenceFailureError("run_npm_stationary_wishart: covariance not PD");
  const Matrix chol = llt.matrixL();

  npm::RunResult out;
  out.state = npm::init_iterate(p, k, config.seed);
  rng::Stream stream(rng::derive(params.seed, {rng::kTagWishart, config.seed}));

  Matrix bartlett(p, p);
  for (int l = 0; l < config.L; ++l) {
    bartlett.setZero();
    for (int i = 0; i < p; ++i) {
      const double dof = static_cast<double>(config.B - i);
      bartlett(i, i) = std::sqrt(2.0 * gamma_variate(stream, dof / 2.0));
      for (int j = 0; j < i; ++j) bartlett(i, j) = stream.next_gaussian();
    }
    const Matrix root = chol * bartlett;     // (root root^T) ~ Wishart(B, cov)
    const Matrix projected = root.transpose() * out.state.Q;
    const Matrix accum = (root * projected) / static_cast<double>(config.B);
    try {
      out.state.Q = linalg::orthonormal_basis(accum);
    } catch (const RankDeficientError&) {
      throw ConvergenceFailureError("run_npm_stationary_wishart: iterate collapsed");
    }
    ++out.state.blocks_consumed;
    out.samples_consumed += config.B;
    out.error_trace.push_back(linalg::projection_distance(out.state.Q, frame));
  }
  out.state.last_error_vs_oracle = out.error_trace.back();
  return out;
}

namespace {

TrialRecord run_one_method(const Cell& cell, const ResolvedCell& rc, const SweepSpec& spec,
                           const std::string& method, int trial) {
  TrialRecord rec = base_record(cell, rc, spec);
  rec.trial = trial;
  rec.method = method;
  const std::uint64_t cell_key =
      rng::derive(spec.seed, {rng::kTagTrial, static_cast<std::uint64_t>(cell.p),
                              static_cast<std::uint64_t>(cell.k),
                              std::bit_cast<std::uint64_t>(cell.delta),
                              std::bit_cast<std::uint64_t>(cell.sigma),
                              std::bit_cast<std::uint64_t>(cell.gamma),
                              static_cast<std::uint64_t>(cell.T)});
  std::uint64_t method_tag = 0;
  for (char ch : method) method_tag = method_tag * 131 + static_cast<unsigned char>(ch);
  rec.seed = rng::derive(cell_key, {static_cast<std::uint64_t>(trial), method_tag});

  const auto started = std::chrono::steady_clock::now();
  try {
    model::SpikedParams params{cell.p, cell.k, cell.delta, cell.sigma, cell.gamma, rec.seed};
    if (method == "npm") {
      npm::NpmConfig config;
      config.p = cell.p;
      config.k = cell.k;
      config.B = rc.B;
      config.L = rc.L;
      config.epsilon = spec.epsilon;
      config.seed = rng::derive(rec.seed, {rng::kTagIterateInit});
      config.allow_large_epsilon = spec.epsilon > 0.25;
      const auto run = npm::run_npm_streaming(params, config);
      rec.final_error = run.error_trace.back();
      if (run.state.rank_recoveries > 0) rec.status = "ok-rank-recovered";
    } else if (method == "sliding_window") {
      rec.final_error = window_baseline_error(params, cell.T, rc.B, rec.seed);
    } else if (method == "oracle") {
      model::FrameWalker walker(params, rng::derive(rec.seed, {rng::kTagPathInit}),
                                rng::derive(rec.seed, {rng::kTagPathPlane}));
      for (long t = 1; t < cell.T; ++t) walker.step();
      const Matrix& frame = walker.frame();
      Matrix cov = cell.delta * (frame * frame.transpose());
      cov.diagonal().array() += cell.sigma * cell.sigma;
      rec.final_error =
          linalg::projection_distance(npm::oracle_subspace(cov, cell.k), frame);
    } else {
      rec.status = "unknown-method";
      rec.final_error = std::numeric_limits<double>::quiet_NaN();
    }
  } catch (const std::exception& e) {
    rec.status = std::string("error:") + e.what();
    rec.final_error = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - started)
                         .count();
  return rec;
}

}  // namespace

std::vector<TrialRecord> run_sweep(const SweepSpec& spec, std::ostream* csv) {
  std::vector<Cell> cells;
  for (int p : spec.p_grid)
    for (int k : spec.k_grid)
      for (double delta : spec.delta_grid)
        for (double sigma : spec.sigma_grid)
          for (double gamma : spec.gamma_grid)
            for (long T : spec.t_grid) cells.push_back({p, k, delta, sigma, gamma, T});

  if (csv != nullptr) write_csv_header(*csv);

  const int requested = spec.threads > 0
                            ? spec.threads
                            : static_cast<int>(std::thread::hardware_concurrency());
  const int workers = std::max(1, requested);

  std::vector<TrialRecord> all;
  for (const Cell& cell : cells) {
    const ResolvedCell rc = resolve_cell(spec, cell);
    if (!rc.ok) {
      TrialRecord rec = base_record(cell, rc, spec);
      rec.method = "skip";
      rec.status = std::string("skipped:") + rc.reason;
      rec.final_error = std::numeric_limits<double>::quiet_NaN();
      all.push_back(rec);
      if (csv != nullptr) {
        write_csv_row(*csv, rec);
        csv->flush();
      }
      continue;
    }

    // (trial, method) tasks land in fixed slots, so scheduling cannot change
    // the output order.
    std::vector<TrialRecord> slots(
        static_cast<std::size_t>(spec.trials) * spec.methods.size());
    std::atomic<long> next{0};
    auto work = [&] {
      for (;;) {
        const long idx = next.fetch_add(1);
        if (idx >= static_cast<long>(slots.size())) return;
        const int trial = static_cast<int>(idx / static_cast<long>(spec.methods.size()));
        const auto& method = spec.methods[static_cast<std::size_t>(idx) % spec.methods.size()];
        slots[static_cast<std::size_t>(idx)] = run_one_method(cell, rc, spec, method, trial);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    for (const TrialRecord& rec : slots) {
      all.push_back(rec);
      if (csv != nullptr) write_csv_row(*csv, rec);
    }
    if (csv != nullptr) csv->flush();
  }
  return all;
}

NoiseFitResult fit_constant_C(const NoiseFitSpec& spec) {
  NoiseFitResult result;
  for (int p : spec.p_grid) {
    for (long B : spec.b_grid) {
      for (double gamma : spec.gamma_grid) {
        NoiseCellFit cell;
        cell.p = p;
        cell.B = B;
        cell.gamma = gamma;
        cell.T = static_cast<double>(B) * spec.blocks;
        if (spec.delta == 0.0 && spec.sigma == 0.0) {
          cell.skipped = true;
          cell.reason = "zero-variance stream";
          ++result.skipped;
          result.cells.push_back(cell);
          continue;
        }
        const std::uint64_t key =
            rng::derive(spec.seed, {rng::kTagNoiseFit, static_cast<std::uint64_t>(p),
                                    static_cast<std::uint64_t>(B),
                                    std::bit_cast<std::uint64_t>(gamma)});
        double max_noise = 0.0;
        if (spec.delta > 0.0) {
          model::SpikedParams params{p, std::min(spec.k, p - 1), spec.delta,
                                     spec.sigma, gamma, key};
          model::BlockSampler sampler(params, key);
          Matrix x(p, std::clamp<Eigen::Index>(8L * p, 64L, 2048L));
          for (int l = 0; l < spec.blocks; ++l) {
            Matrix cov = Matrix::Zero(p, p);
            long remaining = B;
            while (remaining > 0) {
              const Eigen::Index c = std::min<long>(x.cols(), remaining);
              auto xc = x.leftCols(c);
              sampler.next_chunk(xc);
              cov.noalias() += xc * xc.transpose();
              remaining -= c;
            }
            cov /= static_cast<double>(B);
            const Matrix& frame = sampler.walker().frame();
            Matrix truth = params.delta * (frame * frame.transpose());
            truth.diagonal().array() += params.sigma * params.sigma;
            max_noise = std::max(max_noise, linalg::sym_spectral_norm(cov - truth));
          }
        } else {
          // Pure isotropic noise stream (delta == 0 handled without a path).
          rng::Stream stream(key);
          Matrix x(p, 1024);
          Matrix truth = spec.sigma * spec.sigma * Matrix::Identity(p, p);
          for (int l = 0; l < spec.blocks; ++l) {
            Matrix cov = Matrix::Zero(p, p);
            long remaining = B;
            while (remaining > 0) {
              const Eigen::Index c = std::min<long>(x.cols(), remaining);
              stream.fill_gaussian(x.leftCols(c));
              cov.noalias() +=
                  (spec.sigma * spec.sigma) * (x.leftCols(c) * x.leftCols(c).transpose());
              remaining -= c;
            }
            cov /= static_cast<double>(B);
            max_noise = std::max(max_noise, linalg::sym_spectral_norm(cov - truth));
          }
        }
        cell.max_noise = max_noise;
        const double reduced = std::max(0.0, max_noise - static_cast<double>(B) * gamma / 2.0);
        cell.c_fit = reduced * reduced * static_cast<double>(B) /
                     (static_cast<double>(p) * std::log(std::max(cell.T, 2.0)));
        result.cells.push_back(cell);
      }
    }
  }

  std::vector<double> fits;
  for (const auto& cell : result.cells)
    if (!cell.skipped) fits.push_back(cell.c_fit);
  if (fits.empty()) {
    result.C = 0.0;
    return result;
  }
  std::sort(fits.begin(), fits.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.99 * static_cast<double>(fits.size()))) - 1;
  result.C = fits[std::min(idx, fits.size() - 1)];
  return result;
}

double noise_coverage(const NoiseFitResult& fit, double C) {
  long total = 0, covered = 0;
  for (const auto& cell : fit.cells) {
    if (cell.skipped) continue;
    ++total;
    // max_noise <= sqrt(C p log T / B) + B gamma / 2 is equivalent to
    // c_fit <= C; comparing the fits avoids re-rounding the bound, which
    // matters at the cell that defined C (algebraic equality there).
    if (cell.c_fit <= C * (1.0 + 1e-12)) ++covered;
  }
  return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidParamsError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidParamsError("loglog_slope: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace nspca::harness
