#include "nspca/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "nspca/errors.hpp"

namespace nspca::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double noise_variance_scale(double delta, double sigma) {
  return sigma * sigma * (sigma * sigma + delta) / (delta * delta);
}

}  // namespace

LowerBound lower_bound_s(double delta, double gamma, double sigma, long T) {
  if (!(delta > 0.0)) throw InvalidParamsError("lower_bound_s: delta must be positive");
  if (T < 1) throw InvalidParamsError("lower_bound_s: T must be >= 1");
  if (gamma < 0.0 || gamma / delta >= 1.0)
    throw InvalidParamsError("lower_bound_s: need 0 <= gamma/delta < 1");

  const double scale = noise_variance_scale(delta, sigma);
  LowerBound out;
  out.drift_term = std::cbrt(gamma / delta) * std::cbrt(scale);
  out.sampling_term = std::sqrt(scale) / std::sqrt(static_cast<double>(T));
  out.s = out.drift_term + out.sampling_term;
  out.t_star = gamma > 0.0 ? std::pow(gamma / delta, -2.0 / 3.0) * std::cbrt(scale) : kInf;
  return out;
}

NoiseBound noise_bound(int p, double T, double B, double gamma, double C) {
  if (B < 1.0) throw InvalidParamsError("noise_bound: B must be >= 1");
  if (T < 2.0) throw InvalidParamsError("noise_bound: T must be >= 2");
  if (p < 1 || C <= 0.0) throw InvalidParamsError("noise_bound: bad p or C");
  const double cpl = C * static_cast<double>(p) * std::log(T);
  NoiseBound out;
  out.value = std::sqrt(cpl / B) + B * gamma / 2.0;
  if (gamma > 0.0) {
    out.b_star = std::cbrt(cpl / (gamma * gamma));
    out.value_at_b_star = 1.5 * std::cbrt(cpl * gamma);
  } else {
    out.b_star = kInf;
    out.value_at_b_star = 0.0;
  }
  return out;
}

double empirical_noise(const Matrix& block, const Matrix& m_true) {
  if (block.rows() != m_true.rows() || m_true.rows() != m_true.cols())
    throw ShapeMismatchError("empirical_noise: inconsistent shapes");
  const double B = static_cast<double>(block.cols());
  Matrix emp = (block * block.transpose()) / B;
  emp -= m_true;
  return linalg::sym_spectral_norm(emp);
}

BoundReport check_assumptions(double epsilon, double delta, double sigma, double gamma,
                              int p, int k, long T, double C) {
  BoundReport r;
  r.epsilon = epsilon;
  r.delta = delta;
  r.sigma = sigma;
  r.gamma = gamma;
  r.p = p;
  r.k = k;
  r.T = T;
  r.C = C;

  const double lnT = std::log(static_cast<double>(std::max<long>(T, 2)));
  r.Delta = epsilon * delta / 4.0;
  r.delta_sigma_ok = delta >= sigma * sigma / 8.0;
  r.epsilon_floor = 16.0 * std::cbrt(C * p * lnT) * std::cbrt(gamma) / delta;
  r.epsilon_window_ok = r.epsilon_floor <= epsilon && epsilon <= 0.25;

  // Block size from the iteration guarantee, capped at the noise-optimal
  // size: past that point a larger block only grows the drift term, and
  // inside the feasible epsilon window the cap is never active.
  double B = std::ceil(64.0 * C * p * lnT / (epsilon * epsilon * delta * delta));
  if (gamma > 0.0) {
    const double b_star = std::cbrt(C * p * lnT / (gamma * gamma));
    B = std::min(B, std::ceil(b_star));
  }
  r.B = static_cast<long>(std::max(1.0, B));

  r.noise_bound_at_B = noise_bound(p, static_cast<double>(std::max<long>(T, 2)),
                                   static_cast<double>(r.B), gamma, C)
                           .value;
  r.a1 = {r.noise_bound_at_B <= r.Delta, r.Delta - r.noise_bound_at_B};

  const double bg = static_cast<double>(r.B) * gamma;
  r.eta_defined = delta > bg;
  r.eta = r.eta_defined ? bg / (delta - bg) : kInf;

  const double eh = epsilon + r.eta;
  if (r.eta_defined && eh < 1.0) {
    const double shrink = std::sqrt(1.0 - eh * eh);
    r.phi = ((delta + sigma * sigma) - r.Delta / shrink) / (sigma * sigma + r.Delta) *
            (1.0 - eh * eh);
    r.a2 = {r.phi > 1.0, r.phi - 1.0};
    const double lhs = (sigma * sigma + 0.75 * delta) / (sigma * sigma + 0.25 * delta);
    const double rhs =
        eh * std::sqrt(1.0 - epsilon * epsilon) / (epsilon * shrink);
    r.a3 = {lhs >= rhs, lhs - rhs};
    r.a4 = {epsilon > r.eta / 32.0, epsilon - r.eta / 32.0};
  } else {
    r.phi = 0.0;
    r.a2 = {false, -kInf};
    r.a3 = {false, -kInf};
    r.a4 = {false, -kInf};
  }

  if (r.phi > 1.0) {
    // Iterations to contract the random-start tangent below epsilon/4. The
    // start tangent scales like sqrt(p*k) in the median with a heavy
    // 1/t tail (smallest singular value of the k-by-k overlap block); the
    // 16x allowance covers all but the ~2% worst starts.
    const double start_tangent = 16.0 * std::sqrt(static_cast<double>(p) * k);
    const double L =
        std::ceil(std::log(4.0 * start_tangent / epsilon) / std::log(r.phi));
    r.L = static_cast<int>(std::max(2.0, L));
  } else {
    r.L = 0;
  }

  if (gamma / delta < 1.0) {
    const LowerBound lb = lower_bound_s(delta, gamma, sigma, std::max<long>(T, 1));
    r.s_lower = lb.s;
    r.t_star = lb.t_star;
  } else {
    r.s_lower = std::numeric_limits<double>::quiet_NaN();
    r.t_star = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

BoundReport recommend_run(double epsilon, double delta, double sigma, double gamma,
                          int p, int k, double C, long T_initial) {
  long T = std::max<long>(T_initial, 2);
  BoundReport r;
  for (int iter = 0; iter < 64; ++iter) {
    r = check_assumptions(epsilon, delta, sigma, gamma, p, k, T, C);
    if (r.L <= 0) return r;
    const long next = r.B * static_cast<long>(r.L);
    if (next == T) break;
    T = next;
  }
  return r;
}

std::string BoundReport::to_text() const {
  std::ostringstream os;
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(6);
  os << "parameters      p=" << p << " k=" << k << " T=" << T << " delta=" << delta
     << " sigma=" << sigma << " gamma=" << gamma << " epsilon=" << epsilon
     << " C=" << C << "\n";
  os << "s_lower         " << s_lower << "   (t_star " << t_star << ")\n";
  os << "B recommended   " << B << "\n";
  os << "L recommended   " << L << "\n";
  os << "Delta           " << Delta << "\n";
  os << "eta             " << (eta_defined ? std::to_string(eta) : std::string("undefined (B*gamma >= delta)"))
     << "\n";
  os << "phi             " << phi << "\n";
  os << "noise bound(B)  " << noise_bound_at_B << "\n";
  auto line = [&os](const char* name, const AssumptionCheck& c) {
    os << name << (c.holds ? "  holds " : "  FAILS ") << "(margin " << c.margin << ")\n";
  };
  line("A.1 noise<=Delta   ", a1);
  line("A.2 phi>1          ", a2);
  line("A.3 spectral ratio ", a3);
  line("A.4 eps>eta/32     ", a4);
  os << "delta>=sigma^2/8   " << (delta_sigma_ok ? "holds" : "FAILS") << "\n";
  os << "epsilon window     " << (epsilon_window_ok ? "holds" : "FAILS")
     << " (floor " << epsilon_floor << ")\n";
  return os.str();
}

std::string BoundReport::to_json() const {
  nlohmann::json j;
  j["s_lower"] = s_lower;
  j["t_star"] = std::isfinite(t_star) ? nlohmann::json(t_star) : nlohmann::json();
  j["B"] = B;
  j["L"] = L;
  j["Delta"] = Delta;
  j["eta"] = eta_defined ? nlohmann::json(eta) : nlohmann::json();
  j["phi"] = phi;
  j["noise_bound"] = noise_bound_at_B;
  j["a1"] = a1.holds;
  j["a2"] = a2.holds;
  j["a3"] = a3.holds;
  j["a4"] = a4.holds;
  j["margins"] = {a1.margin, a2.margin, a3.margin, a4.margin};
  j["delta_sigma_ok"] = delta_sigma_ok;
  j["epsilon_window_ok"] = epsilon_window_ok;
  j["epsilon_floor"] = epsilon_floor;
  j["C"] = C;
  j["params"] = {{"p", p},         {"k", k},         {"T", T},
                 {"delta", delta}, {"sigma", sigma}, {"gamma", gamma},
                 {"epsilon", epsilon}};
  return j.dump(2);
}

double kl_paths(const model::SubspacePath& a, const model::SubspacePath& b,
                double sigma, double delta) {
  if (a.length() != b.length())
    throw InvalidParamsError("kl_paths: paths differ in length");
  if (!(sigma > 0.0)) throw InvalidParamsError("kl_paths: sigma must be positive");
  double sum_sin_sq = 0.0;
  for (long t = 0; t < a.length(); ++t) {
    const double d = linalg::projection_distance(a.factors[static_cast<std::size_t>(t)],
                                                 b.factors[static_cast<std::size_t>(t)]);
    sum_sin_sq += d * d;
  }
  return delta * delta / (sigma * sigma * (sigma * sigma + delta)) * sum_sin_sq;
}

Vector gaussian_kl_steps(const model::SubspacePath& a, const model::SubspacePath& b,
                         double sigma) {
  if (a.length() != b.length())
    throw InvalidParamsError("gaussian_kl_steps: paths differ in length");
  if (!(sigma > 0.0)) throw InvalidParamsError("gaussian_kl_steps: sigma must be positive");
  const long T = a.length();
  Vector steps(T);
  for (long t = 0; t < T; ++t) {
    const Matrix& a0 = a.factors[static_cast<std::size_t>(t)];
    const Matrix& a1 = b.factors[static_cast<std::size_t>(t)];
    const Eigen::Index p = a0.rows();
    const Matrix cov0 =
        a0 * a0.transpose() + sigma * sigma * Matrix::Identity(p, p);
    const Matrix cov1 =
        a1 * a1.transpose() + sigma * sigma * Matrix::Identity(p, p);
    const Eigen::LLT<Matrix> llt0(cov0);
    const Eigen::LLT<Matrix> llt1(cov1);
    if (llt0.info() != Eigen::Success || llt1.info() != Eigen::Success)
      throw ConvergenceFailureError("gaussian_kl_steps: covariance not PD");
    double logdet0 = 0.0, logdet1 = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      logdet0 += 2.0 * std::log(llt0.matrixL()(i, i));
      logdet1 += 2.0 * std::log(llt1.matrixL()(i, i));
    }
    const double trace = (llt1.solve(cov0)).trace();
    steps(t) = (logdet1 - logdet0) - static_cast<double>(p) + trace;
  }
  return steps;
}

}  // namespace nspca::analysis
