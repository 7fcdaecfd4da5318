#include "seqlab/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "seqlab/ad.hpp"

namespace seqlab::oracle {

double finite_diff_max_rel_err(const std::function<double(const Vec&)>& f, const Vec& x0,
                               const Vec& analytic, double eps) {
  if (x0.size() != analytic.size())
    throw std::invalid_argument("finite_diff_max_rel_err: size mismatch");
  double worst = 0.0;
  Vec x = x0;
  for (int i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + eps;
    double fp = f(x);
    x(i) = x0(i) - eps;
    double fm = f(x);
    x(i) = x0(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_max_rel_err: non-finite function value");
    double numeric = (fp - fm) / (2.0 * eps);
    double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic(i)) / denom);
  }
  return worst;
}

double quadrature_norm(const dist::GaussianMixtureParams& head, double lo, double hi,
                       int n) {
  if (n < 2 || hi <= lo) throw std::invalid_argument("quadrature_norm: bad grid");
  double edge = std::max(std::exp(dist::gmm_logpdf(head, lo)),
                         std::exp(dist::gmm_logpdf(head, hi)));
  if (edge > 1e-4)
    throw std::invalid_argument("quadrature_norm: grid too narrow (edge mass)");
  double h = (hi - lo) / (n - 1);
  long double acc = 0.0L;
  for (int i = 0; i < n; ++i) {
    long double v = std::exp(dist::gmm_logpdf(head, lo + i * h));
    acc += (i == 0 || i == n - 1) ? 0.5L * v : v;
  }
  return static_cast<double>(acc * h);
}

// ---------------------------------------------------------------------------
// enumerable surrogate

namespace {

constexpr long double kLog2PiL = 1.837877066409345483560659472811L;

long double log_normal_l(long double x, long double mean, long double log_scale) {
  long double d = x - mean;
  return -0.5L * kLog2PiL - log_scale - 0.5L * d * d * std::exp(-2.0L * log_scale);
}

std::vector<int> path_of(long p, int T, int G) {
  std::vector<int> path(T);
  for (int t = 0; t < T; ++t) {
    path[t] = static_cast<int>(p % G);
    p /= G;
  }
  return path;
}

void normalize_log(std::vector<double>& lw) {
  double m = lw[0];
  for (double v : lw) m = std::max(m, v);
  long double s = 0.0L;
  for (double v : lw) s += std::exp((long double)v - m);
  double lse = m + static_cast<double>(std::log(s));
  for (double& v : lw) v -= lse;
}

}  // namespace

long SurrogateModel::num_paths() const {
  long n = 1;
  for (int t = 0; t < T; ++t) n *= G;
  return n;
}

long double SurrogateModel::log_joint(const Vec& x, const std::vector<int>& path) const {
  long double lp = log_prior[path[0]];
  for (int t = 1; t < T; ++t) lp += log_trans[path[t - 1]][path[t]];
  for (int t = 0; t < T; ++t)
    lp += log_normal_l(x(t), emit_mean(t, path[t]), emit_logs(t, path[t]));
  return lp;
}

SurrogateModel random_surrogate(int T, int G, std::uint64_t seed) {
  if (T < 1 || T > 4 || G < 1 || G > 8)
    throw std::invalid_argument("random_surrogate: require 1 <= T <= 4, 1 <= G <= 8");
  SurrogateModel s;
  s.T = T;
  s.G = G;
  ad::Rng rng(seed);
  for (int g = 0; g < G; ++g) s.grid.push_back(-2.0 + 4.0 * g / std::max(1, G - 1));
  s.log_prior.resize(G);
  for (auto& v : s.log_prior) v = rng.uniform(-1.0, 1.0);
  normalize_log(s.log_prior);
  s.log_trans.assign(G, std::vector<double>(G));
  for (auto& row : s.log_trans) {
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
    normalize_log(row);
  }
  s.emit_mean.resize(T, G);
  s.emit_logs.resize(T, G);
  for (int t = 0; t < T; ++t)
    for (int g = 0; g < G; ++g) {
      s.emit_mean(t, g) = s.grid[g] + rng.uniform(-0.5, 0.5);
      s.emit_logs(t, g) = rng.uniform(-0.5, 0.5);
    }
  return s;
}

Vec random_surrogate_obs(const SurrogateModel& s, std::uint64_t seed) {
  ad::Rng rng(seed);
  Vec x(s.T);
  for (int t = 0; t < s.T; ++t) x(t) = rng.uniform(-2.5, 2.5);
  return x;
}

double enumerate_exact_loglik(const SurrogateModel& s, const Vec& x) {
  long n = s.num_paths();
  if (n > 4096) throw std::invalid_argument("enumerate_exact_loglik: state space too large");
  std::vector<long double> lj(n);
  long double m = -1e300L;
  for (long p = 0; p < n; ++p) {
    lj[p] = s.log_joint(x, path_of(p, s.T, s.G));
    m = std::max(m, lj[p]);
  }
  long double acc = 0.0L;
  for (long p = 0; p < n; ++p) acc += std::exp(lj[p] - m);
  return static_cast<double>(m + std::log(acc));
}

double surrogate_elbo(const SurrogateModel& s, const Vec& x,
                      const std::vector<double>& q_path) {
  long n = s.num_paths();
  if (static_cast<long>(q_path.size()) != n)
    throw std::invalid_argument("surrogate_elbo: q size mismatch");
  long double acc = 0.0L;
  for (long p = 0; p < n; ++p) {
    long double q = q_path[p];
    if (q <= 0.0L) continue;
    acc += q * (s.log_joint(x, path_of(p, s.T, s.G)) - std::log(q));
  }
  return static_cast<double>(acc);
}

std::vector<double> random_path_posterior(const SurrogateModel& s, std::uint64_t seed) {
  ad::Rng rng(seed);
  long n = s.num_paths();
  std::vector<double> q(n);
  long double z = 0.0L;
  for (long p = 0; p < n; ++p) {
    q[p] = std::exp(rng.uniform(-2.0, 2.0));
    z += q[p];
  }
  for (auto& v : q) v = static_cast<double>(v / z);
  return q;
}

std::vector<double> true_path_posterior(const SurrogateModel& s, const Vec& x) {
  long n = s.num_paths();
  std::vector<long double> lj(n);
  long double m = -1e300L;
  for (long p = 0; p < n; ++p) {
    lj[p] = s.log_joint(x, path_of(p, s.T, s.G));
    m = std::max(m, lj[p]);
  }
  long double z = 0.0L;
  for (long p = 0; p < n; ++p) z += std::exp(lj[p] - m);
  std::vector<double> q(n);
  for (long p = 0; p < n; ++p) q[p] = static_cast<double>(std::exp(lj[p] - m) / z);
  return q;
}

std::vector<Prop1Row> prop1_convergence(const data::StepSequence& seq,
                                        const data::LeakSplit& split,
                                        const objective::DeltaEquivToy& toy,
                                        const std::vector<double>& sigmas) {
  if (sigmas.empty() || sigmas.front() <= 0.0)
    throw std::invalid_argument("prop1_convergence: sigmas must be strictly decreasing, > 0");
  for (size_t i = 1; i < sigmas.size(); ++i)
    if (sigmas[i] >= sigmas[i - 1] || sigmas[i] <= 0.0)
      throw std::invalid_argument("prop1_convergence: sigmas must be strictly decreasing, > 0");
  std::vector<Prop1Row> rows;
  for (size_t i = 0; i < sigmas.size(); ++i) {
    auto res = objective::delta_equivalence_elbo(seq, split, sigmas[i], toy);
    Prop1Row row;
    row.sigma = sigmas[i];
    row.gap_per_step = res.gap_per_step();
    row.ratio_to_previous = i == 0 ? 0.0 : rows[i - 1].gap_per_step / row.gap_per_step;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace seqlab::oracle
