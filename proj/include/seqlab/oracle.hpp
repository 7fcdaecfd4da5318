#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "seqlab/data.hpp"
#include "seqlab/dist.hpp"
#include "seqlab/objective.hpp"

// Independent verifiers used by tests and the acceptance suite: central
// finite differences, quadrature normalization, an enumerable discrete-latent
// surrogate for the bound property, and the delta-posterior convergence
// harness. These deliberately avoid the tape and the model code paths.

namespace seqlab::oracle {

using Vec = Eigen::VectorXd;

// Max relative error between an analytic gradient and central finite
// differences of f at x0. Denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_max_rel_err(const std::function<double(const Vec&)>& f, const Vec& x0,
                               const Vec& analytic, double eps);

// Trapezoid integral of exp(logpdf) over [lo, hi] with n points. Throws if
// the density at either edge exceeds 1e-4 (grid too narrow).
double quadrature_norm(const dist::GaussianMixtureParams& head, double lo, double hi,
                       int n);

// Discrete-latent sequence surrogate: z_t ranges over G grid values, the
// prior over z_1 and each transition are categorical tables, emissions are
// per-step scalar Gaussians whose mean and log-scale depend on the latent
// value. The variational distribution is a full table over latent paths, so
// ELBO tightness and the true-posterior equality are exact statements.
struct SurrogateModel {
  int T = 2;
  int G = 4;
  std::vector<double> grid;                       // G latent values
  std::vector<double> log_prior;                  // G, normalized
  std::vector<std::vector<double>> log_trans;     // [G][G], rows normalized
  Eigen::MatrixXd emit_mean;                      // T x G
  Eigen::MatrixXd emit_logs;                      // T x G

  long num_paths() const;
  // log p(x, z-path) for a path given as per-step grid indices
  long double log_joint(const Vec& x, const std::vector<int>& path) const;
};

SurrogateModel random_surrogate(int T, int G, std::uint64_t seed);
Vec random_surrogate_obs(const SurrogateModel& s, std::uint64_t seed);

// Exact log p(x) by summing all G^T latent paths (log-sum-exp, long double).
double enumerate_exact_loglik(const SurrogateModel& s, const Vec& x);

// ELBO of a path-distribution q (size G^T, normalized weights).
double surrogate_elbo(const SurrogateModel& s, const Vec& x,
                      const std::vector<double>& q_path);

std::vector<double> random_path_posterior(const SurrogateModel& s, std::uint64_t seed);
std::vector<double> true_path_posterior(const SurrogateModel& s, const Vec& x);

struct Prop1Row {
  double sigma = 0.0;
  double gap_per_step = 0.0;
  double ratio_to_previous = 0.0;  // 0 for the first row
};

// Runs delta_equivalence_elbo for each sigma (strictly decreasing) and
// reports per-step gaps and successive ratios.
std::vector<Prop1Row> prop1_convergence(const data::StepSequence& seq,
                                        const data::LeakSplit& split,
                                        const objective::DeltaEquivToy& toy,
                                        const std::vector<double>& sigmas);

}  // namespace seqlab::oracle
