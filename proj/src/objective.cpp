#include "seqlab/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "seqlab/dist.hpp"

namespace seqlab::objective {

ObjectiveValue mle_loss(Tape& tape, const model::ForwardResult& result,
                        const data::StepSequence& seq) {
  if (result.latents.has_value())
    throw std::invalid_argument("mle_loss: latent trace present; use elbo_loss");
  if (static_cast<int>(result.steps.size()) != seq.T())
    throw std::invalid_argument("mle_loss: step count mismatch");
  ObjectiveValue out;
  std::vector<Var> terms;
  terms.reserve(result.steps.size());
  for (int t = 0; t < seq.T(); ++t) {
    Var lp = dist::step_logprob(tape, result.steps[t], seq.steps.row(t).transpose());
    out.breakdown.recon.push_back(tape.scalar(lp));
    out.breakdown.kl.push_back(0.0);
    terms.push_back(lp);
  }
  out.total = tape.add_all(terms);
  out.breakdown.total = tape.scalar(out.total);
  return out;
}

ObjectiveValue elbo_loss(Tape& tape, const model::ForwardResult& result,
                         const data::StepSequence& seq, double kl_coeff) {
  if (!result.latents.has_value())
    throw std::invalid_argument("elbo_loss: missing latent trace; use mle_loss");
  const auto& lt = *result.latents;
  if (lt.post_mean.empty())
    throw std::invalid_argument("elbo_loss: requires a posterior-mode forward pass");
  ObjectiveValue out;
  out.breakdown.kl_coeff = kl_coeff;
  std::vector<Var> terms;
  for (int t = 0; t < seq.T(); ++t) {
    Var recon = dist::step_logprob(tape, result.steps[t], seq.steps.row(t).transpose());
    Var kl = tape.gauss_kl(lt.post_mean[t], lt.post_logs[t], lt.prior_mean[t],
                           lt.prior_logs[t]);
    out.breakdown.recon.push_back(tape.scalar(recon));
    out.breakdown.kl.push_back(tape.scalar(kl));
    terms.push_back(tape.add(recon, tape.scale(kl, -kl_coeff)));
  }
  out.total = tape.add_all(terms);
  out.breakdown.total = tape.scalar(out.total);
  return out;
}

double kl_anneal_coeff(long update_index, double start, double inc) {
  return std::min(1.0, start + inc * static_cast<double>(update_index));
}

ObjectiveValue zforcing_aux_loss(Tape& tape, const model::Model& m,
                                 const model::ForwardResult& result, double alpha,
                                 double beta) {
  if (result.backward_states.empty() ||
      m.config().variant == model::SrnnVariant::Simplified)
    throw std::invalid_argument(
        "zforcing_aux_loss: requires the z-forcing variant run with backward states");
  ObjectiveValue out;
  if (alpha == 0.0 && beta == 0.0) {
    out.total = tape.constant(0.0);
    return out;
  }
  const auto& lt = *result.latents;
  std::vector<Var> terms;
  for (size_t t = 0; t < result.backward_states.size(); ++t) {
    Var target = result.backward_states[t];
    if (alpha != 0.0)
      terms.push_back(
          tape.scale(m.aux_pred_logpdf(tape, tape.stopgrad(lt.z[t]), target), alpha));
    if (beta != 0.0)
      terms.push_back(tape.scale(m.aux_pred_logpdf(tape, lt.z[t], target), beta));
  }
  out.total = tape.add_all(terms);
  out.breakdown.total = tape.scalar(out.total);
  out.breakdown.aux = out.breakdown.total;
  return out;
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature (Golub-Welsch on the Hermite Jacobi matrix)

void gauss_hermite(int n, Vec& nodes, Vec& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double off = std::sqrt(i / 2.0);
    J(i, i - 1) = off;
    J(i - 1, i) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights(i) = sqrt_pi * v0 * v0;
  }
}

// ---------------------------------------------------------------------------
// Delta-posterior equivalence

DeltaEquivToy make_delta_toy(int L, int T, const data::LeakSplit& split,
                             std::uint64_t seed) {
  if (split.a_indices.size() > 3)
    throw std::invalid_argument("make_delta_toy: leaked subset larger than 3 (quadrature)");
  DeltaEquivToy toy;
  toy.L = L;
  toy.T = T;
  toy.split = split;
  int D = static_cast<int>(split.a_indices.size());
  int B = static_cast<int>(split.b_indices.size());
  int R = toy.hist_dim;
  ad::Rng rng(seed);
  auto rmat = [&](int r, int c, double s) {
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(-s, s);
    return m;
  };
  toy.hist_M = rmat(R, R, 0.6);
  toy.hist_N = rmat(R, L, 0.6);
  toy.prior_A = rmat(D, R, 0.8);
  toy.prior_a0 = rmat(D, 1, 0.5).col(0);
  toy.prior_logs = rmat(D, 1, 0.3).col(0);
  toy.b_Wz = rmat(B, D, 0.8);
  toy.b_Wr = rmat(B, R, 0.5);
  toy.b_c = rmat(B, 1, 0.5).col(0);
  toy.b_logs = rmat(B, 1, 0.3).col(0);
  return toy;
}

namespace {

double log_normal(double x, double mean, double log_scale) {
  double d = x - mean;
  return -0.5 * dist::kLog2Pi - log_scale - 0.5 * d * d * std::exp(-2.0 * log_scale);
}

}  // namespace

double DeltaEquivResult::gap_per_step() const {
  return std::abs(elbo - delta_objective) / std::max(1, steps);
}

DeltaEquivResult delta_equivalence_elbo(const data::StepSequence& seq,
                                        const data::LeakSplit& split, double sigma,
                                        const DeltaEquivToy& toy) {
  if (sigma <= 0.0) throw std::invalid_argument("delta_equivalence_elbo: sigma <= 0");
  if (seq.L() != toy.L) throw std::invalid_argument("delta_equivalence_elbo: L mismatch");
  const int D = static_cast<int>(split.a_indices.size());
  const int B = static_cast<int>(split.b_indices.size());
  const int Q = 24;
  Vec gh_x, gh_w;
  gauss_hermite(Q, gh_x, gh_w);
  const double inv_sqrt_pi_d = std::pow(M_PI, -0.5 * D);

  DeltaEquivResult res;
  res.steps = seq.T();
  Vec r = Vec::Zero(toy.hist_dim);
  for (int t = 0; t < seq.T(); ++t) {
    Vec x = seq.steps.row(t).transpose();
    Vec xa(D), xb(B);
    for (int j = 0; j < D; ++j) xa(j) = x(split.a_indices[j]);
    for (int j = 0; j < B; ++j) xb(j) = x(split.b_indices[j]);

    Vec mu_p = (toy.prior_A * r + toy.prior_a0).array().tanh();

    auto b_logprob_at = [&](const Vec& z) {
      Vec mean = toy.b_c + ((toy.b_Wz * z + toy.b_Wr * r).array().tanh()).matrix();
      double lp = 0.0;
      for (int j = 0; j < B; ++j) lp += log_normal(xb(j), mean(j), toy.b_logs(j));
      return lp;
    };

    // Eqn-route: log p(xa | hist) + log p(xb | xa, hist)
    double delta_t = 0.0;
    for (int j = 0; j < D; ++j) delta_t += log_normal(xa(j), mu_p(j), toy.prior_logs(j));
    delta_t += b_logprob_at(xa);

    // ELBO route with q = N(xa, sigma^2 I):
    //  E_q[log N(xa; z, s^2)] + H(q) = 0 (matched-Gaussian cancellation)
    //  E_q[log p(z | hist)]   closed form for a diagonal Gaussian prior
    //  E_q[log p(xb | z, hist)] by tensor Gauss-Hermite quadrature
    double elbo_t = 0.0;
    for (int j = 0; j < D; ++j) {
      elbo_t += log_normal(xa(j), mu_p(j), toy.prior_logs(j)) -
                0.5 * sigma * sigma * std::exp(-2.0 * toy.prior_logs(j));
    }
    // tensor quadrature over z = xa + sqrt(2) sigma y
    std::vector<int> idx(D, 0);
    double acc = 0.0;
    while (true) {
      double w = 1.0;
      Vec z(D);
      for (int j = 0; j < D; ++j) {
        w *= gh_w(idx[j]);
        z(j) = xa(j) + std::sqrt(2.0) * sigma * gh_x(idx[j]);
      }
      acc += w * b_logprob_at(z);
      int j = 0;
      for (; j < D; ++j) {
        if (++idx[j] < Q) break;
        idx[j] = 0;
      }
      if (j == D) break;
    }
    elbo_t += acc * inv_sqrt_pi_d;

    res.elbo += elbo_t;
    res.delta_objective += delta_t;
    r = (toy.hist_M * r + toy.hist_N * x).array().tanh();
  }
  return res;
}

double xa_block_gap(double sigma, int dim, int quad_nodes) {
  if (sigma <= 0.0) throw std::invalid_argument("xa_block_gap: sigma <= 0");
  Vec gh_x, gh_w;
  gauss_hermite(quad_nodes, gh_x, gh_w);
  double log_scale = std::log(sigma);
  // per-dimension: E_{z~N(0, s^2)}[log N(0; z, s^2)], quadrature over z
  double e = 0.0;
  for (int i = 0; i < quad_nodes; ++i) {
    double z = std::sqrt(2.0) * sigma * gh_x(i);
    e += gh_w(i) * log_normal(0.0, z, log_scale);
  }
  e /= std::sqrt(M_PI);
  double entropy = 0.5 * (dist::kLog2Pi + 1.0) + log_scale;
  return dim * (e + entropy);
}

}  // namespace seqlab::objective
