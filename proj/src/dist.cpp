#include "seqlab/dist.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab::dist {

namespace {

double log_sum_exp(const Vec& v) {
  double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double gmm_logpdf(const GaussianMixtureParams& p, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("gmm_logpdf: non-finite x");
  int K = static_cast<int>(p.logits.size());
  if (p.means.size() != K || p.log_scales.size() != K)
    throw std::invalid_argument("gmm_logpdf: component count mismatch");
  Vec logw = p.logits.array() - log_sum_exp(p.logits);
  Vec comp(K);
  for (int k = 0; k < K; ++k) {
    double d = x - p.means(k);
    comp(k) = logw(k) - 0.5 * kLog2Pi - p.log_scales(k) -
              0.5 * d * d * std::exp(-2.0 * p.log_scales(k));
  }
  return log_sum_exp(comp);
}

double bernoulli_logpmf(const BernoulliParams& p, const Vec& x) {
  if (x.size() != p.logits.size())
    throw std::invalid_argument("bernoulli_logpmf: dimension mismatch");
  double lp = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) != 0.0 && x(i) != 1.0)
      throw std::invalid_argument("bernoulli_logpmf: x not in {0,1}");
    double l = p.logits(i);
    double sp = l > 0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
    lp += x(i) * l - sp;
  }
  return lp;
}

double diag_gauss_logpdf(const DiagGaussianParams& p, const Vec& z) {
  if (z.size() != p.mean.size() || p.log_scale.size() != p.mean.size())
    throw std::invalid_argument("diag_gauss_logpdf: dimension mismatch");
  Vec d = z - p.mean;
  return -0.5 * z.size() * kLog2Pi - p.log_scale.sum() -
         0.5 * (d.array().square() * (-2.0 * p.log_scale.array()).exp()).sum();
}

double gauss_kl(const DiagGaussianParams& q, const DiagGaussianParams& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("gauss_kl: dimension mismatch");
  Vec var_ratio = (2.0 * (q.log_scale - p.log_scale).array()).exp();
  Vec d = q.mean - p.mean;
  Vec inv_vp = (-2.0 * p.log_scale.array()).exp();
  return ((p.log_scale - q.log_scale).array() +
          0.5 * (var_ratio.array() + d.array().square() * inv_vp.array() - 1.0))
      .sum();
}

Vec reparam_sample(const DiagGaussianParams& p, const Vec& noise) {
  if (noise.size() != p.mean.size())
    throw std::invalid_argument("reparam_sample: dimension mismatch");
  return p.mean + p.log_scale.array().exp().matrix().cwiseProduct(noise);
}

ad::Var elem_logprob(ad::Tape& tape, const HeadNode& head, double x) {
  if (head.kind == data::ElementKind::Binary) {
    if (x != 0.0 && x != 1.0)
      throw std::invalid_argument("elem_logprob: binary element not in {0,1}");
    return tape.bernoulli_logpmf(head.logit, Vec::Constant(1, x));
  }
  return tape.gmm_logpdf(head.logits, head.means, head.log_scales, x);
}

ad::Var step_logprob(ad::Tape& tape, const std::vector<HeadNode>& heads, const Vec& x_t) {
  if (static_cast<int>(heads.size()) != x_t.size())
    throw std::invalid_argument("step_logprob: head count != element count");
  std::vector<ad::Var> terms;
  terms.reserve(heads.size());
  for (size_t i = 0; i < heads.size(); ++i)
    terms.push_back(elem_logprob(tape, heads[i], x_t(static_cast<int>(i))));
  return tape.add_all(terms);
}

GaussianMixtureParams head_gmm_values(const ad::Tape& tape, const HeadNode& head) {
  return {tape.val(head.logits), tape.val(head.means), tape.val(head.log_scales)};
}

double sample_head(const ad::Tape& tape, const HeadNode& head, ad::Rng& rng) {
  if (head.kind == data::ElementKind::Binary) {
    double l = tape.val(head.logit)(0);
    double prob = 1.0 / (1.0 + std::exp(-l));
    return rng.uniform() < prob ? 1.0 : 0.0;
  }
  auto p = head_gmm_values(tape, head);
  Vec logw = p.logits.array() - log_sum_exp(p.logits);
  double u = rng.uniform();
  int k = 0;
  double acc = 0.0;
  for (; k < logw.size(); ++k) {
    acc += std::exp(logw(k));
    if (u < acc) break;
  }
  if (k == logw.size()) k = static_cast<int>(logw.size()) - 1;
  return p.means(k) + std::exp(p.log_scales(k)) * rng.normal();
}

}  // namespace seqlab::dist
