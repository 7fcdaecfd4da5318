#pragma once

#include <Eigen/Dense>
#include <vector>

#include "seqlab/ad.hpp"
#include "seqlab/data.hpp"

// Distribution heads: log-densities, closed-form KL and reparameterized
// sampling, both as plain value-level functions and as tape nodes (the
// latter via the fused kernels in ad::Tape).

namespace seqlab::dist {

using Vec = Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093453;
// log-scale soft clamp bound; keeps densities finite on near-constant data
inline constexpr double kLogScaleClamp = 7.0;

struct GaussianMixtureParams {
  Vec logits;      // K
  Vec means;       // K
  Vec log_scales;  // K
};

struct DiagGaussianParams {
  Vec mean;
  Vec log_scale;
  int dim() const { return static_cast<int>(mean.size()); }
};

struct BernoulliParams {
  Vec logits;
};

double gmm_logpdf(const GaussianMixtureParams& p, double x);
double bernoulli_logpmf(const BernoulliParams& p, const Vec& x);
double diag_gauss_logpdf(const DiagGaussianParams& p, const Vec& z);
double gauss_kl(const DiagGaussianParams& q, const DiagGaussianParams& p);
Vec reparam_sample(const DiagGaussianParams& p, const Vec& noise);

// One element's output head on the tape. Continuous elements carry a
// K-component mixture (K = 1 degenerates to a single Gaussian), binary
// elements a logit.
struct HeadNode {
  data::ElementKind kind;
  ad::Var logits;      // GMM: K
  ad::Var means;       // GMM: K
  ad::Var log_scales;  // GMM: K
  ad::Var logit;       // Bernoulli: 1
};

ad::Var elem_logprob(ad::Tape& tape, const HeadNode& head, double x);
// Sum of per-element log-densities over one step.
ad::Var step_logprob(ad::Tape& tape, const std::vector<HeadNode>& heads, const Vec& x_t);

// Value-level extraction of a head for evaluation and sampling.
GaussianMixtureParams head_gmm_values(const ad::Tape& tape, const HeadNode& head);

double sample_head(const ad::Tape& tape, const HeadNode& head, ad::Rng& rng);

}  // namespace seqlab::dist
