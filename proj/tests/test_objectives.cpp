#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "seqlab/dist.hpp"
#include "seqlab/objective.hpp"

using namespace seqlab;
using testutil::tiny_config;
using testutil::tiny_sequence;
using Vec = Eigen::VectorXd;

namespace {

// ForwardResult with one hand-set continuous head per step/element.
model::ForwardResult constant_heads(ad::Tape& t, int T, int L) {
  model::ForwardResult r;
  for (int step = 0; step < T; ++step) {
    std::vector<dist::HeadNode> heads;
    for (int i = 0; i < L; ++i) {
      dist::HeadNode h;
      h.kind = data::ElementKind::Continuous;
      h.logits = t.constant(Vec::Zero(1));
      h.means = t.constant(Vec::Zero(1));
      h.log_scales = t.constant(Vec::Zero(1));
      heads.push_back(h);
    }
    r.steps.push_back(heads);
  }
  return r;
}

data::StepSequence zeros_seq(int T, int L) {
  data::StepSequence s;
  s.steps = Eigen::MatrixXd::Zero(T, L);
  s.kinds.assign(L, data::ElementKind::Continuous);
  return s;
}

}  // namespace

TEST_CASE("mle_loss on hand-set standard-normal heads") {
  ad::Tape t;
  SUBCASE("single step, single head at x=0") {
    auto r = constant_heads(t, 1, 1);
    auto obj = objective::mle_loss(t, r, zeros_seq(1, 1));
    CHECK(obj.breakdown.total == doctest::Approx(-0.9189385).epsilon(1e-7));
    CHECK(obj.breakdown.kl[0] == 0.0);
  }
  SUBCASE("two i.i.d. steps double the total") {
    auto r = constant_heads(t, 2, 1);
    auto obj = objective::mle_loss(t, r, zeros_seq(2, 1));
    CHECK(obj.breakdown.total == doctest::Approx(2 * -0.9189385).epsilon(1e-7));
  }
  SUBCASE("latent trace rejected") {
    auto r = constant_heads(t, 1, 1);
    r.latents.emplace();
    CHECK_THROWS_AS(objective::mle_loss(t, r, zeros_seq(1, 1)), std::invalid_argument);
  }
}

TEST_CASE("mle_loss equals an independent elementwise oracle on a real model") {
  model::Model m(tiny_config(model::Family::FRnn, 4));
  auto seq = tiny_sequence(3, 4);
  ad::Tape t;
  auto fr = m.forward(t, seq, model::Mode::Prior);
  auto obj = objective::mle_loss(t, fr, seq);
  long double expect = 0.0L;
  for (int step = 0; step < seq.T(); ++step)
    for (int i = 0; i < seq.L(); ++i) {
      auto vp = dist::head_gmm_values(t, fr.steps[step][i]);
      expect += dist::gmm_logpdf(vp, seq.steps(step, i));
    }
  CHECK(obj.breakdown.total ==
        doctest::Approx(static_cast<double>(expect)).epsilon(1e-10));
}

TEST_CASE("mle_loss is additive over a batch") {
  model::Model m(tiny_config(model::Family::FRnn, 3));
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    auto seq = tiny_sequence(3, 3, 100 + k);
    ad::Tape t;
    auto obj = objective::mle_loss(t, m.forward(t, seq, model::Mode::Prior), seq);
    sum += obj.breakdown.total;
  }
  // batch total is by definition the sum of per-sequence totals; recompute
  double again = 0.0;
  for (int k = 0; k < 4; ++k) {
    auto seq = tiny_sequence(3, 3, 100 + k);
    ad::Tape t;
    again += objective::mle_loss(t, m.forward(t, seq, model::Mode::Prior), seq)
                 .breakdown.total;
  }
  CHECK(sum == doctest::Approx(again).epsilon(1e-14));
}

TEST_CASE("elbo_loss breakdown and degenerate cases") {
  ad::Tape t;
  auto make_latents = [&](model::ForwardResult& r, bool q_equals_p) {
    r.stochastic = true;
    r.latents.emplace();
    auto& lt = *r.latents;
    Vec pm = Vec::Constant(2, 0.3), pl = Vec::Constant(2, -0.1);
    Vec qm = q_equals_p ? pm : Vec(Vec::Constant(2, 0.8));
    Vec ql = q_equals_p ? pl : Vec(Vec::Constant(2, 0.2));
    lt.prior_mean.push_back(t.constant(pm));
    lt.prior_logs.push_back(t.constant(pl));
    lt.post_mean.push_back(t.constant(qm));
    lt.post_logs.push_back(t.constant(ql));
    lt.z.push_back(t.constant(qm));
  };

  SUBCASE("posterior frozen to the prior leaves reconstruction only") {
    auto r = constant_heads(t, 1, 1);
    make_latents(r, true);
    auto obj = objective::elbo_loss(t, r, zeros_seq(1, 1), 1.0);
    CHECK(obj.breakdown.kl[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(obj.breakdown.total == doctest::Approx(-0.9189385).epsilon(1e-7));
  }
  SUBCASE("kl_coeff = 0 drops the KL term") {
    auto r = constant_heads(t, 1, 1);
    make_latents(r, false);
    auto obj = objective::elbo_loss(t, r, zeros_seq(1, 1), 0.0);
    CHECK(obj.breakdown.total == doctest::Approx(obj.breakdown.recon[0]).epsilon(1e-14));
    CHECK(obj.breakdown.kl[0] > 0.0);
  }
  SUBCASE("total = recon - coeff * kl") {
    auto r = constant_heads(t, 1, 1);
    make_latents(r, false);
    auto obj = objective::elbo_loss(t, r, zeros_seq(1, 1), 0.7);
    CHECK(obj.breakdown.total ==
          doctest::Approx(obj.breakdown.recon[0] - 0.7 * obj.breakdown.kl[0])
              .epsilon(1e-12));
    CHECK(obj.breakdown.kl_coeff == 0.7);
  }
  SUBCASE("z-independent decoder with q = p gives log p(x) for every noise draw") {
    // heads are constants (ignore z), q = p: the estimate is exact
    double ref = 0.0;
    for (std::uint64_t noise_seed : {1ull, 2ull, 3ull}) {
      ad::Tape tape;
      auto r = constant_heads(tape, 1, 1);
      r.stochastic = true;
      r.latents.emplace();
      auto& lt = *r.latents;
      Vec pm = Vec::Constant(2, 0.3), pl = Vec::Constant(2, -0.1);
      lt.prior_mean.push_back(tape.constant(pm));
      lt.prior_logs.push_back(tape.constant(pl));
      lt.post_mean.push_back(tape.constant(pm));
      lt.post_logs.push_back(tape.constant(pl));
      ad::Rng rng(noise_seed);
      lt.z.push_back(tape.reparam(lt.post_mean[0], lt.post_logs[0], rng.normal_vec(2)));
      auto obj = objective::elbo_loss(tape, r, zeros_seq(1, 1), 1.0);
      if (noise_seed == 1)
        ref = obj.breakdown.total;
      else
        CHECK(obj.breakdown.total == doctest::Approx(ref).epsilon(1e-12));
      CHECK(obj.breakdown.total == doctest::Approx(-0.9189385).epsilon(1e-7));
    }
  }
  SUBCASE("missing latent trace rejected") {
    auto r = constant_heads(t, 1, 1);
    CHECK_THROWS_AS(objective::elbo_loss(t, r, zeros_seq(1, 1), 1.0),
                    std::invalid_argument);
  }
  SUBCASE("prior-mode trace rejected") {
    auto r = constant_heads(t, 1, 1);
    r.latents.emplace();
    r.latents->prior_mean.push_back(t.constant(Vec::Zero(2)));
    CHECK_THROWS_AS(objective::elbo_loss(t, r, zeros_seq(1, 1), 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("elbo KL terms are nonnegative on a real model") {
  model::Model m(tiny_config(model::Family::FSrnn, 4));
  auto seq = tiny_sequence(4, 4);
  ad::Rng noise(9);
  ad::Tape t;
  auto fr = m.forward(t, seq, model::Mode::Posterior, &noise);
  auto obj = objective::elbo_loss(t, fr, seq, 1.0);
  REQUIRE(obj.breakdown.kl.size() == 4);
  for (double kl : obj.breakdown.kl) CHECK(kl >= 0.0);
}

TEST_CASE("kl_anneal_coeff schedule") {
  CHECK(objective::kl_anneal_coeff(0) == 0.2);
  CHECK(objective::kl_anneal_coeff(16000) == 1.0);
  CHECK(objective::kl_anneal_coeff(1000000) == 1.0);
  CHECK(objective::kl_anneal_coeff(8000) == doctest::Approx(0.6).epsilon(1e-12));
  for (long u = 0; u < 20000; u += 97)
    CHECK(objective::kl_anneal_coeff(u + 1) >= objective::kl_anneal_coeff(u));
}

TEST_CASE("z-forcing auxiliary loss") {
  model::Model m(tiny_config(model::Family::FSrnn, 4));
  auto seq = tiny_sequence(3, 4);

  SUBCASE("alpha = beta = 0 is exactly zero with zero gradients") {
    ad::Rng noise(5);
    ad::Tape t;
    auto fr = m.forward(t, seq, model::Mode::Posterior, &noise);
    auto aux = objective::zforcing_aux_loss(t, m, fr, 0.0, 0.0);
    CHECK(t.scalar(aux.total) == 0.0);
    m.params().zero_grad();
    t.backward(aux.total);
    CHECK(m.params().flatten_grads().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("doubling alpha doubles the generative-path contribution") {
    ad::Rng n1(5), n2(5);
    ad::Tape t1, t2;
    auto f1 = m.forward(t1, seq, model::Mode::Posterior, &n1);
    auto f2 = m.forward(t2, seq, model::Mode::Posterior, &n2);
    double a1 = objective::zforcing_aux_loss(t1, m, f1, 0.0025, 0.0).breakdown.aux;
    double a2 = objective::zforcing_aux_loss(t2, m, f2, 0.005, 0.0).breakdown.aux;
    CHECK(a2 == doctest::Approx(2.0 * a1).epsilon(1e-10));
  }
  SUBCASE("gradients match finite differences once the detached inputs are frozen") {
    // The aux loss regresses on a detached copy of the backward state, and the
    // alpha path additionally detaches z. The comparable finite-difference
    // objective therefore holds those values constant at the base point.
    Eigen::VectorXd flat = m.params().flatten();
    std::vector<Eigen::VectorXd> targets, base_z;
    {
      ad::Rng noise(41);
      ad::Tape t;
      auto fr = m.forward(t, seq, model::Mode::Posterior, &noise);
      for (auto bs : fr.backward_states) targets.push_back(t.val(bs));
      for (auto z : fr.latents->z) base_z.push_back(t.val(z));
    }
    const double alpha = 0.004, beta = 0.005;
    auto frozen_obj = [&](const Eigen::VectorXd& x) {
      m.params().set_flat(x);
      ad::Rng noise(41);
      ad::Tape t;
      auto fr = m.forward(t, seq, model::Mode::Posterior, &noise);
      double total = objective::elbo_loss(t, fr, seq, 1.0).breakdown.total;
      for (size_t k = 0; k < targets.size(); ++k) {
        ad::Var target = t.constant(targets[k]);
        total += alpha * t.scalar(m.aux_pred_logpdf(t, t.constant(base_z[k]), target));
        total += beta * t.scalar(m.aux_pred_logpdf(t, fr.latents->z[k], target));
      }
      return total;
    };
    Eigen::VectorXd analytic = testutil::objective_grad(m, seq, flat, alpha, beta);
    double err = oracle::finite_diff_max_rel_err(frozen_obj, flat, analytic, 1e-4);
    CHECK(err <= 1e-3);
    m.params().set_flat(flat);
  }
  SUBCASE("the alpha path detaches z: its gradient ignores the z route") {
    // analytic gradients with and without the alpha term differ only through
    // the prediction-head and backward-net parameters, never more than the
    // full finite-difference derivative of the alpha term would
    Eigen::VectorXd flat = m.params().flatten();
    Eigen::VectorXd g0 = testutil::objective_grad(m, seq, flat, 0.0, 0.0);
    Eigen::VectorXd ga = testutil::objective_grad(m, seq, flat, 0.005, 0.0);
    CHECK((ga - g0).norm() > 0.0);  // the term does contribute a gradient
    // and the contribution scales linearly in alpha
    Eigen::VectorXd ga2 = testutil::objective_grad(m, seq, flat, 0.01, 0.0);
    CHECK(((ga2 - g0) - 2.0 * (ga - g0)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("simplified variant rejected") {
    auto cfg = tiny_config(model::Family::FSrnn, 4);
    cfg.variant = model::SrnnVariant::Simplified;
    model::Model simp(cfg);
    ad::Rng noise(5);
    ad::Tape t;
    auto fr = simp.forward(t, seq, model::Mode::Posterior, &noise);
    CHECK_THROWS_AS(objective::zforcing_aux_loss(t, simp, fr, 0.005, 0.005),
                    std::invalid_argument);
  }
}

TEST_CASE("gauss_hermite integrates polynomial moments of exp(-y^2)") {
  Vec x, w;
  objective::gauss_hermite(7, x, w);
  double m0 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < 7; ++i) {
    m0 += w(i);
    m2 += w(i) * x(i) * x(i);
    m4 += w(i) * std::pow(x(i), 4);
  }
  const double sqrt_pi = std::sqrt(M_PI);
  CHECK(m0 == doctest::Approx(sqrt_pi).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(0.5 * sqrt_pi).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(0.75 * sqrt_pi).epsilon(1e-12));
}

TEST_CASE("delta-posterior equivalence harness") {
  auto split = data::make_leak_split_interleave(4, 2);
  auto toy = objective::make_delta_toy(4, 3, split, 17);
  auto seq = tiny_sequence(3, 4, 23);

  SUBCASE("x^a-block cancellation holds to 1e-10 at every sigma") {
    for (double sigma : {1.0, 0.1, 1e-2, 1e-3, 1e-5})
      CHECK(std::abs(objective::xa_block_gap(sigma, 2)) <= 1e-10);
  }
  SUBCASE("gap at sigma = 1e-3 is below 1e-3 nats per step") {
    auto res = objective::delta_equivalence_elbo(seq, split, 1e-3, toy);
    CHECK(res.gap_per_step() < 1e-3);
    CHECK(res.gap_per_step() > 0.0);  // not trivially exact
  }
  SUBCASE("halving sigma shrinks the gap about 4x") {
    double prev = 0.0;
    int idx = 0;
    for (double sigma : {1e-1, 5e-2, 2.5e-2}) {
      auto res = objective::delta_equivalence_elbo(seq, split, sigma, toy);
      if (idx > 0) {
        double ratio = prev / res.gap_per_step();
        CHECK(ratio >= 3.0);
        CHECK(ratio <= 5.0);
      }
      prev = res.gap_per_step();
      ++idx;
    }
  }
  SUBCASE("invalid sigma rejected") {
    CHECK_THROWS_AS(objective::delta_equivalence_elbo(seq, split, 0.0, toy),
                    std::invalid_argument);
    CHECK_THROWS_AS(objective::xa_block_gap(-1.0, 2), std::invalid_argument);
  }
}

TEST_CASE("elbo gradients match finite differences for stochastic families") {
  for (auto fam : {model::Family::FSrnn, model::Family::SrnnHier}) {
    CAPTURE(model::family_name(fam));
    model::Model m(tiny_config(fam, 4));
    auto seq = tiny_sequence(3, 4);
    CHECK(testutil::fd_objective_err(m, seq) <= 1e-3);
  }
}
