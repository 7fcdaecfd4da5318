#include "seqlab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab::model {

using data::ElementKind;

bool is_stochastic(Family f) {
  return f == Family::FSrnn || f == Family::SrnnHier || f == Family::SrnnFlat;
}
bool is_hier(Family f) { return f == Family::RnnHier || f == Family::SrnnHier; }
bool is_flat(Family f) { return f == Family::RnnFlat || f == Family::SrnnFlat; }

std::string family_name(Family f) {
  switch (f) {
    case Family::FRnn: return "F-RNN";
    case Family::FSrnn: return "F-SRNN";
    case Family::DeltaRnn: return "DELTA-RNN";
    case Family::RnnHier: return "RNN-HIER";
    case Family::SrnnHier: return "SRNN-HIER";
    case Family::RnnFlat: return "RNN-FLAT";
    case Family::SrnnFlat: return "SRNN-FLAT";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  if (s == "F-RNN") return Family::FRnn;
  if (s == "F-SRNN") return Family::FSrnn;
  if (s == "DELTA-RNN") return Family::DeltaRnn;
  if (s == "RNN-HIER") return Family::RnnHier;
  if (s == "SRNN-HIER") return Family::SrnnHier;
  if (s == "RNN-FLAT") return Family::RnnFlat;
  if (s == "SRNN-FLAT") return Family::SrnnFlat;
  throw std::invalid_argument("unknown model family: " + s);
}

namespace {
int head_dim(ElementKind k, int K) { return k == ElementKind::Binary ? 1 : 3 * K; }
}  // namespace

// ---------------------------------------------------------------------------
// construction

Model::Lstm Model::make_lstm(const std::string& name, int in, int H, ad::Rng& rng) {
  double s = 1.0 / std::sqrt(static_cast<double>(in + H));
  Lstm l;
  l.in = in;
  l.H = H;
  l.W = &params_.add_init(name + ".W", 4 * H, in + H, rng, s);
  l.b = &params_.add(name + ".b", 4 * H, 1);
  l.h0 = &params_.add_init(name + ".h0", H, 1, rng, 0.1);
  l.c0 = &params_.add_init(name + ".c0", H, 1, rng, 0.1);
  return l;
}

Model::Mlp Model::make_mlp(const std::string& name, int in, int hidden, int out,
                           ad::Rng& rng) {
  Mlp m;
  m.W1 = &params_.add_init(name + ".W1", hidden, in, rng, 1.0 / std::sqrt(double(in)));
  m.b1 = &params_.add(name + ".b1", hidden, 1);
  m.W2 = &params_.add_init(name + ".W2", out, hidden, rng, 1.0 / std::sqrt(double(hidden)));
  m.b2 = &params_.add(name + ".b2", out, 1);
  return m;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.L < 1) throw std::invalid_argument("ModelConfig: L must be >= 1");
  if (static_cast<int>(cfg_.kinds.size()) != cfg_.L)
    throw std::invalid_argument("ModelConfig: kinds size must equal L");
  if (is_flat(cfg_.family) && cfg_.L != 1)
    throw std::invalid_argument("ModelConfig: flat families require L = 1");
  if (cfg_.family == Family::DeltaRnn) {
    if (cfg_.leak.a_indices.empty() || cfg_.leak.b_indices.empty() ||
        static_cast<int>(cfg_.leak.a_indices.size() + cfg_.leak.b_indices.size()) != cfg_.L)
      throw std::invalid_argument("ModelConfig: DELTA-RNN requires a valid leak split");
  }
  if (is_stochastic(cfg_.family) && cfg_.latent < 1)
    throw std::invalid_argument("ModelConfig: stochastic family requires latent >= 1");

  ad::Rng rng(cfg_.init_seed);
  const int H = cfg_.width;
  const int L = cfg_.L;
  const int Z = cfg_.latent;
  ctx_dim_ = H;

  std::vector<int> all(L);
  for (int i = 0; i < L; ++i) all[i] = i;

  const bool stoch = is_stochastic(cfg_.family);
  if (stoch) {
    int fwd_in = cfg_.variant == SrnnVariant::ZForcing ? L + Z : L;
    fwd_ = make_lstm("fwd", fwd_in, H, rng);
    bwd_ = make_lstm("bwd", L, H, rng);
    prior_ = make_mlp("prior", H, H, 2 * Z, rng);
    post_ = make_mlp("post", 2 * H, H, 2 * Z, rng);
    if (cfg_.variant == SrnnVariant::ZForcing) {
      emit_W_ = &params_.add_init("emit.W", H, H + Z, rng, 1.0 / std::sqrt(double(H + Z)));
      emit_b_ = &params_.add("emit.b", H, 1);
      aux_ = make_mlp("aux", Z, H, H, rng);
      aux_logs_ = &params_.add("aux.logs", H, 1);
    } else {
      emit_rnn_ = make_lstm("emit_rnn", H + Z, H, rng);
    }
  } else {
    fwd_ = make_lstm("fwd", L, H, rng);
    start_ = &params_.add_init("start", L, 1, rng, 0.1);
  }

  if (is_hier(cfg_.family)) {
    const int Hl = cfg_.low_width;
    if (cfg_.low_decoder == LowDecoder::Recurrent) {
      low_ = make_lstm("low", 1 + ctx_dim_, Hl, rng);
      low_start_ = &params_.add_init("low.start", 1, 1, rng, 0.1);
    } else {
      for (int i = 0; i < L; ++i) {
        int in = i + ctx_dim_;
        mmlp_W_.push_back(&params_.add_init("mmlp.W" + std::to_string(i), Hl, in, rng,
                                            1.0 / std::sqrt(double(in))));
        mmlp_b_.push_back(&params_.add("mmlp.b" + std::to_string(i), Hl, 1));
      }
    }
    bool any_cont = false, any_bin = false;
    for (auto k : cfg_.kinds) (k == ElementKind::Binary ? any_bin : any_cont) = true;
    double hs = 1.0 / std::sqrt(double(Hl));
    if (any_cont) {
      low_head_cont_W_ = &params_.add_init("low.head_cont.W", 3 * cfg_.mixture_k, Hl, rng, hs);
      low_head_cont_b_ = &params_.add("low.head_cont.b", 3 * cfg_.mixture_k, 1);
    }
    if (any_bin) {
      low_head_bin_W_ = &params_.add_init("low.head_bin.W", 1, Hl, rng, hs);
      low_head_bin_b_ = &params_.add("low.head_bin.b", 1, 1);
    }
  } else if (cfg_.family == Family::DeltaRnn) {
    int P = std::max(4, H / 2);
    int na = static_cast<int>(cfg_.leak.a_indices.size());
    leak_W_ = &params_.add_init("leak.W", P, na, rng, 1.0 / std::sqrt(double(na)));
    leak_b_ = &params_.add("leak.b", P, 1);
    double hs = 1.0 / std::sqrt(double(H));
    head_W_ = &params_.add_init("head_a.W", packed_head_dim(cfg_.leak.a_indices), H, rng, hs);
    head_b_ = &params_.add("head_a.b", packed_head_dim(cfg_.leak.a_indices), 1);
    double hbs = 1.0 / std::sqrt(double(H + P));
    head_b_W_ = &params_.add_init("head_b.W", packed_head_dim(cfg_.leak.b_indices), H + P,
                                  rng, hbs);
    head_b_b_ = &params_.add("head_b.b", packed_head_dim(cfg_.leak.b_indices), 1);
  } else {
    double hs = 1.0 / std::sqrt(double(ctx_dim_));
    head_W_ = &params_.add_init("head.W", packed_head_dim(all), ctx_dim_, rng, hs);
    head_b_ = &params_.add("head.b", packed_head_dim(all), 1);
  }
}

// ---------------------------------------------------------------------------
// building blocks

Model::LstmState Model::lstm_init(Tape& t, const Lstm& l) const {
  return {t.pvec(*l.h0), t.pvec(*l.c0)};
}

Model::LstmState Model::lstm_step(Tape& t, const Lstm& l, Var input,
                                  const LstmState& s) const {
  Var gates = t.affine(*l.W, *l.b, t.concat({input, s.h}));
  Var i = t.sigmoid_(t.segment(gates, 0, l.H));
  Var f = t.sigmoid_(t.segment(gates, l.H, l.H));
  Var o = t.sigmoid_(t.segment(gates, 2 * l.H, l.H));
  Var g = t.tanh_(t.segment(gates, 3 * l.H, l.H));
  Var c = t.add(t.cmul(f, s.c), t.cmul(i, g));
  Var h = t.cmul(o, t.tanh_(c));
  return {h, c};
}

Var Model::mlp(Tape& t, const Mlp& m, Var x) const {
  return t.affine(*m.W2, *m.b2, t.tanh_(t.affine(*m.W1, *m.b1, x)));
}

int Model::packed_head_dim(const std::vector<int>& subset) const {
  int n = 0;
  for (int i : subset) n += head_dim(cfg_.kinds[i], cfg_.mixture_k);
  return n;
}

std::vector<dist::HeadNode> Model::slice_heads(Tape& t, Var packed,
                                               const std::vector<int>& subset) const {
  std::vector<dist::HeadNode> heads;
  heads.reserve(subset.size());
  int off = 0;
  const int K = cfg_.mixture_k;
  for (int i : subset) {
    dist::HeadNode h;
    h.kind = cfg_.kinds[i];
    if (h.kind == ElementKind::Binary) {
      h.logit = t.segment(packed, off, 1);
      off += 1;
    } else {
      h.logits = t.segment(packed, off, K);
      h.means = t.segment(packed, off + K, K);
      h.log_scales = t.softclamp(t.segment(packed, off + 2 * K, K), dist::kLogScaleClamp);
      off += 3 * K;
    }
    heads.push_back(h);
  }
  return heads;
}

dist::HeadNode Model::kind_head(Tape& t, Var feat, ElementKind kind) const {
  dist::HeadNode h;
  h.kind = kind;
  if (kind == ElementKind::Binary) {
    h.logit = t.affine(*low_head_bin_W_, *low_head_bin_b_, feat);
  } else {
    const int K = cfg_.mixture_k;
    Var packed = t.affine(*low_head_cont_W_, *low_head_cont_b_, feat);
    h.logits = t.segment(packed, 0, K);
    h.means = t.segment(packed, K, K);
    h.log_scales = t.softclamp(t.segment(packed, 2 * K, K), dist::kLogScaleClamp);
  }
  return h;
}

// ---------------------------------------------------------------------------
// high-level recurrence

Model::StepContext Model::high_level(Tape& tape, const data::StepSequence& seq, Mode mode,
                                     ad::Rng* noise, bool stochastic) const {
  const int T = seq.T();
  StepContext ctx;
  ctx.feat.reserve(T);

  if (!stochastic) {
    LstmState s = lstm_init(tape, fwd_);
    for (int t = 0; t < T; ++t) {
      Var in = t == 0 ? tape.pvec(*start_)
                      : tape.constant(seq.steps.row(t - 1).transpose());
      s = lstm_step(tape, fwd_, in, s);
      ctx.feat.push_back(s.h);
    }
    return ctx;
  }

  const int Z = cfg_.latent;
  LatentTrace trace;

  std::vector<Var> bwd_states(T);
  if (mode == Mode::Posterior) {
    LstmState b = lstm_init(tape, bwd_);
    for (int t = T - 1; t >= 0; --t) {
      b = lstm_step(tape, bwd_, tape.constant(seq.steps.row(t).transpose()), b);
      bwd_states[t] = b.h;
    }
    ctx.backward_states = bwd_states;
  }

  LstmState v = lstm_init(tape, fwd_);
  LstmState e;
  if (cfg_.variant == SrnnVariant::Simplified) e = lstm_init(tape, emit_rnn_);

  for (int t = 0; t < T; ++t) {
    Var v_prev = v.h;

    Var prior_out = mlp(tape, prior_, v_prev);
    Var pm = tape.segment(prior_out, 0, Z);
    Var pl = tape.softclamp(tape.segment(prior_out, Z, Z), dist::kLogScaleClamp);
    trace.prior_mean.push_back(pm);
    trace.prior_logs.push_back(pl);

    Var zm = pm, zl = pl;
    if (mode == Mode::Posterior) {
      Var post_out = mlp(tape, post_, tape.concat({v_prev, bwd_states[t]}));
      zm = tape.segment(post_out, 0, Z);
      zl = tape.softclamp(tape.segment(post_out, Z, Z), dist::kLogScaleClamp);
      trace.post_mean.push_back(zm);
      trace.post_logs.push_back(zl);
    }

    Vec eps = noise ? noise->normal_vec(Z) : Vec::Zero(Z);
    Var z = tape.reparam(zm, zl, eps);
    trace.z.push_back(z);
    trace.noise.push_back(eps);

    if (cfg_.variant == SrnnVariant::ZForcing) {
      Var feat = tape.tanh_(tape.affine(*emit_W_, *emit_b_, tape.concat({v_prev, z})));
      ctx.feat.push_back(feat);
      v = lstm_step(tape, fwd_,
                    tape.concat({tape.constant(seq.steps.row(t).transpose()), z}), v);
    } else {
      e = lstm_step(tape, emit_rnn_, tape.concat({v_prev, z}), e);
      ctx.feat.push_back(e.h);
      v = lstm_step(tape, fwd_, tape.constant(seq.steps.row(t).transpose()), v);
    }
  }
  ctx.latents = std::move(trace);
  return ctx;
}

// ---------------------------------------------------------------------------
// family forwards

ForwardResult Model::forward_factorized(Tape& tape, const data::StepSequence& seq) const {
  std::vector<int> all(cfg_.L);
  for (int i = 0; i < cfg_.L; ++i) all[i] = i;
  StepContext ctx = high_level(tape, seq, Mode::Prior, nullptr, false);
  ForwardResult r;
  for (int t = 0; t < seq.T(); ++t)
    r.steps.push_back(slice_heads(tape, tape.affine(*head_W_, *head_b_, ctx.feat[t]), all));
  return r;
}

ForwardResult Model::forward_delta(Tape& tape, const data::StepSequence& seq) const {
  const auto& a = cfg_.leak.a_indices;
  const auto& b = cfg_.leak.b_indices;
  StepContext ctx = high_level(tape, seq, Mode::Prior, nullptr, false);
  ForwardResult r;
  for (int t = 0; t < seq.T(); ++t) {
    Var h = ctx.feat[t];
    auto heads_a = slice_heads(tape, tape.affine(*head_W_, *head_b_, h), a);
    Vec xa(a.size());
    for (size_t j = 0; j < a.size(); ++j) xa(static_cast<int>(j)) = seq.steps(t, a[j]);
    Var u = tape.tanh_(tape.affine(*leak_W_, *leak_b_, tape.constant(xa)));
    auto heads_b =
        slice_heads(tape, tape.affine(*head_b_W_, *head_b_b_, tape.concat({h, u})), b);
    // reassemble in natural element order
    std::vector<dist::HeadNode> heads(cfg_.L);
    for (size_t j = 0; j < a.size(); ++j) heads[a[j]] = heads_a[j];
    for (size_t j = 0; j < b.size(); ++j) heads[b[j]] = heads_b[j];
    r.steps.push_back(std::move(heads));
  }
  return r;
}

ForwardResult Model::forward_srnn(Tape& tape, const data::StepSequence& seq, Mode mode,
                                  ad::Rng* noise) const {
  std::vector<int> all(cfg_.L);
  for (int i = 0; i < cfg_.L; ++i) all[i] = i;
  StepContext ctx = high_level(tape, seq, mode, noise, true);
  ForwardResult r;
  r.stochastic = true;
  for (int t = 0; t < seq.T(); ++t)
    r.steps.push_back(slice_heads(tape, tape.affine(*head_W_, *head_b_, ctx.feat[t]), all));
  r.latents = std::move(ctx.latents);
  r.backward_states = std::move(ctx.backward_states);
  return r;
}

std::vector<dist::HeadNode> Model::low_level_heads(Tape& tape, Var ctx,
                                                   const Vec& x_t) const {
  const int L = cfg_.L;
  std::vector<dist::HeadNode> heads;
  heads.reserve(L);
  if (cfg_.low_decoder == LowDecoder::Recurrent) {
    LstmState g = lstm_init(tape, low_);
    for (int i = 0; i < L; ++i) {
      Var prev = i == 0 ? tape.pvec(*low_start_)
                        : tape.constant(Vec::Constant(1, x_t(i - 1)));
      g = lstm_step(tape, low_, tape.concat({prev, ctx}), g);
      heads.push_back(kind_head(tape, g.h, cfg_.kinds[i]));
    }
  } else {
    for (int i = 0; i < L; ++i) {
      Var in = i == 0 ? ctx : tape.concat({tape.constant(x_t.head(i)), ctx});
      Var g = tape.tanh_(tape.affine(*mmlp_W_[i], *mmlp_b_[i], in));
      heads.push_back(kind_head(tape, g, cfg_.kinds[i]));
    }
  }
  return heads;
}

ForwardResult Model::forward_hier(Tape& tape, const data::StepSequence& seq, Mode mode,
                                  ad::Rng* noise) const {
  const bool stoch = cfg_.family == Family::SrnnHier;
  StepContext ctx = high_level(tape, seq, mode, noise, stoch);
  ForwardResult r;
  r.stochastic = stoch;
  for (int t = 0; t < seq.T(); ++t)
    r.steps.push_back(low_level_heads(tape, ctx.feat[t], seq.steps.row(t).transpose()));
  r.latents = std::move(ctx.latents);
  r.backward_states = std::move(ctx.backward_states);
  return r;
}

ForwardResult Model::forward(Tape& tape, const data::StepSequence& seq, Mode mode,
                             ad::Rng* noise) const {
  if (seq.L() != cfg_.L)
    throw std::invalid_argument("forward: sequence L does not match model config");
  if (seq.T() < 1) throw std::invalid_argument("forward: empty sequence");
  switch (cfg_.family) {
    case Family::FRnn:
    case Family::RnnFlat:
      return forward_factorized(tape, seq);
    case Family::DeltaRnn:
      return forward_delta(tape, seq);
    case Family::FSrnn:
    case Family::SrnnFlat:
      return forward_srnn(tape, seq, mode, noise);
    case Family::RnnHier:
    case Family::SrnnHier:
      return forward_hier(tape, seq, mode, noise);
  }
  throw std::logic_error("forward: unreachable");
}

ForwardResult Model::forward_frames(Tape& tape, const data::FrameSequence& frames,
                                    Mode mode, ad::Rng* noise) const {
  if (!is_flat(cfg_.family))
    throw std::invalid_argument("forward_frames: only flat families consume frames");
  data::StepSequence s;
  s.steps.resize(static_cast<int>(frames.frames.size()), 1);
  for (size_t k = 0; k < frames.frames.size(); ++k)
    s.steps(static_cast<int>(k), 0) = frames.frames[k];
  s.kinds = cfg_.kinds;
  return forward(tape, s, mode, noise);
}

Var Model::aux_pred_logpdf(Tape& tape, Var z, Var target) const {
  if (!aux_logs_)
    throw std::logic_error("aux_pred_logpdf: auxiliary head only exists for z-forcing");
  Var mean = mlp(tape, aux_, z);
  Var logs = tape.softclamp(tape.pvec(*aux_logs_), dist::kLogScaleClamp);
  return tape.gauss_logpdf(mean, logs, tape.val(target));
}

// ---------------------------------------------------------------------------
// ancestral sampling

data::StepSequence Model::generate(int T, std::uint64_t seed) const {
  ad::Rng rng(seed);
  Tape tape;
  const int L = cfg_.L;
  data::StepSequence out;
  out.steps.resize(T, L);
  out.kinds = cfg_.kinds;

  auto sample_step_factorized = [&](Var feat, int t) {
    std::vector<int> all(L);
    for (int i = 0; i < L; ++i) all[i] = i;
    auto heads = slice_heads(tape, tape.affine(*head_W_, *head_b_, feat), all);
    for (int i = 0; i < L; ++i) out.steps(t, i) = dist::sample_head(tape, heads[i], rng);
  };

  auto sample_step_hier = [&](Var ctx, int t) {
    if (cfg_.low_decoder == LowDecoder::Recurrent) {
      LstmState g = lstm_init(tape, low_);
      for (int i = 0; i < L; ++i) {
        Var prev = i == 0 ? tape.pvec(*low_start_)
                          : tape.constant(Vec::Constant(1, out.steps(t, i - 1)));
        g = lstm_step(tape, low_, tape.concat({prev, ctx}), g);
        out.steps(t, i) = dist::sample_head(tape, kind_head(tape, g.h, cfg_.kinds[i]), rng);
      }
    } else {
      for (int i = 0; i < L; ++i) {
        Var in = i == 0 ? ctx
                        : tape.concat({tape.constant(out.steps.row(t).head(i).transpose()),
                                       ctx});
        Var g = tape.tanh_(tape.affine(*mmlp_W_[i], *mmlp_b_[i], in));
        out.steps(t, i) = dist::sample_head(tape, kind_head(tape, g, cfg_.kinds[i]), rng);
      }
    }
  };

  const bool stoch = is_stochastic(cfg_.family);
  if (!stoch) {
    LstmState s = lstm_init(tape, fwd_);
    for (int t = 0; t < T; ++t) {
      Var in = t == 0 ? tape.pvec(*start_)
                      : tape.constant(out.steps.row(t - 1).transpose());
      s = lstm_step(tape, fwd_, in, s);
      if (is_hier(cfg_.family)) {
        sample_step_hier(s.h, t);
      } else if (cfg_.family == Family::DeltaRnn) {
        const auto& a = cfg_.leak.a_indices;
        const auto& b = cfg_.leak.b_indices;
        auto heads_a = slice_heads(tape, tape.affine(*head_W_, *head_b_, s.h), a);
        for (size_t j = 0; j < a.size(); ++j)
          out.steps(t, a[j]) = dist::sample_head(tape, heads_a[j], rng);
        Vec xa(a.size());
        for (size_t j = 0; j < a.size(); ++j) xa(static_cast<int>(j)) = out.steps(t, a[j]);
        Var u = tape.tanh_(tape.affine(*leak_W_, *leak_b_, tape.constant(xa)));
        auto heads_b =
            slice_heads(tape, tape.affine(*head_b_W_, *head_b_b_, tape.concat({s.h, u})), b);
        for (size_t j = 0; j < b.size(); ++j)
          out.steps(t, b[j]) = dist::sample_head(tape, heads_b[j], rng);
      } else {
        sample_step_factorized(s.h, t);
      }
    }
    return out;
  }

  const int Z = cfg_.latent;
  LstmState v = lstm_init(tape, fwd_);
  LstmState e;
  if (cfg_.variant == SrnnVariant::Simplified) e = lstm_init(tape, emit_rnn_);
  for (int t = 0; t < T; ++t) {
    Var v_prev = v.h;
    Var prior_out = mlp(tape, prior_, v_prev);
    Var pm = tape.segment(prior_out, 0, Z);
    Var pl = tape.softclamp(tape.segment(prior_out, Z, Z), dist::kLogScaleClamp);
    Var z = tape.reparam(pm, pl, rng.normal_vec(Z));
    Var feat;
    if (cfg_.variant == SrnnVariant::ZForcing) {
      feat = tape.tanh_(tape.affine(*emit_W_, *emit_b_, tape.concat({v_prev, z})));
    } else {
      e = lstm_step(tape, emit_rnn_, tape.concat({v_prev, z}), e);
      feat = e.h;
    }
    if (is_hier(cfg_.family))
      sample_step_hier(feat, t);
    else
      sample_step_factorized(feat, t);
    Var x_in = tape.constant(out.steps.row(t).transpose());
    if (cfg_.variant == SrnnVariant::ZForcing)
      v = lstm_step(tape, fwd_, tape.concat({x_in, z}), v);
    else
      v = lstm_step(tape, fwd_, x_in, v);
  }
  return out;
}

}  // namespace seqlab::model
