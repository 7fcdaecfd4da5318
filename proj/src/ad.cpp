#include "seqlab/ad.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab::ad {

// ---------------------------------------------------------------------------
// Rng

std::uint64_t Rng::next_u64() {
  // splitmix64; fully specified, no library distribution objects.
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

Vec Rng::normal_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal();
  return v;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // modulo bias is irrelevant at these sizes
  return next_u64() % n;
}

void Rng::shuffle(std::vector<int>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// ParamStore

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  params_.push_back(std::make_unique<Param>(name, rows, cols));
  return *params_.back();
}

Param& ParamStore::add_init(const std::string& name, int rows, int cols, Rng& rng,
                            double scale) {
  Param& p = add(name, rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) p.value(i, j) = rng.uniform(-scale, scale);
  return p;
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

long ParamStore::count() const {
  long n = 0;
  for (auto& p : params_) n += p->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (auto& p : params_) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::scale_grads(double s) {
  for (auto& p : params_) p->grad *= s;
}

Vec ParamStore::flatten() const {
  Vec out(count());
  long k = 0;
  for (auto& p : params_) {
    Eigen::Map<const Vec> m(p->value.data(), p->size());
    out.segment(k, p->size()) = m;
    k += p->size();
  }
  return out;
}

Vec ParamStore::flatten_grads() const {
  Vec out(count());
  long k = 0;
  for (auto& p : params_) {
    Eigen::Map<const Vec> m(p->grad.data(), p->size());
    out.segment(k, p->size()) = m;
    k += p->size();
  }
  return out;
}

void ParamStore::set_flat(const Vec& flat) {
  long k = 0;
  for (auto& p : params_) {
    Eigen::Map<Vec> m(p->value.data(), p->size());
    m = flat.segment(k, p->size());
    k += p->size();
  }
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Vec val, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.grad = Vec::Zero(n.val.size());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Vec v) { return push(std::move(v), nullptr); }
Var Tape::constant(double x) { return push(Vec::Constant(1, x), nullptr); }

Var Tape::pvec(Param& p) {
  if (p.value.cols() != 1) throw std::logic_error("pvec: param is not a vector");
  Param* pp = &p;
  Var out = push(p.value.col(0), nullptr);
  int idx = out.idx;
  nodes_[idx].back = [pp, idx](Tape& t) { pp->grad.col(0) += t.nodes_[idx].grad; };
  return out;
}

Var Tape::affine(Param& W, Param& b, Var x) {
  if (W.value.cols() != nodes_[x.idx].val.size())
    throw std::logic_error("affine: shape mismatch for " + W.name);
  Param* pW = &W;
  Param* pb = &b;
  Var out = push(W.value * nodes_[x.idx].val + b.value.col(0), nullptr);
  int oi = out.idx, xi = x.idx;
  nodes_[oi].back = [pW, pb, oi, xi](Tape& t) {
    const Vec& g = t.nodes_[oi].grad;
    pW->grad.noalias() += g * t.nodes_[xi].val.transpose();
    pb->grad.col(0) += g;
    t.nodes_[xi].grad.noalias() += pW->value.transpose() * g;
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(nodes_[a.idx].val + nodes_[b.idx].val, nullptr);
  int oi = out.idx, ai = a.idx, bi = b.idx;
  nodes_[oi].back = [oi, ai, bi](Tape& t) {
    t.nodes_[ai].grad += t.nodes_[oi].grad;
    t.nodes_[bi].grad += t.nodes_[oi].grad;
  };
  return out;
}

Var Tape::add_all(const std::vector<Var>& xs) {
  if (xs.empty()) return constant(0.0);
  Vec v = nodes_[xs[0].idx].val;
  for (size_t i = 1; i < xs.size(); ++i) v += nodes_[xs[i].idx].val;
  std::vector<int> idxs;
  idxs.reserve(xs.size());
  for (auto x : xs) idxs.push_back(x.idx);
  Var out = push(std::move(v), nullptr);
  int oi = out.idx;
  nodes_[oi].back = [oi, idxs](Tape& t) {
    for (int i : idxs) t.nodes_[i].grad += t.nodes_[oi].grad;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(nodes_[a.idx].val - nodes_[b.idx].val, nullptr);
  int oi = out.idx, ai = a.idx, bi = b.idx;
  nodes_[oi].back = [oi, ai, bi](Tape& t) {
    t.nodes_[ai].grad += t.nodes_[oi].grad;
    t.nodes_[bi].grad -= t.nodes_[oi].grad;
  };
  return out;
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double c) {
  Var out = push(nodes_[a.idx].val * c, nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai, c](Tape& t) { t.nodes_[ai].grad += c * t.nodes_[oi].grad; };
  return out;
}

Var Tape::cmul(Var a, Var b) {
  Var out = push(nodes_[a.idx].val.cwiseProduct(nodes_[b.idx].val), nullptr);
  int oi = out.idx, ai = a.idx, bi = b.idx;
  nodes_[oi].back = [oi, ai, bi](Tape& t) {
    t.nodes_[ai].grad += t.nodes_[oi].grad.cwiseProduct(t.nodes_[bi].val);
    t.nodes_[bi].grad += t.nodes_[oi].grad.cwiseProduct(t.nodes_[ai].val);
  };
  return out;
}

Var Tape::concat(const std::vector<Var>& xs) {
  int n = 0;
  for (auto x : xs) n += dim(x);
  Vec v(n);
  int k = 0;
  std::vector<int> idxs;
  std::vector<int> offs;
  for (auto x : xs) {
    v.segment(k, dim(x)) = nodes_[x.idx].val;
    idxs.push_back(x.idx);
    offs.push_back(k);
    k += dim(x);
  }
  Var out = push(std::move(v), nullptr);
  int oi = out.idx;
  nodes_[oi].back = [oi, idxs, offs](Tape& t) {
    for (size_t i = 0; i < idxs.size(); ++i) {
      auto& g = t.nodes_[idxs[i]].grad;
      g += t.nodes_[oi].grad.segment(offs[i], g.size());
    }
  };
  return out;
}

Var Tape::segment(Var a, int start, int len) {
  Var out = push(nodes_[a.idx].val.segment(start, len), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai, start, len](Tape& t) {
    t.nodes_[ai].grad.segment(start, len) += t.nodes_[oi].grad;
  };
  return out;
}

Var Tape::tanh_(Var a) {
  Var out = push(nodes_[a.idx].val.array().tanh().matrix(), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai](Tape& t) {
    const Vec& y = t.nodes_[oi].val;
    t.nodes_[ai].grad.array() +=
        t.nodes_[oi].grad.array() * (1.0 - y.array().square());
  };
  return out;
}

Var Tape::sigmoid_(Var a) {
  Vec y = (1.0 / (1.0 + (-nodes_[a.idx].val.array()).exp())).matrix();
  Var out = push(std::move(y), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai](Tape& t) {
    const Vec& y = t.nodes_[oi].val;
    t.nodes_[ai].grad.array() += t.nodes_[oi].grad.array() * y.array() * (1.0 - y.array());
  };
  return out;
}

Var Tape::exp_(Var a) {
  Var out = push(nodes_[a.idx].val.array().exp().matrix(), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai](Tape& t) {
    t.nodes_[ai].grad.array() += t.nodes_[oi].grad.array() * t.nodes_[oi].val.array();
  };
  return out;
}

Var Tape::sum(Var a) {
  Var out = push(Vec::Constant(1, nodes_[a.idx].val.sum()), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai](Tape& t) {
    t.nodes_[ai].grad.array() += t.nodes_[oi].grad(0);
  };
  return out;
}

Var Tape::dot(Var a, Var b) {
  Var out = push(Vec::Constant(1, nodes_[a.idx].val.dot(nodes_[b.idx].val)), nullptr);
  int oi = out.idx, ai = a.idx, bi = b.idx;
  nodes_[oi].back = [oi, ai, bi](Tape& t) {
    double g = t.nodes_[oi].grad(0);
    t.nodes_[ai].grad += g * t.nodes_[bi].val;
    t.nodes_[bi].grad += g * t.nodes_[ai].val;
  };
  return out;
}

Var Tape::softclamp(Var a, double c) {
  Vec y = (c * (nodes_[a.idx].val.array() / c).tanh()).matrix();
  Var out = push(std::move(y), nullptr);
  int oi = out.idx, ai = a.idx;
  nodes_[oi].back = [oi, ai, c](Tape& t) {
    // dy/dx = 1 - (y/c)^2
    t.nodes_[ai].grad.array() +=
        t.nodes_[oi].grad.array() * (1.0 - (t.nodes_[oi].val.array() / c).square());
  };
  return out;
}

Var Tape::stopgrad(Var a) { return push(nodes_[a.idx].val, nullptr); }

Var Tape::gauss_logpdf(Var mu, Var logs, const Vec& x) {
  const Vec& m = nodes_[mu.idx].val;
  const Vec& ls = nodes_[logs.idx].val;
  if (m.size() != x.size() || ls.size() != x.size())
    throw std::invalid_argument("gauss_logpdf: dimension mismatch");
  constexpr double kLog2Pi = 1.8378770664093453;
  Vec inv_var = (-2.0 * ls.array()).exp();
  Vec d = x - m;
  double lp = -0.5 * x.size() * kLog2Pi - ls.sum() -
              0.5 * (d.array().square() * inv_var.array()).sum();
  Var out = push(Vec::Constant(1, lp), nullptr);
  int oi = out.idx, mi = mu.idx, li = logs.idx;
  Vec dv = std::move(d), iv = std::move(inv_var);
  nodes_[oi].back = [oi, mi, li, dv, iv](Tape& t) {
    double g = t.nodes_[oi].grad(0);
    t.nodes_[mi].grad.array() += g * dv.array() * iv.array();
    t.nodes_[li].grad.array() += g * (dv.array().square() * iv.array() - 1.0);
  };
  return out;
}

Var Tape::gmm_logpdf(Var logits, Var means, Var logs, double x) {
  const Vec& lg = nodes_[logits.idx].val;
  const Vec& mu = nodes_[means.idx].val;
  const Vec& ls = nodes_[logs.idx].val;
  int K = static_cast<int>(lg.size());
  if (mu.size() != K || ls.size() != K)
    throw std::invalid_argument("gmm_logpdf: component count mismatch");
  constexpr double kLog2Pi = 1.8378770664093453;
  // log w_k + log N(x; mu_k, sigma_k^2), via log-sum-exp
  double lmax = lg.maxCoeff();
  Vec logw = lg.array() - (lmax + std::log((lg.array() - lmax).exp().sum()));
  Vec inv_var = (-2.0 * ls.array()).exp();
  Vec d = Vec::Constant(K, x) - mu;
  Vec comp = logw.array() - 0.5 * kLog2Pi - ls.array() -
             0.5 * d.array().square() * inv_var.array();
  double cmax = comp.maxCoeff();
  double lse = cmax + std::log((comp.array() - cmax).exp().sum());
  // responsibilities
  Vec r = (comp.array() - lse).exp();
  Vec w = logw.array().exp();
  Var out = push(Vec::Constant(1, lse), nullptr);
  int oi = out.idx, gi = logits.idx, mi = means.idx, li = logs.idx;
  Vec dv = std::move(d), iv = std::move(inv_var), rv = std::move(r), wv = std::move(w);
  nodes_[oi].back = [oi, gi, mi, li, dv, iv, rv, wv](Tape& t) {
    double g = t.nodes_[oi].grad(0);
    t.nodes_[gi].grad.array() += g * (rv.array() - wv.array());
    t.nodes_[mi].grad.array() += g * rv.array() * dv.array() * iv.array();
    t.nodes_[li].grad.array() +=
        g * rv.array() * (dv.array().square() * iv.array() - 1.0);
  };
  return out;
}

Var Tape::bernoulli_logpmf(Var logits, const Vec& x) {
  const Vec& lg = nodes_[logits.idx].val;
  if (lg.size() != x.size())
    throw std::invalid_argument("bernoulli_logpmf: dimension mismatch");
  // log p = x*logit - softplus(logit), stable in the logit
  double lp = 0.0;
  for (int i = 0; i < lg.size(); ++i) {
    double l = lg(i);
    double sp = l > 0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
    lp += x(i) * l - sp;
  }
  Vec sig = (1.0 / (1.0 + (-lg.array()).exp())).matrix();
  Var out = push(Vec::Constant(1, lp), nullptr);
  int oi = out.idx, gi = logits.idx;
  Vec xs = x, sg = std::move(sig);
  nodes_[oi].back = [oi, gi, xs, sg](Tape& t) {
    t.nodes_[gi].grad.array() += t.nodes_[oi].grad(0) * (xs.array() - sg.array());
  };
  return out;
}

Var Tape::gauss_kl(Var mu_q, Var logs_q, Var mu_p, Var logs_p) {
  const Vec& mq = nodes_[mu_q.idx].val;
  const Vec& lq = nodes_[logs_q.idx].val;
  const Vec& mp = nodes_[mu_p.idx].val;
  const Vec& lp = nodes_[logs_p.idx].val;
  int n = static_cast<int>(mq.size());
  if (lq.size() != n || mp.size() != n || lp.size() != n)
    throw std::invalid_argument("gauss_kl: dimension mismatch");
  Vec var_ratio = (2.0 * (lq - lp).array()).exp();       // sq^2 / sp^2
  Vec inv_vp = (-2.0 * lp.array()).exp();
  Vec d = mq - mp;
  double kl = ((lp - lq).array() + 0.5 * (var_ratio.array() + d.array().square() * inv_vp.array() - 1.0)).sum();
  Var out = push(Vec::Constant(1, kl), nullptr);
  int oi = out.idx, mqi = mu_q.idx, lqi = logs_q.idx, mpi = mu_p.idx, lpi = logs_p.idx;
  Vec vr = std::move(var_ratio), iv = std::move(inv_vp), dv = std::move(d);
  nodes_[oi].back = [oi, mqi, lqi, mpi, lpi, vr, iv, dv](Tape& t) {
    double g = t.nodes_[oi].grad(0);
    t.nodes_[mqi].grad.array() += g * dv.array() * iv.array();
    t.nodes_[mpi].grad.array() -= g * dv.array() * iv.array();
    t.nodes_[lqi].grad.array() += g * (vr.array() - 1.0);
    t.nodes_[lpi].grad.array() +=
        g * (1.0 - vr.array() - dv.array().square() * iv.array());
  };
  return out;
}

Var Tape::reparam(Var mu, Var logs, const Vec& eps) {
  const Vec& m = nodes_[mu.idx].val;
  const Vec& ls = nodes_[logs.idx].val;
  if (m.size() != eps.size() || ls.size() != eps.size())
    throw std::invalid_argument("reparam: dimension mismatch");
  Vec sig = ls.array().exp();
  Var out = push(m + sig.cwiseProduct(eps), nullptr);
  int oi = out.idx, mi = mu.idx, li = logs.idx;
  Vec se = sig.cwiseProduct(eps);
  nodes_[oi].back = [oi, mi, li, se](Tape& t) {
    t.nodes_[mi].grad += t.nodes_[oi].grad;
    t.nodes_[li].grad.array() += t.nodes_[oi].grad.array() * se.array();
  };
  return out;
}

void Tape::backward(Var loss) {
  if (dim(loss) != 1) throw std::logic_error("backward: loss must be scalar");
  nodes_[loss.idx].grad(0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].back && (nodes_[i].grad.array() != 0.0).any()) nodes_[i].back(*this);
  }
}

}  // namespace seqlab::ad
