#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation on a tape of vector-valued nodes.
// Parameters live outside the tape in a ParamStore; a tape is built per
// forward pass and discarded afterwards. All nodes are Eigen column vectors
// (scalars are 1-vectors). Fused ops cover the distribution kernels so the
// graphs stay small.

namespace seqlab::ad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  int size() const { return static_cast<int>(value.size()); }
};

// Deterministic RNG with fully specified output (mt19937_64 bits plus
// hand-rolled uniform/normal maps), so runs are bit-reproducible for a
// given seed on a fixed platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64();
  double uniform();                  // [0, 1)
  double uniform(double lo, double hi);
  double normal();                   // N(0, 1), Box-Muller
  Vec normal_vec(int n);
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n)
  // Fisher-Yates; order fully determined by the seed.
  void shuffle(std::vector<int>& v);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param& add_init(const std::string& name, int rows, int cols, Rng& rng, double scale);
  Param* find(const std::string& name);
  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }

  long count() const;
  void zero_grad();
  double grad_norm() const;
  void scale_grads(double s);

  Vec flatten() const;
  Vec flatten_grads() const;
  void set_flat(const Vec& flat);

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
 public:
  const Vec& val(Var v) const { return nodes_[v.idx].val; }
  Vec& grad_of(Var v) { return nodes_[v.idx].grad; }
  int dim(Var v) const { return static_cast<int>(nodes_[v.idx].val.size()); }
  double scalar(Var v) const { return nodes_[v.idx].val(0); }

  Var constant(Vec v);
  Var constant(double x);
  // Leaf over a vector-shaped parameter (n x 1).
  Var pvec(Param& p);
  // y = W * x + b
  Var affine(Param& W, Param& b, Var x);

  Var add(Var a, Var b);
  Var add_all(const std::vector<Var>& xs);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var cmul(Var a, Var b);
  Var concat(const std::vector<Var>& xs);
  Var segment(Var a, int start, int len);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var exp_(Var a);
  Var sum(Var a);
  Var dot(Var a, Var b);
  // c * tanh(x / c): smooth clamp to (-c, c), identity near zero.
  Var softclamp(Var a, double c);
  // Identity value, blocks gradient flow.
  Var stopgrad(Var a);

  // Fused distribution kernels. Observations are constants.
  // Diagonal Gaussian log-density of x under (mu, exp(logs)); scalar node.
  Var gauss_logpdf(Var mu, Var logs, const Vec& x);
  // Univariate K-component Gaussian mixture log-density at x.
  Var gmm_logpdf(Var logits, Var means, Var logs, double x);
  // Sum over elements of Bernoulli log-pmf; x entries in {0,1}.
  Var bernoulli_logpmf(Var logits, const Vec& x);
  // Closed-form KL(q || p) between diagonal Gaussians; scalar node.
  Var gauss_kl(Var mu_q, Var logs_q, Var mu_p, Var logs_p);
  // z = mu + exp(logs) .* eps
  Var reparam(Var mu, Var logs, const Vec& eps);

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Vec val;
    Vec grad;
    std::function<void(Tape&)> back;  // null for leaves/constants
  };

  Var push(Vec val, std::function<void(Tape&)> back);
  std::vector<Node> nodes_;
};

}  // namespace seqlab::ad
