#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqlab/ad.hpp"
#include "seqlab/data.hpp"
#include "seqlab/dist.hpp"

// The model zoo: deterministic and stochastic recurrent sequence models with
// factorized, leaked-subset, hierarchical and flat output decompositions.
// All families share one forward-pass contract returning per-step (and for
// hier/flat per-element) output heads on the tape.

namespace seqlab::model {

using ad::Param;
using ad::ParamStore;
using ad::Tape;
using ad::Var;
using ad::Vec;

enum class Family { FRnn, FSrnn, DeltaRnn, RnnHier, SrnnHier, RnnFlat, SrnnFlat };
enum class Mode { Prior, Posterior };
enum class SrnnVariant { ZForcing, Simplified };
enum class LowDecoder { Recurrent, MaskedMlp };

bool is_stochastic(Family f);
bool is_hier(Family f);
bool is_flat(Family f);
std::string family_name(Family f);
Family family_from_name(const std::string& s);

struct ModelConfig {
  Family family = Family::FRnn;
  int width = 32;        // recurrent state size
  int latent = 8;        // |z_t| for stochastic families
  int low_width = 16;    // hier low-level decoder size
  int mixture_k = 20;    // GMM components for continuous heads
  int L = 1;             // elements per step the model is built for
  std::vector<data::ElementKind> kinds;  // size L
  data::LeakSplit leak;                  // DeltaRnn only
  LowDecoder low_decoder = LowDecoder::Recurrent;
  SrnnVariant variant = SrnnVariant::ZForcing;
  std::uint64_t init_seed = 1;
};

struct LatentTrace {
  std::vector<Var> prior_mean, prior_logs;
  std::vector<Var> post_mean, post_logs;   // posterior mode only
  std::vector<Var> z;
  std::vector<Vec> noise;
};

struct ForwardResult {
  // steps[t][i]: output head of element i at step t
  std::vector<std::vector<dist::HeadNode>> steps;
  std::optional<LatentTrace> latents;
  std::vector<Var> backward_states;  // z-forcing posterior mode (aux-loss targets)
  bool stochastic = false;
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  // noise == nullptr means zero noise draws (z = distribution mean).
  ForwardResult forward(Tape& tape, const data::StepSequence& seq, Mode mode,
                        ad::Rng* noise = nullptr) const;

  // Flat families consume a frame sequence (one element per step).
  ForwardResult forward_frames(Tape& tape, const data::FrameSequence& frames, Mode mode,
                               ad::Rng* noise = nullptr) const;

  data::StepSequence generate(int T, std::uint64_t seed) const;

  // Log-density head for the z-forcing auxiliary task (predict the backward
  // state from z_t).
  Var aux_pred_logpdf(Tape& tape, Var z, Var target) const;

  long count_parameters() const { return params_.count(); }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  struct Lstm {
    Param *W, *b, *h0, *c0;
    int in = 0, H = 0;
  };
  struct LstmState {
    Var h, c;
  };
  struct Mlp {
    Param *W1, *b1, *W2, *b2;
  };

  Lstm make_lstm(const std::string& name, int in, int H, ad::Rng& rng);
  Mlp make_mlp(const std::string& name, int in, int hidden, int out, ad::Rng& rng);
  LstmState lstm_init(Tape& t, const Lstm& l) const;
  LstmState lstm_step(Tape& t, const Lstm& l, Var input, const LstmState& s) const;
  Var mlp(Tape& t, const Mlp& m, Var x) const;

  // slice a packed head-affine output into per-element heads
  std::vector<dist::HeadNode> slice_heads(Tape& t, Var packed,
                                          const std::vector<int>& subset) const;
  int packed_head_dim(const std::vector<int>& subset) const;

  dist::HeadNode kind_head(Tape& t, Var feat, data::ElementKind kind) const;

  ForwardResult forward_factorized(Tape& tape, const data::StepSequence& seq) const;
  ForwardResult forward_delta(Tape& tape, const data::StepSequence& seq) const;
  ForwardResult forward_srnn(Tape& tape, const data::StepSequence& seq, Mode mode,
                             ad::Rng* noise) const;
  ForwardResult forward_hier(Tape& tape, const data::StepSequence& seq, Mode mode,
                             ad::Rng* noise) const;

  // high-level recurrence shared by factorized/stochastic families; emits the
  // per-step context feature used by the emission path
  struct StepContext {
    std::vector<Var> feat;  // per step
    std::optional<LatentTrace> latents;
    std::vector<Var> backward_states;
  };
  StepContext high_level(Tape& tape, const data::StepSequence& seq, Mode mode,
                         ad::Rng* noise, bool stochastic) const;

  std::vector<dist::HeadNode> low_level_heads(Tape& tape, Var ctx,
                                              const Vec& x_t) const;

  ModelConfig cfg_;
  ParamStore params_;

  // deterministic / high-level recurrence
  Lstm fwd_;
  Param* start_ = nullptr;  // learned first-step input
  Param *head_W_ = nullptr, *head_b_ = nullptr;

  // delta
  Param *leak_W_ = nullptr, *leak_b_ = nullptr;
  Param *head_b_W_ = nullptr, *head_b_b_ = nullptr;

  // stochastic
  Lstm bwd_;
  Lstm emit_rnn_;  // simplified variant emission recurrence
  Mlp prior_, post_;
  Param *emit_W_ = nullptr, *emit_b_ = nullptr;  // z-forcing emission feature
  Mlp aux_;
  Param* aux_logs_ = nullptr;

  // hier low-level
  Lstm low_;
  Param* low_start_ = nullptr;
  std::vector<Param*> mmlp_W_, mmlp_b_;  // masked MLP, per position
  Param *low_head_cont_W_ = nullptr, *low_head_cont_b_ = nullptr;
  Param *low_head_bin_W_ = nullptr, *low_head_bin_b_ = nullptr;

  int ctx_dim_ = 0;  // context feature width feeding the emission path
};

}  // namespace seqlab::model
