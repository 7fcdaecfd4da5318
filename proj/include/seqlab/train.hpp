#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/ad.hpp"
#include "seqlab/data.hpp"
#include "seqlab/model.hpp"
#include "seqlab/objective.hpp"

// Optimization loop: Adam with cosine learning-rate annealing, KL annealing,
// deterministic batching, validation-based checkpoint selection and run
// bookkeeping.

namespace seqlab::train {

struct TrainHyper {
  double lr_base = 1e-3;
  double lr_final = 1e-6;
  long total_updates = 1000;
  int batch_size = 32;
  double kl_start = 0.2;
  double kl_inc = 5e-5;
  double alpha = 0.0;  // z-forcing auxiliary weights
  double beta = 0.0;
  double clip_norm = 1.0;
  long valid_every = 500;
  std::uint64_t seed = 1;
};

double cosine_lr(long update, const TrainHyper& hyper);

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Applies one descent step using the gradients currently in the store.
// Throws on non-finite gradients.
void adam_update(ad::ParamStore& params, AdamState& state, double lr);

struct TrainResult {
  long updates_run = 0;
  bool aborted = false;
  double best_valid = 0.0;   // objective nats, higher is better
  double final_valid = 0.0;
  double wall_clock_sec = 0.0;
  std::vector<std::string> metrics_lines;  // JSON lines, deterministic content
};

// Mean per-sequence training objective (nats, maximized) on a dataset with a
// fixed evaluation noise seed.
double evaluate_objective(const model::Model& m, const std::vector<data::StepSequence>& seqs,
                          std::uint64_t noise_seed);

// run_dir empty: in-memory run (no files). Otherwise writes metrics.jsonl,
// timing.jsonl, ckpt_best.bin/.json and ckpt_final.bin/.json.
TrainResult train_run(model::Model& m, const std::vector<data::StepSequence>& train_set,
                      const std::vector<data::StepSequence>& valid_set,
                      const TrainHyper& hyper, const std::string& run_dir = "",
                      const std::string& config_hash = "");

void save_checkpoint(const ad::ParamStore& params, const std::string& prefix, long update,
                     std::uint64_t seed, const std::string& config_hash);
void load_checkpoint(ad::ParamStore& params, const std::string& prefix);

}  // namespace seqlab::train
