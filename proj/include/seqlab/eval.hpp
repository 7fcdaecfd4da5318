#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/data.hpp"
#include "seqlab/model.hpp"

// Test-set scoring under the reporting conventions (sequence-, frame- or
// step-averaged nats), bound evaluation for stochastic models, parameter and
// runtime reporting, and plain-text / CSV result tables.

namespace seqlab::eval {

enum class Convention { SequenceAverage, FrameAverage, StepAverage };
enum class BoundKind { Exact, Elbo, MultiSample };

std::string convention_name(Convention c);
Convention convention_from_name(const std::string& s);

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  Convention convention = Convention::SequenceAverage;
  double score = 0.0;  // nats
  BoundKind bound = BoundKind::Exact;
  int bound_k = 1;
  long param_count = 0;
  double wall_clock_sec = 0.0;
  std::uint64_t seed = 0;
};

std::string bound_label(const EvalReport& r);

// Exact log-likelihood for deterministic families; ELBO (closed-form KL,
// fixed noise seed) or a k-sample importance-weighted bound for stochastic
// families.
EvalReport test_loglik(const model::Model& m, const std::vector<data::StepSequence>& test,
                       Convention convention, BoundKind bound = BoundKind::Exact,
                       int k = 1, std::uint64_t noise_seed = 7);

// log (1/k) sum_j p(x, z_j) / q(z_j | x) over k posterior draws.
double multi_sample_bound(const model::Model& m, const data::StepSequence& seq, int k,
                          std::uint64_t noise_seed);

// Single-sequence ELBO estimate with the given noise stream (evaluation form
// of the training objective at kl coefficient 1).
double elbo_estimate(const model::Model& m, const data::StepSequence& seq,
                     std::uint64_t noise_seed);

struct RunSummary {
  std::string model_id;
  double wall_clock_sec = 0.0;
  double score = 0.0;
};

// Table 5-shaped wall-clock + score table, in declared model order.
std::string runtime_report(const std::vector<RunSummary>& runs);

// Plain-text rendering; one row per model, one column per dataset. ELBO and
// multi-sample cells carry a ">=" marker. Throws if one column mixes
// conventions.
std::string results_table(const std::vector<EvalReport>& reports);
std::string results_csv(const std::vector<EvalReport>& reports);

struct ParamMatch {
  std::string a, b;
  double rel_diff = 0.0;
  bool pass = true;
};

std::vector<ParamMatch> param_match_check(
    const std::vector<std::pair<std::string, long>>& counts, double tolerance);

void write_report_json(const EvalReport& r, const std::string& path);
EvalReport read_report_json(const std::string& path);

}  // namespace seqlab::eval
