#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqlab/data.hpp"
#include "seqlab/eval.hpp"
#include "seqlab/model.hpp"
#include "seqlab/train.hpp"

// JSON experiment configuration: one file = one run. Parsing collects every
// validation error before any data or model work starts; dataset assembly
// applies a type-checked transform chain and a deterministic split.

namespace seqlab::config {

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> errs);
  std::vector<std::string> errors;
};

struct TransformSpec {
  enum class Op { Multiframe, Stride, Permute, Flatten };
  Op op = Op::Multiframe;
  int L = 0, T = 0;        // multiframe
  int M = 1;               // stride
  std::uint64_t seed = 0;  // permute
};

struct DatasetSection {
  bool synthetic = true;
  data::SyntheticSpec synth;
  std::string manifest;  // path, when synthetic == false
  std::vector<TransformSpec> transforms;
  double train_frac = 0.8, valid_frac = 0.1, test_frac = 0.1;
};

struct LeakSpec {
  data::LeakScheme scheme = data::LeakScheme::Interleave;
  int U = 2;               // interleave period
  int V = 1;               // random subset size
  std::uint64_t seed = 0;  // random scheme; 0 means derive from the global seed
};

struct ModelSection {
  model::Family family = model::Family::FRnn;
  int width = 32;
  int latent = 8;
  int low_width = 16;
  int mixture_k = 20;
  LeakSpec leak;
  model::LowDecoder low_decoder = model::LowDecoder::Recurrent;
  model::SrnnVariant variant = model::SrnnVariant::ZForcing;
};

struct EvalSection {
  eval::Convention convention = eval::Convention::StepAverage;
  eval::BoundKind bound = eval::BoundKind::Exact;
  int k = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetSection dataset;
  ModelSection model;
  train::TrainHyper objective;
  EvalSection evaluation;
  std::string canonical;  // normalized JSON text of the parsed config
};

// Parses and validates; throws ConfigError carrying the full error list.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string render_config(const ExperimentConfig& cfg);  // normalized JSON

struct DatasetSplits {
  std::vector<data::StepSequence> train, valid, test;
};

// Generates or loads the raw data, applies the transform chain and splits it.
// Manifest paths resolve relative to the manifest's directory.
DatasetSplits assemble_dataset(const ExperimentConfig& cfg);

// Builds the model configuration against the assembled data (infers L and
// element kinds, materializes the leak split). Throws ConfigError when the
// family is not applicable to the data (e.g. a flat family on mixed kinds).
model::ModelConfig make_model_config(const ExperimentConfig& cfg,
                                     const DatasetSplits& splits);

// FNV-1a hash of the normalized config text, as fixed-width hex.
std::string config_hash(const std::string& canonical_text);

}  // namespace seqlab::config
