#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/ad.hpp"

// Sequence containers, file loaders, derived-dataset transforms, synthetic
// generation and deterministic batching.

namespace seqlab::data {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ElementKind { Continuous, Binary };

struct FrameSequence {
  std::vector<double> frames;   // normalized amplitude or raw synthetic values
  std::string source;
};

struct StepSequence {
  Mat steps;                          // T x L
  std::vector<ElementKind> kinds;     // size L
  int T() const { return static_cast<int>(steps.rows()); }
  int L() const { return static_cast<int>(steps.cols()); }
  bool single_kind() const;
};

enum class LeakScheme { Interleave, Random };

struct LeakSplit {
  std::vector<int> a_indices;  // 0-based, ascending
  std::vector<int> b_indices;
  LeakScheme scheme;
};

enum class SynthFamily { WithinStepAR, IidNoise, SinusoidMixture };

struct SyntheticSpec {
  SynthFamily family = SynthFamily::WithinStepAR;
  int T = 16;
  int L = 8;
  int num_sequences = 128;
  double rho = 0.9;          // within-step lag-1 coefficient
  double across = 0.5;       // coefficient linking step boundaries
  double noise_scale = 1.0;
  std::uint64_t seed = 1;
};

// --- loaders ---------------------------------------------------------------

// Mono 16-bit PCM WAV; samples mapped affinely onto [-1, 1].
FrameSequence load_wav(const std::string& path);
// One step per line, 88 comma-separated binary values.
StepSequence load_pianoroll(const std::string& path);
// One step per line: pen-state in {0,1} plus two continuous coordinates.
StepSequence load_trajectory(const std::string& path);
// Generic CSV matrix (one step per line); kinds inferred per column
// (a column containing only 0/1 is tagged binary).
StepSequence load_csv_steps(const std::string& path);
void save_csv_steps(const StepSequence& seq, const std::string& path);

// --- transforms --------------------------------------------------------------

// Non-overlapping L*T windows; trailing remainder dropped.
std::vector<StepSequence> reshape_multiframe(const FrameSequence& seq, int L, int T);
FrameSequence stride_subsample(const FrameSequence& seq, int M);
// perm is 0-based: out(t,i) = in(t, perm[i])
StepSequence permute_steps(const StepSequence& seq, const std::vector<int>& perm);
FrameSequence flatten_steps(const StepSequence& seq);

LeakSplit make_leak_split_interleave(int L, int U);
LeakSplit make_leak_split_random(int L, int V, std::uint64_t seed);
std::vector<int> random_permutation(int L, std::uint64_t seed);

// --- synthesis / batching ----------------------------------------------------

std::vector<StepSequence> synth_generate(const SyntheticSpec& spec);

struct Batch {
  std::vector<int> indices;
};

// One epoch worth of batches; order is a pure function of seed.
std::vector<Batch> make_batches(int num_sequences, int batch_size, std::uint64_t seed);

}  // namespace seqlab::data
