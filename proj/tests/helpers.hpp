#pragma once

// Shared fixtures for the test suites: tiny model builders, the
// finite-difference harness over full training objectives, a minimal WAV
// writer, and scratch-directory management.

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "seqlab/data.hpp"
#include "seqlab/model.hpp"
#include "seqlab/objective.hpp"
#include "seqlab/oracle.hpp"

namespace testutil {

using namespace seqlab;

inline model::ModelConfig tiny_config(model::Family fam, int L,
                                      std::uint64_t init_seed = 7) {
  model::ModelConfig mc;
  mc.family = fam;
  mc.width = 6;
  mc.latent = 3;
  mc.low_width = 5;
  mc.mixture_k = 2;
  mc.L = model::is_flat(fam) ? 1 : L;
  mc.kinds.assign(mc.L, data::ElementKind::Continuous);
  if (fam == model::Family::DeltaRnn) mc.leak = data::make_leak_split_interleave(L, 2);
  mc.init_seed = init_seed;
  return mc;
}

inline data::StepSequence tiny_sequence(int T, int L, std::uint64_t seed = 3) {
  data::SyntheticSpec spec;
  spec.T = T;
  spec.L = L;
  spec.num_sequences = 3;
  spec.seed = seed;
  return data::synth_generate(spec)[0];
}

// Training objective total with a frozen noise stream; pure in the flattened
// parameter vector, which makes it finite-differentiable.
inline double objective_at(model::Model& m, const data::StepSequence& seq,
                           const Eigen::VectorXd& flat, double alpha = 0.0,
                           double beta = 0.0, std::uint64_t noise_seed = 41) {
  m.params().set_flat(flat);
  ad::Tape tape;
  if (model::is_stochastic(m.config().family)) {
    ad::Rng noise(noise_seed);
    auto fr = m.forward(tape, seq, model::Mode::Posterior, &noise);
    auto obj = objective::elbo_loss(tape, fr, seq, 1.0);
    if (alpha != 0.0 || beta != 0.0) {
      auto aux = objective::zforcing_aux_loss(tape, m, fr, alpha, beta);
      obj.total = tape.add(obj.total, aux.total);
      obj.breakdown.total = tape.scalar(obj.total);
    }
    return obj.breakdown.total;
  }
  auto fr = m.forward(tape, seq, model::Mode::Prior);
  return objective::mle_loss(tape, fr, seq).breakdown.total;
}

inline Eigen::VectorXd objective_grad(model::Model& m, const data::StepSequence& seq,
                                      const Eigen::VectorXd& flat, double alpha = 0.0,
                                      double beta = 0.0, std::uint64_t noise_seed = 41) {
  m.params().set_flat(flat);
  ad::Tape tape;
  ad::Var total;
  if (model::is_stochastic(m.config().family)) {
    ad::Rng noise(noise_seed);
    auto fr = m.forward(tape, seq, model::Mode::Posterior, &noise);
    auto obj = objective::elbo_loss(tape, fr, seq, 1.0);
    total = obj.total;
    if (alpha != 0.0 || beta != 0.0) {
      auto aux = objective::zforcing_aux_loss(tape, m, fr, alpha, beta);
      total = tape.add(total, aux.total);
    }
  } else {
    auto fr = m.forward(tape, seq, model::Mode::Prior);
    total = objective::mle_loss(tape, fr, seq).total;
  }
  m.params().zero_grad();
  tape.backward(total);
  return m.params().flatten_grads();
}

// eps 3e-4 keeps the cancellation error of the central stencil below the
// check tolerance even on near-zero gradient coordinates
inline double fd_objective_err(model::Model& m, const data::StepSequence& seq,
                               double alpha = 0.0, double beta = 0.0) {
  Eigen::VectorXd flat = m.params().flatten();
  Eigen::VectorXd analytic = objective_grad(m, seq, flat, alpha, beta);
  return oracle::finite_diff_max_rel_err(
      [&](const Eigen::VectorXd& x) { return objective_at(m, seq, x, alpha, beta); },
      flat, analytic, 3e-4);
}

// Scratch directory unique to a test, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("seqlab_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Minimal mono 16-bit PCM RIFF writer for loader tests.
inline void write_wav(const std::string& path, const std::vector<std::int16_t>& samples,
                      std::uint16_t channels = 1, std::uint16_t bits = 16,
                      std::uint16_t audio_format = 1) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(audio_format);
  u16(channels);
  u32(16000);                              // sample rate
  u32(16000u * channels * (bits / 8));     // byte rate
  u16(static_cast<std::uint16_t>(channels * (bits / 8)));  // block align
  u16(bits);
  out.write("data", 4);
  u32(data_bytes);
  out.write(reinterpret_cast<const char*>(samples.data()), data_bytes);
}

}  // namespace testutil
