#include "seqlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqlab::data {

bool StepSequence::single_kind() const {
  for (auto k : kinds)
    if (k != kinds[0]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// WAV ingestion (RIFF, mono 16-bit PCM only)

namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return b[0] | (b[1] << 8);
}

}  // namespace

FrameSequence load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_wav: cannot open " + path);
  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("load_wav: not a RIFF file: " + path);
  read_u32(in);
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("load_wav: not a WAVE file: " + path);

  int channels = 0, bits = 0;
  std::vector<std::int16_t> samples;
  bool got_fmt = false, got_data = false;
  while (in.read(tag, 4)) {
    std::uint32_t len = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      std::uint16_t fmt_code = read_u16(in);
      channels = read_u16(in);
      read_u32(in);  // sample rate
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (len > 16) in.seekg(len - 16, std::ios::cur);
      if (fmt_code != 1) throw std::runtime_error("load_wav: non-PCM encoding");
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      samples.resize(len / 2);
      in.read(reinterpret_cast<char*>(samples.data()), len / 2 * 2);
      got_data = true;
    } else {
      in.seekg(len + (len & 1), std::ios::cur);
    }
  }
  if (!got_fmt || !got_data) throw std::runtime_error("load_wav: missing chunk in " + path);
  if (channels != 1) throw std::runtime_error("load_wav: multi-channel audio not supported");
  if (bits != 16) throw std::runtime_error("load_wav: only 16-bit PCM supported");
  if (samples.empty()) throw std::runtime_error("load_wav: empty sequence");

  FrameSequence out;
  out.source = path;
  out.frames.reserve(samples.size());
  // affine map of the signed 16-bit range onto [-1, 1]
  for (std::int16_t s : samples)
    out.frames.push_back(static_cast<double>(s) / 32768.0);
  return out;
}

// ---------------------------------------------------------------------------
// Text step loaders

namespace {

std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": parse error at line " + std::to_string(lineno));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

StepSequence rows_to_steps(const std::vector<std::vector<double>>& rows,
                           std::vector<ElementKind> kinds) {
  StepSequence s;
  s.steps.resize(static_cast<int>(rows.size()), static_cast<int>(kinds.size()));
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t i = 0; i < kinds.size(); ++i) s.steps(t, i) = rows[t][i];
  s.kinds = std::move(kinds);
  return s;
}

}  // namespace

StepSequence load_pianoroll(const std::string& path) {
  auto rows = read_csv_rows(path);
  if (rows.empty()) throw std::runtime_error(path + ": empty sequence");
  for (size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != 88)
      throw std::runtime_error(path + ": expected 88 values at line " +
                               std::to_string(t + 1) + ", got " +
                               std::to_string(rows[t].size()));
    for (double v : rows[t])
      if (v != 0.0 && v != 1.0)
        throw std::runtime_error(path + ": non-binary value at line " + std::to_string(t + 1));
  }
  return rows_to_steps(rows, std::vector<ElementKind>(88, ElementKind::Binary));
}

StepSequence load_trajectory(const std::string& path) {
  auto rows = read_csv_rows(path);
  if (rows.empty()) throw std::runtime_error(path + ": empty sequence");
  for (size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != 3)
      throw std::runtime_error(path + ": expected 3 values at line " + std::to_string(t + 1));
    if (rows[t][0] != 0.0 && rows[t][0] != 1.0)
      throw std::runtime_error(path + ": pen dimension not binary at line " +
                               std::to_string(t + 1));
  }
  return rows_to_steps(rows, {ElementKind::Binary, ElementKind::Continuous,
                              ElementKind::Continuous});
}

StepSequence load_csv_steps(const std::string& path) {
  auto rows = read_csv_rows(path);
  if (rows.empty()) throw std::runtime_error(path + ": empty sequence");
  size_t L = rows[0].size();
  for (size_t t = 0; t < rows.size(); ++t)
    if (rows[t].size() != L)
      throw std::runtime_error(path + ": ragged row at line " + std::to_string(t + 1));
  std::vector<ElementKind> kinds(L, ElementKind::Binary);
  for (size_t i = 0; i < L; ++i)
    for (auto& r : rows)
      if (r[i] != 0.0 && r[i] != 1.0) {
        kinds[i] = ElementKind::Continuous;
        break;
      }
  return rows_to_steps(rows, std::move(kinds));
}

void save_csv_steps(const StepSequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (int t = 0; t < seq.T(); ++t) {
    for (int i = 0; i < seq.L(); ++i) {
      if (i) out << ',';
      out << seq.steps(t, i);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Transforms

std::vector<StepSequence> reshape_multiframe(const FrameSequence& seq, int L, int T) {
  if (L < 1 || T < 1) throw std::invalid_argument("reshape_multiframe: L, T must be >= 1");
  std::vector<StepSequence> out;
  size_t chunk = static_cast<size_t>(L) * T;
  size_t n = seq.frames.size() / chunk;
  for (size_t c = 0; c < n; ++c) {
    StepSequence s;
    s.steps.resize(T, L);
    s.kinds.assign(L, ElementKind::Continuous);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < L; ++i)
        s.steps(t, i) = seq.frames[c * chunk + static_cast<size_t>(t) * L + i];
    out.push_back(std::move(s));
  }
  return out;
}

FrameSequence stride_subsample(const FrameSequence& seq, int M) {
  if (M < 1) throw std::invalid_argument("stride_subsample: M must be >= 1");
  FrameSequence out;
  out.source = seq.source;
  for (size_t k = 0; k < seq.frames.size(); k += static_cast<size_t>(M))
    out.frames.push_back(seq.frames[k]);
  return out;
}

StepSequence permute_steps(const StepSequence& seq, const std::vector<int>& perm) {
  int L = seq.L();
  if (static_cast<int>(perm.size()) != L)
    throw std::invalid_argument("permute_steps: permutation size mismatch");
  std::vector<bool> seen(L, false);
  for (int p : perm) {
    if (p < 0 || p >= L || seen[p])
      throw std::invalid_argument("permute_steps: not a bijection");
    seen[p] = true;
  }
  StepSequence out;
  out.steps.resize(seq.T(), L);
  out.kinds.resize(L);
  for (int i = 0; i < L; ++i) {
    out.steps.col(i) = seq.steps.col(perm[i]);
    out.kinds[i] = seq.kinds[perm[i]];
  }
  return out;
}

FrameSequence flatten_steps(const StepSequence& seq) {
  if (!seq.single_kind())
    throw std::invalid_argument("flatten_steps: flat model not applicable to mixed element kinds");
  FrameSequence out;
  out.frames.reserve(static_cast<size_t>(seq.T()) * seq.L());
  for (int t = 0; t < seq.T(); ++t)
    for (int i = 0; i < seq.L(); ++i) out.frames.push_back(seq.steps(t, i));
  return out;
}

LeakSplit make_leak_split_interleave(int L, int U) {
  if (U < 2 || U > L)
    throw std::invalid_argument("make_leak_split: require 2 <= U <= L");
  LeakSplit s;
  s.scheme = LeakScheme::Interleave;
  for (int i = 0; i < L; ++i)
    (i % U == 0 ? s.a_indices : s.b_indices).push_back(i);
  return s;
}

LeakSplit make_leak_split_random(int L, int V, std::uint64_t seed) {
  if (V < 1 || V >= L)
    throw std::invalid_argument("make_leak_split: require 1 <= V < L");
  std::vector<int> idx(L);
  for (int i = 0; i < L; ++i) idx[i] = i;
  ad::Rng rng(seed);
  rng.shuffle(idx);
  LeakSplit s;
  s.scheme = LeakScheme::Random;
  s.a_indices.assign(idx.begin(), idx.begin() + V);
  s.b_indices.assign(idx.begin() + V, idx.end());
  std::sort(s.a_indices.begin(), s.a_indices.end());
  std::sort(s.b_indices.begin(), s.b_indices.end());
  return s;
}

std::vector<int> random_permutation(int L, std::uint64_t seed) {
  std::vector<int> perm(L);
  for (int i = 0; i < L; ++i) perm[i] = i;
  ad::Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

// ---------------------------------------------------------------------------
// Synthesis

std::vector<StepSequence> synth_generate(const SyntheticSpec& spec) {
  if (spec.rho < 0.0 || spec.rho >= 1.0)
    throw std::invalid_argument("synth_generate: rho must be in [0, 1)");
  if (spec.noise_scale <= 0.0)
    throw std::invalid_argument("synth_generate: noise scale must be positive");
  ad::Rng rng(spec.seed);
  std::vector<StepSequence> out;
  out.reserve(spec.num_sequences);
  for (int n = 0; n < spec.num_sequences; ++n) {
    StepSequence s;
    s.steps.resize(spec.T, spec.L);
    s.kinds.assign(spec.L, ElementKind::Continuous);
    switch (spec.family) {
      case SynthFamily::WithinStepAR: {
        // one stationary AR(1) chain over the flattened frames: coefficient
        // rho inside a step, `across` at step boundaries
        double prev = spec.noise_scale * rng.normal();
        for (int t = 0; t < spec.T; ++t)
          for (int i = 0; i < spec.L; ++i) {
            double c = (t == 0 && i == 0) ? 0.0 : (i == 0 ? spec.across : spec.rho);
            double v = c * prev + std::sqrt(1.0 - c * c) * spec.noise_scale * rng.normal();
            if (t == 0 && i == 0) v = prev;
            s.steps(t, i) = v;
            prev = v;
          }
        break;
      }
      case SynthFamily::IidNoise: {
        for (int t = 0; t < spec.T; ++t)
          for (int i = 0; i < spec.L; ++i)
            s.steps(t, i) = spec.noise_scale * rng.normal();
        break;
      }
      case SynthFamily::SinusoidMixture: {
        double f1 = 0.05 + 0.2 * rng.uniform();
        double f2 = 0.05 + 0.2 * rng.uniform();
        double p1 = 2.0 * M_PI * rng.uniform();
        double p2 = 2.0 * M_PI * rng.uniform();
        long k = 0;
        for (int t = 0; t < spec.T; ++t)
          for (int i = 0; i < spec.L; ++i, ++k)
            s.steps(t, i) = std::sin(2.0 * M_PI * f1 * k + p1) +
                            0.5 * std::sin(2.0 * M_PI * f2 * k + p2) +
                            spec.noise_scale * 0.1 * rng.normal();
        break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Batch> make_batches(int num_sequences, int batch_size, std::uint64_t seed) {
  if (num_sequences < 1) throw std::invalid_argument("make_batches: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<int> order(num_sequences);
  for (int i = 0; i < num_sequences; ++i) order[i] = i;
  ad::Rng rng(seed);
  rng.shuffle(order);
  std::vector<Batch> out;
  for (int i = 0; i < num_sequences; i += batch_size) {
    Batch b;
    for (int j = i; j < std::min(i + batch_size, num_sequences); ++j)
      b.indices.push_back(order[j]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace seqlab::data
