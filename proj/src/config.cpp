#include "seqlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace seqlab::config {

using json = nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> errs)
    : std::runtime_error([&errs] {
        std::string msg = "invalid config:";
        for (const auto& e : errs) msg += "\n  - " + e;
        return msg;
      }()),
      errors(std::move(errs)) {}

namespace {

struct Collector {
  std::vector<std::string> errors;
  void add(const std::string& e) { errors.push_back(e); }
  void raise_if_any() const {
    if (!errors.empty()) throw ConfigError(errors);
  }
};

// typed field access that records an error instead of throwing
template <typename T>
T field(const json& j, const std::string& where, const std::string& key, T fallback,
        Collector& errs, bool required = false) {
  if (!j.contains(key)) {
    if (required) errs.add(where + ": missing required field '" + key + "'");
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    errs.add(where + ": field '" + key + "' has the wrong type");
    return fallback;
  }
}

data::SynthFamily synth_family_from_name(const std::string& s, Collector& errs) {
  if (s == "within-step-ar") return data::SynthFamily::WithinStepAR;
  if (s == "iid-noise") return data::SynthFamily::IidNoise;
  if (s == "sinusoid-mixture") return data::SynthFamily::SinusoidMixture;
  errs.add("dataset.synthetic: unknown family '" + s +
           "' (expected within-step-ar | iid-noise | sinusoid-mixture)");
  return data::SynthFamily::WithinStepAR;
}

TransformSpec parse_transform(const json& j, int idx, Collector& errs) {
  TransformSpec t;
  std::string where = "dataset.transforms[" + std::to_string(idx) + "]";
  std::string op = field<std::string>(j, where, "op", "", errs, true);
  if (op == "multiframe") {
    t.op = TransformSpec::Op::Multiframe;
    t.L = field<int>(j, where, "L", 0, errs, true);
    t.T = field<int>(j, where, "T", 0, errs, true);
    if (t.L < 1) errs.add(where + ": L must be >= 1");
    if (t.T < 1) errs.add(where + ": T must be >= 1");
  } else if (op == "stride") {
    t.op = TransformSpec::Op::Stride;
    t.M = field<int>(j, where, "M", 1, errs, true);
    if (t.M < 1) errs.add(where + ": M must be >= 1");
  } else if (op == "permute") {
    t.op = TransformSpec::Op::Permute;
    t.seed = field<std::uint64_t>(j, where, "seed", 0, errs, true);
  } else if (op == "flatten") {
    t.op = TransformSpec::Op::Flatten;
  } else if (!op.empty()) {
    errs.add(where + ": unknown op '" + op +
             "' (expected multiframe | stride | permute | flatten)");
  }
  return t;
}

bool frames_source(const DatasetSection& ds);

// Type-check the transform chain. State is "frames" (scalar stream) or
// "steps" (T x L matrix); the chain must end in steps.
void check_transform_chain(const DatasetSection& ds, Collector& errs) {
  bool steps = ds.synthetic || !frames_source(ds);
  for (size_t i = 0; i < ds.transforms.size(); ++i) {
    const auto& t = ds.transforms[i];
    std::string where = "dataset.transforms[" + std::to_string(i) + "]";
    switch (t.op) {
      case TransformSpec::Op::Multiframe:
        if (steps) errs.add(where + ": multiframe applies to frame data only");
        steps = true;
        break;
      case TransformSpec::Op::Stride:
        if (steps) errs.add(where + ": stride applies to frame data only");
        break;
      case TransformSpec::Op::Permute:
        if (!steps) errs.add(where + ": permute applies to step data only");
        break;
      case TransformSpec::Op::Flatten:
        if (!steps) errs.add(where + ": flatten applies to step data only");
        steps = false;
        break;
    }
  }
  if (!steps)
    errs.add("dataset.transforms: chain ends in frame data; add a multiframe "
             "transform (use L=1 to keep single-frame steps)");
}

// The manifest's format field decides whether the raw data is frames (wav)
// or steps (everything else). Unreadable manifests are reported at load time.
bool frames_source(const DatasetSection& ds) {
  if (ds.synthetic) return false;
  std::ifstream in(ds.manifest);
  if (!in) return false;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return false;
  }
  if (!j.contains("entries") || !j["entries"].is_array() || j["entries"].empty())
    return false;
  return j["entries"][0].value("format", "csv") == "wav";
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  Collector errs;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    errs.add(std::string("not valid JSON: ") + e.what());
    errs.raise_if_any();
  }
  if (!j.is_object()) {
    errs.add("top level must be a JSON object");
    errs.raise_if_any();
  }

  ExperimentConfig cfg;
  cfg.seed = field<std::uint64_t>(j, "config", "seed", 1, errs);

  // ---- dataset ----
  if (!j.contains("dataset") || !j["dataset"].is_object()) {
    errs.add("missing required section 'dataset'");
  } else {
    const json& d = j["dataset"];
    bool has_synth = d.contains("synthetic");
    bool has_manifest = d.contains("manifest");
    if (has_synth == has_manifest)
      errs.add("dataset: exactly one of 'synthetic' or 'manifest' is required");
    cfg.dataset.synthetic = has_synth;
    if (has_synth && d["synthetic"].is_object()) {
      const json& s = d["synthetic"];
      auto& sp = cfg.dataset.synth;
      sp.family = synth_family_from_name(
          field<std::string>(s, "dataset.synthetic", "family", "within-step-ar", errs),
          errs);
      sp.T = field<int>(s, "dataset.synthetic", "T", sp.T, errs);
      sp.L = field<int>(s, "dataset.synthetic", "L", sp.L, errs);
      sp.num_sequences =
          field<int>(s, "dataset.synthetic", "num_sequences", sp.num_sequences, errs);
      sp.rho = field<double>(s, "dataset.synthetic", "rho", sp.rho, errs);
      sp.across = field<double>(s, "dataset.synthetic", "across", sp.across, errs);
      sp.noise_scale =
          field<double>(s, "dataset.synthetic", "noise_scale", sp.noise_scale, errs);
      sp.seed = field<std::uint64_t>(s, "dataset.synthetic", "seed", cfg.seed, errs);
      if (sp.T < 1) errs.add("dataset.synthetic: T must be >= 1");
      if (sp.L < 1) errs.add("dataset.synthetic: L must be >= 1");
      if (sp.num_sequences < 3)
        errs.add("dataset.synthetic: num_sequences must be >= 3 (one per split)");
      if (std::abs(sp.rho) >= 1.0) errs.add("dataset.synthetic: |rho| must be < 1");
      if (sp.noise_scale <= 0.0) errs.add("dataset.synthetic: noise_scale must be > 0");
    } else if (has_synth) {
      errs.add("dataset.synthetic: must be an object");
    }
    if (has_manifest)
      cfg.dataset.manifest = field<std::string>(d, "dataset", "manifest", "", errs, true);
    if (d.contains("transforms")) {
      if (!d["transforms"].is_array()) {
        errs.add("dataset.transforms: must be an array");
      } else {
        int idx = 0;
        for (const auto& t : d["transforms"])
          cfg.dataset.transforms.push_back(parse_transform(t, idx++, errs));
      }
    }
    if (d.contains("split")) {
      const json& sp = d["split"];
      cfg.dataset.train_frac = field<double>(sp, "dataset.split", "train", 0.8, errs, true);
      cfg.dataset.valid_frac = field<double>(sp, "dataset.split", "valid", 0.1, errs, true);
      cfg.dataset.test_frac = field<double>(sp, "dataset.split", "test", 0.1, errs, true);
      double sum = cfg.dataset.train_frac + cfg.dataset.valid_frac + cfg.dataset.test_frac;
      if (cfg.dataset.train_frac <= 0 || cfg.dataset.valid_frac < 0 ||
          cfg.dataset.test_frac <= 0 || std::abs(sum - 1.0) > 1e-9)
        errs.add("dataset.split: fractions must be positive (valid may be 0) and sum to 1");
    }
    if (errs.errors.empty()) check_transform_chain(cfg.dataset, errs);
  }

  // ---- model ----
  if (!j.contains("model") || !j["model"].is_object()) {
    errs.add("missing required section 'model'");
  } else {
    const json& m = j["model"];
    std::string fam = field<std::string>(m, "model", "family", "", errs, true);
    if (!fam.empty()) {
      try {
        cfg.model.family = model::family_from_name(fam);
      } catch (const std::exception&) {
        errs.add("model: unknown family '" + fam +
                 "' (expected F-RNN | F-SRNN | DELTA-RNN | RNN-HIER | SRNN-HIER | "
                 "RNN-FLAT | SRNN-FLAT)");
      }
    }
    cfg.model.width = field<int>(m, "model", "width", cfg.model.width, errs);
    cfg.model.latent = field<int>(m, "model", "latent", cfg.model.latent, errs);
    cfg.model.low_width = field<int>(m, "model", "low_width", cfg.model.low_width, errs);
    cfg.model.mixture_k = field<int>(m, "model", "mixture_k", cfg.model.mixture_k, errs);
    if (cfg.model.width < 1) errs.add("model: width must be >= 1");
    if (cfg.model.latent < 1) errs.add("model: latent must be >= 1");
    if (cfg.model.low_width < 1) errs.add("model: low_width must be >= 1");
    if (cfg.model.mixture_k < 1) errs.add("model: mixture_k must be >= 1");
    if (m.contains("leak")) {
      const json& lk = m["leak"];
      std::string scheme = field<std::string>(lk, "model.leak", "scheme", "interleave",
                                              errs, true);
      if (scheme == "interleave") {
        cfg.model.leak.scheme = data::LeakScheme::Interleave;
        cfg.model.leak.U = field<int>(lk, "model.leak", "U", 2, errs, true);
        if (cfg.model.leak.U < 2)
          errs.add("model.leak: U must be >= 2 (U=1 leaks the whole step)");
      } else if (scheme == "random") {
        cfg.model.leak.scheme = data::LeakScheme::Random;
        cfg.model.leak.V = field<int>(lk, "model.leak", "V", 1, errs, true);
        cfg.model.leak.seed = field<std::uint64_t>(lk, "model.leak", "seed", 0, errs);
        if (cfg.model.leak.V < 1) errs.add("model.leak: V must be >= 1");
      } else {
        errs.add("model.leak: unknown scheme '" + scheme +
                 "' (expected interleave | random)");
      }
    }
    std::string ld = field<std::string>(m, "model", "low_decoder", "recurrent", errs);
    if (ld == "recurrent") cfg.model.low_decoder = model::LowDecoder::Recurrent;
    else if (ld == "masked-mlp") cfg.model.low_decoder = model::LowDecoder::MaskedMlp;
    else errs.add("model: unknown low_decoder '" + ld + "' (expected recurrent | masked-mlp)");
    std::string var = field<std::string>(m, "model", "variant", "z-forcing", errs);
    if (var == "z-forcing") cfg.model.variant = model::SrnnVariant::ZForcing;
    else if (var == "simplified") cfg.model.variant = model::SrnnVariant::Simplified;
    else errs.add("model: unknown variant '" + var + "' (expected z-forcing | simplified)");
  }

  // ---- objective ----
  cfg.objective.seed = cfg.seed;
  if (j.contains("objective")) {
    if (!j["objective"].is_object()) {
      errs.add("objective: must be an object");
    } else {
      const json& o = j["objective"];
      auto& h = cfg.objective;
      h.lr_base = field<double>(o, "objective", "lr_base", h.lr_base, errs);
      h.lr_final = field<double>(o, "objective", "lr_final", h.lr_final, errs);
      h.total_updates = field<long>(o, "objective", "total_updates", h.total_updates, errs);
      h.batch_size = field<int>(o, "objective", "batch_size", h.batch_size, errs);
      h.kl_start = field<double>(o, "objective", "kl_start", h.kl_start, errs);
      h.kl_inc = field<double>(o, "objective", "kl_inc", h.kl_inc, errs);
      h.alpha = field<double>(o, "objective", "alpha", h.alpha, errs);
      h.beta = field<double>(o, "objective", "beta", h.beta, errs);
      h.clip_norm = field<double>(o, "objective", "clip_norm", h.clip_norm, errs);
      h.valid_every = field<long>(o, "objective", "valid_every", h.valid_every, errs);
      if (h.lr_base <= 0 || h.lr_final <= 0 || h.lr_final > h.lr_base)
        errs.add("objective: need 0 < lr_final <= lr_base");
      if (h.total_updates < 1) errs.add("objective: total_updates must be >= 1");
      if (h.batch_size < 1) errs.add("objective: batch_size must be >= 1");
      if (h.kl_start <= 0 || h.kl_start > 1) errs.add("objective: kl_start must be in (0, 1]");
      if (h.kl_inc < 0) errs.add("objective: kl_inc must be >= 0");
      if (h.alpha < 0 || h.beta < 0) errs.add("objective: alpha and beta must be >= 0");
      if (h.clip_norm < 0) errs.add("objective: clip_norm must be >= 0 (0 disables)");
      if (h.valid_every < 1) errs.add("objective: valid_every must be >= 1");
    }
  }

  // ---- evaluation ----
  if (j.contains("evaluation")) {
    if (!j["evaluation"].is_object()) {
      errs.add("evaluation: must be an object");
    } else {
      const json& e = j["evaluation"];
      std::string conv = field<std::string>(e, "evaluation", "convention",
                                            "step-average", errs);
      try {
        cfg.evaluation.convention = eval::convention_from_name(conv);
      } catch (const std::exception&) {
        errs.add("evaluation: unknown convention '" + conv +
                 "' (expected sequence-average | frame-average | step-average)");
      }
      std::string bound = field<std::string>(e, "evaluation", "bound", "exact", errs);
      if (bound == "exact") cfg.evaluation.bound = eval::BoundKind::Exact;
      else if (bound == "elbo") cfg.evaluation.bound = eval::BoundKind::Elbo;
      else if (bound == "multi-sample") cfg.evaluation.bound = eval::BoundKind::MultiSample;
      else errs.add("evaluation: unknown bound '" + bound +
                    "' (expected exact | elbo | multi-sample)");
      cfg.evaluation.k = field<int>(e, "evaluation", "k", 1, errs);
      if (cfg.evaluation.k < 1) errs.add("evaluation: k must be >= 1");
    }
  }

  errs.raise_if_any();
  cfg.canonical = render_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file: " + path});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string render_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  json d;
  if (cfg.dataset.synthetic) {
    const auto& s = cfg.dataset.synth;
    const char* fam = s.family == data::SynthFamily::WithinStepAR   ? "within-step-ar"
                      : s.family == data::SynthFamily::IidNoise     ? "iid-noise"
                                                                    : "sinusoid-mixture";
    d["synthetic"] = {{"family", fam},        {"T", s.T},
                      {"L", s.L},             {"num_sequences", s.num_sequences},
                      {"rho", s.rho},         {"across", s.across},
                      {"noise_scale", s.noise_scale}, {"seed", s.seed}};
  } else {
    d["manifest"] = cfg.dataset.manifest;
  }
  d["transforms"] = json::array();
  for (const auto& t : cfg.dataset.transforms) {
    json tj;
    switch (t.op) {
      case TransformSpec::Op::Multiframe:
        tj = {{"op", "multiframe"}, {"L", t.L}, {"T", t.T}};
        break;
      case TransformSpec::Op::Stride: tj = {{"op", "stride"}, {"M", t.M}}; break;
      case TransformSpec::Op::Permute: tj = {{"op", "permute"}, {"seed", t.seed}}; break;
      case TransformSpec::Op::Flatten: tj = {{"op", "flatten"}}; break;
    }
    d["transforms"].push_back(tj);
  }
  d["split"] = {{"train", cfg.dataset.train_frac},
                {"valid", cfg.dataset.valid_frac},
                {"test", cfg.dataset.test_frac}};
  j["dataset"] = d;

  json m;
  m["family"] = model::family_name(cfg.model.family);
  m["width"] = cfg.model.width;
  m["latent"] = cfg.model.latent;
  m["low_width"] = cfg.model.low_width;
  m["mixture_k"] = cfg.model.mixture_k;
  if (cfg.model.family == model::Family::DeltaRnn) {
    if (cfg.model.leak.scheme == data::LeakScheme::Interleave)
      m["leak"] = {{"scheme", "interleave"}, {"U", cfg.model.leak.U}};
    else
      m["leak"] = {{"scheme", "random"}, {"V", cfg.model.leak.V},
                   {"seed", cfg.model.leak.seed}};
  }
  m["low_decoder"] =
      cfg.model.low_decoder == model::LowDecoder::Recurrent ? "recurrent" : "masked-mlp";
  m["variant"] =
      cfg.model.variant == model::SrnnVariant::ZForcing ? "z-forcing" : "simplified";
  j["model"] = m;

  const auto& h = cfg.objective;
  j["objective"] = {{"lr_base", h.lr_base},         {"lr_final", h.lr_final},
                    {"total_updates", h.total_updates}, {"batch_size", h.batch_size},
                    {"kl_start", h.kl_start},       {"kl_inc", h.kl_inc},
                    {"alpha", h.alpha},             {"beta", h.beta},
                    {"clip_norm", h.clip_norm},     {"valid_every", h.valid_every}};

  const char* bound = cfg.evaluation.bound == eval::BoundKind::Exact  ? "exact"
                      : cfg.evaluation.bound == eval::BoundKind::Elbo ? "elbo"
                                                                      : "multi-sample";
  j["evaluation"] = {{"convention", eval::convention_name(cfg.evaluation.convention)},
                     {"bound", bound},
                     {"k", cfg.evaluation.k}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// dataset assembly

namespace {

struct RawData {
  std::vector<data::FrameSequence> frames;
  std::vector<data::StepSequence> steps;
  bool is_frames = false;
};

RawData load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open manifest: " + path});
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError({std::string("manifest is not valid JSON: ") + e.what()});
  }
  if (!j.contains("entries") || !j["entries"].is_array() || j["entries"].empty())
    throw ConfigError({"manifest: 'entries' must be a non-empty array"});
  fs::path base = fs::path(path).parent_path();

  RawData raw;
  std::string first_format;
  for (const auto& e : j["entries"]) {
    std::string file = e.value("path", "");
    std::string format = e.value("format", "csv");
    if (file.empty()) throw ConfigError({"manifest entry missing 'path'"});
    if (first_format.empty()) first_format = format;
    if (format != first_format)
      throw ConfigError({"manifest mixes formats '" + first_format + "' and '" + format +
                         "'; one manifest = one format"});
    std::string full = (base / file).string();
    if (format == "wav") {
      raw.is_frames = true;
      raw.frames.push_back(data::load_wav(full));
    } else if (format == "pianoroll") {
      raw.steps.push_back(data::load_pianoroll(full));
    } else if (format == "trajectory") {
      raw.steps.push_back(data::load_trajectory(full));
    } else if (format == "csv") {
      raw.steps.push_back(data::load_csv_steps(full));
    } else {
      throw ConfigError({"manifest: unknown format '" + format +
                         "' (expected wav | pianoroll | trajectory | csv)"});
    }
  }
  return raw;
}

// split assignment is read from the manifest when present; entries without a
// split tag fall into the fraction-based contiguous split
std::vector<std::string> manifest_split_tags(const std::string& path) {
  std::ifstream in(path);
  json j;
  in >> j;
  std::vector<std::string> tags;
  for (const auto& e : j["entries"]) tags.push_back(e.value("split", ""));
  return tags;
}

data::StepSequence frames_to_steps(const data::FrameSequence& f) {
  data::StepSequence s;
  s.steps.resize(static_cast<Eigen::Index>(f.frames.size()), 1);
  for (size_t i = 0; i < f.frames.size(); ++i)
    s.steps(static_cast<Eigen::Index>(i), 0) = f.frames[i];
  s.kinds = {data::ElementKind::Continuous};
  return s;
}

}  // namespace

DatasetSplits assemble_dataset(const ExperimentConfig& cfg) {
  RawData raw;
  std::vector<std::string> tags;
  if (cfg.dataset.synthetic) {
    raw.steps = data::synth_generate(cfg.dataset.synth);
  } else {
    raw = load_manifest(cfg.dataset.manifest);
    tags = manifest_split_tags(cfg.dataset.manifest);
  }

  // Apply the transform chain. Frame-level transforms act on each raw stream;
  // multiframe turns one stream into several step sequences, which then lose
  // their per-file split tags (chunks of one file stay in one split).
  std::vector<std::string> seq_tags = raw.is_frames ? std::vector<std::string>{} : tags;
  std::vector<data::StepSequence> steps = std::move(raw.steps);
  std::vector<data::FrameSequence> frames = std::move(raw.frames);
  bool in_frames = raw.is_frames;

  for (const auto& t : cfg.dataset.transforms) {
    switch (t.op) {
      case TransformSpec::Op::Stride:
        for (auto& f : frames) f = data::stride_subsample(f, t.M);
        break;
      case TransformSpec::Op::Multiframe: {
        std::vector<data::StepSequence> out;
        std::vector<std::string> out_tags;
        for (size_t i = 0; i < frames.size(); ++i) {
          auto chunks = data::reshape_multiframe(frames[i], t.L, t.T);
          for (auto& c : chunks) {
            out.push_back(std::move(c));
            out_tags.push_back(i < tags.size() ? tags[i] : "");
          }
        }
        steps = std::move(out);
        seq_tags = std::move(out_tags);
        frames.clear();
        in_frames = false;
        break;
      }
      case TransformSpec::Op::Permute: {
        if (steps.empty()) break;
        auto perm = data::random_permutation(steps[0].L(), t.seed);
        for (auto& s : steps) s = data::permute_steps(s, perm);
        break;
      }
      case TransformSpec::Op::Flatten: {
        std::vector<data::FrameSequence> out;
        for (const auto& s : steps) out.push_back(data::flatten_steps(s));
        frames = std::move(out);
        steps.clear();
        in_frames = true;
        break;
      }
    }
  }
  if (in_frames) {
    for (const auto& f : frames) steps.push_back(frames_to_steps(f));
    seq_tags.clear();
  }
  if (steps.empty()) throw ConfigError({"dataset: no sequences after transforms"});

  DatasetSplits out;
  bool tagged = !seq_tags.empty() &&
                std::any_of(seq_tags.begin(), seq_tags.end(),
                            [](const std::string& s) { return !s.empty(); });
  if (tagged) {
    for (size_t i = 0; i < steps.size(); ++i) {
      const std::string& tag = i < seq_tags.size() ? seq_tags[i] : "";
      if (tag == "train" || tag.empty()) out.train.push_back(std::move(steps[i]));
      else if (tag == "valid") out.valid.push_back(std::move(steps[i]));
      else if (tag == "test") out.test.push_back(std::move(steps[i]));
      else throw ConfigError({"manifest: unknown split tag '" + tag + "'"});
    }
  } else {
    size_t n = steps.size();
    size_t n_train = static_cast<size_t>(std::floor(cfg.dataset.train_frac * n));
    size_t n_valid = static_cast<size_t>(std::floor(cfg.dataset.valid_frac * n));
    n_train = std::max<size_t>(n_train, 1);
    if (n_train + n_valid >= n) n_valid = n - n_train > 1 ? 1 : 0;
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train) out.train.push_back(std::move(steps[i]));
      else if (i < n_train + n_valid) out.valid.push_back(std::move(steps[i]));
      else out.test.push_back(std::move(steps[i]));
    }
  }
  if (out.train.empty() || out.test.empty())
    throw ConfigError({"dataset: split produced an empty train or test set"});
  return out;
}

model::ModelConfig make_model_config(const ExperimentConfig& cfg,
                                     const DatasetSplits& splits) {
  const data::StepSequence& probe = splits.train.front();
  std::vector<std::string> errs;

  model::ModelConfig mc;
  mc.family = cfg.model.family;
  mc.width = cfg.model.width;
  mc.latent = cfg.model.latent;
  mc.low_width = cfg.model.low_width;
  mc.mixture_k = cfg.model.mixture_k;
  mc.L = probe.L();
  mc.kinds = probe.kinds;
  mc.low_decoder = cfg.model.low_decoder;
  mc.variant = cfg.model.variant;
  mc.init_seed = cfg.seed;

  if (model::is_flat(mc.family) && !probe.single_kind())
    errs.push_back("model: flat families are not applicable to mixed-kind data");
  if (mc.family == model::Family::DeltaRnn) {
    if (cfg.model.leak.scheme == data::LeakScheme::Interleave) {
      if (cfg.model.leak.U >= mc.L + 1)
        errs.push_back("model.leak: U exceeds the step size L=" + std::to_string(mc.L));
      else
        mc.leak = data::make_leak_split_interleave(mc.L, cfg.model.leak.U);
    } else {
      if (cfg.model.leak.V >= mc.L)
        errs.push_back("model.leak: V must be < L=" + std::to_string(mc.L));
      else
        mc.leak = data::make_leak_split_random(
            mc.L, cfg.model.leak.V,
            cfg.model.leak.seed ? cfg.model.leak.seed : cfg.seed + 0x1EAC);
    }
  }
  if (!errs.empty()) throw ConfigError(errs);
  return mc;
}

std::string config_hash(const std::string& canonical_text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace seqlab::config
