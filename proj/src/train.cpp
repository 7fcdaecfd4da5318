#include "seqlab/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace seqlab::train {

using json = nlohmann::json;

double cosine_lr(long update, const TrainHyper& hyper) {
  if (update >= hyper.total_updates) return hyper.lr_final;
  double frac = static_cast<double>(update) / static_cast<double>(hyper.total_updates);
  return hyper.lr_final +
         0.5 * (hyper.lr_base - hyper.lr_final) * (1.0 + std::cos(M_PI * frac));
}

void adam_update(ad::ParamStore& params, AdamState& state, double lr) {
  const auto& all = params.all();
  if (state.m.empty()) {
    for (auto& p : all) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
  }
  for (auto& p : all)
    if (!p->grad.allFinite())
      throw std::runtime_error("adam_update: non-finite gradient in " + p->name);
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, state.step);
  double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (size_t i = 0; i < all.size(); ++i) {
    auto& p = *all[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * p.grad;
    state.v[i] = state.beta2 * state.v[i].array().matrix() +
                 (1.0 - state.beta2) * p.grad.array().square().matrix();
    p.value.array() -= lr * (state.m[i].array() / bc1) /
                       ((state.v[i].array() / bc2).sqrt() + state.eps);
  }
}

// ---------------------------------------------------------------------------

namespace {

// Single-sequence training objective on a fresh tape. Returns the scalar node
// (maximized) and its breakdown.
objective::ObjectiveValue seq_objective(ad::Tape& tape, const model::Model& m,
                                        const data::StepSequence& seq, double kl_coeff,
                                        double alpha, double beta, ad::Rng* noise) {
  if (model::is_stochastic(m.config().family)) {
    auto fr = m.forward(tape, seq, model::Mode::Posterior, noise);
    auto obj = objective::elbo_loss(tape, fr, seq, kl_coeff);
    if ((alpha != 0.0 || beta != 0.0) &&
        m.config().variant == model::SrnnVariant::ZForcing) {
      auto aux = objective::zforcing_aux_loss(tape, m, fr, alpha, beta);
      obj.total = tape.add(obj.total, aux.total);
      obj.breakdown.aux = aux.breakdown.aux;
      obj.breakdown.total = tape.scalar(obj.total);
    }
    return obj;
  }
  auto fr = m.forward(tape, seq, model::Mode::Prior);
  return objective::mle_loss(tape, fr, seq);
}

}  // namespace

double evaluate_objective(const model::Model& m, const std::vector<data::StepSequence>& seqs,
                          std::uint64_t noise_seed) {
  double total = 0.0;
  ad::Rng noise(noise_seed);
  for (const auto& s : seqs) {
    ad::Tape tape;
    auto obj = seq_objective(tape, m, s, 1.0, 0.0, 0.0, &noise);
    total += obj.breakdown.total;
  }
  return total / static_cast<double>(seqs.size());
}

TrainResult train_run(model::Model& m, const std::vector<data::StepSequence>& train_set,
                      const std::vector<data::StepSequence>& valid_set,
                      const TrainHyper& hyper, const std::string& run_dir,
                      const std::string& config_hash) {
  if (train_set.empty()) throw std::invalid_argument("train_run: empty training set");
  if (hyper.total_updates < 1)
    throw std::invalid_argument("train_run: total_updates must be >= 1");

  TrainResult res;
  AdamState adam;
  ad::Rng batch_rng(hyper.seed);
  ad::Rng noise_rng(hyper.seed ^ 0xABCDEF1234567ull);
  const std::uint64_t eval_noise_seed = hyper.seed ^ 0x5EED5EEDull;
  const bool stochastic = model::is_stochastic(m.config().family);

  std::ofstream metrics, timing;
  if (!run_dir.empty()) {
    metrics.open(run_dir + "/metrics.jsonl");
    timing.open(run_dir + "/timing.jsonl");
    if (!metrics || !timing)
      throw std::runtime_error("train_run: cannot write logs under " + run_dir);
  }

  auto t_start = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
        .count();
  };

  double best_valid = -std::numeric_limits<double>::infinity();
  long update = 0;
  std::vector<data::Batch> epoch;
  size_t epoch_pos = 0;
  std::uint64_t epoch_seed = hyper.seed;

  while (update < hyper.total_updates) {
    if (epoch_pos >= epoch.size()) {
      epoch = data::make_batches(static_cast<int>(train_set.size()), hyper.batch_size,
                                 epoch_seed++);
      epoch_pos = 0;
    }
    const auto& batch = epoch[epoch_pos++];

    double kl_coeff = stochastic
                          ? objective::kl_anneal_coeff(update, hyper.kl_start, hyper.kl_inc)
                          : 1.0;
    m.params().zero_grad();
    double batch_total = 0.0, batch_recon = 0.0, batch_kl = 0.0, batch_aux = 0.0;
    bool finite = true;
    for (int idx : batch.indices) {
      ad::Tape tape;
      auto obj = seq_objective(tape, m, train_set[idx], kl_coeff, hyper.alpha, hyper.beta,
                               stochastic ? &noise_rng : nullptr);
      if (!std::isfinite(obj.breakdown.total)) {
        finite = false;
        break;
      }
      tape.backward(obj.total);
      batch_total += obj.breakdown.total;
      for (double r : obj.breakdown.recon) batch_recon += r;
      for (double k : obj.breakdown.kl) batch_kl += k;
      batch_aux += obj.breakdown.aux;
    }
    if (!finite) {
      res.aborted = true;
      break;
    }
    double n = static_cast<double>(batch.indices.size());
    // maximize: descend on the negated mean objective
    m.params().scale_grads(-1.0 / n);
    if (hyper.clip_norm > 0.0) {
      double gn = m.params().grad_norm();
      if (gn > hyper.clip_norm) m.params().scale_grads(hyper.clip_norm / gn);
    }
    double lr = cosine_lr(update, hyper);
    try {
      adam_update(m.params(), adam, lr);
    } catch (const std::runtime_error&) {
      res.aborted = true;
      break;
    }
    ++update;

    {
      std::ostringstream line;
      line.precision(17);
      line << "{\"update\":" << update << ",\"total\":" << batch_total / n
           << ",\"recon\":" << batch_recon / n << ",\"kl\":" << batch_kl / n
           << ",\"coeff\":" << kl_coeff << ",\"aux\":" << batch_aux / n
           << ",\"lr\":" << lr << "}";
      res.metrics_lines.push_back(line.str());
      if (metrics.is_open()) metrics << line.str() << '\n';
    }
    if (timing.is_open() && (update % 1000 == 0 || update == hyper.total_updates))
      timing << "{\"update\":" << update << ",\"wall_clock_sec\":" << wall() << "}\n";

    bool do_valid = !valid_set.empty() &&
                    (update % hyper.valid_every == 0 || update == hyper.total_updates);
    if (do_valid) {
      double v = evaluate_objective(m, valid_set, eval_noise_seed);
      res.final_valid = v;
      if (v > best_valid) {
        best_valid = v;
        if (!run_dir.empty())
          save_checkpoint(m.params(), run_dir + "/ckpt_best", update, hyper.seed,
                          config_hash);
      }
    }
  }

  res.updates_run = update;
  res.best_valid = best_valid;
  res.wall_clock_sec = wall();
  if (!run_dir.empty() && !res.aborted) {
    save_checkpoint(m.params(), run_dir + "/ckpt_final", update, hyper.seed, config_hash);
    // a smoke run may finish before the first validation; keep both checkpoints present
    if (best_valid == -std::numeric_limits<double>::infinity())
      save_checkpoint(m.params(), run_dir + "/ckpt_best", update, hyper.seed, config_hash);
  }
  return res;
}

void save_checkpoint(const ad::ParamStore& params, const std::string& prefix, long update,
                     std::uint64_t seed, const std::string& config_hash) {
  Eigen::VectorXd flat = params.flatten();
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot write " + prefix + ".bin");
  const char magic[4] = {'S', 'Q', 'L', 'B'};
  bin.write(magic, 4);
  std::int64_t n = flat.size();
  bin.write(reinterpret_cast<const char*>(&n), sizeof(n));
  bin.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(n * sizeof(double)));

  json side;
  side["param_count"] = n;
  side["update"] = update;
  side["seed"] = seed;
  side["config_hash"] = config_hash;
  std::ofstream js(prefix + ".json");
  js << side.dump(2) << '\n';
}

void load_checkpoint(ad::ParamStore& params, const std::string& prefix) {
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + prefix + ".bin");
  char magic[4];
  bin.read(magic, 4);
  if (magic[0] != 'S' || magic[1] != 'Q' || magic[2] != 'L' || magic[3] != 'B')
    throw std::runtime_error("load_checkpoint: bad magic in " + prefix + ".bin");
  std::int64_t n = 0;
  bin.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != params.count())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  Eigen::VectorXd flat(n);
  bin.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
  if (!bin) throw std::runtime_error("load_checkpoint: truncated " + prefix + ".bin");
  params.set_flat(flat);
}

}  // namespace seqlab::train
