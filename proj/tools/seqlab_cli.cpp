// seqlab command-line entry point.
//
// Subcommands: synth | train | eval | table | oracle | sweep.
// Exit codes: 0 success, 2 config error, 3 runtime abort (non-finite loss),
// 4 oracle failure. The output root for generated directories comes from the
// SEQLAB_OUT environment variable (default: current directory).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqlab/config.hpp"
#include "seqlab/eval.hpp"
#include "seqlab/model.hpp"
#include "seqlab/objective.hpp"
#include "seqlab/oracle.hpp"
#include "seqlab/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace seqlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;
constexpr int kExitOracle = 4;

std::string output_root() {
  const char* env = std::getenv("SEQLAB_OUT");
  return env && *env ? env : ".";
}

std::string dataset_label(const config::ExperimentConfig& cfg) {
  if (!cfg.dataset.synthetic) return fs::path(cfg.dataset.manifest).stem().string();
  switch (cfg.dataset.synth.family) {
    case data::SynthFamily::WithinStepAR: return "within-step-ar";
    case data::SynthFamily::IidNoise: return "iid-noise";
    case data::SynthFamily::SinusoidMixture: return "sinusoid-mixture";
  }
  return "synthetic";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir, bool force) {
  auto cfg = config::load_config(config_path);
  if (!cfg.dataset.synthetic)
    throw config::ConfigError({"synth: config must use a synthetic dataset section"});

  std::string dir = out_dir.empty()
                        ? output_root() + "/synth-" + config::config_hash(cfg.canonical)
                        : out_dir;
  if (fs::exists(dir)) {
    if (!force) {
      std::cerr << "synth: " << dir << " exists; pass --force to overwrite\n";
      return kExitConfig;
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);

  auto splits = config::assemble_dataset(cfg);
  json manifest;
  manifest["entries"] = json::array();
  auto dump_split = [&](const std::vector<data::StepSequence>& seqs,
                        const std::string& split) {
    for (size_t i = 0; i < seqs.size(); ++i) {
      std::string name = split + "_" + std::to_string(i) + ".csv";
      data::save_csv_steps(seqs[i], dir + "/" + name);
      manifest["entries"].push_back({{"path", name}, {"format", "csv"}, {"split", split}});
    }
  };
  dump_split(splits.train, "train");
  dump_split(splits.valid, "valid");
  dump_split(splits.test, "test");
  write_text(dir + "/manifest.json", manifest.dump(2));
  write_text(dir + "/config.json", cfg.canonical);
  std::cout << "wrote " << manifest["entries"].size() << " sequences to " << dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, long seed_override,
              const std::string& out_dir) {
  auto cfg = config::load_config(config_path);
  if (seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.objective.seed = cfg.seed;
    cfg.canonical = config::render_config(cfg);
  }
  std::string hash = config::config_hash(cfg.canonical);
  std::string dir = out_dir.empty()
                        ? output_root() + "/run-" + hash + "-s" + std::to_string(cfg.seed)
                        : out_dir;
  fs::create_directories(dir);

  auto splits = config::assemble_dataset(cfg);
  auto mc = config::make_model_config(cfg, splits);
  model::Model m(mc);
  write_text(dir + "/config.json", cfg.canonical);

  auto res = train::train_run(m, splits.train, splits.valid, cfg.objective, dir, hash);
  if (res.aborted) {
    std::cerr << "train: aborted after " << res.updates_run
              << " updates (non-finite loss); last good checkpoint kept\n";
    return kExitAbort;
  }

  // score the best checkpoint on the test split
  train::load_checkpoint(m.params(), dir + "/ckpt_best");
  auto report = eval::test_loglik(m, splits.test, cfg.evaluation.convention,
                                  cfg.evaluation.bound, cfg.evaluation.k, cfg.seed);
  report.dataset_id = dataset_label(cfg);
  report.wall_clock_sec = res.wall_clock_sec;
  eval::write_report_json(report, dir + "/report_best.json");
  std::cout << "run " << dir << ": " << res.updates_run << " updates, test "
            << eval::convention_name(report.convention) << " " << report.score << " ("
            << eval::bound_label(report) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& run_dir, const std::string& config_path, int k,
             const std::string& convention_flag) {
  std::string cfg_path = config_path.empty() ? run_dir + "/config.json" : config_path;
  auto cfg = config::load_config(cfg_path);
  if (!fs::exists(run_dir + "/ckpt_best.bin"))
    throw config::ConfigError({"eval: missing checkpoint " + run_dir + "/ckpt_best.bin"});

  if (!convention_flag.empty()) {
    auto flag_conv = eval::convention_from_name(convention_flag);
    if (flag_conv != cfg.evaluation.convention)
      std::cerr << "warning: convention flag '" << convention_flag
                << "' overrides the config default '"
                << eval::convention_name(cfg.evaluation.convention) << "'\n";
    cfg.evaluation.convention = flag_conv;
  }
  if (k > 1) {
    cfg.evaluation.bound = eval::BoundKind::MultiSample;
    cfg.evaluation.k = k;
  }

  auto splits = config::assemble_dataset(cfg);
  auto mc = config::make_model_config(cfg, splits);
  model::Model m(mc);
  train::load_checkpoint(m.params(), run_dir + "/ckpt_best");

  auto report = eval::test_loglik(m, splits.test, cfg.evaluation.convention,
                                  cfg.evaluation.bound, cfg.evaluation.k, cfg.seed);
  report.dataset_id = dataset_label(cfg);
  eval::write_report_json(report, run_dir + "/report_eval.json");
  std::cout << report.model_id << " on " << report.dataset_id << ": "
            << eval::convention_name(report.convention) << " " << report.score << " ("
            << eval::bound_label(report) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_table(const std::vector<std::string>& report_paths, bool csv) {
  if (report_paths.empty())
    throw config::ConfigError({"table: at least one report file is required"});
  std::vector<eval::EvalReport> reports;
  for (const auto& p : report_paths) reports.push_back(eval::read_report_json(p));
  std::cout << eval::results_table(reports);
  if (csv) std::cout << "\n" << eval::results_csv(reports);
  return kExitOk;
}

// ---------------------------------------------------------------------------

// Objective value of a tiny model as a function of its flattened parameters,
// with a frozen noise stream — the target of the finite-difference check.
double tiny_objective(model::Model& m, const data::StepSequence& seq,
                      const Eigen::VectorXd& flat) {
  m.params().set_flat(flat);
  ad::Tape tape;
  auto fr = m.forward(tape, seq, model::Mode::Prior);
  auto obj = objective::mle_loss(tape, fr, seq);
  return obj.breakdown.total;
}

int cmd_oracle(const std::string& out_path) {
  json summary;
  bool all_pass = true;
  auto record = [&](const std::string& name, bool pass, double value) {
    summary[name] = {{"pass", pass}, {"value", value}};
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
  };

  // 1. finite-difference gradient check on a tiny deterministic model
  {
    data::SyntheticSpec spec;
    spec.T = 3;
    spec.L = 4;
    spec.num_sequences = 3;
    spec.seed = 11;
    auto seqs = data::synth_generate(spec);
    model::ModelConfig mc;
    mc.family = model::Family::FRnn;
    mc.width = 6;
    mc.mixture_k = 2;
    mc.L = 4;
    mc.kinds.assign(4, data::ElementKind::Continuous);
    mc.init_seed = 5;
    model::Model m(mc);
    Eigen::VectorXd flat = m.params().flatten();
    ad::Tape tape;
    auto fr = m.forward(tape, seqs[0], model::Mode::Prior);
    auto obj = objective::mle_loss(tape, fr, seqs[0]);
    m.params().zero_grad();
    tape.backward(obj.total);
    Eigen::VectorXd analytic = m.params().flatten_grads();
    double err = oracle::finite_diff_max_rel_err(
        [&](const Eigen::VectorXd& x) { return tiny_objective(m, seqs[0], x); }, flat,
        analytic, 1e-5);
    record("gradient_fd_max_rel_err", err <= 1e-4, err);
  }

  // 2. output head normalization by quadrature
  {
    dist::GaussianMixtureParams head;
    head.logits = Eigen::Vector3d(0.3, -0.2, 0.1);
    head.means = Eigen::Vector3d(-1.0, 0.5, 2.0);
    head.log_scales = Eigen::Vector3d(-0.3, 0.1, -0.5);
    double mass = oracle::quadrature_norm(head, -30.0, 30.0, 20001);
    record("head_quadrature_mass", std::abs(mass - 1.0) <= 1e-3, mass);
  }

  // 3. ELBO tightness on enumerable surrogates
  {
    double worst_violation = -1e300, worst_tight = 0.0;
    for (int i = 0; i < 25; ++i) {
      auto s = oracle::random_surrogate(3, 4, 100 + i);
      auto x = oracle::random_surrogate_obs(s, 200 + i);
      double exact = oracle::enumerate_exact_loglik(s, x);
      double loose = oracle::surrogate_elbo(s, x, oracle::random_path_posterior(s, 300 + i));
      double tight = oracle::surrogate_elbo(s, x, oracle::true_path_posterior(s, x));
      worst_violation = std::max(worst_violation, loose - exact);
      worst_tight = std::max(worst_tight, std::abs(tight - exact));
    }
    record("elbo_bound_violation", worst_violation <= 1e-9, worst_violation);
    record("elbo_true_posterior_gap", worst_tight <= 1e-9, worst_tight);
  }

  // 4. delta-posterior convergence
  {
    auto split = data::make_leak_split_interleave(4, 2);
    auto toy = objective::make_delta_toy(4, 3, split, 17);
    data::SyntheticSpec spec;
    spec.T = 3;
    spec.L = 4;
    spec.num_sequences = 3;
    spec.seed = 23;
    auto seq = data::synth_generate(spec)[0];
    double cancel = std::abs(objective::xa_block_gap(1e-3, 2));
    record("xa_block_cancellation", cancel <= 1e-10, cancel);
    auto rows = oracle::prop1_convergence(seq, split, toy, {4e-3, 2e-3, 1e-3});
    record("delta_gap_at_sigma_1e-3", rows[2].gap_per_step < 1e-3, rows[2].gap_per_step);
    bool ratios_ok = rows[1].ratio_to_previous >= 3.0 && rows[1].ratio_to_previous <= 5.0 &&
                     rows[2].ratio_to_previous >= 3.0 && rows[2].ratio_to_previous <= 5.0;
    record("delta_gap_halving_ratio", ratios_ok, rows[2].ratio_to_previous);
  }

  summary["all_pass"] = all_pass;
  if (!out_path.empty()) write_text(out_path, summary.dump(2));
  std::cout << (all_pass ? "oracle: all checks passed\n" : "oracle: FAILURES\n");
  return all_pass ? kExitOk : kExitOracle;
}

// ---------------------------------------------------------------------------

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  auto cfg = config::load_config(config_path);
  std::string dir = out_dir.empty() ? output_root() + "/sweep-" +
                                          config::config_hash(cfg.canonical)
                                    : out_dir;
  fs::create_directories(dir);
  const double grid[3] = {0.0, 0.0025, 0.005};
  int n = 0;
  for (double a : grid)
    for (double b : grid) {
      config::ExperimentConfig cell = cfg;
      cell.objective.alpha = a;
      cell.objective.beta = b;
      cell.canonical = config::render_config(cell);
      std::ostringstream name;
      name << dir << "/alpha" << a << "_beta" << b << ".json";
      write_text(name.str(), cell.canonical);
      ++n;
    }
  std::cout << "wrote " << n << " sweep configs to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"density-estimation workbench for multivariate sequences"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, convention_flag, oracle_out;
  long seed_override = -1;
  int k = 1;
  bool force = false, csv = false;
  std::vector<std::string> report_paths;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth->add_option("--config", config_path, "experiment config (JSON)")->required();
  synth->add_option("--out", out_dir, "output directory");
  synth->add_flag("--force", force, "overwrite an existing directory");

  auto* trainc = app.add_subcommand("train", "train one model per the config");
  trainc->add_option("--config", config_path, "experiment config (JSON)")->required();
  trainc->add_option("--seed", seed_override, "override the global seed");
  trainc->add_option("--out", out_dir, "run directory");

  auto* evalc = app.add_subcommand("eval", "score a trained run on its test split");
  evalc->add_option("--run", run_dir, "run directory (with checkpoints)")->required();
  evalc->add_option("--config", config_path, "config override (default: run copy)");
  evalc->add_option("--k", k, "importance samples (k>1 selects the multi-sample bound)");
  evalc->add_option("--convention", convention_flag,
                    "sequence-average | frame-average | step-average");

  auto* table = app.add_subcommand("table", "render result tables from report files");
  table->add_option("reports", report_paths, "report JSON files")->required();
  table->add_flag("--csv", csv, "also emit CSV");

  auto* oraclec = app.add_subcommand("oracle", "run independent verification checks");
  oraclec->add_option("--out", oracle_out, "write the pass/fail JSON summary here");

  auto* sweep = app.add_subcommand("sweep", "write the 3x3 aux-weight config grid");
  sweep->add_option("--config", config_path, "base experiment config")->required();
  sweep->add_option("--out", out_dir, "sweep directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_dir, force);
    if (trainc->parsed()) return cmd_train(config_path, seed_override, out_dir);
    if (evalc->parsed()) return cmd_eval(run_dir, config_path, k, convention_flag);
    if (table->parsed()) return cmd_table(report_paths, csv);
    if (oraclec->parsed()) return cmd_oracle(oracle_out);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir);
  } catch (const config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
