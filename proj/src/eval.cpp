#include "seqlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "seqlab/dist.hpp"
#include "seqlab/objective.hpp"

namespace seqlab::eval {

using json = nlohmann::json;

std::string convention_name(Convention c) {
  switch (c) {
    case Convention::SequenceAverage: return "sequence-average";
    case Convention::FrameAverage: return "frame-average";
    case Convention::StepAverage: return "step-average";
  }
  return "?";
}

Convention convention_from_name(const std::string& s) {
  if (s == "sequence-average") return Convention::SequenceAverage;
  if (s == "frame-average") return Convention::FrameAverage;
  if (s == "step-average") return Convention::StepAverage;
  throw std::invalid_argument("unknown convention: " + s);
}

std::string bound_label(const EvalReport& r) {
  switch (r.bound) {
    case BoundKind::Exact: return "exact";
    case BoundKind::Elbo: return "elbo";
    case BoundKind::MultiSample: return "multi-sample(" + std::to_string(r.bound_k) + ")";
  }
  return "?";
}

double elbo_estimate(const model::Model& m, const data::StepSequence& seq,
                     std::uint64_t noise_seed) {
  ad::Rng noise(noise_seed);
  ad::Tape tape;
  auto fr = m.forward(tape, seq, model::Mode::Posterior, &noise);
  auto obj = objective::elbo_loss(tape, fr, seq, 1.0);
  return obj.breakdown.total;
}

double multi_sample_bound(const model::Model& m, const data::StepSequence& seq, int k,
                          std::uint64_t noise_seed) {
  if (k < 1) throw std::invalid_argument("multi_sample_bound: k must be >= 1");
  ad::Rng noise(noise_seed);
  std::vector<double> log_w(k);
  for (int j = 0; j < k; ++j) {
    ad::Tape tape;
    auto fr = m.forward(tape, seq, model::Mode::Posterior, &noise);
    const auto& lt = *fr.latents;
    double w = 0.0;
    for (int t = 0; t < seq.T(); ++t) {
      ad::Var recon = dist::step_logprob(tape, fr.steps[t], seq.steps.row(t).transpose());
      w += tape.scalar(recon);
      dist::DiagGaussianParams prior{tape.val(lt.prior_mean[t]), tape.val(lt.prior_logs[t])};
      dist::DiagGaussianParams post{tape.val(lt.post_mean[t]), tape.val(lt.post_logs[t])};
      const Eigen::VectorXd z = tape.val(lt.z[t]);
      w += dist::diag_gauss_logpdf(prior, z) - dist::diag_gauss_logpdf(post, z);
    }
    log_w[j] = w;
  }
  double mx = *std::max_element(log_w.begin(), log_w.end());
  double s = 0.0;
  for (double w : log_w) s += std::exp(w - mx);
  return mx + std::log(s / k);
}

EvalReport test_loglik(const model::Model& m, const std::vector<data::StepSequence>& test,
                       Convention convention, BoundKind bound, int k,
                       std::uint64_t noise_seed) {
  if (test.empty()) throw std::invalid_argument("test_loglik: empty test set");
  const bool stochastic = model::is_stochastic(m.config().family);
  if (!stochastic && bound != BoundKind::Exact)
    bound = BoundKind::Exact;  // deterministic likelihood is already exact
  if (stochastic && bound == BoundKind::Exact) bound = BoundKind::Elbo;

  double total = 0.0;
  long frames = 0, steps = 0;
  for (const auto& s : test) {
    double lp = 0.0;
    if (!stochastic) {
      ad::Tape tape;
      auto fr = m.forward(tape, s, model::Mode::Prior);
      for (int t = 0; t < s.T(); ++t)
        lp += tape.scalar(dist::step_logprob(tape, fr.steps[t], s.steps.row(t).transpose()));
    } else if (bound == BoundKind::MultiSample) {
      lp = multi_sample_bound(m, s, k, noise_seed);
    } else {
      lp = elbo_estimate(m, s, noise_seed);
    }
    total += lp;
    frames += static_cast<long>(s.T()) * s.L();
    steps += s.T();
  }

  EvalReport r;
  r.model_id = model::family_name(m.config().family);
  r.convention = convention;
  r.bound = bound;
  r.bound_k = bound == BoundKind::MultiSample ? k : 1;
  r.param_count = m.count_parameters();
  r.seed = noise_seed;
  switch (convention) {
    case Convention::SequenceAverage:
      r.score = total / static_cast<double>(test.size());
      break;
    case Convention::FrameAverage:
      r.score = total / static_cast<double>(frames);
      break;
    case Convention::StepAverage:
      r.score = total / static_cast<double>(steps);
      break;
  }
  return r;
}

std::string runtime_report(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "model" << std::setw(14) << "time(h)"
      << "log-likelihood\n";
  for (const auto& r : runs) {
    out << std::left << std::setw(16) << r.model_id << std::setw(14) << std::setprecision(4)
        << r.wall_clock_sec / 3600.0 << std::setprecision(8) << r.score << "\n";
  }
  return out.str();
}

namespace {

struct TableLayout {
  std::vector<std::string> models, datasets;
  std::map<std::pair<std::string, std::string>, const EvalReport*> cells;
};

TableLayout layout_reports(const std::vector<EvalReport>& reports) {
  TableLayout lay;
  std::map<std::string, Convention> col_conv;
  for (const auto& r : reports) {
    if (std::find(lay.models.begin(), lay.models.end(), r.model_id) == lay.models.end())
      lay.models.push_back(r.model_id);
    if (std::find(lay.datasets.begin(), lay.datasets.end(), r.dataset_id) ==
        lay.datasets.end())
      lay.datasets.push_back(r.dataset_id);
    auto it = col_conv.find(r.dataset_id);
    if (it == col_conv.end()) {
      col_conv[r.dataset_id] = r.convention;
    } else if (it->second != r.convention) {
      throw std::invalid_argument("results_table: mixed conventions in column " +
                                  r.dataset_id);
    }
    lay.cells[{r.model_id, r.dataset_id}] = &r;
  }
  return lay;
}

std::string cell_text(const EvalReport* r) {
  if (!r) return "-";
  std::ostringstream c;
  if (r->bound != BoundKind::Exact) c << ">= ";
  c << std::setprecision(6) << r->score;
  return c.str();
}

}  // namespace

std::string results_table(const std::vector<EvalReport>& reports) {
  auto lay = layout_reports(reports);
  std::ostringstream out;
  out << std::left << std::setw(14) << "model";
  for (const auto& d : lay.datasets) out << std::setw(18) << d;
  out << "\n";
  for (const auto& m : lay.models) {
    out << std::left << std::setw(14) << m;
    for (const auto& d : lay.datasets) {
      auto it = lay.cells.find({m, d});
      out << std::setw(18) << cell_text(it == lay.cells.end() ? nullptr : it->second);
    }
    out << "\n";
  }
  return out.str();
}

std::string results_csv(const std::vector<EvalReport>& reports) {
  auto lay = layout_reports(reports);
  std::ostringstream out;
  out << "model";
  for (const auto& d : lay.datasets) out << "," << d;
  out << "\n";
  for (const auto& m : lay.models) {
    out << m;
    for (const auto& d : lay.datasets) {
      auto it = lay.cells.find({m, d});
      out << "," << cell_text(it == lay.cells.end() ? nullptr : it->second);
    }
    out << "\n";
  }
  return out.str();
}

std::vector<ParamMatch> param_match_check(
    const std::vector<std::pair<std::string, long>>& counts, double tolerance) {
  std::vector<ParamMatch> out;
  for (size_t i = 0; i < counts.size(); ++i)
    for (size_t j = i + 1; j < counts.size(); ++j) {
      ParamMatch pm;
      pm.a = counts[i].first;
      pm.b = counts[j].first;
      double hi = static_cast<double>(std::max(counts[i].second, counts[j].second));
      double lo = static_cast<double>(std::min(counts[i].second, counts[j].second));
      pm.rel_diff = hi > 0 ? (hi - lo) / hi : 0.0;
      pm.pass = pm.rel_diff <= tolerance;
      out.push_back(pm);
    }
  return out;
}

void write_report_json(const EvalReport& r, const std::string& path) {
  json j;
  j["model_id"] = r.model_id;
  j["dataset_id"] = r.dataset_id;
  j["convention"] = convention_name(r.convention);
  j["score"] = r.score;
  j["bound"] = bound_label(r);
  j["bound_k"] = r.bound_k;
  j["param_count"] = r.param_count;
  j["wall_clock_sec"] = r.wall_clock_sec;
  j["seed"] = r.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_json: cannot write " + path);
  out << j.dump(2) << '\n';
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_report_json: cannot open " + path);
  json j;
  in >> j;
  EvalReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.convention = convention_from_name(j.at("convention").get<std::string>());
  r.score = j.at("score").get<double>();
  std::string b = j.at("bound").get<std::string>();
  r.bound = b == "exact" ? BoundKind::Exact
            : b == "elbo" ? BoundKind::Elbo
                          : BoundKind::MultiSample;
  r.bound_k = j.at("bound_k").get<int>();
  r.param_count = j.at("param_count").get<long>();
  r.wall_clock_sec = j.at("wall_clock_sec").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace seqlab::eval
