#include "blur/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "blur/losses.hpp"
#include "blur/rng.hpp"
#include "blur/trace_io.hpp"

namespace blur {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Stream indices for derive_seed so separate uses of one base seed never collide.
constexpr std::uint64_t kInitStream = 0x1D17;
constexpr std::uint64_t kStartsStream = 0x57A7;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const MemorizationReport& r) {
  return {{"verb_mem", r.verb_mem}, {"know_mem_forget", r.know_mem_forget}, {"know_mem_retain", r.know_mem_retain}};
}

json rule_json(const UpdateRule& r) {
  json j{{"kind", to_string(r.kind)}};
  if (r.kind == UpdateRule::Kind::blur) {
    j["gamma"] = r.gamma;
  } else {
    j["lambda"] = r.lambda;
    j["weighting"] = to_string(r.weighting);
  }
  return j;
}

json record_json(const StepRecord& r) {
  return {{"step", r.step},
          {"f", r.f},
          {"r", r.r},
          {"grad_f_norm", r.grad_f_norm},
          {"grad_r_norm", r.grad_r_norm},
          {"u_norm", r.u_norm},
          {"cos_fr", opt_json(r.cos_fr)},
          {"align_f", opt_json(r.align_f)},
          {"align_r", opt_json(r.align_r)},
          {"zeta_hat", opt_json(r.zeta_hat)},
          {"eta", r.eta}};
}

void write_run_trace_csv(const RunTrace& trace, const fs::path& path) { write_trace(trace, path.string()); }

}  // namespace

// ---- analytic -----------------------------------------------------------------

AnalyticProblemId problem_id(const ExperimentConfig& cfg) {
  AnalyticProblemId id;
  id.kind = parse_problem_kind(cfg.problem.name);
  id.mu = cfg.problem.mu;
  id.seed = cfg.seed;
  id.dim = cfg.problem.dim;
  return id;
}

ParamVector default_theta0(const ExperimentConfig& cfg, const BilevelProblem& problem) {
  if (!cfg.problem.theta0.empty()) {
    if (cfg.problem.theta0.size() != problem.dim()) {
      throw ConfigError("problem.theta0 has " + std::to_string(cfg.problem.theta0.size()) + " entries, problem dim is " +
                        std::to_string(problem.dim()));
    }
    return ParamVector(cfg.problem.theta0);
  }
  if (problem.dim() == 1) return ParamVector{3.0};
  return ParamVector::zeros(problem.dim());
}

StepSchedule make_schedule(const ExperimentConfig& cfg, const BilevelProblem& problem, std::int64_t T) {
  if (cfg.schedule.kind == StepSchedule::Kind::constant) return StepSchedule::constant(cfg.schedule.eta);
  double C = cfg.schedule.C, L = cfg.schedule.L_f;
  if (C == 0.0 || L == 0.0) {
    const SmoothnessBounds b = nonconvex_bench_bounds(problem);
    if (C == 0.0) C = b.C;
    if (L == 0.0) L = b.L_f;
  }
  const double gamma = cfg.rule.kind == UpdateRule::Kind::blur ? cfg.rule.gamma : 1.0;
  return StepSchedule::theorem_for(C, L, gamma, T);
}

std::vector<Example1Run> run_example1(const ExperimentConfig& cfg) {
  const BilevelProblem problem = make_problem(problem_id(cfg));
  std::vector<Example1Run> out;
  for (double t0 : cfg.problem.starts) {
    RunResult r = run(problem, ParamVector{t0}, cfg.rule, make_schedule(cfg, problem, cfg.steps), cfg.steps);
    r.trace.seed = cfg.seed;
    out.push_back({t0, r.theta[0], std::move(r.trace)});
  }
  return out;
}

RateStudyResult run_rate_study(const ExperimentConfig& cfg, const std::string& trace_dir) {
  const BilevelProblem problem = make_problem(problem_id(cfg));
  RateStudyResult res;
  res.bounds = nonconvex_bench_bounds(problem);
  Rng rng(derive_seed(cfg.seed, kStartsStream));
  for (int k = 0; k < cfg.problem.n_starts; ++k) {
    std::vector<double> s(problem.dim());
    for (double& x : s) x = rng.uniform(-cfg.problem.start_range, cfg.problem.start_range);
    res.starts.push_back(std::move(s));
  }
  std::vector<std::pair<double, double>> pts_f, pts_u;
  for (std::int64_t T : cfg.sweep.horizons) {
    const StepSchedule sched = make_schedule(cfg, problem, T);
    RatePoint p{T, sched.step_size(), 0.0, 0.0};
    for (std::size_t k = 0; k < res.starts.size(); ++k) {
      RunResult r = run(problem, ParamVector(res.starts[k]), cfg.rule, sched, T);
      r.trace.seed = cfg.seed;
      if (!trace_dir.empty()) {
        write_run_trace_csv(r.trace, fs::path(trace_dir) / ("trace_T" + std::to_string(T) + "_start" +
                                                            std::to_string(k) + ".csv"));
      }
      if (r.trace.status != RunStatus::completed) res.aborted = true;
      const TemporalAverages avg = temporal_averages(r.trace);
      p.avg_grad_f_sq += avg.grad_f_sq / static_cast<double>(res.starts.size());
      p.avg_grad_f_sq_plus_u_sq += avg.grad_f_sq_plus_u_sq / static_cast<double>(res.starts.size());
    }
    res.points.push_back(p);
    pts_f.emplace_back(static_cast<double>(T), p.avg_grad_f_sq);
    pts_u.emplace_back(static_cast<double>(T), p.avg_grad_f_sq_plus_u_sq);
  }
  res.slope_grad_f_sq = rate_slope(pts_f);
  res.slope_grad_f_sq_plus_u_sq = rate_slope(pts_u);
  return res;
}

// ---- toy ----------------------------------------------------------------------

ToySetup prepare_toy(const ExperimentConfig& cfg) {
  CorpusParams cp;
  cp.seed = cfg.seed;
  cp.vocab = cfg.corpus.vocab;
  cp.n_retain = cfg.corpus.n_retain;
  cp.n_forget = cfg.corpus.n_forget;
  cp.n_secrets = cfg.corpus.n_secrets;
  cp.seq_len = cfg.corpus.seq_len;
  cp.chain_peak = cfg.corpus.chain_peak;
  cp.dirichlet_alpha = cfg.corpus.dirichlet_alpha;

  ToySetup s{ToyLMShape{cfg.corpus.vocab, cfg.model.hidden}, generate_corpus(cp), {},
             ToyLM::random({cfg.corpus.vocab, cfg.model.hidden}, derive_seed(cfg.seed, kInitStream),
                           cfg.model.init_scale),
             {}, {}};
  s.split = split_retain(s.corpus.retain, cfg.corpus.holdout_fraction);
  std::vector<Sequence> train = s.split.train;
  train.insert(train.end(), s.corpus.forget.sequences.begin(), s.corpus.forget.sequences.end());
  const auto samples = sequence_samples(train);
  FinetuneResult ft = finetune(s.original, samples, cfg.finetune.epochs, cfg.finetune.eta);
  s.original = std::move(ft.model);
  s.finetune_loss = std::move(ft.loss_history);
  s.before = evaluate(s.original, s.corpus.forget.secrets, s.split.holdout);
  return s;
}

double chance_know_mem(std::span<const Secret> secrets, std::size_t vocab) {
  if (secrets.empty()) return 0.0;
  double s = 0.0;
  for (const auto& sec : secrets) s += std::pow(1.0 / static_cast<double>(vocab), static_cast<double>(sec.continuation.size()));
  return s / static_cast<double>(secrets.size());
}

std::optional<Evaluation> select_checkpoint(std::span<const Evaluation> evals, double forget_threshold) {
  std::optional<Evaluation> best;
  for (const auto& e : evals) {
    if (e.report.know_mem_forget > forget_threshold) continue;
    if (!best || e.report.know_mem_retain > best->report.know_mem_retain) best = e;
  }
  return best;
}

UnlearnResult run_unlearning(const ToySetup& setup, const ExperimentConfig& cfg, std::uint64_t cell_seed,
                             TraceWriter* writer) {
  const auto& uc = cfg.unlearn;
  const ToyLMShape shape = setup.shape;
  auto ref = std::make_shared<const ReferenceModel>(shape, setup.original.params());
  const auto forget_samples = sequence_samples(setup.corpus.forget.sequences);
  const auto retain_samples = sequence_samples(setup.split.train);

  const LossSpec fspec{.kind = uc.forget_loss, .beta = uc.beta, .alpha = uc.alpha, .layer = uc.layer, .c = uc.c,
                       .seed = cell_seed, .role = DatasetRole::forget};
  const LossSpec rspec{.kind = uc.retain_loss, .layer = uc.layer, .role = DatasetRole::retain};

  ProblemProvider provider;
  if (uc.batch_size == 0) {
    BilevelProblem full(std::make_shared<LossObjective>(fspec, shape, forget_samples, ref),
                        std::make_shared<LossObjective>(rspec, shape, retain_samples, ref), std::nullopt, "toylm");
    provider = [full](std::int64_t) { return full; };
  } else {
    auto rng = std::make_shared<Rng>(derive_seed(cell_seed, 1));
    auto draw = [rng, n = uc.batch_size](const std::vector<Sample>& all) {
      std::vector<std::size_t> idx(all.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const std::size_t k = std::min(n, all.size());
      std::vector<Sample> out;
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + rng->below(idx.size() - i)]);
        out.push_back(all[idx[i]]);
      }
      return out;
    };
    provider = [=](std::int64_t) {
      return BilevelProblem(std::make_shared<LossObjective>(fspec, shape, draw(forget_samples), ref),
                            std::make_shared<LossObjective>(rspec, shape, draw(retain_samples), ref), std::nullopt,
                            "toylm");
    };
  }

  UnlearnResult res;
  res.before = setup.before;
  res.chance = chance_know_mem(setup.corpus.forget.secrets, shape.vocab);
  res.forget_threshold = uc.forget_threshold > 0.0 ? uc.forget_threshold : 3.0 * res.chance;

  RunHooks hooks;
  hooks.on_iterate = [&](std::int64_t step, const ParamVector& theta) {
    if (step % uc.eval_every == 0 || step == cfg.steps) {
      res.evals.push_back({step, evaluate(forward(shape, theta), setup.corpus.forget.secrets, setup.split.holdout)});
    }
  };
  if (writer) hooks.on_record = [writer](const StepRecord& r) { writer->write(r); };

  RunResult r = run(provider, setup.original.params(), cfg.rule, StepSchedule::constant(cfg.schedule.eta), cfg.steps,
                    hooks);
  r.trace.seed = cell_seed;
  res.final_report = evaluate(forward(shape, r.theta), setup.corpus.forget.secrets, setup.split.holdout);
  res.selected = select_checkpoint(res.evals, res.forget_threshold);
  std::vector<std::optional<double>> align;
  for (const auto& rec : r.trace.records) align.push_back(rec.align_f);
  res.align_f_sign_changes = count_sign_changes(align);
  res.trace = std::move(r.trace);
  return res;
}

// ---- gradient gate ---------------------------------------------------------------

std::vector<std::string> gate_targets() {
  return {"example1_smoothed.forget", "example1_huber.forget", "example1.retain",
          "quadratic_pair.forget",    "quadratic_pair.retain", "nonconvex_bench.forget",
          "nonconvex_bench.retain",   "cross_entropy_retain",  "ga_forget",
          "npo_forget",               "simnpo_forget",         "rmu_retain.embedding_out",
          "rmu_retain.hidden_out",    "rmu_forget.embedding_out", "rmu_forget.hidden_out"};
}

namespace {

struct GateCase {
  std::shared_ptr<const Objective> obj;
  std::function<ParamVector(Rng&)> point;
  FDSpec spec;
};

GateCase analytic_case(const std::string& target, std::uint64_t seed) {
  const auto dot_pos = target.find('.');
  const std::string prob = target.substr(0, dot_pos);
  const bool forget = target.substr(dot_pos + 1) == "forget";
  AnalyticProblemId id;
  id.seed = seed;
  if (prob == "example1") {
    id.kind = AnalyticProblemId::Kind::example1_exact;
  } else {
    id.kind = parse_problem_kind(prob);
  }
  const BilevelProblem p = make_problem(id);
  const std::size_t d = p.dim();
  const double range = id.kind == AnalyticProblemId::Kind::nonconvex_bench ? 6.0 : 3.0;
  return {forget ? p.forget : p.retain,
          [d, range](Rng& rng) {
            std::vector<double> x(d);
            for (double& v : x) v = rng.uniform(-range, range);
            return ParamVector(std::move(x));
          },
          FDSpec{.tol_rel = 1e-6, .tol_abs = 1e-8}};
}

GateCase toy_case(const std::string& target, std::uint64_t seed) {
  const ToyLMShape shape{};
  CorpusParams cp;
  cp.seed = seed;
  cp.n_retain = 6;
  cp.n_forget = 6;
  cp.n_secrets = 3;
  cp.seq_len = 6;
  const Corpus c = generate_corpus(cp);
  const auto dot_pos = target.find('.');
  const LossKind kind = parse_loss_kind(target.substr(0, dot_pos));
  LossSpec spec{.kind = kind, .beta = 0.5, .alpha = 0.2, .c = 2.0, .seed = seed};
  if (dot_pos != std::string::npos) spec.layer = parse_layer(target.substr(dot_pos + 1));
  const bool forget = kind != LossKind::cross_entropy_retain && kind != LossKind::rmu_retain;
  spec.role = forget ? DatasetRole::forget : DatasetRole::retain;
  auto ref = std::make_shared<const ReferenceModel>(shape, ToyLM::random(shape, derive_seed(seed, 99), 0.5).params());
  auto obj = std::make_shared<LossObjective>(spec, shape,
                                             sequence_samples(forget ? c.forget.sequences : c.retain.sequences), ref);
  return {obj,
          [shape](Rng& rng) {
            std::vector<double> x(shape.num_params());
            for (double& v : x) v = 0.5 * rng.normal();
            return ParamVector(std::move(x));
          },
          FDSpec{.abs_step = 1e-5, .tol_rel = 1e-5, .tol_abs = 1e-8}};
}

}  // namespace

GateResult gradient_gate(const std::string& target, int points, std::uint64_t seed) {
  const auto all = gate_targets();
  if (std::find(all.begin(), all.end(), target) == all.end()) throw ConfigError("unknown gradcheck target '" + target + "'");
  const bool analytic = target.find("example1") == 0 || target.find("quadratic") == 0 || target.find("nonconvex") == 0;
  const GateCase gc = analytic ? analytic_case(target, seed) : toy_case(target, seed);
  Rng rng(derive_seed(seed, 0x6A7E));
  GateResult res{target, points, 0, 0.0, 0.0};
  for (int i = 0; i < points; ++i) {
    const ParamVector theta = gc.point(rng);
    const GradCheckReport rep = check(*gc.obj, theta, gc.spec);
    res.passed += rep.pass ? 1 : 0;
    res.max_rel_err = std::max(res.max_rel_err, rep.max_rel_err);
    res.max_abs_err = std::max(res.max_abs_err, rep.max_abs_err);
  }
  return res;
}

// ---- orchestration ---------------------------------------------------------------

bool is_sweep(ExperimentKind kind) {
  return kind == ExperimentKind::lambda_sweep || kind == ExperimentKind::gamma_beta_grid ||
         kind == ExperimentKind::alignment_demo;
}

std::vector<SweepCell> make_cells(const ExperimentConfig& cfg) {
  std::vector<SweepCell> cells;
  auto add = [&](std::string label, ExperimentConfig c) {
    const std::size_t i = cells.size();
    cells.push_back({i, std::move(label), std::move(c), derive_seed(cfg.seed, i)});
  };
  switch (cfg.experiment) {
    case ExperimentKind::lambda_sweep:
      for (double l : cfg.sweep.lambdas) {
        ExperimentConfig c = cfg;
        c.rule.kind = UpdateRule::Kind::weighted_sum;
        c.rule.lambda = l;
        add("lambda=" + format_real(l), c);
      }
      break;
    case ExperimentKind::gamma_beta_grid:
      for (double g : cfg.sweep.gammas) {
        for (double b : cfg.sweep.betas) {
          ExperimentConfig c = cfg;
          c.rule.kind = UpdateRule::Kind::blur;
          c.rule.gamma = g;
          c.unlearn.beta = b;
          add("gamma=" + format_real(g) + ",beta=" + format_real(b), c);
        }
      }
      break;
    case ExperimentKind::alignment_demo: {
      ExperimentConfig ws = cfg, bl = cfg;
      ws.rule.kind = UpdateRule::Kind::weighted_sum;
      bl.rule.kind = UpdateRule::Kind::blur;
      add("weighted_sum", ws);
      add("blur", bl);
      break;
    }
    default:
      add(to_string(cfg.experiment), cfg);
      break;
  }
  return cells;
}

namespace {

json cos_stats(const RunTrace& t) {
  double sum = 0.0, lo = 1.0, hi = -1.0;
  std::size_t n = 0;
  std::optional<double> first, last;
  for (const auto& r : t.records) {
    if (!r.cos_fr) continue;
    const double c = *r.cos_fr;
    if (!first) first = c;
    last = c;
    sum += c;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    ++n;
  }
  if (n == 0) return nullptr;
  return {{"first", *first}, {"last", *last}, {"mean", sum / static_cast<double>(n)}, {"min", lo}, {"max", hi}};
}

json unlearn_summary(const SweepCell& cell, const UnlearnResult& u) {
  json j;
  j["cell"] = cell.index;
  j["label"] = cell.label;
  j["seed"] = cell.seed;
  j["rule"] = rule_json(cell.cfg.rule);
  j["forget_loss"] = to_string(cell.cfg.unlearn.forget_loss);
  j["retain_loss"] = to_string(cell.cfg.unlearn.retain_loss);
  j["beta"] = cell.cfg.unlearn.beta;
  j["status"] = to_string(u.trace.status);
  if (!u.trace.message.empty()) j["message"] = u.trace.message;
  j["steps_completed"] = u.trace.records.size();
  j["chance"] = u.chance;
  j["forget_threshold"] = u.forget_threshold;
  j["before"] = report_json(u.before);
  j["final"] = report_json(u.final_report);
  if (u.selected) {
    j["selected"] = {{"step", u.selected->step}, {"report", report_json(u.selected->report)}};
    j["selected_retain_ratio"] =
        u.before.know_mem_retain > 0.0 ? json(u.selected->report.know_mem_retain / u.before.know_mem_retain) : json(nullptr);
  } else {
    j["selected"] = nullptr;
    j["selected_retain_ratio"] = nullptr;
  }
  j["align_f_sign_changes"] = u.align_f_sign_changes;
  j["cos_fr"] = cos_stats(u.trace);
  return j;
}

void write_evals(const std::vector<Evaluation>& evals, const fs::path& path) {
  std::string s = "step,verb_mem,know_mem_forget,know_mem_retain\n";
  for (const auto& e : evals) {
    s += std::to_string(e.step) + ',' + format_real(e.report.verb_mem) + ',' + format_real(e.report.know_mem_forget) +
         ',' + format_real(e.report.know_mem_retain) + '\n';
  }
  write_text(path, s);
}

struct CellOutcome {
  json summary;
  bool aborted = false;
};

CellOutcome run_toy_cell(const SweepCell& cell, const fs::path& dir) {
  fs::create_directories(dir);
  const ToySetup setup = prepare_toy(cell.cfg);
  TraceWriter writer((dir / "trace.csv").string());
  const UnlearnResult u = run_unlearning(setup, cell.cfg, cell.seed, &writer);
  write_evals(u.evals, dir / "evals.csv");
  CellOutcome out{unlearn_summary(cell, u), u.trace.status != RunStatus::completed};
  write_text(dir / "summary.json", out.summary.dump(2) + "\n");
  return out;
}

void write_toy_data(const ExperimentConfig& cfg, const fs::path& dir) {
  CorpusParams cp;
  cp.seed = cfg.seed;
  cp.vocab = cfg.corpus.vocab;
  cp.n_retain = cfg.corpus.n_retain;
  cp.n_forget = cfg.corpus.n_forget;
  cp.n_secrets = cfg.corpus.n_secrets;
  cp.seq_len = cfg.corpus.seq_len;
  cp.chain_peak = cfg.corpus.chain_peak;
  cp.dirichlet_alpha = cfg.corpus.dirichlet_alpha;
  const Corpus c = generate_corpus(cp);
  const RetainSplit split = split_retain(c.retain, cfg.corpus.holdout_fraction);
  fs::create_directories(dir);
  write_sequences((dir / "retain_train.txt").string(), split.train);
  write_sequences((dir / "retain_holdout.txt").string(), split.holdout);
  write_sequences((dir / "forget.txt").string(), c.forget.sequences);
  write_secrets((dir / "secrets.txt").string(), c.forget.secrets);
}

int run_toy(const ExperimentConfig& cfg, const RunOptions& opts, const fs::path& out) {
  const auto cells = make_cells(cfg);
  write_toy_data(cfg, out / "data");
  if (!is_sweep(cfg.experiment)) {
    const CellOutcome o = run_toy_cell(cells[0], out);
    if (opts.verbose) std::cerr << o.summary.dump(2) << "\n";
    return o.aborted ? 2 : 0;
  }

  std::vector<std::size_t> todo;
  if (opts.cell) {
    if (*opts.cell >= cells.size()) {
      throw ConfigError("cell " + std::to_string(*opts.cell) + " out of range (" + std::to_string(cells.size()) +
                        " cells)");
    }
    todo.push_back(*opts.cell);
  } else {
    for (const auto& c : cells) todo.push_back(c.index);
  }

  std::vector<std::optional<CellOutcome>> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const SweepCell& cell = cells[todo[k]];
      try {
        CellOutcome o = run_toy_cell(cell, out / ("cell_" + std::to_string(cell.index)));
        std::lock_guard lock(mu);
        if (opts.verbose) std::cerr << "cell " << cell.index << " (" << cell.label << ") done\n";
        outcomes[cell.index] = std::move(o);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(todo.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  bool aborted = false;
  for (const auto& o : outcomes) aborted = aborted || (o && o->aborted);
  if (opts.cell) return aborted ? 2 : 0;

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["seed"] = cfg.seed;
  summary["cells"] = json::array();
  std::string csv =
      "cell,label,rule,gamma,lambda,beta,status,before_know_mem_forget,before_know_mem_retain,final_verb_mem,"
      "final_know_mem_forget,final_know_mem_retain,selected_step,selected_know_mem_forget,selected_know_mem_retain,"
      "align_f_sign_changes\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const json& s = outcomes[i]->summary;
    summary["cells"].push_back(s);
    const auto& rule = cells[i].cfg.rule;
    auto num = [](const json& v) { return v.is_null() ? std::string() : format_real(v.get<double>()); };
    const bool sel = !s["selected"].is_null();
    csv += std::to_string(i) + ",\"" + cells[i].label + "\"," + to_string(rule.kind) + ',' +
           (rule.kind == UpdateRule::Kind::blur ? format_real(rule.gamma) : "") + ',' +
           (rule.kind == UpdateRule::Kind::weighted_sum ? format_real(rule.lambda) : "") + ',' +
           format_real(cells[i].cfg.unlearn.beta) + ',' + s["status"].get<std::string>() + ',' +
           num(s["before"]["know_mem_forget"]) + ',' + num(s["before"]["know_mem_retain"]) + ',' +
           num(s["final"]["verb_mem"]) + ',' + num(s["final"]["know_mem_forget"]) + ',' +
           num(s["final"]["know_mem_retain"]) + ',' + (sel ? std::to_string(s["selected"]["step"].get<std::int64_t>()) : "") +
           ',' + (sel ? num(s["selected"]["report"]["know_mem_forget"]) : "") + ',' +
           (sel ? num(s["selected"]["report"]["know_mem_retain"]) : "") + ',' +
           std::to_string(s["align_f_sign_changes"].get<int>()) + '\n';
  }
  write_text(out / "sweep.csv", csv);
  write_text(out / "summary.json", summary.dump(2) + "\n");
  if (opts.verbose) std::cerr << "wrote " << (out / "sweep.csv").string() << "\n";
  return aborted ? 2 : 0;
}

int run_single(const ExperimentConfig& cfg, const RunOptions& opts, const fs::path& out) {
  const BilevelProblem problem = make_problem(problem_id(cfg));
  const ParamVector theta0 = default_theta0(cfg, problem);
  TraceWriter writer((out / "trace.csv").string());
  RunHooks hooks;
  hooks.on_record = [&writer](const StepRecord& r) { writer.write(r); };
  RunResult r = run(problem, theta0, cfg.rule, make_schedule(cfg, problem, cfg.steps), cfg.steps, hooks);

  json j;
  j["experiment"] = "single_run";
  j["problem"] = problem.name;
  j["seed"] = cfg.seed;
  j["rule"] = rule_json(cfg.rule);
  j["eta"] = make_schedule(cfg, problem, cfg.steps).step_size();
  j["status"] = to_string(r.trace.status);
  if (!r.trace.message.empty()) j["message"] = r.trace.message;
  j["steps_completed"] = r.trace.records.size();
  j["theta_final"] = r.theta.values();
  j["known_lower_opt"] = opt_json(problem.known_lower_opt);
  const ValueGrad ef = problem.forget->evaluate(r.theta);
  const ValueGrad er = problem.retain->evaluate(r.theta);
  j["f_final"] = ef.value;
  j["r_final"] = er.value;
  j["kkt"] = nullptr;
  try {
    const Direction d = blur_direction(ef.gradient, er.gradient, cfg.rule.gamma, cfg.rule.grad_floor);
    if (d.zeta_hat) {
      const KktResiduals k = kkt_residuals(ef.gradient, er.gradient, *d.zeta_hat);
      j["kkt"] = {{"zeta_hat", *d.zeta_hat}, {"stationarity", k.stationarity}, {"lower_stationarity", k.lower_stationarity}};
    } else {
      j["kkt"] = {{"zeta_hat", nullptr}, {"stationarity", nullptr}, {"lower_stationarity", norm(ef.gradient)}};
    }
  } catch (const NumericalError&) {
    // Final iterate of an aborted run: gradients overflow, residuals undefined.
  }
  if (!r.trace.records.empty()) {
    const TemporalAverages a = temporal_averages(r.trace);
    j["temporal_averages"] = {{"grad_f_sq", a.grad_f_sq}, {"grad_f_sq_plus_u_sq", a.grad_f_sq_plus_u_sq}};
    j["last_record"] = record_json(r.trace.records.back());
  }
  write_text(out / "summary.json", j.dump(2) + "\n");
  if (opts.verbose) std::cerr << j.dump(2) << "\n";
  return r.trace.status == RunStatus::completed ? 0 : 2;
}

int run_example1_experiment(const ExperimentConfig& cfg, const RunOptions& opts, const fs::path& out) {
  const auto runs = run_example1(cfg);
  json j;
  j["experiment"] = "example1";
  j["problem"] = cfg.problem.name;
  j["rule"] = rule_json(cfg.rule);
  j["eta"] = cfg.schedule.eta;
  j["steps"] = cfg.steps;
  j["runs"] = json::array();
  bool aborted = false;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    write_run_trace_csv(r.trace, out / ("trace_" + std::to_string(i) + ".csv"));
    aborted = aborted || r.trace.status != RunStatus::completed;
    j["runs"].push_back({{"theta0", r.theta0},
                         {"theta_final", r.theta_final},
                         {"distance_to_bilevel_solution", std::abs(r.theta_final - 1.0)},
                         {"distance_to_upper_minimizer", std::abs(r.theta_final - 2.0)},
                         {"status", to_string(r.trace.status)},
                         {"trace", "trace_" + std::to_string(i) + ".csv"}});
  }
  write_text(out / "summary.json", j.dump(2) + "\n");
  if (opts.verbose) std::cerr << j.dump(2) << "\n";
  return aborted ? 2 : 0;
}

int run_rates_experiment(const ExperimentConfig& cfg, const RunOptions& opts, const fs::path& out) {
  const RateStudyResult res = run_rate_study(cfg, out.string());
  std::string csv = "T,eta,avg_grad_f_sq,avg_grad_f_sq_plus_u_sq\n";
  json pts = json::array();
  for (const auto& p : res.points) {
    csv += std::to_string(p.T) + ',' + format_real(p.eta) + ',' + format_real(p.avg_grad_f_sq) + ',' +
           format_real(p.avg_grad_f_sq_plus_u_sq) + '\n';
    pts.push_back({{"T", p.T}, {"eta", p.eta}, {"avg_grad_f_sq", p.avg_grad_f_sq},
                   {"avg_grad_f_sq_plus_u_sq", p.avg_grad_f_sq_plus_u_sq}});
  }
  write_text(out / "rates.csv", csv);
  json j;
  j["experiment"] = "rate_study";
  j["seed"] = cfg.seed;
  j["gamma"] = cfg.rule.gamma;
  j["C"] = cfg.schedule.C > 0.0 ? cfg.schedule.C : res.bounds.C;
  j["L_f"] = cfg.schedule.L_f > 0.0 ? cfg.schedule.L_f : res.bounds.L_f;
  j["starts"] = res.starts;
  j["points"] = pts;
  j["slope_grad_f_sq"] = res.slope_grad_f_sq;
  j["slope_grad_f_sq_plus_u_sq"] = res.slope_grad_f_sq_plus_u_sq;
  j["status"] = res.aborted ? "aborted_nonfinite" : "completed";
  write_text(out / "summary.json", j.dump(2) + "\n");
  if (opts.verbose) std::cerr << j.dump(2) << "\n";
  return res.aborted ? 2 : 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  validate(cfg);
  cfg.output_dir = resolve_output_dir(cfg);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg));
  switch (cfg.experiment) {
    case ExperimentKind::single_run: return run_single(cfg, opts, out);
    case ExperimentKind::example1: return run_example1_experiment(cfg, opts, out);
    case ExperimentKind::rate_study: return run_rates_experiment(cfg, opts, out);
    default: return run_toy(cfg, opts, out);
  }
}

}  // namespace blur
