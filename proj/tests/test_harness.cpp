#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "blur/config.hpp"
#include "blur/experiments.hpp"
#include "blur/trace_io.hpp"

namespace {

namespace fs = std::filesystem;
using blur::ExperimentKind;
using blur::StepRecord;

fs::path tmp_dir(const std::string& name) {
  const fs::path p = fs::path(BLUR_TEST_TMP) / "harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

StepRecord sample_record(std::int64_t step) {
  StepRecord r;
  r.step = step;
  r.f = 0.1 * static_cast<double>(step) + 1.0 / 3.0;
  r.r = -2.5e-300;
  r.grad_f_norm = std::sqrt(2.0);
  r.grad_r_norm = 1e300;
  r.u_norm = 0.0;
  if (step % 2 == 0) r.cos_fr = -0.999999999999;
  if (step % 3 != 0) r.align_f = 1.0;
  r.align_r = std::numeric_limits<double>::denorm_min();
  if (step % 5 != 0) r.zeta_hat = -7.25e-17;
  r.eta = 2.5e-3;
  return r;
}

TEST(Config, DefaultsPerKind) {
  EXPECT_EQ(blur::default_config(ExperimentKind::single_run).problem.name, "quadratic_pair");
  const auto ex = blur::default_config(ExperimentKind::example1);
  EXPECT_EQ(ex.problem.name, "example1_smoothed");
  EXPECT_EQ(ex.steps, 5000);
  EXPECT_EQ(ex.schedule.eta, 1e-2);
  const auto toy = blur::default_config(ExperimentKind::unlearn_pipeline);
  EXPECT_EQ(toy.problem.name, "toylm");
  EXPECT_EQ(toy.rule.kind, blur::UpdateRule::Kind::blur);
  EXPECT_EQ(toy.unlearn.forget_loss, blur::LossKind::npo_forget);
  EXPECT_EQ(toy.steps, 600);
  EXPECT_EQ(toy.schedule.eta, 0.5);
  EXPECT_EQ(toy.unlearn.beta, 0.2);
  EXPECT_EQ(toy.rule.grad_floor, 1e-4);
  EXPECT_EQ(blur::default_config(ExperimentKind::single_run).rule.grad_floor, 1e-12);
  EXPECT_EQ(blur::default_config(ExperimentKind::rate_study).schedule.kind, blur::StepSchedule::Kind::theorem);
}

TEST(Config, ParseOverlaysDefaults) {
  const auto c = blur::parse_config(R"({"experiment": "lambda_sweep", "seed": 11,
      "rule": {"kind": "weighted_sum", "lambda": 0.5}, "sweep": {"lambdas": [0, 1]},
      "unlearn": {"forget_loss": "simnpo", "alpha": 0.1}})");
  EXPECT_EQ(c.experiment, ExperimentKind::lambda_sweep);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.rule.lambda, 0.5);
  EXPECT_EQ(c.sweep.lambdas, (std::vector<double>{0, 1}));
  EXPECT_EQ(c.unlearn.forget_loss, blur::LossKind::simnpo_forget);
  EXPECT_EQ(c.steps, blur::default_config(ExperimentKind::lambda_sweep).steps);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(blur::parse_config("{"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"stepz": 3})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"rule": {"gama": 1}})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"steps": "many"})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"steps": 0})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"experiment": "everything"})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"rule": {"gamma": -1}})"), blur::ConfigError);
  EXPECT_THROW(blur::parse_config(R"({"experiment": "unlearn_pipeline", "problem": {"name": "quadratic_pair"}})"),
               blur::ConfigError);
  EXPECT_THROW(blur::load_config((fs::path(BLUR_TEST_TMP) / "nope.json").string()), blur::ConfigError);
}

TEST(Config, JsonRoundTrip) {
  for (ExperimentKind k : {ExperimentKind::single_run, ExperimentKind::lambda_sweep, ExperimentKind::gamma_beta_grid,
                           ExperimentKind::alignment_demo, ExperimentKind::cosine_demo, ExperimentKind::rate_study,
                           ExperimentKind::unlearn_pipeline, ExperimentKind::example1}) {
    auto c = blur::default_config(k);
    c.seed = 99;
    const std::string text = blur::to_json(c);
    EXPECT_EQ(blur::to_json(blur::parse_config(text)), text) << blur::to_string(k);
    EXPECT_EQ(blur::parse_experiment_kind(blur::to_string(k)), k);
  }
}

TEST(Config, OutputDirResolution) {
  auto c = blur::default_config(ExperimentKind::example1);
  c.output_dir = "somewhere";
  EXPECT_EQ(blur::resolve_output_dir(c), "somewhere");
  c.output_dir.clear();
  const fs::path got = blur::resolve_output_dir(c);
  EXPECT_EQ(got.filename(), "example1");
}

TEST(TraceIo, RealFormattingRoundTrips) {
  for (double x : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e300, std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max(), 0.1}) {
    EXPECT_EQ(blur::parse_real(blur::format_real(x)), x);
  }
  EXPECT_THROW(blur::parse_real("1.0x"), std::invalid_argument);
  EXPECT_THROW(blur::parse_real(""), std::invalid_argument);
}

TEST(TraceIo, RecordRoundTrip) {
  for (std::int64_t s = 0; s < 31; ++s) {
    const StepRecord r = sample_record(s);
    EXPECT_EQ(blur::parse_record(blur::format_record(r)), r);
  }
  EXPECT_THROW(blur::parse_record("1,2,3"), std::invalid_argument);
}

TEST(TraceIo, EmptyTraceIsHeaderOnly) {
  const auto dir = tmp_dir("empty");
  blur::write_trace(blur::RunTrace{}, (dir / "t.csv").string());
  EXPECT_EQ(slurp(dir / "t.csv"), std::string(blur::kTraceHeader) + "\n");
  EXPECT_TRUE(blur::read_trace((dir / "t.csv").string()).records.empty());
}

TEST(TraceIo, FileRoundTripIsIdentity) {
  const auto dir = tmp_dir("roundtrip");
  blur::RunTrace t;
  for (std::int64_t s = 0; s < 1000; ++s) t.records.push_back(sample_record(s));
  blur::write_trace(t, (dir / "a.csv").string());
  const auto back = blur::read_trace((dir / "a.csv").string());
  EXPECT_EQ(back.records, t.records);
  blur::write_trace(back, (dir / "b.csv").string());
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(TraceIo, StreamingWriterMatchesBatchWriter) {
  const auto dir = tmp_dir("writer");
  blur::RunTrace t;
  for (std::int64_t s = 0; s < 50; ++s) t.records.push_back(sample_record(s));
  {
    blur::TraceWriter w((dir / "stream.csv").string());
    for (const auto& r : t.records) w.write(r);
  }
  blur::write_trace(t, (dir / "batch.csv").string());
  EXPECT_EQ(slurp(dir / "stream.csv"), slurp(dir / "batch.csv"));
}

TEST(TraceIo, MalformedInputThrows) {
  const auto dir = tmp_dir("malformed");
  {
    std::ofstream((dir / "bad_header.csv").string()) << "step,f\n0,1\n";
    std::ofstream((dir / "bad_row.csv").string()) << blur::kTraceHeader << "\n0,1,2\n";
  }
  EXPECT_ANY_THROW(blur::read_trace((dir / "bad_header.csv").string()));
  EXPECT_ANY_THROW(blur::read_trace((dir / "bad_row.csv").string()));
  EXPECT_ANY_THROW(blur::read_trace((dir / "missing.csv").string()));
}

TEST(Checkpoint, SelectionMaximizesRetainUnderForgetBound) {
  std::vector<blur::Evaluation> evals(4);
  const double kmf[] = {0.9, 0.05, 0.08, 0.02};
  const double kmr[] = {0.7, 0.65, 0.69, 0.4};
  for (int i = 0; i < 4; ++i) {
    evals[i].step = i * 10;
    evals[i].report.know_mem_forget = kmf[i];
    evals[i].report.know_mem_retain = kmr[i];
  }
  const auto sel = blur::select_checkpoint(evals, 0.1);
  ASSERT_TRUE(sel.has_value());
  EXPECT_EQ(sel->step, 20);
  EXPECT_FALSE(blur::select_checkpoint(evals, 0.01).has_value());
}

TEST(Checkpoint, ChanceLevel) {
  const std::vector<blur::Secret> secrets{{{30}, {1}}, {{31}, {2, 3}}};
  EXPECT_DOUBLE_EQ(blur::chance_know_mem(secrets, 32), 0.5 * (1.0 / 32 + 1.0 / 1024));
}

TEST(Unlearning, AfterFallsBackToFinalModel) {
  blur::UnlearnResult r;
  r.final_report.know_mem_retain = 0.3;
  EXPECT_EQ(r.after().know_mem_retain, 0.3);
  r.selected = blur::Evaluation{10, {}};
  r.selected->report.know_mem_retain = 0.6;
  EXPECT_EQ(r.after().know_mem_retain, 0.6);
}

TEST(Cells, SweepGrids) {
  auto c = blur::default_config(ExperimentKind::lambda_sweep);
  c.sweep.lambdas = {0.0, 1.0, 2.0};
  const auto cells = blur::make_cells(c);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[2].cfg.rule.lambda, 2.0);
  EXPECT_NE(cells[0].seed, cells[1].seed);
  auto g = blur::default_config(ExperimentKind::gamma_beta_grid);
  EXPECT_EQ(blur::make_cells(g).size(), g.sweep.gammas.size() * g.sweep.betas.size());
  EXPECT_EQ(blur::make_cells(blur::default_config(ExperimentKind::unlearn_pipeline)).size(), 1u);
}

blur::ExperimentConfig small_toy(ExperimentKind k, const fs::path& out) {
  auto c = blur::default_config(k);
  c.steps = 30;
  c.finetune.epochs = 50;
  c.corpus.n_retain = 40;
  c.corpus.n_forget = 12;
  c.output_dir = out.string();
  return c;
}

TEST(RunExperiment, SingleRunIsByteDeterministic) {
  const auto dir = tmp_dir("det_single");
  auto c = blur::default_config(ExperimentKind::single_run);
  c.steps = 2000;
  c.output_dir = (dir / "a").string();
  ASSERT_EQ(blur::run_experiment(c), 0);
  c.output_dir = (dir / "b").string();
  ASSERT_EQ(blur::run_experiment(c), 0);
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
  c.seed = 8;
  c.output_dir = (dir / "c").string();
  ASSERT_EQ(blur::run_experiment(c), 0);
  EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
}

TEST(RunExperiment, ToyPipelineIsByteDeterministicAcrossJobCounts) {
  const auto dir = tmp_dir("det_toy");
  auto c = small_toy(ExperimentKind::lambda_sweep, dir / "a");
  c.sweep.lambdas = {0.5, 1.0};
  blur::RunOptions one;
  ASSERT_EQ(blur::run_experiment(c, one), 0);
  c.output_dir = (dir / "b").string();
  blur::RunOptions two;
  two.jobs = 2;
  ASSERT_EQ(blur::run_experiment(c, two), 0);
  for (const char* f : {"sweep.csv", "cell_0/trace.csv", "cell_0/evals.csv", "cell_1/trace.csv", "data/forget.txt",
                        "data/retain_train.txt", "data/secrets.txt"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(RunExperiment, SingleCellMatchesFullSweep) {
  const auto dir = tmp_dir("one_cell");
  auto c = small_toy(ExperimentKind::lambda_sweep, dir / "full");
  c.sweep.lambdas = {0.5, 1.0};
  ASSERT_EQ(blur::run_experiment(c), 0);
  c.output_dir = (dir / "single").string();
  blur::RunOptions opts;
  opts.cell = 1;
  ASSERT_EQ(blur::run_experiment(c, opts), 0);
  EXPECT_EQ(slurp(dir / "full" / "cell_1" / "trace.csv"), slurp(dir / "single" / "cell_1" / "trace.csv"));
  EXPECT_FALSE(fs::exists(dir / "single" / "cell_0"));
}

TEST(RunExperiment, WritesResolvedConfig) {
  const auto dir = tmp_dir("config_out");
  auto c = blur::default_config(ExperimentKind::example1);
  c.steps = 100;
  c.output_dir = dir.string();
  ASSERT_EQ(blur::run_experiment(c), 0);
  const auto back = blur::load_config((dir / "config.json").string());
  EXPECT_EQ(blur::to_json(back), blur::to_json(c));
  EXPECT_TRUE(fs::exists(dir / "trace_0.csv"));
}

TEST(RunExperiment, AbortReturnsTwoAndKeepsPartialTrace) {
  const auto dir = tmp_dir("abort");
  auto c = blur::default_config(ExperimentKind::single_run);
  c.rule = blur::UpdateRule::weighted_sum(1.0);
  c.schedule.eta = 1e3;
  c.steps = 100000;
  c.output_dir = dir.string();
  EXPECT_EQ(blur::run_experiment(c), 2);
  const auto t = blur::read_trace((dir / "trace.csv").string());
  EXPECT_GT(t.records.size(), 0u);
  EXPECT_LT(t.records.size(), 100000u);
}

TEST(Example1, WeightedSumWithoutRetainEndsOutsideSolutionSet) {
  auto c = blur::default_config(ExperimentKind::example1);
  c.rule = blur::UpdateRule::weighted_sum(0.0, blur::UpdateRule::Weighting::forget);
  c.problem.starts = {3.0};
  const auto runs = blur::run_example1(c);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_LE(std::fabs(runs[0].theta_final - 2.0), 1e-2);
}

}  // namespace
