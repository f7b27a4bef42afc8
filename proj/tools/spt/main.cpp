// SPDX-License-Identifier: Apache-2.0
//
// spt: command-line driver for the sensitivity-aware tuning pipeline.
//   generate -> pretrain -> sensitivity -> plan -> train, plus report and mmd.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "spt/allocation.hpp"
#include "spt/config.hpp"
#include "spt/container.hpp"
#include "spt/dataset.hpp"
#include "spt/error.hpp"
#include "spt/mmd.hpp"
#include "spt/patterns.hpp"
#include "spt/report.hpp"
#include "spt/sensitivity.hpp"
#include "spt/task.hpp"
#include "spt/training.hpp"
#include "spt/tuners.hpp"

namespace fs = std::filesystem;
using namespace spt;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path.string());
  out << text;
}

/// Backbone tensors of a checkpoint; "module.*" entries are dropped.
ParameterStore load_checkpoint(const std::string& path) {
  ParameterStore params;
  for (auto& [name, t] : container::read(path)) {
    if (!name.starts_with("module.")) params.add(name, t);
  }
  return params;
}

/// Metrics go to --metrics when given, stdout otherwise.
class MetricsOut {
 public:
  explicit MetricsOut(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw RunError("cannot write " + path);
    }
  }
  EvalSink sink(std::string phase) {
    return [this, phase = std::move(phase)](const EvalRecord& r) { stream() << eval_record_line(phase, r) << '\n'; };
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  ExperimentConfig load() const {
    ExperimentConfig c = config_or_default(config);
    if (seed) c.seed = *seed;
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (out_required) out->required();
}

// -- subcommands -------------------------------------------------------------

void run_generate(const Common& c) {
  const ExperimentConfig cfg = c.load();
  const TaskData data = generate_task(cfg.task, cfg.seed);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  save_dataset(dir / "source_train.spt", data.source.train);
  save_dataset(dir / "source_val.spt", data.source.val);
  save_dataset(dir / "target_train.spt", data.target.train);
  save_dataset(dir / "target_val.spt", data.target.val);
  const double gap =
      compute_mmd(data.source.train.flat_features(), data.target.train.flat_features()).mmd;
  std::cout << "wrote " << dir.string() << "  theta=" << cfg.task.theta << "  mmd(source,target)=" << gap << '\n';
}

struct PretrainArgs {
  std::string train;
  std::string val;
  std::string metrics;
  std::string plot;
};

void run_pretrain(const Common& c, const PretrainArgs& a) {
  const ExperimentConfig cfg = c.load();
  TaskSplit split{load_dataset(a.train), load_dataset(a.val)};
  TrainConfig tc = cfg.pretrain;
  tc.seed = cfg.seed;
  MetricsOut metrics(a.metrics);
  const PretrainResult r = pretrain(cfg.model, build_model(cfg.model, cfg.seed), split, tc, metrics.sink("pretrain"));
  container::write(c.out, r.params);
  if (!a.plot.empty()) write_text(a.plot, render_svg(r.history, nullptr));
  std::cout << "pretrain  epochs=" << r.epochs_run << "  accuracy=" << std::fixed << std::setprecision(4)
            << r.accuracy << "  params=" << r.params.total_elements() << '\n';
}

struct SensArgs {
  std::string checkpoint;
  std::string data;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> workers;
  std::string criterion;
};

void run_sensitivity(const Common& c, const SensArgs& a) {
  const ExperimentConfig cfg = c.load();
  const ParameterStore params = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  SensitivityOptions o = cfg.spt.sensitivity_options();
  if (a.samples) o.samples = *a.samples;
  if (a.batch) o.batch = *a.batch;
  if (a.workers) o.workers = *a.workers;
  Criterion crit = cfg.spt.criterion;
  if (a.criterion == "magnitude") crit = Criterion::magnitude;
  if (a.criterion == "gradient") crit = Criterion::gradient_squared;
  const SensitivityMap map = crit == Criterion::magnitude
                                 ? compute_importance_magnitude(cfg.model, params, data, o)
                                 : compute_sensitivity(cfg.model, params, data, o);
  save_sensitivity(c.out, map);
  std::cout << "sensitivity  samples=" << map.samples_used << "  entries=" << map.scores.total_elements() << '\n';
}

struct PlanArgs {
  std::string sens;
  std::string budget;
  std::string structured;
  std::optional<std::size_t> rank;
  std::string sigma_policy;
  bool exclude_bias = false;
  bool no_unstructured = false;
};

void run_plan(const Common& c, const PlanArgs& a) {
  const ExperimentConfig cfg = c.load();
  const SensitivityMap sens = load_sensitivity(a.sens);
  PlanOptions po = cfg.spt.plan_options();
  if (!a.structured.empty()) po.structured = parse_structured_kind(a.structured);
  if (a.rank) po.rank = *a.rank;
  if (!a.sigma_policy.empty()) po.sigma_policy = parse_sigma_policy(a.sigma_policy);
  po.exclude_bias = po.exclude_bias || a.exclude_bias;
  if (a.no_unstructured) po.allow_unstructured = false;
  const std::string budget = a.budget.empty() ? cfg.spt.budget : a.budget;
  const std::size_t tau = resolve_budget(budget, sens.scores.total_elements(),
                                         eligible_count(sens, default_exclusions(sens.scores, po.exclude_bias)));
  const AllocationPlan plan = make_plan(sens, tau, po);
  for (const auto& w : plan.warnings) std::cerr << "warning: " << w << '\n';
  save_plan(c.out, plan);
  std::cout << "plan  tau=" << tau << "  structured=" << plan.count(Verdict::structured)
            << "  unstructured=" << plan.count(Verdict::unstructured)
            << "  trainable=" << plan.total_trainable() << "  head=" << plan.head_params << '\n';
}

struct TrainArgs {
  std::string checkpoint;
  std::string plan;
  std::string train;
  std::string val;
  std::string metrics;
  std::string plot;
  bool merge = false;
  bool reinit_head = false;
};

void run_train(const Common& c, const TrainArgs& a) {
  const ExperimentConfig cfg = c.load();
  const ParameterStore params = load_checkpoint(a.checkpoint);
  const AllocationPlan plan = a.plan.empty() ? frozen_plan(params) : load_plan(a.plan);
  TaskSplit split{load_dataset(a.train), load_dataset(a.val)};
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  FinetuneOptions fo;
  fo.adapter_activation = cfg.spt.activation;
  fo.reinit_head = a.reinit_head;
  MetricsOut metrics(a.metrics);
  FinetuneResult r = finetune(cfg.model, params, plan, split, tc, fo, metrics.sink("finetune"));

  ParameterStore out = r.params;
  std::vector<TuneModule> modules = r.modules;
  if (a.merge) merge_all_lora(out, modules);
  store_modules(modules, out);
  container::write(c.out, out);
  if (!a.plot.empty()) write_text(a.plot, render_svg(r.history, nullptr));

  std::cout << std::fixed << std::setprecision(4) << "epochs    " << tc.epochs << '\n'
            << "accuracy  " << r.accuracy << '\n'
            << "tuned     " << r.tuned << " / " << r.total << "  (" << std::setprecision(3)
            << 100.0 * r.tuned_fraction() << "%)\n"
            << "modules   " << r.modules.size() << (a.merge ? "  (LoRA merged)" : "") << '\n';
}

struct ReportArgs {
  std::string sens;
  std::string budget;
  std::string plot;
  bool exclude_bias = false;
};

void run_report(const Common& c, const ReportArgs& a) {
  const ExperimentConfig cfg = c.load();
  const SensitivityMap sens = load_sensitivity(a.sens);
  const auto excl = default_exclusions(sens.scores, a.exclude_bias || cfg.spt.exclude_bias);
  const std::string budget = a.budget.empty() ? cfg.spt.budget : a.budget;
  const std::size_t tau = resolve_budget(budget, sens.scores.total_elements(), eligible_count(sens, excl));
  const PatternReport rep = report_patterns(sens, tau, excl);
  print_patterns(std::cout, rep);
  if (!a.plot.empty()) write_text(a.plot, render_svg({}, &rep));
}

void run_mmd(const std::string& a, const std::string& b) {
  const DomainGapReport r = compute_mmd(load_dataset(a).flat_features(), load_dataset(b).flat_features());
  std::cout << std::setprecision(8) << "mmd " << r.mmd << "  bandwidth " << r.bandwidth << "  n " << r.n_a << ' '
            << r.n_b << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spt: sensitivity-aware parameter-efficient tuning at desk scale"};
  app.require_subcommand(1);

  Common gen_c;
  auto* gen = app.add_subcommand("generate", "write source/target datasets for a synthetic transfer task");
  add_common(gen, gen_c);

  Common pre_c;
  PretrainArgs pre_a;
  auto* pre = app.add_subcommand("pretrain", "train a backbone on the source task");
  add_common(pre, pre_c);
  pre->add_option("--train", pre_a.train)->required()->check(CLI::ExistingFile);
  pre->add_option("--val", pre_a.val)->required()->check(CLI::ExistingFile);
  pre->add_option("--metrics", pre_a.metrics, "line-delimited JSON eval records");
  pre->add_option("--plot", pre_a.plot, "SVG of the accuracy curve");

  Common sens_c;
  SensArgs sens_a;
  auto* sens = app.add_subcommand("sensitivity", "score every parameter on target data");
  add_common(sens, sens_c);
  sens->add_option("--checkpoint", sens_a.checkpoint)->required()->check(CLI::ExistingFile);
  sens->add_option("--data", sens_a.data)->required()->check(CLI::ExistingFile);
  sens->add_option("--samples", sens_a.samples, "C, samples to score");
  sens->add_option("--batch", sens_a.batch, "1 = per-sample scoring");
  sens->add_option("--workers", sens_a.workers, "threads for the scoring loop");
  sens->add_option("--criterion", sens_a.criterion)->check(CLI::IsMember({"gradient", "magnitude"}));

  Common plan_c;
  PlanArgs plan_a;
  auto* plan = app.add_subcommand("plan", "allocate a budget from a sensitivity map");
  add_common(plan, plan_c);
  plan->add_option("--sens", plan_a.sens)->required()->check(CLI::ExistingFile);
  plan->add_option("--budget", plan_a.budget, "fraction of N (0.005) or a connection count (500)");
  plan->add_option("--structured", plan_a.structured)->check(CLI::IsMember({"lora", "adapter", "none"}));
  plan->add_option("--rank", plan_a.rank);
  plan->add_option("--sigma-policy", plan_a.sigma_policy)->check(CLI::IsMember({"module", "paper"}));
  plan->add_flag("--exclude-bias", plan_a.exclude_bias);
  plan->add_flag("--no-unstructured", plan_a.no_unstructured, "freeze matrices below the structured threshold");

  Common train_c;
  TrainArgs train_a;
  auto* train = app.add_subcommand("train", "fine-tune a checkpoint on the target task following a plan");
  add_common(train, train_c);
  train->add_option("--checkpoint", train_a.checkpoint)->required()->check(CLI::ExistingFile);
  train->add_option("--plan", train_a.plan, "omit for head-only tuning")->check(CLI::ExistingFile);
  train->add_option("--train", train_a.train)->required()->check(CLI::ExistingFile);
  train->add_option("--val", train_a.val)->required()->check(CLI::ExistingFile);
  train->add_option("--metrics", train_a.metrics);
  train->add_option("--plot", train_a.plot);
  train->add_flag("--merge", train_a.merge, "fold LoRA modules into their weights before saving");
  train->add_flag("--reinit-head", train_a.reinit_head);

  Common rep_c;
  ReportArgs rep_a;
  auto* rep = app.add_subcommand("report", "per-block and per-role proportions of the top connections");
  add_common(rep, rep_c, false);
  rep->add_option("--sens", rep_a.sens)->required()->check(CLI::ExistingFile);
  rep->add_option("--budget", rep_a.budget);
  rep->add_option("--plot", rep_a.plot);
  rep->add_flag("--exclude-bias", rep_a.exclude_bias);

  std::string mmd_a;
  std::string mmd_b;
  auto* mmd = app.add_subcommand("mmd", "domain gap between two datasets");
  mmd->add_option("--a", mmd_a)->required()->check(CLI::ExistingFile);
  mmd->add_option("--b", mmd_b)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) run_generate(gen_c);
    if (*pre) run_pretrain(pre_c, pre_a);
    if (*sens) run_sensitivity(sens_c, sens_a);
    if (*plan) run_plan(plan_c, plan_a);
    if (*train) run_train(train_c, train_a);
    if (*rep) run_report(rep_c, rep_a);
    if (*mmd) run_mmd(mmd_a, mmd_b);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
