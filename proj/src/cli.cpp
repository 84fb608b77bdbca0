#include "tilenet/cli.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tilenet/checkpoint.hpp"
#include "tilenet/harness.hpp"

namespace tilenet {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string split = "test";
  std::vector<std::string> checkpoints;
  std::vector<std::string> scans;
  std::string scan;
  std::string dynamics;
  std::string layout;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  bool has_seed = false;
  bool has_steps = false;
};

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (!o.scan.empty()) cfg.environment.scan = parse_scan_kind(o.scan);
  if (!o.dynamics.empty()) cfg.environment.dynamics = parse_dynamics(o.dynamics);
  return cfg;
}

std::vector<PageInstance> split_pages(const ExperimentConfig& cfg, const std::string& which) {
  const Dataset data = load_dataset(cfg.dataset);
  const DatasetSplit split = split_dataset(data.pages.size(), cfg.dataset.seed);
  std::vector<std::size_t> idx;
  if (which == "train") {
    idx = split.train;
  } else if (which == "validation") {
    idx = split.validation;
  } else if (which == "test") {
    idx = split.test;
  } else {
    throw UserError("--split must be train, validation or test");
  }
  if (cfg.eval_pages > 0 && idx.size() > cfg.eval_pages) idx.resize(cfg.eval_pages);
  if (idx.empty()) throw UserError("the " + which + " split is empty");
  return data.instances(idx);
}

void check_grid(const LoadedModel& m, const ExperimentConfig& cfg) {
  if (!(m.grid == cfg.dataset.grid)) throw UserError("checkpoint grid does not match dataset.grid");
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write " + path.string());
  return out;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  ExperimentConfig cfg = load_config(o);
  if (o.has_seed) cfg.dataset.seed = o.seed;
  if (!o.out.empty()) cfg.dataset.dir = o.out;
  const DatasetFiles files = gen_dataset(cfg.dataset, cfg.dataset.seed);
  out << "wrote " << files.users.string() << ", " << files.items.string() << ", " << files.pages.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load_config(o);
  if (o.has_seed) cfg.seed = o.seed;
  if (o.has_steps) cfg.train.train.steps = o.steps;
  if (!o.out.empty()) cfg.output_dir = o.out;
  const TrainOutcome r = run_training(cfg);
  if (r.diverged) {
    err << "training diverged (" << r.error << "); last good parameters in " << r.checkpoint.string() << '\n';
    return kExitInternalError;
  }
  out << "checkpoint " << r.checkpoint.string() << "\nvalidation ndcg " << r.validation.ndcg.mean
      << " pre@" << r.validation.precision_k << ' ' << r.validation.precision.mean << '\n';
  return kExitOk;
}

std::vector<ReportRow> evaluate_rows(const LoadedModel& m, const EnvironmentSpec& env,
                                     std::span<const PageInstance> pages, const ExperimentConfig& cfg,
                                     const std::string& layout) {
  const auto& seeds = cfg.train.train.eval_seeds;
  const std::string env_name(to_string(env.scan));
  std::vector<ReportRow> rows;
  if (m.kind == ModelKind::Utility && layout.empty()) {
    for (ScanKind k : {ScanKind::Row, ScanKind::Col, ScanKind::Z}) {
      rows.push_back({m.name(k), env_name, evaluate_policy(m.placement(k), env, pages, seeds)});
    }
  } else {
    std::optional<ScanKind> k;
    if (!layout.empty()) k = parse_scan_kind(layout);
    rows.push_back({m.name(k), env_name, evaluate_policy(m.placement(k), env, pages, seeds)});
  }
  return rows;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  const LoadedModel m = load_model(o.checkpoints.front());
  check_grid(m, cfg);
  const EnvironmentSpec env = make_environment(cfg.environment, cfg.dataset);
  const std::vector<PageInstance> pages = split_pages(cfg, o.split);
  const std::vector<ReportRow> rows = evaluate_rows(m, env, pages, cfg, o.layout);
  write_report_table(out, rows);
  if (!o.out.empty()) {
    std::ofstream f = open_output(o.out);
    write_report_csv(f, rows);
  }
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  std::vector<LoadedModel> models;
  for (const std::string& path : o.checkpoints) {
    models.push_back(load_model(path));
    check_grid(models.back(), cfg);
  }
  const std::vector<PageInstance> pages = split_pages(cfg, o.split);
  std::vector<std::string> scans = o.scans;
  if (scans.empty()) scans = {"row", "col", "z", "real"};
  std::vector<ReportRow> rows;
  for (const std::string& s : scans) {
    EnvironmentConfig ec = cfg.environment;
    ec.scan = parse_scan_kind(s);
    const EnvironmentSpec env = make_environment(ec, cfg.dataset);
    for (const LoadedModel& m : models) {
      for (ReportRow& r : evaluate_rows(m, env, pages, cfg, "")) rows.push_back(std::move(r));
    }
  }
  write_report_table(out, rows);
  if (!o.out.empty()) {
    std::ofstream f = open_output(o.out);
    write_report_csv(f, rows);
  }
  return kExitOk;
}

int cmd_export_heatmap(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  const LoadedModel m = load_model(o.checkpoints.front());
  check_grid(m, cfg);
  if (m.kind != ModelKind::Tile) throw UserError("export-heatmap needs a tile network checkpoint");
  const std::vector<PageInstance> pages = split_pages(cfg, o.split);
  const std::vector<double> priority = tile_priority_heatmap(*m.policy, pages);
  const fs::path prefix = o.out.empty() ? fs::path("heatmap") : fs::path(o.out);
  fs::path csv = prefix, svg = prefix;
  csv += ".csv";
  svg += ".svg";
  {
    std::ofstream f = open_output(csv);
    write_heatmap_csv(f, m.grid, priority);
  }
  {
    std::ofstream f = open_output(svg);
    write_heatmap_svg(f, m.grid, priority);
  }
  out << "wrote " << csv.string() << ", " << svg.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tile Networks: learned item selection and 2-D layout for whole-page recommendation", "tilenet"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic users/items/pages dataset");
  gen->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  gen->add_option("--seed", o.seed, "dataset seed (overrides dataset.seed)");
  gen->add_option("-o,--out", o.out, "output directory (overrides dataset.dir)");

  auto* tr = app.add_subcommand("train", "train the configured model");
  tr->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  tr->add_option("--seed", o.seed, "experiment seed (overrides seed)");
  tr->add_option("--steps", o.steps, "training steps (overrides train.steps)");
  tr->add_option("-o,--out", o.out, "output directory (overrides output_dir)");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on an environment");
  ev->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  ev->add_option("-m,--checkpoint", o.checkpoints, "model checkpoint")->required()->expected(1);
  ev->add_option("--scan", o.scan, "environment scan order: row, col, z or real");
  ev->add_option("--dynamics", o.dynamics, "click dynamics: none, diverse or similar");
  ev->add_option("--layout", o.layout, "placement layout for a utility ranker");
  ev->add_option("--split", o.split, "train, validation or test")->capture_default_str();
  ev->add_option("-o,--out", o.out, "CSV report path");

  auto* cmp = app.add_subcommand("compare", "evaluate several checkpoints across environments");
  cmp->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  cmp->add_option("-m,--checkpoint", o.checkpoints, "model checkpoints")->required();
  cmp->add_option("--scans", o.scans, "environments to compare on")->delimiter(',');
  cmp->add_option("--dynamics", o.dynamics, "click dynamics: none, diverse or similar");
  cmp->add_option("--split", o.split, "train, validation or test")->capture_default_str();
  cmp->add_option("-o,--out", o.out, "CSV report path");

  auto* hm = app.add_subcommand("export-heatmap", "write the learned tile priority as CSV and SVG");
  hm->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  hm->add_option("-m,--checkpoint", o.checkpoints, "tile network checkpoint")->required()->expected(1);
  hm->add_option("--split", o.split, "pages to decode")->capture_default_str();
  hm->add_option("-o,--out", o.out, "output path prefix");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  }
  o.has_seed = app.got_subcommand(gen) ? gen->count("--seed") > 0 : tr->count("--seed") > 0;
  o.has_steps = tr->count("--steps") > 0;

  try {
    if (app.got_subcommand(gen)) return cmd_gen_data(o, out);
    if (app.got_subcommand(tr)) return cmd_train(o, out, err);
    if (app.got_subcommand(ev)) return cmd_evaluate(o, out);
    if (app.got_subcommand(cmp)) return cmd_compare(o, out);
    return cmd_export_heatmap(o, out);
  } catch (const UserError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
}

}  // namespace tilenet
