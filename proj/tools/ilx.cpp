// ilx: train / sweep / verify / plotdata front end.
#include "ilprox/experiment.hpp"
#include "ilprox/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace ilprox;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kConfigError = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "INI experiment config")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "run only this seed");
  app->add_option("--out-dir", c.out_dir, "directory for CSV output");
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig prepare(const Common& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (!c.out_dir.empty()) std::filesystem::create_directories(c.out_dir);
  return c;
}

int cmd_train(const Common& o) {
  const ExperimentConfig c = prepare(o);
  const ExperimentResult r = run_experiment(c, o.threads);
  const auto [m, s] = r.final_accuracy();
  const auto [best, at] = r.best_mean_accuracy();
  if (std::isnan(m)) {
    std::printf("%s %s lr=%g seeds=%zu final_test_loss=%.6g diverged=%d\n", c.name.c_str(), algorithm_name(c.algo),
                c.lr, r.runs.size(), r.mean_rows.back().test_loss, r.diverged_seeds());
  } else {
    std::printf("%s %s lr=%g seeds=%zu final_acc=%.2f+-%.2f best_mean_acc=%.2f@%ld diverged=%d\n", c.name.c_str(),
                algorithm_name(c.algo), c.lr, r.runs.size(), m, s, best, at, r.diverged_seeds());
  }
  if (!c.out_dir.empty()) std::printf("wrote %s/%s_*.csv\n", c.out_dir.c_str(), c.name.c_str());
  return kOk;
}

int cmd_sweep(const Common& o) {
  const ExperimentConfig c = prepare(o);
  const auto cells = stability_sweep(c, o.threads);
  std::printf("%-14s %8s %10s %8s %s\n", "algo", "lr", "final_acc", "std", "");
  for (const auto& cell : cells) {
    std::printf("%-14s %8g %10.2f %8.2f %s\n", algorithm_name(cell.algo), cell.lr, cell.mean, cell.std,
                cell.divergent ? "divergent" : "");
  }
  if (!c.out_dir.empty()) std::printf("wrote %s/%s_sweep.csv\n", c.out_dir.c_str(), c.name.c_str());
  return kOk;
}

int cmd_verify(const std::string& which, bool strict) {
  const auto checks = verify_suite(which);
  bool ok = true;
  for (const auto& c : checks) {
    const char* tag = c.pass ? "PASS" : (c.unattainable ? "FAIL (known unattainable)" : "FAIL");
    std::printf("[%s] %s: %s\n", tag, c.name.c_str(), c.detail.c_str());
    if (!c.pass && (strict || !c.unattainable)) ok = false;
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_plotdata(const std::vector<std::string>& inputs, const std::string& kind, std::size_t stride,
                 const std::string& out_path) {
  std::vector<Table> tables;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path);
    tables.push_back(read_csv(in, path));
  }
  if (out_path.empty()) {
    emit_plot_data(tables, kind, std::cout, stride);
  } else {
    std::ofstream out(out_path);
    if (!out) throw CsvError("cannot write " + out_path);
    emit_plot_data(tables, kind, out, stride);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inference-learning experiments"};
  app.require_subcommand(1);

  Common train_opts, sweep_opts;
  auto* train = app.add_subcommand("train", "train one config over its seeds");
  add_common(train, train_opts);
  auto* sweep = app.add_subcommand("sweep", "stability sweep over [sweep] algos x lrs");
  add_common(sweep, sweep_opts);

  std::string which = "all";
  bool strict = false;
  auto* verify = app.add_subcommand("verify", "synthetic invariant checks");
  verify->add_option("suite", which, "gradients|nlms|theorem42|descent|compat|closedform|all")
      ->check(CLI::IsMember(suite_names()));
  verify->add_flag("--strict", strict, "count known-unattainable checks as failures");

  std::vector<std::string> inputs;
  std::string kind = "identity", out_path;
  std::size_t stride = 1;
  auto* plot = app.add_subcommand("plotdata", "downsample or seed-average CSVs");
  plot->add_option("inputs", inputs, "CSV files")->required();
  plot->add_option("--kind", kind, "identity|mean")->check(CLI::IsMember({"identity", "mean"}));
  plot->add_option("--stride", stride, "keep every k-th row")->check(CLI::PositiveNumber);
  plot->add_option("-o,--output", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*sweep) return cmd_sweep(sweep_opts);
    if (*verify) return cmd_verify(which, strict);
    if (*plot) return cmd_plotdata(inputs, kind, stride, out_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kConfigError;
  } catch (const CsvError& e) {
    std::fprintf(stderr, "csv error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  return kOk;
}
