// Config-driven training runs, stability sweeps and plot-data CSV helpers.
#pragma once

#include "ilprox/analysis.hpp"
#include "ilprox/datasets.hpp"
#include "ilprox/learners.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace ilprox {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCsvVersion = 1;

// Inference / rule settings that override the per-algorithm defaults.
struct Overrides {
  std::optional<double> epsilon, beta, gamma_bot, gamma_top, adam_lr;
  std::optional<int> steps;
  std::optional<PredictionMode> mode;
  std::optional<GammaScheme> scheme;
};

struct ExperimentConfig {
  std::string name = "run";
  AlgorithmKind algo = AlgorithmKind::IlProx;
  double lr = 1.0;
  std::vector<std::uint64_t> seeds{0};
  long iterations = 1000;
  long eval_every = 50;
  std::size_t batch_size = 1;

  std::string data_kind = "mnist";  // mnist | idx | cifar10 | teacher
  std::string data_dir;             // mnist: directory with the four IDX files
  std::string train_images, train_labels, test_images, test_labels;
  std::vector<std::string> cifar_train, cifar_test;
  std::size_t test_subset = 1000;
  std::size_t teacher_samples = 1000;
  std::uint64_t data_seed = 1234;

  std::vector<int> arch{784, 256, 256, 10};
  Activation act = Activation::ReLU;
  LossKind loss = LossKind::SoftmaxCE;
  Overrides over;

  std::vector<AlgorithmKind> sweep_algos;
  std::vector<double> sweep_lrs{0.01, 0.1, 1, 2.5, 10, 100};
  std::string out_dir;
};

// ---- parsing ---------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError(key + ": not a number: '" + s + "'");
  return v;
}

inline long to_long(const std::string& key, const std::string& s) {
  const double v = to_double(key, s);
  if (v != std::floor(v)) throw ConfigError(key + ": expected an integer: '" + s + "'");
  return static_cast<long>(v);
}

inline Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::MSE;
  if (s == "softmax-ce") return LossKind::SoftmaxCE;
  if (s == "sigmoid-bce") return LossKind::SigmoidBCE;
  throw ConfigError("unknown loss '" + s + "'");
}

inline AlgorithmKind parse_algo(const std::string& s) {
  const auto a = parse_algorithm(s);
  if (!a) throw ConfigError("unknown algorithm '" + s + "'");
  return *a;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path q(p);
  return q.is_absolute() ? p : (base / q).lexically_normal().string();
}

}  // namespace detail

// Relative data paths are resolved against `base_dir` (the config file's directory).
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = ".") {
  namespace pt = boost::property_tree;
  using namespace detail;
  pt::ptree t;
  try {
    pt::read_ini(in, t);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  static const std::map<std::string, std::vector<std::string>> known = {
      {"experiment", {"name", "algo", "lr", "seeds", "iterations", "eval_every", "batch_size"}},
      {"data",
       {"kind", "dir", "train_images", "train_labels", "test_images", "test_labels", "cifar_train", "cifar_test",
        "test_subset", "samples", "seed"}},
      {"model", {"arch", "activation", "loss"}},
      {"inference", {"epsilon", "beta", "steps", "gamma_bot", "gamma_top", "mode", "scheme", "adam_lr"}},
      {"sweep", {"algos", "lrs"}},
      {"output", {"dir"}},
  };
  for (const auto& [section, body] : t) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& kv : body) {
      const auto& keys = it->second;
      if (std::find(keys.begin(), keys.end(), kv.first) == keys.end()) {
        throw ConfigError("unknown key '" + kv.first + "' in [" + section + "]");
      }
    }
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = t.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return boost::trim_copy(*v);
    return std::nullopt;
  };

  ExperimentConfig c;
  if (auto v = get("experiment.name")) c.name = *v;
  if (auto v = get("experiment.algo")) c.algo = parse_algo(*v);
  if (auto v = get("experiment.lr")) c.lr = to_double("lr", *v);
  if (auto v = get("experiment.seeds")) {
    c.seeds.clear();
    for (const auto& s : split_list(*v)) {
      const long k = to_long("seeds", s);
      if (k < 0) throw ConfigError("seeds: must be non-negative");
      c.seeds.push_back(static_cast<std::uint64_t>(k));
    }
  }
  if (auto v = get("experiment.iterations")) c.iterations = to_long("iterations", *v);
  if (auto v = get("experiment.eval_every")) c.eval_every = to_long("eval_every", *v);
  if (auto v = get("experiment.batch_size")) {
    const long b = to_long("batch_size", *v);
    if (b < 1) throw ConfigError("batch_size must be >= 1");
    c.batch_size = static_cast<std::size_t>(b);
  }

  if (auto v = get("data.kind")) c.data_kind = *v;
  if (auto v = get("data.dir")) c.data_dir = resolve(base_dir, *v);
  if (auto v = get("data.train_images")) c.train_images = resolve(base_dir, *v);
  if (auto v = get("data.train_labels")) c.train_labels = resolve(base_dir, *v);
  if (auto v = get("data.test_images")) c.test_images = resolve(base_dir, *v);
  if (auto v = get("data.test_labels")) c.test_labels = resolve(base_dir, *v);
  if (auto v = get("data.cifar_train"))
    for (const auto& s : split_list(*v)) c.cifar_train.push_back(resolve(base_dir, s));
  if (auto v = get("data.cifar_test"))
    for (const auto& s : split_list(*v)) c.cifar_test.push_back(resolve(base_dir, s));
  if (auto v = get("data.test_subset")) c.test_subset = static_cast<std::size_t>(to_long("test_subset", *v));
  if (auto v = get("data.samples")) c.teacher_samples = static_cast<std::size_t>(to_long("samples", *v));
  if (auto v = get("data.seed")) c.data_seed = static_cast<std::uint64_t>(to_long("data seed", *v));

  if (auto v = get("model.arch")) {
    c.arch.clear();
    for (const auto& s : split_list(*v)) c.arch.push_back(static_cast<int>(to_long("arch", s)));
  }
  if (auto v = get("model.activation")) c.act = parse_activation(*v);
  if (auto v = get("model.loss")) c.loss = parse_loss(*v);

  if (auto v = get("inference.epsilon")) c.over.epsilon = to_double("epsilon", *v);
  if (auto v = get("inference.beta")) c.over.beta = to_double("beta", *v);
  if (auto v = get("inference.steps")) c.over.steps = static_cast<int>(to_long("steps", *v));
  if (auto v = get("inference.gamma_bot")) c.over.gamma_bot = to_double("gamma_bot", *v);
  if (auto v = get("inference.gamma_top")) c.over.gamma_top = to_double("gamma_top", *v);
  if (auto v = get("inference.adam_lr")) c.over.adam_lr = to_double("adam_lr", *v);
  if (auto v = get("inference.mode")) {
    if (*v == "pre") c.over.mode = PredictionMode::PreActivation;
    else if (*v == "post") c.over.mode = PredictionMode::PostActivation;
    else throw ConfigError("mode must be 'pre' or 'post'");
  }
  if (auto v = get("inference.scheme")) {
    if (*v == "bot-top") c.over.scheme = GammaScheme::BotTop;
    else if (*v == "explicit") c.over.scheme = GammaScheme::Explicit;
    else if (*v == "prox-limits") c.over.scheme = GammaScheme::ProxLimits;
    else throw ConfigError("scheme must be bot-top, explicit or prox-limits");
  }

  if (auto v = get("sweep.algos"))
    for (const auto& s : split_list(*v)) c.sweep_algos.push_back(parse_algo(s));
  if (auto v = get("sweep.lrs")) {
    c.sweep_lrs.clear();
    for (const auto& s : split_list(*v)) c.sweep_lrs.push_back(to_double("lrs", s));
  }
  if (auto v = get("output.dir")) c.out_dir = resolve(base_dir, *v);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, std::filesystem::path(path).parent_path());
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (c.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (c.seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (!(c.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  try {
    validate_arch(c.arch);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  static const std::vector<std::string> kinds{"mnist", "idx", "cifar10", "teacher"};
  if (std::find(kinds.begin(), kinds.end(), c.data_kind) == kinds.end()) {
    throw ConfigError("unknown data kind '" + c.data_kind + "'");
  }
  if (c.data_kind == "teacher" && c.loss != LossKind::MSE) throw ConfigError("teacher data needs loss = mse");
}

inline TrainConfig make_train_config(const ExperimentConfig& c, AlgorithmKind algo, double lr) {
  TrainConfig t = default_train_config(algo, lr);
  t.act = c.act;
  t.loss = c.loss;
  const Overrides& o = c.over;
  if (o.epsilon) t.epsilon = *o.epsilon;
  if (o.adam_lr) t.adam_lr = *o.adam_lr;
  if (o.beta) t.gammas.beta = *o.beta;
  if (o.steps) t.gammas.steps = *o.steps;
  if (o.gamma_bot) t.gammas.gamma_bot = *o.gamma_bot;
  if (o.gamma_top) t.gammas.gamma_top = *o.gamma_top;
  if (o.mode) t.mode = *o.mode;
  if (o.scheme) t.gammas.scheme = *o.scheme;
  return t;
}

// ---- data ------------------------------------------------------------------

struct DataSplit {
  Dataset train, test;
};

inline DataSplit load_data(const ExperimentConfig& c) {
  DataSplit d;
  if (c.data_kind == "teacher") {
    // one teacher; the tail of the sample stream is held out
    const std::size_t n_test = std::max<std::size_t>(1, c.test_subset);
    Dataset all = teacher_student_dataset(c.data_seed, c.teacher_samples + n_test, c.arch);
    d.train.inputs.assign(all.inputs.begin(), all.inputs.begin() + c.teacher_samples);
    d.train.targets.assign(all.targets.begin(), all.targets.begin() + c.teacher_samples);
    d.test.inputs.assign(all.inputs.begin() + c.teacher_samples, all.inputs.end());
    d.test.targets.assign(all.targets.begin() + c.teacher_samples, all.targets.end());
  } else if (c.data_kind == "cifar10") {
    if (c.cifar_train.empty() || c.cifar_test.empty()) throw ConfigError("cifar10 needs cifar_train and cifar_test");
    d.train = load_cifar10_binary(c.cifar_train);
    d.test = load_cifar10_binary(c.cifar_test);
  } else {
    std::string ti = c.train_images, tl = c.train_labels, vi = c.test_images, vl = c.test_labels;
    if (c.data_kind == "mnist") {
      if (c.data_dir.empty()) throw ConfigError("mnist needs data.dir");
      const std::filesystem::path dir(c.data_dir);
      ti = (dir / "train-images-idx3-ubyte").string();
      tl = (dir / "train-labels-idx1-ubyte").string();
      vi = (dir / "t10k-images-idx3-ubyte").string();
      vl = (dir / "t10k-labels-idx1-ubyte").string();
    }
    d.train = load_idx(ti, tl);
    d.test = load_idx(vi, vl);
  }
  if (c.test_subset > 0 && d.test.size() > c.test_subset) {
    d.test.inputs.resize(c.test_subset);
    d.test.targets.resize(c.test_subset);
  }
  const int in = c.arch.front(), out = c.arch.back();
  if (d.train.inputs.front().size() != in) {
    throw ConfigError("arch input width " + std::to_string(in) + " does not match data (" +
                      std::to_string(d.train.inputs.front().size()) + ")");
  }
  if (d.train.targets.front().size() != out) throw ConfigError("arch output width does not match data targets");
  return d;
}

// ---- runs ------------------------------------------------------------------

struct EvalRow {
  long iteration = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;  // percent; NaN for regression data
  double test_loss = 0.0;
  double update_norm = 0.0;
  bool diverged = false;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
  std::vector<double> update_norms;  // one per iteration actually trained
  bool diverged = false;
  double final_accuracy() const { return rows.empty() ? 0.0 : rows.back().test_accuracy; }
};

struct Evaluation {
  double accuracy = 0.0, loss = 0.0;
};

inline Evaluation evaluate(const NetworkParams& p, Activation act, LossKind loss, const Dataset& test) {
  Evaluation e;
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector out = feedforward(p, act, test.inputs[i]).back();
    correct += is_correct(out, test.targets[i]) ? 1 : 0;
    e.loss += out.allFinite() ? loss_value(loss, out, test.targets[i]) : INFINITY;
  }
  e.loss /= static_cast<double>(test.size());
  e.accuracy = test.n_classes ? 100.0 * correct / static_cast<double>(test.size()) : NAN;
  return e;
}

inline SeedRun run_seed(const ExperimentConfig& c, AlgorithmKind algo, const TrainConfig& tc, const DataSplit& data,
                        std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  Rng rng(seed);
  NetworkParams params = init_params(c.arch, rng);
  AdamState adam(params);
  BatchStream stream(data.train.size(), c.batch_size, seed, true);
  double loss_acc = 0.0, norm_acc = 0.0;
  long since = 0;
  for (long it = 1; it <= c.iterations; ++it) {
    if (!run.diverged) {
      std::vector<Vector> xs, ys;
      for (std::size_t i : stream.next()) {
        xs.push_back(data.train.inputs[i]);
        ys.push_back(data.train.targets[i]);
      }
      const TrainRecord r = train_batch(algo, params, &adam, tc, xs, ys);
      loss_acc += r.loss;
      norm_acc += r.update_norm;
      ++since;
      run.update_norms.push_back(r.update_norm);
      run.diverged = r.diverged;
    }
    if (it % c.eval_every == 0 || it == c.iterations) {
      EvalRow row;
      row.iteration = it;
      row.diverged = run.diverged;
      row.train_loss = since > 0 ? loss_acc / since : NAN;
      row.update_norm = since > 0 ? norm_acc / since : NAN;
      if (run.diverged) {
        row.test_accuracy = data.test.n_classes ? 0.0 : NAN;
        row.test_loss = NAN;
      } else {
        const Evaluation e = evaluate(params, c.act, c.loss, data.test);
        row.test_accuracy = e.accuracy;
        row.test_loss = e.loss;
      }
      run.rows.push_back(row);
      loss_acc = norm_acc = 0.0;
      since = 0;
    }
  }
  return run;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t n, int threads, F fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct ExperimentResult {
  std::string name;
  AlgorithmKind algo = AlgorithmKind::IlProx;
  double lr = 0.0;
  std::vector<SeedRun> runs;
  std::vector<EvalRow> mean_rows;
  std::vector<EvalRow> std_rows;

  std::pair<double, double> final_accuracy() const {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.final_accuracy());
    return mean_std(v);
  }
  std::pair<double, long> best_mean_accuracy() const {
    double best = -INFINITY;
    long at = 0;
    for (const auto& r : mean_rows)
      if (r.test_accuracy > best) {
        best = r.test_accuracy;
        at = r.iteration;
      }
    if (std::isinf(best)) return {NAN, 0};  // regression data has no accuracy
    return {best, at};
  }
  std::pair<double, double> update_norm() const {
    std::vector<double> v;
    for (const auto& r : runs) v.insert(v.end(), r.update_norms.begin(), r.update_norms.end());
    if (v.empty()) return {NAN, NAN};
    return mean_std(v);
  }
  int diverged_seeds() const {
    int n = 0;
    for (const auto& r : runs) n += r.diverged ? 1 : 0;
    return n;
  }
};

inline void aggregate(ExperimentResult& res) {
  if (res.runs.empty()) return;
  const std::size_t rows = res.runs.front().rows.size();
  for (std::size_t i = 0; i < rows; ++i) {
    EvalRow m, s;
    m.iteration = s.iteration = res.runs.front().rows[i].iteration;
    auto stat = [&](auto field, double& mean, double& sd) {
      std::vector<double> v;
      for (const auto& r : res.runs) v.push_back(r.rows[i].*field);
      std::tie(mean, sd) = mean_std(v);
    };
    stat(&EvalRow::train_loss, m.train_loss, s.train_loss);
    stat(&EvalRow::test_accuracy, m.test_accuracy, s.test_accuracy);
    stat(&EvalRow::test_loss, m.test_loss, s.test_loss);
    stat(&EvalRow::update_norm, m.update_norm, s.update_norm);
    for (const auto& r : res.runs) m.diverged = m.diverged || r.rows[i].diverged;
    res.mean_rows.push_back(m);
    res.std_rows.push_back(s);
  }
}

// ---- CSV output ------------------------------------------------------------

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_seed_csv(std::ostream& os, const SeedRun& r) {
  os << "# ilprox-csv v" << kCsvVersion << "\n";
  os << "iteration,train_loss,test_accuracy,test_loss,update_norm,diverged\n";
  for (const auto& row : r.rows) {
    os << row.iteration << ',' << fmt17(row.train_loss) << ',' << fmt17(row.test_accuracy) << ','
       << fmt17(row.test_loss) << ',' << fmt17(row.update_norm) << ',' << (row.diverged ? 1 : 0) << '\n';
  }
}

inline void write_mean_csv(std::ostream& os, const ExperimentResult& res) {
  os << "# ilprox-csv v" << kCsvVersion << "\n";
  os << "iteration,train_loss_mean,train_loss_std,test_accuracy_mean,test_accuracy_std,test_loss_mean,"
        "test_loss_std,update_norm_mean,update_norm_std\n";
  for (std::size_t i = 0; i < res.mean_rows.size(); ++i) {
    const auto& m = res.mean_rows[i];
    const auto& s = res.std_rows[i];
    os << m.iteration << ',' << fmt17(m.train_loss) << ',' << fmt17(s.train_loss) << ',' << fmt17(m.test_accuracy)
       << ',' << fmt17(s.test_accuracy) << ',' << fmt17(m.test_loss) << ',' << fmt17(s.test_loss) << ','
       << fmt17(m.update_norm) << ',' << fmt17(s.update_norm) << '\n';
  }
}

inline const char* kSummaryHeader =
    "name,algo,lr,seeds,final_accuracy_mean,final_accuracy_std,best_mean_accuracy,best_iteration,"
    "update_norm_mean,update_norm_std,diverged_seeds";

inline void write_summary_row(std::ostream& os, const ExperimentResult& res) {
  const auto [fm, fs] = res.final_accuracy();
  const auto [best, at] = res.best_mean_accuracy();
  const auto [um, us] = res.update_norm();
  os << res.name << ',' << algorithm_name(res.algo) << ',' << fmt17(res.lr) << ',' << res.runs.size() << ','
     << fmt17(fm) << ',' << fmt17(fs) << ',' << fmt17(best) << ',' << at << ',' << fmt17(um) << ',' << fmt17(us)
     << ',' << res.diverged_seeds() << '\n';
}

inline void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  body(os);
}

inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& res) {
  for (const auto& r : res.runs) {
    write_file(dir / (res.name + "_seed" + std::to_string(r.seed) + ".csv"), [&](std::ostream& os) {
      write_seed_csv(os, r);
    });
  }
  write_file(dir / (res.name + "_mean.csv"), [&](std::ostream& os) { write_mean_csv(os, res); });
  write_file(dir / (res.name + "_summary.csv"), [&](std::ostream& os) {
    os << kSummaryHeader << '\n';
    write_summary_row(os, res);
  });
}

// ---- entry points ------------------------------------------------------------

inline ExperimentResult run_experiment_on(const ExperimentConfig& c, AlgorithmKind algo, const TrainConfig& tc,
                                          const DataSplit& data, int threads = 1) {
  ExperimentResult res;
  res.name = c.name;
  res.algo = algo;
  res.lr = tc.lr;
  res.runs.resize(c.seeds.size());
  parallel_for(c.seeds.size(), threads, [&](std::size_t i) { res.runs[i] = run_seed(c, algo, tc, data, c.seeds[i]); });
  aggregate(res);
  return res;
}

// Validates, loads data, trains every seed and writes CSVs when out_dir is set.
inline ExperimentResult run_experiment(const ExperimentConfig& c, int threads = 1) {
  validate_config(c);
  const DataSplit data = load_data(c);
  ExperimentResult res = run_experiment_on(c, c.algo, make_train_config(c, c.algo, c.lr), data, threads);
  if (!c.out_dir.empty()) write_experiment(c.out_dir, res);
  return res;
}

struct SweepCell {
  AlgorithmKind algo;
  double lr;
  double mean, std;
  bool divergent;  // mean final accuracy below 12%
  ExperimentResult result;
};

inline constexpr double kDivergentAccuracy = 12.0;

// Final-accuracy grid over (algo x lr). The NLMS offset is forced to zero
// for the prox family so stability cannot come from a damped step.
inline std::vector<SweepCell> stability_sweep(const ExperimentConfig& base, int threads = 1) {
  validate_config(base);
  const DataSplit data = load_data(base);
  std::vector<AlgorithmKind> algos = base.sweep_algos;
  if (algos.empty()) algos = {base.algo};
  std::vector<std::pair<AlgorithmKind, double>> grid;
  for (auto a : algos)
    for (double lr : base.sweep_lrs) grid.emplace_back(a, lr);
  std::vector<SweepCell> cells(grid.size());
  // parallelize over grid cells x seeds as one flat job list
  std::vector<std::vector<SeedRun>> runs(grid.size(), std::vector<SeedRun>(base.seeds.size()));
  parallel_for(grid.size() * base.seeds.size(), threads, [&](std::size_t job) {
    const std::size_t g = job / base.seeds.size(), s = job % base.seeds.size();
    TrainConfig tc = make_train_config(base, grid[g].first, grid[g].second);
    if (is_prox(grid[g].first)) tc.epsilon = 0.0;
    runs[g][s] = run_seed(base, grid[g].first, tc, data, base.seeds[s]);
  });
  for (std::size_t g = 0; g < grid.size(); ++g) {
    SweepCell& cell = cells[g];
    cell.algo = grid[g].first;
    cell.lr = grid[g].second;
    cell.result.name = base.name + "_" + algorithm_name(cell.algo) + "_lr" + fmt17(cell.lr);
    cell.result.algo = cell.algo;
    cell.result.lr = cell.lr;
    cell.result.runs = std::move(runs[g]);
    aggregate(cell.result);
    std::tie(cell.mean, cell.std) = cell.result.final_accuracy();
    cell.divergent = cell.mean < kDivergentAccuracy;
  }
  if (!base.out_dir.empty()) {
    write_file(std::filesystem::path(base.out_dir) / (base.name + "_sweep.csv"), [&](std::ostream& os) {
      os << "algo,lr,seeds,final_accuracy_mean,final_accuracy_std,divergent\n";
      for (const auto& c : cells) {
        os << algorithm_name(c.algo) << ',' << fmt17(c.lr) << ',' << c.result.runs.size() << ',' << fmt17(c.mean)
           << ',' << fmt17(c.std) << ',' << (c.divergent ? 1 : 0) << '\n';
      }
    });
  }
  return cells;
}

// ---- plot data -------------------------------------------------------------

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline double parse_cell(const std::string& s, const std::string& where) {
  if (s == "nan") return NAN;
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw CsvError(where + ": non-numeric cell '" + s + "'");
  }
  if (pos != s.size()) throw CsvError(where + ": non-numeric cell '" + s + "'");
  return v;
}

// Reads a numeric CSV. Lines starting with '#' are comments.
inline Table read_csv(std::istream& in, const std::string& name = "csv") {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    boost::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    boost::split(cells, line, boost::is_any_of(","));
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw CsvError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                     " cells, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (auto& c : cells) row.push_back(parse_cell(boost::trim_copy(c), name + ":" + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw CsvError(name + ": no header");
  return t;
}

// kind = identity: rows unchanged (every `stride`-th row plus the last).
// kind = mean: element-wise mean and population std over several tables with
// the same schema; the first column is treated as the key and copied.
inline void emit_plot_data(const std::vector<Table>& tables, const std::string& kind, std::ostream& out,
                           std::size_t stride = 1) {
  if (tables.empty()) throw CsvError("plotdata: no input");
  if (stride < 1) throw CsvError("plotdata: stride must be >= 1");
  const Table& first = tables.front();
  auto keep = [&](std::size_t i, std::size_t n) { return i % stride == 0 || i + 1 == n; };
  if (kind == "identity") {
    if (tables.size() != 1) throw CsvError("plotdata identity: expects exactly one input");
    out << boost::join(first.header, ",") << '\n';
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
      if (!keep(i, first.rows.size())) continue;
      std::vector<std::string> cells;
      for (double v : first.rows[i]) cells.push_back(fmt17(v));
      out << boost::join(cells, ",") << '\n';
    }
    return;
  }
  if (kind != "mean") throw CsvError("plotdata: unknown kind '" + kind + "'");
  for (const auto& t : tables) {
    if (t.header != first.header || t.rows.size() != first.rows.size()) {
      throw CsvError("plotdata mean: inputs differ in schema or length");
    }
  }
  std::vector<std::string> header{first.header[0]};
  for (std::size_t c = 1; c < first.header.size(); ++c) {
    header.push_back(first.header[c] + "_mean");
    header.push_back(first.header[c] + "_std");
  }
  out << boost::join(header, ",") << '\n';
  for (std::size_t i = 0; i < first.rows.size(); ++i) {
    if (!keep(i, first.rows.size())) continue;
    std::vector<std::string> cells{fmt17(first.rows[i][0])};
    for (std::size_t c = 1; c < first.header.size(); ++c) {
      std::vector<double> v;
      for (const auto& t : tables) v.push_back(t.rows[i][c]);
      const auto [m, s] = mean_std(v);
      cells.push_back(fmt17(m));
      cells.push_back(fmt17(s));
    }
    out << boost::join(cells, ",") << '\n';
  }
}

}  // namespace ilprox
