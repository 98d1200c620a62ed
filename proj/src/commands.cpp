#include "diablo/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "diablo/checkpoint.hpp"
#include "diablo/errors.hpp"
#include "diablo/gradcheck_suite.hpp"

namespace diablo {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::size_t parse_count(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}' is not a non-negative integer", text), path);
  }
  if (pos != text.size() || text.starts_with("-")) {
    throw ConfigError(fmt::format("'{}' is not a non-negative integer", text), path);
  }
  return static_cast<std::size_t>(v);
}

constexpr std::size_t kAllowedBranches[] = {1, 2, 4, 8, 16};

}  // namespace

RunConfig resolve_config(const CommonOptions& options) {
  RunConfig config = options.config ? load_config(*options.config) : RunConfig{};
  if (options.seed) config.seed = *options.seed;
  if (options.out) config.output_dir = options.out->string();
  if (options.ks) config.evaluation.ks = *options.ks;
  config.validate();
  return config;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const std::string& item : split_commas(text)) {
    const std::size_t k = parse_count(item, "--k");
    if (k == 0) throw ConfigError("K must be at least 1", "--k");
    ks.push_back(k);
  }
  if (ks.empty()) throw ConfigError("empty K list", "--k");
  return ks;
}

RunResult cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  make_dirs(dir);
  const Dataset dataset = load_dataset(config.data);
  RunResult result = train_run(config, dataset, [&](const EpochMetrics& m) {
    fmt::print(log, "epoch {:>3}  loss {:.6f}  R@1 {:.4f}\n", m.epoch, m.loss, m.recall_at_1);
  });
  write_text(dir / "metrics.csv", metrics_csv(result.epochs));
  write_text(dir / "config.json", config_to_json(config).dump(2) + "\n");
  save_checkpoint(dir / "checkpoint.bin", make_checkpoint(config, result.network));
  return result;
}

std::map<std::size_t, double> cmd_evaluate(const EvaluateOptions& options, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(options.checkpoint);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ck.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: embedded config is not JSON: {}", options.checkpoint.string(),
                                  e.what()));
  }
  RunConfig config = config_from_json(j);
  if (options.data) config.data = *options.data;
  if (options.ks) config.evaluation.ks = *options.ks;
  config.validate();

  const Dataset dataset = load_dataset(config.data);
  if (dataset.empty()) throw ArgumentError("evaluation dataset is empty");
  const Image& first = dataset.samples.front().image;
  const DiabloNetwork net = restore_network(ck, config, first.height, first.width);
  const auto recall = evaluate_run(config, net, dataset, config.evaluation.ks);

  fmt::print(out, "k,recall\n");
  for (const auto& [k, r] : recall) fmt::print(out, "{},{}\n", k, r);
  const fs::path dir = options.out ? *options.out : options.checkpoint.parent_path();
  if (!dir.empty()) make_dirs(dir);
  write_text(dir / "recall.csv", recall_csv(recall));
  return recall;
}

AblationAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("expected name=value[,value...], got '{}'", text), "--axis");
  }
  AblationAxis axis{trim(text.substr(0, eq)), split_commas(text.substr(eq + 1))};
  const std::string path = "--axis " + axis.name;
  if (axis.values.empty()) throw ConfigError("no values", path);
  for (const std::string& v : axis.values) {
    if (axis.name == "strategy") {
      parse_strategy(v);
    } else if (axis.name == "mode") {
      parse_mode(v);
    } else if (axis.name == "N") {
      const std::size_t n = parse_count(v, path);
      if (std::find(std::begin(kAllowedBranches), std::end(kAllowedBranches), n) ==
          std::end(kAllowedBranches)) {
        throw ConfigError(fmt::format("N={} is not one of 1, 2, 4, 8, 16", n), path);
      }
    } else {
      throw ConfigError("unknown axis (expected strategy, mode or N)", "--axis " + axis.name);
    }
  }
  return axis;
}

std::string AblationCell::label() const {
  return fmt::format("{}-{}-N{}", mode == SelectionMode::feature_wise ? "feature" : "dimension",
                     strategy == Strategy::pre_attention ? "pre" : "post", branches);
}

std::vector<AblationCell> expand_cells(const RunConfig& base, const std::vector<AblationAxis>& axes) {
  std::vector<Strategy> strategies{base.model.diablo.strategy};
  std::vector<SelectionMode> modes{base.model.diablo.mode};
  std::vector<std::size_t> branches{base.model.diablo.branches};
  for (const AblationAxis& axis : axes) {
    if (axis.name == "strategy") {
      strategies.clear();
      for (const auto& v : axis.values) strategies.push_back(parse_strategy(v));
    } else if (axis.name == "mode") {
      modes.clear();
      for (const auto& v : axis.values) modes.push_back(parse_mode(v));
    } else if (axis.name == "N") {
      branches.clear();
      for (const auto& v : axis.values) branches.push_back(parse_count(v, "--axis N"));
    } else {
      throw ConfigError("unknown axis", "--axis " + axis.name);
    }
  }
  std::vector<AblationCell> cells;
  for (Strategy s : strategies) {
    for (SelectionMode m : modes) {
      for (std::size_t n : branches) cells.push_back({s, m, n});
    }
  }
  return cells;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::size_t sweep_threads() {
  if (const char* env = std::getenv("DIABLO_THREADS")) {
    const std::size_t n = parse_count(trim(env), "DIABLO_THREADS");
    if (n == 0) throw ConfigError("must be at least 1", "DIABLO_THREADS");
    return n;
  }
  return std::max<unsigned>(1, std::thread::hardware_concurrency());
}

std::vector<CellSummary> cmd_ablate(const AblateOptions& options, std::ostream& log) {
  options.base.validate();
  if (options.seeds == 0) throw ConfigError("need at least one seed", "--seeds");
  const std::vector<AblationCell> cells = expand_cells(options.base, options.axes);

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    RunConfig config;
  };
  std::vector<Job> jobs;
  const fs::path root = options.base.output_dir;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < options.seeds; ++s) {
      RunConfig cfg = options.base;
      cfg.model.diablo.strategy = cells[c].strategy;
      cfg.model.diablo.mode = cells[c].mode;
      cfg.model.diablo.branches = cells[c].branches;
      cfg.seed = options.base.seed + s;
      cfg.output_dir = (root / cells[c].label() / fmt::format("seed_{}", cfg.seed)).string();
      try {
        cfg.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("cell {}: {}", cells[c].label(), e.what()), "--axis");
      }
      jobs.push_back({c, cfg.seed, std::move(cfg)});
    }
  }
  make_dirs(root);
  const Dataset dataset = load_dataset(options.base.data);

  std::vector<double> recall(jobs.size(), 0.0);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& job = jobs[i];
        make_dirs(job.config.output_dir);
        const RunResult r = train_run(job.config, dataset);
        write_text(fs::path(job.config.output_dir) / "metrics.csv", metrics_csv(r.epochs));
        recall[i] = r.epochs.back().recall_at_1;
        std::lock_guard lock(log_mutex);
        fmt::print(log, "{} seed {}: R@1 {:.4f}\n", cells[job.cell].label(), job.seed, recall[i]);
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(options.threads, 1, jobs.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::string results = "cell,strategy,mode,N,seed,recall_at_1\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const AblationCell& c = cells[jobs[i].cell];
    results += fmt::format("{},{},{},{},{},{}\n", c.label(), to_string(c.strategy), to_string(c.mode),
                           c.branches, jobs[i].seed, recall[i]);
  }
  write_text(root / "results.csv", results);

  std::vector<CellSummary> summaries;
  std::string summary = "cell,strategy,mode,N,runs,median,spread,min,max\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellSummary s;
    s.cell = cells[c];
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].cell == c) s.recall_at_1.push_back(recall[i]);
    }
    s.median = median(s.recall_at_1);
    std::vector<double> dev;
    for (double r : s.recall_at_1) dev.push_back(std::abs(r - s.median));
    s.spread = median(dev);
    s.min = *std::min_element(s.recall_at_1.begin(), s.recall_at_1.end());
    s.max = *std::max_element(s.recall_at_1.begin(), s.recall_at_1.end());
    summary += fmt::format("{},{},{},{},{},{},{},{},{}\n", s.cell.label(), to_string(s.cell.strategy),
                           to_string(s.cell.mode), s.cell.branches, s.recall_at_1.size(), s.median,
                           s.spread, s.min, s.max);
    fmt::print(log, "{:<22} median {:.4f} ± {:.4f}  [{:.4f}, {:.4f}]\n", s.cell.label(), s.median,
               s.spread, s.min, s.max);
    summaries.push_back(std::move(s));
  }
  write_text(root / "summary.csv", summary);
  return summaries;
}

bool cmd_gradcheck(bool inject_fault, std::ostream& out) {
  SuiteOptions options;
  options.include_corrupted = inject_fault;
  const std::vector<SuiteEntry> entries = run_gradcheck_suite(options);

  struct Tally {
    std::size_t runs = 0;
    std::size_t failed = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double worst = 0.0;
    std::string first_failure;
  };
  std::vector<std::string> order;
  std::map<std::string, Tally> tallies;
  for (const SuiteEntry& e : entries) {
    auto [it, inserted] = tallies.try_emplace(e.name);
    if (inserted) order.push_back(e.name);
    Tally& t = it->second;
    ++t.runs;
    t.checked += e.report.checked;
    t.skipped += e.report.skipped;
    t.worst = std::max(t.worst, e.report.max_relative_error);
    if (!e.report.passed) {
      if (t.failed++ == 0) t.first_failure = fmt::format("seed {}: {}", e.seed, e.report.failure);
    }
  }
  bool ok = true;
  for (const std::string& name : order) {
    const Tally& t = tallies[name];
    ok = ok && t.failed == 0;
    fmt::print(out, "{} {:<42} max rel-err {:.3e}  seeds {:>2}  elements {:>5}  at kinks {}\n",
               t.failed == 0 ? "PASS" : "FAIL", name, t.worst, t.runs, t.checked, t.skipped);
    if (t.failed != 0) fmt::print(out, "     {}\n", t.first_failure);
  }
  fmt::print(out, "{}: {} checks\n", ok ? "gradcheck passed" : "gradcheck FAILED", entries.size());
  return ok;
}

void cmd_gen_data(const SyntheticSpec& spec, const fs::path& out_dir, std::ostream& log) {
  spec.validate();
  make_dirs(out_dir);
  const Dataset dataset = generate_synthetic(spec);
  write_idx(dataset, out_dir / "images.idx", out_dir / "labels.idx");
  fmt::print(log, "wrote {} samples of {} classes to {}\n", dataset.size(), spec.classes,
             out_dir.string());
}

}  // namespace diablo
