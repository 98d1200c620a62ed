#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diablo/config.hpp"
#include "diablo/run.hpp"

namespace diablo {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitGradcheck = 4,
};

// Flags shared by the subcommands. Unset values fall back to the config file,
// then to the built-in defaults.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::vector<std::size_t>> ks;
};

RunConfig resolve_config(const CommonOptions& options);

// Parses "1,2,4,8"; throws ConfigError on anything else.
std::vector<std::size_t> parse_k_list(const std::string& text);

// Writes metrics.csv, checkpoint.bin and config.json into config.output_dir.
RunResult cmd_train(const RunConfig& config, std::ostream& log);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  // Replaces the data section stored in the checkpoint when set.
  std::optional<DataSection> data;
  std::optional<std::vector<std::size_t>> ks;
  // Directory for recall.csv; defaults to the checkpoint's directory.
  std::optional<std::filesystem::path> out;
};

std::map<std::size_t, double> cmd_evaluate(const EvaluateOptions& options, std::ostream& out);

struct AblationAxis {
  std::string name;  // "strategy", "mode" or "N"
  std::vector<std::string> values;
};

// "strategy=pre,post"; throws ConfigError for unknown axes or values.
AblationAxis parse_axis(const std::string& text);

struct AblationCell {
  Strategy strategy = Strategy::pre_attention;
  SelectionMode mode = SelectionMode::dimension_wise;
  std::size_t branches = 1;
  std::string label() const;  // e.g. "dimension-pre-N8"
};

struct CellSummary {
  AblationCell cell;
  std::vector<double> recall_at_1;  // one per seed
  double median = 0.0;
  double spread = 0.0;  // median absolute deviation
  double min = 0.0;
  double max = 0.0;
};

struct AblateOptions {
  RunConfig base;
  std::vector<AblationAxis> axes;
  std::size_t seeds = 5;
  std::size_t threads = 1;
};

std::vector<AblationCell> expand_cells(const RunConfig& base, const std::vector<AblationAxis>& axes);

// Runs every cell for seeds base.seed .. base.seed + seeds - 1, writing
// per-run metrics under <out>/<cell>/seed_<s>/ plus results.csv and
// summary.csv at the top level.
std::vector<CellSummary> cmd_ablate(const AblateOptions& options, std::ostream& log);

// Worker count from DIABLO_THREADS, else the hardware concurrency.
std::size_t sweep_threads();

double median(std::vector<double> values);

// Returns true iff every check passes.
bool cmd_gradcheck(bool inject_fault, std::ostream& out);

// Writes images.idx and labels.idx for the config's synthetic spec into
// `out_dir`.
void cmd_gen_data(const SyntheticSpec& spec, const std::filesystem::path& out_dir,
                  std::ostream& log);

}  // namespace diablo
