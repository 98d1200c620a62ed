#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "diablo/commands.hpp"
#include "diablo/errors.hpp"

using namespace diablo;

namespace {

void add_common(CLI::App* cmd, CommonOptions& common, std::string& k_text, bool with_k = true) {
  cmd->add_option("--config", common.config, "JSON run configuration");
  cmd->add_option("--seed", common.seed, "override the run seed");
  cmd->add_option("--out", common.out, "output directory");
  if (with_k) cmd->add_option("--k", k_text, "comma-separated Recall@K list, e.g. 1,2,4,8");
}

void apply_k(CommonOptions& common, const std::string& k_text) {
  if (!k_text.empty()) common.ks = parse_k_list(k_text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DIABLO metric learning: train, evaluate, ablate, gradcheck, gen-data"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string k_text;

  auto* train = app.add_subcommand("train", "train a model and write metrics.csv + checkpoint.bin");
  add_common(train, common, k_text);

  std::filesystem::path checkpoint;
  auto* evaluate = app.add_subcommand("evaluate", "Recall@K of a checkpoint on its validation classes");
  evaluate->add_option("checkpoint", checkpoint, "checkpoint.bin written by train")->required();
  add_common(evaluate, common, k_text);
  evaluate->get_option("--config")->description("take the data section from this config instead");
  evaluate->get_option("--seed")->description("unused; the checkpoint carries its seed");

  std::vector<std::string> axis_text;
  std::size_t seeds = 5;
  auto* ablate = app.add_subcommand("ablate", "sweep strategy / mode / N and summarise R@1");
  add_common(ablate, common, k_text);
  ablate->add_option("--axis", axis_text, "axis=value,... with axis in {strategy, mode, N}");
  ablate->add_option("--seeds", seeds, "runs per cell")->capture_default_str();

  bool inject_fault = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op and pipeline");
  gradcheck->add_flag("--inject-fault", inject_fault, "include an op with a deliberately wrong gradient");

  auto* gen_data = app.add_subcommand("gen-data", "write the synthetic dataset as IDX files");
  add_common(gen_data, common, k_text, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      apply_k(common, k_text);
      cmd_train(resolve_config(common), std::cerr);
    } else if (*evaluate) {
      EvaluateOptions options;
      options.checkpoint = checkpoint;
      if (common.config) options.data = load_config(*common.config).data;
      apply_k(common, k_text);
      options.ks = common.ks;
      options.out = common.out;
      cmd_evaluate(options, std::cout);
    } else if (*ablate) {
      apply_k(common, k_text);
      AblateOptions options;
      for (const std::string& a : axis_text) options.axes.push_back(parse_axis(a));
      options.seeds = seeds;
      options.threads = sweep_threads();
      options.base = resolve_config(common);
      cmd_ablate(options, std::cerr);
    } else if (*gradcheck) {
      if (!cmd_gradcheck(inject_fault, std::cout)) return kExitGradcheck;
    } else if (*gen_data) {
      RunConfig config = common.config ? load_config(*common.config) : RunConfig{};
      if (common.seed) config.data.synthetic.seed = *common.seed;
      cmd_gen_data(config.data.synthetic, common.out.value_or("data"), std::cerr);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const ArgumentError& e) {
    fmt::print(stderr, "invalid argument: {}\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    fmt::print(stderr, "format error: {}\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
