#include "diablo/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include <fmt/format.h>

#include "diablo/errors.hpp"

namespace diablo {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>,
              "seed fields are parsed through the size_t overload");

namespace {

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

// Reads the known keys of one JSON object and rejects everything else.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    convert(*it, join_path(path_, key), out);
  }

  const json* child(const std::string& key) {
    known_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join_path(path_, key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.contains(key)) throw ConfigError("unknown key", join_path(path_, key));
    }
  }

 private:
  static void convert(const json& v, const std::string& path, std::size_t& out) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("expected a non-negative integer", path);
    }
    out = v.get<std::size_t>();
  }
  static void convert(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) throw ConfigError("expected a number", path);
    out = v.get<double>();
  }
  static void convert(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean", path);
    out = v.get<bool>();
  }
  static void convert(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) throw ConfigError("expected a string", path);
    out = v.get<std::string>();
  }
  static void convert(const json& v, const std::string& path, std::vector<std::size_t>& out) {
    if (!v.is_array()) throw ConfigError("expected an array of non-negative integers", path);
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::size_t x = 0;
      convert(v[i], fmt::format("{}[{}]", path, i), x);
      out.push_back(x);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename Fn>
void with_object(ObjectReader& parent, const std::string& key, Fn&& fn) {
  if (const json* c = parent.child(key)) {
    ObjectReader reader(*c, parent.path(key));
    fn(reader);
    reader.finish();
  }
}

LossKind parse_loss(const std::string& text, const std::string& path) {
  if (text == "contrastive") return LossKind::contrastive;
  if (text == "triplet") return LossKind::triplet;
  if (text == "binomial") return LossKind::binomial;
  throw ConfigError("expected contrastive, triplet or binomial, got \"" + text + "\"", path);
}

}  // namespace

Strategy parse_strategy(const std::string& text) {
  if (text == "pre-attention" || text == "pre") return Strategy::pre_attention;
  if (text == "post-attention" || text == "post") return Strategy::post_attention;
  throw ConfigError("expected pre-attention or post-attention, got \"" + text + "\"");
}

SelectionMode parse_mode(const std::string& text) {
  if (text == "feature-wise" || text == "feature") return SelectionMode::feature_wise;
  if (text == "dimension-wise" || text == "dimension") return SelectionMode::dimension_wise;
  throw ConfigError("expected feature-wise or dimension-wise, got \"" + text + "\"");
}

std::string to_string(Strategy strategy) {
  return strategy == Strategy::pre_attention ? "pre-attention" : "post-attention";
}

std::string to_string(SelectionMode mode) {
  return mode == SelectionMode::feature_wise ? "feature-wise" : "dimension-wise";
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
    case LossKind::binomial: return "binomial";
  }
  return "binomial";
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  ObjectReader root(j, "");

  with_object(root, "model", [&](ObjectReader& r) {
    DiabloConfig& d = cfg.model.diablo;
    std::string strategy = to_string(d.strategy), mode = to_string(d.mode);
    r.read("strategy", strategy);
    r.read("mode", mode);
    try {
      d.strategy = parse_strategy(strategy);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), r.path("strategy"));
    }
    try {
      d.mode = parse_mode(mode);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), r.path("mode"));
    }
    r.read("branches", d.branches);
    r.read("embedding_size", d.embedding_size);
    r.read("hardness", d.hardness);
    r.read("phi_widths", d.phi_widths);
    r.read("psi_widths", d.psi_widths);
    std::vector<std::size_t> grid{cfg.model.grid_rows, cfg.model.grid_cols};
    r.read("grid", grid);
    if (grid.size() != 2) throw ConfigError("expected [rows, cols]", r.path("grid"));
    cfg.model.grid_rows = grid[0];
    cfg.model.grid_cols = grid[1];
    r.read("extractor_widths", cfg.model.extractor_widths);
  });

  with_object(root, "loss", [&](ObjectReader& r) {
    std::string kind = to_string(cfg.loss.kind);
    r.read("kind", kind);
    cfg.loss.kind = parse_loss(kind, r.path("kind"));
    r.read("triplet_margin", cfg.loss.triplet_margin);
    r.read("margin", cfg.loss.margin);
    r.read("negative_weight", cfg.loss.negative_weight);
    r.read("scale", cfg.loss.scale);
  });

  with_object(root, "data", [&](ObjectReader& r) {
    std::string source = cfg.data.source == DataSource::synthetic ? "synthetic" : "idx";
    r.read("source", source);
    if (source == "synthetic") {
      cfg.data.source = DataSource::synthetic;
    } else if (source == "idx") {
      cfg.data.source = DataSource::idx;
    } else {
      throw ConfigError("expected synthetic or idx, got \"" + source + "\"", r.path("source"));
    }
    r.read("images", cfg.data.images);
    r.read("labels", cfg.data.labels);
    r.read("flip", cfg.data.flip);
    with_object(r, "synthetic", [&](ObjectReader& s) {
      SyntheticSpec& spec = cfg.data.synthetic;
      s.read("classes", spec.classes);
      s.read("samples_per_class", spec.samples_per_class);
      s.read("side", spec.side);
      s.read("tile_size", spec.tile_size);
      s.read("vocabulary", spec.vocabulary);
      s.read("pattern_tiles", spec.pattern_tiles);
      s.read("max_shift", spec.max_shift);
      s.read("distractors", spec.distractors);
      s.read("noise_std", spec.noise_std);
      s.read("seed", spec.seed);
    });
  });

  with_object(root, "optimizer", [&](ObjectReader& r) {
    r.read("learning_rate", cfg.optimizer.learning_rate);
    r.read("beta1", cfg.optimizer.beta1);
    r.read("beta2", cfg.optimizer.beta2);
    r.read("epsilon", cfg.optimizer.epsilon);
  });

  with_object(root, "training", [&](ObjectReader& r) {
    r.read("epochs", cfg.training.epochs);
    r.read("batches_per_epoch", cfg.training.batches_per_epoch);
    r.read("classes_per_batch", cfg.training.classes_per_batch);
    r.read("samples_per_class", cfg.training.samples_per_class);
  });

  with_object(root, "evaluation", [&](ObjectReader& r) {
    r.read("ks", cfg.evaluation.ks);
    r.read("train_fraction", cfg.evaluation.train_fraction);
  });

  root.read("seed", cfg.seed);
  root.read("output_dir", cfg.output_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const DiabloConfig& d = cfg.model.diablo;
  const SyntheticSpec& s = cfg.data.synthetic;
  json j;
  j["model"] = {{"strategy", to_string(d.strategy)},
                {"mode", to_string(d.mode)},
                {"branches", d.branches},
                {"embedding_size", d.embedding_size},
                {"hardness", d.hardness},
                {"phi_widths", d.phi_widths},
                {"psi_widths", d.psi_widths},
                {"grid", {cfg.model.grid_rows, cfg.model.grid_cols}},
                {"extractor_widths", cfg.model.extractor_widths}};
  j["loss"] = {{"kind", to_string(cfg.loss.kind)},
               {"triplet_margin", cfg.loss.triplet_margin},
               {"margin", cfg.loss.margin},
               {"negative_weight", cfg.loss.negative_weight},
               {"scale", cfg.loss.scale}};
  j["data"] = {{"source", cfg.data.source == DataSource::synthetic ? "synthetic" : "idx"},
               {"images", cfg.data.images},
               {"labels", cfg.data.labels},
               {"flip", cfg.data.flip},
               {"synthetic",
                {{"classes", s.classes},
                 {"samples_per_class", s.samples_per_class},
                 {"side", s.side},
                 {"tile_size", s.tile_size},
                 {"vocabulary", s.vocabulary},
                 {"pattern_tiles", s.pattern_tiles},
                 {"max_shift", s.max_shift},
                 {"distractors", s.distractors},
                 {"noise_std", s.noise_std},
                 {"seed", s.seed}}}};
  j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"epsilon", cfg.optimizer.epsilon}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"batches_per_epoch", cfg.training.batches_per_epoch},
                   {"classes_per_batch", cfg.training.classes_per_batch},
                   {"samples_per_class", cfg.training.samples_per_class}};
  j["evaluation"] = {{"ks", cfg.evaluation.ks}, {"train_fraction", cfg.evaluation.train_fraction}};
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  return j;
}

void RunConfig::validate() const {
  model.diablo.validate();
  if (model.grid_rows == 0 || model.grid_cols == 0) throw ConfigError("must be positive", "model.grid");
  if (model.extractor_widths.empty()) throw ConfigError("needs at least one layer", "model.extractor_widths");
  for (std::size_t w : model.extractor_widths) {
    if (w == 0) throw ConfigError("widths must be positive", "model.extractor_widths");
  }
  loss.validate();
  if (data.source == DataSource::synthetic) {
    try {
      data.synthetic.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what(), "data.synthetic");
    }
  } else {
    if (data.images.empty()) throw ConfigError("required for idx data", "data.images");
    if (data.labels.empty()) throw ConfigError("required for idx data", "data.labels");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("must be positive", "optimizer.learning_rate");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("must lie in [0, 1)", "optimizer.beta1");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("must lie in [0, 1)", "optimizer.beta2");
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("must be positive", "optimizer.epsilon");
  if (training.batches_per_epoch == 0) throw ConfigError("must be positive", "training.batches_per_epoch");
  if (training.classes_per_batch < 2) throw ConfigError("must be at least 2", "training.classes_per_batch");
  if (training.samples_per_class < 2) throw ConfigError("must be at least 2", "training.samples_per_class");
  if (evaluation.ks.empty()) throw ConfigError("needs at least one K", "evaluation.ks");
  for (std::size_t k : evaluation.ks) {
    if (k == 0) throw ConfigError("K must be positive", "evaluation.ks");
  }
  if (!(evaluation.train_fraction > 0.0 && evaluation.train_fraction < 1.0)) {
    throw ConfigError("must lie in (0, 1)", "evaluation.train_fraction");
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "<root>");
  }
  return config_from_json(j);
}

}  // namespace diablo
