#pragma once

// Experiment configuration: TOML or JSON in, canonical JSON echo out.
// from_json(to_json(c)) == c, so a report's echo re-runs to the same report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/federation.hpp"
#include "ffc/model.hpp"
#include "ffc/scmdata.hpp"
#include "ffc/toml.hpp"

namespace ffc {

using ojson = nlohmann::ordered_json;

struct DataSource {
  enum class Kind { Scm, Csv };
  Kind kind = Kind::Scm;
  std::size_t n = 20000;
  SCMSpec scm = presets::biased_default();
  std::string csv_path;
};

struct ModelConfig {
  std::size_t d_e = 32;
  std::size_t hidden = 16;
  double temperature = 0.07;
};

struct TrainingConfig {
  std::size_t rounds = 4;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 64;
  AdamWConfig optimizer{5e-3, 0.9, 0.999, 1e-8, 0.01};
  std::optional<double> classifier_lr;
  bool parallel = false;
};

// Empty alpha/beta mean uniform over the attributes of the data.
struct Variant {
  std::string name;
  Vector alpha;
  Vector beta;
  double lambda_con = 0.5;
  double lambda_lf = 0.0;
  double lambda_gf = 0.0;
  FairnessNotion notion = FairnessNotion::DP;

  LossWeights weights(std::size_t num_attributes) const {
    auto w = LossWeights::uniform(num_attributes);
    if (!alpha.empty()) w.alpha = alpha;
    if (!beta.empty()) w.beta = beta;
    w.lambda_con = lambda_con;
    w.lambda_lf = lambda_lf;
    w.lambda_gf = lambda_gf;
    w.notion = notion;
    w.validate(num_attributes);
    return w;
  }

  bool is_baseline() const { return name == "baseline"; }

  // Index of the only attribute with nonzero alpha and beta, when the
  // variant debiases exactly one attribute.
  std::optional<std::size_t> single_target() const {
    if (!(lambda_lf > 0.0 || lambda_gf > 0.0) || alpha.empty() || beta.empty()) return std::nullopt;
    std::optional<std::size_t> hit;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      const bool on = alpha[k] > 0.0 || (k < beta.size() && beta[k] > 0.0);
      if (!on) continue;
      if (hit) return std::nullopt;
      hit = k;
    }
    return hit;
  }
};

struct AnalysisConfig {
  double alpha_ci = 0.05;
  std::size_t max_cond = 3;
  std::size_t refutation_reps = 100;
  std::optional<std::string> mediator;
  bool tiers = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DataSource data;
  PartitionPlan partition;
  ModelConfig model;
  TrainingConfig training;
  std::vector<Variant> variants;
  AnalysisConfig analysis;

  void set_seed(std::uint64_t s) {
    seed = s;
    partition.seed = s;
  }

  const Variant* baseline() const {
    for (const auto& v : variants)
      if (v.is_baseline()) return &v;
    return nullptr;
  }

  void validate() const {
    if (variants.empty()) throw ConfigError("config: at least one variant is required");
    const auto* base = baseline();
    if (!base) throw ConfigError("config: a variant named 'baseline' is required");
    if (base->lambda_lf != 0.0 || base->lambda_gf != 0.0)
      throw ConfigError("config: the baseline variant must have lambda_lf = lambda_gf = 0");
    std::set<std::string> names;
    for (const auto& v : variants) {
      if (v.name.empty()) throw ConfigError("config: variant without a name");
      if (v.name.find_first_of("/\\ ") != std::string::npos) throw ConfigError("config: bad variant name '" + v.name + "'");
      if (!names.insert(v.name).second) throw ConfigError("config: duplicate variant '" + v.name + "'");
      if (v.lambda_con < 0 || v.lambda_lf < 0 || v.lambda_gf < 0)
        throw ConfigError("config: variant '" + v.name + "' has a negative lambda");
    }
    if (data.kind == DataSource::Kind::Scm) {
      if (data.n == 0) throw ConfigError("config: data.n must be >= 1");
      try {
        data.scm.validate();
        for (const auto& v : variants) v.weights(data.scm.attributes.size());
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    } else if (data.csv_path.empty()) {
      throw ConfigError("config: data.path is required for csv data");
    }
    try {
      partition.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (model.d_e == 0 || model.hidden == 0 || !(model.temperature > 0.0))
      throw ConfigError("config: model dimensions and temperature must be positive");
    if (training.rounds == 0 || training.local_epochs == 0 || training.batch_size == 0)
      throw ConfigError("config: rounds, local_epochs and batch_size must be >= 1");
    if (!(training.optimizer.lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (training.classifier_lr && !(*training.classifier_lr > 0.0)) throw ConfigError("config: classifier_lr must be > 0");
    if (!(analysis.alpha_ci > 0.0 && analysis.alpha_ci < 1.0)) throw ConfigError("config: alpha_ci must be in (0,1)");
    if (analysis.refutation_reps < 20) throw ConfigError("config: refutation_reps must be >= 20");
  }

  FLConfig fl_config(const Variant& v, std::size_t num_attributes, std::uint64_t training_seed) const {
    FLConfig c;
    c.clients = partition.clients;
    c.rounds = training.rounds;
    c.local_epochs = training.local_epochs;
    c.batch_size = training.batch_size;
    c.seed = training_seed;
    c.optimizer = training.optimizer;
    c.classifier_lr = training.classifier_lr;
    c.weights = v.weights(num_attributes);
    c.parallel = training.parallel;
    return c;
  }
};

// Four-row grid: nobody, a1 only, a2 only, both.
inline std::vector<Variant> default_variants(double lambda_lf = 0.5, double lambda_gf = 0.35) {
  return {{"baseline", {}, {}, 0.5, 0.0, 0.0, FairnessNotion::DP},
          {"debias-A1", {1.0, 0.0}, {1.0, 0.0}, 0.5, lambda_lf, lambda_gf, FairnessNotion::DP},
          {"debias-A2", {0.0, 1.0}, {0.0, 1.0}, 0.5, lambda_lf, lambda_gf, FairnessNotion::DP},
          {"debias-both", {0.5, 0.5}, {0.5, 0.5}, 0.5, lambda_lf, lambda_gf, FairnessNotion::DP}};
}

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

namespace detail {

// Reads known keys from an object and rejects anything else.
class Fields {
 public:
  Fields(const ojson& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a table");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const ojson& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), where_ + "." + key);
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), where_ + "." + key);
  }

  template <typename T>
  static T convert(const ojson& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if (v.is_number_unsigned()) return T(v.get<std::uint64_t>());
      const auto x = v.get<std::int64_t>();
      if (x < 0) throw ConfigError(where + ": expected a non-negative integer");
      return T(x);
    } else if constexpr (std::is_same_v<T, Vector>) {
      if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
      Vector out;
      for (const auto& e : v) out.push_back(convert<double>(e, where));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError(where + ": expected an array of strings");
      std::vector<std::string> out;
      for (const auto& e : v) out.push_back(convert<std::string>(e, where));
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

 private:
  const ojson& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline SCMSpec scm_from_json(const ojson& j) {
  Fields f(j, "data.scm");
  SCMSpec s;
  if (f.has("preset")) {
    try {
      s = presets::by_name(Fields::convert<std::string>(f.raw("preset"), "data.scm.preset"));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("data.scm.preset: ") + e.what());
    }
  }
  if (f.has("variables")) {
    s.variables.clear();
    const auto& vars = f.raw("variables");
    if (!vars.is_array()) throw ConfigError("data.scm.variables: expected an array of tables");
    for (const auto& v : vars) {
      Fields vf(v, "data.scm.variables");
      std::string name;
      std::vector<std::string> parents;
      Vector cpt;
      double fw = 1.0;
      vf.get("name", name);
      vf.get("parents", parents);
      vf.get("cpt", cpt);
      vf.get("feature_weight", fw);
      vf.finish();
      try {
        s.add(name, parents, cpt, fw);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("data.scm.variables: ") + e.what());
      }
    }
  }
  f.get("attributes", s.attributes);
  f.get("label", s.label);
  f.get("mediators", s.mediators);
  f.get("d_x", s.d_x);
  f.get("sigma", s.sigma);
  f.finish();
  return s;
}

inline ojson scm_to_json(const SCMSpec& s) {
  ojson vars = ojson::array();
  for (const auto& v : s.variables) {
    std::vector<std::string> parents;
    for (auto p : v.parents) parents.push_back(s.variables[p].name);
    vars.push_back({{"name", v.name}, {"parents", parents}, {"cpt", v.cpt}, {"feature_weight", v.feature_weight}});
  }
  return {{"d_x", s.d_x},         {"sigma", s.sigma},         {"attributes", s.attributes},
          {"label", s.label},     {"mediators", s.mediators}, {"variables", vars}};
}

inline Variant variant_from_json(const ojson& j) {
  Fields f(j, "variants");
  Variant v;
  f.get("name", v.name);
  f.get("alpha", v.alpha);
  f.get("beta", v.beta);
  f.get("lambda_con", v.lambda_con);
  f.get("lambda_lf", v.lambda_lf);
  f.get("lambda_gf", v.lambda_gf);
  std::string notion = to_string(v.notion);
  f.get("notion", notion);
  f.finish();
  try {
    v.notion = parse_notion(notion);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("variants: ") + e.what());
  }
  return v;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const ojson& j) {
  ExperimentConfig c;
  detail::Fields top(j, "config");
  top.get("seed", c.seed);
  top.has("schema_version");  // tolerated in echoes

  if (top.has("data")) {
    detail::Fields f(top.raw("data"), "data");
    std::string source = "scm";
    f.get("source", source);
    if (source == "scm") {
      c.data.kind = DataSource::Kind::Scm;
      if (f.has("scm")) c.data.scm = detail::scm_from_json(f.raw("scm"));
    } else if (source == "csv") {
      c.data.kind = DataSource::Kind::Csv;
    } else {
      throw ConfigError("data.source: expected 'scm' or 'csv'");
    }
    f.get("n", c.data.n);
    f.get("path", c.data.csv_path);
    f.finish();
  }
  if (top.has("partition")) {
    detail::Fields f(top.raw("partition"), "partition");
    f.get("clients", c.partition.clients);
    f.get("gamma", c.partition.gamma);
    f.get("skew_variable", c.partition.skew_variable);
    f.get("test_fraction", c.partition.test_fraction);
    f.get("train_parts", c.partition.train_parts);
    f.get("val_parts", c.partition.val_parts);
    f.finish();
  }
  if (top.has("model")) {
    detail::Fields f(top.raw("model"), "model");
    f.get("d_e", c.model.d_e);
    f.get("hidden", c.model.hidden);
    f.get("temperature", c.model.temperature);
    f.finish();
  }
  if (top.has("training")) {
    detail::Fields f(top.raw("training"), "training");
    f.get("rounds", c.training.rounds);
    f.get("local_epochs", c.training.local_epochs);
    f.get("batch_size", c.training.batch_size);
    f.get("lr", c.training.optimizer.lr);
    f.get("classifier_lr", c.training.classifier_lr);
    f.get("beta1", c.training.optimizer.beta1);
    f.get("beta2", c.training.optimizer.beta2);
    f.get("eps", c.training.optimizer.eps);
    f.get("weight_decay", c.training.optimizer.weight_decay);
    f.get("parallel", c.training.parallel);
    f.finish();
  }
  if (top.has("variants")) {
    const auto& vs = top.raw("variants");
    if (!vs.is_array()) throw ConfigError("variants: expected an array of tables");
    for (const auto& v : vs) c.variants.push_back(detail::variant_from_json(v));
  } else {
    c.variants = default_variants();
  }
  if (top.has("analysis")) {
    detail::Fields f(top.raw("analysis"), "analysis");
    f.get("alpha_ci", c.analysis.alpha_ci);
    f.get("max_cond", c.analysis.max_cond);
    f.get("refutation_reps", c.analysis.refutation_reps);
    f.get("mediator", c.analysis.mediator);
    f.get("tiers", c.analysis.tiers);
    f.finish();
  }
  top.finish();
  c.set_seed(c.seed);
  c.validate();
  return c;
}

inline ojson config_to_json(const ExperimentConfig& c) {
  ojson data{{"source", c.data.kind == DataSource::Kind::Scm ? "scm" : "csv"}};
  if (c.data.kind == DataSource::Kind::Scm) {
    data["n"] = c.data.n;
    data["scm"] = detail::scm_to_json(c.data.scm);
  } else {
    data["path"] = c.data.csv_path;
  }
  ojson training{{"rounds", c.training.rounds},
                 {"local_epochs", c.training.local_epochs},
                 {"batch_size", c.training.batch_size},
                 {"lr", c.training.optimizer.lr},
                 {"beta1", c.training.optimizer.beta1},
                 {"beta2", c.training.optimizer.beta2},
                 {"eps", c.training.optimizer.eps},
                 {"weight_decay", c.training.optimizer.weight_decay},
                 {"parallel", c.training.parallel}};
  if (c.training.classifier_lr) training["classifier_lr"] = *c.training.classifier_lr;
  ojson variants = ojson::array();
  for (const auto& v : c.variants) {
    ojson vj{{"name", v.name}};
    if (!v.alpha.empty()) vj["alpha"] = v.alpha;
    if (!v.beta.empty()) vj["beta"] = v.beta;
    vj["lambda_con"] = v.lambda_con;
    vj["lambda_lf"] = v.lambda_lf;
    vj["lambda_gf"] = v.lambda_gf;
    vj["notion"] = to_string(v.notion);
    variants.push_back(std::move(vj));
  }
  ojson analysis{{"alpha_ci", c.analysis.alpha_ci},
                 {"max_cond", c.analysis.max_cond},
                 {"refutation_reps", c.analysis.refutation_reps},
                 {"tiers", c.analysis.tiers}};
  if (c.analysis.mediator) analysis["mediator"] = *c.analysis.mediator;
  return {{"seed", c.seed},
          {"data", data},
          {"partition",
           {{"clients", c.partition.clients},
            {"gamma", c.partition.gamma},
            {"skew_variable", c.partition.skew_variable},
            {"test_fraction", c.partition.test_fraction},
            {"train_parts", c.partition.train_parts},
            {"val_parts", c.partition.val_parts}}},
          {"model", {{"d_e", c.model.d_e}, {"hidden", c.model.hidden}, {"temperature", c.model.temperature}}},
          {"training", training},
          {"variants", variants},
          {"analysis", analysis}};
}

// .json files are read as JSON, anything else as TOML.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ojson j;
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    try {
      j = ojson::parse(in);
    } catch (const ojson::parse_error& e) {
      throw ConfigError("config '" + path.string() + "': " + e.what());
    }
  } else {
    j = toml::parse_file(path.string());
  }
  return config_from_json(j);
}

}  // namespace ffc
