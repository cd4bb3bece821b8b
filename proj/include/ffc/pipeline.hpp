#pragma once

// generate -> train -> analyze -> report, in memory or through files.
//
// Seeds: the experiment seed drives sampling, mixing, partition, encoder bank
// and initial parameters through their own Rng streams. Client training uses
// a derived seed so that per-client streams (stream id = client id) never
// coincide with those. Refutation for client s, attribute k uses
// refutation_seed(seed, s, k).

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "ffc/causal.hpp"
#include "ffc/config.hpp"
#include "ffc/errors.hpp"
#include "ffc/fairness.hpp"
#include "ffc/federation.hpp"
#include "ffc/model.hpp"
#include "ffc/scmdata.hpp"

namespace ffc {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t state = seed ^ (salt * 0x9E3779B97F4A7C15ULL);
  return splitmix64(state);
}

inline std::uint64_t training_seed(std::uint64_t seed) { return derive_seed(seed, 0x7472616E); }

inline std::uint64_t refutation_seed(std::uint64_t seed, std::size_t client, std::size_t attribute) {
  return derive_seed(seed, 0x72656600 + client * 64 + attribute);
}

// FNV-1a over the canonical JSON of everything that shapes the generated data.
inline std::string data_fingerprint(const ExperimentConfig& c) {
  const auto j = config_to_json(c);
  const auto text = ojson{{"seed", j["seed"]}, {"data", j["data"]}, {"partition", j["partition"]}}.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

// Writes to a sibling temp file and renames it over the target.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw DataError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ojson read_json(const fs::path& path) {
  try {
    return ojson::parse(read_file(path));
  } catch (const ojson::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const ojson& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline void write_dataset(const fs::path& path, const Dataset& d) {
  std::ostringstream ss;
  write_csv(ss, d);
  write_file_atomic(path, ss.str());
}

// Shortest round-trip decimal, as used in JSON output.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct ClientData {
  Dataset train;
  Dataset val;
};

struct ExperimentData {
  Dataset test;
  std::vector<ClientData> clients;
  ojson manifest;

  std::size_t num_attributes() const { return test.num_attributes(); }
  std::size_t d_x() const { return test.d_x(); }
};

inline Dataset source_dataset(const ExperimentConfig& c) {
  if (c.data.kind == DataSource::Kind::Csv) return load_csv(c.data.csv_path);
  return sample_scm(c.data.scm, c.data.n, c.seed);
}

inline ExperimentData generate_data(const ExperimentConfig& c) {
  const auto full = source_dataset(c);
  const auto part = partition_clients(full, c.partition);
  ExperimentData out;
  out.test = part.test;
  ojson clients = ojson::array();
  for (std::size_t s = 0; s < part.clients.size(); ++s) {
    const auto& cs = part.clients[s];
    out.clients.push_back({cs.train, cs.val});
    clients.push_back({{"id", s},
                       {"dir", "client_" + std::to_string(s)},
                       {"train_rows", cs.train.size()},
                       {"val_rows", cs.val.size()},
                       {"stratum_counts", cs.stratum_counts}});
  }
  out.manifest = {{"schema_version", kSchemaVersion},
                  {"seed", c.seed},
                  {"fingerprint", data_fingerprint(c)},
                  {"source", full.provenance},
                  {"n", full.size()},
                  {"d_x", full.d_x()},
                  {"attributes", full.attribute_names()},
                  {"mediators", full.mediators.size()},
                  {"skew_variable", c.partition.skew_variable},
                  {"stratum_proportions", part.stratum_proportions},
                  {"test_rows", part.test.size()},
                  {"clients", clients}};
  return out;
}

inline void write_data(const ExperimentData& d, const fs::path& dir) {
  write_dataset(dir / "test.csv", d.test);
  for (std::size_t s = 0; s < d.clients.size(); ++s) {
    const auto sub = dir / ("client_" + std::to_string(s));
    write_dataset(sub / "train.csv", d.clients[s].train);
    write_dataset(sub / "val.csv", d.clients[s].val);
  }
  write_json(dir / "manifest.json", d.manifest);
}

// Refuses data generated from a different seed or data/partition setup.
inline ExperimentData load_data(const ExperimentConfig& c, const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw DataError("no manifest.json in '" + dir.string() + "'; run generate");
  ExperimentData d;
  d.manifest = read_json(dir / "manifest.json");
  try {
    if (d.manifest.at("seed").get<std::uint64_t>() != c.seed)
      throw DataError("stale manifest: data seed " + d.manifest.at("seed").dump() + " != config seed " +
                      std::to_string(c.seed));
    if (d.manifest.at("fingerprint").get<std::string>() != data_fingerprint(c))
      throw DataError("stale manifest: data was generated from a different data/partition config");
    d.test = load_csv((dir / "test.csv").string());
    for (const auto& cj : d.manifest.at("clients")) {
      const auto sub = dir / cj.at("dir").get<std::string>();
      d.clients.push_back({load_csv((sub / "train.csv").string()), load_csv((sub / "val.csv").string())});
      if (d.clients.back().train.size() != cj.at("train_rows").get<std::size_t>())
        throw DataError("client data in '" + sub.string() + "' does not match the manifest");
    }
  } catch (const ojson::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  if (d.clients.size() != c.partition.clients) throw DataError("manifest client count does not match config");
  return d;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct VariantRun {
  Variant variant;
  LossWeights weights;
  FederationResult result;
};

struct TrainResult {
  EncoderBank bank;
  ModelParams init;
  std::vector<VariantRun> runs;
};

// Every variant starts from the same bank, parameters and data.
inline TrainResult train_variants(const ExperimentConfig& c, const ExperimentData& d) {
  const std::size_t K = d.num_attributes();
  TrainResult out;
  out.bank = EncoderBank::generate(d.d_x(), c.model.d_e, K, c.seed, c.model.temperature);
  out.init = ModelParams::init(c.model.d_e, c.model.hidden, c.seed);
  for (const auto& v : c.variants) {
    LossWeights w;
    try {
      w = v.weights(K);
    } catch (const InvalidArgument& e) {
      throw ConfigError("variant '" + v.name + "': " + e.what());
    }
    const auto fl = c.fl_config(v, K, training_seed(c.seed));
    std::vector<ClientState> clients;
    for (std::size_t s = 0; s < d.clients.size(); ++s)
      clients.push_back(ClientState::create(s, d.clients[s].train, d.clients[s].val, out.init, fl));
    out.runs.push_back({v, w, run_federation(clients, out.bank, fl, d.test)});
  }
  return out;
}

inline ojson weights_to_json(const LossWeights& w) {
  return {{"alpha", w.alpha},         {"beta", w.beta},           {"lambda_con", w.lambda_con},
          {"lambda_lf", w.lambda_lf}, {"lambda_gf", w.lambda_gf}, {"notion", to_string(w.notion)}};
}

inline ojson train_to_json(const ExperimentConfig& c, const TrainResult& t) {
  ojson variants = ojson::array();
  for (const auto& r : t.runs)
    variants.push_back({{"name", r.variant.name},
                        {"weights", weights_to_json(r.weights)},
                        {"final", r.result.final_eval},
                        {"rounds", r.result.rounds}});
  return {{"schema_version", kSchemaVersion}, {"seed", c.seed}, {"variants", variants}};
}

inline void write_train(const TrainResult& t, const ojson& j, const fs::path& dir) {
  write_json(dir / "train.json", j);
  for (const auto& r : t.runs) {
    std::ostringstream ss;
    write_params(ss, r.result.params, 0);
    write_file_atomic(dir / "params" / (r.variant.name + ".bin"), ss.str());
  }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AttributeAnalysis {
  std::string attribute;
  std::string adjustment_rule;  // "backdoor" or "parents+undirected"
  std::optional<EffectEstimate> estimate;
  std::optional<RefutationResult> refutation;
  std::string error;
};

struct ClientAnalysis {
  std::size_t client = 0;
  std::size_t n = 0;
  CausalGraph graph;
  std::vector<AttributeAnalysis> attributes;
};

// Backdoor set when the graph around the treatment is oriented; otherwise
// parents plus undirected neighbours of the treatment (excluding the outcome).
inline std::pair<std::vector<std::string>, std::string> adjustment_for(const CausalGraph& g, const std::string& a,
                                                                       const std::string& y,
                                                                       const std::optional<std::string>& mediator) {
  std::vector<std::string> z;
  std::string rule = "backdoor";
  try {
    z = backdoor_set(g, a, y);
  } catch (const IdentificationError&) {
    rule = "parents+undirected";
    const auto t = g.index_of(a);
    for (auto p : g.parents(t)) z.push_back(g.names()[p]);
    for (auto u : g.undirected_neighbours(t)) z.push_back(g.names()[u]);
  }
  std::erase_if(z, [&](const std::string& v) { return v == y || (mediator && v == *mediator); });
  std::sort(z.begin(), z.end());
  return {z, rule};
}

inline ClientAnalysis analyze_client(const ExperimentConfig& c, const Dataset& local, std::size_t client) {
  const auto vars = local.variable_names();
  PCOptions opt;
  opt.alpha = c.analysis.alpha_ci;
  opt.max_cond = c.analysis.max_cond;
  if (c.analysis.tiers) {
    for (std::size_t k = 0; k < local.num_attributes(); ++k) opt.tiers.push_back(0);
    for (std::size_t j = 0; j < local.mediators.size(); ++j) opt.tiers.push_back(1);
    opt.tiers.push_back(2);
  }
  const auto table = estimate_joint(local, vars);
  ClientAnalysis out;
  out.client = client;
  out.n = local.size();
  out.graph = pc_discover(table, vars, opt);
  std::optional<std::string> mediator;
  if (c.analysis.mediator && std::find(vars.begin(), vars.end(), *c.analysis.mediator) != vars.end())
    mediator = c.analysis.mediator;
  for (std::size_t k = 0; k < local.num_attributes(); ++k) {
    AttributeAnalysis aa;
    aa.attribute = Dataset::attribute_name(k);
    auto [z, rule] = adjustment_for(out.graph, aa.attribute, "y", mediator);
    aa.adjustment_rule = rule;
    try {
      aa.estimate = mediator ? direct_indirect_effects(table, aa.attribute, "y", *mediator, z)
                             : total_effect(table, aa.attribute, "y", z);
      aa.refutation = refute_random_common_cause(local, aa.attribute, "y", z, c.analysis.refutation_reps,
                                                 refutation_seed(c.seed, client, k));
    } catch (const IdentificationError& e) {
      aa.error = e.what();
    }
    out.attributes.push_back(std::move(aa));
  }
  return out;
}

inline std::vector<ClientAnalysis> analyze(const ExperimentConfig& c, const ExperimentData& d) {
  std::vector<ClientAnalysis> out;
  for (std::size_t s = 0; s < d.clients.size(); ++s)
    out.push_back(analyze_client(c, Dataset::concat(d.clients[s].train, d.clients[s].val), s));
  return out;
}

// Unweighted mean over clients with an estimate, per attribute.
inline ojson average_effects(const std::vector<ClientAnalysis>& clients) {
  ojson out = ojson::array();
  if (clients.empty()) return out;
  for (std::size_t k = 0; k < clients.front().attributes.size(); ++k) {
    double te = 0, old_e = 0, new_e = 0, p = 0;
    std::size_t count = 0;
    for (const auto& cl : clients) {
      const auto& aa = cl.attributes[k];
      if (!aa.estimate || !aa.refutation) continue;
      te += aa.estimate->te;
      old_e += aa.refutation->old_estimate;
      new_e += aa.refutation->new_estimate;
      p += aa.refutation->p_value;
      ++count;
    }
    ojson row{{"attribute", clients.front().attributes[k].attribute}, {"clients_used", count}};
    if (count > 0) {
      const double n = double(count);
      row["te"] = te / n;
      row["old"] = old_e / n;
      row["new"] = new_e / n;
      row["p"] = p / n;
    } else {
      row["te"] = nullptr;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline ojson analysis_to_json(const ExperimentConfig& c, const std::vector<ClientAnalysis>& clients) {
  ojson cl = ojson::array();
  for (const auto& a : clients) {
    ojson attrs = ojson::array();
    for (const auto& aa : a.attributes) {
      ojson j{{"attribute", aa.attribute}, {"adjustment_rule", aa.adjustment_rule}};
      if (aa.estimate) j["estimate"] = *aa.estimate;
      if (aa.refutation) j["refutation"] = *aa.refutation;
      if (!aa.error.empty()) j["error"] = aa.error;
      attrs.push_back(std::move(j));
    }
    cl.push_back({{"client", a.client}, {"n", a.n}, {"graph", a.graph}, {"attributes", attrs}});
  }
  return {{"schema_version", kSchemaVersion},
          {"seed", c.seed},
          {"alpha_ci", c.analysis.alpha_ci},
          {"refutation_reps", c.analysis.refutation_reps},
          {"clients", cl},
          {"average", average_effects(clients)}};
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline void check_artifact(const ojson& j, const ExperimentConfig& c, const std::string& what) {
  if (!j.is_object() || j.value("schema_version", -1) != kSchemaVersion)
    throw DataError(what + ": unsupported or missing schema_version");
  if (j.at("seed").get<std::uint64_t>() != c.seed)
    throw DataError(what + ": stale artifact (seed " + j.at("seed").dump() + " != " + std::to_string(c.seed) + ")");
}

// Assembles the run report from the train and analysis artifacts. Deltas are
// recomputed here from the embedded per-variant reports.
inline ojson build_report(const ExperimentConfig& c, const ojson& train, const ojson& analysis) {
  check_artifact(train, c, "train.json");
  check_artifact(analysis, c, "analysis.json");
  ojson warnings = ojson::array();
  const ojson* base = nullptr;
  for (const auto& v : train.at("variants"))
    if (v.at("name") == "baseline") base = &v;
  if (!base) throw DataError("train.json: no baseline variant; fairness deltas are undefined");
  const auto base_report = base->at("final").at("hard").get<FairnessReport>();
  if (train.at("variants").size() == 1) warnings.push_back("baseline-only run: delta columns are empty");

  ojson variants = ojson::array();
  std::vector<std::pair<std::size_t, double>> single_target_delta;  // (attribute, delta_dp)
  for (const auto& v : train.at("variants")) {
    auto report = v.at("final").at("hard").get<FairnessReport>();
    ojson row{{"name", v.at("name")}, {"weights", v.at("weights")}};
    if (v.at("name") != "baseline") {
      attach_baseline(report, base_report);
      Variant probe;
      probe.alpha = v.at("weights").at("alpha").get<Vector>();
      probe.beta = v.at("weights").at("beta").get<Vector>();
      probe.lambda_lf = v.at("weights").at("lambda_lf").get<double>();
      probe.lambda_gf = v.at("weights").at("lambda_gf").get<double>();
      if (auto k = probe.single_target()) single_target_delta.push_back({*k, *report.attributes[*k].delta_dp});
    }
    row["report"] = report;
    row["soft"] = v.at("final").at("soft");
    variants.push_back(std::move(row));
  }

  const auto& avg = analysis.at("average");
  ojson effects = ojson::array();
  for (std::size_t k = 0; k < avg.size(); ++k) {
    ojson row{{"attribute", avg[k].at("attribute")}, {"te_clients", ojson::array()}};
    for (const auto& cl : analysis.at("clients")) {
      const auto& aa = cl.at("attributes")[k];
      row["te_clients"].push_back(aa.contains("estimate") ? aa.at("estimate").at("te") : ojson(nullptr));
    }
    row["average"] = avg[k].at("te");
    row["old"] = avg[k].value("old", ojson(nullptr));
    row["new"] = avg[k].value("new", ojson(nullptr));
    row["p"] = avg[k].value("p", ojson(nullptr));
    effects.push_back(std::move(row));
  }

  ojson trend{{"pairs", ojson::array()}, {"rho", nullptr}};
  std::vector<TrendPair> pairs;
  for (const auto& [k, delta] : single_target_delta) {
    if (avg[k].at("te").is_null()) continue;
    pairs.push_back({avg[k].at("attribute").get<std::string>(), avg[k].at("te").get<double>(), delta});
  }
  for (const auto& p : pairs)
    trend["pairs"].push_back({{"attribute", p.label}, {"abs_te", std::abs(p.abs_te)}, {"abs_delta_dp", std::abs(p.abs_delta)}});
  if (pairs.size() >= 3) {
    try {
      trend["rho"] = trend_analysis(pairs).rho;
    } catch (const InvalidArgument& e) {
      trend["note"] = e.what();
    }
  } else {
    trend["note"] = "fewer than 3 single-attribute variants; rank correlation needs a sweep";
  }

  return {{"schema_version", kSchemaVersion},
          {"tool", "ffc"},
          {"version", kToolVersion},
          {"seed", c.seed},
          {"config", config_to_json(c)},
          {"warnings", warnings},
          {"variants", variants},
          {"effects", effects},
          {"causal", analysis},
          {"trend", trend}};
}

// Fairness CSV: one row per variant.
inline std::string fairness_csv(const ojson& report) {
  const auto& variants = report.at("variants");
  std::vector<std::string> names;
  for (const auto& a : variants.front().at("report").at("attributes")) names.push_back(a.at("name"));
  std::ostringstream ss;
  ss << "variant,acc,ap";
  for (const auto& n : names) ss << ",dp_" << n << ",eo_" << n;
  for (const auto& n : names) ss << ",delta_dp_" << n << ",delta_eo_" << n;
  ss << "\n";
  for (const auto& v : variants) {
    const auto& r = v.at("report");
    ss << v.at("name").get<std::string>() << ',' << format_double(r.at("acc")) << ',' << format_double(r.at("ap"));
    for (const auto& a : r.at("attributes")) ss << ',' << format_double(a.at("dp")) << ',' << format_double(a.at("eo"));
    for (const auto& a : r.at("attributes")) {
      ss << ',' << (a.contains("delta_dp") ? format_double(a.at("delta_dp")) : "");
      ss << ',' << (a.contains("delta_eo") ? format_double(a.at("delta_eo")) : "");
    }
    ss << "\n";
  }
  return ss.str();
}

// Effects CSV: one row per attribute, client TEs then the averages.
inline std::string effects_csv(const ojson& report) {
  const auto& rows = report.at("effects");
  std::ostringstream ss;
  ss << "attribute";
  const std::size_t S = rows.empty() ? 0 : rows.front().at("te_clients").size();
  for (std::size_t s = 0; s < S; ++s) ss << ",te_client" << s + 1;
  ss << ",te_average,old,new,p_value\n";
  auto cell = [](const ojson& v) { return v.is_null() ? std::string() : format_double(v.get<double>()); };
  for (const auto& r : rows) {
    ss << r.at("attribute").get<std::string>();
    for (const auto& te : r.at("te_clients")) ss << ',' << cell(te);
    ss << ',' << cell(r.at("average")) << ',' << cell(r.at("old")) << ',' << cell(r.at("new")) << ','
       << cell(r.at("p")) << "\n";
  }
  return ss.str();
}

enum class ReportFormat { Json, Csv, Both };

inline ReportFormat parse_format(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "both") return ReportFormat::Both;
  throw ConfigError("--format must be json, csv or both");
}

inline void write_report(const ojson& report, const fs::path& dir, ReportFormat format) {
  if (format != ReportFormat::Csv) write_json(dir / "report.json", report);
  if (format != ReportFormat::Json) {
    write_file_atomic(dir / "fairness.csv", fairness_csv(report));
    write_file_atomic(dir / "effects.csv", effects_csv(report));
  }
}

// ---------------------------------------------------------------------------
// Whole run, and the multi-seed summary
// ---------------------------------------------------------------------------

struct RunArtifacts {
  ExperimentData data;
  TrainResult train;
  ojson train_json;
  std::vector<ClientAnalysis> analysis;
  ojson analysis_json;
  ojson report;
};

inline RunArtifacts run_in_memory(const ExperimentConfig& c) {
  RunArtifacts a;
  a.data = generate_data(c);
  a.train = train_variants(c, a.data);
  a.train_json = train_to_json(c, a.train);
  a.analysis = analyze(c, a.data);
  a.analysis_json = analysis_to_json(c, a.analysis);
  a.report = build_report(c, a.train_json, a.analysis_json);
  return a;
}

// Mean and sample sd of acc, ap and per-attribute dp/eo (and deltas) per
// variant across several single-seed reports.
inline ojson seed_summary(const std::vector<ojson>& reports) {
  ojson out{{"seeds", ojson::array()}, {"variants", ojson::array()}};
  for (const auto& r : reports) out["seeds"].push_back(r.at("seed"));
  const auto& first = reports.front().at("variants");
  for (std::size_t v = 0; v < first.size(); ++v) {
    std::map<std::string, std::vector<double>> samples;
    std::vector<std::string> order;
    auto add = [&](const std::string& key, double x) {
      if (!samples.count(key)) order.push_back(key);
      samples[key].push_back(x);
    };
    for (const auto& r : reports) {
      const auto& rep = r.at("variants")[v].at("report");
      add("acc", rep.at("acc"));
      add("ap", rep.at("ap"));
      for (const auto& a : rep.at("attributes")) {
        const auto n = a.at("name").get<std::string>();
        add("dp_" + n, a.at("dp"));
        add("eo_" + n, a.at("eo"));
        if (a.contains("delta_dp")) add("delta_dp_" + n, a.at("delta_dp"));
        if (a.contains("delta_eo")) add("delta_eo_" + n, a.at("delta_eo"));
      }
    }
    ojson stats = ojson::object();
    for (const auto& key : order) {
      const auto& xs = samples[key];
      double mean = 0;
      for (double x : xs) mean += x;
      mean /= double(xs.size());
      double var = 0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / double(xs.size() - 1)) : 0.0;
      stats[key] = {{"mean", mean}, {"sd", sd}};
    }
    out["variants"].push_back({{"name", first[v].at("name")}, {"stats", stats}});
  }
  return out;
}

inline std::string summary_csv(const ojson& summary) {
  std::ostringstream ss;
  ss << "variant,metric,mean,sd\n";
  for (const auto& v : summary.at("variants"))
    for (auto it = v.at("stats").begin(); it != v.at("stats").end(); ++it)
      ss << v.at("name").get<std::string>() << ',' << it.key() << ',' << format_double(it.value().at("mean")) << ','
         << format_double(it.value().at("sd")) << "\n";
  return ss.str();
}

}  // namespace ffc
