// ffc: generate, train, analyze, report, run.
//
// Exit codes: 0 ok, 1 unexpected, 2 config/usage error, 3 data error,
// 4 numeric failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ffc/ffc.hpp"

namespace {

using namespace ffc;

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
  std::size_t seeds = 1;
};

// --seed, then FFC_SEED, then the config file.
ExperimentConfig load(const Options& o) {
  auto c = load_config(o.config);
  if (o.seed) {
    c.set_seed(*o.seed);
  } else if (const char* env = std::getenv("FFC_SEED"); env && *env) {
    std::uint64_t s = 0;
    const std::string_view v(env);
    const auto r = std::from_chars(v.data(), v.data() + v.size(), s);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("FFC_SEED is not an unsigned integer");
    c.set_seed(s);
  }
  return c;
}

fs::path data_dir(const Options& o) { return o.data.empty() ? fs::path(o.out) / "data" : fs::path(o.data); }

void cmd_generate(const Options& o) {
  const auto c = load(o);
  const auto d = generate_data(c);
  write_data(d, o.out);
  std::cerr << "wrote " << d.clients.size() << " clients + test.csv to " << o.out << "\n";
}

void cmd_train(const Options& o) {
  const auto c = load(o);
  const auto d = load_data(c, data_dir(o));
  const auto t = train_variants(c, d);
  write_train(t, train_to_json(c, t), o.out);
}

void cmd_analyze(const Options& o) {
  const auto c = load(o);
  const auto d = load_data(c, data_dir(o));
  write_json(fs::path(o.out) / "analysis.json", analysis_to_json(c, analyze(c, d)));
}

void cmd_report(const Options& o) {
  const auto c = load(o);
  const fs::path out(o.out);
  for (const char* f : {"train.json", "analysis.json"})
    if (!fs::exists(out / f)) throw DataError(std::string("missing ") + f + " in '" + o.out + "'; run train and analyze");
  write_report(build_report(c, read_json(out / "train.json"), read_json(out / "analysis.json")), out,
               parse_format(o.format));
}

void cmd_run(const Options& o) {
  const auto c = load(o);
  const auto format = parse_format(o.format);
  if (o.seeds == 0) throw ConfigError("--seeds must be >= 1");
  const fs::path out(o.out);
  auto a = run_in_memory(c);
  write_data(a.data, out / "data");
  write_train(a.train, a.train_json, out);
  write_json(out / "analysis.json", a.analysis_json);
  if (o.seeds > 1) {
    std::vector<ojson> reports{a.report};
    for (std::size_t i = 1; i < o.seeds; ++i) {
      auto ci = c;
      ci.set_seed(c.seed + i);
      reports.push_back(run_in_memory(ci).report);
    }
    const auto summary = seed_summary(reports);
    a.report["seed_summary"] = summary;
    if (format != ReportFormat::Json) write_file_atomic(out / "summary.csv", summary_csv(summary));
  }
  write_report(a.report, out, format);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware federated learning with causal analysis on synthetic data"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("-c,--config", o.config, "Experiment config (.toml or .json)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", o.out, "Output directory")->required();
    sub->add_option("--seed", o.seed, "Seed override (takes precedence over FFC_SEED)");
    if (needs_data) sub->add_option("-d,--data", o.data, "Generated data directory (default: <out>/data)");
  };

  auto* gen = app.add_subcommand("generate", "Sample or load data and write client splits");
  add_common(gen, false);
  auto* train = app.add_subcommand("train", "Train every variant with FedAvg");
  add_common(train, true);
  auto* an = app.add_subcommand("analyze", "Per-client causal discovery, effects and refutation");
  add_common(an, true);
  auto* rep = app.add_subcommand("report", "Assemble report.json and table CSVs");
  add_common(rep, true);
  rep->add_option("--format", o.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  auto* run = app.add_subcommand("run", "generate + train + analyze + report");
  add_common(run, false);
  run->add_option("--format", o.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  run->add_option("--seeds", o.seeds, "Repeat over N consecutive seeds and add mean/sd")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) cmd_generate(o);
    else if (*train) cmd_train(o);
    else if (*an) cmd_analyze(o);
    else if (*rep) cmd_report(o);
    else if (*run) cmd_run(o);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
