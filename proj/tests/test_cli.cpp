#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ffc/ffc.hpp"

namespace ffc {
namespace {

const fs::path kConfigs(FFC_CONFIG_DIR);
const fs::path kGolden(FFC_GOLDEN_DIR);

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ffc_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig smoke() { return load_config(kConfigs / "smoke.toml"); }

// ---------------------------------------------------------------------------
// TOML reader
// ---------------------------------------------------------------------------

TEST(Toml, ScalarsTablesAndArraysOfTables) {
  const auto j = toml::parse(R"(
# leading comment
title = "x\ty \u00e9"  # trailing comment
lit = 'C:\path'
n = 1_000
neg = -3
f = 5e-3
g = -0.25
big = +inf
ok = true
no = false
arr = [1, 2,
       3,  # comment inside
]
inline = { a = 1, b = "two" }
a.b.c = 4

[section]
k = [[1, 2], ["x"]]

[section.sub]
z = 0.5

[[items]]
name = "first"
[[items]]
name = "second"
extra.deep = 1
)");
  EXPECT_EQ(j["title"], "x\ty \xc3\xa9");
  EXPECT_EQ(j["lit"], "C:\\path");
  EXPECT_EQ(j["n"], 1000);
  EXPECT_TRUE(j["n"].is_number_integer());
  EXPECT_EQ(j["neg"], -3);
  EXPECT_EQ(j["f"].get<double>(), 5e-3);
  EXPECT_TRUE(j["f"].is_number_float());
  EXPECT_EQ(j["g"].get<double>(), -0.25);
  EXPECT_TRUE(std::isinf(j["big"].get<double>()));
  EXPECT_EQ(j["ok"], true);
  EXPECT_EQ(j["no"], false);
  EXPECT_EQ(j["arr"], nlohmann::ordered_json({1, 2, 3}));
  EXPECT_EQ(j["inline"]["b"], "two");
  EXPECT_EQ(j["a"]["b"]["c"], 4);
  EXPECT_EQ(j["section"]["k"][1][0], "x");
  EXPECT_EQ(j["section"]["sub"]["z"].get<double>(), 0.5);
  ASSERT_EQ(j["items"].size(), 2u);
  EXPECT_EQ(j["items"][1]["name"], "second");
  EXPECT_EQ(j["items"][1]["extra"]["deep"], 1);
}

TEST(Toml, KeyOrderIsPreserved) {
  const auto j = toml::parse("b = 1\na = 2\nc = 3\n");
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"b", "a", "c"}));
}

TEST(Toml, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      toml::parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("a = 1\nb = \n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a = 1\na = 2\n").find("duplicate key"), std::string::npos);
  EXPECT_NE(message("[t]\n[t]\n").find("defined twice"), std::string::npos);
  EXPECT_NE(message("s = \"open\n").find("unterminated"), std::string::npos);
  EXPECT_NE(message("x = 1 2\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("x = [1, 2\n").find("expected"), std::string::npos);
  EXPECT_NE(message("x = 12abc\n").find("invalid"), std::string::npos);
  EXPECT_NE(message("x = \"\"\"multi\"\"\"\n").find("not supported"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ShippedDefaultMatchesBuiltInDefaults) {
  const auto file = load_config(kConfigs / "default.toml");
  const auto builtin = config_from_json(ojson::object());
  EXPECT_EQ(config_to_json(file).dump(), config_to_json(builtin).dump());
  ASSERT_EQ(file.variants.size(), 4u);
  EXPECT_EQ(file.variants[0].name, "baseline");
  EXPECT_EQ(file.variants[1].single_target(), std::optional<std::size_t>(0));
  EXPECT_EQ(file.variants[2].single_target(), std::optional<std::size_t>(1));
  EXPECT_FALSE(file.variants[3].single_target());
}

TEST(Config, EveryShippedConfigLoadsAndEchoIsIdempotent) {
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    SCOPED_TRACE(entry.path().string());
    const auto c = load_config(entry.path());
    const auto echo = config_to_json(c);
    const auto again = config_to_json(config_from_json(echo));
    EXPECT_EQ(echo.dump(), again.dump());
  }
}

TEST(Config, RejectsUnknownKeysAndBadVariants) {
  auto fails = [](const std::string& text) {
    try {
      config_from_json(toml::parse(text));
    } catch (const ConfigError&) {
      return true;
    }
    return false;
  };
  EXPECT_TRUE(fails("sed = 1\n"));
  EXPECT_TRUE(fails("[training]\nepochs = 3\n"));
  EXPECT_TRUE(fails("[[variants]]\nname = \"debias-A1\"\nlambda_lf = 1.0\n"));
  EXPECT_TRUE(fails("[[variants]]\nname = \"baseline\"\nlambda_gf = 0.1\n"));
  EXPECT_TRUE(fails("[[variants]]\nname = \"baseline\"\n[[variants]]\nname = \"baseline\"\n"));
  EXPECT_TRUE(fails("[[variants]]\nname = \"baseline\"\n[[variants]]\nname = \"x\"\nalpha = [1.0]\n"));
  EXPECT_TRUE(fails("[analysis]\nrefutation_reps = 5\n"));
  EXPECT_TRUE(fails("[data]\nsource = \"parquet\"\n"));
  EXPECT_TRUE(fails("[data]\nsource = \"csv\"\n"));
  EXPECT_TRUE(fails("[partition]\nclients = 0\n"));
  EXPECT_TRUE(fails("[data.scm]\npreset = \"nope\"\n"));
  EXPECT_FALSE(fails("[[variants]]\nname = \"baseline\"\n"));
}

TEST(Config, SetSeedMovesPartitionSeedToo) {
  auto c = smoke();
  c.set_seed(99);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.partition.seed, 99u);
  EXPECT_EQ(config_to_json(c)["seed"], 99);
}

TEST(Config, JsonConfigFilesAreAccepted) {
  const auto dir = scratch_dir("json_config");
  const auto c = smoke();
  write_json(dir / "c.json", config_to_json(c));
  EXPECT_EQ(config_to_json(load_config(dir / "c.json")).dump(), config_to_json(c).dump());
  EXPECT_THROW(load_config(dir / "missing.toml"), ConfigError);
}

// ---------------------------------------------------------------------------
// generate / load
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) { return read_file(p); }

TEST(Pipeline, GenerateIsByteDeterministicAndSizesAddUp) {
  const auto c = smoke();
  const auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  write_data(generate_data(c), a);
  write_data(generate_data(c), b);
  std::size_t total = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  const auto manifest = read_json(a / "manifest.json");
  total += manifest["test_rows"].get<std::size_t>();
  for (const auto& cl : manifest["clients"]) {
    total += cl["train_rows"].get<std::size_t>() + cl["val_rows"].get<std::size_t>();
    EXPECT_TRUE(fs::exists(a / cl["dir"].get<std::string>() / "train.csv"));
  }
  EXPECT_EQ(total, c.data.n);
  EXPECT_EQ(manifest["clients"].size(), c.partition.clients);
  EXPECT_EQ(manifest["schema_version"], kSchemaVersion);
}

TEST(Pipeline, SingleClientConfigWritesOneClientDir) {
  auto c = smoke();
  c.partition.clients = 1;
  const auto dir = scratch_dir("gen_s1");
  write_data(generate_data(c), dir);
  EXPECT_TRUE(fs::exists(dir / "client_0"));
  EXPECT_FALSE(fs::exists(dir / "client_1"));
}

TEST(Pipeline, LoadRoundTripsGeneratedData) {
  const auto c = smoke();
  const auto dir = scratch_dir("load");
  const auto d = generate_data(c);
  write_data(d, dir);
  const auto back = load_data(c, dir);
  ASSERT_EQ(back.clients.size(), d.clients.size());
  EXPECT_EQ(back.test.features.data()[5], d.test.features.data()[5]);
  EXPECT_EQ(back.clients[1].val.size(), d.clients[1].val.size());
}

TEST(Pipeline, StaleManifestIsRefused) {
  const auto c = smoke();
  const auto dir = scratch_dir("stale");
  write_data(generate_data(c), dir);
  auto other_seed = c;
  other_seed.set_seed(c.seed + 1);
  EXPECT_THROW(load_data(other_seed, dir), DataError);
  auto other_n = c;
  other_n.data.n += 10;
  EXPECT_THROW(load_data(other_n, dir), DataError);
  EXPECT_THROW(load_data(c, dir / "nothing_here"), DataError);
}

TEST(Pipeline, InfeasiblePartitionIsADataError) {
  auto c = smoke();
  c.data.n = 12;
  c.partition.clients = 5;
  EXPECT_THROW(generate_data(c), DataError);
}

TEST(Pipeline, AtomicWriteLeavesNoTempFiles) {
  const auto dir = scratch_dir("atomic");
  write_file_atomic(dir / "sub" / "f.txt", "one");
  write_file_atomic(dir / "sub" / "f.txt", "two");
  EXPECT_EQ(slurp(dir / "sub" / "f.txt"), "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++files;
  EXPECT_EQ(files, 1u);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

TEST(Report, DeltasEqualRecomputedFairnessDelta) {
  const auto a = run_in_memory(smoke());
  const auto& variants = a.report["variants"];
  const auto base = variants[0]["report"].get<FairnessReport>();
  for (std::size_t v = 1; v < variants.size(); ++v) {
    const auto rep = variants[v]["report"].get<FairnessReport>();
    const auto deltas = fairness_delta(base, rep);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      EXPECT_EQ(*rep.attributes[k].delta_dp, deltas[k].dp);
      EXPECT_EQ(*rep.attributes[k].delta_eo, deltas[k].eo);
    }
  }
  for (const auto& attr : variants[0]["report"]["attributes"]) EXPECT_FALSE(attr.contains("delta_dp"));
}

TEST(Report, AverageColumnIsTheClientMean) {
  const auto a = run_in_memory(smoke());
  for (const auto& row : a.report["effects"]) {
    double sum = 0.0;
    for (const auto& te : row["te_clients"]) sum += te.get<double>();
    EXPECT_NEAR(row["average"].get<double>(), sum / double(row["te_clients"].size()), 1e-15);
    EXPECT_GE(row["p"].get<double>(), 0.0);
    EXPECT_LE(row["p"].get<double>(), 1.0);
  }
}

TEST(Report, BaselineOnlyRunHasEmptyDeltasAndAWarning) {
  auto c = smoke();
  c.variants = {c.variants.front()};
  const auto a = run_in_memory(c);
  ASSERT_EQ(a.report["warnings"].size(), 1u);
  EXPECT_NE(a.report["warnings"][0].get<std::string>().find("baseline-only"), std::string::npos);
  const auto csv = fairness_csv(a.report);
  EXPECT_NE(csv.find(",,,,\n"), std::string::npos);
  EXPECT_TRUE(a.report["trend"]["rho"].is_null());
}

TEST(Report, MissingBaselineAndStaleArtifactsAreRefused) {
  const auto c = smoke();
  const auto a = run_in_memory(c);
  auto no_base = a.train_json;
  no_base["variants"].erase(0);
  EXPECT_THROW(build_report(c, no_base, a.analysis_json), DataError);
  auto stale = a.analysis_json;
  stale["seed"] = c.seed + 1;
  EXPECT_THROW(build_report(c, a.train_json, stale), DataError);
  auto old_schema = a.train_json;
  old_schema["schema_version"] = 0;
  EXPECT_THROW(build_report(c, old_schema, a.analysis_json), DataError);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  EXPECT_EQ(r.ptr, s.data() + s.size()) << s;
  return v;
}

TEST(Report, CsvAndJsonCarryTheSameNumbers) {
  const auto a = run_in_memory(smoke());
  const auto t1 = parse_csv(fairness_csv(a.report));
  const auto& variants = a.report["variants"];
  ASSERT_EQ(t1.size(), variants.size() + 1);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& row = t1[v + 1];
    const auto& rep = variants[v]["report"];
    EXPECT_EQ(row[0], variants[v]["name"]);
    EXPECT_EQ(parse_double(row[1]), rep["acc"].get<double>());
    EXPECT_EQ(parse_double(row[2]), rep["ap"].get<double>());
    const std::size_t K = rep["attributes"].size();
    for (std::size_t k = 0; k < K; ++k) {
      EXPECT_EQ(parse_double(row[3 + 2 * k]), rep["attributes"][k]["dp"].get<double>());
      EXPECT_EQ(parse_double(row[4 + 2 * k]), rep["attributes"][k]["eo"].get<double>());
      const auto& delta = row[3 + 2 * K + 2 * k];
      if (v == 0) EXPECT_TRUE(delta.empty());
      else EXPECT_EQ(parse_double(delta), rep["attributes"][k]["delta_dp"].get<double>());
    }
  }
  const auto t2 = parse_csv(effects_csv(a.report));
  const auto& effects = a.report["effects"];
  ASSERT_EQ(t2.size(), effects.size() + 1);
  for (std::size_t k = 0; k < effects.size(); ++k) {
    const auto& row = t2[k + 1];
    const std::size_t S = effects[k]["te_clients"].size();
    for (std::size_t s = 0; s < S; ++s) EXPECT_EQ(parse_double(row[1 + s]), effects[k]["te_clients"][s].get<double>());
    EXPECT_EQ(parse_double(row[1 + S]), effects[k]["average"].get<double>());
    EXPECT_EQ(parse_double(row[4 + S]), effects[k]["p"].get<double>());
  }
}

TEST(Report, FileRoundTripMatchesInMemoryReport) {
  const auto c = smoke();
  const auto dir = scratch_dir("files");
  write_data(generate_data(c), dir / "data");
  const auto d = load_data(c, dir / "data");
  const auto t = train_variants(c, d);
  write_train(t, train_to_json(c, t), dir);
  write_json(dir / "analysis.json", analysis_to_json(c, analyze(c, d)));
  const auto from_files = build_report(c, read_json(dir / "train.json"), read_json(dir / "analysis.json"));
  EXPECT_EQ(from_files.dump(), run_in_memory(c).report.dump());
  EXPECT_TRUE(fs::exists(dir / "params" / "baseline.bin"));
}

TEST(Report, FormatDoubleIsShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-0.25), "-0.25");
  EXPECT_EQ(format_double(1e-20), "1e-20");
  for (double x : {1.0 / 3.0, 2.0 / 7.0, 0.8607661674415958}) EXPECT_EQ(parse_double(format_double(x)), x);
}

TEST(Report, SeedSummaryMeanAndSd) {
  auto fake = [](double acc) {
    ojson attr{{"name", "a1"}, {"dp", acc / 10}, {"eo", 0.0}};
    ojson report{{"acc", acc}, {"ap", 1.0}, {"attributes", ojson::array({attr})}};
    ojson variant{{"name", "baseline"}, {"report", report}};
    return ojson{{"seed", 1}, {"variants", ojson::array({variant})}};
  };
  const auto s = seed_summary({fake(0.7), fake(0.8), fake(0.9)});
  const auto& acc = s["variants"][0]["stats"]["acc"];
  EXPECT_NEAR(acc["mean"].get<double>(), 0.8, 1e-15);
  EXPECT_NEAR(acc["sd"].get<double>(), 0.1, 1e-15);
  EXPECT_EQ(s["variants"][0]["stats"]["ap"]["sd"].get<double>(), 0.0);
  EXPECT_NE(summary_csv(s).find("baseline,dp_a1,"), std::string::npos);
}

TEST(Report, MediatorConfigReportsDecomposition) {
  auto c = smoke();
  c.analysis.mediator = "m1";
  const auto a = run_in_memory(c);
  for (const auto& cl : a.analysis_json["clients"])
    for (const auto& attr : cl["attributes"]) {
      if (!attr.contains("estimate")) continue;
      const auto& e = attr["estimate"];
      ASSERT_TRUE(e.contains("nde"));
      EXPECT_NEAR(e["te"].get<double>(), e["nde"].get<double>() + e["nie"].get<double>(), 1e-9);
    }
}

// Recursive comparison: identical structure, numbers within a relative 1e-12.
void expect_json_close(const ojson& a, const ojson& b, const std::string& path) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    EXPECT_LE(std::abs(x - y), 1e-12 * std::max({1.0, std::abs(x), std::abs(y)})) << path;
    return;
  }
  ASSERT_EQ(a.type(), b.type()) << path;
  if (a.is_object()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (auto it = a.begin(); it != a.end(); ++it) {
      ASSERT_TRUE(b.contains(it.key())) << path << "." << it.key();
      expect_json_close(it.value(), b.at(it.key()), path + "." + it.key());
    }
  } else if (a.is_array()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (std::size_t i = 0; i < a.size(); ++i) expect_json_close(a[i], b[i], path + "[" + std::to_string(i) + "]");
  } else {
    EXPECT_EQ(a, b) << path;
  }
}

TEST(Report, DefaultConfigGolden) {
  const auto got = run_in_memory(load_config(kConfigs / "default.toml")).report;
  const auto file = kGolden / "report_default.json";
  if (std::getenv("FFC_UPDATE_GOLDEN")) {
    write_json(file, got);
    GTEST_SKIP() << "golden file rewritten";
  }
  ASSERT_TRUE(fs::exists(file)) << "missing golden file " << file;
  expect_json_close(got, read_json(file), "$");
}

}  // namespace
}  // namespace ffc
