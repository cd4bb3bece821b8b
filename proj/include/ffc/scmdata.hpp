#pragma once

// Ground-truth data factory: binary structural causal models with exact
// interventional quantities, feature synthesis, Dirichlet-skewed client
// partitioning and CSV ingestion.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/numkit.hpp"

namespace ffc {

// ---------------------------------------------------------------------------
// SCMSpec
// ---------------------------------------------------------------------------

// One binary variable. The CPT holds P(v = 1 | parents) for every parent
// assignment; row index = sum_j value(parents[j]) << j, i.e. the first listed
// parent is the least significant bit.
struct ScmVariable {
  std::string name;
  std::vector<std::size_t> parents;  // indices of earlier variables
  Vector cpt;
  double feature_weight = 1.0;  // scale of this variable's column in the generated mixing matrix
};

struct SCMSpec {
  std::vector<ScmVariable> variables;  // topological order
  std::vector<std::string> attributes;
  std::string label;
  std::vector<std::string> mediators;
  std::size_t d_x = 16;
  double sigma = 0.5;
  std::optional<Matrix> mixing;  // d_x x |variables|; generated from the sampling seed when absent

  static constexpr std::size_t kMaxEnumerationVariables = 20;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < variables.size(); ++i)
      if (variables[i].name == name) return i;
    throw InvalidArgument("SCM: unknown variable '" + name + "'");
  }

  bool has(const std::string& name) const {
    return std::any_of(variables.begin(), variables.end(), [&](const auto& v) { return v.name == name; });
  }

  // Appends a variable whose parents are given by name.
  SCMSpec& add(std::string name, const std::vector<std::string>& parent_names, Vector cpt,
               double feature_weight = 1.0) {
    ScmVariable v;
    v.name = std::move(name);
    for (const auto& p : parent_names) v.parents.push_back(index_of(p));
    v.cpt = std::move(cpt);
    v.feature_weight = feature_weight;
    variables.push_back(std::move(v));
    return *this;
  }

  void validate() const {
    if (variables.empty()) throw InvalidArgument("SCM: no variables");
    for (std::size_t i = 0; i < variables.size(); ++i) {
      const auto& v = variables[i];
      for (std::size_t j = 0; j < i; ++j)
        if (variables[j].name == v.name) throw InvalidArgument("SCM: duplicate variable '" + v.name + "'");
      for (auto p : v.parents)
        if (p >= i) throw InvalidArgument("SCM: variable '" + v.name + "' has a parent that is not earlier (cycle or bad order)");
      if (v.parents.size() > 16) throw InvalidArgument("SCM: too many parents for '" + v.name + "'");
      if (v.cpt.size() != (std::size_t{1} << v.parents.size()))
        throw InvalidArgument("SCM: CPT of '" + v.name + "' has " + std::to_string(v.cpt.size()) + " rows, expected " +
                              std::to_string(std::size_t{1} << v.parents.size()));
      for (double p : v.cpt)
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("SCM: CPT entry of '" + v.name + "' outside [0,1]");
    }
    if (attributes.empty()) throw InvalidArgument("SCM: at least one sensitive attribute is required");
    for (const auto& a : attributes) index_of(a);
    index_of(label);
    for (const auto& m : mediators) index_of(m);
    if (d_x == 0) throw InvalidArgument("SCM: d_x must be positive");
    if (!(sigma >= 0.0)) throw InvalidArgument("SCM: sigma must be >= 0");
    if (mixing && (mixing->rows() != d_x || mixing->cols() != variables.size()))
      throw InvalidArgument("SCM: mixing matrix must be d_x x |variables|");
  }

  double p_one(std::size_t var, std::span<const std::uint8_t> values) const {
    const auto& v = variables[var];
    std::size_t row = 0;
    for (std::size_t j = 0; j < v.parents.size(); ++j) row |= std::size_t(values[v.parents[j]]) << j;
    return v.cpt[row];
  }
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

// Columns are named by the CSV schema: a1..aK, y, m1..mJ.
struct Dataset {
  Matrix features;  // n x d_x
  std::vector<BinaryColumn> attributes;
  BinaryColumn label;
  std::vector<BinaryColumn> mediators;
  std::string provenance;

  std::size_t size() const noexcept { return label.size(); }
  std::size_t d_x() const noexcept { return features.cols(); }
  std::size_t num_attributes() const noexcept { return attributes.size(); }

  static std::string attribute_name(std::size_t k) { return "a" + std::to_string(k + 1); }
  static std::string mediator_name(std::size_t j) { return "m" + std::to_string(j + 1); }

  std::vector<std::string> attribute_names() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < attributes.size(); ++k) out.push_back(attribute_name(k));
    return out;
  }

  // Discrete variables in analysis order: attributes, mediators, label.
  std::vector<std::string> variable_names() const {
    auto out = attribute_names();
    for (std::size_t j = 0; j < mediators.size(); ++j) out.push_back(mediator_name(j));
    out.push_back("y");
    return out;
  }

  const BinaryColumn& column(const std::string& name) const {
    if (name == "y") return label;
    auto index = [&](char prefix, std::size_t count) -> std::optional<std::size_t> {
      if (name.size() < 2 || name[0] != prefix) return std::nullopt;
      std::size_t i = 0;
      const auto r = std::from_chars(name.data() + 1, name.data() + name.size(), i);
      if (r.ec != std::errc{} || r.ptr != name.data() + name.size() || i == 0 || i > count) return std::nullopt;
      return i - 1;
    };
    if (auto k = index('a', attributes.size())) return attributes[*k];
    if (auto j = index('m', mediators.size())) return mediators[*j];
    throw InvalidArgument("dataset has no column '" + name + "'");
  }

  void validate() const {
    const auto n = label.size();
    if (features.rows() != n) throw DataError("dataset: feature rows != label rows");
    auto check = [&](const BinaryColumn& c, const std::string& name) {
      if (c.size() != n) throw DataError("dataset: column " + name + " has wrong length");
      for (std::size_t i = 0; i < n; ++i)
        if (c[i] > 1) throw DataError("dataset: column " + name + " row " + std::to_string(i) + " is not 0/1");
    };
    check(label, "y");
    for (std::size_t k = 0; k < attributes.size(); ++k) check(attributes[k], attribute_name(k));
    for (std::size_t j = 0; j < mediators.size(); ++j) check(mediators[j], mediator_name(j));
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.provenance = provenance;
    out.features = Matrix(rows.size(), d_x());
    out.attributes.assign(attributes.size(), {});
    out.mediators.assign(mediators.size(), {});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = rows[r];
      if (src >= size()) throw InvalidArgument("Dataset::subset: row out of range");
      std::copy(features.row(src).begin(), features.row(src).end(), out.features.row(r).begin());
      out.label.push_back(label[src]);
      for (std::size_t k = 0; k < attributes.size(); ++k) out.attributes[k].push_back(attributes[k][src]);
      for (std::size_t j = 0; j < mediators.size(); ++j) out.mediators[j].push_back(mediators[j][src]);
    }
    return out;
  }

  // Rows of `a` followed by rows of `b`.
  static Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.d_x() != b.d_x() || a.attributes.size() != b.attributes.size() || a.mediators.size() != b.mediators.size())
      throw InvalidArgument("Dataset::concat: schema mismatch");
    Dataset out = a;
    std::vector<double> values(a.features.data().begin(), a.features.data().end());
    values.insert(values.end(), b.features.data().begin(), b.features.data().end());
    out.features = Matrix(a.size() + b.size(), a.d_x(), std::move(values));
    out.label.insert(out.label.end(), b.label.begin(), b.label.end());
    for (std::size_t k = 0; k < a.attributes.size(); ++k)
      out.attributes[k].insert(out.attributes[k].end(), b.attributes[k].begin(), b.attributes[k].end());
    for (std::size_t j = 0; j < a.mediators.size(); ++j)
      out.mediators[j].insert(out.mediators[j].end(), b.mediators[j].begin(), b.mediators[j].end());
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.features == b.features && a.attributes == b.attributes && a.label == b.label &&
           a.mediators == b.mediators;
  }
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kSampleStream = 0;
inline constexpr std::uint64_t kPartitionStream = 1;
inline constexpr std::uint64_t kMixingStream = 4;

// B(r, v) = feature_weight(v) * N(0, 1).
inline Matrix generate_mixing(const SCMSpec& spec, std::uint64_t seed) {
  Rng rng(seed, kMixingStream);
  Matrix b(spec.d_x, spec.variables.size());
  for (std::size_t r = 0; r < spec.d_x; ++r)
    for (std::size_t v = 0; v < spec.variables.size(); ++v) b(r, v) = spec.variables[v].feature_weight * rng.normal();
  return b;
}

// Ancestral sampling; x = B v + N(0, sigma^2 I) where v is the 0/1 vector of all variables.
inline Dataset sample_scm(const SCMSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw InvalidArgument("sample_scm: n must be >= 1");
  const Matrix mixing = spec.mixing ? *spec.mixing : generate_mixing(spec, seed);
  Rng rng(seed, kSampleStream);
  const std::size_t V = spec.variables.size();
  std::vector<std::size_t> attr_idx, med_idx;
  for (const auto& a : spec.attributes) attr_idx.push_back(spec.index_of(a));
  for (const auto& m : spec.mediators) med_idx.push_back(spec.index_of(m));
  const std::size_t label_idx = spec.index_of(spec.label);

  Dataset d;
  d.provenance = "scm seed " + std::to_string(seed);
  d.features = Matrix(n, spec.d_x);
  d.attributes.assign(attr_idx.size(), BinaryColumn(n));
  d.mediators.assign(med_idx.size(), BinaryColumn(n));
  d.label.resize(n);
  std::vector<std::uint8_t> values(V);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < V; ++v) values[v] = rng.bernoulli(spec.p_one(v, values)) ? 1 : 0;
    auto row = d.features.row(i);
    for (std::size_t r = 0; r < spec.d_x; ++r) {
      double acc = 0.0;
      for (std::size_t v = 0; v < V; ++v) acc += mixing(r, v) * values[v];
      row[r] = acc + rng.normal(0.0, spec.sigma);
    }
    for (std::size_t k = 0; k < attr_idx.size(); ++k) d.attributes[k][i] = values[attr_idx[k]];
    for (std::size_t j = 0; j < med_idx.size(); ++j) d.mediators[j][i] = values[med_idx[j]];
    d.label[i] = values[label_idx];
  }
  return d;
}

// ---------------------------------------------------------------------------
// Exact interventional quantities by enumeration
// ---------------------------------------------------------------------------

namespace detail {

// Sum over all assignments of the mutilated model of P(assignment) * f(assignment).
template <typename F>
double enumerate_do(const SCMSpec& spec, const std::map<std::size_t, std::uint8_t>& interventions, F&& f) {
  const std::size_t V = spec.variables.size();
  if (V > SCMSpec::kMaxEnumerationVariables)
    throw InvalidArgument("closed-form effects: state space 2^" + std::to_string(V) + " exceeds 2^20");
  std::vector<std::uint8_t> values(V);
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << V); ++mask) {
    bool consistent = true;
    double p = 1.0;
    for (std::size_t v = 0; v < V && consistent; ++v) {
      values[v] = static_cast<std::uint8_t>((mask >> v) & 1u);
      if (auto it = interventions.find(v); it != interventions.end()) {
        consistent = values[v] == it->second;
        continue;
      }
      const double q = spec.p_one(v, values);
      p *= values[v] ? q : 1.0 - q;
      if (p == 0.0) consistent = false;
    }
    if (consistent) total += p * f(values);
  }
  return total;
}

}  // namespace detail

// E[target | do(interventions)]
inline double interventional_mean(const SCMSpec& spec, const std::map<std::string, std::uint8_t>& interventions,
                                  const std::string& target) {
  spec.validate();
  std::map<std::size_t, std::uint8_t> idx;
  for (const auto& [name, value] : interventions) idx[spec.index_of(name)] = value;
  const auto t = spec.index_of(target);
  return detail::enumerate_do(spec, idx, [t](const auto& v) { return double(v[t]); });
}

struct ExactEffects {
  double te = 0.0;
  std::optional<double> nde;
  std::optional<double> nie;
  std::array<double, 2> cde_at_m{};  // controlled direct effect with M clamped to 0 / 1
};

// TE = E[Y|do(A=0)] - E[Y|do(A=1)]. With a mediator,
//   Q(a, a') = sum_m P(M=m | do(A=a')) E[Y | do(A=a, M=m)],
//   NDE = Q(0,0) - Q(1,0),  NIE = Q(1,0) - Q(1,1),
// which requires Q(a,a) = E[Y|do(A=a)] (no unblocked mediator-outcome confounding).
inline ExactEffects closed_form_effects(const SCMSpec& spec, const std::string& treatment, const std::string& outcome,
                                        const std::optional<std::string>& mediator = std::nullopt) {
  ExactEffects out;
  const double y0 = interventional_mean(spec, {{treatment, 0}}, outcome);
  const double y1 = interventional_mean(spec, {{treatment, 1}}, outcome);
  out.te = y0 - y1;
  if (!mediator) return out;

  std::array<double, 2> pm1{};                // P(M=1 | do(A=a))
  std::array<std::array<double, 2>, 2> ey{};  // E[Y | do(A=a, M=m)]
  for (std::uint8_t a = 0; a < 2; ++a) {
    pm1[a] = interventional_mean(spec, {{treatment, a}}, *mediator);
    for (std::uint8_t m = 0; m < 2; ++m) ey[a][m] = interventional_mean(spec, {{treatment, a}, {*mediator, m}}, outcome);
  }
  auto q = [&](int a, int a_prime) { return (1.0 - pm1[a_prime]) * ey[a][0] + pm1[a_prime] * ey[a][1]; };
  if (std::abs(q(0, 0) - y0) > 1e-12 || std::abs(q(1, 1) - y1) > 1e-12)
    throw IdentificationError("closed_form_effects: mediator '" + *mediator + "' and outcome '" + outcome +
                              "' are confounded; natural effects are not given by the mediation formula");
  out.nde = q(0, 0) - q(1, 0);
  out.nie = q(1, 0) - q(1, 1);
  out.te = *out.nde + *out.nie;  // equals y0 - y1 to within 1e-12
  for (int m = 0; m < 2; ++m) out.cde_at_m[m] = ey[0][m] - ey[1][m];
  return out;
}

// ---------------------------------------------------------------------------
// Shipped SCMs
// ---------------------------------------------------------------------------

namespace presets {

// a1 -> y with P(y=1|a1=0) = 0.8, P(y=1|a1=1) = 0.2; TE = +0.6.
inline SCMSpec two_node() {
  SCMSpec s;
  s.add("a1", {}, {0.5}).add("y", {"a1"}, {0.8, 0.2});
  s.attributes = {"a1"};
  s.label = "y";
  return s;
}

// a1 -> m1 -> y plus a1 -> y.
// P(m1=1|a1) = 0.2 + 0.5 a1; P(y=1|a1,m1) = 0.1 + 0.3 a1 + 0.4 m1.
// TE = -0.5, NDE = -0.3, NIE = -0.2.
inline SCMSpec mediation() {
  SCMSpec s;
  s.add("a1", {}, {0.5}).add("m1", {"a1"}, {0.2, 0.7}).add("y", {"a1", "m1"}, {0.1, 0.4, 0.5, 0.8});
  s.attributes = {"a1"};
  s.mediators = {"m1"};
  s.label = "y";
  return s;
}

// a2 confounds a1 -> y:  a2 -> a1, a2 -> y, a1 -> y.
// P(a2=1) = 0.4; P(a1=1|a2) = 0.2 + 0.6 a2; P(y=1|a1,a2) = 0.2 + 0.3 a1 + 0.4 a2.
// TE(a1 -> y) = -0.3; the unadjusted contrast is biased by the a2 path.
inline SCMSpec confounded() {
  SCMSpec s;
  s.add("a2", {}, {0.4}).add("a1", {"a2"}, {0.2, 0.8}).add("y", {"a1", "a2"}, {0.2, 0.5, 0.6, 0.9});
  s.attributes = {"a1", "a2"};
  s.label = "y";
  return s;
}

// Pure chain a1 -> m1 -> y.
inline SCMSpec chain() {
  SCMSpec s;
  s.add("a1", {}, {0.5}).add("m1", {"a1"}, {0.25, 0.75}).add("y", {"m1"}, {0.25, 0.75});
  s.attributes = {"a1"};
  s.mediators = {"m1"};
  s.label = "y";
  return s;
}

// Collider a1 -> y <- m1 with a1 independent of m1.
inline SCMSpec collider() {
  SCMSpec s;
  s.add("a1", {}, {0.5}).add("m1", {}, {0.5}).add("y", {"a1", "m1"}, {0.1, 0.5, 0.5, 0.9});
  s.attributes = {"a1"};
  s.mediators = {"m1"};
  s.label = "y";
  return s;
}

// Two attributes, one mediator, label driven by all three:
//   a1 ~ B(0.5), a2 ~ B(0.5), m1 | a1 ~ B(0.3 + 0.4 a1),
//   y | a1, a2, m1 ~ B(0.25 + s a1 + 0.2 a2 + 0.15 m1), s = a1_effect.
// The label's own feature direction is scaled by label_weight, so a weak
// label signal pushes the classifier to lean on attribute proxies.
inline SCMSpec biased(double a1_effect, double label_weight) {
  if (!(a1_effect >= 0.0 && a1_effect <= 0.35)) throw InvalidArgument("biased: a1_effect must be in [0, 0.35]");
  SCMSpec s;
  s.add("a1", {}, {0.5}).add("a2", {}, {0.5}).add("m1", {"a1"}, {0.3, 0.7});
  Vector cpt(8);
  for (int row = 0; row < 8; ++row)
    cpt[row] = 0.25 + a1_effect * (row & 1) + 0.2 * ((row >> 1) & 1) + 0.15 * ((row >> 2) & 1);
  s.add("y", {"a1", "a2", "m1"}, cpt, label_weight);
  s.attributes = {"a1", "a2"};
  s.mediators = {"m1"};
  s.label = "y";
  return s;
}

inline SCMSpec biased_default() { return biased(0.3, 0.3); }

// Sweep of the a1 -> y strength with everything else held at biased_default.
inline std::vector<SCMSpec> effect_sweep(const std::vector<double>& strengths) {
  std::vector<SCMSpec> out;
  for (double s : strengths) out.push_back(biased(s, 0.3));
  return out;
}

inline SCMSpec by_name(const std::string& name) {
  if (name == "two_node") return two_node();
  if (name == "mediation") return mediation();
  if (name == "confounded") return confounded();
  if (name == "chain") return chain();
  if (name == "collider") return collider();
  if (name == "biased_default") return biased_default();
  throw InvalidArgument("unknown SCM preset '" + name + "'");
}

}  // namespace presets

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

struct PartitionPlan {
  std::size_t clients = 5;
  double gamma = 0.5;            // Dirichlet concentration
  std::string skew_variable = "a1";
  double test_fraction = 0.2;
  std::size_t train_parts = 4;
  std::size_t val_parts = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (clients == 0) throw InvalidArgument("PartitionPlan: clients must be >= 1");
    if (!(gamma > 0.0)) throw InvalidArgument("PartitionPlan: gamma must be > 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("PartitionPlan: test fraction must be in (0,1)");
    if (train_parts == 0 || val_parts == 0) throw InvalidArgument("PartitionPlan: ratio parts must be positive");
  }
};

struct ClientSplit {
  std::vector<std::size_t> train_rows;  // indices into the source dataset, ascending
  std::vector<std::size_t> val_rows;
  Dataset train;
  Dataset val;
  std::array<std::size_t, 2> stratum_counts{};  // rows per skew-variable value, before the val split
};

struct Partition {
  std::vector<std::size_t> test_rows;
  Dataset test;
  std::vector<ClientSplit> clients;
  std::array<std::vector<double>, 2> stratum_proportions;  // Dirichlet draw per stratum
};

namespace detail {

// Largest-remainder apportionment of `total` items by proportions p.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& p) {
  std::vector<std::size_t> counts(p.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double exact = p[c] * double(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    rema.push_back({exact - double(counts[c]), c});
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rema[i % rema.size()].second];
  return counts;
}

}  // namespace detail

// Test split first, then per stratum of the skew variable a Dirichlet(gamma)
// draw of client proportions; each client is split train:val.
inline Partition partition_clients(const Dataset& data, const PartitionPlan& plan) {
  plan.validate();
  data.validate();
  const std::size_t n = data.size();
  const std::size_t S = plan.clients;
  if (n < 10 * S)
    throw PartitionInfeasible("partition: " + std::to_string(n) + " rows is fewer than 10 per client");
  const auto& skew = data.column(plan.skew_variable);

  Rng rng(plan.seed, kPartitionStream);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  const auto n_test = static_cast<std::size_t>(std::llround(plan.test_fraction * double(n)));

  Partition out;
  out.test_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(out.test_rows.begin(), out.test_rows.end());

  std::array<std::vector<std::size_t>, 2> strata;
  for (std::size_t i = n_test; i < n; ++i) strata[skew[perm[i]]].push_back(perm[i]);

  std::vector<std::vector<std::size_t>> client_rows(S);
  out.clients.resize(S);
  for (int s = 0; s < 2; ++s) {
    out.stratum_proportions[s] = rng.dirichlet(S, plan.gamma);
    const auto counts = detail::apportion(strata[s].size(), out.stratum_proportions[s]);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < S; ++c) {
      client_rows[c].insert(client_rows[c].end(), strata[s].begin() + static_cast<std::ptrdiff_t>(pos),
                            strata[s].begin() + static_cast<std::ptrdiff_t>(pos + counts[c]));
      out.clients[c].stratum_counts[s] = counts[c];
      pos += counts[c];
    }
  }

  const double val_share = double(plan.val_parts) / double(plan.train_parts + plan.val_parts);
  for (std::size_t c = 0; c < S; ++c) {
    auto& rows = client_rows[c];
    if (rows.size() < 2)
      throw PartitionInfeasible("partition: client " + std::to_string(c) + " would receive " +
                                std::to_string(rows.size()) + " samples (need >= 2); raise gamma or n");
    rng.shuffle(std::span<std::size_t>(rows));
    const auto n_val = static_cast<std::size_t>(std::llround(val_share * double(rows.size())));
    auto& cs = out.clients[c];
    cs.val_rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
    cs.train_rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
    std::sort(cs.val_rows.begin(), cs.val_rows.end());
    std::sort(cs.train_rows.begin(), cs.train_rows.end());
    cs.train = data.subset(cs.train_rows);
    cs.val = data.subset(cs.val_rows);
  }
  out.test = data.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------
//
// Header: x0,...,x{d-1},a1,...,aK,y[,m1,...]. Comma separated, no quoting,
// '.' decimal point; features in shortest round-trip form, binary columns as 0/1.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const Dataset& data) {
  data.validate();
  std::string line;
  for (std::size_t c = 0; c < data.d_x(); ++c) line += "x" + std::to_string(c) + ",";
  for (std::size_t k = 0; k < data.num_attributes(); ++k) line += Dataset::attribute_name(k) + ",";
  line += "y";
  for (std::size_t j = 0; j < data.mediators.size(); ++j) line += "," + Dataset::mediator_name(j);
  os << line << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    line.clear();
    for (double v : data.features.row(i)) {
      line += detail::format_double(v);
      line += ',';
    }
    for (const auto& a : data.attributes) {
      line += char('0' + a[i]);
      line += ',';
    }
    line += char('0' + data.label[i]);
    for (const auto& m : data.mediators) {
      line += ',';
      line += char('0' + m[i]);
    }
    os << line << '\n';
  }
}

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_csv(os, data);
  if (!os) throw DataError("write to '" + path + "' failed");
}

inline Dataset read_csv(std::istream& is, const std::string& source = "<stream>") {
  std::string header;
  if (!std::getline(is, header) || header.empty()) throw DataError(source + ": schema error: empty file or missing header");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = detail::split_commas(header);

  std::size_t pos = 0, d = 0, K = 0, J = 0;
  auto expect_seq = [&](char prefix, std::size_t first) {
    std::size_t count = 0;
    while (pos < cols.size() && cols[pos] == std::string(1, prefix) + std::to_string(first + count)) {
      ++count;
      ++pos;
    }
    return count;
  };
  d = expect_seq('x', 0);
  K = expect_seq('a', 1);
  if (pos >= cols.size() || cols[pos] != "y")
    throw DataError(source + ": schema error: header column " + std::to_string(pos + 1) +
                    (pos < cols.size() ? " is '" + std::string(cols[pos]) + "'" : " missing") +
                    ", expected x0..x{d-1},a1..aK,y[,m1..]");
  ++pos;
  J = expect_seq('m', 1);
  if (pos != cols.size())
    throw DataError(source + ": schema error: unexpected header column '" + std::string(cols[pos]) + "'");
  if (d == 0) throw DataError(source + ": schema error: no feature columns");
  if (K == 0) throw DataError(source + ": schema error: no attribute columns");

  Dataset out;
  out.provenance = source;
  out.attributes.assign(K, {});
  out.mediators.assign(J, {});
  std::vector<double> feats;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != cols.size())
      throw DataError(source + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(cols.size()));
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto r = std::from_chars(f.data(), f.data() + f.size(), v);
      if (r.ec != std::errc{} || r.ptr != f.data() + f.size() || !std::isfinite(v))
        throw DataError(source + ": row " + std::to_string(row) + " column " + std::string(cols[c]) +
                        ": cannot parse '" + std::string(f) + "' as a number");
      feats.push_back(v);
    }
    auto binary = [&](std::size_t c) -> std::uint8_t {
      const auto f = fields[c];
      if (f == "0") return 0;
      if (f == "1") return 1;
      throw DataError(source + ": row " + std::to_string(row) + " column " + std::string(cols[c]) + ": value '" +
                      std::string(f) + "' is not 0/1");
    };
    for (std::size_t k = 0; k < K; ++k) out.attributes[k].push_back(binary(d + k));
    out.label.push_back(binary(d + K));
    for (std::size_t j = 0; j < J; ++j) out.mediators[j].push_back(binary(d + K + 1 + j));
  }
  out.features = Matrix(out.label.size(), d, std::move(feats));
  return out;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_csv(is, path);
}

}  // namespace ffc
