#pragma once

// Discrete causal analysis on binary variables: contingency tables, the G^2
// conditional-independence test, PC-stable discovery, backdoor adjustment,
// total / natural direct / natural indirect effects, random-common-cause
// refutation and a rank-correlation trend check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/numkit.hpp"
#include "ffc/scmdata.hpp"

namespace ffc {

// ---------------------------------------------------------------------------
// ContingencyTable
// ---------------------------------------------------------------------------

// Joint counts over binary variables; cell index has bit j = value of variable j.
class ContingencyTable {
 public:
  static constexpr std::size_t kMaxVariables = 24;

  ContingencyTable() = default;

  static ContingencyTable from_columns(std::vector<std::string> names, const std::vector<const BinaryColumn*>& cols) {
    if (names.size() != cols.size()) throw InvalidArgument("ContingencyTable: names/columns mismatch");
    if (names.empty()) throw InvalidArgument("ContingencyTable: no variables");
    if (names.size() > kMaxVariables) throw InvalidArgument("ContingencyTable: too many variables");
    ContingencyTable t;
    t.names_ = std::move(names);
    t.n_ = cols.front()->size();
    if (t.n_ == 0) throw InvalidArgument("ContingencyTable: no rows");
    for (const auto* c : cols)
      if (c->size() != t.n_) throw InvalidArgument("ContingencyTable: column length mismatch");
    t.counts_.assign(std::size_t{1} << t.names_.size(), 0);
    for (std::size_t i = 0; i < t.n_; ++i) {
      std::size_t cell = 0;
      for (std::size_t j = 0; j < cols.size(); ++j) cell |= std::size_t((*cols[j])[i] & 1u) << j;
      ++t.counts_[cell];
    }
    return t;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t num_variables() const noexcept { return names_.size(); }
  std::size_t n() const noexcept { return n_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  static constexpr unsigned cardinality(std::size_t) noexcept { return 2; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw InvalidArgument("contingency table has no variable '" + name + "'");
  }

  std::vector<std::size_t> indices_of(const std::vector<std::string>& names) const {
    std::vector<std::size_t> out;
    for (const auto& n : names) out.push_back(index_of(n));
    return out;
  }

  // Counts over the listed variables; bit j of the result index = vars[j].
  std::vector<std::size_t> marginal(const std::vector<std::size_t>& vars) const {
    for (auto v : vars)
      if (v >= names_.size()) throw InvalidArgument("ContingencyTable::marginal: variable out of range");
    std::vector<std::size_t> out(std::size_t{1} << vars.size(), 0);
    for (std::size_t cell = 0; cell < counts_.size(); ++cell) {
      if (counts_[cell] == 0) continue;
      std::size_t idx = 0;
      for (std::size_t j = 0; j < vars.size(); ++j) idx |= ((cell >> vars[j]) & 1u) << j;
      out[idx] += counts_[cell];
    }
    return out;
  }

  // P(target = value | cond = cond_values). Marginal queries are raw
  // frequencies; a conditional query on a nonempty stratum whose target cell
  // is empty uses add-0.5 smoothing. Empty stratum -> nullopt (unsupported).
  std::optional<double> conditional(const std::string& target, std::uint8_t value,
                                    const std::vector<std::string>& cond = {},
                                    const std::vector<std::uint8_t>& cond_values = {}) const {
    if (cond.size() != cond_values.size()) throw InvalidArgument("conditional: values/variables mismatch");
    std::vector<std::size_t> vars = indices_of(cond);
    vars.push_back(index_of(target));
    const auto m = marginal(vars);
    std::size_t z = 0;
    for (std::size_t j = 0; j < cond_values.size(); ++j) z |= std::size_t(cond_values[j] & 1u) << j;
    const std::size_t c0 = m[z];
    const std::size_t c1 = m[z | (std::size_t{1} << cond.size())];
    const std::size_t stratum = c0 + c1;
    const std::size_t cell = value ? c1 : c0;
    if (stratum == 0) return std::nullopt;
    if (!cond.empty() && (c0 == 0 || c1 == 0)) return (double(cell) + 0.5) / (double(stratum) + 1.0);
    return double(cell) / double(stratum);
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> counts_;
  std::size_t n_ = 0;
};

inline ContingencyTable estimate_joint(const Dataset& data, const std::vector<std::string>& variables) {
  std::vector<const BinaryColumn*> cols;
  for (const auto& v : variables) cols.push_back(&data.column(v));
  return ContingencyTable::from_columns(variables, cols);
}

// ---------------------------------------------------------------------------
// G^2 conditional-independence test
// ---------------------------------------------------------------------------

struct CITestResult {
  double g2 = 0.0;
  unsigned df = 1;
  double p_value = 1.0;
  bool independent = true;
  std::size_t nonempty_strata = 0;
};

// G^2 = 2 sum O ln(O/E) over nonempty Z-strata. Degrees of freedom are
// (levels of A seen - 1)(levels of Y seen - 1) per stratum, summed and
// clamped to >= 1, so strata without variation do not inflate df.
inline CITestResult ci_test_g2(const ContingencyTable& table, const std::string& a, const std::string& y,
                               const std::vector<std::string>& z, double alpha) {
  if (a == y) throw InvalidArgument("ci_test_g2: A and Y must differ");
  for (const auto& v : z)
    if (v == a || v == y) throw InvalidArgument("ci_test_g2: conditioning set must exclude A and Y");
  std::vector<std::size_t> vars{table.index_of(a), table.index_of(y)};
  for (auto v : table.indices_of(z)) vars.push_back(v);
  const auto m = table.marginal(vars);

  CITestResult r;
  unsigned df = 0;
  for (std::size_t s = 0; s < (std::size_t{1} << z.size()); ++s) {
    double o[2][2];
    double na[2] = {0, 0}, ny[2] = {0, 0}, nz = 0;
    for (int ai = 0; ai < 2; ++ai)
      for (int yi = 0; yi < 2; ++yi) {
        o[ai][yi] = double(m[std::size_t(ai) | (std::size_t(yi) << 1) | (s << 2)]);
        na[ai] += o[ai][yi];
        ny[yi] += o[ai][yi];
        nz += o[ai][yi];
      }
    if (nz == 0) continue;
    ++r.nonempty_strata;
    for (int ai = 0; ai < 2; ++ai)
      for (int yi = 0; yi < 2; ++yi)
        if (o[ai][yi] > 0) r.g2 += 2.0 * o[ai][yi] * std::log(o[ai][yi] * nz / (na[ai] * ny[yi]));
    const unsigned la = (na[0] > 0) + (na[1] > 0);
    const unsigned ly = (ny[0] > 0) + (ny[1] > 0);
    df += (la - 1) * (ly - 1);
  }
  if (r.nonempty_strata == 0) throw InvalidArgument("ci_test_g2: all strata are empty");
  r.g2 = std::max(r.g2, 0.0);
  r.df = std::max(df, 1u);
  r.p_value = chi2_sf(r.g2, r.df);
  r.independent = r.p_value > alpha;
  return r;
}

// ---------------------------------------------------------------------------
// CausalGraph and PC
// ---------------------------------------------------------------------------

class CausalGraph {
 public:
  CausalGraph() = default;
  explicit CausalGraph(std::vector<std::string> names)
      : names_(std::move(names)), adj_(names_.size(), std::vector<Mark>(names_.size(), Mark::None)) {}

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw InvalidArgument("graph has no node '" + name + "'");
  }

  bool adjacent(std::size_t i, std::size_t j) const { return adj_[i][j] != Mark::None; }
  bool directed(std::size_t i, std::size_t j) const { return adj_[i][j] == Mark::Tail && adj_[j][i] == Mark::Head; }
  bool undirected(std::size_t i, std::size_t j) const { return adj_[i][j] == Mark::Tail && adj_[j][i] == Mark::Tail; }

  void add_undirected(std::size_t i, std::size_t j) {
    check_pair(i, j);
    adj_[i][j] = adj_[j][i] = Mark::Tail;
  }
  void add_directed(std::size_t i, std::size_t j) {
    check_pair(i, j);
    adj_[i][j] = Mark::Tail;
    adj_[j][i] = Mark::Head;
  }
  void remove_edge(std::size_t i, std::size_t j) { adj_[i][j] = adj_[j][i] = Mark::None; }

  // Orients i - j as i -> j; refuses if that would close a directed cycle.
  void orient(std::size_t i, std::size_t j) {
    if (!adjacent(i, j)) throw InvalidArgument("orient: nodes are not adjacent");
    if (directed(i, j)) return;
    if (has_directed_path(j, i)) throw NumericFailure("orientation " + names_[i] + "->" + names_[j] + " creates a cycle");
    add_directed(i, j);
  }

  std::vector<std::size_t> neighbours(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j)
      if (adjacent(i, j)) out.push_back(j);
    return out;
  }
  std::vector<std::size_t> parents(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j)
      if (directed(j, i)) out.push_back(j);
    return out;
  }
  std::vector<std::size_t> undirected_neighbours(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j)
      if (undirected(i, j)) out.push_back(j);
    return out;
  }

  bool has_undirected_edges() const {
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j)
        if (undirected(i, j)) return true;
    return false;
  }

  bool has_directed_path(std::size_t from, std::size_t to) const {
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack{from};
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      if (v == to) return true;
      if (seen[v]) continue;
      seen[v] = true;
      for (std::size_t w = 0; w < size(); ++w)
        if (directed(v, w) && !seen[w]) stack.push_back(w);
    }
    return false;
  }

  bool directed_part_acyclic() const {
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j)
        if (directed(i, j) && has_directed_path(j, i)) return false;
    return true;
  }

  std::vector<std::pair<std::string, std::string>> directed_edges() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j)
        if (directed(i, j)) out.emplace_back(names_[i], names_[j]);
    return out;
  }
  std::vector<std::pair<std::string, std::string>> undirected_edges() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j)
        if (undirected(i, j)) out.emplace_back(names_[i], names_[j]);
    return out;
  }

  // Separating sets of removed pairs, keyed with the smaller index first.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> sepsets;

  const std::vector<std::size_t>* sepset(std::size_t i, std::size_t j) const {
    auto it = sepsets.find({std::min(i, j), std::max(i, j)});
    return it == sepsets.end() ? nullptr : &it->second;
  }

 private:
  enum class Mark : std::uint8_t { None, Tail, Head };

  void check_pair(std::size_t i, std::size_t j) const {
    if (i >= size() || j >= size() || i == j) throw InvalidArgument("graph: bad node pair");
  }

  std::vector<std::string> names_;
  std::vector<std::vector<Mark>> adj_;
};

struct PCOptions {
  double alpha = 0.05;
  std::size_t max_cond = 3;
  // Optional temporal tiers (one per variable): an edge between different
  // tiers is oriented from the lower tier to the higher one.
  std::vector<int> tiers;
};

namespace detail {

inline void for_each_subset(const std::vector<std::size_t>& pool, std::size_t size,
                            const std::function<bool(const std::vector<std::size_t>&)>& visit) {
  if (size > pool.size()) return;
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::size_t> subset(size);
  for (;;) {
    for (std::size_t i = 0; i < size; ++i) subset[i] = pool[idx[i]];
    if (visit(subset)) return;
    std::size_t i = size;
    while (i > 0 && idx[i - 1] == pool.size() - size + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline bool tier_allows(const PCOptions& opt, std::size_t from, std::size_t to) {
  return opt.tiers.empty() || opt.tiers[from] <= opt.tiers[to];
}

// Meek R1-R3 to a fixed point; returns true when anything changed.
inline bool apply_meek(CausalGraph& g, const PCOptions& opt) {
  bool any = false;
  bool changed = true;
  const std::size_t V = g.size();
  auto try_orient = [&](std::size_t i, std::size_t j) {
    if (!g.undirected(i, j) || !tier_allows(opt, i, j) || g.has_directed_path(j, i)) return false;
    g.orient(i, j);
    if (!g.directed_part_acyclic()) throw NumericFailure("Meek rule produced a cycle");
    return true;
  };
  while (changed) {
    changed = false;
    for (std::size_t b = 0; b < V; ++b)
      for (std::size_t c = 0; c < V; ++c) {
        if (!g.undirected(b, c)) continue;
        // R1: a -> b - c, a and c nonadjacent => b -> c
        for (std::size_t a = 0; a < V && !changed; ++a)
          if (a != c && g.directed(a, b) && !g.adjacent(a, c)) changed = try_orient(b, c);
        // R2: b -> x -> c and b - c => b -> c
        for (std::size_t x = 0; x < V && !changed; ++x)
          if (g.directed(b, x) && g.directed(x, c)) changed = try_orient(b, c);
        // R3: b - x1 -> c, b - x2 -> c, x1 and x2 nonadjacent => b -> c
        for (std::size_t x1 = 0; x1 < V && !changed; ++x1)
          for (std::size_t x2 = x1 + 1; x2 < V && !changed; ++x2)
            if (g.undirected(b, x1) && g.undirected(b, x2) && g.directed(x1, c) && g.directed(x2, c) &&
                !g.adjacent(x1, x2))
              changed = try_orient(b, c);
        if (changed) {
          any = true;
          break;
        }
      }
  }
  return any;
}

}  // namespace detail

// PC-stable: level-wise skeleton search with adjacency sets frozen per level,
// then v-structures, then Meek's rules.
inline CausalGraph pc_discover(const ContingencyTable& table, const std::vector<std::string>& variables,
                               const PCOptions& opt = {}) {
  const std::size_t V = variables.size();
  if (V < 2) throw InvalidArgument("pc_discover: need at least 2 variables");
  if (!opt.tiers.empty() && opt.tiers.size() != V) throw InvalidArgument("pc_discover: one tier per variable");
  for (const auto& v : variables) table.index_of(v);

  CausalGraph g(variables);
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = i + 1; j < V; ++j) g.add_undirected(i, j);

  for (std::size_t level = 0; level <= opt.max_cond; ++level) {
    std::vector<std::vector<std::size_t>> frozen(V);
    bool any_candidate = false;
    for (std::size_t i = 0; i < V; ++i) frozen[i] = g.neighbours(i);
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) {
        if (i == j || !g.adjacent(i, j)) continue;
        std::vector<std::size_t> pool;
        for (auto k : frozen[i])
          if (k != j) pool.push_back(k);
        if (pool.size() < level) continue;
        any_candidate = true;
        detail::for_each_subset(pool, level, [&](const std::vector<std::size_t>& s) {
          std::vector<std::string> z;
          for (auto k : s) z.push_back(variables[k]);
          if (ci_test_g2(table, variables[i], variables[j], z, opt.alpha).independent) {
            g.remove_edge(i, j);
            g.sepsets[{std::min(i, j), std::max(i, j)}] = s;
            return true;
          }
          return false;
        });
      }
    if (!any_candidate) break;
  }

  // Background tiers.
  if (!opt.tiers.empty())
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j)
        if (g.undirected(i, j) && opt.tiers[i] < opt.tiers[j]) g.orient(i, j);

  // Unshielded colliders i -> k <- j with k outside sepset(i, j).
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = i + 1; j < V; ++j) {
      if (g.adjacent(i, j)) continue;
      const auto* sep = g.sepset(i, j);
      for (std::size_t k = 0; k < V; ++k) {
        if (k == i || k == j || !g.adjacent(i, k) || !g.adjacent(j, k)) continue;
        if (sep && std::find(sep->begin(), sep->end(), k) != sep->end()) continue;
        for (auto from : {i, j})
          if (g.undirected(from, k) && detail::tier_allows(opt, from, k) && !g.has_directed_path(k, from))
            g.orient(from, k);
      }
    }
  detail::apply_meek(g, opt);
  return g;
}

// Parents of the treatment; requires a fully directed graph.
inline std::vector<std::string> backdoor_set(const CausalGraph& g, const std::string& treatment,
                                             const std::string& outcome) {
  if (treatment == outcome) throw InvalidArgument("backdoor_set: treatment equals outcome");
  const auto t = g.index_of(treatment);
  g.index_of(outcome);
  if (g.has_undirected_edges())
    throw IdentificationError("backdoor_set: graph has undirected edges; orient them or supply an adjustment set");
  std::vector<std::string> out;
  for (auto p : g.parents(t)) out.push_back(g.names()[p]);
  return out;
}

// ---------------------------------------------------------------------------
// Effects
// ---------------------------------------------------------------------------

struct EffectEstimate {
  std::string treatment;
  std::string outcome;
  std::optional<std::string> mediator;
  double te = 0.0;
  std::optional<double> nde;
  std::optional<double> nie;
  std::optional<std::array<double, 2>> cde_at_m;
  std::vector<std::string> adjustment;
  std::size_t n = 0;
  double dropped_mass = 0.0;  // probability mass of strata lacking support
  std::size_t strata_used = 0;
};

namespace detail {

// Counts over [treatment, outcome, (mediator), Z...] in that bit order.
struct EffectCounts {
  std::vector<std::size_t> m;
  std::size_t nz = 0;
  bool has_mediator = false;
  std::size_t z_shift() const { return has_mediator ? 3 : 2; }
  std::size_t at(std::size_t a, std::size_t y, std::size_t med, std::size_t z) const {
    return m[a | (y << 1) | (has_mediator ? med << 2 : 0) | (z << z_shift())];
  }
};

inline EffectCounts effect_counts(const ContingencyTable& t, const std::string& a, const std::string& y,
                                  const std::optional<std::string>& med, const std::vector<std::string>& z) {
  if (a == y) throw InvalidArgument("effect: treatment equals outcome");
  std::vector<std::size_t> vars{t.index_of(a), t.index_of(y)};
  if (med) vars.push_back(t.index_of(*med));
  for (const auto& v : z) {
    if (v == a || v == y || (med && v == *med)) throw InvalidArgument("effect: adjustment set overlaps treatment/outcome/mediator");
    vars.push_back(t.index_of(v));
  }
  return {t.marginal(vars), z.size(), med.has_value()};
}

}  // namespace detail

// TE = sum_z P(z) [E(Y | A=0, z) - E(Y | A=1, z)] over strata where both arms
// are observed; P(z) is renormalized over those strata. Effects use raw
// frequencies: unsupported strata are dropped, never smoothed into existence.
inline EffectEstimate total_effect(const ContingencyTable& table, const std::string& a, const std::string& y,
                                   const std::vector<std::string>& z = {}) {
  const auto c = detail::effect_counts(table, a, y, std::nullopt, z);
  EffectEstimate e;
  e.treatment = a;
  e.outcome = y;
  e.adjustment = z;
  e.n = table.n();
  double acc = 0.0, mass = 0.0;
  for (std::size_t s = 0; s < (std::size_t{1} << z.size()); ++s) {
    std::array<std::size_t, 2> arm{}, pos{};
    for (std::size_t ai = 0; ai < 2; ++ai) {
      pos[ai] = c.at(ai, 1, 0, s);
      arm[ai] = c.at(ai, 0, 0, s) + pos[ai];
    }
    const double pz = double(arm[0] + arm[1]) / double(table.n());
    if (arm[0] == 0 || arm[1] == 0) {
      e.dropped_mass += pz;
      continue;
    }
    const double ey0 = double(pos[0]) / double(arm[0]);
    const double ey1 = double(pos[1]) / double(arm[1]);
    acc += pz * (ey0 - ey1);
    mass += pz;
    ++e.strata_used;
  }
  if (e.strata_used == 0) throw IdentificationError("total_effect: no stratum observes both treatment arms");
  e.te = acc / mass;
  return e;
}

// Per stratum z (P(z) renormalized over strata with all four (a, m) cells observed):
//   NDE = sum_z P(z) sum_m P(m | A=0, z) (E[Y | 0, m, z] - E[Y | 1, m, z])
//   NIE = sum_z P(z) sum_m E[Y | 1, m, z] (P(m | A=0, z) - P(m | A=1, z))
//   TE  = NDE + NIE,  cde_at_m[m] = sum_z P(z) (E[Y | 0, m, z] - E[Y | 1, m, z]).
inline EffectEstimate direct_indirect_effects(const ContingencyTable& table, const std::string& a,
                                              const std::string& y, const std::string& mediator,
                                              const std::vector<std::string>& z = {}) {
  const auto c = detail::effect_counts(table, a, y, mediator, z);
  EffectEstimate e;
  e.treatment = a;
  e.outcome = y;
  e.mediator = mediator;
  e.adjustment = z;
  e.n = table.n();
  double nde = 0.0, nie = 0.0, mass = 0.0;
  std::array<double, 2> cde{};
  for (std::size_t s = 0; s < (std::size_t{1} << z.size()); ++s) {
    std::array<std::array<std::size_t, 2>, 2> cell{}, pos{};  // [a][m]
    std::size_t total = 0;
    bool supported = true;
    for (std::size_t ai = 0; ai < 2; ++ai)
      for (std::size_t mi = 0; mi < 2; ++mi) {
        pos[ai][mi] = c.at(ai, 1, mi, s);
        cell[ai][mi] = c.at(ai, 0, mi, s) + pos[ai][mi];
        total += cell[ai][mi];
        supported = supported && cell[ai][mi] > 0;
      }
    const double pz = double(total) / double(table.n());
    if (!supported) {
      e.dropped_mass += pz;
      continue;
    }
    std::array<std::array<double, 2>, 2> ey{}, pm{};
    for (std::size_t ai = 0; ai < 2; ++ai) {
      const auto arm = cell[ai][0] + cell[ai][1];
      for (std::size_t mi = 0; mi < 2; ++mi) {
        ey[ai][mi] = double(pos[ai][mi]) / double(cell[ai][mi]);
        pm[ai][mi] = double(cell[ai][mi]) / double(arm);
      }
    }
    for (std::size_t mi = 0; mi < 2; ++mi) {
      nde += pz * pm[0][mi] * (ey[0][mi] - ey[1][mi]);
      nie += pz * ey[1][mi] * (pm[0][mi] - pm[1][mi]);
      cde[mi] += pz * (ey[0][mi] - ey[1][mi]);
    }
    mass += pz;
    ++e.strata_used;
  }
  if (e.strata_used == 0)
    throw IdentificationError("direct_indirect_effects: no stratum observes every (treatment, mediator) cell");
  e.nde = nde / mass;
  e.nie = nie / mass;
  e.cde_at_m = std::array<double, 2>{cde[0] / mass, cde[1] / mass};
  e.te = *e.nde + *e.nie;
  return e;
}

// ---------------------------------------------------------------------------
// Refutation
// ---------------------------------------------------------------------------

struct RefutationResult {
  double old_estimate = 0.0;
  double new_estimate = 0.0;
  std::vector<double> estimates;
  double p_value = 1.0;
  std::size_t repetitions = 0;
};

inline constexpr std::uint64_t kRefutationStreamBase = 1000;

// Two-sided empirical placement of `old` among the repetition estimates,
// counting ties on both sides: p = min(1, 2 min(#{e <= old} + 1, #{e >= old} + 1) / (R + 1)).
inline double placement_p_value(double old, const std::vector<double>& reps) {
  std::size_t le = 0, ge = 0;
  for (double r : reps) {
    le += r <= old;
    ge += r >= old;
  }
  const double p = 2.0 * double(std::min(le, ge) + 1) / double(reps.size() + 1);
  return std::min(1.0, p);
}

// Each repetition appends an independent fair-coin column U to the
// adjustment set and re-estimates the total effect.
inline RefutationResult refute_random_common_cause(const Dataset& data, const std::string& a, const std::string& y,
                                                   const std::vector<std::string>& z, std::size_t repetitions,
                                                   std::uint64_t seed) {
  if (repetitions < 20) throw InvalidArgument("refute_random_common_cause: need at least 20 repetitions");
  std::vector<std::string> names{a, y};
  names.insert(names.end(), z.begin(), z.end());
  std::vector<const BinaryColumn*> cols;
  for (const auto& n : names) cols.push_back(&data.column(n));

  RefutationResult r;
  r.repetitions = repetitions;
  r.old_estimate = total_effect(ContingencyTable::from_columns(names, cols), a, y, z).te;

  auto names_u = names;
  names_u.push_back("__u");
  auto z_u = z;
  z_u.push_back("__u");
  BinaryColumn u(data.size());
  double sum = 0.0;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    Rng rng(seed, kRefutationStreamBase + rep);
    for (auto& v : u) v = rng.bernoulli(0.5) ? 1 : 0;
    auto cols_u = cols;
    cols_u.push_back(&u);
    const double est = total_effect(ContingencyTable::from_columns(names_u, cols_u), a, y, z_u).te;
    r.estimates.push_back(est);
    sum += est;
  }
  r.new_estimate = sum / double(repetitions);
  r.p_value = placement_p_value(r.old_estimate, r.estimates);
  return r;
}

// ---------------------------------------------------------------------------
// Trend analysis
// ---------------------------------------------------------------------------

struct TrendPair {
  std::string label;
  double abs_te = 0.0;
  double abs_delta = 0.0;
};

struct TrendResult {
  double rho = 0.0;
  std::vector<TrendPair> pairs;
};

// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return v[l] < v[r]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Pearson correlation of the average ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  if (x.size() < 3) throw InvalidArgument("spearman: need at least 3 pairs");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("spearman: one variable has constant ranks");
  return sxy / std::sqrt(sxx * syy);
}

inline TrendResult trend_analysis(std::vector<TrendPair> pairs) {
  if (pairs.size() < 3) throw InvalidArgument("trend_analysis: need at least 3 pairs");
  std::vector<double> te, delta;
  for (auto& p : pairs) {
    p.abs_te = std::abs(p.abs_te);
    p.abs_delta = std::abs(p.abs_delta);
    te.push_back(p.abs_te);
    delta.push_back(p.abs_delta);
  }
  return {spearman(te, delta), std::move(pairs)};
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::ordered_json& j, const EffectEstimate& e) {
  j = nlohmann::ordered_json{{"treatment", e.treatment}, {"outcome", e.outcome}};
  if (e.mediator) j["mediator"] = *e.mediator;
  j["te"] = e.te;
  if (e.nde) j["nde"] = *e.nde;
  if (e.nie) j["nie"] = *e.nie;
  if (e.cde_at_m) j["cde_at_m"] = *e.cde_at_m;
  j["adjustment"] = e.adjustment;
  j["n"] = e.n;
  j["dropped_mass"] = e.dropped_mass;
  j["strata_used"] = e.strata_used;
}

inline void to_json(nlohmann::ordered_json& j, const RefutationResult& r) {
  j = nlohmann::ordered_json{
      {"old", r.old_estimate}, {"new", r.new_estimate}, {"p", r.p_value}, {"repetitions", r.repetitions}};
}

inline void to_json(nlohmann::ordered_json& j, const CausalGraph& g) {
  j = nlohmann::ordered_json{{"nodes", g.names()}, {"directed", nlohmann::ordered_json::array()},
                             {"undirected", nlohmann::ordered_json::array()}};
  for (const auto& [from, to] : g.directed_edges()) j["directed"].push_back({from, to});
  for (const auto& [u, v] : g.undirected_edges()) j["undirected"].push_back({u, v});
}

}  // namespace ffc
