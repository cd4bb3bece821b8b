#pragma once

// Evaluation-time group fairness and accuracy metrics on hard predictions.
//
// All attributes are binary. Every metric refuses to run on an empty group
// (DegenerateGroup) instead of reporting a silent zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/numkit.hpp"

namespace ffc {

struct PredictionSet {
  BinaryColumn y_true;
  BinaryColumn y_pred;
  std::vector<double> y_score;  // positive-class probability; never used by the metrics
  std::vector<std::string> attribute_names;
  std::vector<BinaryColumn> attributes;  // [k][row]

  std::size_t size() const noexcept { return y_true.size(); }
  std::size_t num_attributes() const noexcept { return attributes.size(); }

  void validate() const {
    const auto n = y_true.size();
    if (n == 0) throw InvalidArgument("PredictionSet: empty");
    if (y_pred.size() != n || (!y_score.empty() && y_score.size() != n))
      throw InvalidArgument("PredictionSet: column length mismatch");
    if (attribute_names.size() != attributes.size())
      throw InvalidArgument("PredictionSet: attribute names/columns mismatch");
    auto binary = [](const BinaryColumn& c) {
      return std::all_of(c.begin(), c.end(), [](std::uint8_t v) { return v <= 1; });
    };
    if (!binary(y_true) || !binary(y_pred)) throw InvalidArgument("PredictionSet: labels must be 0/1");
    for (const auto& a : attributes) {
      if (a.size() != n) throw InvalidArgument("PredictionSet: attribute length mismatch");
      if (!binary(a)) throw InvalidArgument("PredictionSet: attribute values must be 0/1");
    }
    for (double s : y_score)
      if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("PredictionSet: score outside [0,1]");
  }
};

namespace detail {

inline const BinaryColumn& attribute_column(const PredictionSet& ps, std::size_t k) {
  if (k >= ps.attributes.size())
    throw InvalidArgument("attribute index " + std::to_string(k) + " out of range");
  return ps.attributes[k];
}

inline std::string group_label(const PredictionSet& ps, std::size_t k) {
  return k < ps.attribute_names.size() ? ps.attribute_names[k] : "A" + std::to_string(k + 1);
}

// counts[a][y][yhat]
using CellCounts = std::array<std::array<std::array<std::size_t, 2>, 2>, 2>;

inline CellCounts cell_counts(const PredictionSet& ps, std::size_t k) {
  const auto& a = attribute_column(ps, k);
  CellCounts c{};
  for (std::size_t i = 0; i < ps.size(); ++i) ++c[a[i]][ps.y_true[i]][ps.y_pred[i]];
  return c;
}

inline std::size_t group_size(const CellCounts& c, int a) {
  return c[a][0][0] + c[a][0][1] + c[a][1][0] + c[a][1][1];
}

// P(Yhat = yhat | A = a)
inline double prediction_rate(const CellCounts& c, int a, int yhat, const std::string& name) {
  const auto n = group_size(c, a);
  if (n == 0) throw DegenerateGroup("attribute " + name + ": group " + std::to_string(a) + " is empty");
  return double(c[a][0][yhat] + c[a][1][yhat]) / double(n);
}

}  // namespace detail

// |P(Yhat=1 | A=0) - P(Yhat=1 | A=1)|
inline double demographic_parity(const PredictionSet& ps, std::size_t k) {
  ps.validate();
  const auto c = detail::cell_counts(ps, k);
  const auto name = detail::group_label(ps, k);
  return std::abs(detail::prediction_rate(c, 0, 1, name) - detail::prediction_rate(c, 1, 1, name));
}

struct OddsGaps {
  double gap_y0 = 0.0;  // false-positive-rate gap
  double gap_y1 = 0.0;  // true-positive-rate gap
  double value() const noexcept { return std::max(gap_y0, gap_y1); }
};

inline OddsGaps equalized_odds_gaps(const PredictionSet& ps, std::size_t k) {
  ps.validate();
  const auto c = detail::cell_counts(ps, k);
  const auto name = detail::group_label(ps, k);
  std::array<double, 2> gap{};
  for (int y = 0; y < 2; ++y) {
    std::array<double, 2> rate{};
    for (int a = 0; a < 2; ++a) {
      const auto n = c[a][y][0] + c[a][y][1];
      if (n == 0)
        throw DegenerateGroup("attribute " + name + ": cell (y=" + std::to_string(y) +
                              ", a=" + std::to_string(a) + ") is empty");
      rate[a] = double(c[a][y][1]) / double(n);
    }
    gap[y] = std::abs(rate[0] - rate[1]);
  }
  return {gap[0], gap[1]};
}

// Worst-case gap over y in {0,1}.
inline double equalized_odds(const PredictionSet& ps, std::size_t k) { return equalized_odds_gaps(ps, k).value(); }

// Mean over attributes and their two groups of P(Yhat = Y | A^k = a). The
// label-sum normalization in the textbook form cancels because the inner
// probability does not depend on y.
inline double balanced_accuracy(const PredictionSet& ps) {
  ps.validate();
  if (ps.num_attributes() == 0) throw InvalidArgument("balanced_accuracy: no attributes");
  double acc = 0.0;
  for (std::size_t k = 0; k < ps.num_attributes(); ++k) {
    const auto c = detail::cell_counts(ps, k);
    for (int a = 0; a < 2; ++a) {
      const auto n = detail::group_size(c, a);
      if (n == 0)
        throw DegenerateGroup("attribute " + detail::group_label(ps, k) + ": group " + std::to_string(a) +
                              " is empty");
      acc += double(c[a][0][0] + c[a][1][1]) / double(n);
    }
  }
  return acc / double(2 * ps.num_attributes());
}

// (1/K) sum_k sum over ordered pairs (a,y) != (a',y') of
// |P(Yhat=y | A^k=a) - P(Yhat=y' | A^k=a')|.
inline double accuracy_parity(const PredictionSet& ps) {
  ps.validate();
  if (ps.num_attributes() == 0) throw InvalidArgument("accuracy_parity: no attributes");
  double total = 0.0;
  for (std::size_t k = 0; k < ps.num_attributes(); ++k) {
    const auto c = detail::cell_counts(ps, k);
    const auto name = detail::group_label(ps, k);
    std::array<double, 4> p{};  // index 2*a + y
    for (int a = 0; a < 2; ++a)
      for (int y = 0; y < 2; ++y) p[2 * a + y] = detail::prediction_rate(c, a, y, name);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) total += std::abs(p[i] - p[j]);
  }
  return total / double(ps.num_attributes());
}

// ---------------------------------------------------------------------------
// FairnessReport
// ---------------------------------------------------------------------------

struct AttributeFairness {
  std::string name;
  double dp = 0.0;
  double eo = 0.0;
  double eo_gap_y0 = 0.0;
  double eo_gap_y1 = 0.0;
  std::optional<double> delta_dp;
  std::optional<double> delta_eo;
};

struct FairnessReport {
  double acc = 0.0;
  double ap = 0.0;
  std::vector<AttributeFairness> attributes;
};

inline FairnessReport evaluate_fairness(const PredictionSet& ps) {
  FairnessReport r;
  r.acc = balanced_accuracy(ps);
  r.ap = accuracy_parity(ps);
  for (std::size_t k = 0; k < ps.num_attributes(); ++k) {
    AttributeFairness f;
    f.name = detail::group_label(ps, k);
    f.dp = demographic_parity(ps, k);
    const auto gaps = equalized_odds_gaps(ps, k);
    f.eo = gaps.value();
    f.eo_gap_y0 = gaps.gap_y0;
    f.eo_gap_y1 = gaps.gap_y1;
    r.attributes.push_back(std::move(f));
  }
  return r;
}

struct FairnessDelta {
  std::string name;
  double dp = 0.0;  // debiased - biased; negative is an improvement
  double eo = 0.0;
};

inline std::vector<FairnessDelta> fairness_delta(const FairnessReport& biased, const FairnessReport& debiased) {
  if (biased.attributes.size() != debiased.attributes.size())
    throw InvalidArgument("fairness_delta: attribute count mismatch");
  std::vector<FairnessDelta> out;
  for (std::size_t k = 0; k < biased.attributes.size(); ++k) {
    const auto& b = biased.attributes[k];
    const auto& d = debiased.attributes[k];
    if (b.name != d.name) throw InvalidArgument("fairness_delta: attribute '" + b.name + "' vs '" + d.name + "'");
    out.push_back({b.name, d.dp - b.dp, d.eo - b.eo});
  }
  return out;
}

// Fills the delta fields of `debiased` relative to `baseline`.
inline void attach_baseline(FairnessReport& debiased, const FairnessReport& baseline) {
  const auto deltas = fairness_delta(baseline, debiased);
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    debiased.attributes[k].delta_dp = deltas[k].dp;
    debiased.attributes[k].delta_eo = deltas[k].eo;
  }
}

inline void to_json(nlohmann::ordered_json& j, const AttributeFairness& f) {
  j = nlohmann::ordered_json{{"name", f.name},           {"dp", f.dp},
                             {"eo", f.eo},               {"eo_gap_y0", f.eo_gap_y0},
                             {"eo_gap_y1", f.eo_gap_y1}};
  if (f.delta_dp) j["delta_dp"] = *f.delta_dp;
  if (f.delta_eo) j["delta_eo"] = *f.delta_eo;
}

inline void from_json(const nlohmann::ordered_json& j, AttributeFairness& f) {
  f.name = j.at("name").get<std::string>();
  f.dp = j.at("dp").get<double>();
  f.eo = j.at("eo").get<double>();
  f.eo_gap_y0 = j.at("eo_gap_y0").get<double>();
  f.eo_gap_y1 = j.at("eo_gap_y1").get<double>();
  if (j.contains("delta_dp")) f.delta_dp = j.at("delta_dp").get<double>();
  if (j.contains("delta_eo")) f.delta_eo = j.at("delta_eo").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const FairnessReport& r) {
  j = nlohmann::ordered_json{{"acc", r.acc}, {"ap", r.ap}, {"attributes", r.attributes}};
}

inline void from_json(const nlohmann::ordered_json& j, FairnessReport& r) {
  r.acc = j.at("acc").get<double>();
  r.ap = j.at("ap").get<double>();
  r.attributes = j.at("attributes").get<std::vector<AttributeFairness>>();
}

}  // namespace ffc
