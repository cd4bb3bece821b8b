#pragma once

// Deterministic numerical core: small dense matrices, loss primitives,
// AdamW, chi-square tail probabilities and a portable PRNG.
//
// Everything here is computed in binary64 with plain loops in a fixed order
// so results are reproducible bit-for-bit across runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "ffc/errors.hpp"

namespace ffc {

// 0/1 valued column (labels, sensitive attributes, mediators).
using BinaryColumn = std::vector<std::uint8_t>;
using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                            " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    for (double v : data_)
      if (!std::isfinite(v)) throw InvalidArgument("Matrix: non-finite entry");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = M x
inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.cols())
    throw InvalidArgument("matvec: vector length " + std::to_string(x.size()) +
                          " != matrix cols " + std::to_string(m.cols()));
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

// y = M^T x
inline std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> x) {
  if (x.size() != m.rows()) throw InvalidArgument("matvec_transposed: dimension mismatch");
  std::vector<double> y(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * x[r];
  }
  return y;
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidArgument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm2(std::span<const double> u) { return std::sqrt(dot(u, u)); }

// ---------------------------------------------------------------------------
// ProbVector
// ---------------------------------------------------------------------------

class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbVector(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw InvalidArgument("ProbVector: empty");
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("ProbVector: negative or non-finite entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) throw InvalidArgument("ProbVector: entries do not sum to 1");
  }

  static ProbVector uniform(std::size_t n) { return ProbVector(std::vector<double>(n, 1.0 / double(n))); }

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }

 private:
  std::vector<double> p_;
};

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

// softmax(scores / temperature), max-subtracted.
inline ProbVector softmax(std::span<const double> scores, double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidArgument("softmax: temperature must be positive and finite");
  if (scores.empty()) throw InvalidArgument("softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("softmax: non-finite score");
    mx = std::max(mx, s);
  }
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - mx) / temperature);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return ProbVector(std::move(out));
}

// KL(p || q) with 0 ln 0 = 0.
inline double kl_div(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw InvalidArgument("kl_div: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw InvalidArgument("kl_div: q has zero mass where p > 0");
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(acc, 0.0);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidArgument("cosine: length mismatch");
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) throw InvalidArgument("cosine: zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Loss is -ln softmax(logits)[label]; grad = softmax(logits) - onehot(label).
inline LossAndGrad cross_entropy_with_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size())
    throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " out of range");
  const auto p = softmax(logits);
  double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double l : logits) lse += std::exp(l - mx);
  lse = mx + std::log(lse);
  LossAndGrad out;
  out.loss = lse - logits[label];
  out.grad.assign(p.values().begin(), p.values().end());
  out.grad[label] -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Contiguous slice of the parameter vector with its own learning rate.
struct ParamGroup {
  std::size_t offset = 0;
  std::size_t size = 0;
  double lr = 0.0;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  AdamWConfig config;
  std::vector<ParamGroup> groups;  // empty: config.lr everywhere

  static OptimizerState for_params(std::size_t n, AdamWConfig cfg = {}) {
    OptimizerState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.config = cfg;
    return s;
  }
};

// Decoupled weight decay followed by the bias-corrected Adam update.
inline void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidArgument("adamw_step: length mismatch");
  const auto& c = state.config;
  std::vector<double> lr(params.size(), c.lr);
  for (const auto& g : state.groups) {
    if (g.offset + g.size > params.size()) throw InvalidArgument("adamw_step: param group out of range");
    std::fill_n(lr.begin() + static_cast<std::ptrdiff_t>(g.offset), g.size, g.lr);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr[i] * c.weight_decay * params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr[i] * mhat / (std::sqrt(vhat) + c.eps);
  }
}

// ---------------------------------------------------------------------------
// Chi-square survival function
// ---------------------------------------------------------------------------

// P(X > x) for X ~ chi2(df), via the regularized upper incomplete gamma.
inline double chi2_sf(double x, unsigned df) {
  if (!(x >= 0.0)) throw InvalidArgument("chi2_sf: x must be >= 0");
  if (df == 0) throw InvalidArgument("chi2_sf: df must be positive");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * static_cast<double>(df), 0.5 * x);
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// PCG32 (XSH-RR, 64-bit LCG state) seeded through splitmix64. The stream id
// selects the LCG increment, so (seed, stream) pairs give independent
// sequences. All distributions below are implemented here rather than through
// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t sm = seed;
    const std::uint64_t init_state = splitmix64(sm);
    inc_ = (stream << 1u) | 1u;
    state_ = 0;
    next_u32();
    state_ += init_state;
    next_u32();
  }

  std::uint32_t next_u32() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32u) | next_u32();
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one variate per call.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Marsaglia-Tsang; shape < 1 handled by the u^(1/shape) boost.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidArgument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      const double u = 1.0 - uniform();
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(std::size_t k, double concentration) {
    std::vector<double> g(k);
    double total = 0.0;
    for (auto& x : g) {
      x = gamma(concentration);
      total += x;
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed (tiny concentration): put all mass on one draw.
      std::fill(g.begin(), g.end(), 0.0);
      g[below(k)] = 1.0;
      return g;
    }
    for (auto& x : g) x /= total;
    return g;
  }

  template <typename T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
};

}  // namespace ffc
