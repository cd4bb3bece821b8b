#pragma once

// Desk-scale local model: a frozen random linear encoder followed by a
// trainable affine adapter (the "prompted" visual encoder), frozen group and
// class text embeddings, and a trainable two-layer classifier that scores
// [z ; t_y] for every class y.
//
// Loss = CE + lambda_con * L_con + lambda_lf * L_lf + lambda_gf * L_gf, with
// gradients derived by hand. The encoder bank never changes after creation.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/numkit.hpp"

namespace ffc {

// ---------------------------------------------------------------------------
// EncoderBank (frozen)
// ---------------------------------------------------------------------------

struct EncoderBank {
  Matrix encoder;                                  // d_e x d_x
  std::vector<std::array<Vector, 2>> group_embeddings;  // [k][g], unit norm
  std::array<Vector, 2> class_embeddings;          // [y], unit norm
  double temperature = 0.07;

  std::size_t d_x() const noexcept { return encoder.cols(); }
  std::size_t d_e() const noexcept { return encoder.rows(); }
  std::size_t num_attributes() const noexcept { return group_embeddings.size(); }

  static constexpr std::uint64_t kStream = 2;

  static EncoderBank generate(std::size_t d_x, std::size_t d_e, std::size_t num_attributes, std::uint64_t seed,
                              double temperature = 0.07) {
    if (d_x == 0 || d_e == 0) throw InvalidArgument("EncoderBank: dimensions must be positive");
    if (!(temperature > 0.0)) throw InvalidArgument("EncoderBank: temperature must be positive");
    Rng rng(seed, kStream);
    EncoderBank bank;
    bank.temperature = temperature;
    bank.encoder = Matrix(d_e, d_x);
    const double sd = 1.0 / std::sqrt(double(d_x));
    for (double& v : bank.encoder.data()) v = rng.normal(0.0, sd);
    auto unit = [&] {
      Vector v(d_e);
      double n = 0.0;
      while (n == 0.0) {
        for (double& x : v) x = rng.normal();
        n = norm2(v);
      }
      for (double& x : v) x /= n;
      return v;
    };
    bank.group_embeddings.resize(num_attributes);
    for (auto& pair : bank.group_embeddings)
      for (auto& t : pair) t = unit();
    for (auto& t : bank.class_embeddings) t = unit();
    return bank;
  }
};

// ---------------------------------------------------------------------------
// ModelParams (trainable, shared with the server)
// ---------------------------------------------------------------------------

// Flat layout, in order:
//   adapter_w  d_e x d_e (row-major)
//   adapter_b  d_e
//   w1         hidden x 2*d_e (row-major)
//   b1         hidden
//   w2         hidden
//   b2         1
struct ParamLayout {
  std::size_t d_e = 0;
  std::size_t hidden = 0;

  std::size_t adapter_w() const noexcept { return 0; }
  std::size_t adapter_b() const noexcept { return d_e * d_e; }
  std::size_t w1() const noexcept { return adapter_b() + d_e; }
  std::size_t b1() const noexcept { return w1() + hidden * 2 * d_e; }
  std::size_t w2() const noexcept { return b1() + hidden; }
  std::size_t b2() const noexcept { return w2() + hidden; }
  std::size_t size() const noexcept { return b2() + 1; }

  // Adapter (everything before w1) and classifier.
  std::size_t adapter_size() const noexcept { return w1(); }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

struct ModelParams {
  ParamLayout layout;
  Vector values;

  static constexpr std::uint64_t kInitStream = 3;

  // Adapter at identity + N(0, 0.01^2); classifier U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static ModelParams init(std::size_t d_e, std::size_t hidden, Rng& rng) {
    if (d_e == 0 || hidden == 0) throw InvalidArgument("ModelParams: dimensions must be positive");
    ModelParams p;
    p.layout = {d_e, hidden};
    p.values.assign(p.layout.size(), 0.0);
    for (std::size_t r = 0; r < d_e; ++r)
      for (std::size_t c = 0; c < d_e; ++c)
        p.values[p.layout.adapter_w() + r * d_e + c] = (r == c ? 1.0 : 0.0) + rng.normal(0.0, 0.01);
    auto fill_uniform = [&](std::size_t offset, std::size_t count, double bound) {
      for (std::size_t i = 0; i < count; ++i) p.values[offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
    };
    const double b1 = 1.0 / std::sqrt(double(2 * d_e));
    const double b2 = 1.0 / std::sqrt(double(hidden));
    fill_uniform(p.layout.w1(), hidden * 2 * d_e, b1);
    fill_uniform(p.layout.b1(), hidden, b1);
    fill_uniform(p.layout.w2(), hidden, b2);
    fill_uniform(p.layout.b2(), 1, b2);
    return p;
  }

  static ModelParams init(std::size_t d_e, std::size_t hidden, std::uint64_t seed) {
    Rng rng(seed, kInitStream);
    return init(d_e, hidden, rng);
  }

  double adapter_w(std::size_t r, std::size_t c) const { return values[layout.adapter_w() + r * layout.d_e + c]; }
  double adapter_b(std::size_t r) const { return values[layout.adapter_b() + r]; }
  double w1(std::size_t r, std::size_t c) const { return values[layout.w1() + r * 2 * layout.d_e + c]; }
  double b1(std::size_t r) const { return values[layout.b1() + r]; }
  double w2(std::size_t r) const { return values[layout.w2() + r]; }
  double b2() const { return values[layout.b2()]; }

  void validate() const {
    if (values.size() != layout.size()) throw InvalidArgument("ModelParams: value count does not match layout");
    for (double v : values)
      if (!std::isfinite(v)) throw NumericFailure("ModelParams: non-finite parameter");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// ---------------------------------------------------------------------------
// LossWeights
// ---------------------------------------------------------------------------

enum class FairnessNotion { DP, EO };

inline std::string to_string(FairnessNotion n) { return n == FairnessNotion::DP ? "dp" : "eo"; }

inline FairnessNotion parse_notion(const std::string& s) {
  if (s == "dp" || s == "DP") return FairnessNotion::DP;
  if (s == "eo" || s == "EO") return FairnessNotion::EO;
  throw InvalidArgument("unknown fairness notion '" + s + "' (expected dp or eo)");
}

struct LossWeights {
  Vector alpha;  // local-fairness weights per attribute
  Vector beta;   // global-fairness weights per attribute
  double lambda_con = 0.5;
  double lambda_lf = 1.0;
  double lambda_gf = 1.0;
  FairnessNotion notion = FairnessNotion::DP;

  static LossWeights uniform(std::size_t k) {
    LossWeights w;
    w.alpha.assign(k, 1.0 / double(k));
    w.beta.assign(k, 1.0 / double(k));
    return w;
  }

  void validate(std::size_t num_attributes) const {
    auto check = [&](const Vector& v, const char* name) {
      if (v.size() != num_attributes)
        throw InvalidArgument(std::string("LossWeights: ") + name + " must have one entry per attribute");
      double s = 0.0;
      for (double x : v) {
        if (!(x >= 0.0)) throw InvalidArgument(std::string("LossWeights: ") + name + " entries must be >= 0");
        s += x;
      }
      if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument(std::string("LossWeights: ") + name + " must sum to 1");
    };
    check(alpha, "alpha");
    check(beta, "beta");
    if (!(lambda_con >= 0.0) || !(lambda_lf >= 0.0) || !(lambda_gf >= 0.0))
      throw InvalidArgument("LossWeights: lambdas must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

struct Batch {
  std::vector<std::span<const double>> x;
  BinaryColumn y;
  std::vector<BinaryColumn> a;  // [k][i]

  std::size_t size() const noexcept { return x.size(); }
};

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

namespace detail {

inline void check_compat(const ModelParams& params, const EncoderBank& bank) {
  if (params.layout.d_e != bank.d_e())
    throw InvalidArgument("model: adapter width " + std::to_string(params.layout.d_e) + " != encoder width " +
                          std::to_string(bank.d_e()));
  if (params.values.size() != params.layout.size()) throw InvalidArgument("model: parameter vector size mismatch");
}

// d cos(z, t) / dz, accumulated into out with the given scale.
inline void add_cosine_grad(std::span<const double> z, std::span<const double> t, double scale,
                            std::span<double> out) {
  const double nz = norm2(z);
  const double nt = norm2(t);
  const double c = dot(z, t) / (nz * nt);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] += scale * (t[i] / (nz * nt) - c * z[i] / (nz * nz));
}

}  // namespace detail

// z = W_a (E x) + b_a
inline Vector encode_visual(const ModelParams& params, const EncoderBank& bank, std::span<const double> x) {
  detail::check_compat(params, bank);
  if (x.size() != bank.d_x())
    throw InvalidArgument("encode_visual: feature length " + std::to_string(x.size()) + " != " +
                          std::to_string(bank.d_x()));
  const auto u = matvec(bank.encoder, x);
  const std::size_t d = params.layout.d_e;
  Vector z(d);
  for (std::size_t r = 0; r < d; ++r) {
    double acc = params.adapter_b(r);
    for (std::size_t c = 0; c < d; ++c) acc += params.adapter_w(r, c) * u[c];
    z[r] = acc;
  }
  return z;
}

// Softmax over groups g of cos(z, t^k_g) / tau.
inline ProbVector group_relevance(std::span<const double> z, const EncoderBank& bank, std::size_t k) {
  if (k >= bank.num_attributes()) throw InvalidArgument("group_relevance: attribute index out of range");
  const std::array<double, 2> cs{cosine(z, bank.group_embeddings[k][0]), cosine(z, bank.group_embeddings[k][1])};
  return softmax(cs, bank.temperature);
}

struct LocalFairness {
  double value = 0.0;
  Vector per_attribute;  // L_lf^k, batch means
};

inline LocalFairness local_fairness_reg(std::span<const Vector> zs, const EncoderBank& bank,
                                        const LossWeights& weights) {
  if (zs.empty()) throw InvalidArgument("local_fairness_reg: empty batch");
  const std::size_t K = bank.num_attributes();
  weights.validate(K);
  LocalFairness out;
  out.per_attribute.assign(K, 0.0);
  const auto uniform = ProbVector::uniform(2);
  for (const auto& z : zs)
    for (std::size_t k = 0; k < K; ++k) out.per_attribute[k] += kl_div(group_relevance(z, bank, k), uniform);
  for (std::size_t k = 0; k < K; ++k) {
    out.per_attribute[k] /= double(zs.size());
    out.value += weights.alpha[k] * out.per_attribute[k];
  }
  return out;
}

struct Classification {
  std::array<double, 2> logits{};
  double score = 0.5;  // P(y = 1)
  std::uint8_t prediction = 0;
};

namespace detail {

// Hidden activations of the classifier for class y; pre-activations in `pre`.
inline void classifier_hidden(const ModelParams& p, std::span<const double> z, std::span<const double> t,
                              std::span<double> pre) {
  const std::size_t d = p.layout.d_e;
  for (std::size_t r = 0; r < p.layout.hidden; ++r) {
    double acc = p.b1(r);
    for (std::size_t c = 0; c < d; ++c) acc += p.w1(r, c) * z[c];
    for (std::size_t c = 0; c < d; ++c) acc += p.w1(r, d + c) * t[c];
    pre[r] = acc;
  }
}

inline double classifier_logit(const ModelParams& p, std::span<const double> pre) {
  double acc = p.b2();
  for (std::size_t r = 0; r < pre.size(); ++r) acc += p.w2(r) * std::max(pre[r], 0.0);
  return acc;
}

inline Classification finish_classification(std::array<double, 2> logits) {
  Classification out;
  out.logits = logits;
  out.score = softmax(logits)[1];
  out.prediction = logits[1] > logits[0] ? 1 : 0;
  return out;
}

}  // namespace detail

// logit_y = W2 relu(W1 [z ; t_y] + b1) + b2; ties predict class 0.
inline Classification classify(const ModelParams& params, const EncoderBank& bank, std::span<const double> z) {
  detail::check_compat(params, bank);
  if (z.size() != params.layout.d_e) throw InvalidArgument("classify: representation width mismatch");
  Vector pre(params.layout.hidden);
  std::array<double, 2> logits{};
  for (int y = 0; y < 2; ++y) {
    detail::classifier_hidden(params, z, bank.class_embeddings[y], pre);
    logits[y] = detail::classifier_logit(params, pre);
  }
  return detail::finish_classification(logits);
}

// Diagnostic: the class whose embedding is most cosine-similar to z.
inline std::uint8_t predict_by_cosine(std::span<const double> z, const EncoderBank& bank) {
  return cosine(z, bank.class_embeddings[1]) > cosine(z, bank.class_embeddings[0]) ? 1 : 0;
}

// Batch mean of 1 - cos(z_i, t_{y_i}).
inline double contrastive_loss(std::span<const Vector> zs, const EncoderBank& bank, const BinaryColumn& y) {
  if (zs.empty()) throw InvalidArgument("contrastive_loss: empty batch");
  if (y.size() != zs.size()) throw InvalidArgument("contrastive_loss: label count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) acc += 1.0 - cosine(zs[i], bank.class_embeddings[y[i]]);
  return acc / double(zs.size());
}

// Differentiable relaxation of DP / EO on positive-class scores.
struct SoftFairness {
  double value = 0.0;
  Vector per_attribute;
  Vector grad;            // d value / d score_i
  double kink_margin = std::numeric_limits<double>::infinity();  // distance to the nearest |.| or max kink
};

namespace detail {

struct GapTerm {
  double gap = 0.0;  // mean(group 0) - mean(group 1)
  bool defined = false;
};

inline GapTerm score_gap(std::span<const double> scores, const BinaryColumn& a, const BinaryColumn* y,
                         int y_value) {
  double s0 = 0.0, s1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (y && (*y)[i] != y_value) continue;
    if (a[i] == 0) {
      s0 += scores[i];
      ++n0;
    } else {
      s1 += scores[i];
      ++n1;
    }
  }
  if (n0 == 0 || n1 == 0) return {};
  return {s0 / double(n0) - s1 / double(n1), true};
}

inline void add_gap_grad(const BinaryColumn& a, const BinaryColumn* y, int y_value, double scale,
                         std::span<double> grad) {
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (y && (*y)[i] != y_value) continue;
    (a[i] == 0 ? n0 : n1) += 1;
  }
  if (n0 == 0 || n1 == 0) return;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (y && (*y)[i] != y_value) continue;
    grad[i] += a[i] == 0 ? scale / double(n0) : -scale / double(n1);
  }
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// L_gf = sum_k beta^k Phi^k_soft. Empty groups or cells contribute a zero gap.
inline SoftFairness soft_global_fairness_reg(std::span<const double> scores, const BinaryColumn& y_true,
                                             const std::vector<BinaryColumn>& attributes,
                                             const LossWeights& weights) {
  if (scores.empty()) throw InvalidArgument("soft_global_fairness_reg: empty batch");
  const std::size_t K = attributes.size();
  weights.validate(K);
  SoftFairness out;
  out.per_attribute.assign(K, 0.0);
  out.grad.assign(scores.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& a = attributes[k];
    if (a.size() != scores.size() || y_true.size() != scores.size())
      throw InvalidArgument("soft_global_fairness_reg: column length mismatch");
    const double beta = weights.beta[k];
    if (weights.notion == FairnessNotion::DP) {
      const auto g = detail::score_gap(scores, a, nullptr, 0);
      if (!g.defined) continue;
      out.per_attribute[k] = std::abs(g.gap);
      out.kink_margin = std::min(out.kink_margin, std::abs(g.gap));
      detail::add_gap_grad(a, nullptr, 0, beta * detail::sign(g.gap), out.grad);
    } else {
      const auto g0 = detail::score_gap(scores, a, &y_true, 0);
      const auto g1 = detail::score_gap(scores, a, &y_true, 1);
      const double m0 = g0.defined ? std::abs(g0.gap) : 0.0;
      const double m1 = g1.defined ? std::abs(g1.gap) : 0.0;
      out.per_attribute[k] = std::max(m0, m1);
      if (g0.defined) out.kink_margin = std::min(out.kink_margin, m0);
      if (g1.defined) out.kink_margin = std::min(out.kink_margin, m1);
      out.kink_margin = std::min(out.kink_margin, std::abs(m0 - m1));
      if (m0 > m1) detail::add_gap_grad(a, &y_true, 0, beta * detail::sign(g0.gap), out.grad);
      else if (m1 > m0) detail::add_gap_grad(a, &y_true, 1, beta * detail::sign(g1.gap), out.grad);
    }
    out.value += beta * out.per_attribute[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Total loss and gradient
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double total = 0.0;
  double sup = 0.0;
  double con = 0.0;
  double lf = 0.0;
  double gf = 0.0;
  Vector lf_per_attribute;
  Vector gf_per_attribute;
};

struct LossAndGradient {
  LossBreakdown loss;
  Vector grad;  // same layout as ModelParams::values
  // Smallest |pre-activation| or fairness-gap kink seen; finite differences
  // across a kink are meaningless.
  double kink_margin = std::numeric_limits<double>::infinity();
};

inline LossAndGradient total_loss_and_grads(const ModelParams& params, const EncoderBank& bank, const Batch& batch,
                                            const LossWeights& weights, bool want_grad = true) {
  detail::check_compat(params, bank);
  const std::size_t N = batch.size();
  if (N == 0) throw InvalidArgument("total_loss_and_grads: empty batch");
  const std::size_t K = bank.num_attributes();
  if (batch.a.size() != K) throw InvalidArgument("total_loss_and_grads: attribute count mismatch");
  if (batch.y.size() != N) throw InvalidArgument("total_loss_and_grads: label count mismatch");
  weights.validate(K);

  const auto& L = params.layout;
  const std::size_t d = L.d_e;
  const std::size_t H = L.hidden;
  const double inv_n = 1.0 / double(N);

  // Forward.
  std::vector<Vector> u(N), z(N);
  std::vector<std::array<Vector, 2>> pre(N);
  std::vector<std::array<double, 2>> probs(N);
  Vector scores(N);
  LossAndGradient out;
  auto& loss = out.loss;
  for (std::size_t i = 0; i < N; ++i) {
    if (batch.x[i].size() != bank.d_x()) throw InvalidArgument("total_loss_and_grads: feature length mismatch");
    u[i] = matvec(bank.encoder, batch.x[i]);
    z[i].assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = params.adapter_b(r);
      for (std::size_t c = 0; c < d; ++c) acc += params.adapter_w(r, c) * u[i][c];
      z[i][r] = acc;
    }
    std::array<double, 2> logits{};
    for (int y = 0; y < 2; ++y) {
      pre[i][y].assign(H, 0.0);
      detail::classifier_hidden(params, z[i], bank.class_embeddings[y], pre[i][y]);
      logits[y] = detail::classifier_logit(params, pre[i][y]);
      for (double v : pre[i][y]) out.kink_margin = std::min(out.kink_margin, std::abs(v));
    }
    const auto ce = cross_entropy_with_grad(logits, batch.y[i]);
    loss.sup += ce.loss * inv_n;
    probs[i] = {ce.grad[0] + (batch.y[i] == 0 ? 1.0 : 0.0), ce.grad[1] + (batch.y[i] == 1 ? 1.0 : 0.0)};
    scores[i] = probs[i][1];
  }

  loss.con = contrastive_loss(z, bank, batch.y);
  const auto lf = local_fairness_reg(z, bank, weights);
  loss.lf = lf.value;
  loss.lf_per_attribute = lf.per_attribute;
  const auto gf = soft_global_fairness_reg(scores, batch.y, batch.a, weights);
  loss.gf = gf.value;
  loss.gf_per_attribute = gf.per_attribute;
  if (weights.lambda_gf > 0.0) out.kink_margin = std::min(out.kink_margin, gf.kink_margin);

  loss.total = loss.sup + weights.lambda_con * loss.con + weights.lambda_lf * loss.lf + weights.lambda_gf * loss.gf;
  const std::array<std::pair<const char*, double>, 5> terms{
      {{"L_sup", loss.sup}, {"L_con", loss.con}, {"L_lf", loss.lf}, {"L_gf", loss.gf}, {"total", loss.total}}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw NumericFailure(std::string("non-finite loss term ") + name);

  if (!want_grad) return out;

  // Backward.
  out.grad.assign(L.size(), 0.0);
  auto& g = out.grad;
  Vector dz(d), dpre(H);
  for (std::size_t i = 0; i < N; ++i) {
    std::fill(dz.begin(), dz.end(), 0.0);

    // Supervised + soft global fairness, both enter through the logits.
    const double s = scores[i];
    const double ds = weights.lambda_gf * gf.grad[i];
    std::array<double, 2> dlogit{(probs[i][0] - (batch.y[i] == 0 ? 1.0 : 0.0)) * inv_n,
                                 (probs[i][1] - (batch.y[i] == 1 ? 1.0 : 0.0)) * inv_n};
    dlogit[1] += ds * s * (1.0 - s);
    dlogit[0] -= ds * s * (1.0 - s);

    for (int y = 0; y < 2; ++y) {
      const auto& t = bank.class_embeddings[y];
      const auto& p = pre[i][y];
      g[L.b2()] += dlogit[y];
      for (std::size_t r = 0; r < H; ++r) {
        const double h = std::max(p[r], 0.0);
        g[L.w2() + r] += dlogit[y] * h;
        dpre[r] = p[r] > 0.0 ? dlogit[y] * params.w2(r) : 0.0;
      }
      for (std::size_t r = 0; r < H; ++r) {
        if (dpre[r] == 0.0) continue;
        g[L.b1() + r] += dpre[r];
        const std::size_t row = L.w1() + r * 2 * d;
        for (std::size_t c = 0; c < d; ++c) {
          g[row + c] += dpre[r] * z[i][c];
          g[row + d + c] += dpre[r] * t[c];
          dz[c] += dpre[r] * params.w1(r, c);
        }
      }
    }

    // Contrastive: d(1 - cos)/dz.
    if (weights.lambda_con > 0.0)
      detail::add_cosine_grad(z[i], bank.class_embeddings[batch.y[i]], -weights.lambda_con * inv_n, dz);

    // Local fairness: KL(softmax(cos/tau) || U) through each cosine.
    if (weights.lambda_lf > 0.0) {
      for (std::size_t k = 0; k < K; ++k) {
        const double w = weights.lambda_lf * weights.alpha[k] * inv_n;
        if (w == 0.0) continue;
        const auto pr = group_relevance(z[i], bank, k);
        double plogp = 0.0;
        for (std::size_t q = 0; q < 2; ++q) plogp += pr[q] > 0.0 ? pr[q] * std::log(pr[q]) : 0.0;
        for (std::size_t q = 0; q < 2; ++q) {
          const double lp = pr[q] > 0.0 ? std::log(pr[q]) : 0.0;
          const double dkl_dcos = pr[q] * (lp - plogp) / bank.temperature;
          detail::add_cosine_grad(z[i], bank.group_embeddings[k][q], w * dkl_dcos, dz);
        }
      }
    }

    // Adapter.
    for (std::size_t r = 0; r < d; ++r) {
      g[L.adapter_b() + r] += dz[r];
      const std::size_t row = L.adapter_w() + r * d;
      for (std::size_t c = 0; c < d; ++c) g[row + c] += dz[r] * u[i][c];
    }
  }
  for (double v : g)
    if (!std::isfinite(v)) throw NumericFailure("non-finite gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------
//
// File layout:
//   bytes 0..7    magic "FFCPARAM"
//   bytes 8..15   header length L, uint64 little-endian
//   next L bytes  UTF-8 JSON header: {"layout_version", "d_e", "hidden",
//                 "count", "seed", "blocks": [{name, offset, size, shape}]}
//   remainder     count IEEE-754 binary64 values, little-endian, in layout order

inline constexpr int kParamLayoutVersion = 1;
inline constexpr char kParamMagic[8] = {'F', 'F', 'C', 'P', 'A', 'R', 'A', 'M'};

inline nlohmann::ordered_json params_header(const ModelParams& p, std::uint64_t seed) {
  const auto& L = p.layout;
  auto block = [](const char* name, std::size_t off, std::size_t size, std::vector<std::size_t> shape) {
    return nlohmann::ordered_json{{"name", name}, {"offset", off}, {"size", size}, {"shape", shape}};
  };
  return {{"layout_version", kParamLayoutVersion},
          {"d_e", L.d_e},
          {"hidden", L.hidden},
          {"count", L.size()},
          {"seed", seed},
          {"blocks",
           {block("adapter_w", L.adapter_w(), L.d_e * L.d_e, {L.d_e, L.d_e}),
            block("adapter_b", L.adapter_b(), L.d_e, {L.d_e}),
            block("w1", L.w1(), L.hidden * 2 * L.d_e, {L.hidden, 2 * L.d_e}),
            block("b1", L.b1(), L.hidden, {L.hidden}), block("w2", L.w2(), L.hidden, {1, L.hidden}),
            block("b2", L.b2(), 1, {1})}}};
}

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("params: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void write_params(std::ostream& os, const ModelParams& p, std::uint64_t seed) {
  p.validate();
  const std::string header = params_header(p, seed).dump();
  os.write(kParamMagic, 8);
  detail::put_u64_le(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : p.values) detail::put_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

struct LoadedParams {
  ModelParams params;
  std::uint64_t seed = 0;
};

inline LoadedParams read_params(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kParamMagic, 8) != 0) throw DataError("params: bad magic");
  const auto hlen = detail::get_u64_le(is);
  if (hlen > (1u << 20)) throw DataError("params: implausible header length");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw DataError("params: truncated header");
  nlohmann::ordered_json h;
  try {
    h = nlohmann::ordered_json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("params: malformed header: ") + e.what());
  }
  if (h.at("layout_version").get<int>() != kParamLayoutVersion) throw DataError("params: unsupported layout version");
  LoadedParams out;
  out.seed = h.at("seed").get<std::uint64_t>();
  out.params.layout = {h.at("d_e").get<std::size_t>(), h.at("hidden").get<std::size_t>()};
  const auto count = h.at("count").get<std::size_t>();
  if (count != out.params.layout.size()) throw DataError("params: count does not match layout");
  out.params.values.resize(count);
  for (auto& v : out.params.values) v = std::bit_cast<double>(detail::get_u64_le(is));
  out.params.validate();
  return out;
}

}  // namespace ffc
