#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ffc/model.hpp"
#include "oracles.hpp"

namespace ffc {
namespace {

ModelParams identity_params(std::size_t d_e, std::size_t hidden) {
  auto p = ModelParams::init(d_e, hidden, 1);
  std::fill(p.values.begin(), p.values.begin() + static_cast<std::ptrdiff_t>(p.layout.adapter_size()), 0.0);
  for (std::size_t i = 0; i < d_e; ++i) p.values[p.layout.adapter_w() + i * d_e + i] = 1.0;
  return p;
}

TEST(EncoderBank, UnitEmbeddingsAndSeedStability) {
  const auto a = EncoderBank::generate(8, 6, 3, 99);
  const auto b = EncoderBank::generate(8, 6, 3, 99);
  EXPECT_EQ(a.encoder, b.encoder);
  for (std::size_t k = 0; k < 3; ++k)
    for (int g = 0; g < 2; ++g) {
      EXPECT_NEAR(norm2(a.group_embeddings[k][g]), 1.0, 1e-9);
      EXPECT_EQ(a.group_embeddings[k][g], b.group_embeddings[k][g]);
    }
  for (int y = 0; y < 2; ++y) EXPECT_NEAR(norm2(a.class_embeddings[y]), 1.0, 1e-9);
  EXPECT_NE(EncoderBank::generate(8, 6, 3, 100).encoder, a.encoder);
}

TEST(EncodeVisual, IdentityAdapterAndBias) {
  const auto bank = EncoderBank::generate(5, 4, 1, 3);
  auto p = identity_params(4, 3);
  const std::vector<double> x{0.3, -1.0, 2.0, 0.5, 0.0};
  const auto z = encode_visual(p, bank, x);
  const auto ex = matvec(bank.encoder, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z[i], ex[i], 1e-15);
  for (std::size_t i = 0; i < 4; ++i) p.values[p.layout.adapter_b() + i] = double(i) - 1.5;
  const auto zb = encode_visual(p, bank, std::vector<double>(5, 0.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(zb[i], double(i) - 1.5);
  EXPECT_THROW(encode_visual(p, bank, std::vector<double>(4, 0.0)), InvalidArgument);
}

TEST(EncodeVisual, MatchesTripleLoopOracle) {
  Rng rng(12);
  const auto bank = EncoderBank::generate(7, 5, 2, 12);
  auto p = ModelParams::init(5, 4, 12);
  for (auto& v : p.values) v = rng.normal();
  std::vector<double> x(7);
  for (auto& v : x) v = rng.normal();
  std::vector<double> expect(5, 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    expect[r] = p.adapter_b(r);
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t j = 0; j < 7; ++j) expect[r] += p.adapter_w(r, c) * bank.encoder(c, j) * x[j];
  }
  const auto z = encode_visual(p, bank, x);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(z[r], expect[r], 1e-12);
}

// A bank whose group embeddings are the first two basis vectors.
EncoderBank basis_bank(std::size_t d, std::size_t K, double tau) {
  auto bank = EncoderBank::generate(d, d, K, 5, tau);
  for (std::size_t k = 0; k < K; ++k)
    for (int g = 0; g < 2; ++g) {
      bank.group_embeddings[k][g].assign(d, 0.0);
      bank.group_embeddings[k][g][g] = 1.0;
    }
  return bank;
}

TEST(GroupRelevance, Examples) {
  const auto bank = basis_bank(3, 1, 1.0);
  const std::vector<double> orth{0.0, 0.0, 2.0};
  auto p = group_relevance(orth, bank, 0);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  const std::vector<double> first{3.0, 0.0, 0.0};  // cos = (1, 0)
  p = group_relevance(first, bank, 0);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
  const auto cold = basis_bank(3, 1, 0.07);
  p = group_relevance(std::vector<double>{1.0, 1.0, 0.3}, cold, 0);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_THROW(group_relevance(std::vector<double>(3, 0.0), bank, 0), InvalidArgument);
  EXPECT_THROW(group_relevance(orth, bank, 1), InvalidArgument);
}

TEST(LocalFairness, ClosedFormAndWeighting) {
  // Attribute 1 embeddings chosen so Pr(A^1) = [0.9, 0.1]; attribute 2 orthogonal.
  // With tau = 0.5 a cosine gap of ln(9) / 2 gives softmax [0.9, 0.1]; z = e0,
  // t^1_0 = e0 and t^1_1 has cosine 1 - ln(9) / 2 with e0.
  auto bank = basis_bank(3, 2, 0.5);
  const double c = 1.0 - std::log(9.0) / 2.0;
  bank.group_embeddings[0][1] = {c, std::sqrt(1.0 - c * c), 0.0};
  bank.group_embeddings[1][0] = {0.0, 1.0, 0.0};
  bank.group_embeddings[1][1] = {0.0, 0.0, 1.0};
  const std::vector<Vector> zs{{1.0, 0.0, 0.0}};
  auto w = LossWeights::uniform(2);
  const auto lf = local_fairness_reg(zs, bank, w);
  EXPECT_NEAR(lf.per_attribute[0], 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-12);
  EXPECT_NEAR(lf.per_attribute[1], 0.0, 1e-15);
  EXPECT_NEAR(lf.value, 0.1840, 1e-4);
  w.alpha = {1.0, 0.0};
  EXPECT_NEAR(local_fairness_reg(zs, bank, w).value, lf.per_attribute[0], 1e-15);
}

TEST(Classify, ZeroOutputWeightsTieToClassZero) {
  const auto bank = EncoderBank::generate(4, 4, 1, 8);
  auto p = ModelParams::init(4, 3, 8);
  for (std::size_t r = 0; r < 3; ++r) p.values[p.layout.w2() + r] = 0.0;
  const auto c = classify(p, bank, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(c.logits[0], c.logits[1]);
  EXPECT_EQ(c.score, 0.5);
  EXPECT_EQ(c.prediction, 0);
}

TEST(Classify, ScoreOfSaturatedLogits) {
  const auto c = detail::finish_classification({5.0, -5.0});
  EXPECT_NEAR(c.score, 4.54e-5, 1e-7);
  EXPECT_EQ(c.prediction, 0);
}

TEST(Classify, ArgmaxOfLogitsMatchesProbabilities) {
  Rng rng(4);
  const auto bank = EncoderBank::generate(4, 4, 1, 4);
  for (int t = 0; t < 50; ++t) {
    auto p = ModelParams::init(4, 6, rng.next_u64());
    std::vector<double> z(4);
    for (auto& v : z) v = rng.normal();
    const auto c = classify(p, bank, z);
    EXPECT_EQ(c.prediction, c.score > 0.5 ? 1 : 0);
  }
}

TEST(Contrastive, Extremes) {
  const auto bank = EncoderBank::generate(3, 3, 1, 2);
  const BinaryColumn y{0, 1};
  std::vector<Vector> same{bank.class_embeddings[0], bank.class_embeddings[1]};
  EXPECT_NEAR(contrastive_loss(same, bank, y), 0.0, 1e-12);
  std::vector<Vector> opp = same;
  for (auto& z : opp)
    for (auto& v : z) v = -v;
  EXPECT_NEAR(contrastive_loss(opp, bank, y), 2.0, 1e-12);
  auto b2 = basis_bank(3, 1, 1.0);
  b2.class_embeddings = {Vector{1, 0, 0}, Vector{0, 1, 0}};
  std::vector<Vector> orth{{0, 0, 1}, {0, 0, 2}};
  EXPECT_NEAR(contrastive_loss(orth, b2, y), 1.0, 1e-15);
  EXPECT_THROW(contrastive_loss(std::vector<Vector>{{0, 0, 0}}, bank, BinaryColumn{0}), InvalidArgument);
}

TEST(SoftGlobalFairness, Examples) {
  const std::vector<double> scores{0.8, 0.6, 0.4, 0.2};
  const BinaryColumn y{1, 0, 1, 0};
  const std::vector<BinaryColumn> a{{0, 0, 1, 1}, {0, 1, 0, 1}};
  auto w = LossWeights::uniform(2);
  w.beta = {1.0, 0.0};
  auto r = soft_global_fairness_reg(scores, y, a, w);
  EXPECT_NEAR(r.value, 0.4, 1e-15);
  EXPECT_NEAR(r.per_attribute[0], 0.4, 1e-15);
  const std::vector<double> flat(4, 0.3);
  w.notion = FairnessNotion::EO;
  EXPECT_EQ(soft_global_fairness_reg(flat, y, a, w).value, 0.0);
  // EO: y=1 rows (0.8 | a=0) vs (0.4 | a=1) -> 0.4; y=0 rows 0.6 vs 0.2 -> 0.4
  r = soft_global_fairness_reg(scores, y, a, w);
  EXPECT_NEAR(r.value, 0.4, 1e-15);
  // Empty cells contribute zero instead of failing.
  const std::vector<BinaryColumn> one_group{{0, 0, 0, 0}, {0, 1, 0, 1}};
  EXPECT_EQ(soft_global_fairness_reg(scores, y, one_group, w).per_attribute[0], 0.0);
}

TEST(TotalLoss, AblationEqualsCrossEntropyBackprop) {
  auto c = oracle::random_gradient_case(3);
  c.weights.lambda_con = c.weights.lambda_lf = c.weights.lambda_gf = 0.0;
  const auto batch = c.batch();
  const auto lg = total_loss_and_grads(c.params, c.bank, batch, c.weights);
  EXPECT_EQ(lg.loss.total, lg.loss.sup);
  double ce = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = encode_visual(c.params, c.bank, batch.x[i]);
    const auto cl = classify(c.params, c.bank, z);
    ce += cross_entropy_with_grad(cl.logits, batch.y[i]).loss / double(batch.size());
  }
  EXPECT_NEAR(lg.loss.sup, ce, 1e-12);
  // Adapter-free part of the gradient only comes from CE here; checked numerically.
  auto f = [&](const std::vector<double>& v) {
    auto p = c.params;
    p.values = v;
    return total_loss_and_grads(p, c.bank, batch, c.weights, false).loss.total;
  };
  EXPECT_LT(oracle::relative_error(lg.grad, oracle::numeric_gradient(f, c.params.values)), 1e-5);
}

TEST(TotalLoss, UniformRelevanceGivesNoLocalGradient) {
  auto c = oracle::random_gradient_case(21);
  // Make every group embedding pair symmetric about every z: t_0 = t_1.
  for (auto& pair : c.bank.group_embeddings) pair[1] = pair[0];
  auto w = c.weights;
  w.lambda_con = 0.0;
  w.lambda_gf = 0.0;
  const auto batch = c.batch();
  const auto with_lf = total_loss_and_grads(c.params, c.bank, batch, w);
  w.lambda_lf = 0.0;
  const auto without = total_loss_and_grads(c.params, c.bank, batch, w);
  EXPECT_NEAR(with_lf.loss.lf, 0.0, 1e-15);
  EXPECT_LT(oracle::relative_error(with_lf.grad, without.grad), 1e-12);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  int pass = 0, skipped = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = oracle::check_gradient(oracle::random_gradient_case(seed));
    if (r.skipped) {
      ++skipped;
      continue;
    }
    pass += r.rel_error < 1e-4;
  }
  EXPECT_GE(pass, 99 - skipped);
  EXPECT_LE(skipped, 5);
}

TEST(TotalLoss, RegularizersNonNegativeAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = oracle::random_gradient_case(seed);
    const auto batch = c.batch();
    const auto a = total_loss_and_grads(c.params, c.bank, batch, c.weights);
    const auto b = total_loss_and_grads(c.params, c.bank, batch, c.weights);
    EXPECT_GE(a.loss.lf, 0.0);
    EXPECT_GE(a.loss.gf, 0.0);
    EXPECT_GE(a.loss.con, 0.0);
    EXPECT_EQ(a.grad, b.grad);
    EXPECT_EQ(a.loss.total, b.loss.total);
  }
}

TEST(TotalLoss, NonFiniteInputNamesTerm) {
  auto c = oracle::random_gradient_case(1);
  c.params.values[c.params.layout.b2()] = INFINITY;
  try {
    total_loss_and_grads(c.params, c.bank, c.batch(), c.weights);
    FAIL() << "expected a numeric failure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("L_"), std::string::npos);
  } catch (const InvalidArgument&) {
    // softmax rejects the infinite logit before the loss is formed; also acceptable
  }
}

TEST(LossWeights, Validation) {
  auto w = LossWeights::uniform(2);
  EXPECT_NO_THROW(w.validate(2));
  EXPECT_THROW(w.validate(3), InvalidArgument);
  w.alpha = {0.7, 0.7};
  EXPECT_THROW(w.validate(2), InvalidArgument);
  w = LossWeights::uniform(2);
  w.lambda_gf = -1;
  EXPECT_THROW(w.validate(2), InvalidArgument);
  EXPECT_THROW(parse_notion("xx"), InvalidArgument);
}

TEST(Serialization, RoundTripIsBitIdentical) {
  const auto c = oracle::random_gradient_case(17);
  std::stringstream ss;
  write_params(ss, c.params, 17);
  const auto loaded = read_params(ss);
  EXPECT_EQ(loaded.seed, 17u);
  EXPECT_EQ(loaded.params, c.params);
  const auto batch = c.batch();
  const auto a = total_loss_and_grads(c.params, c.bank, batch, c.weights);
  const auto b = total_loss_and_grads(loaded.params, c.bank, batch, c.weights);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(Serialization, RejectsCorruptInput) {
  std::stringstream bad("NOTPARAMS");
  EXPECT_THROW(read_params(bad), DataError);
  const auto p = ModelParams::init(3, 2, 1);
  std::stringstream ss;
  write_params(ss, p, 1);
  auto s = ss.str();
  s.resize(s.size() - 4);
  std::stringstream truncated(s);
  EXPECT_THROW(read_params(truncated), DataError);
}

}  // namespace
}  // namespace ffc
