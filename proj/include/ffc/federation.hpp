#pragma once

// FedAvg orchestration: every client trains E local epochs per round on its
// own split, the server takes the size-weighted mean of the parameter vectors
// and evaluates on its held-out test split.

#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"
#include "ffc/fairness.hpp"
#include "ffc/model.hpp"
#include "ffc/numkit.hpp"
#include "ffc/scmdata.hpp"

namespace ffc {

struct FLConfig {
  std::size_t clients = 5;
  std::size_t rounds = 4;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  AdamWConfig optimizer;
  // Learning rate for the classifier slice; the adapter uses optimizer.lr.
  std::optional<double> classifier_lr;
  LossWeights weights = LossWeights::uniform(1);
  bool parallel = false;

  void validate(std::size_t num_attributes) const {
    if (clients == 0) throw InvalidArgument("FLConfig: clients must be >= 1");
    if (rounds == 0) throw InvalidArgument("FLConfig: rounds must be >= 1");
    if (local_epochs == 0) throw InvalidArgument("FLConfig: local epochs must be >= 1");
    if (batch_size == 0) throw InvalidArgument("FLConfig: batch size must be >= 1");
    if (!(optimizer.lr > 0.0)) throw InvalidArgument("FLConfig: learning rate must be > 0");
    if (classifier_lr && !(*classifier_lr > 0.0)) throw InvalidArgument("FLConfig: classifier lr must be > 0");
    weights.validate(num_attributes);
  }
};

struct ClientState {
  std::size_t id = 0;
  Dataset train;
  Dataset val;
  ModelParams params;
  OptimizerState optimizer;
  Rng rng;

  // The client Rng uses stream id = client id under the training seed.
  static ClientState create(std::size_t id, Dataset train, Dataset val, const ModelParams& init,
                            const FLConfig& config) {
    if (train.size() == 0) throw InvalidArgument("client " + std::to_string(id) + ": empty train set");
    ClientState c{id, std::move(train), std::move(val), init, OptimizerState::for_params(init.values.size(), config.optimizer),
                  Rng(config.seed, id)};
    if (config.classifier_lr) {
      const auto& L = init.layout;
      c.optimizer.groups.push_back({L.w1(), L.size() - L.w1(), *config.classifier_lr});
    }
    return c;
  }
};

// Mean of each loss component over the batches of one epoch (or a full pass).
struct LossTrace {
  std::vector<LossBreakdown> epochs;  // train, one per local epoch
  std::optional<LossBreakdown> val;   // full-batch validation loss after training
};

namespace detail {

inline Batch make_batch(const Dataset& d, std::span<const std::size_t> rows) {
  Batch b;
  b.a.assign(d.num_attributes(), {});
  for (auto r : rows) {
    b.x.push_back(d.features.row(r));
    b.y.push_back(d.label[r]);
    for (std::size_t k = 0; k < d.num_attributes(); ++k) b.a[k].push_back(d.attributes[k][r]);
  }
  return b;
}

inline Batch full_batch(const Dataset& d) {
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return make_batch(d, rows);
}

inline void accumulate(LossBreakdown& acc, const LossBreakdown& l, double w) {
  acc.total += w * l.total;
  acc.sup += w * l.sup;
  acc.con += w * l.con;
  acc.lf += w * l.lf;
  acc.gf += w * l.gf;
  acc.lf_per_attribute.resize(l.lf_per_attribute.size(), 0.0);
  acc.gf_per_attribute.resize(l.gf_per_attribute.size(), 0.0);
  for (std::size_t k = 0; k < l.lf_per_attribute.size(); ++k) acc.lf_per_attribute[k] += w * l.lf_per_attribute[k];
  for (std::size_t k = 0; k < l.gf_per_attribute.size(); ++k) acc.gf_per_attribute[k] += w * l.gf_per_attribute[k];
}

}  // namespace detail

// E epochs of shuffled mini-batch AdamW on the client's own data. Epoch
// losses are sample-weighted means of the per-batch losses.
inline LossTrace local_train(ClientState& client, const EncoderBank& bank, const FLConfig& config,
                             std::size_t epochs) {
  const auto& train = client.train;
  if (train.size() == 0) throw InvalidArgument("local_train: client " + std::to_string(client.id) + " has no data");
  LossTrace trace;
  std::vector<std::size_t> order(train.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    // Fresh permutation per epoch, so splitting epochs across calls does not change the trajectory.
    std::iota(order.begin(), order.end(), std::size_t{0});
    client.rng.shuffle(std::span<std::size_t>(order));
    LossBreakdown epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto len = std::min(config.batch_size, order.size() - start);
      const auto batch = detail::make_batch(train, std::span<const std::size_t>(order).subspan(start, len));
      const auto lg = total_loss_and_grads(client.params, bank, batch, config.weights);
      detail::accumulate(epoch, lg.loss, double(len) / double(order.size()));
      adamw_step(client.params.values, lg.grad, client.optimizer);
    }
    trace.epochs.push_back(std::move(epoch));
  }
  if (client.val.size() > 0)
    trace.val = total_loss_and_grads(client.params, bank, detail::full_batch(client.val), config.weights, false).loss;
  return trace;
}

inline LossTrace local_train(ClientState& client, const EncoderBank& bank, const FLConfig& config) {
  return local_train(client, bank, config, config.local_epochs);
}

// W = sum_s (|D_s| / sum |D_s|) W_s, accumulated in client-index order.
inline ModelParams aggregate(std::span<const ModelParams> params, std::span<const std::size_t> sizes) {
  if (params.empty()) throw InvalidArgument("aggregate: no client parameters");
  if (params.size() != sizes.size()) throw InvalidArgument("aggregate: one size per client required");
  double total = 0.0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    if (!(params[s].layout == params[0].layout) || params[s].values.size() != params[0].values.size())
      throw InvalidArgument("aggregate: client " + std::to_string(s) + " has a different parameter shape");
    total += double(sizes[s]);
  }
  if (total == 0.0) throw InvalidArgument("aggregate: total client size is zero");
  ModelParams out = params[0];
  const double w0 = double(sizes[0]) / total;
  for (auto& v : out.values) v *= w0;
  for (std::size_t s = 1; s < params.size(); ++s) {
    const double w = double(sizes[s]) / total;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * params[s].values[i];
  }
  return out;
}

// Hard predictions of the classifier path on a dataset.
inline PredictionSet predict(const ModelParams& params, const EncoderBank& bank, const Dataset& data,
                             bool cosine_prediction = false) {
  PredictionSet ps;
  ps.y_true = data.label;
  ps.attribute_names = data.attribute_names();
  ps.attributes = data.attributes;
  ps.y_pred.reserve(data.size());
  ps.y_score.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto z = encode_visual(params, bank, data.features.row(i));
    const auto c = classify(params, bank, z);
    ps.y_pred.push_back(cosine_prediction ? predict_by_cosine(z, bank) : c.prediction);
    ps.y_score.push_back(c.score);
  }
  return ps;
}

struct Evaluation {
  FairnessReport hard;
  SoftFairness soft;  // training-time relaxation on the same split, gradient omitted
};

inline Evaluation evaluate(const ModelParams& params, const EncoderBank& bank, const Dataset& test,
                           const LossWeights& weights, bool cosine_prediction = false) {
  const auto ps = predict(params, bank, test, cosine_prediction);
  Evaluation e;
  e.hard = evaluate_fairness(ps);
  e.soft = soft_global_fairness_reg(ps.y_score, ps.y_true, ps.attributes, weights);
  e.soft.grad.clear();
  return e;
}

struct ClientRoundLog {
  std::size_t client = 0;
  std::size_t train_size = 0;
  LossTrace trace;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<ClientRoundLog> clients;
  Evaluation global;
};

struct FederationResult {
  ModelParams params;
  std::vector<RoundLog> rounds;
  Evaluation final_eval;
};

// Broadcast -> local training -> weighted aggregation -> server evaluation,
// every round. Parallel training runs one thread per client; the outcome does
// not depend on the schedule.
inline FederationResult run_federation(std::vector<ClientState>& clients, const EncoderBank& bank,
                                       const FLConfig& config, const Dataset& server_test,
                                       bool cosine_prediction = false) {
  if (clients.empty()) throw InvalidArgument("run_federation: no clients");
  config.validate(bank.num_attributes());
  FederationResult result;
  result.params = clients.front().params;
  std::vector<std::size_t> sizes;
  for (const auto& c : clients) sizes.push_back(c.train.size());

  for (std::size_t t = 0; t < config.rounds; ++t) {
    RoundLog log;
    log.round = t;
    log.clients.resize(clients.size());
    for (auto& c : clients) c.params = result.params;

    auto work = [&](std::size_t s) {
      log.clients[s] = {clients[s].id, clients[s].train.size(), local_train(clients[s], bank, config)};
    };
    if (config.parallel && clients.size() > 1) {
      std::vector<std::exception_ptr> errors(clients.size());
      std::vector<std::thread> threads;
      for (std::size_t s = 0; s < clients.size(); ++s)
        threads.emplace_back([&, s] {
          try {
            work(s);
          } catch (...) {
            errors[s] = std::current_exception();
          }
        });
      for (auto& th : threads) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    } else {
      for (std::size_t s = 0; s < clients.size(); ++s) work(s);
    }

    std::vector<ModelParams> locals;
    for (const auto& c : clients) locals.push_back(c.params);
    result.params = aggregate(locals, sizes);
    result.params.validate();
    log.global = evaluate(result.params, bank, server_test, config.weights, cosine_prediction);
    result.rounds.push_back(std::move(log));
  }
  result.final_eval = result.rounds.back().global;
  return result;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::ordered_json& j, const LossBreakdown& l) {
  j = nlohmann::ordered_json{{"total", l.total},
                             {"sup", l.sup},
                             {"con", l.con},
                             {"lf", l.lf},
                             {"gf", l.gf},
                             {"lf_per_attribute", l.lf_per_attribute},
                             {"gf_per_attribute", l.gf_per_attribute}};
}

inline void to_json(nlohmann::ordered_json& j, const Evaluation& e) {
  j = nlohmann::ordered_json{{"hard", e.hard},
                             {"soft", {{"value", e.soft.value}, {"per_attribute", e.soft.per_attribute}}}};
}

inline void to_json(nlohmann::ordered_json& j, const RoundLog& r) {
  j = nlohmann::ordered_json{{"round", r.round}, {"clients", nlohmann::ordered_json::array()}, {"global", r.global}};
  for (const auto& c : r.clients) {
    nlohmann::ordered_json cj{{"client", c.client}, {"train_size", c.train_size}, {"epochs", c.trace.epochs}};
    if (c.trace.val) cj["val"] = *c.trace.val;
    j["clients"].push_back(std::move(cj));
  }
}

}  // namespace ffc
