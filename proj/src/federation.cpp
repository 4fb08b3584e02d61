#include "fedmia/federation.hpp"

#include <stdexcept>

#include "fedmia/parallel.hpp"

namespace fedmia {

std::string to_string(AggregationStrategy strategy) {
  switch (strategy) {
    case AggregationStrategy::FedAvg: return "fedavg";
    case AggregationStrategy::First: return "first";
    case AggregationStrategy::RoundRobin: return "round_robin";
    case AggregationStrategy::MostConfident: return "most_confident";
    case AggregationStrategy::CorrectConfident: return "correct_confident";
  }
  throw std::logic_error("unreachable strategy");
}

std::optional<AggregationStrategy> strategy_from_string(std::string_view text) {
  if (text == "fedavg") return AggregationStrategy::FedAvg;
  if (text == "first") return AggregationStrategy::First;
  if (text == "round_robin") return AggregationStrategy::RoundRobin;
  if (text == "most_confident") return AggregationStrategy::MostConfident;
  if (text == "correct_confident") return AggregationStrategy::CorrectConfident;
  return std::nullopt;
}

DenseNet fedavg_aggregate(const std::vector<DenseNet>& client_params,
                          const std::vector<long>& client_sizes) {
  if (client_params.empty()) throw std::invalid_argument("fedavg_aggregate: no clients");
  if (client_params.size() != client_sizes.size()) {
    throw std::invalid_argument("fedavg_aggregate: params/sizes length mismatch");
  }
  const std::vector<int> dims = client_params.front().layer_dims();
  long total = 0;
  for (std::size_t i = 0; i < client_params.size(); ++i) {
    if (client_params[i].layer_dims() != dims) {
      throw std::invalid_argument("fedavg_aggregate: layer shape mismatch at client " +
                                  std::to_string(i));
    }
    if (client_sizes[i] < 1) {
      throw std::invalid_argument("fedavg_aggregate: nonpositive size at client " +
                                  std::to_string(i));
    }
    total += client_sizes[i];
  }

  // Normalized weights keep the single-client case an exact identity.
  DenseNet out;
  out.layers.resize(client_params.front().layers.size());
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    const auto& first = client_params.front().layers[l];
    out.layers[l].weight = Eigen::MatrixXd::Zero(first.weight.rows(), first.weight.cols());
    out.layers[l].bias = Eigen::VectorXd::Zero(first.bias.size());
  }
  for (std::size_t i = 0; i < client_params.size(); ++i) {
    const double w = static_cast<double>(client_sizes[i]) / static_cast<double>(total);
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      out.layers[l].weight += w * client_params[i].layers[l].weight;
      out.layers[l].bias += w * client_params[i].layers[l].bias;
    }
  }
  return out;
}

int select_first(const std::vector<ClientState>& clients) {
  if (clients.empty()) throw std::invalid_argument("select_first: no clients");
  return 0;
}

int select_round_robin(int round, int n_clients) {
  if (n_clients < 1) throw std::invalid_argument("select_round_robin: n_clients must be >= 1");
  if (round < 0) throw std::invalid_argument("select_round_robin: round must be >= 0");
  return round % n_clients;
}

namespace {

Eigen::MatrixXd reference_probs(const ClientState& client, const Eigen::MatrixXd& reference_x) {
  return softmax_rows(forward(client.params, reference_x));
}

int best_client(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace

int select_most_confident(const std::vector<ClientState>& clients,
                          const Eigen::MatrixXd& reference_x,
                          const std::vector<int>& reference_y) {
  if (clients.empty()) throw std::invalid_argument("select_most_confident: no clients");
  if (reference_x.rows() == 0) {
    throw std::invalid_argument("select_most_confident: empty reference set");
  }
  (void)reference_y;
  std::vector<double> scores;
  scores.reserve(clients.size());
  for (const auto& client : clients) {
    scores.push_back(reference_probs(client, reference_x).rowwise().maxCoeff().mean());
  }
  return best_client(scores);
}

int select_correct_confident(const std::vector<ClientState>& clients,
                             const Eigen::MatrixXd& reference_x,
                             const std::vector<int>& reference_y, CorrectConfidentMode mode) {
  if (clients.empty()) throw std::invalid_argument("select_correct_confident: no clients");
  const long n_ref = reference_x.rows();
  if (n_ref == 0) throw std::invalid_argument("select_correct_confident: empty reference set");

  std::vector<std::vector<int>> predictions(clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    predictions[c] = predict_labels(clients[c].params, reference_x);
  }

  // The mask target: true labels, or the clients' own majority vote.
  std::vector<int> target(static_cast<std::size_t>(n_ref));
  if (mode == CorrectConfidentMode::Truth) {
    if (static_cast<long>(reference_y.size()) != n_ref) {
      throw std::invalid_argument("select_correct_confident: reference label count mismatch");
    }
    target = reference_y;
  } else {
    const int n_classes = static_cast<int>(
        forward(clients.front().params, reference_x.topRows(1)).cols());
    for (long i = 0; i < n_ref; ++i) {
      std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
      for (const auto& preds : predictions) ++votes[static_cast<std::size_t>(preds[i])];
      int majority = 0;
      for (int k = 1; k < n_classes; ++k) {
        if (votes[static_cast<std::size_t>(k)] > votes[static_cast<std::size_t>(majority)]) {
          majority = k;
        }
      }
      target[static_cast<std::size_t>(i)] = majority;
    }
  }

  std::vector<double> scores;
  scores.reserve(clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const Eigen::MatrixXd probs = reference_probs(clients[c], reference_x);
    double sum = 0.0;
    long correct = 0;
    for (long i = 0; i < n_ref; ++i) {
      if (predictions[c][static_cast<std::size_t>(i)] == target[static_cast<std::size_t>(i)]) {
        sum += probs.row(i).maxCoeff();
        ++correct;
      }
    }
    scores.push_back(correct == 0 ? 0.0 : sum / static_cast<double>(correct));
  }
  return best_client(scores);
}

RoundResult run_round(const DenseNet& global, const PartitionPlan& plan, const Dataset& train,
                      const TrainConfig& cfg, AggregationStrategy strategy, int round,
                      const Eigen::MatrixXd& reference_x, const std::vector<int>& reference_y,
                      CorrectConfidentMode cc_mode, int threads) {
  if (plan.source_size != train.size()) {
    throw std::invalid_argument("run_round: plan does not match dataset size");
  }
  const int n_clients = plan.n_clients;
  RoundResult result;
  result.clients.resize(static_cast<std::size_t>(n_clients));

  parallel_for(static_cast<std::size_t>(n_clients), threads, [&](std::size_t c) {
    const auto& shard = plan.assignments[c];
    Eigen::MatrixXd x(shard.size(), train.features.cols());
    std::vector<int> y(shard.size());
    for (std::size_t i = 0; i < shard.size(); ++i) {
      x.row(static_cast<long>(i)) = train.features.row(shard[i]);
      y[i] = train.labels[static_cast<std::size_t>(shard[i])];
    }
    TrainConfig local_cfg = cfg;
    local_cfg.seed = client_seed(cfg.seed, round, static_cast<int>(c));
    result.clients[c] = ClientState{static_cast<int>(c), shard, train_local(global, x, y, local_cfg)};
  });

  result.record.round = round;
  result.record.strategy = strategy;
  switch (strategy) {
    case AggregationStrategy::FedAvg: {
      std::vector<DenseNet> params;
      std::vector<long> sizes;
      params.reserve(result.clients.size());
      for (const auto& client : result.clients) {
        params.push_back(client.params);
        sizes.push_back(static_cast<long>(client.shard.size()));
      }
      result.global = fedavg_aggregate(params, sizes);
      break;
    }
    case AggregationStrategy::First:
      result.record.selected_client = select_first(result.clients);
      break;
    case AggregationStrategy::RoundRobin:
      result.record.selected_client = select_round_robin(round, n_clients);
      break;
    case AggregationStrategy::MostConfident:
      result.record.selected_client =
          select_most_confident(result.clients, reference_x, reference_y);
      break;
    case AggregationStrategy::CorrectConfident:
      result.record.selected_client =
          select_correct_confident(result.clients, reference_x, reference_y, cc_mode);
      break;
  }
  if (result.record.selected_client) {
    // The retained model is exactly one client's parameters, untouched.
    result.global = result.clients[static_cast<std::size_t>(*result.record.selected_client)].params;
  }
  return result;
}

FederationResult run_federation(const Dataset& train, const PartitionPlan& plan,
                                const Dataset& test, const Eigen::MatrixXd& reference_x,
                                const std::vector<int>& reference_y,
                                const FederationOptions& opt, const RoundCallback& on_round) {
  if (opt.rounds < 0) throw std::invalid_argument("run_federation: rounds must be >= 0");
  FederationResult result;
  result.final_model = init_params(opt.layer_dims, derive_seed(opt.train.seed, "init"));
  result.rounds.reserve(static_cast<std::size_t>(opt.rounds));

  for (int round = 0; round < opt.rounds; ++round) {
    RoundResult rr = run_round(result.final_model, plan, train, opt.train, opt.strategy, round,
                               reference_x, reference_y, opt.cc_mode, opt.threads);
    result.final_model = std::move(rr.global);
    rr.record.train_accuracy = accuracy(result.final_model, train.features, train.labels);
    rr.record.test_accuracy = accuracy(result.final_model, test.features, test.labels);
    if (on_round) on_round(round, result.final_model, rr.record);
    result.rounds.push_back(std::move(rr.record));
    if (round + 1 == opt.rounds) result.final_clients = std::move(rr.clients);
  }
  return result;
}

}  // namespace fedmia
