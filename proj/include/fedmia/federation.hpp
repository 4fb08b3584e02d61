#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedmia/dataset.hpp"
#include "fedmia/model.hpp"
#include "fedmia/rng.hpp"

namespace fedmia {

// FedAvg averages all client parameters; the other four retain exactly one
// client's model each round.
enum class AggregationStrategy { FedAvg, First, RoundRobin, MostConfident, CorrectConfident };

std::string to_string(AggregationStrategy strategy);
std::optional<AggregationStrategy> strategy_from_string(std::string_view text);

// How the correct-confident score masks the reference set: against the true
// labels, or against the majority label voted by the clients themselves.
enum class CorrectConfidentMode { Truth, Agreement };

struct ClientState {
  int client_id = 0;
  std::vector<int> shard;  // indices into the training pool, from the plan
  DenseNet params;         // after local training this round
};

// Per-round snapshot. MIA fields stay empty until the harness fills them.
struct RoundRecord {
  int round = 0;
  AggregationStrategy strategy = AggregationStrategy::FedAvg;
  std::optional<int> selected_client;  // present iff strategy != FedAvg
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> mia_accuracy;
  std::optional<double> mean_member_confidence;
  std::optional<double> mean_nonmember_confidence;
};

// Size-weighted mean of client parameters. Weights are normalized first and
// the reduction runs in ascending client order, so the result is bitwise
// stable and a single client passes through unchanged.
DenseNet fedavg_aggregate(const std::vector<DenseNet>& client_params,
                          const std::vector<long>& client_sizes);

int select_first(const std::vector<ClientState>& clients);
int select_round_robin(int round, int n_clients);

// Client whose model has the highest mean max-softmax confidence over the
// reference set; ties go to the lowest client id.
int select_most_confident(const std::vector<ClientState>& clients,
                          const Eigen::MatrixXd& reference_x,
                          const std::vector<int>& reference_y);

// Same statistic but averaged only over reference samples the client gets
// right (per the mode); a client with no correct predictions scores zero.
int select_correct_confident(const std::vector<ClientState>& clients,
                             const Eigen::MatrixXd& reference_x,
                             const std::vector<int>& reference_y,
                             CorrectConfidentMode mode = CorrectConfidentMode::Truth);

// Seed for one client's local training in one round. Part of the recorded
// contract: hash(base_seed, round, client_id) via the derive_seed chain.
inline std::uint64_t client_seed(std::uint64_t base_seed, int round, int client_id) {
  return derive_seed(base_seed, "client",
                     {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client_id)});
}

struct RoundResult {
  DenseNet global;
  RoundRecord record;
  std::vector<ClientState> clients;
};

// One synchronous round: every client trains from the same incoming global
// parameters on its own shard, then the strategy aggregates. Client training
// may fan out over `threads` workers; results merge in client order, so the
// outcome is identical to the serial schedule.
RoundResult run_round(const DenseNet& global, const PartitionPlan& plan, const Dataset& train,
                      const TrainConfig& cfg, AggregationStrategy strategy, int round,
                      const Eigen::MatrixXd& reference_x, const std::vector<int>& reference_y,
                      CorrectConfidentMode cc_mode = CorrectConfidentMode::Truth,
                      int threads = 1);

struct FederationOptions {
  std::vector<int> layer_dims;
  TrainConfig train;  // train.seed is the federation base seed
  AggregationStrategy strategy = AggregationStrategy::FedAvg;
  CorrectConfidentMode cc_mode = CorrectConfidentMode::Truth;
  int rounds = 0;
  int threads = 1;
};

struct FederationResult {
  std::vector<RoundRecord> rounds;
  DenseNet final_model;
  std::vector<ClientState> final_clients;  // empty when rounds == 0
};

// Called after each round with the new global model; may fill the record's
// MIA fields.
using RoundCallback = std::function<void(int round, const DenseNet& global, RoundRecord& record)>;

// Runs opt.rounds rounds from a fresh init (seed derived from train.seed),
// recording train/test accuracy per round. Deterministic given the options,
// regardless of thread count.
FederationResult run_federation(const Dataset& train, const PartitionPlan& plan,
                                const Dataset& test, const Eigen::MatrixXd& reference_x,
                                const std::vector<int>& reference_y,
                                const FederationOptions& opt,
                                const RoundCallback& on_round = {});

}  // namespace fedmia
