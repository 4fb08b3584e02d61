#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedmia/attack.hpp"
#include "fedmia/config.hpp"
#include "fedmia/dataset.hpp"
#include "fedmia/federation.hpp"
#include "fedmia/metrics.hpp"

namespace fedmia {

inline constexpr const char* kToolVersion = "fedmia 0.1.0";

// Deterministic carve of the source pool, in this order over a seeded shuffle
// of all indices: shadow pool, MIA holdout, test set (when not provided by
// idx files), then the training pool, of which reference_fraction goes to the
// server's reference split and the rest is partitioned across clients.
struct DataLayout {
  Dataset pool;
  Dataset test;
  std::vector<int> shadow;        // indices into pool
  std::vector<int> holdout;
  std::vector<int> reference;
  std::vector<int> client_train;
};
DataLayout prepare_data(const ExperimentConfig& config);

// Resolves layer_dims = auto against the loaded dataset.
std::vector<int> resolve_layer_dims(const ExperimentConfig& config, int n_features,
                                    int n_classes);

struct ExperimentResult {
  std::string hash;
  ExperimentConfig config;
  std::vector<RoundRecord> rounds;
  MiaReport shadow_report;     // final global model vs shadow-classifier attack
  MiaReport threshold_report;  // final global model vs threshold baseline
  DenseNet final_model;
  std::vector<ClientState> final_clients;  // empty when rounds == 0
  std::filesystem::path run_dir;
};

// Full pipeline for one config: data, shadow attack, federation with per-round
// MIA at the configured cadence, metrics figures, and atomic file output under
// <output>/<config-hash>/. Byte-identical outputs for identical configs, for
// any thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 1);

struct SweepResult {
  std::vector<ExperimentResult> runs;
};

// Runs a set of configs that share a dataset spec and architecture but vary
// clients, strategy, or seed. Runs execute concurrently when threads > 1.
SweepResult run_sweep(const std::vector<ExperimentConfig>& configs, int threads = 1);

// Reads every <hash>/rounds.csv + attack.json under result_root and writes
// report/summary.json plus report/figures/{trajectories,convergence}.csv.
// Regenerating from the same inputs is byte-identical.
void write_report(const std::filesystem::path& result_root);

// rounds.csv column order is part of the external interface.
inline constexpr const char* kRoundsCsvHeader =
    "config_hash,strategy,n_clients,round,selected_client,train_acc,test_acc,"
    "mia_acc,member_conf,nonmember_conf";

}  // namespace fedmia
