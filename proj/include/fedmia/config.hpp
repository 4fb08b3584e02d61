#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmia/federation.hpp"

namespace fedmia {

// Raised for anything wrong with a config: syntax, unknown keys, bad ranges.
// The CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { Synthetic, Idx, Csv };

struct SyntheticSpec {
  int samples = 0;
  int features = 0;
  int classes = 0;
  double separation = 0.0;
  bool operator==(const SyntheticSpec&) const = default;
};

struct IdxSpec {
  std::string train_images;
  std::string train_labels;
  std::string test_images;  // optional; empty means carve test from the pool
  std::string test_labels;
  bool operator==(const IdxSpec&) const = default;
};

struct CsvSpec {
  std::string path;
  bool operator==(const CsvSpec&) const = default;
};

// One experiment, fully declarative. Parsed from flat `key = value` lines
// with `#` comment lines; unknown keys are errors.
struct ExperimentConfig {
  DatasetKind kind = DatasetKind::Synthetic;
  SyntheticSpec synthetic;
  IdxSpec idx;
  CsvSpec csv;

  std::vector<int> layer_dims;  // empty = auto ([in,32,C] synthetic/csv, [in,64,C] idx)

  double learning_rate = 0.05;
  int batch_size = 32;
  int local_epochs = 1;

  int n_clients = 2;
  int rounds = 30;
  AggregationStrategy strategy = AggregationStrategy::FedAvg;
  double reference_fraction = 0.1;
  CorrectConfidentMode cc_mode = CorrectConfidentMode::Truth;
  bool checkpoints = false;

  double test_fraction = 0.15;     // ignored when idx test files are given
  double holdout_fraction = 0.2;   // MIA non-member pool
  double shadow_fraction = 0.25;   // adversary's distribution-matched pool

  int k_shadows = 4;
  int eval_size = 500;
  int mia_cadence = 1;    // evaluate MIA every m rounds; 0 = final report only
  int shadow_epochs = 0;  // 0 = auto: rounds * local_epochs

  std::uint64_t seed = 1;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Canonical form: fixed key order, shortest round-trip floats. Parsing the
// serialization yields an equal config.
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a over the canonical serialization minus the output line (where the
// results land does not change what they are), 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace fedmia
