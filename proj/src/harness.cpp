#include "fedmia/harness.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedmia/parallel.hpp"
#include "fedmia/rng.hpp"
#include "fedmia/util.hpp"

namespace fedmia {

namespace {

Dataset load_source(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case DatasetKind::Synthetic:
      return generate_synthetic(cfg.synthetic.samples, cfg.synthetic.features,
                                cfg.synthetic.classes, cfg.synthetic.separation,
                                derive_seed(cfg.seed, "data"));
    case DatasetKind::Idx:
      return load_idx(cfg.idx.train_images, cfg.idx.train_labels);
    case DatasetKind::Csv:
      return load_csv(cfg.csv.path);
  }
  throw std::logic_error("unreachable dataset kind");
}

}  // namespace

DataLayout prepare_data(const ExperimentConfig& cfg) {
  DataLayout layout;
  layout.pool = load_source(cfg);
  const long pool_size = layout.pool.size();

  const bool external_test = cfg.kind == DatasetKind::Idx && !cfg.idx.test_images.empty();
  std::vector<int> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "splits"));
  rng.shuffle(order);

  auto take = [&order](long count, std::size_t& cursor) {
    std::vector<int> slice(order.begin() + static_cast<long>(cursor),
                           order.begin() + static_cast<long>(cursor) + count);
    cursor += static_cast<std::size_t>(count);
    return slice;
  };

  std::size_t cursor = 0;
  layout.shadow = take(static_cast<long>(pool_size * cfg.shadow_fraction), cursor);
  layout.holdout = take(static_cast<long>(pool_size * cfg.holdout_fraction), cursor);
  std::vector<int> test_indices;
  if (external_test) {
    layout.test = load_idx(cfg.idx.test_images, cfg.idx.test_labels);
    if (layout.test.features.cols() != layout.pool.features.cols()) {
      throw ConfigError("config: idx test feature width does not match the training files");
    }
  } else {
    test_indices = take(static_cast<long>(pool_size * cfg.test_fraction), cursor);
    layout.test = layout.pool.subset(test_indices);
    layout.test.name = layout.pool.name + "_test";
  }
  const long remaining = pool_size - static_cast<long>(cursor);
  layout.reference = take(static_cast<long>(remaining * cfg.reference_fraction), cursor);
  layout.client_train = take(remaining - static_cast<long>(layout.reference.size()), cursor);

  if (static_cast<long>(layout.client_train.size()) < cfg.n_clients) {
    throw ConfigError("config: training pool of " +
                      std::to_string(layout.client_train.size()) +
                      " samples cannot feed " + std::to_string(cfg.n_clients) + " clients");
  }
  if (cfg.eval_size > static_cast<int>(layout.client_train.size()) ||
      cfg.eval_size > static_cast<int>(layout.holdout.size())) {
    throw ConfigError("config: key 'attack.eval_size': " + std::to_string(cfg.eval_size) +
                      " exceeds a membership population (members=" +
                      std::to_string(layout.client_train.size()) +
                      ", holdout=" + std::to_string(layout.holdout.size()) + ")");
  }
  if ((cfg.strategy == AggregationStrategy::MostConfident ||
       cfg.strategy == AggregationStrategy::CorrectConfident) &&
      layout.reference.empty()) {
    throw ConfigError(
        "config: key 'federation.reference_fraction': confidence-based selection "
        "needs a non-empty reference split");
  }
  return layout;
}

std::vector<int> resolve_layer_dims(const ExperimentConfig& cfg, int n_features, int n_classes) {
  if (!cfg.layer_dims.empty()) {
    if (cfg.layer_dims.front() != n_features) {
      throw ConfigError("config: key 'model.layer_dims': input dim " +
                        std::to_string(cfg.layer_dims.front()) + " does not match dataset (" +
                        std::to_string(n_features) + " features)");
    }
    if (cfg.layer_dims.back() != n_classes) {
      throw ConfigError("config: key 'model.layer_dims': output dim " +
                        std::to_string(cfg.layer_dims.back()) + " does not match dataset (" +
                        std::to_string(n_classes) + " classes)");
    }
    return cfg.layer_dims;
  }
  const int hidden = cfg.kind == DatasetKind::Idx ? 64 : 32;
  return {n_features, hidden, n_classes};
}

namespace {

std::string optional_int_field(const std::optional<int>& value) {
  return value ? std::to_string(*value) : std::string();
}

std::string optional_double_field(const std::optional<double>& value) {
  return value ? format_double(*value) : std::string();
}

std::string rounds_csv(const std::string& hash, const ExperimentConfig& cfg,
                       const std::vector<RoundRecord>& records) {
  std::string out = std::string(kRoundsCsvHeader) + "\n";
  for (const auto& rec : records) {
    out += hash + "," + to_string(rec.strategy) + "," + std::to_string(cfg.n_clients) + "," +
           std::to_string(rec.round) + "," + optional_int_field(rec.selected_client) + "," +
           format_double(rec.train_accuracy) + "," + format_double(rec.test_accuracy) + "," +
           optional_double_field(rec.mia_accuracy) + "," +
           optional_double_field(rec.mean_member_confidence) + "," +
           optional_double_field(rec.mean_nonmember_confidence) + "\n";
  }
  return out;
}

nlohmann::ordered_json mia_json(const MiaReport& report) {
  nlohmann::ordered_json j;
  j["attack_accuracy"] = report.attack_accuracy;
  j["member_mean_confidence"] = report.member_mean_confidence;
  j["nonmember_mean_confidence"] = report.nonmember_mean_confidence;
  j["n_eval"] = report.n_eval;
  return j;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
  ExperimentResult result;
  result.config = cfg;
  result.hash = config_hash(cfg);
  result.run_dir = std::filesystem::path(cfg.output_dir) / result.hash;
  std::filesystem::create_directories(result.run_dir / "figures");

  DataLayout layout = prepare_data(cfg);
  const std::vector<int> dims = resolve_layer_dims(
      cfg, static_cast<int>(layout.pool.features.cols()), layout.pool.num_classes);

  const Dataset train_ds = layout.pool.subset(layout.client_train);
  const Dataset reference_ds = layout.pool.subset(layout.reference);
  const PartitionPlan plan = partition(train_ds.size(), cfg.n_clients,
                                       derive_seed(cfg.seed, "partition"));

  // The adversary's side: shadows on a pool the target never sees, one attack
  // classifier, and the threshold baseline.
  const Dataset shadow_ds = layout.pool.subset(layout.shadow);
  TrainConfig shadow_cfg;
  shadow_cfg.learning_rate = cfg.learning_rate;
  shadow_cfg.batch_size = cfg.batch_size;
  shadow_cfg.local_epochs = cfg.shadow_epochs > 0
                                ? cfg.shadow_epochs
                                : std::max(1, cfg.rounds * cfg.local_epochs);
  const std::vector<ShadowModel> shadows =
      train_shadows(shadow_ds, cfg.k_shadows, dims, shadow_cfg, derive_seed(cfg.seed, "shadows"));
  const AttackDataset attack_data = build_attack_dataset(shadows, shadow_ds);
  const AttackModel attack = train_attack(attack_data, derive_seed(cfg.seed, "attack"));
  const AttackModel threshold = calibrate_threshold(attack_data);

  // Balanced MIA evaluation sets: members from the client pool, non-members
  // from the holdout.
  MembershipSplit split;
  {
    std::vector<int> members = layout.client_train;
    std::vector<int> nonmembers = layout.holdout;
    Rng rng(derive_seed(cfg.seed, "mia_eval"));
    rng.shuffle(members);
    rng.shuffle(nonmembers);
    split.member_indices.assign(members.begin(), members.begin() + cfg.eval_size);
    split.nonmember_indices.assign(nonmembers.begin(), nonmembers.begin() + cfg.eval_size);
  }

  FederationOptions opt;
  opt.layer_dims = dims;
  opt.train = TrainConfig{cfg.learning_rate, cfg.batch_size, cfg.local_epochs,
                          derive_seed(cfg.seed, "federation")};
  opt.strategy = cfg.strategy;
  opt.cc_mode = cfg.cc_mode;
  opt.rounds = cfg.rounds;
  opt.threads = threads;

  const RoundCallback on_round = [&](int round, const DenseNet& global, RoundRecord& record) {
    const bool due = cfg.mia_cadence > 0 &&
                     (round % cfg.mia_cadence == 0 || round + 1 == cfg.rounds);
    if (due) {
      const MiaReport report = evaluate_mia(attack, global, split, layout.pool);
      record.mia_accuracy = report.attack_accuracy;
      record.mean_member_confidence = report.member_mean_confidence;
      record.mean_nonmember_confidence = report.nonmember_mean_confidence;
    }
    if (cfg.checkpoints) {
      save_checkpoint(global, result.run_dir / ("round_" + std::to_string(round) + ".ckpt"));
    }
  };

  FederationResult fed = run_federation(train_ds, plan, layout.test, reference_ds.features,
                                        reference_ds.labels, opt, on_round);
  result.rounds = std::move(fed.rounds);
  result.final_model = std::move(fed.final_model);
  result.final_clients = std::move(fed.final_clients);

  result.shadow_report = evaluate_mia(attack, result.final_model, split, layout.pool);
  result.threshold_report = evaluate_mia(threshold, result.final_model, split, layout.pool);

  atomic_write_file(result.run_dir / "rounds.csv", rounds_csv(result.hash, cfg, result.rounds));

  {
    nlohmann::ordered_json j;
    j["config_hash"] = result.hash;
    j["seed"] = cfg.seed;
    j["tool_version"] = kToolVersion;
    j["strategy"] = to_string(cfg.strategy);
    j["n_clients"] = cfg.n_clients;
    j["rounds"] = cfg.rounds;
    j["shadow"] = mia_json(result.shadow_report);
    j["threshold"] = mia_json(result.threshold_report);
    atomic_write_file(result.run_dir / "attack.json", j.dump(2) + "\n");
  }

  const ConfidenceHistogram confidence = confidence_histograms(
      result.final_model, train_ds.features, train_ds.labels, layout.test.features,
      layout.test.labels);
  write_confidence_csv(confidence, result.run_dir / "figures" / "confidence.csv");

  if (!result.final_clients.empty()) {
    std::vector<DenseNet> client_nets;
    client_nets.reserve(result.final_clients.size());
    for (const auto& client : result.final_clients) client_nets.push_back(client.params);
    const AgreementProfile train_profile = agreement_profile(
        client_nets, result.final_model, train_ds.features, train_ds.labels);
    const AgreementProfile test_profile = agreement_profile(
        client_nets, result.final_model, layout.test.features, layout.test.labels);
    write_agreement_csv(train_profile, test_profile,
                        result.run_dir / "figures" / "agreement.csv");
  }

  return result;
}

SweepResult run_sweep(const std::vector<ExperimentConfig>& configs, int threads) {
  if (configs.empty()) throw ConfigError("sweep: no configs");
  const auto& base = configs.front();
  std::set<std::string> hashes;
  for (const auto& cfg : configs) {
    const bool same_data = cfg.kind == base.kind && cfg.synthetic == base.synthetic &&
                           cfg.idx == base.idx && cfg.csv == base.csv;
    if (!same_data || cfg.layer_dims != base.layer_dims) {
      throw ConfigError("sweep: configs must share the dataset spec and architecture");
    }
    if (!hashes.insert(config_hash(cfg)).second) {
      throw ConfigError("sweep: duplicate config " + config_hash(cfg));
    }
  }

  SweepResult result;
  result.runs.resize(configs.size());
  parallel_for(configs.size(), threads, [&](std::size_t i) {
    result.runs[i] = run_experiment(configs[i], threads);
  });
  return result;
}

namespace {

struct RunRows {
  std::string hash;
  std::string strategy;
  int n_clients = 0;
  std::uint64_t seed = 0;
  int rounds = 0;
  nlohmann::ordered_json shadow;
  nlohmann::ordered_json threshold;
  std::vector<std::array<std::string, 10>> rows;  // raw CSV fields
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double field_as_double(const std::string& text) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::runtime_error("report: bad numeric field '" + text + "'");
  }
  return value;
}

RunRows load_run(const std::filesystem::path& dir) {
  RunRows run;
  const std::string csv = read_file(dir / "rounds.csv");
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line != kRoundsCsvHeader) {
    throw std::runtime_error("report: unexpected rounds.csv header in " + dir.string());
  }
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != 10) {
      throw std::runtime_error("report: malformed rounds.csv row in " + dir.string());
    }
    std::array<std::string, 10> row;
    std::copy(fields.begin(), fields.end(), row.begin());
    run.rows.push_back(std::move(row));
  }

  const auto j = nlohmann::ordered_json::parse(read_file(dir / "attack.json"));
  run.hash = j.at("config_hash").get<std::string>();
  run.seed = j.at("seed").get<std::uint64_t>();
  run.strategy = j.at("strategy").get<std::string>();
  run.n_clients = j.at("n_clients").get<int>();
  run.rounds = j.at("rounds").get<int>();
  run.shadow = j.at("shadow");
  run.threshold = j.at("threshold");
  return run;
}

}  // namespace

void write_report(const std::filesystem::path& result_root) {
  std::vector<RunRows> runs;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(result_root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "rounds.csv")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) runs.push_back(load_run(dir));
  if (runs.empty()) throw std::runtime_error("report: no runs under " + result_root.string());

  std::sort(runs.begin(), runs.end(), [](const RunRows& a, const RunRows& b) {
    return std::tie(a.strategy, a.n_clients, a.seed, a.hash) <
           std::tie(b.strategy, b.n_clients, b.seed, b.hash);
  });

  const std::filesystem::path report_dir = result_root / "report";
  std::filesystem::create_directories(report_dir / "figures");

  // Per-figure trajectories: one row per (run, round).
  {
    std::string out = "config_hash,strategy,n_clients,seed,round,train_acc,test_acc,mia_acc\n";
    for (const auto& run : runs) {
      for (const auto& row : run.rows) {
        out += run.hash + "," + run.strategy + "," + std::to_string(run.n_clients) + "," +
               std::to_string(run.seed) + "," + row[3] + "," + row[5] + "," + row[6] + "," +
               row[7] + "\n";
      }
    }
    atomic_write_file(report_dir / "figures" / "trajectories.csv", out);
  }

  // Convergence curves: per-round means across runs sharing (strategy, n).
  {
    std::map<std::tuple<std::string, int, int>, std::tuple<double, double, long>> groups;
    for (const auto& run : runs) {
      for (const auto& row : run.rows) {
        const int round = static_cast<int>(field_as_double(row[3]));
        auto& [train_sum, test_sum, n] = groups[{run.strategy, run.n_clients, round}];
        train_sum += field_as_double(row[5]);
        test_sum += field_as_double(row[6]);
        ++n;
      }
    }
    std::string out = "strategy,n_clients,round,mean_train_acc,mean_test_acc,mean_gap,n_runs\n";
    for (const auto& [key, value] : groups) {
      const auto& [strategy, n_clients, round] = key;
      const auto& [train_sum, test_sum, n] = value;
      const double mean_train = train_sum / static_cast<double>(n);
      const double mean_test = test_sum / static_cast<double>(n);
      out += strategy + "," + std::to_string(n_clients) + "," + std::to_string(round) + "," +
             format_double(mean_train) + "," + format_double(mean_test) + "," +
             format_double(mean_train - mean_test) + "," + std::to_string(n) + "\n";
    }
    atomic_write_file(report_dir / "figures" / "convergence.csv", out);
  }

  // Summary with the accuracy-privacy rank correlation per run.
  {
    nlohmann::ordered_json summary;
    summary["tool_version"] = kToolVersion;
    summary["runs"] = nlohmann::ordered_json::array();
    for (const auto& run : runs) {
      nlohmann::ordered_json r;
      r["config_hash"] = run.hash;
      r["strategy"] = run.strategy;
      r["n_clients"] = run.n_clients;
      r["seed"] = run.seed;
      r["rounds"] = run.rounds;
      if (!run.rows.empty()) {
        r["final_train_acc"] = field_as_double(run.rows.back()[5]);
        r["final_test_acc"] = field_as_double(run.rows.back()[6]);
      }
      r["shadow"] = run.shadow;
      r["threshold"] = run.threshold;

      std::vector<double> test_acc, mia_acc;
      for (const auto& row : run.rows) {
        if (row[7].empty()) continue;
        test_acc.push_back(field_as_double(row[6]));
        mia_acc.push_back(field_as_double(row[7]));
      }
      if (test_acc.size() >= 3) {
        const SpearmanResult rho = spearman(test_acc, mia_acc);
        r["spearman_test_mia"] = {{"rho", rho.rho}, {"degenerate", rho.degenerate}};
      } else {
        r["spearman_test_mia"] = nullptr;
      }
      summary["runs"].push_back(std::move(r));
    }
    atomic_write_file(report_dir / "summary.json", summary.dump(2) + "\n");
  }
}

}  // namespace fedmia
