#include "fedmia/attack.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedmia/rng.hpp"
#include "fedmia/util.hpp"

namespace fedmia {

std::vector<ShadowModel> train_shadows(const Dataset& shadow_pool, int k_shadows,
                                       const std::vector<int>& layer_dims,
                                       const TrainConfig& cfg, std::uint64_t seed) {
  if (k_shadows < 1) throw std::invalid_argument("train_shadows: k_shadows must be >= 1");
  const long pool_size = shadow_pool.size();
  if (pool_size / 2 < 2) {
    throw std::invalid_argument("train_shadows: pool too small, need >= 2 samples per split");
  }

  std::vector<ShadowModel> shadows;
  shadows.reserve(static_cast<std::size_t>(k_shadows));
  for (int s = 0; s < k_shadows; ++s) {
    std::vector<int> order(static_cast<std::size_t>(pool_size));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "shadow_split", {static_cast<std::uint64_t>(s)}));
    rng.shuffle(order);
    const long half = pool_size / 2;

    ShadowModel shadow;
    shadow.member_indices.assign(order.begin(), order.begin() + half);
    shadow.nonmember_indices.assign(order.begin() + half, order.end());

    const Dataset members = shadow_pool.subset(shadow.member_indices);
    TrainConfig shadow_cfg = cfg;
    shadow_cfg.seed = derive_seed(seed, "shadow_train", {static_cast<std::uint64_t>(s)});
    const DenseNet init =
        init_params(layer_dims, derive_seed(seed, "shadow_init", {static_cast<std::uint64_t>(s)}));
    shadow.net = train_local(init, members.features, members.labels, shadow_cfg);
    shadows.push_back(std::move(shadow));
  }
  return shadows;
}

Eigen::VectorXd extract_features(const ConfidenceVector& conf) {
  Eigen::VectorXd sorted = conf.probs;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<double>());
  return sorted;
}

AttackDataset build_attack_dataset(const std::vector<ShadowModel>& shadows,
                                   const Dataset& shadow_pool) {
  if (shadows.empty()) throw std::invalid_argument("build_attack_dataset: no shadows");

  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  for (const auto& shadow : shadows) {
    const Eigen::MatrixXd probs = softmax_rows(forward(shadow.net, shadow_pool.features));
    std::vector<char> is_member(static_cast<std::size_t>(shadow_pool.size()), 0);
    for (int idx : shadow.member_indices) is_member[static_cast<std::size_t>(idx)] = 1;
    for (long i = 0; i < shadow_pool.size(); ++i) {
      Eigen::VectorXd sorted = probs.row(i).transpose();
      std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<double>());
      rows.push_back(std::move(sorted));
      labels.push_back(is_member[static_cast<std::size_t>(i)]);
    }
  }

  // Exact class balance: keep the first `keep` rows of each class in
  // shadow-then-pool order.
  const long n_members = std::count(labels.begin(), labels.end(), 1);
  const long n_nonmembers = static_cast<long>(labels.size()) - n_members;
  const long keep = std::min(n_members, n_nonmembers);

  AttackDataset data;
  data.features.resize(2 * keep, rows.front().size());
  data.membership.reserve(static_cast<std::size_t>(2 * keep));
  long kept_members = 0, kept_nonmembers = 0, cursor = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    long& kept = labels[i] == 1 ? kept_members : kept_nonmembers;
    if (kept >= keep) continue;
    data.features.row(cursor++) = rows[i].transpose();
    data.membership.push_back(labels[i]);
    ++kept;
  }
  return data;
}

void save_attack_csv(const AttackDataset& data, const std::filesystem::path& path) {
  std::string out;
  for (long f = 0; f < data.features.cols(); ++f) out += "f" + std::to_string(f) + ",";
  out += "member\n";
  for (long i = 0; i < data.features.rows(); ++i) {
    for (long f = 0; f < data.features.cols(); ++f) {
      out += format_double(data.features(i, f));
      out += ',';
    }
    out += std::to_string(data.membership[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  atomic_write_file(path, out);
}

AttackModel train_attack(const AttackDataset& data, std::uint64_t seed) {
  const long n = data.features.rows();
  if (n == 0) throw std::invalid_argument("train_attack: empty dataset");
  const long n_ones = std::count(data.membership.begin(), data.membership.end(), 1);
  if (n_ones == 0 || n_ones == n) {
    throw std::invalid_argument("train_attack: degenerate single-class dataset");
  }

  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) y(i) = data.membership[static_cast<std::size_t>(i)];

  Rng rng(seed);
  Eigen::VectorXd w(data.features.cols());
  for (long j = 0; j < w.size(); ++j) w(j) = 0.01 * rng.normal();
  double b = 0.0;

  // Full-batch gradient descent on the cross-entropy; budget fixed.
  constexpr int kSteps = 2000;
  constexpr double kStep = 2.0;
  for (int step = 0; step < kSteps; ++step) {
    Eigen::VectorXd z = data.features * w;
    z.array() += b;
    const Eigen::VectorXd p = 1.0 / (1.0 + (-z.array()).exp());
    const Eigen::VectorXd err = (p - y) / static_cast<double>(n);
    w -= kStep * (data.features.transpose() * err);
    b -= kStep * err.sum();
  }

  AttackModel model;
  model.kind = AttackModel::Kind::ShadowClassifier;
  model.logistic = LogisticModel{std::move(w), b};
  return model;
}

AttackModel calibrate_threshold(const AttackDataset& data) {
  const long n = data.features.rows();
  if (n == 0) throw std::invalid_argument("calibrate_threshold: empty dataset");

  std::vector<std::pair<double, int>> points;  // (max confidence, membership)
  points.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    points.emplace_back(data.features(i, 0), data.membership[static_cast<std::size_t>(i)]);
  }
  std::sort(points.begin(), points.end());

  const long total_members = std::count(data.membership.begin(), data.membership.end(), 1);
  // Scanning candidates in ascending order: members_below(tau) and
  // nonmembers_below(tau) count points with confidence < tau.
  double best_tau = points.front().first;
  long best_correct = -1;
  long members_below = 0, nonmembers_below = 0;
  std::size_t i = 0;
  while (i < points.size()) {
    const double tau = points[i].first;
    // Rule "member iff max confidence >= tau": correct = members at/above tau
    // plus non-members below tau.
    const long correct = (total_members - members_below) + nonmembers_below;
    if (correct > best_correct) {
      best_correct = correct;
      best_tau = tau;
    }
    while (i < points.size() && points[i].first == tau) {
      if (points[i].second == 1) ++members_below; else ++nonmembers_below;
      ++i;
    }
  }

  AttackModel model;
  model.kind = AttackModel::Kind::Threshold;
  model.tau = best_tau;
  return model;
}

std::string to_json_string(const MiaReport& report) {
  nlohmann::ordered_json j;
  j["attack_accuracy"] = report.attack_accuracy;
  j["member_mean_confidence"] = report.member_mean_confidence;
  j["nonmember_mean_confidence"] = report.nonmember_mean_confidence;
  j["n_eval"] = report.n_eval;
  return j.dump();
}

MiaReport evaluate_mia(const AttackModel& attack, const ConfidenceQuery& query,
                       const MembershipSplit& split, const Dataset& ds) {
  if (split.member_indices.empty() || split.nonmember_indices.empty()) {
    throw std::invalid_argument("evaluate_mia: empty split");
  }
  if (split.member_indices.size() != split.nonmember_indices.size()) {
    throw std::invalid_argument("evaluate_mia: evaluation sets must be the same size");
  }

  long correct = 0;
  double member_conf_sum = 0.0, nonmember_conf_sum = 0.0;
  for (int idx : split.member_indices) {
    const Eigen::VectorXd features = extract_features(query(ds.features.row(idx)));
    member_conf_sum += features(0);
    if (attack.predict_member(features)) ++correct;
  }
  for (int idx : split.nonmember_indices) {
    const Eigen::VectorXd features = extract_features(query(ds.features.row(idx)));
    nonmember_conf_sum += features(0);
    if (!attack.predict_member(features)) ++correct;
  }

  const long n_each = static_cast<long>(split.member_indices.size());
  MiaReport report;
  report.n_eval = static_cast<int>(2 * n_each);
  report.attack_accuracy = static_cast<double>(correct) / static_cast<double>(2 * n_each);
  report.member_mean_confidence = member_conf_sum / static_cast<double>(n_each);
  report.nonmember_mean_confidence = nonmember_conf_sum / static_cast<double>(n_each);
  return report;
}

MiaReport evaluate_mia(const AttackModel& attack, const DenseNet& target,
                       const MembershipSplit& split, const Dataset& ds) {
  return evaluate_mia(
      attack,
      [&target](const Eigen::RowVectorXd& sample) { return predict_confidence(target, sample); },
      split, ds);
}

}  // namespace fedmia
