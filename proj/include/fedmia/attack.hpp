#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fedmia/dataset.hpp"
#include "fedmia/model.hpp"

namespace fedmia {

struct ShadowModel {
  DenseNet net;
  std::vector<int> member_indices;     // pool indices the shadow trained on
  std::vector<int> nonmember_indices;  // the rest of the pool
};

// Trains k shadows, each on a random half of the pool, with the architecture
// and training config the adversary assumes for the target.
std::vector<ShadowModel> train_shadows(const Dataset& shadow_pool, int k_shadows,
                                       const std::vector<int>& layer_dims,
                                       const TrainConfig& cfg, std::uint64_t seed);

// Confidence vector sorted descending, which removes class identity.
Eigen::VectorXd extract_features(const ConfidenceVector& conf);

// Confidence-feature rows labelled by shadow membership, balanced exactly by
// trimming the larger class in shadow-then-pool order.
struct AttackDataset {
  Eigen::MatrixXd features;
  std::vector<int> membership;  // 1 = member
};
AttackDataset build_attack_dataset(const std::vector<ShadowModel>& shadows,
                                   const Dataset& shadow_pool);

// CSV export: header f0,...,fC-1,member.
void save_attack_csv(const AttackDataset& data, const std::filesystem::path& path);

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double score(const Eigen::VectorXd& features) const {
    return 1.0 / (1.0 + std::exp(-(weights.dot(features) + bias)));
  }
};

// Membership classifier: either a logistic model over confidence features or
// the max-confidence threshold baseline.
struct AttackModel {
  enum class Kind { ShadowClassifier, Threshold };
  Kind kind = Kind::ShadowClassifier;
  LogisticModel logistic;
  double tau = 0.0;  // member iff max confidence >= tau

  bool predict_member(const Eigen::VectorXd& features) const {
    return kind == Kind::ShadowClassifier ? logistic.score(features) >= 0.5
                                          : features(0) >= tau;
  }
};

// Logistic regression by full-batch gradient descent with a fixed step
// budget; deterministic given the seed (used for the tiny weight init).
AttackModel train_attack(const AttackDataset& data, std::uint64_t seed);

// Exhaustive scan over observed max-confidence values for the threshold that
// maximizes balanced accuracy; ties go to the smallest threshold.
AttackModel calibrate_threshold(const AttackDataset& data);

struct MiaReport {
  double attack_accuracy = 0.0;
  double member_mean_confidence = 0.0;
  double nonmember_mean_confidence = 0.0;
  int n_eval = 0;
};

std::string to_json_string(const MiaReport& report);

// The only view of the target the attack ever gets: one confidence vector per
// query.
using ConfidenceQuery = std::function<ConfidenceVector(const Eigen::RowVectorXd&)>;

// Balanced membership-prediction accuracy over the split's evaluation sets,
// plus the mean max-confidence of each population.
MiaReport evaluate_mia(const AttackModel& attack, const ConfidenceQuery& query,
                       const MembershipSplit& split, const Dataset& ds);
MiaReport evaluate_mia(const AttackModel& attack, const DenseNet& target,
                       const MembershipSplit& split, const Dataset& ds);

}  // namespace fedmia
