#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "fedmia/model.hpp"

namespace fedmia {

// For each sample the global model classifies correctly, the fraction of
// clients whose prediction matches the global prediction. Fractions take the
// n+1 exact values k/n, so the profile stores one bucket per value.
struct AgreementProfile {
  int n_clients = 0;
  std::vector<long> counts;  // counts[k]: samples where exactly k clients agree
  long total_correct = 0;    // == sum of counts

  double mean_fraction() const;
};

AgreementProfile agreement_profile(const std::vector<DenseNet>& client_nets,
                                   const DenseNet& global_net, const Eigen::MatrixXd& features,
                                   const std::vector<int>& labels);

// Max-softmax confidence bucketed into 20 uniform bins over [0,1], split by
// (train/test, correct/incorrect).
struct ConfidenceHistogram {
  static constexpr int kBins = 20;
  static constexpr std::array<const char*, 4> kPopulations = {
      "train_correct", "train_incorrect", "test_correct", "test_incorrect"};

  std::array<std::array<long, kBins>, 4> counts{};
  std::array<long, 4> totals{};
};

ConfidenceHistogram confidence_histograms(const DenseNet& net, const Eigen::MatrixXd& train_x,
                                          const std::vector<int>& train_y,
                                          const Eigen::MatrixXd& test_x,
                                          const std::vector<int>& test_y);

// Train accuracy minus test accuracy; may be negative.
double generalization_gap(double train_acc, double test_acc);

// Rank correlation with average ranks for ties. A constant input sequence has
// no defined rank order; rho is reported as 0 with the degenerate flag set.
struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;
};
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// CSV serialization, one row per bin: bin_lo,bin_hi,population,count.
// Agreement buckets are the point values k/n (bin_lo == bin_hi).
void write_agreement_csv(const AgreementProfile& train, const AgreementProfile& test,
                         const std::filesystem::path& path);
void write_confidence_csv(const ConfidenceHistogram& histogram,
                          const std::filesystem::path& path);

// Mean max-softmax confidence split by prediction correctness.
struct ConfidenceMeans {
  double correct = 0.0;
  double incorrect = 0.0;
  long n_correct = 0;
  long n_incorrect = 0;
};
ConfidenceMeans mean_max_confidence_by_correctness(const DenseNet& net,
                                                   const Eigen::MatrixXd& features,
                                                   const std::vector<int>& labels);

}  // namespace fedmia
