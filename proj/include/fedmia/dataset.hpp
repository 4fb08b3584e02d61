#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedmia {

// A labelled sample matrix, one row per sample. Image loaders scale pixels to
// [0,1]; synthetic data keeps raw blob coordinates (finite, unbounded).
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  long size() const { return features.rows(); }
  Dataset subset(const std::vector<int>& indices) const;
};

// Disjoint near-even assignment of sample indices to clients: sizes differ by
// at most one and the union covers exactly [0, source_size).
struct PartitionPlan {
  std::vector<std::vector<int>> assignments;
  int n_clients = 0;
  long source_size = 0;
};

// Equal-size evaluation index sets for membership inference: members were
// used in training, non-members are held out from the same distribution.
struct MembershipSplit {
  std::vector<int> member_indices;
  std::vector<int> nonmember_indices;
};

// IDX binary format (big-endian): images magic 0x00000803 then dims
// [count, rows, cols] then unsigned bytes; labels magic 0x00000801 then
// [count] then unsigned byte labels.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
void save_idx(const Dataset& ds, int rows, int cols,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// Per-class isotropic unit-variance Gaussian blobs whose means sit on a
// regular simplex with pairwise distance class_separation. Labels are dealt
// round-robin (sample i gets class i % n_classes), so counts balance within
// one. Requires n_features >= n_classes - 1 for the simplex to fit.
Dataset generate_synthetic(int n_samples, int n_features, int n_classes,
                           double class_separation, std::uint64_t seed);

// Shuffles [0, dataset_size) with the given seed, then deals contiguous
// chunks; the first (dataset_size % n_clients) clients get one extra sample.
PartitionPlan partition(long dataset_size, int n_clients, std::uint64_t seed);

// Splits the dataset into a training population (train_fraction of samples)
// and a held-out population, then draws eval_size-element evaluation subsets
// from each without replacement.
MembershipSplit make_membership_split(const Dataset& ds, double train_fraction,
                                      int eval_size, std::uint64_t seed);

// CSV with header f0,...,fk,label, one sample per row. Doubles are written in
// shortest round-trip form, so save/load is bit-exact.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace fedmia
