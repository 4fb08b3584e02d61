#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedmia/dataset.hpp"
#include "fedmia/rng.hpp"
#include "fedmia/util.hpp"
#include "support/oracles.hpp"

using namespace fedmia;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "fedmia_test_data";
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void append_be32(std::vector<unsigned char>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<unsigned char>(v >> 24));
  bytes.push_back(static_cast<unsigned char>(v >> 16));
  bytes.push_back(static_cast<unsigned char>(v >> 8));
  bytes.push_back(static_cast<unsigned char>(v));
}

// A well-formed pair: 4 images of 2x2, labels 0..3.
std::pair<fs::path, fs::path> write_small_idx_pair() {
  std::vector<unsigned char> images;
  append_be32(images, 0x00000803);
  append_be32(images, 4);
  append_be32(images, 2);
  append_be32(images, 2);
  for (unsigned char p = 0; p < 16; ++p) images.push_back(p);

  std::vector<unsigned char> labels;
  append_be32(labels, 0x00000801);
  append_be32(labels, 4);
  for (unsigned char l = 0; l < 4; ++l) labels.push_back(l);

  const fs::path img_path = temp_dir() / "small-images-idx3-ubyte";
  const fs::path lbl_path = temp_dir() / "small-labels-idx1-ubyte";
  write_bytes(img_path, images);
  write_bytes(lbl_path, labels);
  return {img_path, lbl_path};
}

}  // namespace

TEST_CASE("load_idx decodes a well-formed pair") {
  const auto [img, lbl] = write_small_idx_pair();
  const Dataset ds = load_idx(img, lbl);
  CHECK(ds.size() == 4);
  CHECK(ds.features.cols() == 4);
  CHECK(ds.num_classes == 4);
  CHECK(ds.labels == std::vector<int>{0, 1, 2, 3});
  CHECK(ds.features(0, 0) == 0.0);
  CHECK(ds.features(0, 1) == doctest::Approx(1.0 / 255.0));
  CHECK(ds.features(3, 3) == doctest::Approx(15.0 / 255.0));
}

TEST_CASE("load_idx rejects a labels magic in the images slot") {
  const auto [img, lbl] = write_small_idx_pair();
  CHECK_THROWS_WITH_AS(load_idx(lbl, lbl), doctest::Contains("bad magic"), std::runtime_error);
}

TEST_CASE("load_idx reports truncation distinctly") {
  const auto [img, lbl] = write_small_idx_pair();
  std::vector<unsigned char> truncated;
  append_be32(truncated, 0x00000803);
  append_be32(truncated, 4);
  append_be32(truncated, 2);
  append_be32(truncated, 2);
  truncated.push_back(0);  // promises 16 pixels, delivers 1
  const fs::path bad = temp_dir() / "truncated-images-idx3-ubyte";
  write_bytes(bad, truncated);
  CHECK_THROWS_WITH_AS(load_idx(bad, lbl), doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("load_idx reports an image/label count mismatch distinctly") {
  const auto [img, lbl] = write_small_idx_pair();
  std::vector<unsigned char> labels;
  append_be32(labels, 0x00000801);
  append_be32(labels, 3);
  for (unsigned char l = 0; l < 3; ++l) labels.push_back(l);
  const fs::path bad = temp_dir() / "short-labels-idx1-ubyte";
  write_bytes(bad, labels);
  CHECK_THROWS_WITH_AS(load_idx(img, bad), doctest::Contains("does not match label count"),
                       std::runtime_error);
}

TEST_CASE("official MNIST train files decode to 60000x784 when available") {
  const fs::path dir = fs::path("data") / "mnist";
  const fs::path img = dir / "train-images-idx3-ubyte";
  const fs::path lbl = dir / "train-labels-idx1-ubyte";
  if (!fs::exists(img) || !fs::exists(lbl)) {
    MESSAGE("MNIST files not present under data/mnist, skipping");
    return;
  }
  const Dataset ds = load_idx(img, lbl);
  CHECK(ds.size() == 60000);
  CHECK(ds.features.cols() == 784);
  CHECK(ds.num_classes == 10);
}

TEST_CASE("idx save/load round-trips bit-exactly") {
  const auto [img, lbl] = write_small_idx_pair();
  const Dataset ds = load_idx(img, lbl);
  const fs::path img2 = temp_dir() / "rt-images-idx3-ubyte";
  const fs::path lbl2 = temp_dir() / "rt-labels-idx1-ubyte";
  save_idx(ds, 2, 2, img2, lbl2);
  CHECK(read_file(img) == read_file(img2));
  CHECK(read_file(lbl) == read_file(lbl2));

  // also for a random well-formed pair
  Rng rng(99);
  std::vector<unsigned char> images;
  append_be32(images, 0x00000803);
  append_be32(images, 10);
  append_be32(images, 3);
  append_be32(images, 5);
  for (int i = 0; i < 150; ++i) images.push_back(static_cast<unsigned char>(rng.below(256)));
  std::vector<unsigned char> labels;
  append_be32(labels, 0x00000801);
  append_be32(labels, 10);
  for (int i = 0; i < 10; ++i) labels.push_back(static_cast<unsigned char>(rng.below(7)));
  const fs::path rimg = temp_dir() / "rand-images-idx3-ubyte";
  const fs::path rlbl = temp_dir() / "rand-labels-idx1-ubyte";
  write_bytes(rimg, images);
  write_bytes(rlbl, labels);
  const Dataset rds = load_idx(rimg, rlbl);
  const fs::path rimg2 = temp_dir() / "rand2-images-idx3-ubyte";
  const fs::path rlbl2 = temp_dir() / "rand2-labels-idx1-ubyte";
  save_idx(rds, 3, 5, rimg2, rlbl2);
  CHECK(read_file(rimg) == read_file(rimg2));
  CHECK(read_file(rlbl) == read_file(rlbl2));
}

TEST_CASE("generate_synthetic is bitwise reproducible") {
  const Dataset a = generate_synthetic(100, 2, 2, 4.0, 7);
  const Dataset b = generate_synthetic(100, 2, 2, 4.0, 7);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
}

TEST_CASE("generate_synthetic balances classes exactly for divisible counts") {
  const Dataset ds = generate_synthetic(90, 5, 3, 3.0, 1);
  std::vector<int> counts(3, 0);
  for (int label : ds.labels) ++counts[static_cast<std::size_t>(label)];
  CHECK(counts == std::vector<int>{30, 30, 30});
}

TEST_CASE("well-separated blobs are linearly separable per a reference logistic model") {
  const Dataset ds = generate_synthetic(100, 2, 2, 10.0, 7);
  const auto model = oracles::train_reference_logistic(ds.features, ds.labels, 500, 0.5);
  CHECK(oracles::reference_logistic_accuracy(model, ds.features, ds.labels) >= 0.99);
}

TEST_CASE("blob class means sit near the requested separation") {
  const Dataset ds = generate_synthetic(9000, 4, 3, 5.0, 13);
  std::vector<Eigen::VectorXd> means(3, Eigen::VectorXd::Zero(4));
  std::vector<int> counts(3, 0);
  for (long i = 0; i < ds.size(); ++i) {
    means[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] +=
        ds.features.row(i).transpose();
    ++counts[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < 3; ++c) means[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const double dist =
          (means[static_cast<std::size_t>(a)] - means[static_cast<std::size_t>(b)]).norm();
      CHECK(std::abs(dist - 5.0) < 0.3);
    }
  }
}

TEST_CASE("generate_synthetic validates its preconditions") {
  CHECK_THROWS_AS(generate_synthetic(10, 2, 1, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(2, 2, 3, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(10, 1, 3, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(10, 2, 2, -1.0, 0), std::invalid_argument);
}

TEST_CASE("partition n=1 keeps everything on one client") {
  const PartitionPlan plan = partition(10, 1, 0);
  REQUIRE(plan.assignments.size() == 1);
  CHECK(plan.assignments[0].size() == 10);
}

TEST_CASE("partition sizes follow the near-even rule") {
  for (std::uint64_t seed : {0, 1, 2}) {
    const PartitionPlan plan = partition(10, 3, seed);
    std::vector<std::size_t> sizes;
    for (const auto& shard : plan.assignments) sizes.push_back(shard.size());
    CHECK(sizes == std::vector<std::size_t>{4, 3, 3});
  }
}

TEST_CASE("partition produces disjoint exhaustive balanced shards") {
  // brute-force set check on the spec example and over a random grid
  struct Case {
    long n_samples;
    int n_clients;
    std::uint64_t seed;
  };
  std::vector<Case> cases = {{1000, 10, 5}};
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    const long n = 1 + static_cast<long>(rng.below(400));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    cases.push_back({n, k, rng.next_u64()});
  }
  for (const auto& c : cases) {
    const PartitionPlan plan = partition(c.n_samples, c.n_clients, c.seed);
    std::set<int> seen;
    std::size_t min_size = static_cast<std::size_t>(c.n_samples), max_size = 0;
    for (const auto& shard : plan.assignments) {
      min_size = std::min(min_size, shard.size());
      max_size = std::max(max_size, shard.size());
      for (int idx : shard) {
        CHECK(idx >= 0);
        CHECK(idx < c.n_samples);
        CHECK(seen.insert(idx).second);  // disjoint
      }
    }
    CHECK(seen.size() == static_cast<std::size_t>(c.n_samples));  // exhaustive
    CHECK(max_size - min_size <= 1);
  }
}

TEST_CASE("partition rejects more clients than samples") {
  CHECK_THROWS_AS(partition(5, 6, 0), std::invalid_argument);
  CHECK_THROWS_AS(partition(5, 0, 0), std::invalid_argument);
}

TEST_CASE("make_membership_split yields disjoint equal halves") {
  const Dataset ds = generate_synthetic(100, 2, 2, 3.0, 3);
  const MembershipSplit split = make_membership_split(ds, 0.5, 50, 3);
  CHECK(split.member_indices.size() == 50);
  CHECK(split.nonmember_indices.size() == 50);
  std::set<int> members(split.member_indices.begin(), split.member_indices.end());
  for (int idx : split.nonmember_indices) CHECK(members.count(idx) == 0);

  const MembershipSplit again = make_membership_split(ds, 0.5, 50, 3);
  CHECK(split.member_indices == again.member_indices);
  CHECK(split.nonmember_indices == again.nonmember_indices);
}

TEST_CASE("make_membership_split rejects oversized eval sets") {
  const Dataset ds = generate_synthetic(100, 2, 2, 3.0, 3);
  CHECK_THROWS_AS(make_membership_split(ds, 0.5, 60, 3), std::invalid_argument);
}

TEST_CASE("csv save/load round-trips bit-exactly") {
  const Dataset ds = generate_synthetic(50, 3, 2, 2.5, 21);
  const fs::path path = temp_dir() / "blobs.csv";
  save_csv(ds, path);
  const Dataset back = load_csv(path);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.num_classes == ds.num_classes);
}

TEST_CASE("subset gathers rows in order") {
  const Dataset ds = generate_synthetic(10, 2, 2, 3.0, 4);
  const Dataset sub = ds.subset({3, 1, 7});
  CHECK(sub.size() == 3);
  CHECK(sub.features.row(0) == ds.features.row(3));
  CHECK(sub.features.row(1) == ds.features.row(1));
  CHECK(sub.features.row(2) == ds.features.row(7));
  CHECK(sub.labels[0] == ds.labels[3]);
}
