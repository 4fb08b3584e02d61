#include "fedmia/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedmia/rng.hpp"
#include "fedmia/util.hpp"

namespace fedmia {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("idx: truncated file: " + path);
  }
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.features.resize(static_cast<long>(indices.size()), features.cols());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<long>(i)) = features.row(indices[i]);
    out.labels[i] = labels[static_cast<std::size_t>(indices[i])];
  }
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx: cannot open " + images_path.string());
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx: cannot open " + labels_path.string());

  const std::uint32_t images_magic = read_be32(images, images_path.string());
  if (images_magic != kImagesMagic) {
    throw std::runtime_error("idx: bad magic number in " + images_path.string() +
                             ": expected " + hex32(kImagesMagic) + ", got " +
                             hex32(images_magic));
  }
  const std::uint32_t n_images = read_be32(images, images_path.string());
  const std::uint32_t rows = read_be32(images, images_path.string());
  const std::uint32_t cols = read_be32(images, images_path.string());

  const std::uint32_t labels_magic = read_be32(labels, labels_path.string());
  if (labels_magic != kLabelsMagic) {
    throw std::runtime_error("idx: bad magic number in " + labels_path.string() +
                             ": expected " + hex32(kLabelsMagic) + ", got " +
                             hex32(labels_magic));
  }
  const std::uint32_t n_labels = read_be32(labels, labels_path.string());
  if (n_images != n_labels) {
    throw std::runtime_error("idx: image count " + std::to_string(n_images) +
                             " does not match label count " + std::to_string(n_labels));
  }

  const std::size_t n_pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> pixel_buf(n_pixels);
  Dataset ds;
  ds.features.resize(n_images, static_cast<long>(n_pixels));
  ds.labels.resize(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixel_buf.data()),
                     static_cast<std::streamsize>(n_pixels))) {
      throw std::runtime_error("idx: truncated file: " + images_path.string());
    }
    for (std::size_t p = 0; p < n_pixels; ++p) {
      ds.features(i, static_cast<long>(p)) = pixel_buf[p] / 255.0;
    }
    unsigned char label;
    if (!labels.read(reinterpret_cast<char*>(&label), 1)) {
      throw std::runtime_error("idx: truncated file: " + labels_path.string());
    }
    ds.labels[i] = label;
  }
  ds.num_classes =
      ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.name = images_path.stem().string();
  return ds;
}

void save_idx(const Dataset& ds, int rows, int cols,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  if (static_cast<long>(rows) * cols != ds.features.cols()) {
    throw std::invalid_argument("save_idx: rows*cols does not match feature width");
  }
  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx: cannot write " + images_path.string());
  write_be32(images, kImagesMagic);
  write_be32(images, static_cast<std::uint32_t>(ds.size()));
  write_be32(images, static_cast<std::uint32_t>(rows));
  write_be32(images, static_cast<std::uint32_t>(cols));
  for (long i = 0; i < ds.size(); ++i) {
    for (long p = 0; p < ds.features.cols(); ++p) {
      const auto byte = static_cast<unsigned char>(std::llround(ds.features(i, p) * 255.0));
      images.write(reinterpret_cast<const char*>(&byte), 1);
    }
  }
  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx: cannot write " + labels_path.string());
  write_be32(labels, kLabelsMagic);
  write_be32(labels, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) {
    const auto byte = static_cast<unsigned char>(label);
    labels.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

namespace {

// Regular simplex with n_classes vertices and pairwise distance `separation`,
// embedded in n_features dimensions. Scaled standard basis vectors are mapped
// into the sum-zero subspace through the Helmert orthonormal basis, which
// preserves their pairwise distances exactly.
Eigen::MatrixXd simplex_means(int n_classes, int n_features, double separation) {
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n_classes - 1, n_classes);
  for (int k = 1; k < n_classes; ++k) {
    const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
    for (int j = 0; j < k; ++j) basis(k - 1, j) = 1.0 / norm;
    basis(k - 1, k) = -k / norm;
  }
  const double scale = separation / std::sqrt(2.0);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(n_classes, n_features);
  means.leftCols(n_classes - 1) = scale * basis.transpose();
  return means;
}

}  // namespace

Dataset generate_synthetic(int n_samples, int n_features, int n_classes,
                           double class_separation, std::uint64_t seed) {
  if (n_classes < 2) throw std::invalid_argument("generate_synthetic: n_classes must be >= 2");
  if (n_samples < n_classes) {
    throw std::invalid_argument("generate_synthetic: n_samples must be >= n_classes");
  }
  if (n_features < n_classes - 1) {
    throw std::invalid_argument(
        "generate_synthetic: n_features must be >= n_classes - 1 to separate the class means");
  }
  if (!(class_separation > 0)) {
    throw std::invalid_argument("generate_synthetic: class_separation must be positive");
  }

  const Eigen::MatrixXd means = simplex_means(n_classes, n_features, class_separation);
  Rng rng(seed);
  Dataset ds;
  ds.features.resize(n_samples, n_features);
  ds.labels.resize(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const int label = i % n_classes;
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (int f = 0; f < n_features; ++f) {
      ds.features(i, f) = means(label, f) + rng.normal();
    }
  }
  ds.num_classes = n_classes;
  ds.name = "synthetic";
  return ds;
}

PartitionPlan partition(long dataset_size, int n_clients, std::uint64_t seed) {
  if (n_clients < 1 || n_clients > dataset_size) {
    throw std::invalid_argument("partition: need 1 <= n_clients <= dataset_size, got n_clients=" +
                                std::to_string(n_clients) + ", dataset_size=" +
                                std::to_string(dataset_size));
  }
  std::vector<int> order(static_cast<std::size_t>(dataset_size));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  PartitionPlan plan;
  plan.n_clients = n_clients;
  plan.source_size = dataset_size;
  plan.assignments.resize(static_cast<std::size_t>(n_clients));
  const long base = dataset_size / n_clients;
  const long extra = dataset_size % n_clients;
  std::size_t cursor = 0;
  for (int c = 0; c < n_clients; ++c) {
    const long take = base + (c < extra ? 1 : 0);
    auto& shard = plan.assignments[static_cast<std::size_t>(c)];
    shard.assign(order.begin() + static_cast<long>(cursor),
                 order.begin() + static_cast<long>(cursor) + take);
    cursor += static_cast<std::size_t>(take);
  }
  return plan;
}

MembershipSplit make_membership_split(const Dataset& ds, double train_fraction,
                                      int eval_size, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("make_membership_split: train_fraction must be in (0,1)");
  }
  const long n = ds.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const long n_train = static_cast<long>(std::floor(n * train_fraction));
  const long n_holdout = n - n_train;
  if (eval_size < 1 || eval_size > n_train || eval_size > n_holdout) {
    throw std::invalid_argument("make_membership_split: eval_size " + std::to_string(eval_size) +
                                " exceeds a population (train=" + std::to_string(n_train) +
                                ", holdout=" + std::to_string(n_holdout) + ")");
  }
  MembershipSplit split;
  split.member_indices.assign(order.begin(), order.begin() + eval_size);
  split.nonmember_indices.assign(order.begin() + n_train, order.begin() + n_train + eval_size);
  return split;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());

  long n_features = 0;
  {
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) {
      if (field == "label") break;
      const std::string expected = "f" + std::to_string(n_features);
      if (field != expected) {
        throw std::runtime_error("csv: bad header field '" + field + "', expected '" +
                                 expected + "'");
      }
      ++n_features;
    }
  }
  if (n_features == 0) throw std::runtime_error("csv: header has no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(n_features) + 1);
    while (std::getline(ss, field, ',')) {
      double value;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw std::runtime_error("csv: line " + std::to_string(line_no) + ": bad number '" +
                                 field + "'");
      }
      row.push_back(value);
    }
    if (static_cast<long>(row.size()) != n_features + 1) {
      throw std::runtime_error("csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(n_features + 1) + " fields, got " +
                               std::to_string(row.size()));
    }
    labels.push_back(static_cast<int>(row.back()));
    row.pop_back();
    rows.push_back(std::move(row));
  }

  Dataset ds;
  ds.features.resize(static_cast<long>(rows.size()), n_features);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (long f = 0; f < n_features; ++f) {
      ds.features(static_cast<long>(i), f) = rows[i][static_cast<std::size_t>(f)];
    }
  }
  ds.labels = std::move(labels);
  ds.num_classes =
      ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.name = path.stem().string();
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::string out;
  for (long f = 0; f < ds.features.cols(); ++f) {
    out += "f" + std::to_string(f) + ",";
  }
  out += "label\n";
  for (long i = 0; i < ds.size(); ++i) {
    for (long f = 0; f < ds.features.cols(); ++f) {
      out += format_double(ds.features(i, f));
      out += ',';
    }
    out += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace fedmia
