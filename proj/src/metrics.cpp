#include "fedmia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedmia/util.hpp"

namespace fedmia {

double AgreementProfile::mean_fraction() const {
  if (total_correct == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    sum += static_cast<double>(counts[k]) * (static_cast<double>(k) / n_clients);
  }
  return sum / static_cast<double>(total_correct);
}

AgreementProfile agreement_profile(const std::vector<DenseNet>& client_nets,
                                   const DenseNet& global_net, const Eigen::MatrixXd& features,
                                   const std::vector<int>& labels) {
  if (client_nets.empty()) throw std::invalid_argument("agreement_profile: no client nets");
  const long n_samples = features.rows();
  if (static_cast<long>(labels.size()) != n_samples) {
    throw std::invalid_argument("agreement_profile: feature/label count mismatch");
  }
  const int n_clients = static_cast<int>(client_nets.size());

  const std::vector<int> global_pred = predict_labels(global_net, features);
  std::vector<std::vector<int>> client_pred(client_nets.size());
  for (std::size_t c = 0; c < client_nets.size(); ++c) {
    client_pred[c] = predict_labels(client_nets[c], features);
  }

  AgreementProfile profile;
  profile.n_clients = n_clients;
  profile.counts.assign(static_cast<std::size_t>(n_clients) + 1, 0);
  for (long i = 0; i < n_samples; ++i) {
    if (global_pred[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(i)]) continue;
    int agreeing = 0;
    for (const auto& preds : client_pred) {
      if (preds[static_cast<std::size_t>(i)] == global_pred[static_cast<std::size_t>(i)]) {
        ++agreeing;
      }
    }
    ++profile.counts[static_cast<std::size_t>(agreeing)];
    ++profile.total_correct;
  }
  return profile;
}

namespace {

int confidence_bin(double confidence) {
  const int bin = static_cast<int>(confidence * ConfidenceHistogram::kBins);
  return std::clamp(bin, 0, ConfidenceHistogram::kBins - 1);  // 1.0 lands in the top bin
}

void bucket_split(const DenseNet& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                  std::array<long, ConfidenceHistogram::kBins>& correct_counts,
                  std::array<long, ConfidenceHistogram::kBins>& incorrect_counts,
                  long& correct_total, long& incorrect_total) {
  const Eigen::MatrixXd probs = softmax_rows(forward(net, x));
  for (long i = 0; i < x.rows(); ++i) {
    const int predicted = argmax_lowest(probs.row(i).transpose());
    const double confidence = probs(i, predicted);
    if (predicted == y[static_cast<std::size_t>(i)]) {
      ++correct_counts[static_cast<std::size_t>(confidence_bin(confidence))];
      ++correct_total;
    } else {
      ++incorrect_counts[static_cast<std::size_t>(confidence_bin(confidence))];
      ++incorrect_total;
    }
  }
}

}  // namespace

ConfidenceHistogram confidence_histograms(const DenseNet& net, const Eigen::MatrixXd& train_x,
                                          const std::vector<int>& train_y,
                                          const Eigen::MatrixXd& test_x,
                                          const std::vector<int>& test_y) {
  if (train_x.rows() == 0 || test_x.rows() == 0) {
    throw std::invalid_argument("confidence_histograms: empty split");
  }
  ConfidenceHistogram h;
  bucket_split(net, train_x, train_y, h.counts[0], h.counts[1], h.totals[0], h.totals[1]);
  bucket_split(net, test_x, test_y, h.counts[2], h.counts[3], h.totals[2], h.totals[3]);
  return h;
}

double generalization_gap(double train_acc, double test_acc) {
  return train_acc - test_acc;
}

namespace {

// Ranks 1..n with average ranks for ties.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");

  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mean = (n + 1.0) / 2.0;

  double cov = 0.0, varx = 0.0, vary = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    cov += dx * dy;
    varx += dx * dx;
    vary += dy * dy;
  }
  if (varx == 0.0 || vary == 0.0) return {0.0, true};
  return {cov / std::sqrt(varx * vary), false};
}

void write_agreement_csv(const AgreementProfile& train, const AgreementProfile& test,
                         const std::filesystem::path& path) {
  std::string out = "bin_lo,bin_hi,population,count\n";
  const auto emit = [&out](const AgreementProfile& profile, const char* population) {
    for (std::size_t k = 0; k < profile.counts.size(); ++k) {
      const std::string value =
          format_double(static_cast<double>(k) / profile.n_clients);
      out += value + "," + value + "," + population + "," +
             std::to_string(profile.counts[k]) + "\n";
    }
  };
  emit(train, "train");
  emit(test, "test");
  atomic_write_file(path, out);
}

void write_confidence_csv(const ConfidenceHistogram& histogram,
                          const std::filesystem::path& path) {
  std::string out = "bin_lo,bin_hi,population,count\n";
  for (std::size_t p = 0; p < histogram.kPopulations.size(); ++p) {
    for (int b = 0; b < ConfidenceHistogram::kBins; ++b) {
      out += format_double(static_cast<double>(b) / ConfidenceHistogram::kBins) + "," +
             format_double(static_cast<double>(b + 1) / ConfidenceHistogram::kBins) + "," +
             histogram.kPopulations[p] + "," +
             std::to_string(histogram.counts[p][static_cast<std::size_t>(b)]) + "\n";
    }
  }
  atomic_write_file(path, out);
}

ConfidenceMeans mean_max_confidence_by_correctness(const DenseNet& net,
                                                   const Eigen::MatrixXd& features,
                                                   const std::vector<int>& labels) {
  const Eigen::MatrixXd probs = softmax_rows(forward(net, features));
  ConfidenceMeans means;
  double correct_sum = 0.0, incorrect_sum = 0.0;
  for (long i = 0; i < features.rows(); ++i) {
    const int predicted = argmax_lowest(probs.row(i).transpose());
    const double confidence = probs(i, predicted);
    if (predicted == labels[static_cast<std::size_t>(i)]) {
      correct_sum += confidence;
      ++means.n_correct;
    } else {
      incorrect_sum += confidence;
      ++means.n_incorrect;
    }
  }
  means.correct = means.n_correct > 0 ? correct_sum / means.n_correct : 0.0;
  means.incorrect = means.n_incorrect > 0 ? incorrect_sum / means.n_incorrect : 0.0;
  return means;
}

}  // namespace fedmia
