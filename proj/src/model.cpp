#include "fedmia/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fedmia/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace fedmia {

std::vector<int> DenseNet::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const auto& layer : layers) dims.push_back(static_cast<int>(layer.weight.rows()));
  return dims;
}

long DenseNet::parameter_count() const {
  long count = 0;
  for (const auto& layer : layers) count += layer.weight.size() + layer.bias.size();
  return count;
}

DenseNet init_params(const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("init_params: need at least 2 layer dims");
  }
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("init_params: layer dims must be positive");
  }
  Rng rng(seed);
  DenseNet net;
  net.layers.resize(layer_dims.size() - 1);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double stddev = std::sqrt(2.0 / fan_in);
    auto& layer = net.layers[l];
    layer.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = stddev * rng.normal();
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
  }
  return net;
}

Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& batch) {
  if (net.layers.empty()) throw std::invalid_argument("forward: empty net");
  if (batch.cols() != net.layers.front().weight.cols()) {
    throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                " does not match input dim " +
                                std::to_string(net.layers.front().weight.cols()));
  }
  Eigen::MatrixXd h = batch;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < net.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

ConfidenceVector softmax(const Eigen::VectorXd& logits) {
  const double max = logits.maxCoeff();
  Eigen::VectorXd exps = (logits.array() - max).exp();
  return ConfidenceVector{exps / exps.sum()};
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (long i = 0; i < logits.rows(); ++i) {
    const double max = logits.row(i).maxCoeff();
    Eigen::ArrayXd exps = (logits.row(i).array() - max).exp();
    probs.row(i) = exps / exps.sum();
  }
  return probs;
}

LossAndGrad loss_and_grad(const DenseNet& net, const Eigen::MatrixXd& batch,
                          const std::vector<int>& labels) {
  const long n = batch.rows();
  if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (static_cast<long>(labels.size()) != n) {
    throw std::invalid_argument("loss_and_grad: batch/label count mismatch");
  }
  const std::size_t n_layers = net.layers.size();

  // Forward pass keeping pre- and post-activation values per layer.
  std::vector<Eigen::MatrixXd> activations(n_layers + 1);
  std::vector<Eigen::MatrixXd> preacts(n_layers);
  activations[0] = batch;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    preacts[l] = activations[l] * layer.weight.transpose();
    preacts[l].rowwise() += layer.bias.transpose();
    if (l + 1 < n_layers) {
      activations[l + 1] = preacts[l].cwiseMax(0.0);
    } else {
      activations[l + 1] = preacts[l];
    }
  }

  const Eigen::MatrixXd& logits = activations[n_layers];
  const long n_classes = logits.cols();
  double loss = 0.0;
  Eigen::MatrixXd delta(n, n_classes);  // softmax(logits) - onehot(labels)
  for (long i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= n_classes) {
      throw std::invalid_argument("loss_and_grad: label out of range");
    }
    const double max = logits.row(i).maxCoeff();
    const Eigen::ArrayXd shifted = logits.row(i).array() - max;
    const double log_sum = std::log(shifted.exp().sum());
    loss -= shifted(label) - log_sum;
    delta.row(i) = (shifted - log_sum).exp();
    delta(i, label) -= 1.0;
  }
  loss /= static_cast<double>(n);

  LossAndGrad result;
  result.loss = loss;
  result.grads.resize(n_layers);
  Eigen::MatrixXd dz = delta / static_cast<double>(n);
  for (std::size_t l = n_layers; l-- > 0;) {
    result.grads[l].weight = dz.transpose() * activations[l];
    result.grads[l].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd da = dz * net.layers[l].weight;
      dz = da.cwiseProduct((preacts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return result;
}

DenseNet train_local(const DenseNet& net, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels, const TrainConfig& cfg) {
  const long n = features.rows();
  if (n == 0) throw std::invalid_argument("train_local: empty data");
  if (cfg.learning_rate <= 0 || cfg.batch_size < 1 || cfg.local_epochs < 1) {
    throw std::invalid_argument("train_local: invalid config");
  }

  DenseNet out = net;
  Rng rng(cfg.seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (long start = 0; start < n; start += cfg.batch_size) {
      const long count = std::min<long>(cfg.batch_size, n - start);
      Eigen::MatrixXd batch(count, features.cols());
      std::vector<int> batch_labels(static_cast<std::size_t>(count));
      for (long i = 0; i < count; ++i) {
        const int src = order[static_cast<std::size_t>(start + i)];
        batch.row(i) = features.row(src);
        batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      }
      const LossAndGrad lg = loss_and_grad(out, batch, batch_labels);
      for (std::size_t l = 0; l < out.layers.size(); ++l) {
        out.layers[l].weight -= cfg.learning_rate * lg.grads[l].weight;
        out.layers[l].bias -= cfg.learning_rate * lg.grads[l].bias;
      }
    }
  }
  return out;
}

ConfidenceVector predict_confidence(const DenseNet& net, const Eigen::RowVectorXd& sample) {
  const Eigen::MatrixXd logits = forward(net, sample);
  return softmax(logits.row(0).transpose());
}

int argmax_lowest(const Eigen::VectorXd& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = i;
  }
  return best;
}

std::vector<int> predict_labels(const DenseNet& net, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd logits = forward(net, features);
  std::vector<int> labels(static_cast<std::size_t>(logits.rows()));
  for (long i = 0; i < logits.rows(); ++i) {
    labels[static_cast<std::size_t>(i)] = argmax_lowest(logits.row(i).transpose());
  }
  return labels;
}

double accuracy(const DenseNet& net, const Eigen::MatrixXd& features,
                const std::vector<int>& labels) {
  const long n = features.rows();
  if (n == 0) throw std::invalid_argument("accuracy: empty data");
  const std::vector<int> predicted = predict_labels(net, features);
  long correct = 0;
  for (long i = 0; i < n; ++i) {
    if (predicted[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {
constexpr char kCheckpointMagic[4] = {'F', 'M', 'N', '1'};
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  const std::vector<int> dims = net.layer_dims();
  const std::uint32_t n_dims = static_cast<std::uint32_t>(dims.size());
  out.write(reinterpret_cast<const char*>(&n_dims), 4);
  for (int d : dims) {
    const std::uint32_t v = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  for (const auto& layer : net.layers) {
    for (long r = 0; r < layer.weight.rows(); ++r) {
      for (long c = 0; c < layer.weight.cols(); ++c) {
        const double v = layer.weight(r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
    out.write(reinterpret_cast<const char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * 8));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

DenseNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  std::uint32_t n_dims = 0;
  if (!in.read(reinterpret_cast<char*>(&n_dims), 4) || n_dims < 2) {
    throw std::runtime_error("checkpoint: bad header in " + path.string());
  }
  std::vector<int> dims(n_dims);
  for (auto& d : dims) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) {
      throw std::runtime_error("checkpoint: truncated header in " + path.string());
    }
    d = static_cast<int>(v);
  }
  DenseNet net;
  net.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    auto& layer = net.layers[l];
    layer.weight.resize(dims[l + 1], dims[l]);
    for (long r = 0; r < layer.weight.rows(); ++r) {
      for (long c = 0; c < layer.weight.cols(); ++c) {
        double v = 0;
        if (!in.read(reinterpret_cast<char*>(&v), 8)) {
          throw std::runtime_error("checkpoint: truncated weights in " + path.string());
        }
        layer.weight(r, c) = v;
      }
    }
    layer.bias.resize(dims[l + 1]);
    if (!in.read(reinterpret_cast<char*>(layer.bias.data()),
                 static_cast<std::streamsize>(layer.bias.size() * 8))) {
      throw std::runtime_error("checkpoint: truncated biases in " + path.string());
    }
  }
  return net;
}

}  // namespace fedmia
