#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fedmia {

struct DenseLayer {
  Eigen::MatrixXd weight;  // [out x in]
  Eigen::VectorXd bias;    // [out]
};

// Fully-connected classifier: ReLU on hidden layers, identity on the output
// layer. Values are immutable by convention; training returns a new net.
struct DenseNet {
  std::vector<DenseLayer> layers;

  std::vector<int> layer_dims() const;
  long parameter_count() const;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  int local_epochs = 1;
  std::uint64_t seed = 0;
};

// Softmax output; entries in [0,1], summing to 1 within 1e-6.
struct ConfidenceVector {
  Eigen::VectorXd probs;
};

// He-style init: weights ~ Normal(0, 2/fan_in), biases zero. Draw order is
// per layer, row-major over the weight matrix.
DenseNet init_params(const std::vector<int>& layer_dims, std::uint64_t seed);

// Logits for a batch (one row per sample).
Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& batch);

// Numerically stable softmax (max subtraction).
ConfidenceVector softmax(const Eigen::VectorXd& logits);
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// Mean softmax cross-entropy over the batch and its exact analytic gradients,
// shaped like the net's parameters.
struct LossAndGrad {
  double loss = 0.0;
  std::vector<DenseLayer> grads;
};
LossAndGrad loss_and_grad(const DenseNet& net, const Eigen::MatrixXd& batch,
                          const std::vector<int>& labels);

// Mini-batch SGD, local_epochs passes, batch order reshuffled each epoch from
// the cfg.seed stream. Pure: the input net is not modified.
DenseNet train_local(const DenseNet& net, const Eigen::MatrixXd& features,
                     const std::vector<int>& labels, const TrainConfig& cfg);

ConfidenceVector predict_confidence(const DenseNet& net, const Eigen::RowVectorXd& sample);

// Index of the largest coefficient; ties go to the lowest index. This defines
// the predicted label everywhere.
int argmax_lowest(const Eigen::VectorXd& values);
std::vector<int> predict_labels(const DenseNet& net, const Eigen::MatrixXd& features);

double accuracy(const DenseNet& net, const Eigen::MatrixXd& features,
                const std::vector<int>& labels);

// Checkpoint file, bit-exact round trip. Layout (little-endian):
//   magic "FMN1", u32 n_dims, u32 dims[n_dims],
//   per layer: f64 weight row-major [out*in], f64 bias [out]
void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

}  // namespace fedmia
