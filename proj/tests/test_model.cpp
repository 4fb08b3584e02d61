#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "fedmia/dataset.hpp"
#include "fedmia/model.hpp"
#include "fedmia/rng.hpp"
#include "support/oracles.hpp"

using namespace fedmia;

namespace {

bool nets_bitwise_equal(const DenseNet& a, const DenseNet& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight != b.layers[l].weight) return false;
    if (a.layers[l].bias != b.layers[l].bias) return false;
  }
  return true;
}

Eigen::MatrixXd random_batch(Rng& rng, long rows, long cols) {
  Eigen::MatrixXd batch(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) batch(i, j) = rng.normal();
  }
  return batch;
}

std::vector<int> random_labels(Rng& rng, long rows, int n_classes) {
  std::vector<int> labels(static_cast<std::size_t>(rows));
  for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
  return labels;
}

}  // namespace

TEST_CASE("init_params is deterministic and shaped by the dims") {
  const DenseNet a = init_params({4, 3}, 5);
  const DenseNet b = init_params({4, 3}, 5);
  CHECK(nets_bitwise_equal(a, b));

  const DenseNet net = init_params({4, 8, 3}, 1);
  REQUIRE(net.layers.size() == 2);
  CHECK(net.layers[0].weight.rows() == 8);
  CHECK(net.layers[0].weight.cols() == 4);
  CHECK(net.layers[0].bias.size() == 8);
  CHECK(net.layers[1].weight.rows() == 3);
  CHECK(net.layers[1].weight.cols() == 8);
  CHECK(net.layers[1].bias.size() == 3);
  CHECK(net.layers[0].bias.isZero());
  CHECK(net.layer_dims() == std::vector<int>{4, 8, 3});
}

TEST_CASE("init_params draws have near-zero mean at MNIST scale") {
  const DenseNet net = init_params({784, 64, 10}, 0);
  CHECK(std::abs(net.layers[0].weight.mean()) < 0.02);
  // and the spread matches the 2/fan_in variance target
  const double var = net.layers[0].weight.array().square().mean();
  CHECK(var == doctest::Approx(2.0 / 784).epsilon(0.1));
}

TEST_CASE("init_params rejects bad dims") {
  CHECK_THROWS_AS(init_params({}, 0), std::invalid_argument);
  CHECK_THROWS_AS(init_params({4}, 0), std::invalid_argument);
  CHECK_THROWS_AS(init_params({4, 0}, 0), std::invalid_argument);
}

TEST_CASE("forward of an all-zero net is all-zero") {
  DenseNet net = init_params({3, 4, 2}, 0);
  for (auto& layer : net.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Rng rng(1);
  const Eigen::MatrixXd batch = random_batch(rng, 5, 3);
  CHECK(forward(net, batch).isZero());
}

TEST_CASE("single-layer forward matches hand arithmetic") {
  DenseNet net;
  net.layers.resize(1);
  net.layers[0].weight.resize(2, 2);
  net.layers[0].weight << 1.0, 2.0, 3.0, 4.0;
  net.layers[0].bias.resize(2);
  net.layers[0].bias << 0.5, -0.5;
  Eigen::MatrixXd x(1, 2);
  x << 10.0, 20.0;
  const Eigen::MatrixXd logits = forward(net, x);
  // z0 = 1*10 + 2*20 + 0.5, z1 = 3*10 + 4*20 - 0.5
  CHECK(logits(0, 0) == doctest::Approx(50.5));
  CHECK(logits(0, 1) == doctest::Approx(109.5));
}

TEST_CASE("forward matches a straight-line reimplementation") {
  Rng rng(2024);
  const DenseNet net = init_params({6, 5, 4, 3}, 77);
  const Eigen::MatrixXd batch = random_batch(rng, 9, 6);
  const Eigen::MatrixXd fast = forward(net, batch);
  const Eigen::MatrixXd slow = oracles::naive_forward(net, batch);
  CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward rejects a width mismatch") {
  const DenseNet net = init_params({3, 2}, 0);
  Eigen::MatrixXd bad(1, 4);
  bad.setZero();
  CHECK_THROWS_AS(forward(net, bad), std::invalid_argument);
}

TEST_CASE("softmax handles symmetry, extremes, and the closed form") {
  Eigen::VectorXd flat(3);
  flat << 0.0, 0.0, 0.0;
  const ConfidenceVector uniform = softmax(flat);
  for (int i = 0; i < 3; ++i) CHECK(uniform.probs(i) == doctest::Approx(1.0 / 3));

  Eigen::VectorXd extreme(2);
  extreme << 1000.0, 0.0;
  const ConfidenceVector stable = softmax(extreme);
  CHECK(std::isfinite(stable.probs(0)));
  CHECK(stable.probs(0) == doctest::Approx(1.0));
  CHECK(stable.probs(1) == doctest::Approx(0.0));

  Eigen::VectorXd ramp(3);
  ramp << 1.0, 2.0, 3.0;
  const ConfidenceVector probs = softmax(ramp);
  CHECK(std::abs(probs.probs(0) - 0.09003) < 1e-5);
  CHECK(std::abs(probs.probs(1) - 0.24473) < 1e-5);
  CHECK(std::abs(probs.probs(2) - 0.66524) < 1e-5);
}

TEST_CASE("softmax sums to one and is monotone in its logits") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd logits(5);
    for (int i = 0; i < 5; ++i) logits(i) = 10.0 * (rng.uniform01() - 0.5);
    const ConfidenceVector probs = softmax(logits);
    CHECK(std::abs(probs.probs.sum() - 1.0) <= 1e-6);
    CHECK(probs.probs.minCoeff() >= 0.0);

    const int bumped = static_cast<int>(rng.below(5));
    Eigen::VectorXd raised = logits;
    raised(bumped) += 0.5;
    CHECK(softmax(raised).probs(bumped) > probs.probs(bumped));
  }
}

TEST_CASE("uniform outputs give ln(C) loss") {
  DenseNet net = init_params({4, 6, 3}, 3);
  for (auto& layer : net.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Rng rng(4);
  const Eigen::MatrixXd batch = random_batch(rng, 7, 4);
  const std::vector<int> labels = random_labels(rng, 7, 3);
  const LossAndGrad lg = loss_and_grad(net, batch, labels);
  CHECK(lg.loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(31337);
  const double eps = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const DenseNet net = init_params({3, 4, 2}, rng.next_u64());
    const Eigen::MatrixXd batch = random_batch(rng, 5, 3);
    const std::vector<int> labels = random_labels(rng, 5, 2);
    const LossAndGrad lg = loss_and_grad(net, batch, labels);
    CHECK(lg.loss == doctest::Approx(oracles::naive_loss(net, batch, labels)));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      for (long r = 0; r < net.layers[l].weight.rows(); ++r) {
        for (long c = 0; c < net.layers[l].weight.cols(); ++c) {
          const double analytic = lg.grads[l].weight(r, c);
          const double fd = oracles::fd_weight_grad(net, batch, labels, l, r, c, eps);
          const double scale = std::max({std::abs(analytic), std::abs(fd), 1.0});
          CHECK(std::abs(analytic - fd) <= 1e-5 * scale);
          ++checked;
        }
      }
      for (long r = 0; r < net.layers[l].bias.size(); ++r) {
        const double analytic = lg.grads[l].bias(r);
        const double fd = oracles::fd_bias_grad(net, batch, labels, l, r, eps);
        const double scale = std::max({std::abs(analytic), std::abs(fd), 1.0});
        CHECK(std::abs(analytic - fd) <= 1e-5 * scale);
        ++checked;
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("duplicating every sample leaves loss and grads unchanged") {
  Rng rng(55);
  const DenseNet net = init_params({3, 4, 2}, 9);
  const Eigen::MatrixXd batch = random_batch(rng, 6, 3);
  const std::vector<int> labels = random_labels(rng, 6, 2);

  Eigen::MatrixXd doubled(12, 3);
  doubled << batch, batch;
  std::vector<int> doubled_labels = labels;
  doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());

  const LossAndGrad lg1 = loss_and_grad(net, batch, labels);
  const LossAndGrad lg2 = loss_and_grad(net, doubled, doubled_labels);
  CHECK(lg1.loss == doctest::Approx(lg2.loss));
  for (std::size_t l = 0; l < lg1.grads.size(); ++l) {
    CHECK((lg1.grads[l].weight - lg2.grads[l].weight).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lg1.grads[l].bias - lg2.grads[l].bias).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("train_local with a vanishing learning rate is a null update") {
  const Dataset ds = generate_synthetic(40, 3, 2, 3.0, 6);
  const DenseNet net = init_params({3, 4, 2}, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e-12;
  cfg.local_epochs = 2;
  cfg.seed = 3;
  const DenseNet out = train_local(net, ds.features, ds.labels, cfg);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK((out.layers[l].weight - net.layers[l].weight).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((out.layers[l].bias - net.layers[l].bias).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("train_local converges on separable blobs") {
  const Dataset ds = generate_synthetic(200, 4, 3, 6.0, 11);
  const DenseNet net = init_params({4, 16, 3}, 2);
  TrainConfig cfg;
  cfg.local_epochs = 50;
  cfg.seed = 17;
  const DenseNet trained = train_local(net, ds.features, ds.labels, cfg);
  CHECK(accuracy(trained, ds.features, ds.labels) >= 0.99);
}

TEST_CASE("train_local is bitwise deterministic and pure") {
  const Dataset ds = generate_synthetic(60, 3, 2, 3.0, 5);
  const DenseNet net = init_params({3, 8, 2}, 4);
  const DenseNet before = net;
  TrainConfig cfg;
  cfg.local_epochs = 3;
  cfg.seed = 12;
  const DenseNet a = train_local(net, ds.features, ds.labels, cfg);
  const DenseNet b = train_local(net, ds.features, ds.labels, cfg);
  CHECK(nets_bitwise_equal(a, b));
  CHECK(nets_bitwise_equal(net, before));
  CHECK_FALSE(nets_bitwise_equal(a, net));
}

TEST_CASE("loss decreases monotonically on separable data until small") {
  const Dataset ds = generate_synthetic(150, 4, 3, 6.0, 23);
  DenseNet net = init_params({4, 16, 3}, 8);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.local_epochs = 1;
  double prev = loss_and_grad(net, ds.features, ds.labels).loss;
  for (int epoch = 0; epoch < 200 && prev >= 0.05; ++epoch) {
    cfg.seed = derive_seed(99, "epoch", {static_cast<std::uint64_t>(epoch)});
    net = train_local(net, ds.features, ds.labels, cfg);
    const double loss = loss_and_grad(net, ds.features, ds.labels).loss;
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("predict_confidence of a zero net is uniform") {
  DenseNet net = init_params({3, 4}, 0);
  net.layers[0].weight.setZero();
  net.layers[0].bias.setZero();
  Eigen::RowVectorXd x(3);
  x << 1.0, -2.0, 0.5;
  const ConfidenceVector conf = predict_confidence(net, x);
  for (int i = 0; i < 4; ++i) CHECK(conf.probs(i) == doctest::Approx(0.25));
}

TEST_CASE("members of an overfit model carry more confidence than holdouts") {
  const Dataset ds = generate_synthetic(400, 8, 4, 1.5, 31);
  const Dataset members = ds.subset([] {
    std::vector<int> idx(200);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }());
  const Dataset holdout = ds.subset([] {
    std::vector<int> idx(200);
    std::iota(idx.begin(), idx.end(), 200);
    return idx;
  }());
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.local_epochs = 800;
  cfg.seed = 7;
  const DenseNet trained =
      train_local(init_params({8, 128, 4}, 3), members.features, members.labels, cfg);

  const auto mean_max_conf = [&](const Dataset& split) {
    return softmax_rows(forward(trained, split.features)).rowwise().maxCoeff().mean();
  };
  CHECK(mean_max_conf(members) > mean_max_conf(holdout));
}

TEST_CASE("accuracy counts argmax hits with low-index tie-breaking") {
  DenseNet net = init_params({2, 3}, 0);
  net.layers[0].weight.setZero();
  net.layers[0].bias.setZero();  // all logits equal -> predicted label 0
  Eigen::MatrixXd x(4, 2);
  x.setRandom();
  CHECK(accuracy(net, x, {0, 0, 0, 0}) == 1.0);
  CHECK(accuracy(net, x, {1, 0, 2, 0}) == 0.5);
}

TEST_CASE("accuracy is near chance for an untrained net on random labels") {
  const Dataset ds = generate_synthetic(1000, 4, 2, 0.1, 19);
  Rng rng(77);
  std::vector<int> random = ds.labels;
  rng.shuffle(random);
  const DenseNet net = init_params({4, 8, 2}, 5);
  CHECK(std::abs(accuracy(net, ds.features, random) - 0.5) < 0.1);
}

TEST_CASE("accuracy matches a brute-force recount") {
  const Dataset ds = generate_synthetic(120, 3, 3, 2.0, 9);
  TrainConfig cfg;
  cfg.local_epochs = 10;
  cfg.seed = 2;
  const DenseNet net = train_local(init_params({3, 8, 3}, 1), ds.features, ds.labels, cfg);
  long correct = 0;
  for (long i = 0; i < ds.size(); ++i) {
    const ConfidenceVector conf = predict_confidence(net, ds.features.row(i));
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (conf.probs(c) > conf.probs(best)) best = c;
    }
    if (best == ds.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  CHECK(accuracy(net, ds.features, ds.labels) ==
        doctest::Approx(static_cast<double>(correct) / ds.size()));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const DenseNet net = init_params({5, 7, 3}, 123);
  const auto path = std::filesystem::temp_directory_path() / "fedmia_ckpt_test.ckpt";
  save_checkpoint(net, path);
  const DenseNet back = load_checkpoint(path);
  CHECK(nets_bitwise_equal(net, back));
}
