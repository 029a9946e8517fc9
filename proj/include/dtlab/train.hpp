#ifndef DTLAB_TRAIN_HPP_
#define DTLAB_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dtlab/augment.hpp"
#include "dtlab/dataset.hpp"
#include "dtlab/network.hpp"

namespace dtlab {

enum class RegularizerKind { kNone, kWeightDecay, kJacobian, kLastLayer, kLastLayerNorm, kAdversarial };

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::kNone;
  double lambda = 0.0;       // wd / jr / llr strength
  double target_norm = 1.0;  // ll-norm projection target
  // adversarial training (inner maximization)
  double adv_epsilon = 0.25;
  int adv_steps = 20;
  double adv_step_size = 0.0;  // <= 0 means epsilon / 8

  void validate() const;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<int> lr_decay_epochs;  // 1-based epochs at which lr *= decay_factor
  double decay_factor = 0.1;
  std::uint64_t seed = 0;
  RegularizerSpec regularizer;
  std::optional<AugmentationSpec> augmentation;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // empirical squared risk on the full training set
  double lr = 0.0;
};

// Extractor (all layers below the head) plus a linear head.
struct TrainedModel {
  Network extractor;
  Matrix head_weight;  // out x feature
  Vector head_bias;    // out
  std::vector<EpochRecord> history;

  int feature_dim() const { return static_cast<int>(head_weight.cols()); }
  int output_dim() const { return static_cast<int>(head_weight.rows()); }
  Network full_network() const;
  Vector predict(const Vector& x) const;

  static TrainedModel from_network(const Network& net);
};

// Momentum SGD on the squared empirical risk of arch (hidden layers + head),
// with the configured regularizer/augmentation. Deterministic given the seed.
// Throws std::runtime_error with epoch/step indices if the loss goes
// non-finite.
TrainedModel sgd_train(const TrainConfig& config, const EmpiricalDataset& data, const Network& arch);

struct FineTuneResult {
  Matrix head_weight;
  Vector head_bias;
  double loss = 0.0;  // plain squared loss of the returned head on `data`
};

// Exact ridge least squares over the features [f(x); 1]. ridge = 0 uses the
// minimum-norm solution, so rank-deficient features are fine.
FineTuneResult fine_tune_linear(const Network& extractor, const EmpiricalDataset& data, double ridge);

enum class EvalMode { kSquaredLoss, kArgmaxAccuracy };

double evaluate(const TrainedModel& model, const EmpiricalDataset& data, EvalMode mode);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace dtlab

#endif  // DTLAB_TRAIN_HPP_
