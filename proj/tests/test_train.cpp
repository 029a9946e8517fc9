#include "dtlab/train.hpp"

#include <cstdio>

#include "doctest.h"
#include "dtlab/rng.hpp"

using namespace dtlab;

namespace {

EmpiricalDataset linear_teacher_data(int n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = "linear-teacher";
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.n_samples = n;
  spec.seed = seed;
  return generate_synthetic(spec).first;
}

bool models_equal(const TrainedModel& a, const TrainedModel& b) {
  return networks_equal(a.extractor, b.extractor) && a.head_weight == b.head_weight &&
         a.head_bias == b.head_bias;
}

}  // namespace

TEST_CASE("sgd_train: realizable linear problem reaches ~zero loss") {
  const EmpiricalDataset data = linear_teacher_data(32, 1);
  const Network arch = random_network({2, 1}, Activation::kIdentity, 2);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.seed = 3;
  const TrainedModel model = sgd_train(cfg, data, arch);
  CHECK(model.history.back().loss < 1e-6);
  CHECK(model.history.size() == 500);
  for (std::size_t i = 1; i < model.history.size(); ++i) {
    CHECK(model.history[i].epoch == model.history[i - 1].epoch + 1);
  }
}

TEST_CASE("sgd_train: weight decay shrinks extractor norms") {
  const EmpiricalDataset data = linear_teacher_data(32, 5);
  const Network arch = random_network({2, 8, 1}, Activation::kTanh, 6);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 8;
  cfg.lr = 0.02;
  cfg.seed = 7;
  const TrainedModel plain = sgd_train(cfg, data, arch);
  cfg.regularizer.kind = RegularizerKind::kWeightDecay;
  cfg.regularizer.lambda = 10.0;
  const TrainedModel decayed = sgd_train(cfg, data, arch);
  double n_plain = 0.0, n_decayed = 0.0;
  for (const Layer& l : plain.extractor.layers()) n_plain += l.weight.squaredNorm();
  for (const Layer& l : decayed.extractor.layers()) n_decayed += l.weight.squaredNorm();
  CHECK(n_decayed < n_plain);
}

TEST_CASE("sgd_train: zero-strength regularizers reproduce the plain trajectory bit-for-bit") {
  const EmpiricalDataset data = linear_teacher_data(24, 9);
  const Network arch = random_network({2, 6, 1}, Activation::kRelu, 10);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.seed = 11;
  const TrainedModel plain = sgd_train(cfg, data, arch);

  for (auto kind : {RegularizerKind::kJacobian, RegularizerKind::kWeightDecay,
                    RegularizerKind::kLastLayer}) {
    TrainConfig zc = cfg;
    zc.regularizer.kind = kind;
    zc.regularizer.lambda = 0.0;
    CHECK(models_equal(plain, sgd_train(zc, data, arch)));
  }
  TrainConfig adv = cfg;
  adv.regularizer.kind = RegularizerKind::kAdversarial;
  adv.regularizer.adv_epsilon = 0.0;
  CHECK(models_equal(plain, sgd_train(adv, data, arch)));
}

TEST_CASE("sgd_train: determinism given the seed") {
  const EmpiricalDataset data = linear_teacher_data(24, 13);
  const Network arch = random_network({2, 4, 1}, Activation::kTanh, 14);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 5;
  cfg.lr = 0.03;
  cfg.seed = 15;
  cfg.regularizer.kind = RegularizerKind::kJacobian;
  cfg.regularizer.lambda = 0.01;
  CHECK(models_equal(sgd_train(cfg, data, arch), sgd_train(cfg, data, arch)));
}

TEST_CASE("sgd_train: ll-norm keeps the head at the target Frobenius norm") {
  const EmpiricalDataset data = linear_teacher_data(24, 17);
  const Network arch = random_network({2, 4, 1}, Activation::kRelu, 18);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 6;
  cfg.lr = 0.05;
  cfg.seed = 19;
  cfg.regularizer.kind = RegularizerKind::kLastLayerNorm;
  cfg.regularizer.target_norm = 2.5;
  const TrainedModel model = sgd_train(cfg, data, arch);
  CHECK(model.head_weight.norm() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("sgd_train: diverging run aborts with epoch/step indices") {
  const EmpiricalDataset data = linear_teacher_data(16, 21);
  const Network arch = random_network({2, 4, 1}, Activation::kIdentity, 22);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.lr = 50.0;  // wildly unstable
  cfg.seed = 23;
  CHECK_THROWS_WITH_AS(sgd_train(cfg, data, arch), doctest::Contains("epoch"),
                       std::runtime_error);
}

TEST_CASE("fine_tune_linear: identity extractor on y=2x recovers the teacher") {
  const EmpiricalDataset data = linear_teacher_data(16, 25);
  Layer id{Matrix::Identity(2, 2), Vector::Zero(2), Activation::kIdentity};
  const Network extractor({id});
  const FineTuneResult r = fine_tune_linear(extractor, data, 0.0);
  CHECK(r.loss <= 1e-20);
  CHECK(r.head_weight(0, 0) == doctest::Approx(2.0));
  CHECK(std::abs(r.head_bias[0]) <= 1e-9);
}

TEST_CASE("fine_tune_linear: constant features give mean target and variance loss") {
  EmpiricalDataset data;
  data.inputs = Matrix::Ones(4, 1);
  data.targets = Matrix(4, 1);
  data.targets << -1.0, 1.0, 3.0, -3.0;  // mean 0
  Layer zero{Matrix::Zero(1, 1), Vector::Ones(1), Activation::kIdentity};
  const Network extractor({zero});
  const FineTuneResult r = fine_tune_linear(extractor, data, 0.0);
  const double mean = data.targets.mean();
  CHECK(r.head_weight(0, 0) + r.head_bias[0] == doctest::Approx(mean).epsilon(1e-9));
  CHECK(r.loss == doctest::Approx((data.targets.array() - mean).square().mean()));
}

TEST_CASE("fine_tune_linear: huge ridge shrinks the head to zero") {
  const EmpiricalDataset data = linear_teacher_data(16, 27);
  Layer id{Matrix::Identity(2, 2), Vector::Zero(2), Activation::kIdentity};
  const Network extractor({id});
  const FineTuneResult r = fine_tune_linear(extractor, data, 1e12);
  CHECK(r.head_weight.norm() <= 1e-9);
  CHECK(r.head_bias.norm() <= 1e-9);
  const double zero_loss = data.targets.array().square().rowwise().sum().mean();
  CHECK(r.loss == doctest::Approx(zero_loss).epsilon(1e-6));
}

TEST_CASE("fine_tune_linear beats 100 random heads on the same features") {
  const EmpiricalDataset data = linear_teacher_data(24, 29);
  const Network extractor = random_network({2, 5, 3}, Activation::kTanh, 30);
  const FineTuneResult best = fine_tune_linear(extractor, data, 0.0);
  SplitMix64 rng(31);
  for (int t = 0; t < 100; ++t) {
    TrainedModel probe;
    probe.extractor = extractor;
    probe.head_weight = Matrix(1, 3);
    for (int c = 0; c < 3; ++c) probe.head_weight(0, c) = rng.gaussian();
    probe.head_bias = Vector{{rng.gaussian()}};
    CHECK(best.loss <= evaluate(probe, data, EvalMode::kSquaredLoss) + 1e-12);
  }
}

TEST_CASE("evaluate: perfect predictor and zero model") {
  EmpiricalDataset data;
  data.inputs = Matrix::Identity(3, 3);
  data.targets = Matrix::Identity(3, 3);  // one-hot
  TrainedModel zero;
  Layer id{Matrix::Identity(3, 3), Vector::Zero(3), Activation::kIdentity};
  zero.extractor = Network({id});
  zero.head_weight = Matrix::Zero(3, 3);
  zero.head_bias = Vector::Zero(3);
  CHECK(evaluate(zero, data, EvalMode::kSquaredLoss) == doctest::Approx(1.0));

  TrainedModel perfect = zero;
  perfect.head_weight = Matrix::Identity(3, 3);
  CHECK(evaluate(perfect, data, EvalMode::kSquaredLoss) == 0.0);
  CHECK(evaluate(perfect, data, EvalMode::kArgmaxAccuracy) == 1.0);
}

TEST_CASE("evaluate: equal-logit tie picks class 0") {
  EmpiricalDataset data;
  data.inputs = Matrix::Ones(1, 1);
  data.targets = Matrix(1, 2);
  data.targets << 1.0, 0.0;
  TrainedModel model;
  Layer id{Matrix::Identity(1, 1), Vector::Zero(1), Activation::kIdentity};
  model.extractor = Network({id});
  model.head_weight = Matrix::Zero(2, 1);
  model.head_bias = Vector::Zero(2);  // both logits 0 -> tie -> class 0
  CHECK(evaluate(model, data, EvalMode::kArgmaxAccuracy) == 1.0);
}

TEST_CASE("model save/load round trip") {
  const EmpiricalDataset data = linear_teacher_data(16, 33);
  const Network arch = random_network({2, 4, 1}, Activation::kRelu, 34);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 35;
  const TrainedModel model = sgd_train(cfg, data, arch);
  const std::string path = "/tmp/dtlab_test_model.txt";
  save_model(model, path);
  const TrainedModel back = load_model(path);
  CHECK(models_equal(model, back));
  std::remove(path.c_str());
}

TEST_CASE("sgd_train with data-level gaussian augmentation still fits") {
  const EmpiricalDataset data = linear_teacher_data(32, 37);
  const Network arch = random_network({2, 1}, Activation::kIdentity, 38);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  cfg.seed = 39;
  AugmentationSpec aug;
  aug.level = AugLevel::kData;
  aug.b_kind = BDistKind::kGaussianIso;
  aug.b_sigma = 0.05;
  aug.seed = 40;
  cfg.augmentation = aug;
  const TrainedModel model = sgd_train(cfg, data, arch);
  CHECK(model.history.back().loss < 0.05);
}

TEST_CASE("sgd_train with feature-level augmentation runs and fits") {
  const EmpiricalDataset data = linear_teacher_data(32, 41);
  const Network arch = random_network({2, 4, 1}, Activation::kTanh, 42);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 8;
  cfg.lr = 0.03;
  cfg.seed = 43;
  AugmentationSpec aug;
  aug.level = AugLevel::kFeature;
  aug.w_kind = WDistKind::kRademacherDiagonal;
  aug.w_scale = 0.05;
  aug.seed = 44;
  cfg.augmentation = aug;
  const TrainedModel model = sgd_train(cfg, data, arch);
  CHECK(model.history.back().loss < 1.0);
}
