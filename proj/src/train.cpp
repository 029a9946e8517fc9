#include "dtlab/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dtlab/robustness.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

Network identity_network(int dim) {
  Layer l;
  l.weight = Matrix::Identity(dim, dim);
  l.bias = Vector::Zero(dim);
  l.activation = Activation::kIdentity;
  return Network({l});
}

double dataset_loss(const Network& net, const Matrix& inputs, const Matrix& targets) {
  double total = 0.0;
  for (int i = 0; i < inputs.rows(); ++i) {
    total += (predict(net, inputs.row(i).transpose()) - targets.row(i).transpose()).squaredNorm();
  }
  return total / inputs.rows();
}

// Gradient of the batch risk with a frozen affine feature transform spliced
// between the extractor and the head. The transform's own slot is dropped.
ParamGrad grad_with_feature_transform(const Network& net, const Matrix& w, const Vector& b,
                                      const Vector& x, const Vector& y) {
  const int head = net.depth() - 1;
  std::vector<Layer> layers(net.layers().begin(), net.layers().end() - 1);
  layers.push_back(Layer{w, b, Activation::kIdentity});
  layers.push_back(net.layers().back());
  const Network augmented(std::move(layers));
  Matrix xi(1, x.size());
  xi.row(0) = x.transpose();
  Matrix yi(1, y.size());
  yi.row(0) = y.transpose();
  ParamGrad g = grad_params(augmented, xi, yi);
  ParamGrad out = ParamGrad::zeros_like(net);
  for (int j = 0; j < head; ++j) {
    out.dw[j] = std::move(g.dw[j]);
    out.db[j] = std::move(g.db[j]);
  }
  out.dw[head] = std::move(g.dw[head + 1]);
  out.db[head] = std::move(g.db[head + 1]);
  return out;
}

Network extractor_of(const Network& net) {
  if (net.depth() == 1) return identity_network(net.input_dim());
  std::vector<Layer> layers(net.layers().begin(), net.layers().end() - 1);
  // The extractor stands alone, so its last layer keeps its activation only
  // if it is already identity; hidden nonlinearities stay as they are.
  if (layers.back().activation != Activation::kIdentity) {
    // Wrap: keep the nonlinearity by appending an identity passthrough.
    Layer pass;
    const int dim = static_cast<int>(layers.back().weight.rows());
    pass.weight = Matrix::Identity(dim, dim);
    pass.bias = Vector::Zero(dim);
    pass.activation = Activation::kIdentity;
    layers.push_back(std::move(pass));
  }
  return Network(std::move(layers));
}

}  // namespace

void RegularizerSpec::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("regularizer: lambda must be >= 0");
  if (kind == RegularizerKind::kLastLayerNorm && target_norm <= 0.0) {
    throw std::invalid_argument("regularizer: target_norm must be > 0");
  }
  if (kind == RegularizerKind::kAdversarial) {
    if (adv_epsilon < 0.0 || adv_steps < 0 || adv_step_size < 0.0) {
      throw std::invalid_argument("regularizer: bad adversarial settings");
    }
  }
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("train: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must be in [0,1)");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  regularizer.validate();
  if (augmentation) augmentation->validate();
}

Network TrainedModel::full_network() const {
  std::vector<Layer> layers = extractor.layers();
  layers.push_back(Layer{head_weight, head_bias, Activation::kIdentity});
  return Network(std::move(layers));
}

Vector TrainedModel::predict(const Vector& x) const {
  return head_weight * dtlab::predict(extractor, x) + head_bias;
}

TrainedModel TrainedModel::from_network(const Network& net) {
  TrainedModel model;
  model.extractor = extractor_of(net);
  model.head_weight = net.layers().back().weight;
  model.head_bias = net.layers().back().bias;
  return model;
}

TrainedModel sgd_train(const TrainConfig& config, const EmpiricalDataset& data, const Network& arch) {
  config.validate();
  data.validate();
  if (arch.output_dim() != data.target_dim()) {
    throw std::invalid_argument("sgd_train: arch output dim != target dim");
  }
  if (arch.input_dim() != data.input_dim()) {
    throw std::invalid_argument("sgd_train: arch input dim != data input dim");
  }

  Network net = arch;
  const int depth = net.depth();
  const int head = depth - 1;
  const int n = data.size();
  const RegularizerSpec& reg = config.regularizer;

  std::optional<TransformSampler> aug_sampler;
  AugLevel aug_level = AugLevel::kData;
  if (config.augmentation) {
    AugmentationSpec aug = *config.augmentation;
    // Fold the training seed in so sweep cells with different seeds see
    // different augmentation noise.
    SplitMix64 mix(aug.seed ^ (config.seed * 0x9E3779B97F4A7C15ULL));
    aug.seed = mix.next_u64();
    aug_level = aug.level;
    const int dim = aug.level == AugLevel::kData
                        ? net.input_dim()
                        : static_cast<int>(net.layers()[head].weight.cols());
    aug_sampler.emplace(aug, dim);
  }

  ParamGrad velocity = ParamGrad::zeros_like(net);
  double lr = config.lr;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainedModel model;
  model.history.reserve(config.epochs);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int e : config.lr_decay_epochs) {
      if (e == epoch) lr *= config.decay_factor;
    }
    SplitMix64 shuffle_rng = SplitMix64::substream(config.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    shuffle_in_place(order, shuffle_rng);

    for (int start = 0, step = 0; start < n; start += config.batch_size, ++step) {
      const int bsz = std::min(config.batch_size, n - start);
      Matrix bx(bsz, data.input_dim());
      Matrix by(bsz, data.target_dim());
      for (int i = 0; i < bsz; ++i) {
        bx.row(i) = data.inputs.row(order[start + i]);
        by.row(i) = data.targets.row(order[start + i]);
      }

      ParamGrad grad;
      if (reg.kind == RegularizerKind::kAdversarial && reg.adv_epsilon > 0.0) {
        AttackConfig atk;
        atk.epsilon = reg.adv_epsilon;
        atk.steps = reg.adv_steps;
        atk.step_size = reg.adv_step_size;
        atk.random_start = false;
        for (int i = 0; i < bsz; ++i) {
          bx.row(i) = pgd_attack(net, bx.row(i).transpose(), by.row(i).transpose(), atk).transpose();
        }
        grad = grad_params(net, bx, by);
      } else if (aug_sampler && aug_level == AugLevel::kData) {
        for (int i = 0; i < bsz; ++i) {
          auto [w, b] = aug_sampler->sample();
          bx.row(i) = (w.transpose() * bx.row(i).transpose() + b).transpose();
        }
        grad = grad_params(net, bx, by);
      } else if (aug_sampler && aug_level == AugLevel::kFeature) {
        grad = ParamGrad::zeros_like(net);
        for (int i = 0; i < bsz; ++i) {
          auto [w, b] = aug_sampler->sample();
          const ParamGrad gi = grad_with_feature_transform(net, w, b, bx.row(i).transpose(),
                                                           by.row(i).transpose());
          grad.add_scaled(gi, 1.0 / bsz);
        }
      } else {
        grad = grad_params(net, bx, by);
      }

      switch (reg.kind) {
        case RegularizerKind::kWeightDecay:
          if (reg.lambda > 0.0) {
            for (int j = 0; j < head; ++j) {
              grad.dw[j] += 2.0 * reg.lambda * net.layers()[j].weight;
            }
          }
          break;
        case RegularizerKind::kJacobian:
          if (reg.lambda > 0.0) {
            const Network f = extractor_of(net);
            ParamGrad pg = ParamGrad::zeros_like(f);
            for (int i = 0; i < bsz; ++i) {
              pg.add_scaled(jacobian_penalty_grad(f, bx.row(i).transpose()), 1.0 / bsz);
            }
            const int nlayers = std::min<int>(head, static_cast<int>(pg.dw.size()));
            for (int j = 0; j < nlayers; ++j) {
              grad.dw[j] += reg.lambda * pg.dw[j];
              grad.db[j] += reg.lambda * pg.db[j];
            }
          }
          break;
        case RegularizerKind::kLastLayer:
          if (reg.lambda > 0.0) {
            const double norm = net.layers()[head].weight.norm();
            if (norm > 0.0) grad.dw[head] += (reg.lambda / norm) * net.layers()[head].weight;
          }
          break;
        default:
          break;
      }

      for (int j = 0; j < depth; ++j) {
        velocity.dw[j] = config.momentum * velocity.dw[j] + grad.dw[j];
        velocity.db[j] = config.momentum * velocity.db[j] + grad.db[j];
        net.mutable_layers()[j].weight -= lr * velocity.dw[j];
        net.mutable_layers()[j].bias -= lr * velocity.db[j];
      }
      if (reg.kind == RegularizerKind::kLastLayerNorm) {
        Matrix& hw = net.mutable_layers()[head].weight;
        const double norm = hw.norm();
        if (norm > 0.0) hw *= reg.target_norm / norm;
      }

      const double batch_loss = dataset_loss(net, bx, by);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("sgd_train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step));
      }
    }
    model.history.push_back({epoch, dataset_loss(net, data.inputs, data.targets), lr});
  }

  TrainedModel out = TrainedModel::from_network(net);
  out.history = std::move(model.history);
  return out;
}

FineTuneResult fine_tune_linear(const Network& extractor, const EmpiricalDataset& data, double ridge) {
  data.validate();
  if (ridge < 0.0) throw std::invalid_argument("fine_tune_linear: ridge must be >= 0");
  const int n = data.size();
  const int d = extractor.output_dim();
  Matrix z(n, d + 1);
  for (int i = 0; i < n; ++i) {
    z.row(i).head(d) = predict(extractor, data.inputs.row(i).transpose()).transpose();
    z(i, d) = 1.0;
  }
  Matrix w;  // (d+1) x out
  if (ridge == 0.0) {
    w = z.completeOrthogonalDecomposition().solve(data.targets);
  } else {
    const Matrix gram = z.transpose() * z / n + ridge * Matrix::Identity(d + 1, d + 1);
    w = gram.ldlt().solve(z.transpose() * data.targets / n);
  }
  FineTuneResult result;
  result.head_weight = w.topRows(d).transpose();
  result.head_bias = w.row(d).transpose();
  result.loss = (z * w - data.targets).squaredNorm() / n;
  return result;
}

double evaluate(const TrainedModel& model, const EmpiricalDataset& data, EvalMode mode) {
  data.validate();
  if (mode == EvalMode::kSquaredLoss) {
    double total = 0.0;
    for (int i = 0; i < data.size(); ++i) {
      total += (model.predict(data.inputs.row(i).transpose()) - data.targets.row(i).transpose())
                   .squaredNorm();
    }
    return total / data.size();
  }
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Vector pred = model.predict(data.inputs.row(i).transpose());
    if (argmax_index(pred) == argmax_index(data.targets.row(i).transpose())) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  save_network(model.extractor, f);
  f << "head dims=" << model.head_weight.rows() << " " << model.head_weight.cols() << "\n";
  char buf[64];
  for (int r = 0; r < model.head_weight.rows(); ++r) {
    for (int c = 0; c < model.head_weight.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", model.head_weight(r, c));
      f << (c > 0 ? " " : "") << buf;
    }
    f << "\n";
  }
  for (int r = 0; r < model.head_bias.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g", model.head_bias[r]);
    f << (r > 0 ? " " : "") << buf;
  }
  f << "\n";
}

TrainedModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  TrainedModel model;
  model.extractor = load_network(f);
  std::string tok;
  if (!(f >> tok) || tok != "head") throw std::runtime_error(path + ": missing head block");
  if (!(f >> tok) || tok.rfind("dims=", 0) != 0) throw std::runtime_error(path + ": bad head dims");
  const int out = std::stoi(tok.substr(5));
  int in = 0;
  if (!(f >> in)) throw std::runtime_error(path + ": bad head dims");
  model.head_weight = Matrix(out, in);
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) {
      if (!(f >> model.head_weight(r, c))) throw std::runtime_error(path + ": truncated head");
    }
  }
  model.head_bias = Vector(out);
  for (int r = 0; r < out; ++r) {
    if (!(f >> model.head_bias[r])) throw std::runtime_error(path + ": truncated head bias");
  }
  return model;
}

}  // namespace dtlab
