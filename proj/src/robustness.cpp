#include "dtlab/robustness.hpp"

#include <cmath>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

double squared_loss(const Network& model, const Vector& x, const Vector& y) {
  return (predict(model, x) - y).squaredNorm();
}

Vector project_ball(const Vector& delta, double eps, AttackNorm norm) {
  if (norm == AttackNorm::kLinf) {
    return delta.cwiseMax(-eps).cwiseMin(eps);
  }
  const double n = delta.norm();
  return n > eps ? Vector((eps / n) * delta) : delta;
}

}  // namespace

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (steps < 0) throw std::invalid_argument("attack: steps must be >= 0");
  if (step_size < 0.0) throw std::invalid_argument("attack: step_size must be >= 0");
}

bool AttackConfig::underpowered() const {
  return effective_step() * steps < epsilon;
}

Vector pgd_attack(const Network& model, const Vector& x, const Vector& y, const AttackConfig& cfg) {
  cfg.validate();
  if (x.size() != model.input_dim() || y.size() != model.output_dim()) {
    throw std::invalid_argument("pgd_attack: dimension mismatch");
  }
  if (cfg.epsilon == 0.0 || (cfg.steps == 0 && !cfg.random_start)) return x;

  const double eps = cfg.epsilon;
  const double alpha = cfg.effective_step();
  Vector delta = Vector::Zero(x.size());
  if (cfg.random_start) {
    SplitMix64 rng(cfg.seed);
    for (int i = 0; i < delta.size(); ++i) delta[i] = rng.uniform(-eps, eps);
    delta = project_ball(delta, eps, cfg.norm);
  }

  Vector best = x + delta;
  double best_loss = squared_loss(model, best, y);
  if (!cfg.random_start) {
    best = x;
    best_loss = squared_loss(model, x, y);
  }

  for (int t = 0; t < cfg.steps; ++t) {
    const Vector g = input_gradient(model, x + delta, y);
    if (cfg.norm == AttackNorm::kLinf) {
      delta += alpha * g.cwiseSign();
    } else {
      const double gn = g.norm();
      if (gn > 0.0) delta += (alpha / gn) * g;
    }
    delta = project_ball(delta, eps, cfg.norm);
    const double loss = squared_loss(model, x + delta, y);
    if (loss > best_loss) {
      best_loss = loss;
      best = x + delta;
    }
  }
  return best;
}

int argmax_index(const Vector& v) {
  // Ties break to the lowest index.
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double clean_accuracy(const Network& model, const EmpiricalDataset& data) {
  data.validate();
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Vector pred = predict(model, data.inputs.row(i).transpose());
    if (argmax_index(pred) == argmax_index(data.targets.row(i).transpose())) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

double robust_accuracy(const Network& model, const EmpiricalDataset& data, const AttackConfig& cfg) {
  data.validate();
  int robust = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Vector x = data.inputs.row(i).transpose();
    const Vector y = data.targets.row(i).transpose();
    const int label = argmax_index(y);
    if (argmax_index(predict(model, x)) != label) continue;
    AttackConfig point_cfg = cfg;
    point_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const Vector adv = pgd_attack(model, x, y, point_cfg);
    if (argmax_index(predict(model, adv)) == label) ++robust;
  }
  return static_cast<double>(robust) / data.size();
}

}  // namespace dtlab
