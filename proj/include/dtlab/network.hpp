#ifndef DTLAB_NETWORK_HPP_
#define DTLAB_NETWORK_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dtlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kTanh, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

// Dense fully-connected network. Layer dimensions must chain and the final
// layer's activation is identity (the last linear map is part of the model,
// any readout nonlinearity lives with the caller).
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }
  int depth() const { return static_cast<int>(layers_.size()); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  // Sum of hidden widths (layers 1..L-1); the final layer does not count.
  int hidden_unit_count() const;

  bool all_hidden_relu() const;
  bool has_relu() const;

 private:
  std::vector<Layer> layers_;
};

bool networks_equal(const Network& a, const Network& b);

struct ForwardTrace {
  std::vector<Vector> preactivations;  // per layer
  std::vector<Vector> activations;     // per layer
  const Vector& output() const { return activations.back(); }
};

ForwardTrace forward(const Network& net, const Vector& x);

// Convenience: forward pass returning only the output.
Vector predict(const Network& net, const Vector& x);

// Parameter gradient container mirroring the network layout.
struct ParamGrad {
  std::vector<Matrix> dw;
  std::vector<Vector> db;

  static ParamGrad zeros_like(const Network& net);
  void add_scaled(const ParamGrad& other, double scale);
  void scale(double s);
};

// d/dtheta of (1/n) sum_i ||net(x_i) - y_i||^2. Rows of `inputs`/`targets`
// are samples.
ParamGrad grad_params(const Network& net, const Matrix& inputs, const Matrix& targets);

// Gradient of ||net(x) - y||^2 with respect to the input x.
Vector input_gradient(const Network& net, const Vector& x, const Vector& y);

// Jacobian of the network output w.r.t. the input, out_dim x in_dim.
// Exact a.e. for relu (subgradient 0 at kinks).
Matrix jacobian_input(const Network& net, const Vector& x);

// d/dtheta of ||J(x)||_F^2 (used by Jacobian-penalty training).
// Forward-over-reverse; exact for tanh/identity and a.e. for relu.
ParamGrad jacobian_penalty_grad(const Network& net, const Vector& x);

// Central-second-difference input Hessian of output component `out_index`,
// symmetrized. Throws for relu networks (kinks).
Matrix hessian_input_fd(const Network& net, const Vector& x, int out_index, double step = 1e-3);

// He-style init: uniform with bound sqrt(6 / in_dim), biases zero.
Network random_network(const std::vector<int>& dims, Activation hidden_activation,
                       std::uint64_t seed);

void save_network(const Network& net, std::ostream& out);
void save_network(const Network& net, const std::string& path);
Network load_network(std::istream& in);
Network load_network_file(const std::string& path);

namespace numdiff {

inline constexpr double kGradStep = 1e-4;
inline constexpr double kHessStep = 1e-3;

// Central-difference gradient of a scalar function.
template <typename Fn>
Vector gradient(Fn&& fn, const Vector& x, double h = kGradStep) {
  Vector g(x.size());
  Vector xp = x;
  for (int i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = fn(xp);
    xp[i] = orig - h;
    const double fm = fn(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central-difference Jacobian of a vector function.
template <typename Fn>
Matrix jacobian(Fn&& fn, const Vector& x, double h = kGradStep) {
  Vector xp = x;
  xp[0] += 0.0;
  const Vector f0 = fn(x);
  Matrix j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const Vector fp = fn(xp);
    xp[i] = orig - h;
    const Vector fm = fn(xp);
    xp[i] = orig;
    j.col(i) = (fp - fm) / (2.0 * h);
  }
  return j;
}

// Central second differences of a scalar function, symmetrized.
template <typename Fn>
Matrix hessian(Fn&& fn, const Vector& x, double h = kHessStep) {
  const int n = static_cast<int>(x.size());
  Matrix hess(n, n);
  Vector xp = x;
  const double f0 = fn(x);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (i == j) {
        xp[i] = x[i] + h;
        const double fp = fn(xp);
        xp[i] = x[i] - h;
        const double fm = fn(xp);
        xp[i] = x[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
      } else {
        xp[i] = x[i] + h; xp[j] = x[j] + h;
        const double fpp = fn(xp);
        xp[j] = x[j] - h;
        const double fpm = fn(xp);
        xp[i] = x[i] - h; xp[j] = x[j] + h;
        const double fmp = fn(xp);
        xp[j] = x[j] - h;
        const double fmm = fn(xp);
        xp[i] = x[i]; xp[j] = x[j];
        hess(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        hess(j, i) = hess(i, j);
      }
    }
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace numdiff

}  // namespace dtlab

#endif  // DTLAB_NETWORK_HPP_
