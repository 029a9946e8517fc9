#include "dtlab/network.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

double act_apply(Activation a, double v) {
  switch (a) {
    case Activation::kRelu: return v > 0.0 ? v : 0.0;
    case Activation::kTanh: return std::tanh(v);
    case Activation::kIdentity: return v;
  }
  return v;
}

// Derivative at the preactivation. Relu uses subgradient 0 at 0 so the
// pattern matches 1(pre > 0) with strict inequality.
double act_deriv(Activation a, double v) {
  switch (a) {
    case Activation::kRelu: return v > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

double act_deriv2(Activation a, double v) {
  switch (a) {
    case Activation::kRelu: return 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(v);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::kIdentity: return 0.0;
  }
  return 0.0;
}

Vector act_apply_vec(Activation a, const Vector& v) {
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = act_apply(a, v[i]);
  return out;
}

Vector act_deriv_vec(Activation a, const Vector& v) {
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = act_deriv(a, v[i]);
  return out;
}

Vector act_deriv2_vec(Activation a, const Vector& v) {
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = act_deriv2(a, v[i]);
  return out;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const Layer& l = layers_[j];
    if (l.weight.rows() != l.bias.size()) {
      throw std::invalid_argument("layer " + std::to_string(j) + ": bias size " +
                                  std::to_string(l.bias.size()) + " != out dim " +
                                  std::to_string(l.weight.rows()));
    }
    if (j > 0 && layers_[j - 1].weight.rows() != l.weight.cols()) {
      throw std::invalid_argument("layer " + std::to_string(j) + ": in dim " +
                                  std::to_string(l.weight.cols()) + " != previous out dim " +
                                  std::to_string(layers_[j - 1].weight.rows()));
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw std::invalid_argument("layer " + std::to_string(j) + ": non-finite parameters");
    }
  }
  if (layers_.back().activation != Activation::kIdentity) {
    throw std::invalid_argument("final layer activation must be identity");
  }
}

int Network::hidden_unit_count() const {
  int total = 0;
  for (std::size_t j = 0; j + 1 < layers_.size(); ++j) {
    total += static_cast<int>(layers_[j].weight.rows());
  }
  return total;
}

bool Network::all_hidden_relu() const {
  for (std::size_t j = 0; j + 1 < layers_.size(); ++j) {
    if (layers_[j].activation != Activation::kRelu) return false;
  }
  return true;
}

bool Network::has_relu() const {
  for (const Layer& l : layers_) {
    if (l.activation == Activation::kRelu) return true;
  }
  return false;
}

bool networks_equal(const Network& a, const Network& b) {
  if (a.depth() != b.depth()) return false;
  for (int j = 0; j < a.depth(); ++j) {
    const Layer& la = a.layers()[j];
    const Layer& lb = b.layers()[j];
    if (la.activation != lb.activation) return false;
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols()) return false;
    if (la.weight != lb.weight || la.bias != lb.bias) return false;
  }
  return true;
}

ForwardTrace forward(const Network& net, const Vector& x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input dim " + std::to_string(x.size()) +
                                " != network input dim " + std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  trace.preactivations.reserve(net.depth());
  trace.activations.reserve(net.depth());
  Vector a = x;
  for (const Layer& l : net.layers()) {
    Vector pre = l.weight * a + l.bias;
    a = act_apply_vec(l.activation, pre);
    trace.preactivations.push_back(std::move(pre));
    trace.activations.push_back(a);
  }
  return trace;
}

Vector predict(const Network& net, const Vector& x) { return forward(net, x).output(); }

ParamGrad ParamGrad::zeros_like(const Network& net) {
  ParamGrad g;
  g.dw.reserve(net.depth());
  g.db.reserve(net.depth());
  for (const Layer& l : net.layers()) {
    g.dw.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.db.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

void ParamGrad::add_scaled(const ParamGrad& other, double s) {
  for (std::size_t j = 0; j < dw.size(); ++j) {
    dw[j] += s * other.dw[j];
    db[j] += s * other.db[j];
  }
}

void ParamGrad::scale(double s) {
  for (std::size_t j = 0; j < dw.size(); ++j) {
    dw[j] *= s;
    db[j] *= s;
  }
}

ParamGrad grad_params(const Network& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows() == 0) throw std::invalid_argument("grad_params: empty dataset");
  if (inputs.rows() != targets.rows()) {
    throw std::invalid_argument("grad_params: inputs/targets row mismatch");
  }
  if (targets.cols() != net.output_dim()) {
    throw std::invalid_argument("grad_params: target dim " + std::to_string(targets.cols()) +
                                " != output dim " + std::to_string(net.output_dim()));
  }
  const int n = static_cast<int>(inputs.rows());
  const int depth = net.depth();
  ParamGrad grad = ParamGrad::zeros_like(net);
  for (int i = 0; i < n; ++i) {
    const Vector x = inputs.row(i).transpose();
    const ForwardTrace trace = forward(net, x);
    // d/dyhat ||yhat - y||^2
    Vector delta = 2.0 * (trace.output() - targets.row(i).transpose());
    for (int j = depth - 1; j >= 0; --j) {
      const Layer& l = net.layers()[j];
      const Vector dpre = delta.cwiseProduct(act_deriv_vec(l.activation, trace.preactivations[j]));
      const Vector& below = (j == 0) ? x : trace.activations[j - 1];
      grad.dw[j].noalias() += dpre * below.transpose();
      grad.db[j] += dpre;
      if (j > 0) delta = l.weight.transpose() * dpre;
    }
  }
  grad.scale(1.0 / n);
  return grad;
}

Vector input_gradient(const Network& net, const Vector& x, const Vector& y) {
  const ForwardTrace trace = forward(net, x);
  Vector delta = 2.0 * (trace.output() - y);
  for (int j = net.depth() - 1; j >= 0; --j) {
    const Layer& l = net.layers()[j];
    const Vector dpre = delta.cwiseProduct(act_deriv_vec(l.activation, trace.preactivations[j]));
    delta = l.weight.transpose() * dpre;
  }
  return delta;
}

Matrix jacobian_input(const Network& net, const Vector& x) {
  const ForwardTrace trace = forward(net, x);
  Matrix j = Matrix::Identity(net.input_dim(), net.input_dim());
  for (int li = 0; li < net.depth(); ++li) {
    const Layer& l = net.layers()[li];
    j = (act_deriv_vec(l.activation, trace.preactivations[li]).asDiagonal() * (l.weight * j)).eval();
  }
  return j;
}

// ||J(x)||_F^2 = sum over input directions v=e_k of ||J v||^2. For each
// direction we push a forward tangent through the net and reverse both the
// primal and tangent traces, picking up the phi'' coupling for tanh.
ParamGrad jacobian_penalty_grad(const Network& net, const Vector& x) {
  const int depth = net.depth();
  const ForwardTrace trace = forward(net, x);
  std::vector<Vector> dact(depth), dact2(depth);
  for (int j = 0; j < depth; ++j) {
    dact[j] = act_deriv_vec(net.layers()[j].activation, trace.preactivations[j]);
    dact2[j] = act_deriv2_vec(net.layers()[j].activation, trace.preactivations[j]);
  }
  ParamGrad grad = ParamGrad::zeros_like(net);
  const int in_dim = net.input_dim();
  std::vector<Vector> tan(depth), ptan(depth);
  for (int k = 0; k < in_dim; ++k) {
    Vector t = Vector::Unit(in_dim, k);
    for (int j = 0; j < depth; ++j) {
      ptan[j] = net.layers()[j].weight * (j == 0 ? t : tan[j - 1]);
      tan[j] = dact[j].cwiseProduct(ptan[j]);
    }
    // Scalar being differentiated: ||tan[depth-1]||^2 = ||J e_k||^2.
    Vector tbar = 2.0 * tan[depth - 1];
    Vector abar = Vector::Zero(net.output_dim());
    for (int j = depth - 1; j >= 0; --j) {
      const Layer& l = net.layers()[j];
      const Vector pbar = tbar.cwiseProduct(dact[j]);
      const Vector prebar = abar.cwiseProduct(dact[j]) + tbar.cwiseProduct(ptan[j]).cwiseProduct(dact2[j]);
      const Vector& below = (j == 0) ? x : trace.activations[j - 1];
      const Vector below_tan = (j == 0) ? Vector::Unit(in_dim, k).eval() : tan[j - 1];
      grad.dw[j].noalias() += prebar * below.transpose();
      grad.dw[j].noalias() += pbar * below_tan.transpose();
      grad.db[j] += prebar;
      if (j > 0) {
        abar = l.weight.transpose() * prebar;
        tbar = l.weight.transpose() * pbar;
      }
    }
  }
  return grad;
}

Matrix hessian_input_fd(const Network& net, const Vector& x, int out_index, double step) {
  if (net.has_relu()) {
    throw std::invalid_argument("Hessian undefined at kinks; use tanh");
  }
  if (step <= 0.0) throw std::invalid_argument("hessian_input_fd: step must be positive");
  if (out_index < 0 || out_index >= net.output_dim()) {
    throw std::invalid_argument("hessian_input_fd: out_index out of range");
  }
  auto fn = [&](const Vector& p) { return predict(net, p)[out_index]; };
  return numdiff::hessian(fn, x, step);
}

Network random_network(const std::vector<int>& dims, Activation hidden_activation,
                       std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("random_network: need at least in/out dims");
  SplitMix64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    const int in = dims[j];
    const int out = dims[j + 1];
    const double bound = std::sqrt(6.0 / in);
    Layer l;
    l.weight = Matrix(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    }
    l.bias = Vector::Zero(out);
    l.activation = (j + 2 < dims.size()) ? hidden_activation : Activation::kIdentity;
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

void save_network(const Network& net, std::ostream& out) {
  out << "layers=" << net.depth() << "\n";
  for (const Layer& l : net.layers()) {
    out << "dims=" << l.weight.rows() << " " << l.weight.cols()
        << " act=" << activation_name(l.activation) << "\n";
    for (int r = 0; r < l.weight.rows(); ++r) {
      for (int c = 0; c < l.weight.cols(); ++c) {
        out << (c > 0 ? " " : "") << format_g17(l.weight(r, c));
      }
      out << "\n";
    }
    for (int r = 0; r < l.bias.size(); ++r) {
      out << (r > 0 ? " " : "") << format_g17(l.bias[r]);
    }
    out << "\n";
  }
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  save_network(net, f);
}

Network load_network(std::istream& in) {
  std::string header;
  if (!(in >> header) || header.rfind("layers=", 0) != 0) {
    throw std::runtime_error("network file: missing layers= header");
  }
  const int depth = std::stoi(header.substr(7));
  if (depth < 1) throw std::runtime_error("network file: bad layer count");
  std::vector<Layer> layers;
  for (int j = 0; j < depth; ++j) {
    std::string dims_tok, act_tok;
    if (!(in >> dims_tok)) throw std::runtime_error("network file: truncated at layer " + std::to_string(j));
    if (dims_tok != "dims=") {
      // "dims=<out>" arrives as one token.
      if (dims_tok.rfind("dims=", 0) != 0) throw std::runtime_error("network file: expected dims=");
      dims_tok = dims_tok.substr(5);
    }
    const int out = std::stoi(dims_tok);
    int in_dim = 0;
    if (!(in >> in_dim)) throw std::runtime_error("network file: missing in dim");
    if (!(in >> act_tok) || act_tok.rfind("act=", 0) != 0) {
      throw std::runtime_error("network file: expected act=");
    }
    Layer l;
    l.activation = activation_from_name(act_tok.substr(4));
    l.weight = Matrix(out, in_dim);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in_dim; ++c) {
        if (!(in >> l.weight(r, c))) throw std::runtime_error("network file: truncated weights");
      }
    }
    l.bias = Vector(out);
    for (int r = 0; r < out; ++r) {
      if (!(in >> l.bias[r])) throw std::runtime_error("network file: truncated bias");
    }
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

Network load_network_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return load_network(f);
}

}  // namespace dtlab
