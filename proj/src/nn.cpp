#include "grembed/nn.hpp"

#include <cmath>

#include "grembed/error.hpp"

namespace grembed::nn {

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return diff::relu(x);
    case Activation::tanh: return diff::tanh(x);
    case Activation::sigmoid: return diff::sigmoid(x);
  }
  return x;
}

Matrix activate(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x.cwiseMax(0.0);
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::sigmoid: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
  }
  return x;
}

Matrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Index j = 0; j < fan_out; ++j)
    for (Index i = 0; i < fan_in; ++i) w(i, j) = uniform(rng, -limit, limit);
  return w;
}

Linear::Linear(Index in, Index out, Rng& rng, bool bias)
    : weight(glorot(in, out, rng)), bias(Matrix::Zero(1, out)), has_bias(bias) {}

Var Linear::forward(Tape& tape, const Var& x) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("linear layer expects " + std::to_string(weight.rows()) + " inputs, got " + std::to_string(x.cols()));
  }
  Var y = diff::matmul(x, tape.parameter(weight));
  if (has_bias) y = diff::add_row_broadcast(y, tape.parameter(bias));
  return y;
}

Matrix Linear::evaluate(const Matrix& x) const {
  if (x.cols() != weight.rows()) throw ShapeError("linear layer input width mismatch");
  Matrix y = x * weight.value;
  if (has_bias) y.rowwise() += bias.value.row(0);
  return y;
}

std::vector<Parameter*> Linear::parameters() {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

Mlp::Mlp(const std::vector<Index>& dims, Activation hidden_act, Activation output_act, Rng& rng, bool bias)
    : hidden(hidden_act), output(output_act) {
  if (dims.size() < 2) throw ContractError("an MLP needs at least input and output dimensions");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers.emplace_back(dims[i], dims[i + 1], rng, bias);
}

Var Mlp::forward(Tape& tape, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    h = activate(h, i + 1 == layers.size() ? output : hidden);
  }
  return h;
}

Matrix Mlp::evaluate(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) h = activate(layers[i].evaluate(h), i + 1 == layers.size() ? output : hidden);
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers)
    for (auto* p : l.parameters()) out.push_back(p);
  return out;
}

GruCell::GruCell(Index input_dim, Index state_dim, Rng& rng)
    : wz(glorot(input_dim, state_dim, rng)),
      uz(glorot(state_dim, state_dim, rng)),
      bz(Matrix::Constant(1, state_dim, 1.0)),
      wr(glorot(input_dim, state_dim, rng)),
      ur(glorot(state_dim, state_dim, rng)),
      br(Matrix::Zero(1, state_dim)),
      wh(glorot(input_dim, state_dim, rng)),
      uh(glorot(state_dim, state_dim, rng)),
      bh(Matrix::Zero(1, state_dim)) {}

Var GruCell::forward(Tape& tape, const Var& h, const Var& m) {
  if (h.cols() != state_dim() || m.cols() != input_dim() || h.rows() != m.rows()) {
    throw ShapeError("GRU cell shape mismatch");
  }
  using namespace diff;
  auto affine = [&](Parameter& w, Parameter& u, Parameter& b, const Var& hh) {
    return add_row_broadcast(matmul(m, tape.parameter(w)) + matmul(hh, tape.parameter(u)), tape.parameter(b));
  };
  Var z = sigmoid(affine(wz, uz, bz, h));
  Var r = sigmoid(affine(wr, ur, br, h));
  Var cand = diff::tanh(affine(wh, uh, bh, mul(r, h)));
  return mul(z, h) + mul(one_minus(z), cand);
}

std::vector<Parameter*> GruCell::parameters() { return {&wz, &uz, &bz, &wr, &ur, &br, &wh, &uh, &bh}; }

}  // namespace grembed::nn
