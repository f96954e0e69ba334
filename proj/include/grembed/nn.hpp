#pragma once

#include <string>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/rng.hpp"

namespace grembed::nn {

using diff::Parameter;
using diff::Tape;
using diff::Var;

enum class Activation { identity, relu, tanh, sigmoid };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
Var activate(const Var& x, Activation a);
Matrix activate(const Matrix& x, Activation a);

/// Glorot-uniform matrix.
Matrix glorot(Index fan_in, Index fan_out, Rng& rng);

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
  Linear() = default;
  Linear(Index in, Index out, Rng& rng, bool bias = true);

  Var forward(Tape& tape, const Var& x);
  /// Tape-free forward pass.
  Matrix evaluate(const Matrix& x) const;
  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }
  std::vector<Parameter*> parameters();

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

/// Stack of Linear layers; `hidden` activation between layers, `output` after the last.
struct Mlp {
  Mlp() = default;
  Mlp(const std::vector<Index>& dims, Activation hidden, Activation output, Rng& rng, bool bias = true);

  Var forward(Tape& tape, const Var& x);
  Matrix evaluate(const Matrix& x) const;
  std::vector<Parameter*> parameters();
  Index in_dim() const { return layers.front().in_dim(); }
  Index out_dim() const { return layers.back().out_dim(); }

  std::vector<Linear> layers;
  Activation hidden = Activation::relu;
  Activation output = Activation::identity;
};

/// Gated recurrent unit over row-stacked states.
///
///   z  = sigmoid(m Wz + h Uz + bz)      (update / carry gate)
///   r  = sigmoid(m Wr + h Ur + br)
///   h~ = tanh(m Wh + (r * h) Uh + bh)
///   h' = z * h + (1 - z) * h~
struct GruCell {
  GruCell() = default;
  GruCell(Index input_dim, Index state_dim, Rng& rng);

  Var forward(Tape& tape, const Var& h, const Var& m);
  std::vector<Parameter*> parameters();
  Index state_dim() const { return uz.rows(); }
  Index input_dim() const { return wz.rows(); }

  Parameter wz, uz, bz;
  Parameter wr, ur, br;
  Parameter wh, uh, bh;
};

}  // namespace grembed::nn
