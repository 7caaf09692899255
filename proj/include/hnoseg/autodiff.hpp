// Tape-based reverse-mode differentiation over Tensor.
//
// A Tape owns the nodes of one forward evaluation in topological order; each
// node stores its value and a backward closure that scatters the node's
// gradient into its inputs. backward() walks the tape once in reverse.
// Tapes are single-threaded; tensors handed out are immutable views of node
// values.

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "hnoseg/tensor.hpp"

namespace hnoseg::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // loss must be a scalar ([1]) node on this tape.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient accumulated so far; zeros if the node was never touched.
  Tensor grad_or_zero(int id) const;
  bool has_grad(int id) const { return nodes_[id].has_grad; }

  std::size_t size() const { return nodes_.size(); }

  // --- op implementation surface ---
  int emit(Tensor value, bool requires_grad, BackFn back);
  Tensor& grad_slot(int id);  // allocates zeros on first touch
  void add_grad(int id, const double* g, std::size_t n);
  void add_grad_scaled(int id, double c, const double* g, std::size_t n);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

inline bool any_requires(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.tape->needs_grad(v.id)) return true;
  }
  return false;
}

// --- elementwise ---
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var sqrt(Var a);
Var neg(Var a);
Var scale(Var a, double c);      // c * a
Var add_const(Var a, double c);  // a + c
Var selu(Var a);
Var sigmoid(Var a);

// s has shape [1]; broadcasts over a.
Var add_scalar(Var a, Var s);

Var reduce_sum(Var a);  // -> [1]

// --- structural / network primitives ---
// x: [Cin, ...spatial], W: [Cout, Cin], out[:, v] = W x[:, v] (+ bias).
Var channel_linear(Var x, Var W);
Var channel_linear(Var x, Var W, Var bias);

Var concat_channels(Var a, Var b);
// Splits along channel 0 at c0; inverse of concat_channels.
std::pair<Var, Var> split_channels(Var x, std::size_t c0);

// Align-corners-false trilinear interpolation of [C,X,Y,Z] to target dims.
Var trilinear_resample(Var x, std::array<std::size_t, 3> target);

// Non-overlapping 2x2x2 stride-2 convolution; halves each spatial dim.
Var conv3d_k2s2(Var x, Var W, Var bias);

// --- spectral primitives (full-grid cas transforms; see spectral.hpp for
// the metadata-carrying wrappers) ---
Var dht_forward_full(Var x);  // cas transform / (X*Y*Z)
Var dht_inverse_full(Var x);  // unnormalized cas transform

// Reverses the trailing 3 dims by index negation mod size (k -> N-k).
Var reverse3(Var x);

// Keeps indices {0..k-1} u {N-k..N-1} per trailing dim -> [.., 2kx,2ky,2kz].
Var mode_crop(Var x, std::array<std::size_t, 3> k_max);
// Scatters a cropped band back into an N-shaped zero spectrum.
Var mode_pad(Var x, std::array<std::size_t, 3> grid);

// Per-mode channel mixing: W [Cout,Cin,m...], x [Cin,m...] -> [Cout,m...].
Var mode_matmul(Var W, Var x);

}  // namespace hnoseg::ad
