#include "hnoseg/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "hnoseg/fft.hpp"
#include "hnoseg/simd.hpp"

namespace hnoseg::ad {

namespace {
const simd::Kernels& K() { return simd::active(); }

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": vars on different tapes");
  }
}
}  // namespace

// --- Tape ---

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false, {}});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

int Tape::emit(Tensor value, bool requires_grad, BackFn back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false,
                        requires_grad ? std::move(back) : BackFn{}});
  return static_cast<int>(nodes_.size() - 1);
}

Tensor& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::add_grad(int id, const double* g, std::size_t n) {
  if (!nodes_[id].requires_grad) return;
  K().axpy(1.0, g, grad_slot(id).data(), n);
}

void Tape::add_grad_scaled(int id, double c, const double* g, std::size_t n) {
  if (!nodes_[id].requires_grad) return;
  K().axpy(c, g, grad_slot(id).data(), n);
}

Tensor Tape::grad_or_zero(int id) const {
  const Node& n = nodes_[id];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

void Tape::backward(Var loss) {
  if (loss.tape != this) {
    throw std::invalid_argument("backward: loss not on this tape");
  }
  if (value(loss.id).size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(value(loss.id).shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_slot(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.has_grad && n.back) n.back(*this, id);
  }
}

// --- elementwise ---

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = *a.tape;
  Tensor out(a.shape());
  K().add(a.value().data(), b.value().data(), out.data(), out.size());
  int id = t.emit(std::move(out), any_requires({a, b}),
                  [ia = a.id, ib = b.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad(ia, g.data(), g.size());
                    tp.add_grad(ib, g.data(), g.size());
                  });
  return Var{&t, id};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tape& t = *a.tape;
  Tensor out(a.shape());
  K().sub(a.value().data(), b.value().data(), out.data(), out.size());
  int id = t.emit(std::move(out), any_requires({a, b}),
                  [ia = a.id, ib = b.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad(ia, g.data(), g.size());
                    tp.add_grad_scaled(ib, -1.0, g.data(), g.size());
                  });
  return Var{&t, id};
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tape& t = *a.tape;
  Tensor out(a.shape());
  K().mul(a.value().data(), b.value().data(), out.data(), out.size());
  int id = t.emit(std::move(out), any_requires({a, b}),
                  [ia = a.id, ib = b.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    const std::size_t n = g.size();
                    if (tp.needs_grad(ia)) {
                      K().vmadd(g.data(), tp.value(ib).data(),
                                tp.grad_slot(ia).data(), n);
                    }
                    if (tp.needs_grad(ib)) {
                      K().vmadd(g.data(), tp.value(ia).data(),
                                tp.grad_slot(ib).data(), n);
                    }
                  });
  return Var{&t, id};
}

Var div(Var a, Var b) {
  check_same_tape(a, b, "div");
  require_same_shape(a.value(), b.value(), "div");
  Tape& t = *a.tape;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] / b.value()[i];
  }
  int id = t.emit(std::move(out), any_requires({a, b}),
                  [ia = a.id, ib = b.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    const std::size_t n = g.size();
                    if (tp.needs_grad(ia)) {
                      Tensor& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / bv[i];
                    }
                    if (tp.needs_grad(ib)) {
                      Tensor& gb = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < n; ++i) {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                      }
                    }
                  });
  return Var{&t, id};
}

Var sqrt(Var a) {
  Tape& t = *a.tape;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.value()[i]);
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    const Tensor& y = tp.value(self);
                    Tensor& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += 0.5 * g[i] / y[i];
                    }
                  });
  return Var{&t, id};
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out(a.shape());
  K().scale(a.value().data(), c, out.data(), out.size());
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id, c](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad_scaled(ia, c, g.data(), g.size());
                  });
  return Var{&t, id};
}

Var add_const(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad(ia, g.data(), g.size());
                  });
  return Var{&t, id};
}

Var selu(Var a) {
  Tape& t = *a.tape;
  Tensor out(a.shape());
  K().selu(a.value().data(), out.data(), out.size());
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    K().selu_grad(tp.value(ia).data(), g.data(),
                                  tp.grad_slot(ia).data(), g.size());
                  });
  return Var{&t, id};
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  }
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    const Tensor& y = tp.value(self);
                    Tensor& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                  });
  return Var{&t, id};
}

Var add_scalar(Var a, Var s) {
  check_same_tape(a, s, "add_scalar");
  if (s.value().size() != 1) {
    throw std::invalid_argument("add_scalar: s must have shape [1]");
  }
  Tape& t = *a.tape;
  Tensor out(a.shape());
  const double sv = s.value()[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + sv;
  int id = t.emit(std::move(out), any_requires({a, s}),
                  [ia = a.id, is = s.id](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad(ia, g.data(), g.size());
                    if (tp.needs_grad(is)) {
                      tp.grad_slot(is)[0] += K().sum(g.data(), g.size());
                    }
                  });
  return Var{&t, id};
}

Var reduce_sum(Var a) {
  Tape& t = *a.tape;
  Tensor out = Tensor::scalar(K().sum(a.value().data(), a.value().size()));
  int id = t.emit(std::move(out), t.needs_grad(a.id),
                  [ia = a.id](Tape& tp, int self) {
                    const double g = tp.grad_slot(self)[0];
                    Tensor& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                  });
  return Var{&t, id};
}

// --- structural ---

namespace {
void check_channel_linear(const Tensor& x, const Tensor& W) {
  if (W.rank() != 2) {
    throw std::invalid_argument("channel_linear: W must be [Cout,Cin], got " +
                                shape_str(W.shape()));
  }
  if (x.rank() < 1 || x.dim(0) != W.dim(1)) {
    throw std::invalid_argument(
        "channel_linear: channel mismatch, x " + shape_str(x.shape()) +
        " vs W " + shape_str(W.shape()));
  }
}
}  // namespace

static Var channel_linear_impl(Var x, Var W, const Var* bias) {
  check_channel_linear(x.value(), W.value());
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& Wv = W.value();
  const std::size_t cin = Wv.dim(1), cout = Wv.dim(0);
  const std::size_t s = xv.size() / cin;
  Shape out_shape = xv.shape();
  out_shape[0] = cout;
  Tensor out(out_shape);
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * s;
    if (bias != nullptr) {
      const double b = bias->value()[co];
      for (std::size_t i = 0; i < s; ++i) o[i] = b;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
      K().axpy(Wv[co * cin + ci], xv.data() + ci * s, o, s);
    }
  }
  bool req = bias != nullptr ? any_requires({x, W, *bias})
                             : any_requires({x, W});
  const int ibias = bias != nullptr ? bias->id : -1;
  int id = t.emit(
      std::move(out), req,
      [ix = x.id, iw = W.id, ibias, cin, cout, s](Tape& tp, int self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& xv2 = tp.value(ix);
        const Tensor& Wv2 = tp.value(iw);
        if (tp.needs_grad(ix)) {
          Tensor& gx = tp.grad_slot(ix);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              K().axpy(Wv2[co * cin + ci], g.data() + co * s,
                       gx.data() + ci * s, s);
            }
          }
        }
        if (tp.needs_grad(iw)) {
          Tensor& gw = tp.grad_slot(iw);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              gw[co * cin + ci] +=
                  K().dot(g.data() + co * s, xv2.data() + ci * s, s);
            }
          }
        }
        if (ibias >= 0 && tp.needs_grad(ibias)) {
          Tensor& gb = tp.grad_slot(ibias);
          for (std::size_t co = 0; co < cout; ++co) {
            gb[co] += K().sum(g.data() + co * s, s);
          }
        }
      });
  return Var{&t, id};
}

Var channel_linear(Var x, Var W) { return channel_linear_impl(x, W, nullptr); }

Var channel_linear(Var x, Var W, Var bias) {
  check_same_tape(x, bias, "channel_linear");
  if (bias.value().rank() != 1 || bias.value().dim(0) != W.value().dim(0)) {
    throw std::invalid_argument("channel_linear: bias must be [Cout]");
  }
  return channel_linear_impl(x, W, &bias);
}

Var concat_channels(Var a, Var b) {
  check_same_tape(a, b, "concat_channels");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() < 1) {
    throw std::invalid_argument("concat_channels: rank mismatch");
  }
  for (std::size_t i = 1; i < av.rank(); ++i) {
    if (av.dim(i) != bv.dim(i)) {
      throw std::invalid_argument("concat_channels: spatial mismatch " +
                                  shape_str(av.shape()) + " vs " +
                                  shape_str(bv.shape()));
    }
  }
  Tape& t = *a.tape;
  Shape out_shape = av.shape();
  out_shape[0] = av.dim(0) + bv.dim(0);
  Tensor out(out_shape);
  std::memcpy(out.data(), av.data(), av.size() * sizeof(double));
  std::memcpy(out.data() + av.size(), bv.data(), bv.size() * sizeof(double));
  int id = t.emit(std::move(out), any_requires({a, b}),
                  [ia = a.id, ib = b.id, na = av.size(), nb = bv.size()](
                      Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    tp.add_grad(ia, g.data(), na);
                    tp.add_grad(ib, g.data() + na, nb);
                  });
  return Var{&t, id};
}

std::pair<Var, Var> split_channels(Var x, std::size_t c0) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || c0 > xv.dim(0)) {
    throw std::invalid_argument("split_channels: bad split point");
  }
  Tape& t = *x.tape;
  const std::size_t s = xv.size() / xv.dim(0);
  Shape sa = xv.shape(), sb = xv.shape();
  sa[0] = c0;
  sb[0] = xv.dim(0) - c0;
  Tensor ta(sa), tb(sb);
  std::memcpy(ta.data(), xv.data(), ta.size() * sizeof(double));
  std::memcpy(tb.data(), xv.data() + c0 * s, tb.size() * sizeof(double));
  const std::size_t na = ta.size();
  int ida = t.emit(std::move(ta), t.needs_grad(x.id),
                   [ix = x.id](Tape& tp, int self) {
                     const Tensor& g = tp.grad_slot(self);
                     tp.add_grad(ix, g.data(), g.size());
                   });
  // The second half accumulates into an offset of x's grad slot.
  int idb = t.emit(std::move(tb), t.needs_grad(x.id),
                   [ix = x.id, off = na](Tape& tp, int self) {
                     const Tensor& g = tp.grad_slot(self);
                     if (!tp.needs_grad(ix)) return;
                     K().axpy(1.0, g.data(), tp.grad_slot(ix).data() + off,
                              g.size());
                   });
  return {Var{&t, ida}, Var{&t, idb}};
}

// --- trilinear resample ---

namespace {
struct AxisMap {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

AxisMap make_axis_map(std::size_t src, std::size_t dst) {
  AxisMap m;
  m.i0.resize(dst);
  m.i1.resize(dst);
  m.frac.resize(dst);
  const double r = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double c = (static_cast<double>(i) + 0.5) * r - 0.5;
    double f = std::floor(c);
    double frac = c - f;
    long j = static_cast<long>(f);
    long lo = j, hi = j + 1;
    if (lo < 0) lo = 0;
    if (hi < 0) hi = 0;
    const long last = static_cast<long>(src) - 1;
    if (lo > last) lo = last;
    if (hi > last) hi = last;
    m.i0[i] = static_cast<std::size_t>(lo);
    m.i1[i] = static_cast<std::size_t>(hi);
    m.frac[i] = frac < 0.0 ? 0.0 : (frac > 1.0 ? 1.0 : frac);
  }
  return m;
}
}  // namespace

Var trilinear_resample(Var x, std::array<std::size_t, 3> target) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) {
    throw std::invalid_argument("trilinear_resample: expected [C,X,Y,Z]");
  }
  for (std::size_t d : target) {
    if (d == 0) {
      throw std::invalid_argument("trilinear_resample: zero target dim");
    }
  }
  const std::size_t c = xv.dim(0), sx = xv.dim(1), sy = xv.dim(2),
                    sz = xv.dim(3);
  if (target[0] == sx && target[1] == sy && target[2] == sz) return x;

  const AxisMap mx = make_axis_map(sx, target[0]);
  const AxisMap my = make_axis_map(sy, target[1]);
  const AxisMap mz = make_axis_map(sz, target[2]);
  const std::size_t tx = target[0], ty = target[1], tz = target[2];
  Tensor out({c, tx, ty, tz});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in = xv.data() + ch * sx * sy * sz;
    double* o = out.data() + ch * tx * ty * tz;
    for (std::size_t i = 0; i < tx; ++i) {
      for (std::size_t j = 0; j < ty; ++j) {
        for (std::size_t k = 0; k < tz; ++k) {
          const double fx = mx.frac[i], fy = my.frac[j], fz = mz.frac[k];
          double acc = 0.0;
          for (int a = 0; a < 2; ++a) {
            const std::size_t xi = a ? mx.i1[i] : mx.i0[i];
            const double wx = a ? fx : 1.0 - fx;
            for (int b = 0; b < 2; ++b) {
              const std::size_t yi = b ? my.i1[j] : my.i0[j];
              const double wy = b ? fy : 1.0 - fy;
              for (int d = 0; d < 2; ++d) {
                const std::size_t zi = d ? mz.i1[k] : mz.i0[k];
                const double wz = d ? fz : 1.0 - fz;
                acc += wx * wy * wz * in[(xi * sy + yi) * sz + zi];
              }
            }
          }
          o[(i * ty + j) * tz + k] = acc;
        }
      }
    }
  }
  Tape& t = *x.tape;
  int id = t.emit(
      std::move(out), t.needs_grad(x.id),
      [ix = x.id, mx, my, mz, c, sx, sy, sz, tx, ty, tz](Tape& tp, int self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& gx = tp.grad_slot(ix);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double* gi = gx.data() + ch * sx * sy * sz;
          const double* go = g.data() + ch * tx * ty * tz;
          for (std::size_t i = 0; i < tx; ++i) {
            for (std::size_t j = 0; j < ty; ++j) {
              for (std::size_t k = 0; k < tz; ++k) {
                const double gv = go[(i * ty + j) * tz + k];
                const double fx = mx.frac[i], fy = my.frac[j], fz = mz.frac[k];
                for (int a = 0; a < 2; ++a) {
                  const std::size_t xi = a ? mx.i1[i] : mx.i0[i];
                  const double wx = a ? fx : 1.0 - fx;
                  for (int b = 0; b < 2; ++b) {
                    const std::size_t yi = b ? my.i1[j] : my.i0[j];
                    const double wy = b ? fy : 1.0 - fy;
                    for (int d = 0; d < 2; ++d) {
                      const std::size_t zi = d ? mz.i1[k] : mz.i0[k];
                      const double wz = d ? fz : 1.0 - fz;
                      gi[(xi * sy + yi) * sz + zi] += wx * wy * wz * gv;
                    }
                  }
                }
              }
            }
          }
        }
      });
  return Var{&t, id};
}

// --- conv3d k=2 s=2 ---

Var conv3d_k2s2(Var x, Var W, Var bias) {
  check_same_tape(x, W, "conv3d_k2s2");
  check_same_tape(x, bias, "conv3d_k2s2");
  const Tensor& xv = x.value();
  const Tensor& Wv = W.value();
  if (xv.rank() != 4) {
    throw std::invalid_argument("conv3d_k2s2: x must be [Cin,X,Y,Z]");
  }
  if (Wv.rank() != 5 || Wv.dim(2) != 2 || Wv.dim(3) != 2 || Wv.dim(4) != 2 ||
      Wv.dim(1) != xv.dim(0)) {
    throw std::invalid_argument("conv3d_k2s2: W must be [Cout,Cin,2,2,2], Cin " +
                                std::to_string(xv.dim(0)));
  }
  for (std::size_t i = 1; i < 4; ++i) {
    if (xv.dim(i) % 2 != 0) {
      throw std::invalid_argument("conv3d_k2s2: odd spatial dim " +
                                  std::to_string(xv.dim(i)));
    }
  }
  const std::size_t cin = xv.dim(0), sx = xv.dim(1), sy = xv.dim(2),
                    sz = xv.dim(3);
  const std::size_t cout = Wv.dim(0);
  const std::size_t ox = sx / 2, oy = sy / 2, oz = sz / 2;
  Tensor out({cout, ox, oy, oz});
  for (std::size_t co = 0; co < cout; ++co) {
    const double b = bias.value()[co];
    double* o = out.data() + co * ox * oy * oz;
    for (std::size_t i = 0; i < ox * oy * oz; ++i) o[i] = b;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* in = xv.data() + ci * sx * sy * sz;
      const double* w = Wv.data() + (co * cin + ci) * 8;
      for (std::size_t i = 0; i < ox; ++i) {
        for (std::size_t j = 0; j < oy; ++j) {
          for (std::size_t k = 0; k < oz; ++k) {
            double acc = 0.0;
            for (int dx = 0; dx < 2; ++dx) {
              for (int dy = 0; dy < 2; ++dy) {
                for (int dz = 0; dz < 2; ++dz) {
                  acc += w[(dx * 2 + dy) * 2 + dz] *
                         in[((2 * i + dx) * sy + (2 * j + dy)) * sz +
                            (2 * k + dz)];
                }
              }
            }
            o[(i * oy + j) * oz + k] += acc;
          }
        }
      }
    }
  }
  Tape& t = *x.tape;
  int id = t.emit(
      std::move(out), any_requires({x, W, bias}),
      [ix = x.id, iw = W.id, ib = bias.id, cin, cout, sx, sy, sz, ox, oy,
       oz](Tape& tp, int self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& xv2 = tp.value(ix);
        const Tensor& Wv2 = tp.value(iw);
        const bool need_x = tp.needs_grad(ix);
        const bool need_w = tp.needs_grad(iw);
        if (need_x || need_w) {
          for (std::size_t co = 0; co < cout; ++co) {
            const double* go = g.data() + co * ox * oy * oz;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* in = xv2.data() + ci * sx * sy * sz;
              const double* w = Wv2.data() + (co * cin + ci) * 8;
              double* gin = need_x
                                ? tp.grad_slot(ix).data() + ci * sx * sy * sz
                                : nullptr;
              double* gw = need_w
                               ? tp.grad_slot(iw).data() + (co * cin + ci) * 8
                               : nullptr;
              for (std::size_t i = 0; i < ox; ++i) {
                for (std::size_t j = 0; j < oy; ++j) {
                  for (std::size_t k = 0; k < oz; ++k) {
                    const double gv = go[(i * oy + j) * oz + k];
                    for (int dx = 0; dx < 2; ++dx) {
                      for (int dy = 0; dy < 2; ++dy) {
                        for (int dz = 0; dz < 2; ++dz) {
                          const std::size_t src =
                              ((2 * i + dx) * sy + (2 * j + dy)) * sz +
                              (2 * k + dz);
                          const int wi = (dx * 2 + dy) * 2 + dz;
                          if (gin != nullptr) gin[src] += gv * w[wi];
                          if (gw != nullptr) gw[wi] += gv * in[src];
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        }
        if (tp.needs_grad(ib)) {
          Tensor& gb = tp.grad_slot(ib);
          for (std::size_t co = 0; co < cout; ++co) {
            gb[co] += K().sum(g.data() + co * ox * oy * oz, ox * oy * oz);
          }
        }
      });
  return Var{&t, id};
}

// --- spectral primitives ---

namespace {
void check_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected [C,X,Y,Z], got " +
                                shape_str(x.shape()));
  }
}
}  // namespace

Var dht_forward_full(Var x) {
  check_rank4(x.value(), "dht_forward");
  Tape& t = *x.tape;
  // Self-adjoint up to the 1/N factor: the adjoint of C/N is C/N.
  int id = t.emit(fft::dht3(x.value(), true), t.needs_grad(x.id),
                  [ix = x.id](Tape& tp, int self) {
                    Tensor gb = fft::dht3(tp.grad_slot(self), true);
                    tp.add_grad(ix, gb.data(), gb.size());
                  });
  return Var{&t, id};
}

Var dht_inverse_full(Var x) {
  check_rank4(x.value(), "dht_inverse");
  Tape& t = *x.tape;
  int id = t.emit(fft::dht3(x.value(), false), t.needs_grad(x.id),
                  [ix = x.id](Tape& tp, int self) {
                    Tensor gb = fft::dht3(tp.grad_slot(self), false);
                    tp.add_grad(ix, gb.data(), gb.size());
                  });
  return Var{&t, id};
}

namespace {
// Permutation sending flat index of [lead, D0, D1, D2] to its negated-mode
// position.
std::vector<std::size_t> reverse3_perm(const Shape& s) {
  const std::size_t r = s.size();
  const std::size_t d0 = s[r - 3], d1 = s[r - 2], d2 = s[r - 1];
  std::size_t lead = 1;
  for (std::size_t i = 0; i + 3 < r + 0; ++i) lead *= s[i];
  std::vector<std::size_t> perm(lead * d0 * d1 * d2);
  std::size_t idx = 0;
  for (std::size_t l = 0; l < lead; ++l) {
    const std::size_t base = l * d0 * d1 * d2;
    for (std::size_t i = 0; i < d0; ++i) {
      const std::size_t ri = (d0 - i) % d0;
      for (std::size_t j = 0; j < d1; ++j) {
        const std::size_t rj = (d1 - j) % d1;
        for (std::size_t k = 0; k < d2; ++k) {
          const std::size_t rk = (d2 - k) % d2;
          perm[idx++] = base + (ri * d1 + rj) * d2 + rk;
        }
      }
    }
  }
  return perm;
}
}  // namespace

Var reverse3(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 3) {
    throw std::invalid_argument("reverse3: need at least 3 dims");
  }
  auto perm = reverse3_perm(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[perm[i]];
  Tape& t = *x.tape;
  int id = t.emit(std::move(out), t.needs_grad(x.id),
                  [ix = x.id, perm = std::move(perm)](Tape& tp, int self) {
                    const Tensor& g = tp.grad_slot(self);
                    Tensor& gx = tp.grad_slot(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      gx[perm[i]] += g[i];
                    }
                  });
  return Var{&t, id};
}

namespace {
std::vector<std::size_t> band_axis_indices(std::size_t n, std::size_t k,
                                           const char* op, int axis) {
  if (2 * k > n) {
    throw std::invalid_argument(std::string(op) + ": 2*k_max " +
                                std::to_string(2 * k) + " exceeds grid dim " +
                                std::to_string(n) + " (axis " +
                                std::to_string(axis) + ")");
  }
  std::vector<std::size_t> idx(2 * k);
  for (std::size_t b = 0; b < 2 * k; ++b) idx[b] = b < k ? b : n - 2 * k + b;
  return idx;
}
}  // namespace

Var mode_crop(Var x, std::array<std::size_t, 3> k_max) {
  check_rank4(x.value(), "mode_crop");
  const Tensor& xv = x.value();
  const std::size_t c = xv.dim(0);
  const auto ix_ = band_axis_indices(xv.dim(1), k_max[0], "mode_crop", 0);
  const auto iy_ = band_axis_indices(xv.dim(2), k_max[1], "mode_crop", 1);
  const auto iz_ = band_axis_indices(xv.dim(3), k_max[2], "mode_crop", 2);
  const std::size_t bx = ix_.size(), by = iy_.size(), bz = iz_.size();
  const std::size_t nx = xv.dim(1), ny = xv.dim(2), nz = xv.dim(3);
  Tensor out({c, bx, by, bz});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in = xv.data() + ch * nx * ny * nz;
    double* o = out.data() + ch * bx * by * bz;
    for (std::size_t i = 0; i < bx; ++i) {
      for (std::size_t j = 0; j < by; ++j) {
        for (std::size_t k = 0; k < bz; ++k) {
          o[(i * by + j) * bz + k] = in[(ix_[i] * ny + iy_[j]) * nz + iz_[k]];
        }
      }
    }
  }
  Tape& t = *x.tape;
  int id = t.emit(
      std::move(out), t.needs_grad(x.id),
      [ixid = x.id, ix_, iy_, iz_, c, nx, ny, nz, bx, by, bz](Tape& tp,
                                                             int self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& gx = tp.grad_slot(ixid);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double* gi = gx.data() + ch * nx * ny * nz;
          const double* go = g.data() + ch * bx * by * bz;
          for (std::size_t i = 0; i < bx; ++i) {
            for (std::size_t j = 0; j < by; ++j) {
              for (std::size_t k = 0; k < bz; ++k) {
                gi[(ix_[i] * ny + iy_[j]) * nz + iz_[k]] +=
                    go[(i * by + j) * bz + k];
              }
            }
          }
        }
      });
  return Var{&t, id};
}

Var mode_pad(Var x, std::array<std::size_t, 3> grid) {
  check_rank4(x.value(), "mode_pad");
  const Tensor& xv = x.value();
  for (int a = 0; a < 3; ++a) {
    if (xv.dim(a + 1) % 2 != 0) {
      throw std::invalid_argument("mode_pad: band dim must be even (2*k)");
    }
  }
  const std::size_t c = xv.dim(0);
  const auto ix_ = band_axis_indices(grid[0], xv.dim(1) / 2, "mode_pad", 0);
  const auto iy_ = band_axis_indices(grid[1], xv.dim(2) / 2, "mode_pad", 1);
  const auto iz_ = band_axis_indices(grid[2], xv.dim(3) / 2, "mode_pad", 2);
  const std::size_t bx = xv.dim(1), by = xv.dim(2), bz = xv.dim(3);
  const std::size_t nx = grid[0], ny = grid[1], nz = grid[2];
  Tensor out({c, nx, ny, nz});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in = xv.data() + ch * bx * by * bz;
    double* o = out.data() + ch * nx * ny * nz;
    for (std::size_t i = 0; i < bx; ++i) {
      for (std::size_t j = 0; j < by; ++j) {
        for (std::size_t k = 0; k < bz; ++k) {
          o[(ix_[i] * ny + iy_[j]) * nz + iz_[k]] = in[(i * by + j) * bz + k];
        }
      }
    }
  }
  Tape& t = *x.tape;
  int id = t.emit(
      std::move(out), t.needs_grad(x.id),
      [ixid = x.id, ix_, iy_, iz_, c, nx, ny, nz, bx, by, bz](Tape& tp,
                                                             int self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& gx = tp.grad_slot(ixid);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* gi = g.data() + ch * nx * ny * nz;
          double* go = gx.data() + ch * bx * by * bz;
          for (std::size_t i = 0; i < bx; ++i) {
            for (std::size_t j = 0; j < by; ++j) {
              for (std::size_t k = 0; k < bz; ++k) {
                go[(i * by + j) * bz + k] +=
                    gi[(ix_[i] * ny + iy_[j]) * nz + iz_[k]];
              }
            }
          }
        }
      });
  return Var{&t, id};
}

Var mode_matmul(Var W, Var x) {
  check_same_tape(W, x, "mode_matmul");
  const Tensor& Wv = W.value();
  const Tensor& xv = x.value();
  if (Wv.rank() != xv.rank() + 1 || Wv.dim(1) != xv.dim(0)) {
    throw std::invalid_argument("mode_matmul: shape mismatch W " +
                                shape_str(Wv.shape()) + " vs x " +
                                shape_str(xv.shape()));
  }
  for (std::size_t i = 1; i < xv.rank(); ++i) {
    if (Wv.dim(i + 1) != xv.dim(i)) {
      throw std::invalid_argument("mode_matmul: mode dims mismatch W " +
                                  shape_str(Wv.shape()) + " vs x " +
                                  shape_str(xv.shape()));
    }
  }
  const std::size_t cout = Wv.dim(0), cin = Wv.dim(1);
  const std::size_t m = xv.size() / cin;
  Shape out_shape = xv.shape();
  out_shape[0] = cout;
  Tensor out(out_shape);
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * m;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      K().vmadd(Wv.data() + (co * cin + ci) * m, xv.data() + ci * m, o, m);
    }
  }
  Tape& t = *x.tape;
  int id = t.emit(
      std::move(out), any_requires({W, x}),
      [iw = W.id, ix = x.id, cout, cin, m](Tape& tp, int self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& Wv2 = tp.value(iw);
        const Tensor& xv2 = tp.value(ix);
        if (tp.needs_grad(ix)) {
          Tensor& gx = tp.grad_slot(ix);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              K().vmadd(Wv2.data() + (co * cin + ci) * m, g.data() + co * m,
                        gx.data() + ci * m, m);
            }
          }
        }
        if (tp.needs_grad(iw)) {
          Tensor& gw = tp.grad_slot(iw);
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              K().vmadd(g.data() + co * m, xv2.data() + ci * m,
                        gw.data() + (co * cin + ci) * m, m);
            }
          }
        }
      });
  return Var{&t, id};
}

}  // namespace hnoseg::ad
