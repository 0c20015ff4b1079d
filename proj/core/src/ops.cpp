#include "strel/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "strel/error.hpp"

namespace strel::ops {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(msg(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
  }
}

// outer/inner products around one axis; the workhorse of concat/slice/expand.
std::pair<std::size_t, std::size_t> split_at(const Shape& shape, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, inner};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_from_op(a.shape(), std::move(out), {a, b},
                      [a, b](const std::vector<double>& og, BackwardPass& pass) {
                        if (a.requires_grad()) {
                          auto& ga = pass.buf(a);
                          for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
                        }
                        if (b.requires_grad()) {
                          auto& gb = pass.buf(b);
                          for (std::size_t i = 0; i < og.size(); ++i) gb[i] += og[i];
                        }
                      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_from_op(a.shape(), std::move(out), {a, b},
                      [a, b](const std::vector<double>& og, BackwardPass& pass) {
                        if (a.requires_grad()) {
                          auto& ga = pass.buf(a);
                          for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
                        }
                        if (b.requires_grad()) {
                          auto& gb = pass.buf(b);
                          for (std::size_t i = 0; i < og.size(); ++i) gb[i] -= og[i];
                        }
                      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_from_op(a.shape(), std::move(out), {a, b},
                      [a, b](const std::vector<double>& og, BackwardPass& pass) {
                        if (a.requires_grad()) {
                          auto& ga = pass.buf(a);
                          for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i] * b.data()[i];
                        }
                        if (b.requires_grad()) {
                          auto& gb = pass.buf(b);
                          for (std::size_t i = 0; i < og.size(); ++i) gb[i] += og[i] * a.data()[i];
                        }
                      });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * c;
  return make_from_op(x.shape(), std::move(out), {x},
                      [x, c](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i] * c;
                      });
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + c;
  return make_from_op(x.shape(), std::move(out), {x},
                      [x](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
                      });
}

Tensor add_n(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("add_n: empty input list");
  for (const Tensor& p : parts) check_same_shape(parts[0], p, "add_n");
  std::vector<double> out(parts[0].numel(), 0.0);
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.data()[i];
  }
  return make_from_op(parts[0].shape(), std::move(out), parts,
                      [parts](const std::vector<double>& og, BackwardPass& pass) {
                        for (const Tensor& p : parts) {
                          if (!p.requires_grad()) continue;
                          auto& gp = pass.buf(p);
                          for (std::size_t i = 0; i < og.size(); ++i) gp[i] += og[i];
                        }
                      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError(msg("matmul: incompatible shapes ", shape_str(a.shape()), " and ",
                         shape_str(b.shape())));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ad[i * k + l];
      const double* brow = bd + l * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_from_op({m, n}, std::move(out), {a, b},
                      [a, b, m, k, n](const std::vector<double>& og, BackwardPass& pass) {
                        if (a.requires_grad()) {
                          auto& ga = pass.buf(a);
                          const double* bd = b.data().data();
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t l = 0; l < k; ++l) {
                              double acc = 0.0;
                              const double* brow = bd + l * n;
                              const double* grow = og.data() + i * n;
                              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                              ga[i * k + l] += acc;
                            }
                        }
                        if (b.requires_grad()) {
                          auto& gb = pass.buf(b);
                          const double* ad = a.data().data();
                          for (std::size_t i = 0; i < m; ++i) {
                            const double* grow = og.data() + i * n;
                            for (std::size_t l = 0; l < k; ++l) {
                              const double av = ad[i * k + l];
                              double* gbrow = gb.data() + l * n;
                              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                            }
                          }
                        }
                      });
}

Tensor transpose2d(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError(msg("transpose2d: expected 2-d, got ", shape_str(x.shape())));
  return permute(x, {1, 0});
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() < 1 || b.ndim() != 1 || x.shape().back() != b.shape()[0]) {
    throw ShapeError(msg("add_bias: ", shape_str(x.shape()), " with bias ", shape_str(b.shape())));
  }
  const std::size_t d = b.numel();
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.data()[r * d + j] + b.data()[j];
  return make_from_op(x.shape(), std::move(out), {x, b},
                      [x, b, rows, d](const std::vector<double>& og, BackwardPass& pass) {
                        if (x.requires_grad()) {
                          auto& gx = pass.buf(x);
                          for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
                        }
                        if (b.requires_grad()) {
                          auto& gb = pass.buf(b);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < d; ++j) gb[j] += og[r * d + j];
                        }
                      });
}

Tensor gelu(const Tensor& x) {
  // Exact erf form; smooth everywhere, which keeps finite-difference gradient
  // checks clean at tight tolerances.
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return make_from_op(
      x.shape(), std::move(out), {x},
      [x](const std::vector<double>& og, BackwardPass& pass) {
        if (!x.requires_grad()) return;
        auto& gx = pass.buf(x);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < og.size(); ++i) {
          const double v = x.data()[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
          gx[i] += og[i] * (cdf + v * pdf);
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor y;  // capture output values for the backward closure
  std::vector<double> vals = out;
  y = make_from_op(x.shape(), std::move(out), {x},
                   [x, vals](const std::vector<double>& og, BackwardPass& pass) {
                     if (!x.requires_grad()) return;
                     auto& gx = pass.buf(x);
                     for (std::size_t i = 0; i < og.size(); ++i)
                       gx[i] += og[i] * vals[i] * (1.0 - vals[i]);
                   });
  return y;
}

Tensor softmax_last(const Tensor& x) {
  if (x.ndim() < 1 || x.shape().back() == 0) {
    throw ShapeError(msg("softmax_last: needs a non-empty last axis, got ", shape_str(x.shape())));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data() + r * n;
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= sum;
  }
  std::vector<double> vals = out;
  return make_from_op(x.shape(), std::move(out), {x},
                      [x, vals, rows, n](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* y = vals.data() + r * n;
                          const double* g = og.data() + r * n;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
                          for (std::size_t j = 0; j < n; ++j)
                            gx[r * n + j] += y[j] * (g[j] - dot);
                        }
                      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() < 1) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError(msg("layer_norm: gain/bias must be [", d, "], got ", shape_str(gain.shape()),
                         " and ", shape_str(bias.shape())));
  }
  if (eps <= 0.0) throw ValueError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (in[j] - mean) * inv;
      xhat[r * d + j] = xh;
      out[r * d + j] = gain.data()[j] * xh + bias.data()[j];
    }
  }
  return make_from_op(
      x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, inv_std, rows, d](const std::vector<double>& og, BackwardPass& pass) {
        if (gain.requires_grad()) {
          auto& gg = pass.buf(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += og[r * d + j] * xhat[r * d + j];
        }
        if (bias.requires_grad()) {
          auto& gb = pass.buf(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += og[r * d + j];
        }
        if (x.requires_grad()) {
          auto& gx = pass.buf(x);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* g = og.data() + r * d;
            const double* xh = xhat.data() + r * d;
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[j] * gain.data()[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xh[j];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[j] * gain.data()[j];
              gx[r * d + j] += inv_std[r] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

namespace {

struct ReducePlan {
  Shape out_shape;
  std::vector<std::size_t> out_index_of;  // flat input index -> flat output index
  std::size_t group_size = 1;             // number of inputs per output cell
};

ReducePlan plan_reduce(const Shape& shape, const std::vector<std::size_t>& axes) {
  std::set<std::size_t> ax(axes.begin(), axes.end());
  if (ax.size() != axes.size()) throw ValueError("reduce: duplicate axes");
  for (std::size_t a : ax) {
    if (a >= shape.size()) {
      throw ShapeError(msg("reduce: axis ", a, " out of range for ", shape_str(shape)));
    }
    if (shape[a] == 0) {
      throw ValueError(msg("reduce: degenerate input, axis ", a, " has extent 0"));
    }
  }
  ReducePlan plan;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (ax.contains(i)) {
      plan.group_size *= shape[i];
    } else {
      plan.out_shape.push_back(shape[i]);
    }
  }
  const std::size_t total = shape_numel(shape);
  plan.out_index_of.resize(total);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t out_flat = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (!ax.contains(i)) out_flat = out_flat * shape[i] + idx[i];
    }
    plan.out_index_of[flat] = out_flat;
    for (std::size_t i = shape.size(); i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

}  // namespace

Tensor reduce(const Tensor& x, std::vector<std::size_t> axes, Reduce mode) {
  ReducePlan plan = plan_reduce(x.shape(), axes);
  const std::size_t out_n = shape_numel(plan.out_shape);

  if (mode == Reduce::Mean) {
    std::vector<double> out(out_n, 0.0);
    for (std::size_t i = 0; i < x.numel(); ++i) out[plan.out_index_of[i]] += x.data()[i];
    const double inv = 1.0 / static_cast<double>(plan.group_size);
    for (double& v : out) v *= inv;
    auto index_of = plan.out_index_of;
    return make_from_op(plan.out_shape, std::move(out), {x},
                        [x, index_of, inv](const std::vector<double>& og, BackwardPass& pass) {
                          if (!x.requires_grad()) return;
                          auto& gx = pass.buf(x);
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            gx[i] += og[index_of[i]] * inv;
                        });
  }

  // Max: first occurrence (row-major order) wins ties, for deterministic
  // gradient routing.
  std::vector<double> out(out_n, 0.0);
  std::vector<std::size_t> argmax(out_n, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const std::size_t o = plan.out_index_of[i];
    if (argmax[o] == std::numeric_limits<std::size_t>::max() || x.data()[i] > out[o]) {
      out[o] = x.data()[i];
      argmax[o] = i;
    }
  }
  return make_from_op(plan.out_shape, std::move(out), {x},
                      [x, argmax](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += og[o];
                      });
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_from_op({}, {acc}, {x},
                      [x](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (double& g : gx) g += og[0];
                      });
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw ValueError("mean_all: degenerate input, zero elements");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: empty input list");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError(msg("concat: axis ", axis, " out of range for ", shape_str(first)));
  }
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != first.size()) {
      throw ShapeError(msg("concat: rank mismatch ", shape_str(first), " vs ",
                           shape_str(p.shape())));
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw ShapeError(msg("concat: extent mismatch on axis ", i, ": ", shape_str(first),
                             " vs ", shape_str(p.shape())));
      }
    }
    axis_total += p.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  auto [outer, inner] = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t ext = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = p.data().data() + o * ext * inner;
      double* dst = out.data() + (o * axis_total + offset) * inner;
      std::copy(src, src + ext * inner, dst);
    }
    offset += ext;
  }
  return make_from_op(out_shape, std::move(out), parts,
                      [parts, axis, axis_total, outer, inner](const std::vector<double>& og,
                                                              BackwardPass& pass) {
                        std::size_t off = 0;
                        for (const Tensor& p : parts) {
                          const std::size_t ext = p.shape()[axis];
                          if (p.requires_grad()) {
                            auto& gp = pass.buf(p);
                            for (std::size_t o = 0; o < outer; ++o) {
                              const double* src = og.data() + (o * axis_total + off) * inner;
                              double* dst = gp.data() + o * ext * inner;
                              for (std::size_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                            }
                          }
                          off += ext;
                        }
                      });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= x.ndim()) {
    throw ShapeError(msg("slice: axis ", axis, " out of range for ", shape_str(x.shape())));
  }
  const std::size_t ext = x.shape()[axis];
  if (start + len > ext || len == 0) {
    throw ShapeError(msg("slice: range [", start, ", ", start + len, ") invalid for extent ", ext));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  auto [outer, inner] = split_at(x.shape(), axis);
  std::vector<double> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = x.data().data() + (o * ext + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  return make_from_op(out_shape, std::move(out), {x},
                      [x, ext, start, len, outer, inner](const std::vector<double>& og,
                                                         BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t o = 0; o < outer; ++o) {
                          double* dst = gx.data() + (o * ext + start) * inner;
                          const double* src = og.data() + o * len * inner;
                          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                        }
                      });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw ShapeError(msg("reshape: ", shape_str(x.shape()), " to ", shape_str(new_shape),
                         " changes element count"));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_from_op(std::move(new_shape), std::move(out), {x},
                      [x](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
                      });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t nd = x.ndim();
  if (order.size() != nd) throw ShapeError("permute: order length must equal rank");
  std::vector<bool> seen(nd, false);
  for (std::size_t a : order) {
    if (a >= nd || seen[a]) throw ShapeError("permute: order is not a permutation");
    seen[a] = true;
  }
  Shape out_shape(nd);
  for (std::size_t i = 0; i < nd; ++i) out_shape[i] = x.shape()[order[i]];

  // in_strides in output-axis order
  std::vector<std::size_t> in_strides(nd, 1);
  {
    std::vector<std::size_t> strides(nd, 1);
    for (std::size_t i = nd; i-- > 1;) strides[i - 1] = strides[i] * x.shape()[i];
    for (std::size_t i = 0; i < nd; ++i) in_strides[i] = strides[order[i]];
  }
  const std::size_t total = x.numel();
  std::vector<std::size_t> src_of(total);
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < nd; ++i) src += idx[i] * in_strides[i];
    src_of[flat] = src;
    for (std::size_t i = nd; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = x.data()[src_of[i]];
  return make_from_op(out_shape, std::move(out), {x},
                      [x, src_of](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t i = 0; i < og.size(); ++i) gx[src_of[i]] += og[i];
                      });
}

Tensor expand(const Tensor& x, std::size_t axis, std::size_t times) {
  if (axis >= x.ndim() || x.shape()[axis] != 1) {
    throw ShapeError(msg("expand: axis ", axis, " must exist with extent 1 in ",
                         shape_str(x.shape())));
  }
  if (times == 0) throw ValueError("expand: times must be >= 1");
  Shape out_shape = x.shape();
  out_shape[axis] = times;
  auto [outer, inner] = split_at(x.shape(), axis);
  std::vector<double> out(outer * times * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = x.data().data() + o * inner;
    for (std::size_t t = 0; t < times; ++t)
      std::copy(src, src + inner, out.data() + (o * times + t) * inner);
  }
  return make_from_op(out_shape, std::move(out), {x},
                      [x, outer, times, inner](const std::vector<double>& og, BackwardPass& pass) {
                        if (!x.requires_grad()) return;
                        auto& gx = pass.buf(x);
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t t = 0; t < times; ++t) {
                            const double* src = og.data() + (o * times + t) * inner;
                            double* dst = gx.data() + o * inner;
                            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                          }
                      });
}

}  // namespace strel::ops
