#include <algorithm>
#include <vector>

#include "strel/error.hpp"
#include "strel/ops.hpp"

namespace strel::ops {

namespace {

// Output-index range [lo, hi) whose input coordinate o*stride - pad + k stays
// in bounds, for one kernel offset k.
struct OutRange {
  std::size_t lo;
  std::size_t hi;
};

OutRange out_range(std::size_t out_extent, std::size_t in_extent, int stride, int pad, int k) {
  long lo = 0;
  const long shift = static_cast<long>(k) - pad;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  long hi = out_extent;
  // largest o with o*stride + shift <= in_extent - 1
  const long max_o = (static_cast<long>(in_extent) - 1 - shift) / stride;
  hi = std::min<long>(hi, max_o + 1);
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

// Direct convolution in an output-row-stationary order: for every kernel tap
// the contribution streams along contiguous output rows, which keeps the
// inner loops branch-free and the index math hoisted.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_t, int stride_s,
              int pad_t, int pad_s) {
  if (x.ndim() != 4) throw ShapeError(msg("conv3d: input must be CxTxHxW, got ", shape_str(x.shape())));
  if (w.ndim() != 5) throw ShapeError(msg("conv3d: weight must be 5-d, got ", shape_str(w.shape())));
  const std::size_t cin = x.shape()[0], t_in = x.shape()[1], h_in = x.shape()[2],
                    w_in = x.shape()[3];
  const std::size_t cout = w.shape()[0], kt = w.shape()[2], kh = w.shape()[3], kw = w.shape()[4];
  if (w.shape()[1] != cin) {
    throw ShapeError(msg("conv3d: weight expects ", w.shape()[1], " input channels, input has ",
                         cin));
  }
  if (b.shape() != Shape{cout}) {
    throw ShapeError(msg("conv3d: bias must be [", cout, "], got ", shape_str(b.shape())));
  }
  if (stride_t < 1 || stride_s < 1 || pad_t < 0 || pad_s < 0) {
    throw ValueError("conv3d: strides must be >= 1 and padding >= 0");
  }
  const std::size_t t_out = (t_in + 2 * pad_t - kt) / stride_t + 1;
  const std::size_t h_out = (h_in + 2 * pad_s - kh) / stride_s + 1;
  const std::size_t w_out = (w_in + 2 * pad_s - kw) / stride_s + 1;

  std::vector<OutRange> t_ranges(kt), h_ranges(kh), w_ranges(kw);
  for (std::size_t k = 0; k < kt; ++k) {
    t_ranges[k] = out_range(t_out, t_in, stride_t, pad_t, static_cast<int>(k));
  }
  for (std::size_t k = 0; k < kh; ++k) {
    h_ranges[k] = out_range(h_out, h_in, stride_s, pad_s, static_cast<int>(k));
  }
  for (std::size_t k = 0; k < kw; ++k) {
    w_ranges[k] = out_range(w_out, w_in, stride_s, pad_s, static_cast<int>(k));
  }

  std::vector<double> out(cout * t_out * h_out * w_out);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    double* obase = out.data() + co * t_out * h_out * w_out;
    std::fill(obase, obase + t_out * h_out * w_out, b.data()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xc = xd + ci * t_in * h_in * w_in;
      const double* wc = wd + (co * cin + ci) * kt * kh * kw;
      for (std::size_t dt = 0; dt < kt; ++dt) {
        const OutRange& tr = t_ranges[dt];
        for (std::size_t dh = 0; dh < kh; ++dh) {
          const OutRange& hr = h_ranges[dh];
          for (std::size_t dw = 0; dw < kw; ++dw) {
            const OutRange& wr = w_ranges[dw];
            const double wval = wc[(dt * kh + dh) * kw + dw];
            if (wval == 0.0) continue;
            const long wshift = static_cast<long>(dw) - pad_s;
            for (std::size_t to = tr.lo; to < tr.hi; ++to) {
              const std::size_t ti = to * stride_t - pad_t + dt;
              for (std::size_t ho = hr.lo; ho < hr.hi; ++ho) {
                const std::size_t hi = ho * stride_s - pad_s + dh;
                const double* xrow = xc + (ti * h_in + hi) * w_in + wshift;
                double* orow = obase + (to * h_out + ho) * w_out;
                for (std::size_t wo = wr.lo; wo < wr.hi; ++wo) {
                  orow[wo] += wval * xrow[wo * stride_s];
                }
              }
            }
          }
        }
      }
    }
  }

  auto backward = [x, w, b, cin, t_in, h_in, w_in, cout, kt, kh, kw, t_out, h_out, w_out, stride_t,
                   stride_s, pad_t, pad_s, t_ranges, h_ranges,
                   w_ranges](const std::vector<double>& og, BackwardPass& pass) {
    const bool need_x = x.requires_grad();
    const bool need_w = w.requires_grad();
    const bool need_b = b.requires_grad();
    if (!need_x && !need_w && !need_b) return;
    const double* xd = x.data().data();
    const double* wd = w.data().data();

    if (need_b) {
      auto& gb = pass.buf(b);
      for (std::size_t co = 0; co < cout; ++co) {
        const double* grow = og.data() + co * t_out * h_out * w_out;
        double acc = 0.0;
        for (std::size_t i = 0; i < t_out * h_out * w_out; ++i) acc += grow[i];
        gb[co] += acc;
      }
    }
    if (!need_x && !need_w) return;

    std::vector<double>* gx = need_x ? &pass.buf(x) : nullptr;
    std::vector<double>* gw = need_w ? &pass.buf(w) : nullptr;
    for (std::size_t co = 0; co < cout; ++co) {
      const double* gbase = og.data() + co * t_out * h_out * w_out;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xc = xd + ci * t_in * h_in * w_in;
        const double* wc = wd + (co * cin + ci) * kt * kh * kw;
        double* gxc = need_x ? gx->data() + ci * t_in * h_in * w_in : nullptr;
        double* gwc = need_w ? gw->data() + (co * cin + ci) * kt * kh * kw : nullptr;
        for (std::size_t dt = 0; dt < kt; ++dt) {
          const OutRange& tr = t_ranges[dt];
          for (std::size_t dh = 0; dh < kh; ++dh) {
            const OutRange& hr = h_ranges[dh];
            for (std::size_t dw = 0; dw < kw; ++dw) {
              const OutRange& wr = w_ranges[dw];
              const long wshift = static_cast<long>(dw) - pad_s;
              const double wval = wc[(dt * kh + dh) * kw + dw];
              double wacc = 0.0;
              for (std::size_t to = tr.lo; to < tr.hi; ++to) {
                const std::size_t ti = to * stride_t - pad_t + dt;
                for (std::size_t ho = hr.lo; ho < hr.hi; ++ho) {
                  const std::size_t hi = ho * stride_s - pad_s + dh;
                  const double* xrow = xc + (ti * h_in + hi) * w_in + wshift;
                  const double* grow = gbase + (to * h_out + ho) * w_out;
                  if (need_w && need_x) {
                    double* gxrow = gxc + (ti * h_in + hi) * w_in + wshift;
                    for (std::size_t wo = wr.lo; wo < wr.hi; ++wo) {
                      const double g = grow[wo];
                      wacc += g * xrow[wo * stride_s];
                      gxrow[wo * stride_s] += g * wval;
                    }
                  } else if (need_w) {
                    for (std::size_t wo = wr.lo; wo < wr.hi; ++wo) {
                      wacc += grow[wo] * xrow[wo * stride_s];
                    }
                  } else {
                    double* gxrow = gxc + (ti * h_in + hi) * w_in + wshift;
                    for (std::size_t wo = wr.lo; wo < wr.hi; ++wo) {
                      gxrow[wo * stride_s] += grow[wo] * wval;
                    }
                  }
                }
              }
              if (need_w) gwc[(dt * kh + dh) * kw + dw] += wacc;
            }
          }
        }
      }
    }
  };

  return make_from_op({cout, t_out, h_out, w_out}, std::move(out), {x, w, b}, backward);
}

}  // namespace strel::ops
