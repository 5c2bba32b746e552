#include "woundnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>

#include "woundnet/errors.hpp"

namespace woundnet::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const char* op, const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank(const char* op, const NdArray& a, std::size_t rank) {
  if (a.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
}

void add_into(NdArray& dst, const NdArray& src, double k = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += k * src[i];
}

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ConvGeom {
  std::size_t c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t k() const { return c * kh * kw; }
  std::size_t p() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns ox whose input column ox*s + j - pad lies inside [0, w).
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeom& g, std::size_t j) {
  const long s = static_cast<long>(g.stride), off = static_cast<long>(j) - static_cast<long>(g.pad);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(g.w) - off + s - 1) / s;
  hi = std::clamp(hi, 0L, static_cast<long>(g.ow));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col[(ci*kh + i)*kw + j, oy*ow + ox] = x[ci, oy*s + i - pad, ox*s + j - pad]
void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t p = g.p();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        const auto [lo, hi] = valid_columns(g, j);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad);
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1)
            std::copy(src + (static_cast<std::ptrdiff_t>(lo) + shift), src + (static_cast<std::ptrdiff_t>(hi) + shift),
                      dst + lo);
          else
            for (std::size_t ox = lo; ox < hi; ++ox)
              dst[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + shift];
          std::fill(dst + hi, dst + g.ow, 0.0);
        }
      }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const std::size_t p = g.p();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((ci * g.kh + i) * g.kw + j) * p;
        const auto [lo, hi] = valid_columns(g, j);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = dx + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad);
          const double* src = row + oy * g.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox * g.stride) + shift] += src[ox];
        }
      }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  NdArray out = a.value();
  add_into(out, b.value());
  return a.tape()->record("add", std::move(out), {a, b},
                          [](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (gin[0]) add_into(*gin[0], g);
                            if (gin[1]) add_into(*gin[1], g);
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  NdArray out = a.value();
  add_into(out, b.value(), -1.0);
  return a.tape()->record("sub", std::move(out), {a, b},
                          [](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (gin[0]) add_into(*gin[0], g);
                            if (gin[1]) add_into(*gin[1], g, -1.0);
                          });
}

Var scale(Var a, double k) {
  NdArray out = a.value();
  for (double& v : out.data()) v *= k;
  return a.tape()->record("scale", std::move(out), {a},
                          [k](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (gin[0]) add_into(*gin[0], g, k);
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record("mul", std::move(out), {a, b},
                          [a, b](const NdArray& g, std::vector<NdArray*>& gin) {
                            const NdArray& av = a.value();
                            const NdArray& bv = b.value();
                            if (gin[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bv[i];
                            if (gin[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * av[i];
                          });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape()->record("sum", NdArray::scalar(s), {a},
                          [](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (!gin[0]) return;
                            for (double& v : gin[0]->data()) v += g[0];
                          });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var relu(Var a) {
  NdArray out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape()->record("relu", std::move(out), {a},
                          [a](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (!gin[0]) return;
                            const NdArray& x = a.value();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              if (x[i] > 0.0) (*gin[0])[i] += g[i];
                          });
}

Var sigmoid(Var a) {
  NdArray out = a.value();
  for (double& v : out.data()) v = sigmoid_scalar(v);
  auto y = std::make_shared<NdArray>(out);
  return a.tape()->record("sigmoid", std::move(out), {a},
                          [y](const NdArray& g, std::vector<NdArray*>& gin) {
                            if (!gin[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const double s = (*y)[i];
                              (*gin[0])[i] += g[i] * s * (1.0 - s);
                            }
                          });
}

Shape conv2d_output_shape(const Shape& in, const Shape& wt, std::size_t stride,
                          std::size_t padding) {
  if (in.size() != 4 || wt.size() != 4)
    throw ShapeError("conv2d: input and weight must be rank 4, got " + shape_str(in) + " and " +
                     shape_str(wt));
  if (in[1] != wt[1])
    throw ShapeError("conv2d: input has " + std::to_string(in[1]) + " channels but weight expects " +
                     std::to_string(wt[1]));
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t hp = in[2] + 2 * padding, wp = in[3] + 2 * padding;
  if (wt[2] > hp || wt[3] > wp)
    throw ShapeError("conv2d: kernel " + shape_str(wt) + " larger than padded input " +
                     shape_str(in));
  return {in[0], wt[0], (hp - wt[2]) / stride + 1, (wp - wt[3]) / stride + 1};
}

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const NdArray& x = input.value();
  const NdArray& w = weight.value();
  const NdArray& b = bias.value();
  const Shape os = conv2d_output_shape(x.shape(), w.shape(), stride, padding);
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(w.dim(0)) + " filters");

  const ConvGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
                   stride,   padding,  os[2],    os[3]};
  const std::size_t n = x.dim(0), in_sz = g.c * g.h * g.w, out_sz = g.f * g.p();
  NdArray out(os);
  Buffer col(g.pointwise() ? 0 : g.k() * g.p());
  CMapMat wm(w.raw(), g.f, g.k());
  Eigen::Map<const Eigen::VectorXd> bv(b.raw(), g.f);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.raw() + i * in_sz;
    if (!g.pointwise()) im2col(xi, g, col.data());
    CMapMat cm(g.pointwise() ? xi : col.data(), g.k(), g.p());
    MapMat om(out.raw() + i * out_sz, g.f, g.p());
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }

  return input.tape()->record(
      "conv2d", std::move(out), {input, weight, bias},
      [input, weight, g, n, in_sz, out_sz](const NdArray& go, std::vector<NdArray*>& gin) {
        const NdArray& x = input.value();
        const NdArray& w = weight.value();
        CMapMat wm(w.raw(), g.f, g.k());
        Buffer col(g.pointwise() ? 0 : g.k() * g.p());
        Buffer dcol(g.k() * g.p());
        for (std::size_t i = 0; i < n; ++i) {
          CMapMat gm(go.raw() + i * out_sz, g.f, g.p());
          const double* xi = x.raw() + i * in_sz;
          if (gin[1]) {
            if (!g.pointwise()) im2col(xi, g, col.data());
            CMapMat cm(g.pointwise() ? xi : col.data(), g.k(), g.p());
            MapMat dw(gin[1]->raw(), g.f, g.k());
            dw.noalias() += gm * cm.transpose();
          }
          if (gin[2]) {
            double* db = gin[2]->raw();
            const double* gp = go.raw() + i * out_sz;
            for (std::size_t f = 0; f < g.f; ++f)
              for (std::size_t q = 0; q < g.p(); ++q) db[f] += gp[f * g.p() + q];
          }
          if (gin[0]) {
            double* dxi = gin[0]->raw() + i * in_sz;
            if (g.pointwise()) {
              MapMat dx(dxi, g.k(), g.p());
              dx.noalias() += wm.transpose() * gm;
            } else {
              MapMat dc(dcol.data(), g.k(), g.p());
              dc.noalias() = wm.transpose() * gm;
              col2im_add(dcol.data(), g, dxi);
            }
          }
        }
      });
}

Shape pool_output_shape(const Shape& in, std::size_t kernel, std::size_t stride) {
  if (in.size() != 4) throw ShapeError("max_pool2d: expected rank 4, got " + shape_str(in));
  if (kernel == 0 || stride == 0) throw ShapeError("max_pool2d: kernel and stride must be >= 1");
  if (kernel > in[2] || kernel > in[3])
    throw ShapeError("max_pool2d: kernel " + std::to_string(kernel) + " larger than input " +
                     shape_str(in));
  return {in[0], in[1], (in[2] - kernel) / stride + 1, (in[3] - kernel) / stride + 1};
}

Var max_pool2d(Var input, std::size_t kernel, std::size_t stride) {
  const NdArray& x = input.value();
  const Shape os = pool_output_shape(x.shape(), kernel, stride);
  NdArray out(os);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const std::size_t h = x.dim(2), w = x.dim(3), oh = os[2], ow = os[3];
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < os[0] * os[1]; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t i = 0; i < kernel; ++i)
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t idx = base + (oy * stride + i) * w + ox * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        out[o] = x[best];
        (*argmax)[o] = best;
      }
  }
  return input.tape()->record("max_pool2d", std::move(out), {input},
                              [argmax](const NdArray& g, std::vector<NdArray*>& gin) {
                                if (!gin[0]) return;
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  (*gin[0])[(*argmax)[i]] += g[i];
                              });
}

Var global_avg_pool(Var input) {
  const NdArray& x = input.value();
  require_rank("global_avg_pool", x, 4);
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  NdArray out({x.dim(0), x.dim(1)});
  // shifted mean: exact for spatially constant maps
  for (std::size_t p = 0; p < planes; ++p) {
    const double x0 = x[p * hw];
    double s = 0.0;
    for (std::size_t k = 1; k < hw; ++k) s += x[p * hw + k] - x0;
    out[p] = x0 + s / static_cast<double>(hw);
  }
  return input.tape()->record("global_avg_pool", std::move(out), {input},
                              [planes, hw](const NdArray& g, std::vector<NdArray*>& gin) {
                                if (!gin[0]) return;
                                const double inv = 1.0 / static_cast<double>(hw);
                                for (std::size_t p = 0; p < planes; ++p)
                                  for (std::size_t k = 0; k < hw; ++k)
                                    (*gin[0])[p * hw + k] += g[p] * inv;
                              });
}

Var linear(Var input, Var weight, Var bias) {
  const NdArray& x = input.value();
  const NdArray& w = weight.value();
  const NdArray& b = bias.value();
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  if (x.dim(1) != w.dim(1))
    throw ShapeError("linear: input width " + std::to_string(x.dim(1)) + " but weight expects " +
                     std::to_string(w.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(w.dim(0)) + " outputs");
  const std::size_t n = x.dim(0), in = x.dim(1), outw = w.dim(0);
  NdArray out({n, outw});
  MapMat om(out.raw(), n, outw);
  om.noalias() = CMapMat(x.raw(), n, in) * CMapMat(w.raw(), outw, in).transpose();
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.raw(), outw);
  return input.tape()->record(
      "linear", std::move(out), {input, weight, bias},
      [input, weight, n, in, outw](const NdArray& g, std::vector<NdArray*>& gin) {
        CMapMat gm(g.raw(), n, outw);
        if (gin[0]) MapMat(gin[0]->raw(), n, in).noalias() += gm * CMapMat(weight.value().raw(), outw, in);
        if (gin[1])
          MapMat(gin[1]->raw(), outw, in).noalias() += gm.transpose() * CMapMat(input.value().raw(), n, in);
        if (gin[2]) Eigen::Map<Eigen::RowVectorXd>(gin[2]->raw(), outw) += gm.colwise().sum();
      });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 2 && s0.size() != 4)
    throw ShapeError("concat: expected rank 2 or 4, got " + shape_str(s0));
  std::size_t inner = 1;
  for (std::size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
  std::size_t channels = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size() && s[0] == s0[0];
    for (std::size_t d = 2; ok && d < s.size(); ++d) ok = s[d] == s0[d];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    widths.push_back(s[1] * inner);
    channels += s[1];
  }
  Shape os = s0;
  os[1] = channels;
  NdArray out(os);
  const std::size_t n = s0[0], row = channels * inner;
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const NdArray& v = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(v.raw() + i * widths[k], widths[k], out.raw() + i * row + off);
    off += widths[k];
  }
  return parts[0].tape()->record("concat", std::move(out), parts,
                                 [widths, n, row](const NdArray& g, std::vector<NdArray*>& gin) {
                                   std::size_t off = 0;
                                   for (std::size_t k = 0; k < widths.size(); ++k) {
                                     if (gin[k])
                                       for (std::size_t i = 0; i < n; ++i)
                                         for (std::size_t j = 0; j < widths[k]; ++j)
                                           (*gin[k])[i * widths[k] + j] += g[i * row + off + j];
                                     off += widths[k];
                                   }
                                 });
}

Var column(Var input, std::size_t j) {
  const NdArray& x = input.value();
  require_rank("column", x, 2);
  if (j >= x.dim(1))
    throw ShapeError("column: index " + std::to_string(j) + " out of range for " +
                     shape_str(x.shape()));
  const std::size_t n = x.dim(0), t = x.dim(1);
  NdArray out({n, 1});
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i * t + j];
  return input.tape()->record("column", std::move(out), {input},
                              [n, t, j](const NdArray& g, std::vector<NdArray*>& gin) {
                                if (!gin[0]) return;
                                for (std::size_t i = 0; i < n; ++i) (*gin[0])[i * t + j] += g[i];
                              });
}

Var batch_norm2d(Var input, Var gamma, Var beta, const NdArray& running_mean,
                 const NdArray& running_var, Mode mode, double eps, BatchStats* observed) {
  const NdArray& x = input.value();
  require_rank("batch_norm2d", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (const NdArray* a : {&gamma.value(), &beta.value(), &running_mean, &running_var})
    if (a->rank() != 1 || a->dim(0) != c)
      throw ShapeError("batch_norm2d: per-channel vector " + shape_str(a->shape()) +
                       " does not match " + std::to_string(c) + " channels");
  const std::size_t m = n * hw;
  if (mode == Mode::train && m < 2)
    throw ShapeError("batch_norm2d: training mode needs more than one value per channel");

  std::vector<double> mu(c), inv_std(c);
  if (mode == Mode::train) {
    if (observed) {
      observed->mean.assign(c, 0.0);
      observed->var_unbiased.assign(c, 0.0);
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hw; ++k) s += x[(i * c + ch) * hw + k];
      const double mean_c = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hw; ++k) {
          const double d = x[(i * c + ch) * hw + k] - mean_c;
          ss += d * d;
        }
      mu[ch] = mean_c;
      inv_std[ch] = 1.0 / std::sqrt(ss / static_cast<double>(m) + eps);
      if (observed) {
        observed->mean[ch] = mean_c;
        observed->var_unbiased[ch] = ss / static_cast<double>(m - 1);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }

  const NdArray& gm = gamma.value();
  const NdArray& bt = beta.value();
  NdArray out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < hw; ++k) {
        const std::size_t idx = (i * c + ch) * hw + k;
        out[idx] = gm[ch] * (x[idx] - mu[ch]) * inv_std[ch] + bt[ch];
      }

  const bool train = mode == Mode::train;
  return input.tape()->record(
      "batch_norm2d", std::move(out), {input, gamma, beta},
      [input, gamma, mu, inv_std, n, c, hw, m, train](const NdArray& g,
                                                      std::vector<NdArray*>& gin) {
        const NdArray& x = input.value();
        const NdArray& gm = gamma.value();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t idx = (i * c + ch) * hw + k;
              const double xhat = (x[idx] - mu[ch]) * inv_std[ch];
              sum_g += g[idx];
              sum_gx += g[idx] * xhat;
            }
          if (gin[1]) (*gin[1])[ch] += sum_gx;
          if (gin[2]) (*gin[2])[ch] += sum_g;
          if (!gin[0]) continue;
          const double k0 = gm[ch] * inv_std[ch];
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t idx = (i * c + ch) * hw + k;
              if (train) {
                const double xhat = (x[idx] - mu[ch]) * inv_std[ch];
                (*gin[0])[idx] += k0 * (g[idx] - sum_g / static_cast<double>(m) -
                                        xhat * sum_gx / static_cast<double>(m));
              } else {
                (*gin[0])[idx] += k0 * g[idx];
              }
            }
        }
      });
}

}  // namespace woundnet::ad
