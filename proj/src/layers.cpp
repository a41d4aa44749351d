#include "mslabel/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <string>

namespace mslabel {

namespace {

// Target pixel count of one im2col tile; keeps the column buffer cache-resident.
constexpr Index kTilePixels = 256;

struct ConvGeometry {
  Index cin, h, w, cout, k, pad, hout, wout;
  Index taps() const { return cin * k * k; }
  Index rows_per_tile() const { return std::max<Index>(1, kTilePixels / wout); }
  bool pointwise() const { return k == 1 && pad == 0; }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                           const Tensor<Scalar>& b, Padding padding) {
  require(x.rank() == 3, ErrorCategory::shape, "conv2d input must be (C, H, W)");
  require(w.rank() == 4 && w.dim(2) == w.dim(3), ErrorCategory::shape,
          "conv2d weights must be (Cout, Cin, k, k)");
  require(w.dim(2) % 2 == 1, ErrorCategory::shape, "conv2d kernel size must be odd");
  require(w.dim(1) == x.channels(), ErrorCategory::shape,
          "conv2d channel mismatch: input " + shape_string(x.shape()) + ", weights " +
              shape_string(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), ErrorCategory::shape,
          "conv2d bias must be (Cout)");
  ConvGeometry g{};
  g.cin = x.channels();
  g.h = x.height();
  g.w = x.width();
  g.cout = w.dim(0);
  g.k = w.dim(2);
  g.pad = padding == Padding::same ? (g.k - 1) / 2 : 0;
  g.hout = g.h + 2 * g.pad - g.k + 1;
  g.wout = g.w + 2 * g.pad - g.k + 1;
  require(g.hout > 0 && g.wout > 0, ErrorCategory::shape, "conv2d input smaller than kernel");
  return g;
}

// Fills the (taps x rows*wout) column block for output rows [y0, y0 + rows).
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Index y0, Index rows, Scalar* col) {
  const Index n = rows * g.wout;
  for (Index c = 0; c < g.cin; ++c) {
    const Scalar* plane = x + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        Scalar* dst = col + ((c * g.k + ky) * g.k + kx) * n;
        const Index shift = kx - g.pad;
        const Index xs = std::clamp<Index>(-shift, 0, g.wout);
        const Index xe = std::clamp<Index>(g.w - shift, 0, g.wout);
        for (Index r = 0; r < rows; ++r) {
          Scalar* out = dst + r * g.wout;
          const Index iy = y0 + r + ky - g.pad;
          if (iy < 0 || iy >= g.h || xs >= xe) {
            std::fill(out, out + g.wout, Scalar(0));
            continue;
          }
          std::fill(out, out + xs, Scalar(0));
          std::memcpy(out + xs, plane + iy * g.w + xs + shift, sizeof(Scalar) * (xe - xs));
          std::fill(out + xe, out + g.wout, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, Index y0, Index rows, Scalar* dx) {
  const Index n = rows * g.wout;
  for (Index c = 0; c < g.cin; ++c) {
    Scalar* plane = dx + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const Scalar* src = col + ((c * g.k + ky) * g.k + kx) * n;
        const Index shift = kx - g.pad;
        const Index xs = std::clamp<Index>(-shift, 0, g.wout);
        const Index xe = std::clamp<Index>(g.w - shift, 0, g.wout);
        for (Index r = 0; r < rows; ++r) {
          const Index iy = y0 + r + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          const Scalar* in = src + r * g.wout;
          Scalar* out = plane + iy * g.w + shift;
          for (Index xo = xs; xo < xe; ++xo) out[xo] += in[xo];
        }
      }
    }
  }
}

template <typename Scalar>
using RowMatrix = typename Tensor<Scalar>::RowMatrix;

template <typename Scalar>
void conv_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                  const ConvGeometry& g, Tensor<Scalar>& out) {
  const Index pixels = g.hout * g.wout;
  Eigen::Map<const RowMatrix<Scalar>> weights(w.data(), g.cout, g.taps());
  Eigen::Map<RowMatrix<Scalar>> result(out.data(), g.cout, pixels);
  const Index tile_rows = g.rows_per_tile();
  if (g.pointwise()) {
    Eigen::Map<const RowMatrix<Scalar>> input(x.data(), g.cin, pixels);
    for (Index y0 = 0; y0 < g.hout; y0 += tile_rows) {
      const Index rows = std::min(tile_rows, g.hout - y0);
      result.middleCols(y0 * g.wout, rows * g.wout).noalias() =
          weights * input.middleCols(y0 * g.wout, rows * g.wout);
    }
  } else {
    std::vector<Scalar> buffer(static_cast<std::size_t>(g.taps() * tile_rows * g.wout));
    for (Index y0 = 0; y0 < g.hout; y0 += tile_rows) {
      const Index rows = std::min(tile_rows, g.hout - y0);
      im2col(x.data(), g, y0, rows, buffer.data());
      Eigen::Map<const RowMatrix<Scalar>> col(buffer.data(), g.taps(), rows * g.wout);
      result.middleCols(y0 * g.wout, rows * g.wout).noalias() = weights * col;
    }
  }
  result.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b.data(), g.cout);
}

template <typename Scalar>
void conv_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const ConvGeometry& g,
                   const Tensor<Scalar>& dout, Tensor<Scalar>* dx, Tensor<Scalar>* dw,
                   Tensor<Scalar>* db) {
  const Index pixels = g.hout * g.wout;
  Eigen::Map<const RowMatrix<Scalar>> grad(dout.data(), g.cout, pixels);
  Eigen::Map<const RowMatrix<Scalar>> weights(w.data(), g.cout, g.taps());
  if (db) db->matrix().col(0) += grad.rowwise().sum();
  if (!dx && !dw) return;
  const Index tile_rows = g.rows_per_tile();
  RowMatrix<Scalar> dw_acc;
  if (dw) dw_acc = RowMatrix<Scalar>::Zero(g.cout, g.taps());

  if (g.pointwise()) {
    Eigen::Map<const RowMatrix<Scalar>> input(x.data(), g.cin, pixels);
    std::optional<Eigen::Map<RowMatrix<Scalar>>> dinput;
    if (dx) dinput.emplace(dx->data(), g.cin, pixels);
    for (Index y0 = 0; y0 < g.hout; y0 += tile_rows) {
      const Index rows = std::min(tile_rows, g.hout - y0);
      const auto cols = grad.middleCols(y0 * g.wout, rows * g.wout);
      if (dw) dw_acc.noalias() += cols * input.middleCols(y0 * g.wout, rows * g.wout).transpose();
      if (dx) dinput->middleCols(y0 * g.wout, rows * g.wout).noalias() += weights.transpose() * cols;
    }
  } else {
    const auto tile = static_cast<std::size_t>(g.taps() * tile_rows * g.wout);
    std::vector<Scalar> buffer(dw ? tile : 0);
    RowMatrix<Scalar> dcol;
    for (Index y0 = 0; y0 < g.hout; y0 += tile_rows) {
      const Index rows = std::min(tile_rows, g.hout - y0);
      const auto cols = grad.middleCols(y0 * g.wout, rows * g.wout);
      if (dw) {
        im2col(x.data(), g, y0, rows, buffer.data());
        Eigen::Map<const RowMatrix<Scalar>> col(buffer.data(), g.taps(), rows * g.wout);
        dw_acc.noalias() += cols * col.transpose();
      }
      if (dx) {
        dcol.noalias() = weights.transpose() * cols;
        col2im_add(dcol.data(), g, y0, rows, dx->data());
      }
    }
  }
  if (dw) Eigen::Map<RowMatrix<Scalar>>(dw->data(), g.cout, g.taps()) += dw_acc;
}

template <typename Scalar>
void require_chw(const Tensor<Scalar>& x, const char* op) {
  require(x.rank() == 3, ErrorCategory::shape, std::string(op) + " expects a (C, H, W) tensor");
}

struct ResizeAxis {
  std::vector<Index> lo;
  std::vector<Index> hi;
  std::vector<double> frac;
};

ResizeAxis resize_axis(Index in, Index out) {
  ResizeAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (Index i = 0; i < out; ++i) {
    const double src = out > 1 ? static_cast<double>(i) * (in - 1) / (out - 1) : 0.0;
    const auto l = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
    a.lo[i] = l;
    a.hi[i] = std::min<Index>(l + 1, in - 1);
    a.frac[i] = src - l;
  }
  return a;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Padding padding) {
  const auto g = conv_geometry(x, w, b, padding);
  auto out = Tensor<Scalar>::chw(g.cout, g.hout, g.wout);
  conv_forward(x, w, b, g, out);
  return out;
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b,
                   Padding padding) {
  const auto g = conv_geometry(x.value(), w.value(), b.value(), padding);
  auto out = Tensor<Scalar>::chw(g.cout, g.hout, g.wout);
  conv_forward(x.value(), w.value(), b.value(), g, out);
  return record<Scalar>(std::move(out), {x, w, b}, [g](Node<Scalar>& n) {
    auto& px = n.parent(0);
    auto& pw = n.parent(1);
    auto& pb = n.parent(2);
    conv_backward(px.value, pw.value, g, n.grad, px.requires_grad ? &px.ensure_grad() : nullptr,
                  pw.requires_grad ? &pw.ensure_grad() : nullptr,
                  pb.requires_grad ? &pb.ensure_grad() : nullptr);
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.array().max(Scalar(0));
  return out;
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return record<Scalar>(relu(x.value()), {x}, [](Node<Scalar>& n) {
    auto& p = n.parent(0);
    p.ensure_grad().array() += (n.value.array() > Scalar(0)).select(n.grad.array(), Scalar(0));
  });
}

namespace {

template <typename Scalar>
Tensor<Scalar> maxpool_impl(const Tensor<Scalar>& x, std::vector<Index>* argmax) {
  require_chw(x, "maxpool2x2");
  require(x.height() >= 2 && x.width() >= 2, ErrorCategory::shape,
          "maxpool2x2 needs H >= 2 and W >= 2, got " + shape_string(x.shape()));
  const Index c = x.channels(), h = x.height() / 2, w = x.width() / 2;
  auto out = Tensor<Scalar>::chw(c, h, w);
  if (argmax) argmax->resize(static_cast<std::size_t>(out.size()));
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < h; ++y) {
      for (Index xo = 0; xo < w; ++xo) {
        Index best = (ch * x.height() + 2 * y) * x.width() + 2 * xo;
        for (Index dy = 0; dy < 2; ++dy) {
          for (Index dx = 0; dx < 2; ++dx) {
            const Index idx = (ch * x.height() + 2 * y + dy) * x.width() + 2 * xo + dx;
            if (x.data()[idx] > x.data()[best]) best = idx;
          }
        }
        const Index o = (ch * h + y) * w + xo;
        out.data()[o] = x.data()[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> maxpool2x2(const Tensor<Scalar>& x) {
  return maxpool_impl(x, nullptr);
}

template <typename Scalar>
Var<Scalar> maxpool2x2(const Var<Scalar>& x) {
  std::vector<Index> argmax;
  auto out = maxpool_impl(x.value(), grad_enabled() && x.requires_grad() ? &argmax : nullptr);
  return record<Scalar>(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& n) {
    auto& g = n.parent(0).ensure_grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) g.data()[argmax[o]] += n.grad.data()[o];
  });
}

template <typename Scalar>
Tensor<Scalar> avgpool2x2(const Tensor<Scalar>& x) {
  require_chw(x, "avgpool2x2");
  require(x.height() >= 2 && x.width() >= 2, ErrorCategory::shape,
          "avgpool2x2 needs H >= 2 and W >= 2");
  const Index c = x.channels(), h = x.height() / 2, w = x.width() / 2;
  auto out = Tensor<Scalar>::chw(c, h, w);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index xo = 0; xo < w; ++xo)
        out(ch, y, xo) = Scalar(0.25) * (x(ch, 2 * y, 2 * xo) + x(ch, 2 * y, 2 * xo + 1) +
                                         x(ch, 2 * y + 1, 2 * xo) + x(ch, 2 * y + 1, 2 * xo + 1));
  return out;
}

template <typename Scalar>
Var<Scalar> avgpool2x2(const Var<Scalar>& x) {
  return record<Scalar>(avgpool2x2(x.value()), {x}, [](Node<Scalar>& n) {
    auto& g = n.parent(0).ensure_grad();
    for (Index ch = 0; ch < n.value.channels(); ++ch)
      for (Index y = 0; y < n.value.height(); ++y)
        for (Index xo = 0; xo < n.value.width(); ++xo) {
          const Scalar d = Scalar(0.25) * n.grad(ch, y, xo);
          g(ch, 2 * y, 2 * xo) += d;
          g(ch, 2 * y, 2 * xo + 1) += d;
          g(ch, 2 * y + 1, 2 * xo) += d;
          g(ch, 2 * y + 1, 2 * xo + 1) += d;
        }
  });
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, Index out_h, Index out_w) {
  require_chw(x, "bilinear_resize");
  require(out_h >= 1 && out_w >= 1, ErrorCategory::shape, "resize target must be >= 1");
  require(x.height() >= 1 && x.width() >= 1, ErrorCategory::shape, "resize of empty tensor");
  const auto ay = resize_axis(x.height(), out_h);
  const auto ax = resize_axis(x.width(), out_w);
  auto out = Tensor<Scalar>::chw(x.channels(), out_h, out_w);
  for (Index c = 0; c < x.channels(); ++c) {
    for (Index y = 0; y < out_h; ++y) {
      const Scalar fy = static_cast<Scalar>(ay.frac[y]);
      for (Index xo = 0; xo < out_w; ++xo) {
        const Scalar fx = static_cast<Scalar>(ax.frac[xo]);
        const Scalar top = (1 - fx) * x(c, ay.lo[y], ax.lo[xo]) + fx * x(c, ay.lo[y], ax.hi[xo]);
        const Scalar bot = (1 - fx) * x(c, ay.hi[y], ax.lo[xo]) + fx * x(c, ay.hi[y], ax.hi[xo]);
        out(c, y, xo) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

template <typename Scalar>
Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w) {
  return record<Scalar>(bilinear_resize(x.value(), out_h, out_w), {x}, [](Node<Scalar>& n) {
    auto& g = n.parent(0).ensure_grad();
    const auto ay = resize_axis(g.height(), n.value.height());
    const auto ax = resize_axis(g.width(), n.value.width());
    for (Index c = 0; c < n.value.channels(); ++c) {
      for (Index y = 0; y < n.value.height(); ++y) {
        const Scalar fy = static_cast<Scalar>(ay.frac[y]);
        for (Index xo = 0; xo < n.value.width(); ++xo) {
          const Scalar fx = static_cast<Scalar>(ax.frac[xo]);
          const Scalar d = n.grad(c, y, xo);
          g(c, ay.lo[y], ax.lo[xo]) += (1 - fy) * (1 - fx) * d;
          g(c, ay.lo[y], ax.hi[xo]) += (1 - fy) * fx * d;
          g(c, ay.hi[y], ax.lo[xo]) += fy * (1 - fx) * d;
          g(c, ay.hi[y], ax.hi[xo]) += fy * fx * d;
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  require(!parts.empty(), ErrorCategory::shape, "concat of nothing");
  Index channels = 0;
  for (const auto& p : parts) {
    require_chw(p.value(), "concat_channels");
    require(p.value().height() == parts[0].value().height() &&
                p.value().width() == parts[0].value().width(),
            ErrorCategory::shape, "concat_channels needs equal spatial sizes");
    channels += p.value().channels();
  }
  auto out = Tensor<Scalar>::chw(channels, parts[0].value().height(), parts[0].value().width());
  Index offset = 0;
  for (const auto& p : parts) {
    out.array().segment(offset, p.value().size()) = p.value().array();
    offset += p.value().size();
  }
  return record<Scalar>(std::move(out), parts, [](Node<Scalar>& n) {
    Index off = 0;
    for (auto& parent : n.parents) {
      const Index len = parent->value.size();
      if (parent->requires_grad) parent->ensure_grad().array() += n.grad.array().segment(off, len);
      off += len;
    }
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.value().same_shape(b.value()), ErrorCategory::shape,
          "add: shape mismatch " + shape_string(a.value().shape()) + " vs " +
              shape_string(b.value().shape()));
  Tensor<Scalar> out(a.value().shape());
  out.array() = a.value().array() + b.value().array();
  return record<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->ensure_grad().array() += n.grad.array();
  });
}

namespace {

template <typename Scalar>
struct BatchStats {
  std::vector<Scalar> mean, inv_std;
};

template <typename Scalar>
Tensor<Scalar> batchnorm_impl(const Tensor<Scalar>& x, BatchNormState<Scalar>& s,
                              BatchStats<Scalar>& stats) {
  require_chw(x, "batchnorm");
  const Index c = x.channels();
  require(s.gamma.value().size() == c, ErrorCategory::shape,
          "batchnorm channel mismatch: state has " + std::to_string(s.gamma.value().size()) +
              ", input " + shape_string(x.shape()));
  const Index n = x.plane_size();
  stats.mean.resize(c);
  stats.inv_std.resize(c);
  if (s.mode == BatchNormMode::train) {
    require(n >= 2, ErrorCategory::shape, "batchnorm train mode needs >= 2 samples per channel");
    for (Index ch = 0; ch < c; ++ch) {
      const auto plane = x.array().segment(ch * n, n);
      const Scalar mean = plane.mean();
      const Scalar var = (plane - mean).square().mean();
      stats.mean[ch] = mean;
      stats.inv_std[ch] = Scalar(1) / std::sqrt(var + s.eps);
      s.running_mean.data()[ch] = (1 - s.momentum) * s.running_mean.data()[ch] + s.momentum * mean;
      s.running_var.data()[ch] = (1 - s.momentum) * s.running_var.data()[ch] +
                                 s.momentum * var * static_cast<Scalar>(n) / static_cast<Scalar>(n - 1);
    }
  } else {
    for (Index ch = 0; ch < c; ++ch) {
      stats.mean[ch] = s.running_mean.data()[ch];
      stats.inv_std[ch] = Scalar(1) / std::sqrt(s.running_var.data()[ch] + s.eps);
    }
  }
  Tensor<Scalar> out(x.shape());
  for (Index ch = 0; ch < c; ++ch) {
    const Scalar scale = s.gamma.value().data()[ch] * stats.inv_std[ch];
    const Scalar shift = s.beta.value().data()[ch] - stats.mean[ch] * scale;
    out.array().segment(ch * n, n) = x.array().segment(ch * n, n) * scale + shift;
  }
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& x, BatchNormState<Scalar>& state) {
  BatchStats<Scalar> stats;
  return batchnorm_impl(x, state, stats);
}

template <typename Scalar>
Var<Scalar> batchnorm(const Var<Scalar>& x, BatchNormState<Scalar>& state) {
  BatchStats<Scalar> stats;
  auto out = batchnorm_impl(x.value(), state, stats);
  const bool train = state.mode == BatchNormMode::train;
  return record<Scalar>(
      std::move(out), {x, state.gamma.var(), state.beta.var()},
      [stats = std::move(stats), train](Node<Scalar>& node) {
        auto& px = node.parent(0);
        auto& pg = node.parent(1);
        auto& pb = node.parent(2);
        const Index c = px.value.channels();
        const Index n = px.value.plane_size();
        for (Index ch = 0; ch < c; ++ch) {
          const auto dy = node.grad.array().segment(ch * n, n);
          const auto xhat = (px.value.array().segment(ch * n, n) - stats.mean[ch]) * stats.inv_std[ch];
          const Scalar sum_dy = dy.sum();
          const Scalar sum_dy_xhat = (dy * xhat).sum();
          if (pg.requires_grad) pg.ensure_grad().data()[ch] += sum_dy_xhat;
          if (pb.requires_grad) pb.ensure_grad().data()[ch] += sum_dy;
          if (!px.requires_grad) continue;
          const Scalar gamma = pg.value.data()[ch];
          auto dx = px.ensure_grad().array().segment(ch * n, n);
          if (train) {
            const Scalar k = gamma * stats.inv_std[ch] / static_cast<Scalar>(n);
            dx += k * (static_cast<Scalar>(n) * dy - sum_dy - xhat * sum_dy_xhat);
          } else {
            dx += gamma * stats.inv_std[ch] * dy;
          }
        }
      });
}

template <typename Scalar>
MarginResult<Scalar> margin_loss(std::span<const Scalar> scores, int target) {
  const auto c = static_cast<int>(scores.size());
  require(target >= 0 && target < c, ErrorCategory::invalid_input, "margin target out of range");
  MarginResult<Scalar> r{Scalar(0), std::vector<Scalar>(scores.size(), Scalar(0))};
  for (int k = 0; k < c; ++k) {
    if (k == target) continue;
    const Scalar m = Scalar(1) - scores[target] + scores[k];
    if (m > Scalar(0)) {
      r.loss += m;
      r.grad[k] += Scalar(1);
      r.grad[target] -= Scalar(1);
    }
  }
  return r;
}

template <typename Scalar>
Var<Scalar> margin_loss(const Var<Scalar>& scores, std::span<const std::uint8_t> targets) {
  const auto& x = scores.value();
  require_chw(x, "margin_loss");
  const Index n = x.plane_size();
  const Index c = x.channels();
  require(static_cast<Index>(targets.size()) == n, ErrorCategory::shape,
          "margin_loss target raster does not match score size");
  Index labeled = 0;
  Scalar total = 0;
  for (Index p = 0; p < n; ++p) {
    const auto t = targets[p];
    if (t == 255) continue;
    require(t < c, ErrorCategory::invalid_input, "margin_loss target class out of range");
    ++labeled;
    const Scalar xt = x.data()[t * n + p];
    for (Index k = 0; k < c; ++k) {
      if (k == t) continue;
      const Scalar m = Scalar(1) - xt + x.data()[k * n + p];
      if (m > Scalar(0)) total += m;
    }
  }
  Tensor<Scalar> out({1});
  out.data()[0] = labeled > 0 ? total / static_cast<Scalar>(labeled) : Scalar(0);
  std::vector<std::uint8_t> t(targets.begin(), targets.end());
  return record<Scalar>(std::move(out), {scores}, [t = std::move(t), labeled](Node<Scalar>& node) {
    if (labeled == 0) return;
    auto& p = node.parent(0);
    auto& g = p.ensure_grad();
    const Index n = p.value.plane_size();
    const Index c = p.value.channels();
    const Scalar scale = node.grad.data()[0] / static_cast<Scalar>(labeled);
    for (Index px = 0; px < n; ++px) {
      const auto tc = t[px];
      if (tc == 255) continue;
      const Scalar xt = p.value.data()[tc * n + px];
      for (Index k = 0; k < c; ++k) {
        if (k == tc) continue;
        if (Scalar(1) - xt + p.value.data()[k * n + px] > Scalar(0)) {
          g.data()[k * n + px] += scale;
          g.data()[tc * n + px] -= scale;
        }
      }
    }
  });
}

template <typename Scalar>
std::vector<std::uint8_t> argmax_channels(const Tensor<Scalar>& scores) {
  require_chw(scores, "argmax_channels");
  require(scores.channels() >= 1 && scores.channels() <= 255, ErrorCategory::shape,
          "argmax needs 1..255 channels");
  const Index n = scores.plane_size();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n), 0);
  for (Index p = 0; p < n; ++p) {
    Scalar best = scores.data()[p];
    for (Index k = 1; k < scores.channels(); ++k) {
      const Scalar v = scores.data()[k * n + p];
      if (v > best) {
        best = v;
        out[p] = static_cast<std::uint8_t>(k);
      }
    }
  }
  return out;
}

#define MSLABEL_INSTANTIATE_LAYERS(S)                                                        \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Padding); \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, Padding);             \
  template Tensor<S> relu(const Tensor<S>&);                                                \
  template Var<S> relu(const Var<S>&);                                                      \
  template Tensor<S> maxpool2x2(const Tensor<S>&);                                          \
  template Var<S> maxpool2x2(const Var<S>&);                                                \
  template Tensor<S> avgpool2x2(const Tensor<S>&);                                          \
  template Var<S> avgpool2x2(const Var<S>&);                                                \
  template Tensor<S> bilinear_resize(const Tensor<S>&, Index, Index);                       \
  template Var<S> bilinear_resize(const Var<S>&, Index, Index);                             \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                              \
  template Var<S> add(const Var<S>&, const Var<S>&);                                        \
  template Tensor<S> batchnorm(const Tensor<S>&, BatchNormState<S>&);                       \
  template Var<S> batchnorm(const Var<S>&, BatchNormState<S>&);                             \
  template MarginResult<S> margin_loss(std::span<const S>, int);                            \
  template Var<S> margin_loss(const Var<S>&, std::span<const std::uint8_t>);                \
  template std::vector<std::uint8_t> argmax_channels(const Tensor<S>&);

MSLABEL_INSTANTIATE_LAYERS(float)
MSLABEL_INSTANTIATE_LAYERS(double)

}  // namespace mslabel
