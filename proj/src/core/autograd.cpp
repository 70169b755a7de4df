#include "dacount/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace dacount {

namespace {

using Mat = Eigen::MatrixXd;  // column-major scratch
using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CRowMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int conv_out_dim(int in, int k, int stride, int pad, int dil) {
  int eff = dil * (k - 1) + 1;
  int num = in + 2 * pad - eff;
  if (num < 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return num / stride + 1;
}

struct ConvGeom {
  int C, H, W, Kh, Kw, sh, sw, ph, pw, dh, dw, Ho, Wo;
  int rows() const { return C * Kh * Kw; }
  int cols() const { return Ho * Wo; }
};

// col(r, l) = x[c, oy*sh - ph + ki*dh, ox*sw - pw + kj*dw], zero outside
void im2col(const double* x, const ConvGeom& g, Mat& col) {
  col.setZero(g.rows(), g.cols());
  for (int c = 0; c < g.C; ++c) {
    const double* xc = x + static_cast<int64_t>(c) * g.H * g.W;
    for (int ki = 0; ki < g.Kh; ++ki) {
      for (int kj = 0; kj < g.Kw; ++kj) {
        int r = (c * g.Kh + ki) * g.Kw + kj;
        for (int oy = 0; oy < g.Ho; ++oy) {
          int iy = oy * g.sh - g.ph + ki * g.dh;
          if (iy < 0 || iy >= g.H) continue;
          for (int ox = 0; ox < g.Wo; ++ox) {
            int ix = ox * g.sw - g.pw + kj * g.dw;
            if (ix < 0 || ix >= g.W) continue;
            col(r, oy * g.Wo + ox) = xc[iy * g.W + ix];
          }
        }
      }
    }
  }
}

// adjoint of im2col: scatter-add columns back into the image
void col2im(const Mat& col, const ConvGeom& g, double* dx) {
  for (int c = 0; c < g.C; ++c) {
    double* xc = dx + static_cast<int64_t>(c) * g.H * g.W;
    for (int ki = 0; ki < g.Kh; ++ki) {
      for (int kj = 0; kj < g.Kw; ++kj) {
        int r = (c * g.Kh + ki) * g.Kw + kj;
        for (int oy = 0; oy < g.Ho; ++oy) {
          int iy = oy * g.sh - g.ph + ki * g.dh;
          if (iy < 0 || iy >= g.H) continue;
          for (int ox = 0; ox < g.Wo; ++ox) {
            int ix = ox * g.sw - g.pw + kj * g.dw;
            if (ix < 0 || ix >= g.W) continue;
            xc[iy * g.W + ix] += col(r, oy * g.Wo + ox);
          }
        }
      }
    }
  }
}

struct ResizeWeights {
  // per output index: two source indices and the blend factor
  std::vector<int> i0, i1;
  std::vector<double> f;
};

ResizeWeights resize_axis(int in, int out) {
  ResizeWeights w;
  w.i0.resize(out);
  w.i1.resize(out);
  w.f.resize(out);
  double scale = static_cast<double>(in) / out;
  for (int j = 0; j < out; ++j) {
    double s = (j + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    int i1 = std::min(i0 + 1, in - 1);
    double f = s - i0;
    if (f < 0.0) f = 0.0;
    if (f > 1.0) f = 1.0;
    w.i0[j] = i0;
    w.i1[j] = i1;
    w.f[j] = f;
  }
  return w;
}

constexpr double kLogProbFloor = -27.631021115928547;  // log(1e-12)

}  // namespace

Tensor& Tape::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad = Tensor::zeros(n.val.shape());
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.empty())
    throw std::runtime_error("Tape::grad: no gradient recorded for this node");
  return n.grad;
}

Var Tape::push(Tensor val, bool needs_grad) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p, bool frozen) {
  Var v = push(p.value, !frozen);
  if (!frozen) nodes_.back().param = &p;
  return v;
}

Var Tape::constant(Tensor x) { return push(std::move(x), false); }

Var Tape::input(Tensor x, bool needs_grad) { return push(std::move(x), needs_grad); }

Var Tape::conv2d(Var xv, Var wv, Var bv, int sh, int sw, int ph, int pw, int dh, int dw) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);
  const Tensor& b = val(bv);
  if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: expects 4-D x and w");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
  if (w.dim(1) != C)
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(w.dim(1)) +
                                " input channels, got " + std::to_string(C));
  if (b.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");
  ConvGeom g{C,  H,  W,  Kh, Kw, sh, sw,
             ph, pw, dh, dw, conv_out_dim(H, Kh, sh, ph, dh), conv_out_dim(W, Kw, sw, pw, dw)};

  Tensor out({N, Cout, g.Ho, g.Wo});
  auto cols = std::make_shared<std::vector<Mat>>(static_cast<size_t>(N));
  CRowMap wm(w.data(), Cout, g.rows());
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + static_cast<int64_t>(n) * C * H * W, g, (*cols)[n]);
    RowMap om(out.data() + static_cast<int64_t>(n) * Cout * g.cols(), Cout, g.cols());
    om.noalias() = wm * (*cols)[n];
    for (int co = 0; co < Cout; ++co) om.row(co).array() += b[co];
  }

  bool ng = needs_grad(xv) || needs_grad(wv) || needs_grad(bv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, wv, bv, ov, g, N, Cout, cols]() {
    const Tensor& go = grad(ov);
    CRowMap wm2(val(wv).data(), Cout, g.rows());
    bool need_x = needs_grad(xv), need_w = needs_grad(wv), need_b = needs_grad(bv);
    for (int n = 0; n < N; ++n) {
      CRowMap gom(go.data() + static_cast<int64_t>(n) * Cout * g.cols(), Cout, g.cols());
      if (need_w) {
        RowMap gwm(grad_buf(wv.id).data(), Cout, g.rows());
        gwm.noalias() += gom * (*cols)[n].transpose();
      }
      if (need_b) {
        // fixed-order scalar sum: Eigen reductions vectorize differently
        // depending on heap alignment, breaking bitwise reproducibility
        Tensor& gb = grad_buf(bv.id);
        const double* gp = go.data() + static_cast<int64_t>(n) * Cout * g.cols();
        for (int co = 0; co < Cout; ++co) {
          double s = 0.0;
          const double* gr = gp + static_cast<int64_t>(co) * g.cols();
          for (int i = 0; i < g.cols(); ++i) s += gr[i];
          gb[co] += s;
        }
      }
      if (need_x) {
        Mat dcol = wm2.transpose() * gom;
        col2im(dcol, g, grad_buf(xv.id).data() + static_cast<int64_t>(n) * g.C * g.H * g.W);
      }
    }
  };
  return ov;
}

Var Tape::conv_transpose2d(Var xv, Var wv, Var bv, int stride, int pad, int out_pad) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);  // (Cin, Cout, Kh, Kw)
  const Tensor& b = val(bv);
  if (x.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv_transpose2d: expects 4-D x and w");
  int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
  if (w.dim(0) != Cin) throw std::invalid_argument("conv_transpose2d: channel mismatch");
  if (b.numel() != Cout) throw std::invalid_argument("conv_transpose2d: bias size mismatch");
  int Ho = (H - 1) * stride - 2 * pad + Kh + out_pad;
  int Wo = (W - 1) * stride - 2 * pad + Kw + out_pad;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv_transpose2d: output collapses");
  // geometry of the *forward* conv that this op is the adjoint of
  ConvGeom g{Cout, Ho, Wo, Kh, Kw, stride, stride, pad, pad, 1, 1, H, W};

  Tensor out({N, Cout, Ho, Wo});
  int K = Cout * Kh * Kw;
  CRowMap wm(w.data(), Cin, K);
  for (int n = 0; n < N; ++n) {
    CRowMap xm(x.data() + static_cast<int64_t>(n) * Cin * H * W, Cin, H * W);
    Mat col = wm.transpose() * xm;  // (K, H*W)
    col2im(col, g, out.data() + static_cast<int64_t>(n) * Cout * Ho * Wo);
    for (int co = 0; co < Cout; ++co) {
      double* oc = out.data() + (static_cast<int64_t>(n) * Cout + co) * Ho * Wo;
      for (int i = 0; i < Ho * Wo; ++i) oc[i] += b[co];
    }
  }

  bool ng = needs_grad(xv) || needs_grad(wv) || needs_grad(bv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, wv, bv, ov, g, N, Cin, Cout, K, Ho, Wo, H, W]() {
    const Tensor& go = grad(ov);
    CRowMap wm2(val(wv).data(), Cin, K);
    bool need_x = needs_grad(xv), need_w = needs_grad(wv), need_b = needs_grad(bv);
    Mat dcol;
    for (int n = 0; n < N; ++n) {
      const double* gp = go.data() + static_cast<int64_t>(n) * Cout * Ho * Wo;
      if (need_x || need_w) {
        dcol.resize(K, H * W);
        im2col(gp, g, dcol);
      }
      if (need_x) {
        RowMap gxm(grad_buf(xv.id).data() + static_cast<int64_t>(n) * Cin * H * W, Cin, H * W);
        gxm.noalias() += wm2 * dcol;
      }
      if (need_w) {
        CRowMap xm(val(xv).data() + static_cast<int64_t>(n) * Cin * H * W, Cin, H * W);
        RowMap gwm(grad_buf(wv.id).data(), Cin, K);
        gwm.noalias() += xm * dcol.transpose();
      }
      if (need_b) {
        Tensor& gb = grad_buf(bv.id);
        for (int co = 0; co < Cout; ++co) {
          const double* gc = gp + static_cast<int64_t>(co) * Ho * Wo;
          double s = 0.0;
          for (int i = 0; i < Ho * Wo; ++i) s += gc[i];
          gb[co] += s;
        }
      }
    }
  };
  return ov;
}

Var Tape::linear(Var xv, Var wv, Var bv) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);
  const Tensor& b = val(bv);
  if (x.rank() != 2 || w.rank() != 2) throw std::invalid_argument("linear: expects 2-D x and w");
  int N = x.dim(0), F = x.dim(1), O = w.dim(0);
  if (w.dim(1) != F || b.numel() != O) throw std::invalid_argument("linear: shape mismatch");
  Tensor out({N, O});
  CRowMap xm(x.data(), N, F), wm(w.data(), O, F);
  RowMap om(out.data(), N, O);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) out.at(n, o) += b[o];

  bool ng = needs_grad(xv) || needs_grad(wv) || needs_grad(bv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, wv, bv, ov, N, F, O]() {
    CRowMap gom(grad(ov).data(), N, O);
    if (needs_grad(xv)) {
      CRowMap wm2(val(wv).data(), O, F);
      RowMap gxm(grad_buf(xv.id).data(), N, F);
      gxm.noalias() += gom * wm2;
    }
    if (needs_grad(wv)) {
      CRowMap xm2(val(xv).data(), N, F);
      RowMap gwm(grad_buf(wv.id).data(), O, F);
      gwm.noalias() += gom.transpose() * xm2;
    }
    if (needs_grad(bv)) {
      // fixed-order scalar sum, see conv2d bias gradient
      Tensor& gb = grad_buf(bv.id);
      const Tensor& go2 = grad(ov);
      for (int o = 0; o < O; ++o) {
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += go2[static_cast<int64_t>(n) * O + o];
        gb[o] += s;
      }
    }
  };
  return ov;
}

Var Tape::relu(Var xv) { return leaky_relu(xv, 0.0); }

Var Tape::leaky_relu(Var xv, double slope) {
  const Tensor& x = val(xv);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  bool ng = needs_grad(xv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, ov, slope]() {
    const Tensor& go = grad(ov);
    const Tensor& x2 = val(xv);
    Tensor& gx = grad_buf(xv.id);
    for (int64_t i = 0; i < x2.numel(); ++i) gx[i] += (x2[i] > 0.0 ? 1.0 : slope) * go[i];
  };
  return ov;
}

Var Tape::prelu(Var xv, Var av) {
  const Tensor& x = val(xv);
  const Tensor& a = val(av);
  if (x.rank() != 4 || a.numel() != x.dim(1))
    throw std::invalid_argument("prelu: alpha must have one entry per channel");
  int N = x.dim(0), C = x.dim(1);
  int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* xp = x.data() + (static_cast<int64_t>(n) * C + c) * hw;
      double* op = out.data() + (static_cast<int64_t>(n) * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = xp[i] > 0.0 ? xp[i] : a[c] * xp[i];
    }
  bool ng = needs_grad(xv) || needs_grad(av);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, av, ov, N, C, hw]() {
    const Tensor& go = grad(ov);
    const Tensor& x2 = val(xv);
    const Tensor& a2 = val(av);
    bool need_x = needs_grad(xv), need_a = needs_grad(av);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        int64_t base = (static_cast<int64_t>(n) * C + c) * hw;
        const double* xp = x2.data() + base;
        const double* gp = go.data() + base;
        if (need_x) {
          double* gx = grad_buf(xv.id).data() + base;
          for (int64_t i = 0; i < hw; ++i) gx[i] += (xp[i] > 0.0 ? 1.0 : a2[c]) * gp[i];
        }
        if (need_a) {
          double s = 0.0;
          for (int64_t i = 0; i < hw; ++i)
            if (xp[i] <= 0.0) s += xp[i] * gp[i];
          grad_buf(av.id)[c] += s;
        }
      }
  };
  return ov;
}

Var Tape::maxpool2(Var xv) {
  const Tensor& x = val(xv);
  if (x.rank() != 4) throw std::invalid_argument("maxpool2: expects 4-D input");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("maxpool2: dims must be even");
  int Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));
  int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          double best = -1e300;
          int besti = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              double v = x.at(n, c, 2 * oy + dy, 2 * ox + dx);
              if (v > best) {
                best = v;
                besti = (2 * oy + dy) * W + (2 * ox + dx);
              }
            }
          out[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = besti;
        }
  bool ng = needs_grad(xv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, ov, argmax, N, C, H, W, Ho, Wo]() {
    const Tensor& go = grad(ov);
    Tensor& gx = grad_buf(xv.id);
    int64_t oi = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* gxc = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
        for (int i = 0; i < Ho * Wo; ++i, ++oi) gxc[(*argmax)[static_cast<size_t>(oi)]] += go[oi];
      }
  };
  return ov;
}

Var Tape::avgpool2(Var xv) {
  const Tensor& x = val(xv);
  if (x.rank() != 4) throw std::invalid_argument("avgpool2: expects 4-D input");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("avgpool2: dims must be even");
  int Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          out.at(n, c, oy, ox) = 0.25 * (x.at(n, c, 2 * oy, 2 * ox) + x.at(n, c, 2 * oy, 2 * ox + 1) +
                                         x.at(n, c, 2 * oy + 1, 2 * ox) +
                                         x.at(n, c, 2 * oy + 1, 2 * ox + 1));
  bool ng = needs_grad(xv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, ov, N, C, Ho, Wo]() {
    const Tensor& go = grad(ov);
    Tensor& gx = grad_buf(xv.id);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            double g = 0.25 * go.at(n, c, oy, ox);
            gx.at(n, c, 2 * oy, 2 * ox) += g;
            gx.at(n, c, 2 * oy, 2 * ox + 1) += g;
            gx.at(n, c, 2 * oy + 1, 2 * ox) += g;
            gx.at(n, c, 2 * oy + 1, 2 * ox + 1) += g;
          }
  };
  return ov;
}

Var Tape::global_avg_pool(Var xv) {
  const Tensor& x = val(xv);
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expects 4-D input");
  int N = x.dim(0), C = x.dim(1);
  int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* xp = x.data() + (static_cast<int64_t>(n) * C + c) * hw;
      double s = 0.0;
      for (int64_t i = 0; i < hw; ++i) s += xp[i];
      out.at(n, c) = s / static_cast<double>(hw);
    }
  bool ng = needs_grad(xv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, ov, N, C, hw]() {
    const Tensor& go = grad(ov);
    Tensor& gx = grad_buf(xv.id);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double g = go.at(n, c) / static_cast<double>(hw);
        double* gp = gx.data() + (static_cast<int64_t>(n) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) gp[i] += g;
      }
  };
  return ov;
}

Var Tape::bilinear_resize(Var xv, int out_h, int out_w) {
  const Tensor& x = val(xv);
  if (x.rank() != 4) throw std::invalid_argument("bilinear_resize: expects 4-D input");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: target below 1x1");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto wy = std::make_shared<ResizeWeights>(resize_axis(H, out_h));
  auto wx = std::make_shared<ResizeWeights>(resize_axis(W, out_w));
  Tensor out({N, C, out_h, out_w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* xp = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      double* op = out.data() + (static_cast<int64_t>(n) * C + c) * out_h * out_w;
      for (int j = 0; j < out_h; ++j) {
        int y0 = wy->i0[j], y1 = wy->i1[j];
        double fy = wy->f[j];
        for (int i = 0; i < out_w; ++i) {
          int x0 = wx->i0[i], x1 = wx->i1[i];
          double fx = wx->f[i];
          op[j * out_w + i] = (1 - fy) * ((1 - fx) * xp[y0 * W + x0] + fx * xp[y0 * W + x1]) +
                              fy * ((1 - fx) * xp[y1 * W + x0] + fx * xp[y1 * W + x1]);
        }
      }
    }
  bool ng = needs_grad(xv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, xv, ov, wy, wx, N, C, H, W, out_h, out_w]() {
    const Tensor& go = grad(ov);
    Tensor& gx = grad_buf(xv.id);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* gp = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
        const double* op = go.data() + (static_cast<int64_t>(n) * C + c) * out_h * out_w;
        for (int j = 0; j < out_h; ++j) {
          int y0 = wy->i0[j], y1 = wy->i1[j];
          double fy = wy->f[j];
          for (int i = 0; i < out_w; ++i) {
            int x0 = wx->i0[i], x1 = wx->i1[i];
            double fx = wx->f[i];
            double g = op[j * out_w + i];
            gp[y0 * W + x0] += (1 - fy) * (1 - fx) * g;
            gp[y0 * W + x1] += (1 - fy) * fx * g;
            gp[y1 * W + x0] += fy * (1 - fx) * g;
            gp[y1 * W + x1] += fy * fx * g;
          }
        }
      }
  };
  return ov;
}

Var Tape::add(Var av, Var bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  bool ng = needs_grad(av) || needs_grad(bv);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, av, bv, ov]() {
    const Tensor& go = grad(ov);
    if (needs_grad(av)) {
      Tensor& ga = grad_buf(av.id);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (needs_grad(bv)) {
      Tensor& gb = grad_buf(bv.id);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i];
    }
  };
  return ov;
}

Var Tape::scale(Var av, double s) {
  const Tensor& a = val(av);
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = s * a[i];
  bool ng = needs_grad(av);
  Var ov = push(std::move(out), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, av, ov, s]() {
    const Tensor& go = grad(ov);
    Tensor& ga = grad_buf(av.id);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += s * go[i];
  };
  return ov;
}

Var Tape::mse(Var av, Var bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  if (!a.same_shape(b))
    throw std::invalid_argument("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  double inv = 1.0 / static_cast<double>(a.numel());
  bool ng = needs_grad(av) || needs_grad(bv);
  Var ov = push(Tensor::scalar(s * inv), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, av, bv, ov, inv]() {
    double g = grad(ov)[0];
    const Tensor& a2 = val(av);
    const Tensor& b2 = val(bv);
    if (needs_grad(av)) {
      Tensor& ga = grad_buf(av.id);
      for (int64_t i = 0; i < a2.numel(); ++i) ga[i] += 2.0 * inv * (a2[i] - b2[i]) * g;
    }
    if (needs_grad(bv)) {
      Tensor& gb = grad_buf(bv.id);
      for (int64_t i = 0; i < a2.numel(); ++i) gb[i] -= 2.0 * inv * (a2[i] - b2[i]) * g;
    }
  };
  return ov;
}

Var Tape::domain_nll(Var sv, int channel, Reduction red) {
  const Tensor& s = val(sv);
  int N, HW;
  if (s.rank() == 4) {
    if (s.dim(1) != 2) throw std::invalid_argument("domain_nll: expects 2 channels");
    N = s.dim(0);
    HW = s.dim(2) * s.dim(3);
  } else if (s.rank() == 2) {
    if (s.dim(1) != 2) throw std::invalid_argument("domain_nll: expects 2 logits");
    N = s.dim(0);
    HW = 1;
  } else {
    throw std::invalid_argument("domain_nll: expects (N,2,H,W) or (N,2)");
  }
  if (channel != 0 && channel != 1) throw std::invalid_argument("domain_nll: channel must be 0/1");

  // layout: 4-D -> per sample the two channel planes are contiguous;
  // 2-D -> interleaved pairs. Normalize access via strides.
  int64_t ch_stride = (s.rank() == 4) ? HW : 1;
  int64_t px_stride = (s.rank() == 4) ? 1 : 2;
  int64_t n_stride = (s.rank() == 4) ? static_cast<int64_t>(2) * HW : 2;

  double per_pixel = (red == Reduction::Mean) ? 1.0 / HW : 1.0;
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* base = s.data() + n * n_stride;
    double acc = 0.0;
    for (int i = 0; i < HW; ++i) {
      double l0 = base[i * px_stride];
      double l1 = base[i * px_stride + ch_stride];
      double m = std::max(l0, l1);
      double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
      double lp = (channel == 0 ? l0 : l1) - lse;
      if (lp < kLogProbFloor) lp = kLogProbFloor;
      acc -= lp;
    }
    total += acc * per_pixel;
  }
  total /= N;

  bool ng = needs_grad(sv);
  Var ov = push(Tensor::scalar(total), ng);
  if (!ng) return ov;
  nodes_.back().back = [this, sv, ov, channel, N, HW, ch_stride, px_stride, n_stride, per_pixel]() {
    double g = grad(ov)[0] / N;
    const Tensor& s2 = val(sv);
    Tensor& gs = grad_buf(sv.id);
    for (int n = 0; n < N; ++n) {
      const double* base = s2.data() + n * n_stride;
      double* gbase = gs.data() + n * n_stride;
      for (int i = 0; i < HW; ++i) {
        double l0 = base[i * px_stride];
        double l1 = base[i * px_stride + ch_stride];
        double m = std::max(l0, l1);
        double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        double z = e0 + e1;
        double p0 = e0 / z, p1 = e1 / z;
        double lp = std::log(channel == 0 ? p0 : p1);
        if (lp < kLogProbFloor) continue;  // clamped region, zero grad
        double scale = g * per_pixel;
        gbase[i * px_stride] += (p0 - (channel == 0 ? 1.0 : 0.0)) * scale;
        gbase[i * px_stride + ch_stride] += (p1 - (channel == 1 ? 1.0 : 0.0)) * scale;
      }
    }
  };
  return ov;
}

void Tape::backward(Var loss) {
  Node& ln = node(loss.id);
  if (ln.val.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!ln.needs_grad) return;
  grad_buf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.back) n.back();
    if (n.param) {
      Tensor& pg = n.param->grad;
      for (int64_t j = 0; j < pg.numel(); ++j) pg[j] += n.grad[j];
    }
  }
}

}  // namespace dacount
