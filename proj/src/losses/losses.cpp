#include "dacount/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dacount {

PixelReduction pixel_reduction_from_string(const std::string& s) {
  if (s == "sum") return PixelReduction::Sum;
  if (s == "mean") return PixelReduction::Mean;
  throw std::invalid_argument("pixel_reduction: expected 'sum' or 'mean', got '" + s + "'");
}

std::string to_string(PixelReduction r) {
  return r == PixelReduction::Sum ? "sum" : "mean";
}

void LossWeights::validate() const {
  for (double v : {lambda, beta, gamma})
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("LossWeights: weights must be finite and >= 0 (lambda=" +
                                  std::to_string(lambda) + ", beta=" + std::to_string(beta) +
                                  ", gamma=" + std::to_string(gamma) + ")");
}

void PyramidScales::validate() const {
  if (!(0.8 < m && m < 1.0 && 1.0 < n && n < 1.2))
    throw std::invalid_argument("PyramidScales: need 0.8 < m < 1.0 < n < 1.2, got m=" +
                                std::to_string(m) + ", n=" + std::to_string(n));
}

PyramidScales PyramidScales::sample(RngStream& rng) {
  PyramidScales s;
  do {
    s.m = rng.uniform(0.8, 1.0);
  } while (!(0.8 < s.m && s.m < 1.0));
  do {
    s.n = rng.uniform(1.0, 1.2);
  } while (!(1.0 < s.n && s.n < 1.2));
  return s;
}

Var loss_count(Tape& t, Var pred, Var gt) {
  if (!t.val(pred).same_shape(t.val(gt)))
    throw std::invalid_argument("loss_count: shape mismatch " + t.val(pred).shape_str() + " vs " +
                                t.val(gt).shape_str());
  return t.mse(pred, gt);
}

Var loss_feature_disc(Tape& t, Var score_src, Var score_tgt, PixelReduction red) {
  return t.add(t.domain_nll(score_src, 0, red), t.domain_nll(score_tgt, 1, red));
}

Var loss_feature_adv(Tape& t, Var score_tgt_f1, Var score_tgt_f2, PixelReduction red) {
  return t.add(t.domain_nll(score_tgt_f1, 0, red), t.domain_nll(score_tgt_f2, 0, red));
}

Var loss_map_disc(Tape& t, Var v_src, Var v_tgt) {
  return t.add(t.domain_nll(v_src, 0, PixelReduction::Mean),
               t.domain_nll(v_tgt, 1, PixelReduction::Mean));
}

Var loss_map_adv(Tape& t, Var v_tgt) {
  return t.domain_nll(v_tgt, 0, PixelReduction::Mean);
}

namespace {
void check_scales(double p, double q) {
  if (!(p > 0.0) || !(q > 0.0) || !std::isfinite(p) || !std::isfinite(q))
    throw std::invalid_argument("semantic_reshape: scales must be positive finite, got " +
                                std::to_string(p) + " -> " + std::to_string(q));
}
}  // namespace

Var semantic_reshape_to(Tape& t, Var map, double from_scale, double to_scale, int out_h,
                        int out_w) {
  check_scales(from_scale, to_scale);
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("semantic_reshape: target resolution " + std::to_string(out_h) +
                                "x" + std::to_string(out_w) + " is below 1x1");
  Var r = t.bilinear_resize(map, out_h, out_w);
  const double f = (from_scale / to_scale) * (from_scale / to_scale);
  return f == 1.0 ? r : t.scale(r, f);
}

Var semantic_reshape(Tape& t, Var map, double from_scale, double to_scale) {
  check_scales(from_scale, to_scale);
  const Tensor& x = t.val(map);
  if (x.rank() != 4) throw std::invalid_argument("semantic_reshape: expects (N,C,H,W)");
  const double ratio = to_scale / from_scale;
  const int H = x.dim(2), W = x.dim(3);
  const int oh = static_cast<int>(std::llround(H * ratio));
  const int ow = static_cast<int>(std::llround(W * ratio));
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("semantic_reshape: target resolution " + std::to_string(oh) + "x" +
                                std::to_string(ow) + " is below 1x1");
  // Rounding oh/ow perturbs the realized scale, so the mass factor comes from
  // the actual area ratio rather than the nominal one; otherwise sums drift by
  // several percent on small maps.
  Var r = t.bilinear_resize(map, oh, ow);
  const double f =
      static_cast<double>(H) * W / (static_cast<double>(oh) * ow);
  return f == 1.0 ? r : t.scale(r, f);
}

Tensor semantic_reshape(const Tensor& map, double from_scale, double to_scale) {
  Tape t;
  return t.val(semantic_reshape(t, t.constant(map), from_scale, to_scale));
}

Var loss_spr(Tape& t, Var a_full, Var a_m, Var a_n, const PyramidScales& scales) {
  // Unlike sampled scales, the loss itself admits the degenerate identity
  // boundary m = n = 1 (both terms then compare maps at the native size).
  if (!(0.8 < scales.m && scales.m <= 1.0 && 1.0 <= scales.n && scales.n < 1.2))
    throw std::invalid_argument("loss_spr: need 0.8 < m <= 1.0 <= n < 1.2, got m=" +
                                std::to_string(scales.m) + ", n=" + std::to_string(scales.n));
  const Tensor& full = t.val(a_full);
  if (full.rank() != 4) throw std::invalid_argument("loss_spr: maps must be (N,C,H,W)");
  const int N = full.dim(0), C = full.dim(1), H = full.dim(2), W = full.dim(3);
  const std::string full_shape = full.shape_str();

  auto term = [&](Var a_y, double y) {
    const Tensor& my = t.val(a_y);
    if (my.rank() != 4 || my.dim(0) != N || my.dim(1) != C)
      throw std::invalid_argument("loss_spr: pyramid map " + my.shape_str() +
                                  " incompatible with reference " + full_shape);
    const int eh = static_cast<int>(std::llround(my.dim(2) / y));
    const int ew = static_cast<int>(std::llround(my.dim(3) / y));
    if (std::abs(eh - H) > 1 || std::abs(ew - W) > 1)
      throw std::invalid_argument("loss_spr: map " + my.shape_str() + " at scale " +
                                  std::to_string(y) + " does not reshape to reference " +
                                  full_shape);
    return t.mse(a_full, semantic_reshape_to(t, a_y, y, 1.0, H, W));
  };
  return t.add(term(a_m, scales.m), term(a_n, scales.n));
}

Var loss_total(Tape& t, Var cnt, std::optional<Var> adv_feat, std::optional<Var> adv_map,
               std::optional<Var> spr, const LossWeights& w) {
  w.validate();
  Var total = cnt;
  auto accumulate = [&](double weight, const std::optional<Var>& term, const char* what) {
    if (weight == 0.0) return;
    if (!term)
      throw std::invalid_argument(std::string("loss_total: positive weight for missing ") + what +
                                  " term");
    total = t.add(total, t.scale(*term, weight));
  };
  accumulate(w.lambda, adv_feat, "feature-adversarial");
  accumulate(w.beta, adv_map, "map-adversarial");
  accumulate(w.gamma, spr, "pyramid");
  return total;
}

int spr_scaled_dim(int dim, double scale, int multiple) {
  if (dim < 1 || multiple < 1)
    throw std::invalid_argument("spr_scaled_dim: dim and multiple must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale) || scale == 1.0)
    throw std::invalid_argument("spr_scaled_dim: scale must be positive and != 1");
  const bool down = scale < 1.0;
  int c = multiple * static_cast<int>(std::llround(dim * scale / multiple));
  if (down) {
    if (c >= dim) c = dim - multiple;
    if (c < multiple) c = multiple;
    if (c >= dim)
      throw std::invalid_argument("spr_scaled_dim: no multiple of " + std::to_string(multiple) +
                                  " strictly below " + std::to_string(dim));
    while (c + multiple < dim && static_cast<double>(c) / dim <= 0.8) c += multiple;
  } else {
    if (c <= dim) c = dim + multiple;
    while (c - multiple > dim && static_cast<double>(c) / dim >= 1.2) c -= multiple;
  }
  return c;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  Tape t;
  return t.val(t.bilinear_resize(t.constant(x), out_h, out_w));
}

Tensor softmax_channel(const Tensor& scores, int channel) {
  if (channel != 0 && channel != 1)
    throw std::invalid_argument("softmax_channel: channel must be 0 or 1");
  if (scores.rank() == 2 && scores.dim(1) == 2) {
    Tensor out({scores.dim(0)});
    for (int i = 0; i < scores.dim(0); ++i) {
      const double lc = scores.at(i, channel), lo = scores.at(i, 1 - channel);
      out[i] = 1.0 / (1.0 + std::exp(lo - lc));
    }
    return out;
  }
  if (scores.rank() == 4 && scores.dim(1) == 2) {
    const int N = scores.dim(0), H = scores.dim(2), W = scores.dim(3);
    Tensor out({N, 1, H, W});
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double lc = scores.at(n, channel, h, w), lo = scores.at(n, 1 - channel, h, w);
          out.at(n, 0, h, w) = 1.0 / (1.0 + std::exp(lo - lc));
        }
    return out;
  }
  throw std::invalid_argument("softmax_channel: expects (N,2) or (N,2,H,W), got " +
                              scores.shape_str());
}

}  // namespace dacount
