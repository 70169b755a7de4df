#pragma once

#include <optional>
#include <string>

#include "dacount/autograd.hpp"
#include "dacount/rng.hpp"

namespace dacount {

// Channel convention for the two-channel domain classifiers: channel 0 is
// "source", channel 1 is "target". All classifier losses are negative
// log-softmax of the appropriate channel, summed or averaged over spatial
// positions per this flag, and always averaged over the batch.
using PixelReduction = Tape::Reduction;
PixelReduction pixel_reduction_from_string(const std::string& s);
std::string to_string(PixelReduction r);

struct LossWeights {
  double lambda = 1e-3;  // feature-adversarial weight
  double beta = 1e-3;    // map-adversarial weight
  double gamma = 1e-1;   // scale-pyramid consistency weight
  void validate() const; // all finite and >= 0
};

// Scale pair for the pyramid consistency loss: one down-scale m and one
// up-scale n, drawn uniformly per step.
struct PyramidScales {
  double m = 0.9;  // in (0.8, 1.0)
  double n = 1.1;  // in (1.0, 1.2)
  void validate() const;
  static PyramidScales sample(RngStream& rng);
};

// Mean squared error between a predicted and a reference density map.
Var loss_count(Tape& t, Var pred, Var gt);

// Discriminator objective on per-pixel score maps: classify source pixels
// as channel 0 and target pixels as channel 1.
Var loss_feature_disc(Tape& t, Var score_src, Var score_tgt, PixelReduction red);

// Inverted-label objective for the generator: make target features score
// as source on both feature taps.
Var loss_feature_adv(Tape& t, Var score_tgt_f1, Var score_tgt_f2, PixelReduction red);

// Map-level discriminator objective on (N,2) score vectors, and its
// inverted counterpart.
Var loss_map_disc(Tape& t, Var v_src, Var v_tgt);
Var loss_map_adv(Tape& t, Var v_tgt);

// Mass-conserving resize of a density map between resolutions expressed as
// scales relative to a common reference: bilinear resize followed by the
// (from/to)^2 area factor. The _to variant targets explicit output dims;
// the plain variant rounds dims by the scale ratio.
Var semantic_reshape_to(Tape& t, Var map, double from_scale, double to_scale, int out_h, int out_w);
Var semantic_reshape(Tape& t, Var map, double from_scale, double to_scale);
Tensor semantic_reshape(const Tensor& map, double from_scale, double to_scale);

// Pyramid consistency: predictions on m-scaled and n-scaled copies of an
// image, reshaped back to the 1.0x grid, should match the 1.0x prediction.
Var loss_spr(Tape& t, Var a_full, Var a_m, Var a_n, const PyramidScales& scales);

// Weighted sum cnt + lambda*adv_feat + beta*adv_map + gamma*spr. Terms with
// zero weight may be omitted and are then skipped entirely; a positive
// weight with a missing term is an error.
Var loss_total(Tape& t, Var cnt, std::optional<Var> adv_feat, std::optional<Var> adv_map,
               std::optional<Var> spr, const LossWeights& w);

// Picks the nearest multiple of `multiple` to dim*scale that stays on
// scale's side of dim (strictly smaller for scale<1, larger for scale>1),
// preferring candidates whose effective ratio stays inside (0.8, 1.2).
int spr_scaled_dim(int dim, double scale, int multiple);

// Plain-tensor helpers shared by evaluation and plotting.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
// Per-position softmax probability of `channel`; (N,2,H,W) -> (N,1,H,W),
// (N,2) -> (N).
Tensor softmax_channel(const Tensor& scores, int channel);

}  // namespace dacount
