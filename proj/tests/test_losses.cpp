#include <doctest.h>

#include <cmath>

#include "dacount/counter.hpp"
#include "dacount/discriminators.hpp"
#include "dacount/losses.hpp"
#include "support/gradcheck.hpp"
#include "support/oracle_stream.hpp"
#include "support/oracles.hpp"

using namespace dacount;

namespace {

constexpr double kLn2 = 0.6931471805599453;

Tensor uniform_logits(std::vector<int> shape) { return Tensor(std::move(shape)); }

}  // namespace

TEST_CASE("counting loss: trivial and oracle cases") {
  Tape t;
  Tensor a = oracle::tensor(1001, {1, 1, 4, 4});
  CHECK(t.val(loss_count(t, t.constant(a), t.constant(a)))[0] == 0.0);

  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += 1.0;
  CHECK(t.val(loss_count(t, t.constant(b), t.constant(a)))[0] == doctest::Approx(1.0).epsilon(1e-12));

  Tensor gt = oracle::tensor(1002, {1, 1, 4, 4});
  const double v = t.val(loss_count(t, t.constant(a), t.constant(gt)))[0];
  CHECK(std::abs(v - oracle::kLossCount4x4) < 1e-9);

  CHECK_THROWS_AS(loss_count(t, t.constant(a), t.constant(Tensor({1, 1, 2, 8}))),
                  std::invalid_argument);
}

TEST_CASE("feature-discriminator loss: closed forms at uniform logits") {
  Tape t;
  const int h = 3, w = 5;
  Var src = t.constant(uniform_logits({1, 2, h, w}));
  Var tgt = t.constant(uniform_logits({1, 2, h, w}));
  const double sum_v = t.val(loss_feature_disc(t, src, tgt, PixelReduction::Sum))[0];
  CHECK(std::abs(sum_v - 2.0 * h * w * kLn2) < 1e-9);
  const double mean_v = t.val(loss_feature_disc(t, src, tgt, PixelReduction::Mean))[0];
  CHECK(std::abs(mean_v - 2.0 * kLn2) < 1e-9);

  const double adv_sum = t.val(loss_feature_adv(t, src, tgt, PixelReduction::Sum))[0];
  CHECK(std::abs(adv_sum - 2.0 * h * w * kLn2) < 1e-9);
  const double adv_mean = t.val(loss_feature_adv(t, src, tgt, PixelReduction::Mean))[0];
  CHECK(std::abs(adv_mean - 2.0 * kLn2) < 1e-9);
}

TEST_CASE("feature losses: perfect-discriminator limit") {
  Tape t;
  // Confident correct logits: p(correct) = 1 - e^-16.
  Tensor src({1, 2, 2, 2});
  Tensor tgt({1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    src[i] = 8.0;       // channel 0 (source) high on source pixels
    src[4 + i] = -8.0;
    tgt[i] = -8.0;      // channel 1 (target) high on target pixels
    tgt[4 + i] = 8.0;
  }
  const double v = t.val(loss_feature_disc(t, t.constant(src), t.constant(tgt),
                                           PixelReduction::Sum))[0];
  CHECK(v > 0.0);
  CHECK(v < 1e-5);
  // And the generator's inverted loss at "fooled" logits.
  const double a = t.val(loss_feature_adv(t, t.constant(src), t.constant(src),
                                          PixelReduction::Sum))[0];
  CHECK(a > 0.0);
  CHECK(a < 1e-5);
}

TEST_CASE("feature losses: random score maps match the scalar oracle") {
  Tape t;
  Var f1 = t.constant(oracle::tensor(2001, {1, 2, 2, 3}, 4.0, -2.0));
  Var f2 = t.constant(oracle::tensor(2002, {1, 2, 2, 3}, 4.0, -2.0));
  CHECK(std::abs(t.val(loss_feature_disc(t, f1, f2, PixelReduction::Sum))[0] -
                 oracle::kLossFeatureDisc2x3Sum) < 1e-9);
  CHECK(std::abs(t.val(loss_feature_disc(t, f1, f2, PixelReduction::Mean))[0] -
                 oracle::kLossFeatureDisc2x3Mean) < 1e-9);
  CHECK(std::abs(t.val(loss_feature_adv(t, f1, f2, PixelReduction::Sum))[0] -
                 oracle::kLossFeatureAdv2x3Sum) < 1e-9);
  CHECK(std::abs(t.val(loss_feature_adv(t, f1, f2, PixelReduction::Mean))[0] -
                 oracle::kLossFeatureAdv2x3Mean) < 1e-9);
}

TEST_CASE("map-discriminator losses: closed forms and oracle") {
  Tape t;
  Var u1 = t.constant(uniform_logits({1, 2}));
  CHECK(std::abs(t.val(loss_map_disc(t, u1, u1))[0] - 2.0 * kLn2) < 1e-9);
  CHECK(std::abs(t.val(loss_map_adv(t, u1))[0] - kLn2) < 1e-9);

  Tensor confident({1, 2}, {9.0, -9.0});  // p(source) ~ 1
  const double v = t.val(loss_map_adv(t, t.constant(confident)))[0];
  CHECK(v > 0.0);
  CHECK(v < 1e-6);

  Var vs = t.constant(oracle::tensor(2003, {4, 2}, 6.0, -3.0));
  Var vt = t.constant(oracle::tensor(2004, {4, 2}, 6.0, -3.0));
  CHECK(std::abs(t.val(loss_map_disc(t, vs, vt))[0] - oracle::kLossMapDiscB4) < 1e-9);
  CHECK(std::abs(t.val(loss_map_adv(t, vt))[0] - oracle::kLossMapAdvB4) < 1e-9);
}

TEST_CASE("stabilized log: extreme logits stay finite and floored") {
  Tape t;
  Tensor wrong({1, 2}, {-400.0, 400.0});  // p(channel 0) underflows to 0
  const double v = t.val(loss_map_adv(t, t.constant(wrong)))[0];
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("bilinear resize matches the reference implementation") {
  Tensor x = oracle::tensor(3001, {1, 1, 4, 4});
  Tensor up = resize_bilinear(x, 6, 6);
  for (int i = 0; i < 36; ++i) CHECK(std::abs(up[i] - oracle::kResize4x4To6x6[i]) < 1e-12);
  Tensor dn = resize_bilinear(x, 3, 3);
  for (int i = 0; i < 9; ++i) CHECK(std::abs(dn[i] - oracle::kResize4x4To3x3[i]) < 1e-12);
}

TEST_CASE("semantic reshape: identity, uniform conservation, round trip") {
  Tensor x = oracle::tensor(3002, {1, 1, 5, 7});
  Tensor same = semantic_reshape(x, 1.0, 1.0);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);

  Tensor u = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor up = semantic_reshape(u, 0.5, 1.0);
  CHECK(up.dim(2) == 4);
  CHECK(up.dim(3) == 4);
  for (int64_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(up.sum() == doctest::Approx(u.sum()).epsilon(1e-12));

  Tensor m = oracle::tensor(3003, {1, 1, 16, 16});
  Tensor down = semantic_reshape(m, 1.0, 0.85);
  Tensor back = semantic_reshape(down, 0.85, 1.0);
  CHECK(std::abs(back.sum() - m.sum()) <= 0.01 * m.sum());

  CHECK_THROWS_AS(semantic_reshape(Tensor({1, 1, 4, 4}), 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("semantic reshape conserves mass across the scale band") {
  uint64_t seed = 9000;
  for (int rep = 0; rep < 100; ++rep) {
    const int h = 16 + (rep % 17), w = 16 + (rep % 11);
    Tensor m = oracle::tensor(seed++, {1, 1, h, w});
    const double scale = 0.8 + 0.4 * (rep / 99.0);
    if (std::abs(scale - 1.0) < 1e-3) continue;
    Tensor r = semantic_reshape(m, 1.0, scale);
    CHECK(std::abs(r.sum() - m.sum()) <= 0.01 * m.sum());
  }
}

TEST_CASE("pyramid loss: identity scales, fixpoint, oracle, mismatch") {
  Tape t;
  Tensor a = oracle::tensor(4004, {1, 1, 8, 8});
  PyramidScales one{1.0, 1.0};
  CHECK(t.val(loss_spr(t, t.constant(a), t.constant(a), t.constant(a), one))[0] == 0.0);

  // Constant maps chosen so both reshaped terms equal the reference.
  PyramidScales s{0.9, 1.1};
  Var full = t.constant(Tensor::full({1, 1, 8, 8}, 0.9801));
  Var am = t.constant(Tensor::full({1, 1, 7, 7}, 1.21));
  Var an = t.constant(Tensor::full({1, 1, 9, 9}, 0.81));
  CHECK(t.val(loss_spr(t, full, am, an, s))[0] == doctest::Approx(0.0).epsilon(1e-24));

  Var rf = t.constant(oracle::tensor(4001, {1, 1, 8, 8}));
  Var rm = t.constant(oracle::tensor(4002, {1, 1, 7, 7}));
  Var rn = t.constant(oracle::tensor(4003, {1, 1, 9, 9}));
  CHECK(std::abs(t.val(loss_spr(t, rf, rm, rn, s))[0] - oracle::kLossSpr8x8) < 1e-9);

  CHECK_THROWS_AS(loss_spr(t, rf, t.constant(Tensor({1, 1, 4, 4})), rn, s),
                  std::invalid_argument);
  CHECK_THROWS_AS(loss_spr(t, rf, rm, rn, PyramidScales{0.5, 1.1}), std::invalid_argument);
}

TEST_CASE("total loss: weighted combination") {
  Tape t;
  Var cnt = t.constant(Tensor::scalar(1.0));
  Var af = t.constant(Tensor::scalar(2.0));
  Var am = t.constant(Tensor::scalar(3.0));
  Var sp = t.constant(Tensor::scalar(4.0));

  LossWeights zero{0.0, 0.0, 0.0};
  CHECK(t.val(loss_total(t, cnt, af, am, sp, zero))[0] == 1.0);
  CHECK(t.val(loss_total(t, cnt, std::nullopt, std::nullopt, std::nullopt, zero))[0] == 1.0);

  LossWeights w{1e-3, 1e-3, 1e-1};
  CHECK(t.val(loss_total(t, cnt, af, am, sp, w))[0] == doctest::Approx(1.405).epsilon(1e-12));

  CHECK_THROWS_AS(loss_total(t, cnt, std::nullopt, am, sp, w), std::invalid_argument);
  LossWeights bad{-1.0, 0.0, 0.0};
  CHECK_THROWS_AS(loss_total(t, cnt, af, am, sp, bad), std::invalid_argument);
}

TEST_CASE("pixel reduction and scale sampling helpers") {
  CHECK(pixel_reduction_from_string("sum") == PixelReduction::Sum);
  CHECK(pixel_reduction_from_string("mean") == PixelReduction::Mean);
  CHECK_THROWS_AS(pixel_reduction_from_string("avg"), std::invalid_argument);
  CHECK(to_string(PixelReduction::Sum) == "sum");

  RngStream rng(11, "spr_scales");
  for (int i = 0; i < 1000; ++i) {
    PyramidScales s = PyramidScales::sample(rng);
    CHECK(s.m > 0.8);
    CHECK(s.m < 1.0);
    CHECK(s.n > 1.0);
    CHECK(s.n < 1.2);
  }
}

TEST_CASE("pyramid scale snapping to the output stride") {
  CHECK(spr_scaled_dim(64, 0.9, 8) == 56);
  CHECK(spr_scaled_dim(64, 1.1, 8) == 72);
  CHECK(spr_scaled_dim(64, 0.81, 8) == 56);
  CHECK(spr_scaled_dim(64, 1.19, 8) == 72);
  CHECK(spr_scaled_dim(128, 0.9, 8) == 112);
  CHECK(spr_scaled_dim(128, 1.1, 8) == 144);
  for (int dim : {32, 48, 64, 96, 128})
    for (double sc : {0.82, 0.9, 0.97, 1.03, 1.1, 1.18}) {
      const int d = spr_scaled_dim(dim, sc, 8);
      CHECK(d % 8 == 0);
      if (sc < 1.0) CHECK(d < dim);
      if (sc > 1.0) CHECK(d > dim);
    }
  CHECK_THROWS_AS(spr_scaled_dim(8, 0.9, 8), std::invalid_argument);
}

TEST_CASE("gradients: counting loss through a tiny counter") {
  CounterConfig cc;
  cc.blocks = {{2, 1, true}};
  cc.dilation_channels = 2;
  cc.spatial_channels = 2;
  cc.spatial_kernel = 3;
  CounterNet g(cc, RngStream(5, "g_init"));
  testing::jitter_params(g.parameters(), 5);
  REQUIRE(g.parameter_count() <= 200);

  Tensor img = oracle::tensor(5100, {1, 1, 6, 6});
  Tensor gt = oracle::tensor(5101, {1, 1, 3, 3}, 0.2);

  const auto forward = [&] {
    Tape t;
    TapBundle tb = g.forward(t, img);
    return t.val(loss_count(t, tb.density, t.constant(gt)))[0];
  };
  {
    Tape t;
    TapBundle tb = g.forward(t, img);
    Var l = loss_count(t, tb.density, t.constant(gt));
    g.zero_grads();
    t.backward(l);
  }
  const auto rep = testing::finite_diff_check(g.parameters(), forward);
  CHECK(rep.checked == g.parameter_count());
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradients: discriminator and adversarial losses") {
  FeatureDiscConfig fc;
  fc.in_channels = 2;
  fc.widths = {2, 2, 2};
  FeatureDiscriminator d(fc, RngStream(6, "d1_init"));
  testing::jitter_params(d.parameters(), 6);
  REQUIRE(d.parameter_count() <= 200);

  Tensor fs = oracle::tensor(5200, {1, 2, 4, 4});
  Tensor ft = oracle::tensor(5201, {1, 2, 4, 4}, 1.0, 0.3);

  for (PixelReduction red : {PixelReduction::Sum, PixelReduction::Mean}) {
    const auto forward = [&] {
      Tape t;
      return t.val(loss_feature_disc(t, d.forward(t, t.constant(fs)),
                                     d.forward(t, t.constant(ft)), red))[0];
    };
    {
      Tape t;
      Var l = loss_feature_disc(t, d.forward(t, t.constant(fs)), d.forward(t, t.constant(ft)),
                                red);
      d.zero_grads();
      t.backward(l);
    }
    CHECK(testing::finite_diff_check(d.parameters(), forward).max_rel_err < 1e-4);
  }
}

TEST_CASE("gradients: adversarial loss reaches the generator through a frozen D") {
  CounterConfig cc;
  cc.blocks = {{2, 1, true}};
  cc.dilation_channels = 2;
  cc.spatial_channels = 2;
  cc.spatial_kernel = 3;
  CounterNet g(cc, RngStream(7, "g_init"));
  FeatureDiscConfig fc;
  fc.in_channels = 2;
  fc.widths = {2, 2, 2};
  FeatureDiscriminator d1(fc, RngStream(7, "d1_init"));
  FeatureDiscriminator d2(fc, RngStream(7, "d2_init"));
  testing::jitter_params(g.parameters(), 17);
  testing::jitter_params(d1.parameters(), 27);
  testing::jitter_params(d2.parameters(), 37);
  REQUIRE(g.parameter_count() + d1.parameter_count() + d2.parameter_count() <= 450);

  Tensor img = oracle::tensor(5300, {1, 1, 6, 6});
  const auto forward = [&] {
    Tape t;
    TapBundle tb = g.forward(t, img);
    return t.val(loss_feature_adv(t, d1.forward(t, tb.f1, /*frozen=*/true),
                                  d2.forward(t, tb.f2, /*frozen=*/true),
                                  PixelReduction::Mean))[0];
  };
  {
    Tape t;
    TapBundle tb = g.forward(t, img);
    Var l = loss_feature_adv(t, d1.forward(t, tb.f1, true), d2.forward(t, tb.f2, true),
                             PixelReduction::Mean);
    g.zero_grads();
    d1.zero_grads();
    d2.zero_grads();
    t.backward(l);
  }
  CHECK(testing::finite_diff_check(g.parameters(), forward).max_rel_err < 1e-4);
  // Frozen discriminators receive no gradient at all.
  for (const Parameter* p : d1.parameters()) CHECK(p->grad.abs_max() == 0.0);
  for (const Parameter* p : d2.parameters()) CHECK(p->grad.abs_max() == 0.0);
}

TEST_CASE("gradients: map-discriminator losses") {
  MapDiscConfig mc;
  mc.widths = {2, 2, 2};
  MapDiscriminator d3(mc, RngStream(8, "d3_init"));
  testing::jitter_params(d3.parameters(), 8);
  REQUIRE(d3.parameter_count() <= 200);

  Tensor ms = oracle::tensor(5400, {1, 1, 8, 8});
  Tensor mt = oracle::tensor(5401, {1, 1, 8, 8}, 1.0, 0.2);

  const auto forward = [&] {
    Tape t;
    return t.val(loss_map_disc(t, d3.forward(t, t.constant(ms)), d3.forward(t, t.constant(mt))))[0];
  };
  {
    Tape t;
    Var l = loss_map_disc(t, d3.forward(t, t.constant(ms)), d3.forward(t, t.constant(mt)));
    d3.zero_grads();
    t.backward(l);
  }
  CHECK(testing::finite_diff_check(d3.parameters(), forward).max_rel_err < 1e-4);
}

TEST_CASE("gradients: pyramid loss through a tiny counter") {
  CounterConfig cc;
  cc.blocks = {{2, 1, true}};
  cc.dilation_channels = 2;
  cc.spatial_channels = 2;
  cc.spatial_kernel = 3;
  CounterNet g(cc, RngStream(9, "g_init"));
  testing::jitter_params(g.parameters(), 9);
  REQUIRE(g.parameter_count() <= 200);

  Tensor img = oracle::tensor(5500, {1, 1, 16, 16});
  const PyramidScales s{0.9, 1.1};
  const int hm = spr_scaled_dim(16, s.m, 2), hn = spr_scaled_dim(16, s.n, 2);
  Tensor img_m = resize_bilinear(img, hm, hm);
  Tensor img_n = resize_bilinear(img, hn, hn);
  PyramidScales eff{static_cast<double>(hm) / 16, static_cast<double>(hn) / 16};

  const auto forward = [&] {
    Tape t;
    Var a = g.forward(t, img).density;
    Var am = g.forward(t, img_m).density;
    Var an = g.forward(t, img_n).density;
    return t.val(loss_spr(t, a, am, an, eff))[0];
  };
  {
    Tape t;
    Var a = g.forward(t, img).density;
    Var am = g.forward(t, img_m).density;
    Var an = g.forward(t, img_n).density;
    Var l = loss_spr(t, a, am, an, eff);
    g.zero_grads();
    t.backward(l);
  }
  CHECK(testing::finite_diff_check(g.parameters(), forward).max_rel_err < 1e-4);
}

TEST_CASE("parameter partition: discriminator loss never reaches a frozen generator") {
  CounterConfig cc;
  cc.blocks = {{2, 1, true}};
  cc.dilation_channels = 2;
  cc.spatial_channels = 2;
  cc.spatial_kernel = 3;
  CounterNet g(cc, RngStream(10, "g_init"));
  FeatureDiscConfig fc;
  fc.in_channels = 2;
  fc.widths = {2, 2, 2};
  FeatureDiscriminator d(fc, RngStream(10, "d1_init"));

  Tensor is = oracle::tensor(5600, {1, 1, 6, 6});
  Tensor it = oracle::tensor(5601, {1, 1, 6, 6}, 1.0, 0.1);

  Tape t;
  TapBundle ts = g.forward(t, is, /*frozen=*/true);
  TapBundle tt = g.forward(t, it, /*frozen=*/true);
  Var l = loss_feature_disc(t, d.forward(t, ts.f1), d.forward(t, tt.f1), PixelReduction::Mean);
  g.zero_grads();
  d.zero_grads();
  t.backward(l);
  for (const Parameter* p : g.parameters()) CHECK(p->grad.abs_max() == 0.0);
  double dsum = 0.0;
  for (const Parameter* p : d.parameters()) dsum += p->grad.abs_max();
  CHECK(dsum > 0.0);
}
