#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dacount/losses.hpp"
#include "dacount/metrics.hpp"

namespace dacount {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mae"] = mae;
  j["mse"] = mse;
  j["psnr_db"] = psnr_db;
  j["ssim"] = ssim;
  j["n_samples"] = n_samples;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : samples)
    j["samples"].push_back({{"name", s.name},
                            {"gt_count", s.gt_count},
                            {"pred_count", s.pred_count},
                            {"psnr_db", s.psnr_db},
                            {"ssim", s.ssim}});
  return j;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "name,gt_count,pred_count,abs_err,psnr_db,ssim\n";
  for (const auto& s : samples)
    os << s.name << ',' << s.gt_count << ',' << s.pred_count << ','
       << std::abs(s.gt_count - s.pred_count) << ',' << s.psnr_db << ',' << s.ssim << '\n';
}

EvalReport evaluate(CounterNet& counter, const Dataset& ds, MapRefiner* refiner,
                    const EvalConfig& cfg) {
  if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");

  EvalReport rep;
  std::vector<double> gts, preds;
  gts.reserve(ds.samples.size());
  preds.reserve(ds.samples.size());
  const double out_scale = counter.config().out_scale();

  for (const auto& s : ds.samples) {
    const int h = s.image.dim(1), w = s.image.dim(2);
    Tape t;
    TapBundle tb = counter.forward(t, s.image.reshaped({1, 1, h, w}), /*frozen=*/true);
    Var full = semantic_reshape_to(t, tb.density, out_scale, 1.0, h, w);
    if (refiner) full = refiner->forward(t, full, /*frozen=*/true);
    Tensor pred = t.val(full);
    pred.clamp_min_(0.0);
    pred = pred.reshaped({h, w});

    const DensityMap gt_full = density_from_points(s.ann, h, w, cfg.sigma, 1.0);
    const double range = std::max(gt_full.grid.max(), 1e-6);

    SampleEval se;
    se.name = s.name;
    se.gt_count = static_cast<double>(s.ann.count());
    se.pred_count = pred.sum();
    se.psnr_db = psnr(pred, gt_full.grid, range);
    se.ssim = ssim(pred, gt_full.grid, range);
    gts.push_back(se.gt_count);
    preds.push_back(se.pred_count);
    rep.samples.push_back(std::move(se));
  }

  rep.n_samples = ds.size();
  rep.mae = mae(gts, preds);
  rep.mse = mse(gts, preds);
  double ps = 0.0, ss = 0.0;
  for (const auto& s : rep.samples) {
    ps += s.psnr_db;
    ss += s.ssim;
  }
  rep.psnr_db = ps / rep.n_samples;
  rep.ssim = ss / rep.n_samples;
  return rep;
}

}  // namespace dacount
