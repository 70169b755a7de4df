#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "dacount/data.hpp"
#include "dacount/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dacount {

namespace {

void parse_annotation(const fs::path& path, Sample& s) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_dataset: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("load_dataset: malformed JSON in '" + path.string() +
                             "': " + e.what());
  }
  const int h = s.image.dim(1), w = s.image.dim(2);
  const auto& pts = j.at("points");
  if (!pts.is_array())
    throw std::runtime_error("load_dataset: 'points' must be an array in '" + path.string() + "'");
  s.ann.points.reserve(pts.size());
  for (size_t k = 0; k < pts.size(); ++k) {
    const auto& p = pts[k];
    if (!p.is_array() || p.size() != 2)
      throw std::runtime_error("load_dataset: point " + std::to_string(k) +
                               " must be [x,y] in '" + path.string() + "'");
    const double x = p[0].get<double>(), y = p[1].get<double>();
    if (!(x >= 0.0 && x < w && y >= 0.0 && y < h))
      throw std::runtime_error("load_dataset: point " + std::to_string(k) + " at (" +
                               std::to_string(x) + ", " + std::to_string(y) + ") outside " +
                               std::to_string(w) + "x" + std::to_string(h) + " image in '" +
                               path.string() + "'");
    s.ann.points.push_back({x, y});
  }
  if (j.contains("meta") && !j["meta"].is_null()) {
    const auto& jm = j["meta"];
    SceneMeta m;
    m.level = jm.at("level").get<int>();
    m.time = parse_time_hhmm(jm.at("time").get<std::string>());
    m.weather = jm.at("weather").get<int>();
    m.count = jm.at("count").get<int>();
    m.ratio = jm.at("ratio").get<double>();
    m.validate();
    s.meta = m;
  }
}

}  // namespace

Dataset load_dataset(const std::string& root) {
  const fs::path r(root);
  if (!fs::is_directory(r))
    throw std::runtime_error("load_dataset: root '" + root + "' is not a directory");
  const fs::path imgdir = r / "images", anndir = r / "ann";
  if (!fs::is_directory(imgdir))
    throw std::runtime_error("load_dataset: missing images/ directory under '" + root + "'");

  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(imgdir))
    if (e.path().extension() == ".png") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  Dataset ds;
  ds.samples.reserve(paths.size());
  for (const auto& p : paths) {
    Sample s;
    s.name = p.stem().string();
    s.image = read_png_gray(p.string());
    const fs::path ap = anndir / (s.name + ".json");
    if (!fs::exists(ap))
      throw std::runtime_error("load_dataset: missing annotation '" + ap.string() +
                               "' for image '" + p.string() + "'");
    parse_annotation(ap, s);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const std::string& root, const Dataset& ds) {
  const fs::path r(root);
  fs::create_directories(r / "images");
  fs::create_directories(r / "ann");
  for (const auto& s : ds.samples) {
    write_png_gray((r / "images" / (s.name + ".png")).string(), s.image);
    json j;
    j["points"] = json::array();
    for (const auto& p : s.ann.points) j["points"].push_back({p[0], p[1]});
    if (s.meta) {
      j["meta"] = {{"level", s.meta->level},
                   {"time", format_time_hhmm(s.meta->time)},
                   {"weather", s.meta->weather},
                   {"count", s.meta->count},
                   {"ratio", s.meta->ratio}};
    }
    std::ofstream os(r / "ann" / (s.name + ".json"));
    if (!os)
      throw std::runtime_error("save_dataset: cannot write annotation for '" + s.name + "'");
    os << j.dump(2) << '\n';
  }
}

namespace {

Tensor stack(const Dataset& ds, const std::vector<int>& idx, bool gts) {
  if (idx.empty()) throw std::invalid_argument("stack: empty index list");
  for (int i : idx)
    if (i < 0 || i >= ds.size())
      throw std::out_of_range("stack: index " + std::to_string(i) + " outside dataset of size " +
                              std::to_string(ds.size()));
  const Sample& first = ds.samples[static_cast<size_t>(idx[0])];
  if (gts && first.gt.grid.empty())
    throw std::invalid_argument("stack_gts: ground-truth maps missing; run densify() first");
  const int h = gts ? first.gt.grid.dim(0) : first.image.dim(1);
  const int w = gts ? first.gt.grid.dim(1) : first.image.dim(2);
  Tensor out({static_cast<int>(idx.size()), 1, h, w});
  for (size_t n = 0; n < idx.size(); ++n) {
    const Sample& s = ds.samples[static_cast<size_t>(idx[n])];
    const Tensor& src = gts ? s.gt.grid : s.image;
    if (src.numel() != int64_t(h) * w)
      throw std::invalid_argument("stack: sample '" + s.name + "' has mismatched shape " +
                                  src.shape_str());
    std::memcpy(out.data() + int64_t(n) * h * w, src.data(), sizeof(double) * h * w);
  }
  return out;
}

}  // namespace

Tensor stack_images(const Dataset& ds, const std::vector<int>& idx) { return stack(ds, idx, false); }
Tensor stack_gts(const Dataset& ds, const std::vector<int>& idx) { return stack(ds, idx, true); }

}  // namespace dacount
