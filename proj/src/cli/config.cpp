#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "dacount/config.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

namespace dacount {

void to_json(json& j, const CounterConfig::Block& b) {
  j = json{{"channels", b.channels}, {"convs", b.convs}, {"pool", b.pool}};
}
void from_json(const json& j, CounterConfig::Block& b) {
  j.at("channels").get_to(b.channels);
  j.at("convs").get_to(b.convs);
  j.at("pool").get_to(b.pool);
}

void to_json(json& j, const CounterConfig& c) {
  j = json{{"in_channels", c.in_channels},           {"blocks", c.blocks},
           {"dilation_channels", c.dilation_channels}, {"spatial_channels", c.spatial_channels},
           {"spatial_kernel", c.spatial_kernel},     {"pad_inputs", c.pad_inputs}};
}
void from_json(const json& j, CounterConfig& c) {
  j.at("in_channels").get_to(c.in_channels);
  j.at("blocks").get_to(c.blocks);
  j.at("dilation_channels").get_to(c.dilation_channels);
  j.at("spatial_channels").get_to(c.spatial_channels);
  j.at("spatial_kernel").get_to(c.spatial_kernel);
  j.at("pad_inputs").get_to(c.pad_inputs);
}

void to_json(json& j, const FeatureDiscConfig& c) {
  j = json{{"in_channels", c.in_channels},
           {"widths", c.widths},
           {"kernel", c.kernel},
           {"leaky_slope", c.leaky_slope}};
}
void from_json(const json& j, FeatureDiscConfig& c) {
  j.at("in_channels").get_to(c.in_channels);
  j.at("widths").get_to(c.widths);
  j.at("kernel").get_to(c.kernel);
  j.at("leaky_slope").get_to(c.leaky_slope);
}

void to_json(json& j, const MapDiscConfig& c) {
  j = json{{"widths", c.widths},
           {"kernel", c.kernel},
           {"stride", c.stride},
           {"leaky_slope", c.leaky_slope}};
}
void from_json(const json& j, MapDiscConfig& c) {
  j.at("widths").get_to(c.widths);
  j.at("kernel").get_to(c.kernel);
  j.at("stride").get_to(c.stride);
  j.at("leaky_slope").get_to(c.leaky_slope);
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"lambda", w.lambda}, {"beta", w.beta}, {"gamma", w.gamma}};
}
void from_json(const json& j, LossWeights& w) {
  j.at("lambda").get_to(w.lambda);
  j.at("beta").get_to(w.beta);
  j.at("gamma").get_to(w.gamma);
}

void to_json(json& j, const GapConfig& g) {
  j = json{{"brightness", g.brightness},
           {"invert_blobs", g.invert_blobs},
           {"texture_amp", g.texture_amp},
           {"noise_sigma", g.noise_sigma}};
}
void from_json(const json& j, GapConfig& g) {
  j.at("brightness").get_to(g.brightness);
  j.at("invert_blobs").get_to(g.invert_blobs);
  j.at("texture_amp").get_to(g.texture_amp);
  j.at("noise_sigma").get_to(g.noise_sigma);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"counter", c.counter},
           {"fdisc", c.fdisc},
           {"mdisc", c.mdisc},
           {"lr_g", c.lr_g},
           {"lr_d", c.lr_d},
           {"lr_r", c.lr_r},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"eps", c.eps},
           {"weights", c.weights},
           {"pixel_reduction", to_string(c.pixel_reduction)},
           {"batch_source", c.batch_source},
           {"batch_target", c.batch_target},
           {"max_steps", c.max_steps},
           {"eval_every", c.eval_every},
           {"patience", c.patience},
           {"val_fraction", c.val_fraction},
           {"sigma", c.sigma},
           {"seed", c.seed}};
}
void from_json(const json& j, TrainConfig& c) {
  j.at("counter").get_to(c.counter);
  j.at("fdisc").get_to(c.fdisc);
  j.at("mdisc").get_to(c.mdisc);
  j.at("lr_g").get_to(c.lr_g);
  j.at("lr_d").get_to(c.lr_d);
  j.at("lr_r").get_to(c.lr_r);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps").get_to(c.eps);
  j.at("weights").get_to(c.weights);
  c.pixel_reduction = pixel_reduction_from_string(j.at("pixel_reduction").get<std::string>());
  j.at("batch_source").get_to(c.batch_source);
  j.at("batch_target").get_to(c.batch_target);
  j.at("max_steps").get_to(c.max_steps);
  j.at("eval_every").get_to(c.eval_every);
  j.at("patience").get_to(c.patience);
  j.at("val_fraction").get_to(c.val_fraction);
  j.at("sigma").get_to(c.sigma);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const RefinerConfig& c) {
  j = json{{"widths", c.widths}, {"kernels", c.kernels}};
}
void from_json(const json& j, RefinerConfig& c) {
  j.at("widths").get_to(c.widths);
  j.at("kernels").get_to(c.kernels);
}

void to_json(json& j, const FilterRule& r) {
  j = json{{"levels", std::vector<int>(r.levels.begin(), r.levels.end())},
           {"time_start", r.time_start},
           {"time_end", r.time_end},
           {"weathers", std::vector<int>(r.weathers.begin(), r.weathers.end())},
           {"count_lo", r.count_lo},
           {"count_hi", r.count_hi},
           {"ratio_lo", r.ratio_lo},
           {"ratio_hi", r.ratio_hi}};
}
void from_json(const json& j, FilterRule& r) {
  const auto lv = j.at("levels").get<std::vector<int>>();
  r.levels = std::set<int>(lv.begin(), lv.end());
  j.at("time_start").get_to(r.time_start);
  j.at("time_end").get_to(r.time_end);
  const auto ws = j.at("weathers").get<std::vector<int>>();
  r.weathers = std::set<int>(ws.begin(), ws.end());
  j.at("count_lo").get_to(r.count_lo);
  j.at("count_hi").get_to(r.count_hi);
  j.at("ratio_lo").get_to(r.ratio_lo);
  j.at("ratio_hi").get_to(r.ratio_hi);
}

json ExperimentConfig::to_json_value() const {
  json j{{"name", name},
         {"out_root", out_root},
         {"deterministic", deterministic},
         {"source_root", source_root},
         {"target_root", target_root},
         {"toy_n", toy_n},
         {"toy_h", toy_h},
         {"toy_w", toy_w},
         {"gap", gap},
         {"train", train},
         {"train_mode", train_mode},
         {"refiner", refiner}};
  j["filter"] = filter ? json(*filter) : json(nullptr);
  return j;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return to_json_value() == o.to_json_value();
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename It>
std::string join_ints(It begin, It end) {
  std::ostringstream os;
  for (It it = begin; it != end; ++it) os << (it == begin ? "" : ",") << *it;
  return os.str();
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad integer '" + tok + "' in " + what);
    }
  }
  return out;
}

std::string format_blocks(const std::vector<CounterConfig::Block>& blocks) {
  std::ostringstream os;
  for (size_t i = 0; i < blocks.size(); ++i)
    os << (i ? "," : "") << blocks[i].channels << ':' << blocks[i].convs << ':'
       << (blocks[i].pool ? 1 : 0);
  return os.str();
}

std::vector<CounterConfig::Block> parse_blocks(const std::string& s) {
  std::vector<CounterConfig::Block> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    CounterConfig::Block b;
    int pool = 1;
    const int n = std::sscanf(tok.c_str(), "%d:%d:%d", &b.channels, &b.convs, &pool);
    if (n < 2)
      throw std::invalid_argument("config: bad block spec '" + tok +
                                  "' (expected channels:convs[:pool])");
    b.pool = pool != 0;
    out.push_back(b);
  }
  return out;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!fs::exists(path))
    throw std::runtime_error("config: file '" + path + "' does not exist");
  pt::ptree t;
  try {
    pt::read_ini(path, t);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: failed to parse '" + path + "': " + e.what());
  }

  ExperimentConfig c;
  const auto gs = [&](const char* key, std::string dflt) {
    return t.get<std::string>(key, dflt);
  };

  c.name = gs("experiment.name", c.name);
  c.out_root = gs("experiment.out_root", c.out_root);
  c.deterministic = t.get<int>("experiment.deterministic", c.deterministic ? 1 : 0) != 0;

  c.source_root = gs("data.source_root", c.source_root);
  c.target_root = gs("data.target_root", c.target_root);

  c.toy_n = t.get<int>("toy.n_images", c.toy_n);
  c.toy_h = t.get<int>("toy.height", c.toy_h);
  c.toy_w = t.get<int>("toy.width", c.toy_w);
  if (auto g = t.get_optional<std::string>("gap.preset")) {
    if (*g == "standard")
      c.gap = GapConfig::standard();
    else if (*g == "zero")
      c.gap = GapConfig::zero_shift();
    else
      throw std::invalid_argument("config: unknown gap preset '" + *g + "' (standard, zero)");
  }
  c.gap.brightness = t.get<double>("gap.brightness", c.gap.brightness);
  c.gap.invert_blobs = t.get<int>("gap.invert_blobs", c.gap.invert_blobs ? 1 : 0) != 0;
  c.gap.texture_amp = t.get<double>("gap.texture_amp", c.gap.texture_amp);
  c.gap.noise_sigma = t.get<double>("gap.noise_sigma", c.gap.noise_sigma);

  if (auto p = t.get_optional<std::string>("counter.preset"))
    c.train.counter = CounterConfig::preset(*p);
  c.train.counter.in_channels = t.get<int>("counter.in_channels", c.train.counter.in_channels);
  if (auto b = t.get_optional<std::string>("counter.blocks"))
    c.train.counter.blocks = parse_blocks(*b);
  c.train.counter.dilation_channels =
      t.get<int>("counter.dilation_channels", c.train.counter.dilation_channels);
  c.train.counter.spatial_channels =
      t.get<int>("counter.spatial_channels", c.train.counter.spatial_channels);
  c.train.counter.spatial_kernel =
      t.get<int>("counter.spatial_kernel", c.train.counter.spatial_kernel);
  c.train.counter.pad_inputs =
      t.get<int>("counter.pad_inputs", c.train.counter.pad_inputs ? 1 : 0) != 0;

  c.train.fdisc.in_channels = t.get<int>("fdisc.in_channels", c.train.fdisc.in_channels);
  if (auto ws = t.get_optional<std::string>("fdisc.widths"))
    c.train.fdisc.widths = parse_int_list(*ws, "fdisc.widths");
  c.train.fdisc.kernel = t.get<int>("fdisc.kernel", c.train.fdisc.kernel);
  c.train.fdisc.leaky_slope = t.get<double>("fdisc.leaky_slope", c.train.fdisc.leaky_slope);

  if (auto ws = t.get_optional<std::string>("mdisc.widths"))
    c.train.mdisc.widths = parse_int_list(*ws, "mdisc.widths");
  c.train.mdisc.kernel = t.get<int>("mdisc.kernel", c.train.mdisc.kernel);
  c.train.mdisc.stride = t.get<int>("mdisc.stride", c.train.mdisc.stride);
  c.train.mdisc.leaky_slope = t.get<double>("mdisc.leaky_slope", c.train.mdisc.leaky_slope);

  c.train.lr_g = t.get<double>("train.lr_g", c.train.lr_g);
  c.train.lr_d = t.get<double>("train.lr_d", c.train.lr_d);
  c.train.lr_r = t.get<double>("train.lr_r", c.train.lr_r);
  c.train.beta1 = t.get<double>("train.beta1", c.train.beta1);
  c.train.beta2 = t.get<double>("train.beta2", c.train.beta2);
  c.train.eps = t.get<double>("train.eps", c.train.eps);
  c.train.weights.lambda = t.get<double>("train.lambda", c.train.weights.lambda);
  c.train.weights.beta = t.get<double>("train.beta", c.train.weights.beta);
  c.train.weights.gamma = t.get<double>("train.gamma", c.train.weights.gamma);
  c.train.pixel_reduction = pixel_reduction_from_string(
      gs("train.pixel_reduction", to_string(c.train.pixel_reduction)));
  c.train.batch_source = t.get<int>("train.batch_source", c.train.batch_source);
  c.train.batch_target = t.get<int>("train.batch_target", c.train.batch_target);
  c.train.max_steps = t.get<int>("train.max_steps", c.train.max_steps);
  c.train.eval_every = t.get<int>("train.eval_every", c.train.eval_every);
  c.train.patience = t.get<int>("train.patience", c.train.patience);
  c.train.val_fraction = t.get<double>("train.val_fraction", c.train.val_fraction);
  c.train.sigma = t.get<double>("train.sigma", c.train.sigma);
  c.train.seed = t.get<uint64_t>("train.seed", c.train.seed);
  c.train_mode = gs("train.mode", c.train_mode);
  train_mode_from_string(c.train_mode);  // reject unknown modes early

  if (auto ws = t.get_optional<std::string>("refiner.widths"))
    c.refiner.widths = parse_int_list(*ws, "refiner.widths");
  if (auto ks = t.get_optional<std::string>("refiner.kernels"))
    c.refiner.kernels = parse_int_list(*ks, "refiner.kernels");

  if (t.get_child_optional("filter")) {
    FilterRule r;
    if (auto p = t.get_optional<std::string>("filter.preset")) r = FilterRule::preset(*p);
    if (auto lv = t.get_optional<std::string>("filter.levels")) {
      const auto v = parse_int_list(*lv, "filter.levels");
      r.levels = std::set<int>(v.begin(), v.end());
    }
    if (auto ts = t.get_optional<std::string>("filter.time_start"))
      r.time_start = parse_time_hhmm(*ts);
    if (auto te = t.get_optional<std::string>("filter.time_end")) r.time_end = parse_time_hhmm(*te);
    if (auto ws = t.get_optional<std::string>("filter.weathers")) {
      const auto v = parse_int_list(*ws, "filter.weathers");
      r.weathers = std::set<int>(v.begin(), v.end());
    }
    r.count_lo = t.get<int>("filter.count_lo", r.count_lo);
    r.count_hi = t.get<int>("filter.count_hi", r.count_hi);
    r.ratio_lo = t.get<double>("filter.ratio_lo", r.ratio_lo);
    r.ratio_hi = t.get<double>("filter.ratio_hi", r.ratio_hi);
    r.validate();
    c.filter = r;
  }
  return c;
}

void write_experiment_config(const std::string& path, const ExperimentConfig& c) {
  pt::ptree t;
  t.put("experiment.name", c.name);
  t.put("experiment.out_root", c.out_root);
  t.put("experiment.deterministic", c.deterministic ? 1 : 0);

  t.put("data.source_root", c.source_root);
  t.put("data.target_root", c.target_root);

  t.put("toy.n_images", c.toy_n);
  t.put("toy.height", c.toy_h);
  t.put("toy.width", c.toy_w);
  t.put("gap.brightness", fmt_double(c.gap.brightness));
  t.put("gap.invert_blobs", c.gap.invert_blobs ? 1 : 0);
  t.put("gap.texture_amp", fmt_double(c.gap.texture_amp));
  t.put("gap.noise_sigma", fmt_double(c.gap.noise_sigma));

  t.put("counter.in_channels", c.train.counter.in_channels);
  t.put("counter.blocks", format_blocks(c.train.counter.blocks));
  t.put("counter.dilation_channels", c.train.counter.dilation_channels);
  t.put("counter.spatial_channels", c.train.counter.spatial_channels);
  t.put("counter.spatial_kernel", c.train.counter.spatial_kernel);
  t.put("counter.pad_inputs", c.train.counter.pad_inputs ? 1 : 0);

  t.put("fdisc.in_channels", c.train.fdisc.in_channels);
  t.put("fdisc.widths", join_ints(c.train.fdisc.widths.begin(), c.train.fdisc.widths.end()));
  t.put("fdisc.kernel", c.train.fdisc.kernel);
  t.put("fdisc.leaky_slope", fmt_double(c.train.fdisc.leaky_slope));

  t.put("mdisc.widths", join_ints(c.train.mdisc.widths.begin(), c.train.mdisc.widths.end()));
  t.put("mdisc.kernel", c.train.mdisc.kernel);
  t.put("mdisc.stride", c.train.mdisc.stride);
  t.put("mdisc.leaky_slope", fmt_double(c.train.mdisc.leaky_slope));

  t.put("train.lr_g", fmt_double(c.train.lr_g));
  t.put("train.lr_d", fmt_double(c.train.lr_d));
  t.put("train.lr_r", fmt_double(c.train.lr_r));
  t.put("train.beta1", fmt_double(c.train.beta1));
  t.put("train.beta2", fmt_double(c.train.beta2));
  t.put("train.eps", fmt_double(c.train.eps));
  t.put("train.lambda", fmt_double(c.train.weights.lambda));
  t.put("train.beta", fmt_double(c.train.weights.beta));
  t.put("train.gamma", fmt_double(c.train.weights.gamma));
  t.put("train.pixel_reduction", to_string(c.train.pixel_reduction));
  t.put("train.batch_source", c.train.batch_source);
  t.put("train.batch_target", c.train.batch_target);
  t.put("train.max_steps", c.train.max_steps);
  t.put("train.eval_every", c.train.eval_every);
  t.put("train.patience", c.train.patience);
  t.put("train.val_fraction", fmt_double(c.train.val_fraction));
  t.put("train.sigma", fmt_double(c.train.sigma));
  t.put("train.seed", c.train.seed);
  t.put("train.mode", c.train_mode);

  t.put("refiner.widths", join_ints(c.refiner.widths.begin(), c.refiner.widths.end()));
  t.put("refiner.kernels", join_ints(c.refiner.kernels.begin(), c.refiner.kernels.end()));

  if (c.filter) {
    const FilterRule& r = *c.filter;
    t.put("filter.levels", join_ints(r.levels.begin(), r.levels.end()));
    t.put("filter.time_start", format_time_hhmm(r.time_start));
    t.put("filter.time_end", format_time_hhmm(r.time_end));
    t.put("filter.weathers", join_ints(r.weathers.begin(), r.weathers.end()));
    t.put("filter.count_lo", r.count_lo);
    t.put("filter.count_hi", r.count_hi);
    t.put("filter.ratio_lo", fmt_double(r.ratio_lo));
    t.put("filter.ratio_hi", fmt_double(r.ratio_hi));
  }
  try {
    pt::write_ini(path, t);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error("config: failed to write '" + path + "': " + e.what());
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  const uint64_t h = fnv1a64(cfg.to_json_value().dump());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string make_experiment_dir(const ExperimentConfig& cfg, bool force,
                                const std::string& override_dir) {
  fs::path dir;
  if (!override_dir.empty()) {
    dir = override_dir;
  } else {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << cfg.name << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-'
       << config_hash(cfg).substr(0, 8);
    dir = fs::path(cfg.out_root) / os.str();
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::invalid_argument("experiment directory '" + dir.string() +
                                "' already exists and is not empty (pass --force to reuse)");
  fs::create_directories(dir);
  write_experiment_config((dir / "config.ini").string(), cfg);
  return dir.string();
}

Dataset apply_filter(const Dataset& ds, const FilterRule& rule) {
  Dataset out;
  for (const auto& s : ds.samples)
    if (s.meta && scene_filter(*s.meta, rule)) out.samples.push_back(s);
  return out;
}

}  // namespace dacount
