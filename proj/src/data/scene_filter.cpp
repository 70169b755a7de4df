#include <cctype>
#include <stdexcept>
#include <string>

#include "dacount/data.hpp"

namespace dacount {

void SceneMeta::validate() const {
  if (level < 0 || level > 8)
    throw std::invalid_argument("SceneMeta: level must be in 0..8, got " + std::to_string(level));
  if (time < 0 || time >= 1440)
    throw std::invalid_argument("SceneMeta: time must be in 0..1439 minutes, got " +
                                std::to_string(time));
  if (weather < 0 || weather > 6)
    throw std::invalid_argument("SceneMeta: weather must be in 0..6, got " +
                                std::to_string(weather));
  if (count < 0)
    throw std::invalid_argument("SceneMeta: count must be >= 0, got " + std::to_string(count));
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument("SceneMeta: ratio must be in [0,1], got " + std::to_string(ratio));
}

void FilterRule::validate() const {
  if (time_start > time_end)
    throw std::invalid_argument("FilterRule: time_start > time_end");
  if (count_lo > count_hi)
    throw std::invalid_argument("FilterRule: count_lo > count_hi");
  if (ratio_lo > ratio_hi)
    throw std::invalid_argument("FilterRule: ratio_lo > ratio_hi");
}

bool scene_filter(const SceneMeta& meta, const FilterRule& rule) {
  meta.validate();
  rule.validate();
  return rule.levels.count(meta.level) != 0 && meta.time >= rule.time_start &&
         meta.time <= rule.time_end && rule.weathers.count(meta.weather) != 0 &&
         meta.count >= rule.count_lo && meta.count <= rule.count_hi &&
         meta.ratio >= rule.ratio_lo && meta.ratio <= rule.ratio_hi;
}

int parse_time_hhmm(const std::string& s) {
  const auto bad = [&] {
    return std::invalid_argument("parse_time_hhmm: expected \"HH:MM\", got \"" + s + "\"");
  };
  const size_t colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon > 2 || s.size() - colon - 1 != 2)
    throw bad();
  for (size_t i = 0; i < s.size(); ++i)
    if (i != colon && !std::isdigit(static_cast<unsigned char>(s[i]))) throw bad();
  const int hh = std::stoi(s.substr(0, colon));
  const int mm = std::stoi(s.substr(colon + 1));
  if (hh > 23 || mm > 59) throw bad();
  return hh * 60 + mm;
}

std::string format_time_hhmm(int minutes) {
  if (minutes < 0 || minutes >= 1440)
    throw std::invalid_argument("format_time_hhmm: minutes out of range");
  char buf[6];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

FilterRule FilterRule::preset(const std::string& name) {
  FilterRule r;
  r.weathers = {0, 1, 5, 6};  // clear, clouds, overcast, extra sunny
  if (name == "shtb") {
    r.levels = {1, 2, 3, 4, 5};
    r.time_start = parse_time_hhmm("6:00");
    r.time_end = parse_time_hhmm("19:59");
    r.count_lo = 10;
    r.count_hi = 600;
    r.ratio_lo = 0.3;
    r.ratio_hi = 1.0;
  } else if (name == "worldexpo") {
    r.levels = {2, 3, 4, 5, 6};
    r.time_start = parse_time_hhmm("6:00");
    r.time_end = parse_time_hhmm("18:59");
    r.count_lo = 0;
    r.count_hi = 1000;
    r.ratio_lo = 0.0;
    r.ratio_hi = 1.0;
  } else if (name == "mall" || name == "ucsd") {
    r.levels = {1, 2, 3, 4};
    r.time_start = parse_time_hhmm("8:00");
    r.time_end = parse_time_hhmm("18:59");
    r.count_lo = 0;
    r.count_hi = 200;
    r.ratio_lo = 0.0;
    r.ratio_hi = 1.0;
  } else {
    throw std::invalid_argument("FilterRule::preset: unknown preset '" + name +
                                "' (known: shtb, worldexpo, mall, ucsd)");
  }
  return r;
}

}  // namespace dacount
