#include "hsspn/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "hsspn/spatial.hpp"

namespace hsspn {

std::optional<Location> ImageRecord::locate(PartId part, const Region& region) const {
  for (const Detection& d : detections)
    if (d.part == part && region.contains(d.at.x / width, d.at.y / height)) return d.at;
  return std::nullopt;
}

std::vector<const ImageRecord*> Dataset::of_class(ClassId c) const {
  std::vector<const ImageRecord*> out;
  for (const ImageRecord& r : records)
    if (r.label == c) out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files

std::size_t dedup_detections(ImageRecord& image) {
  std::set<std::tuple<PartId, int, int>> seen;
  const auto before = image.detections.size();
  std::erase_if(image.detections, [&](const Detection& d) {
    const int cx = std::min(Region::kGrid - 1, static_cast<int>(d.at.x / image.width * Region::kGrid));
    const int cy = std::min(Region::kGrid - 1, static_cast<int>(d.at.y / image.height * Region::kGrid));
    return !seen.insert({d.part, cx, cy}).second;
  });
  return before - image.detections.size();
}

std::string format_dataset(const Dataset& data) {
  std::string out = fmt::format("spn-data v1 t={} classes={}\n", data.num_parts, data.num_classes);
  for (const ImageRecord& r : data.records) {
    out += fmt::format("img {} {} {} {}\n", r.id, r.label, r.width, r.height);
    for (const Detection& d : r.detections) out += fmt::format("det {} {} {}\n", d.part, d.at.x, d.at.y);
  }
  return out;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::Parse, fmt::format("line {}: {}", line, msg));
}

double parse_number(const std::string& tok, std::size_t line, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || *end != '\0' || !std::isfinite(v))
    parse_fail(line, fmt::format("{} '{}' is not a finite number", what, tok));
  return v;
}

std::size_t parse_count(const std::string& tok, std::size_t line, const char* what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
    parse_fail(line, fmt::format("{} '{}' is not a non-negative integer", what, tok));
  return static_cast<std::size_t>(std::stoull(tok));
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

Dataset parse_dataset(std::string_view text, LoadStats* stats) {
  Dataset data;
  std::istringstream src{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  ImageRecord* current = nullptr;
  std::size_t dropped = 0;

  auto close_image = [&] {
    if (current) dropped += dedup_detections(*current);
  };

  while (std::getline(src, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (!header) {
      if (tok.size() != 4 || tok[0] != "spn-data") parse_fail(line_no, "expected 'spn-data v1 t=<parts> classes=<k>'");
      if (tok[1] != "v1") parse_fail(line_no, "unsupported dataset version '" + tok[1] + "'");
      if (tok[2].rfind("t=", 0) != 0 || tok[3].rfind("classes=", 0) != 0)
        parse_fail(line_no, "expected 't=<parts> classes=<k>'");
      data.num_parts = parse_count(tok[2].substr(2), line_no, "part count");
      data.num_classes = parse_count(tok[3].substr(8), line_no, "class count");
      header = true;
      continue;
    }
    if (tok[0] == "img") {
      if (tok.size() != 5) parse_fail(line_no, "expected 'img <id> <class> <w> <h>'");
      close_image();
      ImageRecord r;
      r.id = tok[1];
      const auto cls = parse_count(tok[2], line_no, "class");
      if (cls >= data.num_classes) parse_fail(line_no, fmt::format("unknown class {}", cls));
      r.label = static_cast<ClassId>(cls);
      r.width = parse_number(tok[3], line_no, "width");
      r.height = parse_number(tok[4], line_no, "height");
      if (r.width <= 0 || r.height <= 0) parse_fail(line_no, "image size must be positive");
      data.records.push_back(std::move(r));
      current = &data.records.back();
    } else if (tok[0] == "det") {
      if (!current) parse_fail(line_no, "detection before any image");
      if (tok.size() != 4) parse_fail(line_no, "expected 'det <part> <x> <y>'");
      const auto part = parse_count(tok[1], line_no, "part");
      if (part >= data.num_parts) parse_fail(line_no, fmt::format("part {} outside vocabulary of {}", part, data.num_parts));
      const double x = parse_number(tok[2], line_no, "x");
      const double y = parse_number(tok[3], line_no, "y");
      if (x < 0 || x >= current->width || y < 0 || y >= current->height)
        parse_fail(line_no, fmt::format("detection ({}, {}) outside image {}x{}", x, y, current->width, current->height));
      current->detections.push_back({static_cast<PartId>(part), {x, y}});
    } else {
      parse_fail(line_no, "unknown record '" + tok[0] + "'");
    }
  }
  if (!header) throw Error(ErrorKind::Parse, "empty input: missing 'spn-data v1' header");
  close_image();
  if (stats) stats->duplicates_dropped = dropped;
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Spec, "cannot write " + path);
  f << format_dataset(data);
}

Dataset load_dataset(const std::string& path, LoadStats* stats) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Parse, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str(), stats);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

namespace {

struct PixelBox {
  double x0, y0, x1, y1;
};

PixelBox to_pixels(const Region& r, double w, double h) {
  const double g = Region::kGrid;
  return {r.x0 / g * w, r.y0 / g * h, r.x1 / g * w, r.y1 / g * h};
}

bool horizontal(SpatialRelation r) { return r == SpatialRelation::LeftOf || r == SpatialRelation::RightOf; }

constexpr double kPixelStep = 0.01;

double snap(double v, double lo, double hi) {
  v = std::clamp(v, lo, hi - kPixelStep);
  return std::round(v * 100.0) / 100.0;
}

void check_rule_region(const Region& region, const SyntheticSpec& spec, const std::string& field,
                       double min_extent) {
  if (!region.valid()) throw Error(ErrorKind::Spec, "field '" + field + "': invalid region " + to_string(region));
  const PixelBox b = to_pixels(region, spec.width, spec.height);
  if (b.x1 - b.x0 < min_extent || b.y1 - b.y0 < min_extent)
    throw Error(ErrorKind::Spec, fmt::format("field '{}': region {} is too small for jittered placement", field,
                                             to_string(region)));
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw Error(ErrorKind::Spec, "field '" + field + "': " + msg);
  };
  if (spec.num_classes == 0) fail("classes", "must be at least 1");
  if (spec.num_parts == 0) fail("parts", "must be at least 1");
  if (!(spec.width > 1 && spec.height > 1)) fail("size", "width and height must exceed 1 pixel");
  if (spec.images_per_class == 0) fail("images", "must be at least 1");
  if (!(spec.background_rate >= 0 && spec.background_rate < 1)) fail("background", "must lie in [0, 1)");
  if (!(spec.drop_rate >= 0 && spec.drop_rate < 1)) fail("drop", "must lie in [0, 1)");
  if (!(spec.jitter >= 0) || !std::isfinite(spec.jitter)) fail("jitter", "must be a non-negative number");
  if (!(spec.separation >= 0) || !std::isfinite(spec.separation)) fail("separation", "must be a non-negative number");
  for (std::size_t i = 0; i < spec.part_rules.size(); ++i) {
    const PartRule& r = spec.part_rules[i];
    const auto field = fmt::format("part-rule {}", i);
    if (r.cls >= spec.num_classes) fail(field, fmt::format("class {} does not exist", r.cls));
    if (r.part >= spec.num_parts) fail(field, fmt::format("part {} is outside the vocabulary", r.part));
    check_rule_region(r.region, spec, field, 1.0);
  }
  for (std::size_t i = 0; i < spec.pair_rules.size(); ++i) {
    const PairRule& r = spec.pair_rules[i];
    const auto field = fmt::format("pair-rule {}", i);
    if (r.cls >= spec.num_classes) fail(field, fmt::format("class {} does not exist", r.cls));
    if (r.a >= spec.num_parts || r.b >= spec.num_parts) fail(field, "part outside the vocabulary");
    if (r.a == r.b) fail(field, "a pair needs two distinct parts");
    check_rule_region(r.region, spec, field, spec.separation + 2.0);
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::mt19937_64& rng) {
  validate(spec);
  Dataset data;
  data.num_parts = spec.num_parts;
  data.num_classes = spec.num_classes;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto jitter = [&] { return spec.jitter > 0 ? spec.jitter * noise(rng) : 0.0; };

  for (ClassId c = 0; c < spec.num_classes; ++c) {
    for (std::size_t n = 0; n < spec.images_per_class; ++n) {
      ImageRecord img;
      img.id = fmt::format("c{}_{:04d}", c, n);
      img.label = c;
      img.width = spec.width;
      img.height = spec.height;

      for (const PairRule& rule : spec.pair_rules) {
        if (rule.cls != c || unit(rng) < spec.drop_rate) continue;
        const PixelBox box = to_pixels(rule.region, spec.width, spec.height);
        const bool along_x = horizontal(rule.relation);
        const double lo = along_x ? box.x0 : box.y0;
        const double hi = along_x ? box.x1 : box.y1;
        const double olo = along_x ? box.y0 : box.x0;
        const double ohi = along_x ? box.y1 : box.x1;
        const double half = spec.separation / 2.0;
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
          const double center = lo + half + unit(rng) * (hi - lo - 2 * half);
          const double off = olo + unit(rng) * (ohi - olo);
          const double first = snap(center - half + jitter(), lo, hi);
          const double second = snap(center + half + jitter(), lo, hi);
          const double off_a = snap(off + jitter(), olo, ohi);
          const double off_b = snap(off + jitter(), olo, ohi);
          if (!(first < second)) continue;
          const bool a_first = rule.relation == SpatialRelation::LeftOf || rule.relation == SpatialRelation::Above;
          const double pa = a_first ? first : second;
          const double pb = a_first ? second : first;
          const Location la = along_x ? Location{pa, off_a} : Location{off_a, pa};
          const Location lb = along_x ? Location{pb, off_b} : Location{off_b, pb};
          img.detections.push_back({rule.a, la});
          img.detections.push_back({rule.b, lb});
          placed = true;
        }
        if (!placed)
          throw Error(ErrorKind::Spec, fmt::format("pair rule ({}, {}) could not be placed in {}", rule.a, rule.b,
                                                   to_string(rule.region)));
      }
      for (const PartRule& rule : spec.part_rules) {
        if (rule.cls != c || unit(rng) < spec.drop_rate) continue;
        const PixelBox box = to_pixels(rule.region, spec.width, spec.height);
        const double x = snap(box.x0 + unit(rng) * (box.x1 - box.x0) + jitter(), box.x0, box.x1);
        const double y = snap(box.y0 + unit(rng) * (box.y1 - box.y0) + jitter(), box.y0, box.y1);
        img.detections.push_back({rule.part, {x, y}});
      }
      for (PartId p = 0; p < spec.num_parts; ++p) {
        if (unit(rng) >= spec.background_rate) continue;
        const double x = snap(unit(rng) * spec.width, 0, spec.width);
        const double y = snap(unit(rng) * spec.height, 0, spec.height);
        img.detections.push_back({p, {x, y}});
      }
      dedup_detections(img);
      data.records.push_back(std::move(img));
    }
  }
  return data;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  return generate_synthetic(spec, rng);
}

SyntheticSpec mirror_preset(std::size_t images_per_class, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 2;
  s.num_parts = 12;
  s.images_per_class = images_per_class;
  s.seed = seed;
  s.separation = 6.0;
  s.jitter = 1.5;
  // Each pair footprint is one grid cell, so no strip cut can separate its parts.
  const Region upper{4, 4, 5, 5};
  const Region lower{14, 14, 15, 15};
  s.pair_rules = {
      {0, 2, 5, SpatialRelation::LeftOf, upper},
      {1, 2, 5, SpatialRelation::RightOf, upper},
      {0, 7, 9, SpatialRelation::LeftOf, lower},
      {1, 7, 9, SpatialRelation::RightOf, lower},
  };
  return s;
}

std::string format_synthetic_spec(const SyntheticSpec& s) {
  std::string out = "synth v1\n";
  out += fmt::format("classes {}\nparts {}\nsize {} {}\nimages {}\n", s.num_classes, s.num_parts, s.width, s.height,
                     s.images_per_class);
  out += fmt::format("background {}\ndrop {}\njitter {}\nseparation {}\nseed {}\n", s.background_rate, s.drop_rate,
                     s.jitter, s.separation, s.seed);
  for (const PartRule& r : s.part_rules)
    out += fmt::format("part-rule {} {} {} {} {} {}\n", r.cls, r.part, r.region.x0, r.region.y0, r.region.x1,
                       r.region.y1);
  for (const PairRule& r : s.pair_rules)
    out += fmt::format("pair-rule {} {} {} {} {} {} {} {}\n", r.cls, r.a, to_string(r.relation), r.b, r.region.x0,
                       r.region.y0, r.region.x1, r.region.y1);
  return out;
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec s;
  s.pair_rules.clear();
  std::istringstream src{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  auto fail = [&](const std::string& field, const std::string& msg) {
    throw Error(ErrorKind::Spec, fmt::format("line {}: field '{}': {}", line_no, field, msg));
  };
  auto number = [&](const std::string& field, const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || *end != '\0' || !std::isfinite(v)) fail(field, "'" + tok + "' is not a number");
    return v;
  };
  auto count = [&](const std::string& field, const std::string& tok) -> std::size_t {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
      fail(field, "'" + tok + "' is not a non-negative integer");
    return std::stoull(tok);
  };
  auto region = [&](const std::string& field, const std::vector<std::string>& t, std::size_t at) {
    Region r{static_cast<int>(count(field, t[at])), static_cast<int>(count(field, t[at + 1])),
             static_cast<int>(count(field, t[at + 2])), static_cast<int>(count(field, t[at + 3]))};
    return r;
  };
  while (std::getline(src, line)) {
    ++line_no;
    const auto t = tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (!header) {
      if (t.size() != 2 || t[0] != "synth" || t[1] != "v1") fail("header", "expected 'synth v1'");
      header = true;
      continue;
    }
    const std::string& key = t[0];
    auto arity = [&](std::size_t n) {
      if (t.size() != n + 1) fail(key, fmt::format("expected {} value(s)", n));
    };
    if (key == "classes") arity(1), s.num_classes = count(key, t[1]);
    else if (key == "parts") arity(1), s.num_parts = count(key, t[1]);
    else if (key == "size") arity(2), s.width = number(key, t[1]), s.height = number(key, t[2]);
    else if (key == "images") arity(1), s.images_per_class = count(key, t[1]);
    else if (key == "background") arity(1), s.background_rate = number(key, t[1]);
    else if (key == "drop") arity(1), s.drop_rate = number(key, t[1]);
    else if (key == "jitter") arity(1), s.jitter = number(key, t[1]);
    else if (key == "separation") arity(1), s.separation = number(key, t[1]);
    else if (key == "seed") arity(1), s.seed = count(key, t[1]);
    else if (key == "part-rule") {
      arity(6);
      s.part_rules.push_back({static_cast<ClassId>(count(key, t[1])), static_cast<PartId>(count(key, t[2])),
                              region(key, t, 3)});
    } else if (key == "pair-rule") {
      arity(8);
      SpatialRelation rel{};
      try {
        rel = relation_from_string(t[3]);
      } catch (const Error&) {
        fail(key, "unknown relation '" + t[3] + "'");
      }
      s.pair_rules.push_back({static_cast<ClassId>(count(key, t[1])), static_cast<PartId>(count(key, t[2])),
                              static_cast<PartId>(count(key, t[4])), rel, region(key, t, 5)});
    } else {
      fail(key, "unknown field");
    }
  }
  if (!header) throw Error(ErrorKind::Spec, "field 'header': missing 'synth v1'");
  validate(s);
  return s;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, double fraction, std::uint64_t seed) {
  Dataset first{data.num_parts, data.num_classes, {}};
  Dataset rest{data.num_parts, data.num_classes, {}};
  std::mt19937_64 rng(seed);
  for (ClassId c = 0; c < data.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.records.size(); ++i)
      if (data.records[i].label == c) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto cut = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < cut ? first : rest).records.push_back(data.records[idx[k]]);
  }
  return {std::move(first), std::move(rest)};
}

// ---------------------------------------------------------------------------
// Features and clustering

FeatureSet parse_features(std::string_view text) {
  std::istringstream src{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool header = false;
  std::vector<std::vector<double>> rows;
  FeatureSet fs;
  while (std::getline(src, line)) {
    ++line_no;
    const auto t = tokens(line);
    if (t.empty() || t[0][0] == '#') continue;
    if (!header) {
      if (t.size() != 3 || t[0] != "feat" || t[1] != "v1" || t[2].rfind("dim=", 0) != 0)
        parse_fail(line_no, "expected 'feat v1 dim=<d>'");
      dim = parse_count(t[2].substr(4), line_no, "dimension");
      if (dim == 0) parse_fail(line_no, "dimension must be positive");
      header = true;
      continue;
    }
    if (t.size() != dim + 1) parse_fail(line_no, fmt::format("expected an id and {} values", dim));
    fs.ids.push_back(t[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < t.size(); ++i) row.push_back(parse_number(t[i], line_no, "feature value"));
    rows.push_back(std::move(row));
  }
  if (!header) throw Error(ErrorKind::Parse, "empty input: missing 'feat v1' header");
  fs.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) fs.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return fs;
}

std::string format_features(const FeatureSet& fs) {
  std::string out = fmt::format("feat v1 dim={}\n", fs.values.cols());
  for (Eigen::Index i = 0; i < fs.values.rows(); ++i) {
    out += fs.ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < fs.values.cols(); ++j) out += fmt::format(" {}", fs.values(i, j));
    out += '\n';
  }
  return out;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& features, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Cluster make_cluster(const Eigen::MatrixXd& features, std::vector<std::size_t> members) {
  std::sort(members.begin(), members.end());
  Cluster c;
  c.centroid = gather(features, members).colwise().mean().transpose();
  c.members = std::move(members);
  return c;
}

}  // namespace

double average_link(const Cluster& c1, const Cluster& c2, const Eigen::MatrixXd& features) {
  if (c1.members.empty() || c2.members.empty()) throw Error(ErrorKind::Contract, "average link of an empty cluster");
  return average_link(gather(features, c1.members), gather(features, c2.members));
}

std::vector<Cluster> kmeans(const Eigen::MatrixXd& features, std::size_t k, std::uint64_t seed, int max_iterations,
                            double tolerance) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (k == 0 || k > n) throw Error(ErrorKind::Contract, fmt::format("k-means with k={} on {} points", k, n));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen{std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)};
  Eigen::VectorXd nearest = (features.rowwise() - features.row(static_cast<Eigen::Index>(chosen[0]))).rowwise().squaredNorm();
  while (chosen.size() < k) {
    Eigen::Index far = 0;
    nearest.maxCoeff(&far);
    chosen.push_back(static_cast<std::size_t>(far));
    nearest = nearest.cwiseMin((features.rowwise() - features.row(far)).rowwise().squaredNorm());
  }
  Eigen::MatrixXd centers = gather(features, chosen);
  std::vector<std::size_t> assign(n, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iterations; ++it) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      inertia += (centers.rowwise() - features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
      assign[i] = static_cast<std::size_t>(best);
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centers.rows(), centers.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(centers.rows());
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[i])) += features.row(static_cast<Eigen::Index>(i));
      counts[static_cast<Eigen::Index>(assign[i])] += 1.0;
    }
    for (Eigen::Index c = 0; c < centers.rows(); ++c)
      if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
    if (std::isfinite(prev) && std::abs(prev - inertia) <= tolerance * std::max(prev, 1e-300)) break;
    prev = inertia;
  }
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
  std::vector<Cluster> out;
  for (auto& m : members)
    if (!m.empty()) out.push_back(make_cluster(features, std::move(m)));
  return out;
}

Agglomeration merge_by_average_link(const Eigen::MatrixXd& features, std::vector<std::vector<std::size_t>> initial,
                                    std::size_t target) {
  Agglomeration res;
  for (auto& m : initial) std::sort(m.begin(), m.end());
  const std::size_t k = initial.size();
  // Lance-Williams update keeps the average link exact under merging.
  Eigen::MatrixXd link = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double d = average_link(gather(features, initial[i]), gather(features, initial[j]));
      link(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      link(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  std::vector<std::size_t> alive(k);
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<std::vector<std::size_t>> members = std::move(initial);

  while (alive.size() > target && alive.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < alive.size(); ++i)
      for (std::size_t j = i + 1; j < alive.size(); ++j) {
        const double d = link(static_cast<Eigen::Index>(alive[i]), static_cast<Eigen::Index>(alive[j]));
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    const std::size_t a = alive[bi], b = alive[bj];
    res.merges.emplace_back(members[a], members[b]);
    const double na = static_cast<double>(members[a].size());
    const double nb = static_cast<double>(members[b].size());
    for (std::size_t c : alive) {
      if (c == a || c == b) continue;
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b), ic = static_cast<Eigen::Index>(c);
      const double d = (na * link(ia, ic) + nb * link(ib, ic)) / (na + nb);
      link(ia, ic) = d;
      link(ic, ia) = d;
    }
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    std::sort(members[a].begin(), members[a].end());
    members[b].clear();
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  for (std::size_t c : alive) res.clusters.push_back(make_cluster(features, members[c]));
  return res;
}

Agglomeration agglomerate(const Eigen::MatrixXd& features, std::size_t k_init, std::size_t n_c, double drop_fraction,
                          std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n_c == 0) throw Error(ErrorKind::Contract, "target cluster count must be at least 1");
  if (n < n_c) throw Error(ErrorKind::InsufficientData, fmt::format("{} features cannot form {} clusters", n, n_c));
  if (k_init < n_c) throw Error(ErrorKind::Contract, fmt::format("k_init {} is below the target {}", k_init, n_c));
  if (!features.allFinite()) throw Error(ErrorKind::Contract, "features must be finite");
  k_init = std::min(k_init, n);

  std::vector<Cluster> over = kmeans(features, k_init, seed);
  std::size_t dropped = 0;
  if (drop_fraction > 0.0 && over.size() > n_c + 1) {
    const std::size_t k = over.size();
    double mean_size = 0.0;
    for (const Cluster& c : over) mean_size += static_cast<double>(c.members.size());
    mean_size /= static_cast<double>(k);
    std::vector<double> nearest(k, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        const double d = average_link(over[i], over[j], features);
        nearest[i] = std::min(nearest[i], d);
        nearest[j] = std::min(nearest[j], d);
      }
    std::vector<double> sorted = nearest;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(k))) - 1;
    const double p90 = sorted[std::min(rank, k - 1)];
    std::vector<Cluster> kept;
    for (std::size_t i = 0; i < k; ++i) {
      const bool small = static_cast<double>(over[i].members.size()) < drop_fraction * mean_size;
      const bool far = nearest[i] > p90;
      if (small && far && k - dropped > n_c) ++dropped;
      else kept.push_back(std::move(over[i]));
    }
    over = std::move(kept);
  }
  std::vector<std::vector<std::size_t>> initial;
  for (const Cluster& c : over) initial.push_back(c.members);
  Agglomeration res = merge_by_average_link(features, std::move(initial), n_c);
  res.dropped = dropped;
  return res;
}

std::string format_clusters(const std::vector<Cluster>& clusters, const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    out += fmt::format("cluster {}:", c);
    for (std::size_t m : clusters[c].members) out += " " + ids.at(m);
    out += '\n';
  }
  return out;
}

}  // namespace hsspn
