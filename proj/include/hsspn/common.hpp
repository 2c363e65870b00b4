#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsspn {

using PartId = std::uint32_t;
using ClassId = std::uint32_t;
using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;
using RegionId = std::uint32_t;

inline constexpr std::uint32_t kInvalidId = std::numeric_limits<std::uint32_t>::max();

/// Lower bound applied to every sum-edge weight after an update.
inline constexpr double kWeightFloor = 1e-8;

enum class ErrorKind {
  Parse,
  MalformedRecord,
  IncompleteEvidence,
  DegenerateNode,
  Contract,
  InsufficientData,
  Mismatch,
  SizeGuard,
  Numeric,
  Spec,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class Polarity : std::uint8_t { Positive = 0, Negative = 1 };

/// Relation of part_a relative to part_b (f_l, f_r, f_a, f_b).
enum class SpatialRelation : std::uint8_t { LeftOf = 0, RightOf = 1, Above = 2, Below = 3 };

inline constexpr SpatialRelation kAllRelations[4] = {
    SpatialRelation::LeftOf, SpatialRelation::RightOf, SpatialRelation::Above,
    SpatialRelation::Below};

const char* to_string(SpatialRelation r);
SpatialRelation relation_from_string(const std::string& s);

/// Unordered part pair stored canonically with a < b.
struct PairKey {
  PartId a = 0;
  PartId b = 0;

  static PairKey make(PartId p, PartId q) { return p < q ? PairKey{p, q} : PairKey{q, p}; }

  auto operator<=>(const PairKey&) const = default;
};

/// Axis-aligned rectangle on the 1/kGrid lattice of the unit image square.
/// Integer coordinates keep partition tiling exact.
struct Region {
  static constexpr int kGrid = 20;

  int x0 = 0;
  int y0 = 0;
  int x1 = kGrid;
  int y1 = kGrid;

  static Region whole() { return {}; }

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  /// Area in grid cells.
  int cells() const { return width() * height(); }
  double area() const { return static_cast<double>(cells()) / (kGrid * kGrid); }
  bool valid() const { return 0 <= x0 && x0 < x1 && x1 <= kGrid && 0 <= y0 && y0 < y1 && y1 <= kGrid; }

  /// Half-open containment of a normalized point; the far image border is closed.
  bool contains(double nx, double ny) const {
    const double g = kGrid;
    const bool in_x = nx >= x0 / g && (nx < x1 / g || (x1 == kGrid && nx <= 1.0));
    const bool in_y = ny >= y0 / g && (ny < y1 / g || (y1 == kGrid && ny <= 1.0));
    return in_x && in_y;
  }

  auto operator<=>(const Region&) const = default;
};

std::string to_string(const Region& r);

/// A tiling of `parent` into strips, listed in order along the cut axis.
struct Partition {
  Region parent;
  std::vector<Region> children;

  bool operator==(const Partition&) const = default;
};

/// FNV-1a, used for stable structural hashes.
class Fnv1a {
 public:
  Fnv1a& add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xffu;
      h_ *= 0x100000001b3ull;
    }
    return *this;
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace hsspn
