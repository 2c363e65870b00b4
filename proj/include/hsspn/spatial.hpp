#pragma once

#include <array>

#include "hsspn/common.hpp"
#include "hsspn/image.hpp"

namespace hsspn {

class Network;

/// Relation indicators of part a relative to part b, indexed by SpatialRelation.
struct RelationFlags {
  std::array<bool, 4> bits{};

  bool operator[](SpatialRelation r) const { return bits[static_cast<std::size_t>(r)]; }
  bool& operator[](SpatialRelation r) { return bits[static_cast<std::size_t>(r)]; }
  bool operator==(const RelationFlags&) const = default;
};

/// Strict comparison of centers in image coordinates (y grows downward);
/// equal coordinates on an axis set neither indicator of that axis.
constexpr RelationFlags compute_relations(const Location& a, const Location& b) {
  RelationFlags f;
  f.bits = {a.x < b.x, a.x > b.x, a.y < b.y, a.y > b.y};
  return f;
}

/// Handles into a pair gadget: one sum over four products, one per relation.
struct PairGadget {
  NodeId sum = kInvalidId;
  std::array<NodeId, 4> products{};
  std::array<EdgeId, 4> edges{};  // sum -> products[i], relation order
};

/// Add the four-configuration gadget for `pair` inside `region` to `net`.
/// Each product multiplies the positive indicators of both parts with one
/// relation indicator; sum weights start uniform at 0.25.
PairGadget build_pair_gadget(Network& net, PairKey pair, RegionId region = 0);

}  // namespace hsspn
