#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hsspn/network.hpp"

namespace hsspn {

/// Max-product view of a network: sum nodes take the maximum weighted child.
/// Non-owning, like std::span; node and edge ids are those of the source.
class MaxNetwork {
 public:
  explicit MaxNetwork(const Network& net) : net_(&net) {}

  const Network& network() const { return *net_; }

 private:
  const Network* net_;
};

inline MaxNetwork to_mpn(const Network& net) { return MaxNetwork(net); }
inline MaxNetwork to_mpn(const MaxNetwork& mpn) { return mpn; }

inline EvaluationResult evaluate(const MaxNetwork& mpn, const IndicatorValues& evidence) {
  return evaluate(mpn.network(), evidence, Combine::Max);
}

/// Structural identity of a network's edge space.
std::uint64_t edge_space_fingerprint(const Network& net);

/// Per-edge counts of how often an MPE backtrack traverses each edge.
struct TraversalCounts {
  std::map<EdgeId, std::int64_t> t;  // only positive entries
  std::uint64_t edge_space = 0;

  std::int64_t operator[](EdgeId e) const {
    auto it = t.find(e);
    return it == t.end() ? 0 : it->second;
  }
};

struct MpeResult {
  IndicatorValues completed;
  double root_log = 0.0;
  double root_value = 0.0;
  TraversalCounts traversal;
  /// Per network variable: a query variable no selected leaf constrains.
  std::vector<bool> unconstrained;
};

/// Bottom-up max evaluation followed by a root-down backtrack that keeps the
/// best child of every max node (ties go to the lowest child node id) and all
/// children of products. A node reached k times passes k to each selected
/// edge. Query variables must be marginalized in `evidence`.
MpeResult mpe(const MaxNetwork& mpn, const IndicatorValues& evidence,
              std::span<const std::uint32_t> query = {});

/// Signed per-edge difference a - b; edges with zero difference are omitted.
std::map<EdgeId, std::int64_t> traversal_difference(const TraversalCounts& a, const TraversalCounts& b);

/// Absolute log-domain tolerance under which two max-node children tie.
inline constexpr double kTieTolerance = 1e-12;

}  // namespace hsspn
