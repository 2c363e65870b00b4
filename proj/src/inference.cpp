#include "hsspn/inference.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>

namespace hsspn {

std::uint64_t edge_space_fingerprint(const Network& net) {
  Fnv1a h;
  h.add(net.size()).add(net.edges().size());
  for (const Edge& e : net.edges()) h.add(e.parent).add(e.child);
  return h.value();
}

MpeResult mpe(const MaxNetwork& mpn, const IndicatorValues& evidence, std::span<const std::uint32_t> query) {
  const Network& net = mpn.network();
  for (std::uint32_t v : query) {
    if (v >= net.variables().size())
      throw Error(ErrorKind::Contract, fmt::format("query variable {} is not in the network", v));
    const bool part = net.variables()[v].kind == VariableKind::Part;
    const int cols = part ? 2 : 4;
    for (int c = 0; c < cols; ++c)
      if (evidence.matrix()(v, c) != 1.0)
        throw Error(ErrorKind::Contract, fmt::format("query variable {} is not marginalized in the evidence", v));
  }

  const EvaluationResult eval = evaluate(net, evidence, Combine::Max);
  const auto& lv = eval.log_values;

  MpeResult res;
  res.root_log = eval.root_log;
  res.root_value = eval.root_value;
  res.traversal.edge_space = edge_space_fingerprint(net);

  std::vector<std::int64_t> reach(net.size(), 0);
  // Reached indicator states per variable, as a bitmask over columns.
  std::vector<std::uint8_t> reached(net.variables().size(), 0);
  reach[net.root()] = 1;
  for (NodeId id = static_cast<NodeId>(net.size()); id-- > 0;) {
    const std::int64_t k = reach[id];
    if (k == 0) continue;
    const Node& n = net.node(id);
    switch (n.kind) {
      case NodeKind::Sum: {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        terms.reserve(n.children.size());
        for (EdgeId e : n.children) {
          const Edge& edge = net.edge(e);
          const double c = lv[edge.child];
          const double t = (edge.weight > 0.0 && std::isfinite(c)) ? std::log(edge.weight) + c
                                                                    : -std::numeric_limits<double>::infinity();
          terms.push_back(t);
          best = std::max(best, t);
        }
        EdgeId pick = kInvalidId;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          const bool tie = terms[i] == best || terms[i] >= best - kTieTolerance;
          if (!tie) continue;
          const EdgeId e = n.children[i];
          if (pick == kInvalidId || net.edge(e).child < net.edge(pick).child) pick = e;
        }
        res.traversal.t[pick] += k;
        reach[net.edge(pick).child] += k;
        break;
      }
      case NodeKind::Product:
        for (EdgeId e : n.children) {
          res.traversal.t[e] += k;
          reach[net.edge(e).child] += k;
        }
        break;
      case NodeKind::PartIndicator:
      case NodeKind::SpatialIndicator:
        reached[n.variable] |= static_cast<std::uint8_t>(1u << n.state);
        break;
      case NodeKind::Constant:
        break;
    }
  }

  res.completed = evidence;
  res.unconstrained.assign(net.variables().size(), false);
  for (std::uint32_t v : query) {
    const std::uint8_t mask = reached[v];
    if (net.variables()[v].kind == VariableKind::Part) {
      if (mask == 0) res.unconstrained[v] = true;
      const bool positive = mask == 0 || (mask & 1u);
      res.completed.set_part(v, positive);
    } else {
      if (mask == 0) res.unconstrained[v] = true;
      for (int c = 0; c < 4; ++c) res.completed.matrix()(v, c) = (mask >> c) & 1u ? 1.0 : 0.0;
    }
  }
  return res;
}

std::map<EdgeId, std::int64_t> traversal_difference(const TraversalCounts& a, const TraversalCounts& b) {
  if (a.edge_space != b.edge_space)
    throw Error(ErrorKind::Mismatch, "traversal counts come from different networks");
  std::map<EdgeId, std::int64_t> d;
  for (auto [e, t] : a.t) d[e] += t;
  for (auto [e, t] : b.t) d[e] -= t;
  std::erase_if(d, [](const auto& kv) { return kv.second == 0; });
  return d;
}

}  // namespace hsspn
