#include "hsspn/oracle.hpp"

#include "hsspn/structure.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace hsspn {

namespace {

using Row = std::array<double, 4>;

bool row_marginal(const IndicatorValues& ev, std::uint32_t v, int cols) {
  for (int c = 0; c < cols; ++c) {
    const double x = ev.matrix()(v, c);
    if (std::isnan(x)) return true;
  }
  for (int c = 0; c < cols; ++c)
    if (ev.matrix()(v, c) != 1.0) return false;
  return true;
}

Row current_row(const IndicatorValues& ev, std::uint32_t v) {
  return {ev.matrix()(v, 0), ev.matrix()(v, 1), ev.matrix()(v, 2), ev.matrix()(v, 3)};
}

/// Per variable, the candidate rows of a completion.
std::vector<std::vector<Row>> completion_space(const Network& net, const IndicatorValues& evidence,
                                               const std::vector<Row>& pair_states) {
  const std::size_t n = net.variables().size();
  if (n > kOracleMaxVariables)
    throw Error(ErrorKind::SizeGuard,
                fmt::format("oracle enumeration over {} variables exceeds the cap of {}", n, kOracleMaxVariables));
  if (evidence.num_variables() != n)
    throw Error(ErrorKind::Contract, "evidence does not match the network's variables");
  std::vector<std::vector<Row>> space(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    const bool part = net.variables()[v].kind == VariableKind::Part;
    if (!row_marginal(evidence, v, part ? 2 : 4)) {
      space[v] = {current_row(evidence, v)};
    } else if (part) {
      space[v] = {Row{1, 0, 0, 0}, Row{0, 1, 0, 0}};
    } else {
      space[v] = pair_states;
    }
  }
  return space;
}

template <typename Visit>
void enumerate(const std::vector<std::vector<Row>>& space, Visit&& visit) {
  const std::size_t n = space.size();
  std::vector<std::size_t> idx(n, 0);
  IndicatorValues ev(n);
  while (true) {
    for (std::size_t v = 0; v < n; ++v)
      for (int c = 0; c < 4; ++c) ev.matrix()(static_cast<Eigen::Index>(v), c) = space[v][idx[v]][c];
    visit(ev);
    std::size_t v = n;
    while (v > 0) {
      --v;
      if (++idx[v] < space[v].size()) break;
      idx[v] = 0;
      if (v == 0) return;
    }
    if (n == 0) return;
  }
}

const std::vector<Row>& one_hot_states() {
  static const std::vector<Row> s = {Row{1, 0, 0, 0}, Row{0, 1, 0, 0}, Row{0, 0, 1, 0}, Row{0, 0, 0, 1}};
  return s;
}

}  // namespace

const std::vector<std::array<double, 4>>& realizable_relation_states() {
  static const std::vector<Row> s = [] {
    std::vector<Row> out;
    for (int x = -1; x <= 1; ++x)
      for (int y = -1; y <= 1; ++y)
        out.push_back({x < 0 ? 1.0 : 0.0, x > 0 ? 1.0 : 0.0, y < 0 ? 1.0 : 0.0, y > 0 ? 1.0 : 0.0});
    return out;
  }();
  return s;
}

double brute_force_marginal(const Network& net, const IndicatorValues& evidence) {
  const auto space = completion_space(net, evidence, one_hot_states());
  double total = 0.0;
  enumerate(space, [&](const IndicatorValues& ev) { total += evaluate_linear<double>(net, ev, Combine::Sum); });
  return total;
}

OracleMpe brute_force_mpe(const MaxNetwork& mpn, const IndicatorValues& evidence) {
  const Network& net = mpn.network();
  const auto space = completion_space(net, evidence, realizable_relation_states());
  OracleMpe best;
  bool first = true;
  enumerate(space, [&](const IndicatorValues& ev) {
    const double v = evaluate_linear<double>(net, ev, Combine::Max);
    if (first || v > best.value) {
      best.value = v;
      best.assignment = ev;
      first = false;
    }
  });
  return best;
}

FiniteDifference finite_difference_gradient(const MaxNetwork& mpn, const IndicatorValues& pos,
                                            const IndicatorValues& neg, EdgeId edge, double delta) {
  Network net = mpn.network();
  const double w = net.weight(edge);
  const auto base_pos = mpe(to_mpn(net), pos).traversal.t;
  const auto base_neg = mpe(to_mpn(net), neg).traversal.t;
  auto objective = [&](double weight, bool& stable) {
    net.set_weight(edge, weight);
    const MaxNetwork view = to_mpn(net);
    const auto rp = mpe(view, pos);
    const auto rn = mpe(view, neg);
    stable = stable && rp.traversal.t == base_pos && rn.traversal.t == base_neg;
    return rp.root_log - rn.root_log;
  };
  FiniteDifference fd;
  double d = delta * w;
  for (int attempt = 0; attempt <= 5; ++attempt, d /= 10) {
    bool stable = true;
    const double up = objective(w + d, stable);
    const double down = objective(w - d, stable);
    net.set_weight(edge, w);
    if (!stable) continue;
    fd.value = (up - down) / (2 * d);
    fd.delta = d;
    fd.conclusive = true;
    return fd;
  }
  return fd;
}

std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> brute_force_merges(
    const Eigen::MatrixXd& features, std::vector<std::vector<std::size_t>> clusters, std::size_t target) {
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> merges;
  while (clusters.size() > target && clusters.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        // Explicit double sum, independent of the Eigen row expression.
        double total = 0.0;
        for (std::size_t a : clusters[i])
          for (std::size_t b : clusters[j])
            total += (features.row(static_cast<Eigen::Index>(a)) - features.row(static_cast<Eigen::Index>(b))).norm();
        const double d = total / static_cast<double>(clusters[i].size() * clusters[j].size());
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    merges.emplace_back(clusters[bi], clusters[bj]);
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(clusters[bi].begin(), clusters[bi].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return merges;
}

// ---------------------------------------------------------------------------
// Random fixtures

namespace {

struct RandomBuilder {
  Network& net;
  std::mt19937_64& rng;
  const RandomNetworkOptions& opt;
  std::vector<VariableId> vars;

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

  NodeId weighted_sum(const std::vector<NodeId>& children) {
    const NodeId s = net.add_sum();
    std::vector<double> w;
    for (std::size_t i = 0; i < children.size(); ++i) w.push_back(uniform(0.05, 1.0));
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < children.size(); ++i) net.connect(s, children[i], w[i] / total);
    return s;
  }

  NodeId variable_node(const VariableId& v) {
    const std::size_t states = v.kind == VariableKind::Part ? 2 : 4;
    std::vector<std::uint8_t> order(states);
    std::iota(order.begin(), order.end(), std::uint8_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(1 + pick(states));
    std::vector<NodeId> leaves;
    for (std::uint8_t st : order)
      leaves.push_back(v.kind == VariableKind::Part
                           ? net.part_leaf(v.a, static_cast<Polarity>(st), v.region)
                           : net.spatial_leaf(v.pair_key(), static_cast<SpatialRelation>(st), v.region));
    if (leaves.size() == 1 && uniform(0, 1) < 0.5) return leaves[0];
    return weighted_sum(leaves);
  }

  NodeId build(std::vector<std::size_t> scope, int depth) {
    if (scope.size() == 1) {
      if (depth < opt.max_depth && uniform(0, 1) < 0.3) {
        std::vector<NodeId> kids{variable_node(vars[scope[0]]), variable_node(vars[scope[0]])};
        return weighted_sum(kids);
      }
      return variable_node(vars[scope[0]]);
    }
    if (depth < opt.max_depth && uniform(0, 1) < 0.4) {
      const std::size_t k = 2 + pick(2);
      std::vector<NodeId> kids;
      for (std::size_t i = 0; i < k; ++i) kids.push_back(build(scope, depth + 1));
      return weighted_sum(kids);
    }
    std::shuffle(scope.begin(), scope.end(), rng);
    const std::size_t parts = std::min<std::size_t>(scope.size(), 2 + pick(2));
    std::vector<std::vector<std::size_t>> split(parts);
    for (std::size_t i = 0; i < scope.size(); ++i) split[i < parts ? i : pick(parts)].push_back(scope[i]);
    std::vector<NodeId> kids;
    for (auto& s : split) kids.push_back(build(s, depth + 1));
    const NodeId p = net.add_product();
    for (NodeId c : kids) net.connect(p, c);
    return p;
  }
};

}  // namespace

Network random_network(std::mt19937_64& rng, const RandomNetworkOptions& options) {
  Network net;
  net.add_region(Region::whole());
  RandomBuilder b{net, rng, options, {}};
  const std::size_t parts = 1 + b.pick(std::max<std::size_t>(options.max_parts, 1));
  std::size_t pairs = options.max_pairs == 0 ? 0 : b.pick(options.max_pairs + 1);
  pairs = std::min(pairs, kOracleMaxVariables - std::min(parts, kOracleMaxVariables));
  for (PartId p = 0; p < parts; ++p) b.vars.push_back(VariableId::part(p));
  std::set<PairKey> used;
  const PartId span = static_cast<PartId>(std::max<std::size_t>(parts, 2));
  pairs = std::min<std::size_t>(pairs, pair_count(span));
  while (used.size() < pairs) {
    const PartId a = static_cast<PartId>(b.pick(span)), c = static_cast<PartId>(b.pick(span));
    if (a == c) continue;
    if (used.insert(PairKey::make(a, c)).second) b.vars.push_back(VariableId::pair(PairKey::make(a, c)));
  }
  std::vector<std::size_t> scope(b.vars.size());
  std::iota(scope.begin(), scope.end(), 0);
  net.set_root(b.build(scope, 0));
  return net;
}

IndicatorValues random_evidence(const Network& net, std::mt19937_64& rng) {
  IndicatorValues ev(net.variables().size());
  std::uniform_int_distribution<int> third(0, 2);
  for (std::uint32_t v = 0; v < net.variables().size(); ++v) {
    const bool marginal = third(rng) == 0;
    if (net.variables()[v].kind == VariableKind::Part) {
      if (marginal) ev.marginalize_part(v);
      else ev.set_part(v, third(rng) != 0);
    } else if (marginal) {
      ev.marginalize_pair(v);
    } else {
      const auto& states = realizable_relation_states();
      const auto& row = states[std::uniform_int_distribution<std::size_t>(0, states.size() - 1)(rng)];
      for (int c = 0; c < 4; ++c) ev.matrix()(v, c) = row[c];
    }
  }
  return ev;
}

PlantedBlobs planted_blobs(std::size_t per_blob, std::size_t dim, double separation_sigmas, std::uint64_t seed) {
  if (dim < 2) throw Error(ErrorKind::Contract, "planted blobs need at least two dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double h = separation_sigmas / 2.0;
  const double corners[4][2] = {{-h, -h}, {h, -h}, {-h, h}, {h, h}};
  std::vector<std::size_t> order(4 * per_blob);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  PlantedBlobs out;
  out.features.resize(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(dim));
  out.blob.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t b = order[i] / per_blob;
    out.blob[i] = b;
    for (std::size_t d = 0; d < dim; ++d)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          (d < 2 ? corners[b][d] : 0.0) + noise(rng);
  }
  return out;
}

}  // namespace hsspn
