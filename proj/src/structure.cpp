#include "hsspn/structure.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hsspn/spatial.hpp"

namespace hsspn {

void validate(const StructureConfig& c) {
  auto fail = [](const char* field, const std::string& msg) {
    throw Error(ErrorKind::Spec, fmt::format("field '{}': {}", field, msg));
  };
  if (c.s < 2) fail("s", "a partition needs at least 2 sub-images");
  if (c.M == 0) fail("M", "must be at least 1");
  if (c.m == 0 || c.m >= c.M) fail("m", fmt::format("need 1 <= m < M, got m={} M={}", c.m, c.M));
  if (c.D < 1) fail("D", "depth must be at least 1");
  if (!(c.min_region_area > 0 && c.min_region_area <= 1)) fail("min_region_area", "must lie in (0, 1]");
  if (!(c.tau >= 0 && c.tau <= 1)) fail("tau", "must lie in [0, 1]");
  if (!(c.l2 >= 0)) fail("l2", "must be non-negative");
  if (c.classifier_iterations < 1) fail("classifier_iterations", "must be positive");
  if (!(c.classifier_step > 0)) fail("classifier_step", "must be positive");
}

int min_region_cells(const StructureConfig& c) {
  return std::max(1, static_cast<int>(std::ceil(c.min_region_area * Region::kGrid * Region::kGrid - 1e-9)));
}

std::uint64_t partition_hash(const Partition& p) {
  Fnv1a h;
  auto add = [&](const Region& r) { h.add(static_cast<std::uint64_t>(r.x0)).add(r.y0).add(r.x1).add(r.y1); };
  add(p.parent);
  for (const Region& r : p.children) add(r);
  return h.value();
}

namespace {

Partition cut_partition(const Region& parent, bool vertical, const std::vector<int>& cuts) {
  Partition p{parent, {}};
  int lo = vertical ? parent.x0 : parent.y0;
  auto strip = [&](int a, int b) {
    return vertical ? Region{a, parent.y0, b, parent.y1} : Region{parent.x0, a, parent.x1, b};
  };
  for (int c : cuts) {
    p.children.push_back(strip(lo, c));
    lo = c;
  }
  p.children.push_back(strip(lo, vertical ? parent.x1 : parent.y1));
  return p;
}

void enumerate_cuts(int lo, int hi, int min_width, std::size_t remaining, std::vector<int>& cur,
                    std::vector<std::vector<int>>& out) {
  if (remaining == 0) {
    if (hi - lo >= min_width) out.push_back(cur);
    return;
  }
  for (int c = lo + min_width; c <= hi - min_width * static_cast<int>(remaining); ++c) {
    cur.push_back(c);
    enumerate_cuts(c, hi, min_width, remaining - 1, cur, out);
    cur.pop_back();
  }
}

std::vector<std::vector<int>> orientation_family(const Region& r, bool vertical, std::size_t s, int min_cells) {
  const int across = vertical ? r.height() : r.width();
  const int min_width = std::max(1, (min_cells + across - 1) / across);
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  enumerate_cuts(vertical ? r.x0 : r.y0, vertical ? r.x1 : r.y1, min_width, s - 1, cur, out);
  return out;
}

}  // namespace

std::vector<Partition> partition_family(const Region& region, std::size_t s, int min_cells) {
  if (s <= 1) return {Partition{region, {region}}};
  std::vector<Partition> out;
  for (bool vertical : {true, false})
    for (const auto& cuts : orientation_family(region, vertical, s, min_cells))
      out.push_back(cut_partition(region, vertical, cuts));
  return out;
}

std::vector<Partition> sample_partitions(const Region& region, const StructureConfig& config, std::mt19937_64& rng) {
  if (config.s <= 1) return {Partition{region, {region}}};
  const int min_cells = min_region_cells(config);
  if (region.cells() < static_cast<int>(config.s) * min_cells) return {};
  const auto vertical = orientation_family(region, true, config.s, min_cells);
  const auto horizontal = orientation_family(region, false, config.s, min_cells);
  if (vertical.size() + horizontal.size() <= config.M) return partition_family(region, config.s, min_cells);

  std::vector<Partition> out;
  std::set<std::pair<bool, std::vector<int>>> seen;
  std::bernoulli_distribution coin(0.5);
  while (out.size() < config.M) {
    bool v = coin(rng);
    if (vertical.empty()) v = false;
    if (horizontal.empty()) v = true;
    const auto& fam = v ? vertical : horizontal;
    const auto& cuts = fam[std::uniform_int_distribution<std::size_t>(0, fam.size() - 1)(rng)];
    if (seen.insert({v, cuts}).second) out.push_back(cut_partition(region, v, cuts));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proxy classifier

namespace {

struct SplitIndex {
  std::vector<std::size_t> train, test;
};

SplitIndex stratified_split(const Dataset& data, std::uint64_t seed) {
  SplitIndex s;
  std::mt19937_64 rng(Fnv1a().add(seed).add(0x5eedu).value());
  for (ClassId c = 0; c < data.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.records.size(); ++i)
      if (data.records[i].label == c) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto cut = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(idx.size())));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Eigen::MatrixXd region_features(const Partition& p, const Dataset& data, const std::vector<std::size_t>& rows) {
  const auto t = static_cast<Eigen::Index>(data.num_parts);
  const auto dims = t * static_cast<Eigen::Index>(p.children.size()) + 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), dims);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ImageRecord& img = data.records[rows[i]];
    const auto r = static_cast<Eigen::Index>(i);
    x(r, dims - 1) = 1.0;
    for (const Detection& d : img.detections) {
      const double nx = d.at.x / img.width, ny = d.at.y / img.height;
      for (std::size_t c = 0; c < p.children.size(); ++c)
        if (p.children[c].contains(nx, ny)) {
          x(r, static_cast<Eigen::Index>(c) * t + d.part) = 1.0;
          break;
        }
    }
  }
  return x;
}

}  // namespace

PartitionScore score_partition(const Partition& partition, const Dataset& data, ClassId cls,
                               const StructureConfig& config) {
  const SplitIndex split = stratified_split(data, config.seed);
  auto labels = [&](const std::vector<std::size_t>& rows) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.records[rows[i]].label == cls;
    return y;
  };
  const Eigen::VectorXd ytr = labels(split.train), yte = labels(split.test);
  const double pos = ytr.sum(), neg = static_cast<double>(ytr.size()) - pos;
  const double test_pos = yte.sum(), test_neg = static_cast<double>(yte.size()) - test_pos;
  if (pos + test_pos < 4)
    throw Error(ErrorKind::InsufficientData, fmt::format("class {} has fewer than 4 positive images", cls));
  if (pos < 1 || neg < 1 || test_pos < 1 || test_neg < 1)
    throw Error(ErrorKind::InsufficientData, fmt::format("class {} lacks positives or negatives in a split", cls));

  const Eigen::MatrixXd xtr = region_features(partition, data, split.train);
  const Eigen::MatrixXd xte = region_features(partition, data, split.test);
  // Class-balanced sample weights summing to one.
  const Eigen::VectorXd sw = ytr.unaryExpr([&](double y) { return y > 0.5 ? 0.5 / pos : 0.5 / neg; });

  Eigen::VectorXd w = Eigen::VectorXd::Zero(xtr.cols());
  for (int it = 0; it < config.classifier_iterations; ++it) {
    const Eigen::VectorXd p = ((-(xtr * w)).array().exp() + 1.0).inverse().matrix();
    Eigen::VectorXd grad = xtr.transpose() * (sw.array() * (p - ytr).array()).matrix();
    grad.head(grad.size() - 1) += config.l2 * w.head(w.size() - 1);
    w -= config.classifier_step * grad;
  }
  const Eigen::VectorXd score = xte * w;
  double tp = 0, tn = 0;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    const bool predicted = score[i] > 0.0;
    if (yte[i] > 0.5 && predicted) ++tp;
    if (yte[i] < 0.5 && !predicted) ++tn;
  }
  return {partition, 0.5 * (tp / test_pos + tn / test_neg)};
}

// ---------------------------------------------------------------------------
// Partition tree

std::vector<Region> PartitionTree::leaf_regions() const {
  std::set<Region> out;
  for (const Node& n : nodes)
    if (n.leaf()) out.insert(n.region);
  return {out.begin(), out.end()};
}

namespace {

std::uint64_t region_seed(std::uint64_t seed, const Region& r, int depth) {
  return Fnv1a().add(seed).add(static_cast<std::uint64_t>(r.x0)).add(r.y0).add(r.x1).add(r.y1).add(depth).value();
}

struct TreeBuilder {
  const Dataset& data;
  ClassId cls;
  const StructureConfig& config;
  PartitionTree tree;
  std::map<std::pair<Region, int>, std::size_t> memo;

  std::size_t node(const Region& region, int depth) {
    if (auto it = memo.find({region, depth}); it != memo.end()) return it->second;
    const std::size_t id = tree.nodes.size();
    tree.nodes.push_back({region, depth, {}});
    memo[{region, depth}] = id;
    if (depth >= config.D) return id;

    std::mt19937_64 rng(region_seed(config.seed, region, depth));
    std::vector<PartitionScore> scored;
    for (const Partition& p : sample_partitions(region, config, rng))
      scored.push_back(score_partition(p, data, cls, config));
    std::sort(scored.begin(), scored.end(), [](const PartitionScore& a, const PartitionScore& b) {
      if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
      return partition_hash(a.partition) < partition_hash(b.partition);
    });
    if (scored.size() > config.m) scored.resize(config.m);

    std::vector<PartitionTree::Kept> kept;
    for (PartitionScore& sc : scored) {
      PartitionTree::Kept k{sc.partition, sc.accuracy, {}};
      for (const Region& child : sc.partition.children) k.children.push_back(node(child, depth + 1));
      kept.push_back(std::move(k));
    }
    tree.nodes[id].partitions = std::move(kept);
    return id;
  }
};

}  // namespace

PartitionTree learn_partition_tree(const Dataset& data, ClassId cls, const StructureConfig& config) {
  validate(config);
  TreeBuilder b{data, cls, config, {}, {}};
  b.node(Region::whole(), 0);
  return std::move(b.tree);
}

PartitionTree single_level_tree(const std::vector<Partition>& partitions) {
  PartitionTree tree;
  tree.nodes.push_back({Region::whole(), 0, {}});
  std::map<Region, std::size_t> leaves;
  for (const Partition& p : partitions) {
    PartitionTree::Kept k{p, 1.0, {}};
    for (const Region& r : p.children) {
      auto [it, inserted] = leaves.try_emplace(r, tree.nodes.size());
      if (inserted) tree.nodes.push_back({r, 1, {}});
      k.children.push_back(it->second);
    }
    tree.nodes[0].partitions.push_back(std::move(k));
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Network construction

namespace {

NodeId presence_sum(Network& net, PartId p, RegionId region) {
  const NodeId pos = net.part_leaf(p, Polarity::Positive, region);
  const NodeId neg = net.part_leaf(p, Polarity::Negative, region);
  const NodeId s = net.add_sum();
  net.connect(s, pos, 0.5);
  net.connect(s, neg, 0.5);
  return s;
}

NodeId background_product(Network& net, const std::vector<PartId>& parts, RegionId region) {
  std::vector<NodeId> sums;
  for (PartId p : parts) sums.push_back(presence_sum(net, p, region));
  const NodeId prod = net.add_product();
  for (NodeId s : sums) net.connect(prod, s);
  return prod;
}

NodeId uniform_sum(Network& net, const std::vector<NodeId>& children) {
  const NodeId s = net.add_sum();
  for (NodeId c : children) net.connect(s, c, 1.0 / static_cast<double>(children.size()));
  return s;
}

struct NetworkBuilder {
  const PartitionTree& tree;
  const Dataset& data;
  ClassId cls;
  const StructureConfig& config;
  Network net;
  BuildStats stats;
  std::vector<const ImageRecord*> positives;
  std::map<Region, NodeId> leaf_memo;
  std::map<std::size_t, NodeId> node_memo;

  NodeId leaf_region(const Region& r) {
    if (auto it = leaf_memo.find(r); it != leaf_memo.end()) return it->second;
    const RegionId rid = net.add_region(r);
    const double n = static_cast<double>(positives.size());
    std::vector<std::vector<bool>> present(data.num_parts, std::vector<bool>(positives.size()));
    std::vector<PartId> parts;
    for (PartId p = 0; p < data.num_parts; ++p) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < positives.size(); ++i)
        if ((present[p][i] = positives[i]->has(p, r))) ++hits;
      if (n > 0 && static_cast<double>(hits) / n >= config.tau && hits > 0) parts.push_back(p);
    }
    NodeId out;
    if (parts.empty()) {
      out = net.add_constant();
      ++stats.constant_leaves;
    } else {
      std::vector<NodeId> children;
      for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::size_t j = i + 1; j < parts.size(); ++j) {
          std::size_t both = 0;
          for (std::size_t k = 0; k < positives.size(); ++k) both += present[parts[i]][k] && present[parts[j]][k];
          if (static_cast<double>(both) / n < config.tau || both == 0) continue;
          children.push_back(build_pair_gadget(net, PairKey::make(parts[i], parts[j]), rid).sum);
          ++stats.gadgets;
        }
      children.push_back(background_product(net, parts, rid));
      out = uniform_sum(net, children);
    }
    return leaf_memo[r] = out;
  }

  NodeId node(std::size_t idx) {
    if (auto it = node_memo.find(idx); it != node_memo.end()) return it->second;
    const PartitionTree::Node& tn = tree.nodes.at(idx);
    NodeId out;
    if (tn.leaf()) {
      out = leaf_region(tn.region);
    } else {
      net.add_region(tn.region);
      std::vector<NodeId> products;
      for (const PartitionTree::Kept& k : tn.partitions) {
        std::vector<NodeId> parts;
        for (std::size_t c : k.children) parts.push_back(node(c));
        const NodeId prod = net.add_product();
        for (NodeId c : parts) net.connect(prod, c);
        products.push_back(prod);
        net.add_partition(k.partition);
      }
      out = uniform_sum(net, products);
    }
    return node_memo[idx] = out;
  }
};

}  // namespace

Network build_class_network(const PartitionTree& tree, const Dataset& data, ClassId cls,
                            const StructureConfig& config, BuildStats* stats) {
  if (tree.nodes.empty()) throw Error(ErrorKind::Contract, "empty partition tree");
  NetworkBuilder b{tree, data, cls, config, {}, {}, data.of_class(cls), {}, {}};
  b.net.add_region(Region::whole());
  b.net.set_root(b.node(0));
  b.net.set_label(cls);
  if (stats) *stats = b.stats;
  return std::move(b.net);
}

Network build_bag_network(std::size_t num_parts, ClassId cls) {
  Network net;
  net.add_region(Region::whole());
  std::vector<PartId> parts(num_parts);
  std::iota(parts.begin(), parts.end(), PartId{0});
  net.set_root(parts.empty() ? net.add_constant() : background_product(net, parts, 0));
  net.set_label(cls);
  return net;
}

Network build_flat_network(std::size_t num_parts, ClassId cls) {
  Network net;
  net.add_region(Region::whole());
  if (num_parts == 0) {
    net.set_root(net.add_constant());
  } else {
    std::vector<NodeId> children;
    for (PartId a = 0; a < num_parts; ++a)
      for (PartId b = a + 1; b < num_parts; ++b) children.push_back(build_pair_gadget(net, {a, b}, 0).sum);
    std::vector<PartId> parts(num_parts);
    std::iota(parts.begin(), parts.end(), PartId{0});
    children.push_back(background_product(net, parts, 0));
    net.set_root(uniform_sum(net, children));
  }
  net.set_label(cls);
  return net;
}

// ---------------------------------------------------------------------------
// Sharing

std::vector<std::uint64_t> node_signatures(const Network& net) {
  std::vector<std::uint64_t> sig(net.size());
  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    Fnv1a h;
    h.add(static_cast<std::uint64_t>(n.kind));
    if (n.kind == NodeKind::PartIndicator || n.kind == NodeKind::SpatialIndicator) {
      const VariableId& v = net.variables().at(n.variable);
      const Region& r = net.regions().at(v.region);
      h.add(static_cast<std::uint64_t>(v.kind)).add(v.a).add(v.b);
      h.add(static_cast<std::uint64_t>(r.x0)).add(r.y0).add(r.x1).add(r.y1).add(n.state);
    } else if (!n.is_leaf()) {
      std::vector<std::uint64_t> kids;
      for (EdgeId e : n.children) kids.push_back(sig.at(net.edge(e).child));
      std::sort(kids.begin(), kids.end());
      for (auto k : kids) h.add(k);
      if (n.kind == NodeKind::Sum && !n.children.empty()) {
        EdgeId top = n.children.front();
        for (EdgeId e : n.children)
          if (net.weight(e) > net.weight(top)) top = e;
        h.add(0xd0u).add(sig[net.edge(top).child]);
      }
    }
    sig[id] = h.value();
  }
  return sig;
}

std::vector<SharedGroup> find_shared_structures(std::vector<Network>& networks) {
  std::map<std::uint64_t, std::vector<std::pair<std::size_t, EdgeId>>> by_sig;
  for (std::size_t k = 0; k < networks.size(); ++k) {
    Network& net = networks[k];
    net.clear_shared();
    const auto sig = node_signatures(net);
    const auto sc = scopes(net);
    for (EdgeId e = 0; e < net.edges().size(); ++e) {
      const Edge& edge = net.edge(e);
      if (sc[edge.parent].empty()) continue;
      by_sig[Fnv1a().add(sig[edge.parent]).add(sig[edge.child]).value()].emplace_back(k, e);
    }
  }
  std::vector<SharedGroup> groups;
  for (auto& [s, members] : by_sig) {
    std::set<std::size_t> nets;
    for (auto [k, e] : members) nets.insert(k);
    if (nets.size() < 2) continue;
    for (auto [k, e] : members) networks[k].mark_shared(e);
    if (networks[members.front().first].node(networks[members.front().first].edge(members.front().second).parent).kind ==
        NodeKind::Sum)
      groups.push_back({s, members});
  }
  return groups;
}

std::size_t gadget_count(const Network& net) {
  std::size_t count = 0;
  for (const Node& n : net.nodes()) {
    if (n.kind != NodeKind::Sum || n.children.size() != 4) continue;
    const bool gadget = std::all_of(n.children.begin(), n.children.end(), [&](EdgeId e) {
      const Node& p = net.node(net.edge(e).child);
      if (p.kind != NodeKind::Product) return false;
      return std::any_of(p.children.begin(), p.children.end(),
                         [&](EdgeId c) { return net.node(net.edge(c).child).kind == NodeKind::SpatialIndicator; });
    });
    count += gadget;
  }
  return count;
}

std::size_t modeled_pair_count(const Network& net) {
  std::set<PairKey> pairs;
  for (const VariableId& v : net.variables())
    if (v.kind == VariableKind::SpatialPair) pairs.insert(v.pair_key());
  return pairs.size();
}

}  // namespace hsspn
