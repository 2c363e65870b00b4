#include "hsspn/network.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "hsspn/spatial.hpp"

namespace hsspn {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::MalformedRecord: return "malformed record";
    case ErrorKind::IncompleteEvidence: return "incomplete evidence";
    case ErrorKind::DegenerateNode: return "degenerate node";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::Mismatch: return "mismatch";
    case ErrorKind::SizeGuard: return "size guard";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Spec: return "spec error";
  }
  return "error";
}

const char* to_string(SpatialRelation r) {
  switch (r) {
    case SpatialRelation::LeftOf: return "left";
    case SpatialRelation::RightOf: return "right";
    case SpatialRelation::Above: return "above";
    case SpatialRelation::Below: return "below";
  }
  return "?";
}

SpatialRelation relation_from_string(const std::string& s) {
  for (SpatialRelation r : kAllRelations)
    if (s == to_string(r)) return r;
  throw Error(ErrorKind::Parse, "unknown spatial relation '" + s + "'");
}

std::string to_string(const Region& r) {
  return fmt::format("[{},{})x[{},{})", r.x0, r.x1, r.y0, r.y1);
}

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Sum: return "sum";
    case NodeKind::Product: return "product";
    case NodeKind::PartIndicator: return "part";
    case NodeKind::SpatialIndicator: return "spatial";
    case NodeKind::Constant: return "const";
  }
  return "?";
}

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Structure: return "structure";
    case ViolationKind::Cycle: return "acyclicity";
    case ViolationKind::Unreachable: return "reachability";
    case ViolationKind::Decomposability: return "decomposability";
    case ViolationKind::Completeness: return "completeness";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Network

NodeId Network::add_node(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Network::add_sum() { return add_node({NodeKind::Sum, kInvalidId, 0, {}}); }
NodeId Network::add_product() { return add_node({NodeKind::Product, kInvalidId, 0, {}}); }
NodeId Network::add_constant() { return add_node({NodeKind::Constant, kInvalidId, 0, {}}); }

RegionId Network::add_region(const Region& r) {
  auto it = std::find(regions_.begin(), regions_.end(), r);
  if (it != regions_.end()) return static_cast<RegionId>(it - regions_.begin());
  regions_.push_back(r);
  return static_cast<RegionId>(regions_.size() - 1);
}

std::uint32_t Network::add_variable(const VariableId& v) {
  auto [it, inserted] = variable_index_.try_emplace(v, static_cast<std::uint32_t>(variables_.size()));
  if (inserted) variables_.push_back(v);
  return it->second;
}

NodeId Network::part_leaf(PartId part, Polarity polarity, RegionId region) {
  if (regions_.empty()) add_region(Region::whole());
  const auto var = add_variable(VariableId::part(part, region));
  const auto key = std::make_tuple(var, static_cast<std::uint8_t>(polarity), NodeKind::PartIndicator);
  if (auto it = leaf_index_.find(key); it != leaf_index_.end()) return it->second;
  Node n{NodeKind::PartIndicator, var, static_cast<std::uint8_t>(polarity), {}};
  return leaf_index_[key] = add_node(std::move(n));
}

NodeId Network::spatial_leaf(PairKey pair, SpatialRelation relation, RegionId region) {
  if (regions_.empty()) add_region(Region::whole());
  const auto var = add_variable(VariableId::pair(pair, region));
  const auto key = std::make_tuple(var, static_cast<std::uint8_t>(relation), NodeKind::SpatialIndicator);
  if (auto it = leaf_index_.find(key); it != leaf_index_.end()) return it->second;
  Node n{NodeKind::SpatialIndicator, var, static_cast<std::uint8_t>(relation), {}};
  return leaf_index_[key] = add_node(std::move(n));
}

EdgeId Network::connect(NodeId parent, NodeId child, double weight) {
  if (parent >= nodes_.size() || child >= nodes_.size())
    throw Error(ErrorKind::Contract, fmt::format("edge {} -> {} references a missing node", parent, child));
  const auto id = static_cast<EdgeId>(edges_.size());
  edges_.push_back({parent, child, weight});
  nodes_[parent].children.push_back(id);
  if (child >= parent) sorted_ = false;
  return id;
}

std::vector<EdgeId> Network::sum_edges() const {
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < edges_.size(); ++e)
    if (nodes_[edges_[e].parent].kind == NodeKind::Sum) out.push_back(e);
  return out;
}

bool Network::operator==(const Network& o) const {
  if (nodes_.size() != o.nodes_.size() || edges_.size() != o.edges_.size()) return false;
  if (root_ != o.root_ || label_ != o.label_ || shared_ != o.shared_) return false;
  if (regions_ != o.regions_ || partitions_ != o.partitions_) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& a = nodes_[i];
    const Node& b = o.nodes_[i];
    if (a.kind != b.kind || a.state != b.state || a.children != b.children) return false;
    if (a.is_leaf() && a.kind != NodeKind::Constant &&
        variables_[a.variable] != o.variables_[b.variable])
      return false;
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& a = edges_[i];
    const Edge& b = o.edges_[i];
    if (a.parent != b.parent || a.child != b.child) return false;
    const bool weighted = nodes_[a.parent].kind == NodeKind::Sum;
    if (weighted && a.weight != b.weight) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

// Topological order (children first) or nullopt on a cycle. Ignores edges to
// missing nodes.
std::optional<std::vector<NodeId>> children_first_order(const Network& net,
                                                        std::vector<Violation>* cycles) {
  const std::size_t n = net.size();
  std::vector<std::uint8_t> color(n, 0);
  std::vector<NodeId> order;
  order.reserve(n);
  bool cyclic = false;
  for (NodeId start = 0; start < n; ++start) {
    if (color[start]) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{start, 0}};
    color[start] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const auto& kids = net.node(id).children;
      if (next < kids.size()) {
        const EdgeId e = kids[next++];
        if (e >= net.edges().size()) continue;
        const NodeId c = net.edge(e).child;
        if (c >= n) continue;
        if (color[c] == 0) {
          color[c] = 1;
          stack.emplace_back(c, 0);
        } else if (color[c] == 1) {
          cyclic = true;
          if (cycles)
            cycles->push_back({ViolationKind::Cycle, id,
                               fmt::format("edge {} from node {} to node {} closes a cycle", e, id, c)});
        }
      } else {
        color[id] = 2;
        order.push_back(id);
        stack.pop_back();
      }
    }
  }
  if (cyclic) return std::nullopt;
  return order;
}

bool disjoint(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b,
              std::uint32_t* common) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else {
      *common = *i;
      return false;
    }
  }
  return true;
}

std::string describe(const VariableId& v) {
  if (v.kind == VariableKind::Part) return fmt::format("Part(p{}@r{})", v.a, v.region);
  return fmt::format("SpatialPair(p{},p{}@r{})", v.a, v.b, v.region);
}

}  // namespace

bool ValidityReport::valid_scoring_circuit() const {
  return std::all_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.kind == ViolationKind::Completeness; });
}

std::size_t ValidityReport::count(ViolationKind k) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; }));
}

std::vector<std::vector<std::uint32_t>> scopes(const Network& net) {
  auto order = children_first_order(net, nullptr);
  if (!order) throw Error(ErrorKind::Contract, "scopes of a cyclic network");
  std::vector<std::vector<std::uint32_t>> scope(net.size());
  for (NodeId id : *order) {
    const Node& n = net.node(id);
    if (n.kind == NodeKind::PartIndicator || n.kind == NodeKind::SpatialIndicator) {
      scope[id] = {n.variable};
      continue;
    }
    std::vector<std::uint32_t> acc;
    for (EdgeId e : n.children) {
      const auto& cs = scope[net.edge(e).child];
      std::vector<std::uint32_t> merged;
      std::set_union(acc.begin(), acc.end(), cs.begin(), cs.end(), std::back_inserter(merged));
      acc = std::move(merged);
    }
    scope[id] = std::move(acc);
  }
  return scope;
}

ValidityReport validate(const Network& net) {
  ValidityReport report;
  auto& out = report.violations;
  const std::size_t n = net.size();

  if (n == 0 || net.root() >= n) {
    out.push_back({ViolationKind::Structure, net.root(), "root is missing or out of range"});
    return report;
  }
  bool structural_ok = true;
  for (EdgeId e = 0; e < net.edges().size(); ++e) {
    const Edge& edge = net.edge(e);
    if (edge.parent >= n || edge.child >= n) {
      out.push_back({ViolationKind::Structure, edge.parent, fmt::format("edge {} references a missing node", e)});
      structural_ok = false;
      continue;
    }
    if (net.node(edge.parent).kind == NodeKind::Sum && !(edge.weight >= 0.0 && std::isfinite(edge.weight)))
      out.push_back({ViolationKind::Structure, edge.parent,
                     fmt::format("edge {} has invalid weight {}", e, edge.weight)});
  }
  for (NodeId id = 0; id < n; ++id) {
    const Node& node = net.node(id);
    if (node.is_leaf() && !node.children.empty())
      out.push_back({ViolationKind::Structure, id, fmt::format("leaf node {} has children", id)});
    if (!node.is_leaf() && node.children.empty())
      out.push_back({ViolationKind::Structure, id, fmt::format("internal node {} has no children", id)});
    if ((node.kind == NodeKind::PartIndicator || node.kind == NodeKind::SpatialIndicator)) {
      if (node.variable >= net.variables().size()) {
        out.push_back({ViolationKind::Structure, id, fmt::format("leaf {} has no variable", id)});
        structural_ok = false;
      } else {
        const auto expect = node.kind == NodeKind::PartIndicator ? VariableKind::Part : VariableKind::SpatialPair;
        if (net.variables()[node.variable].kind != expect)
          out.push_back({ViolationKind::Structure, id, fmt::format("leaf {} has a variable of the wrong kind", id)});
      }
    }
  }
  if (!structural_ok) return report;

  auto order = children_first_order(net, &out);

  // Reachability from the root.
  std::vector<bool> seen(n, false);
  std::vector<NodeId> stack{net.root()};
  seen[net.root()] = true;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    for (EdgeId e : net.node(id).children) {
      const NodeId c = net.edge(e).child;
      if (!seen[c]) {
        seen[c] = true;
        stack.push_back(c);
      }
    }
  }
  for (NodeId id = 0; id < n; ++id)
    if (!seen[id])
      out.push_back({ViolationKind::Unreachable, id, fmt::format("node {} is not reachable from the root", id)});

  if (!order) return report;

  const auto scope = scopes(net);
  for (NodeId id = 0; id < n; ++id) {
    const Node& node = net.node(id);
    if (node.kind == NodeKind::Product) {
      for (std::size_t i = 0; i < node.children.size(); ++i)
        for (std::size_t j = i + 1; j < node.children.size(); ++j) {
          const NodeId ci = net.edge(node.children[i]).child;
          const NodeId cj = net.edge(node.children[j]).child;
          std::uint32_t common = 0;
          if (!disjoint(scope[ci], scope[cj], &common))
            out.push_back({ViolationKind::Decomposability, id,
                           fmt::format("product node {}: children {} and {} share {}", id, ci, cj,
                                       describe(net.variables()[common]))});
        }
    } else if (node.kind == NodeKind::Sum && !node.children.empty()) {
      const NodeId first = net.edge(node.children.front()).child;
      for (std::size_t i = 1; i < node.children.size(); ++i) {
        const NodeId ci = net.edge(node.children[i]).child;
        if (scope[ci] != scope[first]) {
          out.push_back({ViolationKind::Completeness, id,
                         fmt::format("sum node {}: children {} and {} have different scopes", id, first, ci)});
          break;
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Evidence

double IndicatorValues::leaf_value(const Node& leaf) const {
  switch (leaf.kind) {
    case NodeKind::Constant: return 1.0;
    case NodeKind::PartIndicator:
    case NodeKind::SpatialIndicator:
      if (leaf.variable >= num_variables()) return std::numeric_limits<double>::quiet_NaN();
      return values_(leaf.variable, leaf.state);
    default:
      throw Error(ErrorKind::Contract, "leaf_value on an internal node");
  }
}

bool IndicatorValues::operator==(const IndicatorValues& o) const {
  if (values_.rows() != o.values_.rows()) return false;
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const double a = values_.data()[i];
    const double b = o.values_.data()[i];
    if (!(a == b || (std::isnan(a) && std::isnan(b)))) return false;
  }
  return true;
}

IndicatorValues assignment_to_indicators(const ImageRecord& image, const Network& net,
                                         std::span<const PartId> query_parts, std::size_t num_parts) {
  for (const Detection& d : image.detections) {
    if (!std::isfinite(d.at.x) || !std::isfinite(d.at.y) || d.at.x < 0 || d.at.y < 0 ||
        d.at.x >= image.width || d.at.y >= image.height)
      throw Error(ErrorKind::MalformedRecord,
                  fmt::format("image '{}': part {} has location ({}, {}) outside {}x{}", image.id, d.part,
                              d.at.x, d.at.y, image.width, image.height));
    if (num_parts > 0 && d.part >= num_parts)
      throw Error(ErrorKind::Mismatch,
                  fmt::format("image '{}': part {} is not in the vocabulary of {} parts", image.id, d.part, num_parts));
  }
  auto queried = [&](PartId p) {
    return std::find(query_parts.begin(), query_parts.end(), p) != query_parts.end();
  };

  IndicatorValues ind(net.variables().size());
  for (std::uint32_t v = 0; v < net.variables().size(); ++v) {
    const VariableId& var = net.variables()[v];
    const Region& region = net.regions().at(var.region);
    if (var.kind == VariableKind::Part) {
      if (queried(var.a)) ind.marginalize_part(v);
      else ind.set_part(v, image.has(var.a, region));
      continue;
    }
    ind.marginalize_pair(v);
    if (queried(var.a) || queried(var.b)) continue;
    auto la = image.locate(var.a, region);
    auto lb = image.locate(var.b, region);
    if (!la || !lb) continue;
    const RelationFlags f = compute_relations(*la, *lb);
    for (SpatialRelation r : kAllRelations) ind.relation(v, r) = f[r] ? 1.0 : 0.0;
  }
  return ind;
}

IndicatorValues marginal_indicators(const Network& net) {
  IndicatorValues ind(net.variables().size());
  ind.matrix().setOnes();
  return ind;
}

// ---------------------------------------------------------------------------
// Evaluation

EvaluationResult evaluate(const Network& net, const IndicatorValues& evidence, Combine combine) {
  if (!net.topologically_sorted())
    throw Error(ErrorKind::Contract, "network nodes are not stored in topological order");
  if (net.root() >= net.size()) throw Error(ErrorKind::Contract, "network has no root");

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  EvaluationResult res;
  res.log_values.resize(static_cast<Eigen::Index>(net.size()));
  auto& lv = res.log_values;
  std::vector<double> terms;

  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    switch (n.kind) {
      case NodeKind::Constant:
        lv[id] = 0.0;
        break;
      case NodeKind::PartIndicator:
      case NodeKind::SpatialIndicator: {
        const double v = evidence.leaf_value(n);
        if (std::isnan(v))
          throw Error(ErrorKind::IncompleteEvidence, fmt::format("no indicator value for leaf node {}", id));
        lv[id] = v > 0.0 ? std::log(v) : kNegInf;
        break;
      }
      case NodeKind::Product: {
        double s = 0.0;
        for (EdgeId e : n.children) {
          const double c = lv[net.edge(e).child];
          if (c == kNegInf) {
            s = kNegInf;
            break;
          }
          s += c;
        }
        lv[id] = s;
        break;
      }
      case NodeKind::Sum: {
        terms.clear();
        double m = kNegInf;
        for (EdgeId e : n.children) {
          const Edge& edge = net.edge(e);
          const double c = lv[edge.child];
          const double t = (edge.weight > 0.0 && c != kNegInf) ? std::log(edge.weight) + c : kNegInf;
          terms.push_back(t);
          m = std::max(m, t);
        }
        if (combine == Combine::Max || m == kNegInf) {
          lv[id] = m;
        } else {
          double acc = 0.0;
          for (double t : terms) acc += std::exp(t - m);
          lv[id] = m + std::log(acc);
        }
        break;
      }
    }
  }
  res.root_log = lv[net.root()];
  res.root_value = std::exp(res.root_log);
  return res;
}

Network normalize_weights(Network net) {
  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    if (n.kind != NodeKind::Sum) continue;
    double total = 0.0;
    for (EdgeId e : n.children) total += net.weight(e);
    if (!(total > 0.0) || !std::isfinite(total))
      throw Error(ErrorKind::DegenerateNode, fmt::format("sum node {} has outgoing weight total {}", id, total));
    for (EdgeId e : n.children) net.set_weight(e, net.weight(e) / total);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Model file

std::string serialize(const Network& net) {
  std::string out = "spn-model v1\n";
  if (net.label()) out += fmt::format("class {}\n", *net.label());
  for (RegionId r = 0; r < net.regions().size(); ++r) {
    const Region& g = net.regions()[r];
    out += fmt::format("region {} {} {} {} {}\n", r, g.x0, g.y0, g.x1, g.y1);
  }
  for (const Partition& p : net.partitions()) {
    out += fmt::format("partition {} {} {} {}", p.parent.x0, p.parent.y0, p.parent.x1, p.parent.y1);
    for (const Region& c : p.children) out += fmt::format(" | {} {} {} {}", c.x0, c.y0, c.x1, c.y1);
    out += '\n';
  }
  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    switch (n.kind) {
      case NodeKind::Sum:
      case NodeKind::Product:
      case NodeKind::Constant:
        out += fmt::format("node {} {}\n", id, to_string(n.kind));
        break;
      case NodeKind::PartIndicator: {
        const VariableId& v = net.variables()[n.variable];
        out += fmt::format("node {} part {} {} {}\n", id, v.a, v.region,
                           n.polarity() == Polarity::Positive ? "pos" : "neg");
        break;
      }
      case NodeKind::SpatialIndicator: {
        const VariableId& v = net.variables()[n.variable];
        out += fmt::format("node {} spatial {} {} {} {}\n", id, v.a, v.b, v.region, to_string(n.relation()));
        break;
      }
    }
  }
  for (const Edge& e : net.edges()) {
    if (net.node(e.parent).kind == NodeKind::Sum)
      out += fmt::format("edge {} {} {}\n", e.parent, e.child, e.weight);
    else
      out += fmt::format("edge {} {}\n", e.parent, e.child);
  }
  out += fmt::format("root {}\n", net.root());
  for (EdgeId e : net.shared_edges()) out += fmt::format("shared {}\n", e);
  return out;
}

namespace {

struct LineReader {
  std::istringstream in;
  std::size_t line_no;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::Parse, fmt::format("line {}: {}", line_no, msg));
  }
  template <typename T>
  T take(const char* what) {
    T v{};
    if (!(in >> v)) fail(fmt::format("expected {}", what));
    return v;
  }
  double take_weight() {
    std::string tok;
    if (!(in >> tok)) fail("expected weight");
    char* end = nullptr;
    const double w = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') fail("weight '" + tok + "' is not a number");
    if (!std::isfinite(w)) fail("weight '" + tok + "' is not finite");
    if (w < 0.0) fail("weight '" + tok + "' is negative");
    return w;
  }
  void finish() {
    std::string extra;
    if (in >> extra) fail("unexpected token '" + extra + "'");
  }
};

Region read_rect(LineReader& r) {
  Region g;
  g.x0 = r.take<int>("x0");
  g.y0 = r.take<int>("y0");
  g.x1 = r.take<int>("x1");
  g.y1 = r.take<int>("y1");
  if (!g.valid()) r.fail("invalid region rectangle");
  return g;
}

}  // namespace

Network deserialize(std::string_view text) {
  Network net;
  std::istringstream src{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  bool have_root = false;
  std::vector<Region> regions;
  std::vector<std::pair<EdgeId, std::size_t>> shared;

  while (std::getline(src, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    LineReader r{std::istringstream(line), line_no};
    std::string tag;
    r.in >> tag;
    if (!header) {
      std::string version;
      r.in >> version;
      if (tag != "spn-model") r.fail("missing 'spn-model' header");
      if (version != "v1") r.fail("unsupported model version '" + version + "'");
      header = true;
      continue;
    }
    if (have_root && tag != "shared") r.fail("'" + tag + "' after the root line");
    if (tag == "class") {
      net.set_label(r.take<ClassId>("class id"));
    } else if (tag == "region") {
      const auto id = r.take<RegionId>("region id");
      if (id != regions.size()) r.fail("region ids must be dense and ascending");
      regions.push_back(read_rect(r));
      if (net.add_region(regions.back()) != id) r.fail("duplicate region");
    } else if (tag == "partition") {
      Partition p;
      p.parent = read_rect(r);
      std::string bar;
      while (r.in >> bar) {
        if (bar != "|") r.fail("expected '|' between partition rectangles");
        p.children.push_back(read_rect(r));
      }
      net.add_partition(std::move(p));
    } else if (tag == "node") {
      const auto id = r.take<NodeId>("node id");
      if (id != net.size()) r.fail("node ids must be dense and ascending");
      const auto kind = r.take<std::string>("node kind");
      if (kind == "sum") net.add_sum();
      else if (kind == "product") net.add_product();
      else if (kind == "const") net.add_constant();
      else if (kind == "part") {
        const auto part = r.take<PartId>("part id");
        const auto region = r.take<RegionId>("region id");
        const auto pol = r.take<std::string>("polarity");
        if (region >= regions.size() && !(region == 0 && regions.empty())) r.fail("unknown region");
        if (pol != "pos" && pol != "neg") r.fail("polarity must be pos or neg");
        const auto before = net.size();
        net.part_leaf(part, pol == "pos" ? Polarity::Positive : Polarity::Negative, region);
        if (net.size() == before) r.fail("duplicate indicator leaf");
      } else if (kind == "spatial") {
        const auto a = r.take<PartId>("part a");
        const auto b = r.take<PartId>("part b");
        const auto region = r.take<RegionId>("region id");
        const auto rel = r.take<std::string>("relation");
        if (!(a < b)) r.fail("spatial pair must be canonical (a < b)");
        if (region >= regions.size() && !(region == 0 && regions.empty())) r.fail("unknown region");
        SpatialRelation relation{};
        try {
          relation = relation_from_string(rel);
        } catch (const Error&) {
          r.fail("unknown spatial relation '" + rel + "'");
        }
        const auto before = net.size();
        net.spatial_leaf(PairKey{a, b}, relation, region);
        if (net.size() == before) r.fail("duplicate indicator leaf");
      } else {
        r.fail("unknown node kind '" + kind + "'");
      }
    } else if (tag == "edge") {
      const auto parent = r.take<NodeId>("parent id");
      const auto child = r.take<NodeId>("child id");
      if (parent >= net.size() || child >= net.size()) r.fail("edge references an undeclared node");
      const bool weighted = net.node(parent).kind == NodeKind::Sum;
      const double w = weighted ? r.take_weight() : 1.0;
      net.connect(parent, child, w);
    } else if (tag == "root") {
      const auto root = r.take<NodeId>("root id");
      if (root >= net.size()) r.fail("root references an undeclared node");
      net.set_root(root);
      have_root = true;
    } else if (tag == "shared") {
      shared.emplace_back(r.take<EdgeId>("edge id"), line_no);
    } else {
      r.fail("unknown record '" + tag + "'");
    }
    r.finish();
  }
  if (!header) throw Error(ErrorKind::Parse, "empty input: missing 'spn-model v1' header");
  if (!have_root) throw Error(ErrorKind::Parse, fmt::format("line {}: truncated model, no root line", line_no));
  for (auto [e, at] : shared) {
    if (e >= net.edges().size()) throw Error(ErrorKind::Parse, fmt::format("line {}: shared edge {} does not exist", at, e));
    net.mark_shared(e);
  }
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Spec, "cannot write " + path);
  f << serialize(net);
}

Network load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Parse, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

Network two_variable_example() {
  Network net;
  const NodeId x1 = net.part_leaf(0, Polarity::Positive);
  const NodeId nx1 = net.part_leaf(0, Polarity::Negative);
  const NodeId x2 = net.part_leaf(1, Polarity::Positive);
  const NodeId nx2 = net.part_leaf(1, Polarity::Negative);

  auto mix = [&](NodeId pos, NodeId neg, double wp, double wn) {
    const NodeId s = net.add_sum();
    net.connect(s, pos, wp);
    net.connect(s, neg, wn);
    return s;
  };
  const NodeId s1 = mix(x1, nx1, 0.3, 0.7);
  const NodeId s2 = mix(x2, nx2, 0.8, 0.2);
  const NodeId s3 = mix(x1, nx1, 0.4, 0.6);
  const NodeId s4 = mix(x2, nx2, 0.1, 0.9);
  const NodeId p1 = net.add_product();
  net.connect(p1, s1);
  net.connect(p1, s2);
  const NodeId p2 = net.add_product();
  net.connect(p2, s3);
  net.connect(p2, s4);
  const NodeId root = net.add_sum();
  net.connect(root, p1, 0.8);
  net.connect(root, p2, 0.2);
  net.set_root(root);
  return net;
}

}  // namespace hsspn
