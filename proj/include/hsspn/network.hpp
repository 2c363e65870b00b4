#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "hsspn/common.hpp"
#include "hsspn/image.hpp"

namespace hsspn {

enum class NodeKind : std::uint8_t { Sum, Product, PartIndicator, SpatialIndicator, Constant };

const char* to_string(NodeKind k);

enum class VariableKind : std::uint8_t { Part, SpatialPair };

/// A network variable. Part variables mean "part is detected inside region";
/// spatial-pair variables group the four relation indicators of one pair
/// inside one region.
struct VariableId {
  VariableKind kind = VariableKind::Part;
  PartId a = 0;
  PartId b = 0;
  RegionId region = 0;

  static VariableId part(PartId p, RegionId region = 0) { return {VariableKind::Part, p, p, region}; }
  static VariableId pair(PairKey k, RegionId region = 0) {
    return {VariableKind::SpatialPair, k.a, k.b, region};
  }
  PairKey pair_key() const { return {a, b}; }

  auto operator<=>(const VariableId&) const = default;
};

struct Node {
  NodeKind kind = NodeKind::Sum;
  std::uint32_t variable = kInvalidId;  // index into Network::variables() for indicator leaves
  std::uint8_t state = 0;               // Polarity or SpatialRelation for indicator leaves
  std::vector<EdgeId> children;

  bool is_leaf() const { return kind != NodeKind::Sum && kind != NodeKind::Product; }
  Polarity polarity() const { return static_cast<Polarity>(state); }
  SpatialRelation relation() const { return static_cast<SpatialRelation>(state); }
};

struct Edge {
  NodeId parent = 0;
  NodeId child = 0;
  double weight = 1.0;  // meaningful only below Sum nodes
};

/// Rooted weighted DAG of sum, product and indicator nodes.
///
/// Nodes and edges are addressed by dense integer ids that survive
/// serialization. Builders add children before parents, so in a well-formed
/// network every edge points from a higher to a lower node id and a single
/// ascending pass is a topological order.
class Network {
 public:
  NodeId add_sum();
  NodeId add_product();
  NodeId add_constant();
  /// Leaf lookups reuse an existing indicator for the same variable and state.
  NodeId part_leaf(PartId part, Polarity polarity, RegionId region = 0);
  NodeId spatial_leaf(PairKey pair, SpatialRelation relation, RegionId region = 0);

  EdgeId connect(NodeId parent, NodeId child, double weight = 1.0);

  RegionId add_region(const Region& r);
  std::uint32_t add_variable(const VariableId& v);

  void set_root(NodeId root) { root_ = root; }
  NodeId root() const { return root_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<VariableId>& variables() const { return variables_; }
  const std::vector<Region>& regions() const { return regions_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Edge& edge(EdgeId id) const { return edges_.at(id); }
  double weight(EdgeId id) const { return edges_.at(id).weight; }
  void set_weight(EdgeId id, double w) { edges_.at(id).weight = w; }
  std::size_t size() const { return nodes_.size(); }

  std::optional<ClassId> label() const { return label_; }
  void set_label(std::optional<ClassId> c) { label_ = c; }

  const std::set<EdgeId>& shared_edges() const { return shared_; }
  void mark_shared(EdgeId e) { shared_.insert(e); }
  void clear_shared() { shared_.clear(); }

  const std::vector<Partition>& partitions() const { return partitions_; }
  void add_partition(Partition p) { partitions_.push_back(std::move(p)); }

  int format_version() const { return 1; }

  /// True when every edge goes from a higher to a lower node id.
  bool topologically_sorted() const { return sorted_; }

  std::vector<EdgeId> sum_edges() const;

  bool operator==(const Network& o) const;

 private:
  NodeId add_node(Node n);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<VariableId> variables_;
  std::vector<Region> regions_;
  std::vector<Partition> partitions_;
  std::map<VariableId, std::uint32_t> variable_index_;
  std::map<std::tuple<std::uint32_t, std::uint8_t, NodeKind>, NodeId> leaf_index_;
  NodeId root_ = kInvalidId;
  std::optional<ClassId> label_;
  std::set<EdgeId> shared_;
  bool sorted_ = true;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind { Structure, Cycle, Unreachable, Decomposability, Completeness };

const char* to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  NodeId node;
  std::string detail;
};

struct ValidityReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  /// Valid except for completeness: the relaxed contract of spatial scoring
  /// circuits whose mixture nodes combine different regions.
  bool valid_scoring_circuit() const;
  std::size_t count(ViolationKind k) const;
};

ValidityReport validate(const Network& net);

/// Per-node scope as sorted variable indices. Requires an acyclic network.
std::vector<std::vector<std::uint32_t>> scopes(const Network& net);

// ---------------------------------------------------------------------------
// Evidence

/// One row per network variable. Part rows use columns 0 (x) and 1 (x̄);
/// spatial rows use the four relation columns in SpatialRelation order.
/// NaN marks a missing value.
class IndicatorValues {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;

  IndicatorValues() = default;
  explicit IndicatorValues(std::size_t num_variables)
      : values_(Matrix::Constant(static_cast<Eigen::Index>(num_variables), 4,
                                 std::numeric_limits<double>::quiet_NaN())) {}

  std::size_t num_variables() const { return static_cast<std::size_t>(values_.rows()); }

  double& part(std::uint32_t var, Polarity p) { return values_(var, static_cast<int>(p)); }
  double part(std::uint32_t var, Polarity p) const { return values_(var, static_cast<int>(p)); }
  double& relation(std::uint32_t var, SpatialRelation r) { return values_(var, static_cast<int>(r)); }
  double relation(std::uint32_t var, SpatialRelation r) const {
    return values_(var, static_cast<int>(r));
  }

  void set_part(std::uint32_t var, bool present) {
    part(var, Polarity::Positive) = present ? 1.0 : 0.0;
    part(var, Polarity::Negative) = present ? 0.0 : 1.0;
  }
  void marginalize_part(std::uint32_t var) {
    part(var, Polarity::Positive) = 1.0;
    part(var, Polarity::Negative) = 1.0;
  }
  void marginalize_pair(std::uint32_t var) { values_.row(var).setOnes(); }

  /// Value seen by an indicator leaf.
  double leaf_value(const Node& leaf) const;

  const Matrix& matrix() const { return values_; }
  Matrix& matrix() { return values_; }

  bool operator==(const IndicatorValues& o) const;

 private:
  Matrix values_;
};

/// Encode an image as evidence for `net`. Part variables are one-hot on
/// presence inside their region, except parts in `query_parts`, which are
/// marginalized. Pair variables carry the geometric relations when both parts
/// are observed in the region and are all ones otherwise.
IndicatorValues assignment_to_indicators(const ImageRecord& image, const Network& net,
                                         std::span<const PartId> query_parts = {},
                                         std::size_t num_parts = 0);

/// Evidence with every variable marginalized.
IndicatorValues marginal_indicators(const Network& net);

// ---------------------------------------------------------------------------
// Evaluation

enum class Combine { Sum, Max };

struct EvaluationResult {
  Eigen::VectorXd log_values;  // per node, natural log; -inf for zero
  double root_log = 0.0;
  double root_value = 0.0;
};

/// Single forward pass in log domain. Sum nodes combine children with a
/// max-shifted log-sum-exp, or a max when `combine` is Max.
EvaluationResult evaluate(const Network& net, const IndicatorValues& evidence,
                          Combine combine = Combine::Sum);

/// Reference evaluation in the linear domain, templated on the scalar type.
template <typename Scalar>
Scalar evaluate_linear(const Network& net, const IndicatorValues& evidence,
                       Combine combine = Combine::Sum) {
  std::vector<Scalar> v(net.size(), Scalar(0));
  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    switch (n.kind) {
      case NodeKind::Constant:
        v[id] = Scalar(1);
        break;
      case NodeKind::PartIndicator:
      case NodeKind::SpatialIndicator:
        v[id] = static_cast<Scalar>(evidence.leaf_value(n));
        break;
      case NodeKind::Product: {
        Scalar p(1);
        for (EdgeId e : n.children) p *= v[net.edge(e).child];
        v[id] = p;
        break;
      }
      case NodeKind::Sum: {
        Scalar s(0);
        for (EdgeId e : n.children) {
          const Scalar term = static_cast<Scalar>(net.edge(e).weight) * v[net.edge(e).child];
          s = combine == Combine::Sum ? s + term : std::max(s, term);
        }
        v[id] = s;
        break;
      }
    }
  }
  return v.at(net.root());
}

/// Divide each sum node's outgoing weights by their total.
Network normalize_weights(Network net);

// ---------------------------------------------------------------------------
// Model file

std::string serialize(const Network& net);
Network deserialize(std::string_view text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

/// The two-variable example network: root sum (0.8, 0.2) over two products of
/// per-variable sums with weights (0.3, 0.7)(0.8, 0.2) and (0.4, 0.6)(0.1, 0.9).
/// Parts 0 and 1 play the roles of x1 and x2.
Network two_variable_example();

}  // namespace hsspn
