#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "hsspn/common.hpp"
#include "hsspn/image.hpp"
#include "hsspn/network.hpp"

namespace hsspn {

struct StructureConfig {
  std::size_t s = 3;  // sub-images per partition
  std::size_t M = 50;  // candidates sampled per region
  std::size_t m = 3;   // partitions kept per region
  int D = 2;           // recursion depth
  double min_region_area = 0.04;
  double tau = 0.2;  // co-occurrence threshold among positives
  std::uint64_t seed = 1;

  // proxy classifier
  double l2 = 1e-3;
  int classifier_iterations = 200;
  double classifier_step = 1.0;
};

/// Throws Error(Spec) naming the offending field.
void validate(const StructureConfig& config);

/// Smallest admissible region size in grid cells.
int min_region_cells(const StructureConfig& config);

std::uint64_t partition_hash(const Partition& p);

/// All strip partitions of `region` into `s` children of at least the minimum
/// area, vertical cuts first, each orientation in lexicographic cut order.
std::vector<Partition> partition_family(const Region& region, std::size_t s, int min_cells);

/// Up to M distinct strip partitions: orientation uniform, then s-1 cut
/// positions without replacement on the grid. Returns the whole family when it
/// has at most M members, and an empty list when no admissible cut exists.
std::vector<Partition> sample_partitions(const Region& region, const StructureConfig& config, std::mt19937_64& rng);

struct PartitionScore {
  Partition partition;
  double accuracy = 0.0;
};

/// Held-out balanced accuracy of a logistic classifier on the concatenated
/// per-child part-presence vectors, one-vs-rest for `cls`, on a seeded 70/30
/// split stratified by image label.
PartitionScore score_partition(const Partition& partition, const Dataset& data, ClassId cls,
                               const StructureConfig& config);

struct PartitionTree {
  struct Kept {
    Partition partition;
    double accuracy = 0.0;
    std::vector<std::size_t> children;  // node indices, one per child region

    bool operator==(const Kept&) const = default;
  };
  struct Node {
    Region region;
    int depth = 0;
    std::vector<Kept> partitions;  // empty for leaf regions

    bool leaf() const { return partitions.empty(); }
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;  // nodes[0] is the whole image

  std::vector<Region> leaf_regions() const;
  bool operator==(const PartitionTree&) const = default;
};

PartitionTree learn_partition_tree(const Dataset& data, ClassId cls, const StructureConfig& config);

/// A tree of depth one over the given partitions.
PartitionTree single_level_tree(const std::vector<Partition>& partitions);

struct BuildStats {
  std::size_t gadgets = 0;
  std::size_t constant_leaves = 0;
};

/// Hierarchical class network: one sum per tree node, one product per kept
/// partition, and at each leaf region a sum over the pair gadgets of every
/// pair co-occurring in at least tau of the positives, plus a background
/// product of per-part presence sums for the qualifying parts.
Network build_class_network(const PartitionTree& tree, const Dataset& data, ClassId cls,
                            const StructureConfig& config, BuildStats* stats = nullptr);

/// Whole-image bag of parts: a product of per-part presence sums.
Network build_bag_network(std::size_t num_parts, ClassId cls);

/// Whole-image sum over the gadgets of all part pairs plus the background bag.
Network build_flat_network(std::size_t num_parts, ClassId cls);

/// Sum edges carrying the same structural signature in two or more networks.
struct SharedGroup {
  std::uint64_t signature = 0;
  std::vector<std::pair<std::size_t, EdgeId>> members;  // (network index, edge)
};

/// Structural signatures per node: leaves by kind, variable (with region
/// rectangle) and state; internal nodes by kind and the sorted signatures of
/// their children. Sum nodes also carry the signature of their highest-weight
/// child, so a gadget is identified by its pair, region and dominant relation.
std::vector<std::uint64_t> node_signatures(const Network& net);

/// Marks shared edges in every network and returns the groups of sum edges.
/// Edges below nodes with an empty scope are never shared.
std::vector<SharedGroup> find_shared_structures(std::vector<Network>& networks);

constexpr std::uint64_t pair_count(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

std::size_t gadget_count(const Network& net);
/// Distinct part pairs that carry spatial indicators anywhere in the network.
std::size_t modeled_pair_count(const Network& net);

}  // namespace hsspn
