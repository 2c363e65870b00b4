#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hsspn/common.hpp"
#include "hsspn/image.hpp"

namespace hsspn {

// ---------------------------------------------------------------------------
// Dataset files

struct LoadStats {
  std::size_t duplicates_dropped = 0;
};

/// Keep only the first detection (input order) of each part per finest grid
/// cell; returns the number removed.
std::size_t dedup_detections(ImageRecord& image);

std::string format_dataset(const Dataset& data);
Dataset parse_dataset(std::string_view text, LoadStats* stats = nullptr);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path, LoadStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct PartRule {
  ClassId cls = 0;
  PartId part = 0;
  Region region;
};

struct PairRule {
  ClassId cls = 0;
  PartId a = 0;  // placed relative to b
  PartId b = 0;
  SpatialRelation relation = SpatialRelation::LeftOf;
  Region region;
};

struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::size_t num_parts = 12;
  double width = 200.0;
  double height = 200.0;
  std::size_t images_per_class = 200;
  std::vector<PartRule> part_rules;
  std::vector<PairRule> pair_rules;
  double background_rate = 0.05;  // per part, per image
  double drop_rate = 0.1;         // per rule, per image
  double jitter = 2.0;            // Gaussian sigma in pixels
  double separation = 16.0;       // nominal pixel gap between the two parts of a pair rule
  std::uint64_t seed = 1;
};

/// Throws Error(Spec) naming the offending field.
void validate(const SyntheticSpec& spec);

Dataset generate_synthetic(const SyntheticSpec& spec, std::mt19937_64& rng);
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Two classes over the same parts with mirrored relations: class 0 has
/// part 2 left of part 5 and part 7 left of part 9, class 1 the opposite.
SyntheticSpec mirror_preset(std::size_t images_per_class, std::uint64_t seed);

/// Key/value spec file (`synth v1` header), see README.
SyntheticSpec parse_synthetic_spec(std::string_view text);
std::string format_synthetic_spec(const SyntheticSpec& spec);

/// Split records per class into a first part of size round(fraction * n) and the rest.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Feature clustering

struct FeatureSet {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;  // one row per vector
};

FeatureSet parse_features(std::string_view text);
std::string format_features(const FeatureSet& features);

struct Cluster {
  std::vector<std::size_t> members;  // row indices, ascending
  Eigen::VectorXd centroid;
};

/// Mean pairwise Euclidean distance between the rows of `a` and the rows of `b`.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar average_link(const Eigen::MatrixBase<DerivedA>& a,
                                       const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() == 0 || b.rows() == 0)
    throw Error(ErrorKind::Contract, "average link of an empty cluster");
  Scalar total(0);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    total += (b.rowwise() - a.row(i)).rowwise().norm().sum();
  return total / static_cast<Scalar>(a.rows() * b.rows());
}

double average_link(const Cluster& c1, const Cluster& c2, const Eigen::MatrixXd& features);

/// Seeded k-means with farthest-point initialization.
std::vector<Cluster> kmeans(const Eigen::MatrixXd& features, std::size_t k, std::uint64_t seed,
                            int max_iterations = 100, double tolerance = 1e-6);

struct Agglomeration {
  std::vector<Cluster> clusters;
  /// Member sets of each merged pair, in merge order.
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> merges;
  std::size_t dropped = 0;
};

/// Merge the closest pair by average link until `target` clusters remain.
/// Ties go to the lexicographically smallest (i, j) of current cluster indices;
/// the merged cluster takes index i and j is removed.
Agglomeration merge_by_average_link(const Eigen::MatrixXd& features,
                                    std::vector<std::vector<std::size_t>> initial, std::size_t target);

/// k-means to `k_init` clusters, drop clusters that are both small
/// (< drop_fraction of the mean size) and far (nearest average link above the
/// 90th percentile), then merge down to `n_c`.
Agglomeration agglomerate(const Eigen::MatrixXd& features, std::size_t k_init, std::size_t n_c,
                          double drop_fraction, std::uint64_t seed);

std::string format_clusters(const std::vector<Cluster>& clusters, const std::vector<std::string>& ids);

}  // namespace hsspn
