#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hsspn/data.hpp"
#include "hsspn/inference.hpp"
#include "hsspn/network.hpp"

namespace hsspn {

/// Variable cap of the exhaustive oracles.
inline constexpr std::size_t kOracleMaxVariables = 10;

/// Sum of the network value over every completion consistent with `evidence`.
/// Marginalized part variables take both polarities; marginalized pair
/// variables take each of the four one-hot relation states, whose sum is the
/// all-ones indicator row.
double brute_force_marginal(const Network& net, const IndicatorValues& evidence);

/// The nine indicator patterns a pair of distinct points can realize, ordered
/// by x outcome (less, equal, greater) then y outcome.
const std::vector<std::array<double, 4>>& realizable_relation_states();

struct OracleMpe {
  IndicatorValues assignment;
  double value = 0.0;
};

/// Exhaustive argmax of the max-product value over consistent completions;
/// part variables try positive before negative, pair variables the nine
/// realizable patterns; the first maximum in that lexicographic order wins.
OracleMpe brute_force_mpe(const MaxNetwork& mpn, const IndicatorValues& evidence);

struct FiniteDifference {
  double value = 0.0;
  double delta = 0.0;
  bool conclusive = false;
};

/// Central difference of log M(pos) - log M(neg) in the weight of `edge`,
/// without renormalization, with step delta * w. The step shrinks tenfold (up to five times) until
/// both perturbed MPE trees match the unperturbed ones.
FiniteDifference finite_difference_gradient(const MaxNetwork& mpn, const IndicatorValues& pos,
                                            const IndicatorValues& neg, EdgeId edge, double delta = 1e-4);

/// Merge order by recomputing every pairwise average link from scratch at each
/// step; ties go to the lexicographically smallest cluster index pair.
std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> brute_force_merges(
    const Eigen::MatrixXd& features, std::vector<std::vector<std::size_t>> initial, std::size_t target);

struct RandomNetworkOptions {
  std::size_t max_parts = 6;
  std::size_t max_pairs = 2;
  int max_depth = 4;
};

/// Random complete and decomposable network mixing part and spatial leaves,
/// with normalized random weights.
Network random_network(std::mt19937_64& rng, const RandomNetworkOptions& options = {});

/// Random evidence: each variable observed one-hot or marginalized.
IndicatorValues random_evidence(const Network& net, std::mt19937_64& rng);

/// Four well-separated Gaussian blobs: features plus the planted blob of each row.
struct PlantedBlobs {
  Eigen::MatrixXd features;
  std::vector<std::size_t> blob;
};
PlantedBlobs planted_blobs(std::size_t per_blob, std::size_t dim, double separation_sigmas, std::uint64_t seed);

}  // namespace hsspn
