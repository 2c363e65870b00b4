#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hsspn/inference.hpp"
#include "hsspn/network.hpp"
#include "hsspn/structure.hpp"

namespace hsspn {

enum class Mode { SPN, FS_SPN, IHS_SPN, JHS_SPN };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct TrainConfig {
  int generative_epochs = 20;
  double smoothing = 0.1;           // alpha
  double prune_threshold = 1e-6;    // epsilon_p
  double learning_rate = 1e-3;      // eta
  double margin = 1.0;
  std::size_t max_pairs_per_epoch = 2000;
  int discriminative_epochs = 10;
  int early_stop_patience = 3;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  Mode mode = Mode::IHS_SPN;
};

/// Throws Error(Spec) naming the offending field.
void validate(const TrainConfig& config);

struct MarginRecord {
  std::string positive;
  std::string negative;
  double slack = 0.0;  // max(0, margin - (V(pos) - V(neg)))
};

/// Cached evidence of one image for one network.
struct Example {
  const ImageRecord* image = nullptr;
  IndicatorValues evidence;
};

std::vector<Example> make_examples(const Network& net, std::span<const ImageRecord* const> images);

struct GenerativeReport {
  std::vector<double> mean_log;  // mean log max-product root value, before each epoch and after the last
  int epochs = 0;
};

/// Hard EM: per epoch, accumulate MPE traversal counts of every positive and
/// set each sum edge to (count + alpha) / (sibling total + alpha * fanout).
GenerativeReport generative_train(Network& net, std::span<const ImageRecord* const> positives,
                                  const TrainConfig& config);

struct PruneResult {
  Network network;
  std::size_t edges_removed = 0;
  std::size_t nodes_removed = 0;
};

/// Remove sum edges with weight <= threshold and everything no longer
/// reachable, then renormalize. Node and edge ids are compacted.
PruneResult prune(const Network& net, double threshold);

/// Slack of a pair and, when positive, the update direction
/// slack * (t_pos - t_neg) / w per sum edge.
struct MarginGradient {
  double slack = 0.0;
  double value_pos = 0.0;
  double value_neg = 0.0;
  std::map<EdgeId, double> direction;
};

MarginGradient margin_gradient(const Network& net, const IndicatorValues& pos, const IndicatorValues& neg,
                               double margin);

/// w <- max(floor, w + eta * direction), then renormalize every touched sum node
/// keeping each weight at or above the floor.
void apply_update(Network& net, const std::map<EdgeId, double>& direction, double eta);

MarginRecord discriminative_step(Network& net, const ImageRecord& pos, const ImageRecord& neg, double eta,
                                 double margin = 1.0);

struct JointReport {
  std::vector<int> epochs_run;  // per class
  std::vector<double> best_margin;  // per class, held-out
  /// update_counts[g][k]: pair updates of class k that moved shared group g.
  std::vector<std::vector<std::size_t>> update_counts;
  std::vector<std::string> log;
};

/// Discriminative stage over classes grouped by shared edges. Private edges
/// move after every violating pair; shared edges accumulate the updates of
/// every class in their group and move together at epoch end. With no shared
/// groups this is independent per-class training.
JointReport discriminative_train(std::vector<Network>& networks, const std::vector<SharedGroup>& shared,
                                 const Dataset& train, const Dataset& validation, const TrainConfig& config);

/// JHS-SPN joint stage: requires config.mode == JHS_SPN.
JointReport joint_train(std::vector<Network>& networks, const std::vector<SharedGroup>& shared,
                        const Dataset& train, const Dataset& validation, const TrainConfig& config);

/// Set every shared group's weights to the member mean and renormalize.
void tie_shared_weights(std::vector<Network>& networks, const std::vector<SharedGroup>& shared);

struct ClassStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t gadgets = 0;
  std::size_t pairs = 0;
  std::size_t pruned_edges = 0;
  std::size_t constant_leaves = 0;
};

struct Bundle {
  Mode mode = Mode::IHS_SPN;
  std::size_t num_parts = 0;
  std::size_t num_classes = 0;
  std::vector<Network> networks;
  std::vector<SharedGroup> shared;
  std::vector<ClassStats> stats;
  std::vector<std::size_t> shared_update_totals;  // per group, summed over classes
  std::vector<std::vector<std::size_t>> shared_update_counts;  // [group][class], not saved
  std::vector<std::string> log;
};

/// Full pipeline for the configured mode: structure, generative stage,
/// pruning, sharing (JHS-SPN) and the discriminative stage.
Bundle train_all(const Dataset& data, const StructureConfig& structure, const TrainConfig& config);

struct Classification {
  std::vector<double> log_scores;  // per class, log of the root value
  ClassId label = 0;
};

/// Scores are the log root values; ties go to the lowest class id.
Classification classify(const ImageRecord& image, const Bundle& bundle);

void save_bundle(const Bundle& bundle, const std::string& dir);
Bundle load_bundle(const std::string& dir);

}  // namespace hsspn
