#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsspn/learning.hpp"

namespace hsspn {

/// Mean of the precision at each positive, ranking by descending score.
/// Equal scores keep input order. Zero when there are no positives.
double average_precision(std::span<const double> scores, std::span<const bool> positive);

struct EvalReport {
  std::vector<double> average_precision;  // per class
  double mean_average_precision = 0.0;
  std::vector<double> class_accuracy;  // recall of each class under argmax
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Throws Error(Mismatch) when the dataset's vocabulary or classes differ from the bundle's.
void check_vocabulary(const Bundle& bundle, const Dataset& data);

EvalReport evaluate_bundle(const Bundle& bundle, const Dataset& data);

/// key: value lines in fixed field order.
std::string format_report(const EvalReport& report);

struct PairAblation {
  PairKey pair;
  std::size_t gadgets = 0;  // across all class networks
  double accuracy = 0.0;
  double drop = 0.0;
};

/// For every part pair carrying a gadget in any class network, marginalize its
/// relation indicators everywhere (all four set to 1) and measure the accuracy
/// drop. Sorted by drop descending, then by pair.
std::vector<PairAblation> ablate_pairs(const Bundle& bundle, const Dataset& data);

}  // namespace hsspn
