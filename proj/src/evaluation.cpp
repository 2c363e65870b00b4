#include "hsspn/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

namespace hsspn {

double average_precision(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::Contract, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, total = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!positive[order[rank]]) continue;
    hits += 1.0;
    total += hits / static_cast<double>(rank + 1);
  }
  return hits > 0 ? total / hits : 0.0;
}

void check_vocabulary(const Bundle& bundle, const Dataset& data) {
  if (data.num_parts != bundle.num_parts)
    throw Error(ErrorKind::Mismatch,
                fmt::format("dataset has {} parts but the model was trained on {}", data.num_parts, bundle.num_parts));
  if (data.num_classes != bundle.num_classes)
    throw Error(ErrorKind::Mismatch, fmt::format("dataset has {} classes but the model has {}", data.num_classes,
                                                 bundle.num_classes));
}

namespace {

EvalReport report_from_scores(const std::vector<std::vector<double>>& scores, const Dataset& data) {
  const std::size_t K = data.num_classes;
  EvalReport r;
  r.confusion.assign(K, std::vector<std::size_t>(K, 0));
  std::vector<std::size_t> per_class(K, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& s = scores[i];
    const auto pred = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    const ClassId truth = data.records[i].label;
    ++r.confusion[truth][pred];
    ++per_class[truth];
    correct += pred == truth;
  }
  r.accuracy = data.records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.records.size());
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> col(data.records.size());
    auto pos = std::make_unique<bool[]>(data.records.size());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      col[i] = scores[i][k];
      pos[i] = data.records[i].label == k;
    }
    r.average_precision.push_back(average_precision(col, {pos.get(), col.size()}));
    r.class_accuracy.push_back(per_class[k] ? static_cast<double>(r.confusion[k][k]) / static_cast<double>(per_class[k])
                                            : 0.0);
  }
  r.mean_average_precision =
      K ? std::accumulate(r.average_precision.begin(), r.average_precision.end(), 0.0) / static_cast<double>(K) : 0.0;
  return r;
}

}  // namespace

EvalReport evaluate_bundle(const Bundle& bundle, const Dataset& data) {
  check_vocabulary(bundle, data);
  std::vector<std::vector<double>> scores;
  for (const ImageRecord& img : data.records) scores.push_back(classify(img, bundle).log_scores);
  return report_from_scores(scores, data);
}

std::string format_report(const EvalReport& r) {
  std::string out;
  for (std::size_t k = 0; k < r.average_precision.size(); ++k)
    out += fmt::format("ap_class_{}: {:.6f}\n", k, r.average_precision[k]);
  out += fmt::format("map: {:.6f}\n", r.mean_average_precision);
  for (std::size_t k = 0; k < r.class_accuracy.size(); ++k)
    out += fmt::format("accuracy_class_{}: {:.6f}\n", k, r.class_accuracy[k]);
  out += fmt::format("accuracy: {:.6f}\n", r.accuracy);
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    out += fmt::format("confusion_row_{}:", k);
    for (std::size_t c : r.confusion[k]) out += fmt::format(" {}", c);
    out += '\n';
  }
  return out;
}

std::vector<PairAblation> ablate_pairs(const Bundle& bundle, const Dataset& data) {
  check_vocabulary(bundle, data);
  std::map<PairKey, std::size_t> gadgets;
  for (const Network& net : bundle.networks)
    for (const VariableId& v : net.variables())
      if (v.kind == VariableKind::SpatialPair) ++gadgets[v.pair_key()];

  // evidence[k][i]: image i encoded for class network k
  std::vector<std::vector<IndicatorValues>> evidence(bundle.networks.size());
  for (std::size_t k = 0; k < bundle.networks.size(); ++k)
    for (const ImageRecord& img : data.records)
      evidence[k].push_back(assignment_to_indicators(img, bundle.networks[k], {}, bundle.num_parts));

  auto accuracy = [&](const PairKey* ablated) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      ClassId label = 0;
      for (std::size_t k = 0; k < bundle.networks.size(); ++k) {
        const Network& net = bundle.networks[k];
        IndicatorValues ev = evidence[k][i];
        if (ablated)
          for (std::uint32_t v = 0; v < net.variables().size(); ++v)
            if (net.variables()[v].kind == VariableKind::SpatialPair && net.variables()[v].pair_key() == *ablated)
              ev.marginalize_pair(v);
        const double s = evaluate(net, ev).root_log;
        if (s > best) {
          best = s;
          label = static_cast<ClassId>(k);
        }
      }
      correct += label == data.records[i].label;
    }
    return data.records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.records.size());
  };

  const double base = accuracy(nullptr);
  std::vector<PairAblation> out;
  for (const auto& [pair, count] : gadgets) {
    const double acc = accuracy(&pair);
    out.push_back({pair, count, acc, base - acc});
  }
  std::stable_sort(out.begin(), out.end(), [](const PairAblation& a, const PairAblation& b) { return a.drop > b.drop; });
  return out;
}

}  // namespace hsspn
