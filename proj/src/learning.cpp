#include "hsspn/learning.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hsspn/data.hpp"

namespace hsspn {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::SPN: return "spn";
    case Mode::FS_SPN: return "fs-spn";
    case Mode::IHS_SPN: return "ihs-spn";
    case Mode::JHS_SPN: return "jhs-spn";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::SPN, Mode::FS_SPN, Mode::IHS_SPN, Mode::JHS_SPN})
    if (s == to_string(m)) return m;
  throw Error(ErrorKind::Spec, "field 'mode': unknown mode '" + s + "' (spn, fs-spn, ihs-spn, jhs-spn)");
}

void validate(const TrainConfig& c) {
  auto fail = [](const char* field, const std::string& msg) {
    throw Error(ErrorKind::Spec, fmt::format("field '{}': {}", field, msg));
  };
  if (c.generative_epochs < 0) fail("generative_epochs", "must be non-negative");
  if (!(c.smoothing >= 0)) fail("smoothing", "must be non-negative");
  if (!(c.prune_threshold >= kWeightFloor)) fail("prune_threshold", "must be at least the weight floor");
  if (!(c.learning_rate > 0)) fail("learning_rate", "must be positive");
  if (!(c.margin > 0)) fail("margin", "must be positive");
  if (c.discriminative_epochs < 0) fail("discriminative_epochs", "must be non-negative");
  if (c.early_stop_patience < 1) fail("early_stop_patience", "must be positive");
  if (!(c.validation_fraction >= 0 && c.validation_fraction < 1)) fail("validation_fraction", "must lie in [0, 1)");
}

std::vector<Example> make_examples(const Network& net, std::span<const ImageRecord* const> images) {
  std::vector<Example> out;
  out.reserve(images.size());
  for (const ImageRecord* img : images) out.push_back({img, assignment_to_indicators(*img, net)});
  return out;
}

// ---------------------------------------------------------------------------
// Generative stage

namespace {

double mean_max_log(const Network& net, const std::vector<Example>& ex) {
  double total = 0.0;
  for (const Example& e : ex) total += evaluate(net, e.evidence, Combine::Max).root_log;
  return total / static_cast<double>(ex.size());
}

void renormalize(Network& net, NodeId sum) {
  double total = 0.0;
  for (EdgeId e : net.node(sum).children) total += net.weight(e);
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorKind::DegenerateNode, fmt::format("sum node {} has outgoing weight total {}", sum, total));
  for (EdgeId e : net.node(sum).children) net.set_weight(e, net.weight(e) / total);
}

/// Renormalize, then lift anything the division pushed under the floor.
void renormalize_floored(Network& net, NodeId sum) {
  renormalize(net, sum);
  bool lifted = false;
  for (EdgeId e : net.node(sum).children)
    if (net.weight(e) < kWeightFloor) {
      net.set_weight(e, kWeightFloor);
      lifted = true;
    }
  if (lifted) renormalize(net, sum);
}

}  // namespace

GenerativeReport generative_train(Network& net, std::span<const ImageRecord* const> positives,
                                  const TrainConfig& config) {
  if (positives.empty()) throw Error(ErrorKind::InsufficientData, "generative training needs positive images");
  const auto examples = make_examples(net, positives);
  const MaxNetwork mpn = to_mpn(net);
  GenerativeReport rep;
  rep.mean_log.push_back(mean_max_log(net, examples));
  for (int epoch = 0; epoch < config.generative_epochs; ++epoch) {
    std::vector<double> counts(net.edges().size(), 0.0);
    for (const Example& ex : examples)
      for (auto [e, t] : mpe(mpn, ex.evidence).traversal.t) counts[e] += static_cast<double>(t);
    for (NodeId id = 0; id < net.size(); ++id) {
      const Node& n = net.node(id);
      if (n.kind != NodeKind::Sum) continue;
      double total = 0.0;
      for (EdgeId e : n.children) total += counts[e];
      const double denom = total + config.smoothing * static_cast<double>(n.children.size());
      if (!(denom > 0.0)) continue;
      for (EdgeId e : n.children) net.set_weight(e, (counts[e] + config.smoothing) / denom);
    }
    ++rep.epochs;
    rep.mean_log.push_back(mean_max_log(net, examples));
    const double gain = rep.mean_log.back() - rep.mean_log[rep.mean_log.size() - 2];
    if (std::isfinite(gain) && gain < 1e-6) break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Pruning

PruneResult prune(const Network& net, double threshold) {
  if (!net.topologically_sorted()) throw Error(ErrorKind::Contract, "pruning needs a topologically sorted network");
  std::vector<bool> keep_edge(net.edges().size(), true);
  for (NodeId id = 0; id < net.size(); ++id) {
    const Node& n = net.node(id);
    if (n.kind != NodeKind::Sum) continue;
    std::size_t left = 0;
    for (EdgeId e : n.children) {
      keep_edge[e] = net.weight(e) > threshold;
      left += keep_edge[e];
    }
    if (left == 0 && !n.children.empty())
      throw Error(ErrorKind::DegenerateNode,
                  id == net.root() ? fmt::format("pruning at {} would delete the root's last child", threshold)
                                   : fmt::format("pruning at {} would delete every child of sum node {}", threshold, id));
  }
  std::vector<bool> reach(net.size(), false);
  reach[net.root()] = true;
  for (NodeId id = static_cast<NodeId>(net.size()); id-- > 0;) {
    if (!reach[id]) continue;
    for (EdgeId e : net.node(id).children)
      if (keep_edge[e]) reach[net.edge(e).child] = true;
  }

  PruneResult res;
  Network& out = res.network;
  for (const Region& r : net.regions()) out.add_region(r);
  std::vector<NodeId> map(net.size(), kInvalidId);
  for (NodeId id = 0; id < net.size(); ++id) {
    if (!reach[id]) {
      ++res.nodes_removed;
      continue;
    }
    const Node& n = net.node(id);
    switch (n.kind) {
      case NodeKind::Constant: map[id] = out.add_constant(); break;
      case NodeKind::PartIndicator: {
        const VariableId& v = net.variables()[n.variable];
        map[id] = out.part_leaf(v.a, n.polarity(), v.region);
        break;
      }
      case NodeKind::SpatialIndicator: {
        const VariableId& v = net.variables()[n.variable];
        map[id] = out.spatial_leaf(v.pair_key(), n.relation(), v.region);
        break;
      }
      case NodeKind::Sum:
      case NodeKind::Product:
        map[id] = n.kind == NodeKind::Sum ? out.add_sum() : out.add_product();
        for (EdgeId e : n.children)
          if (keep_edge[e]) out.connect(map[id], map[net.edge(e).child], net.weight(e));
        break;
    }
  }
  out.set_root(map[net.root()]);
  out.set_label(net.label());
  for (const Partition& p : net.partitions()) out.add_partition(p);
  res.edges_removed = net.edges().size() - out.edges().size();
  for (NodeId id = 0; id < out.size(); ++id)
    if (out.node(id).kind == NodeKind::Sum) renormalize(out, id);
  return res;
}

// ---------------------------------------------------------------------------
// Discriminative stage

namespace {

[[noreturn]] void nan_diagnostic(const Network& net, const EvaluationResult& r, const char* which) {
  for (NodeId id = 0; id < net.size(); ++id)
    if (std::isnan(r.log_values[id]))
      throw Error(ErrorKind::Numeric, fmt::format("{} root value is NaN, first at node {} ({})", which, id,
                                                  to_string(net.node(id).kind)));
  throw Error(ErrorKind::Numeric, fmt::format("{} root value is NaN", which));
}

}  // namespace

MarginGradient margin_gradient(const Network& net, const IndicatorValues& pos, const IndicatorValues& neg,
                               double margin) {
  const EvaluationResult ep = evaluate(net, pos);
  const EvaluationResult en = evaluate(net, neg);
  if (std::isnan(ep.root_value)) nan_diagnostic(net, ep, "positive");
  if (std::isnan(en.root_value)) nan_diagnostic(net, en, "negative");
  MarginGradient g;
  g.value_pos = ep.root_value;
  g.value_neg = en.root_value;
  g.slack = std::max(0.0, margin - (g.value_pos - g.value_neg));
  if (g.slack <= 0.0) return g;
  const MaxNetwork mpn = to_mpn(net);
  const auto tm = mpe(mpn, pos).traversal;
  const auto tn = mpe(mpn, neg).traversal;
  for (auto [e, dt] : traversal_difference(tm, tn)) {
    if (net.node(net.edge(e).parent).kind != NodeKind::Sum) continue;
    g.direction[e] = g.slack * static_cast<double>(dt) / net.weight(e);
  }
  return g;
}

void apply_update(Network& net, const std::map<EdgeId, double>& direction, double eta) {
  std::set<NodeId> touched;
  for (auto [e, d] : direction) {
    net.set_weight(e, std::max(kWeightFloor, net.weight(e) + eta * d));
    touched.insert(net.edge(e).parent);
  }
  for (NodeId s : touched) renormalize_floored(net, s);
}

MarginRecord discriminative_step(Network& net, const ImageRecord& pos, const ImageRecord& neg, double eta,
                                 double margin) {
  const MarginGradient g =
      margin_gradient(net, assignment_to_indicators(pos, net), assignment_to_indicators(neg, net), margin);
  if (g.slack > 0.0) apply_update(net, g.direction, eta);
  return {pos.id, neg.id, g.slack};
}

void tie_shared_weights(std::vector<Network>& networks, const std::vector<SharedGroup>& shared) {
  std::set<std::pair<std::size_t, NodeId>> touched;
  for (const SharedGroup& g : shared) {
    double mean = 0.0;
    for (auto [k, e] : g.members) mean += networks[k].weight(e);
    mean /= static_cast<double>(g.members.size());
    for (auto [k, e] : g.members) {
      networks[k].set_weight(e, mean);
      touched.insert({k, networks[k].edge(e).parent});
    }
  }
  for (auto [k, s] : touched) renormalize(networks[k], s);
}

namespace {

std::vector<double> snapshot(const Network& net) {
  std::vector<double> w;
  w.reserve(net.edges().size());
  for (const Edge& e : net.edges()) w.push_back(e.weight);
  return w;
}

void restore(Network& net, const std::vector<double>& w) {
  for (EdgeId e = 0; e < w.size(); ++e) net.set_weight(e, w[e]);
}

struct ClassData {
  std::vector<Example> train_pos, train_neg, val_pos, val_neg;
};

ClassData class_examples(const Network& net, ClassId k, const Dataset& train, const Dataset& validation) {
  std::vector<const ImageRecord*> tp, tn, vp, vn;
  for (const ImageRecord& r : train.records) (r.label == k ? tp : tn).push_back(&r);
  for (const ImageRecord& r : validation.records) (r.label == k ? vp : vn).push_back(&r);
  return {make_examples(net, tp), make_examples(net, tn), make_examples(net, vp), make_examples(net, vn)};
}

double mean_value(const Network& net, const std::vector<Example>& ex) {
  double total = 0.0;
  for (const Example& e : ex) total += evaluate(net, e.evidence).root_value;
  return total / static_cast<double>(ex.size());
}

double held_out_margin(const Network& net, const ClassData& d) {
  if (d.val_pos.empty() || d.val_neg.empty()) return 0.0;
  return mean_value(net, d.val_pos) - mean_value(net, d.val_neg);
}

}  // namespace

JointReport discriminative_train(std::vector<Network>& networks, const std::vector<SharedGroup>& shared,
                                 const Dataset& train, const Dataset& validation, const TrainConfig& config) {
  const std::size_t K = networks.size();
  JointReport rep;
  rep.epochs_run.assign(K, 0);
  rep.best_margin.assign(K, 0.0);
  rep.update_counts.assign(shared.size(), std::vector<std::size_t>(K, 0));

  // Classes linked by a shared group train together.
  std::vector<std::size_t> parent(K);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<std::pair<std::size_t, EdgeId>, std::size_t> group_of;
  for (std::size_t g = 0; g < shared.size(); ++g)
    for (auto [k, e] : shared[g].members) {
      group_of[{k, e}] = g;
      const auto a = find(k), b = find(shared[g].members.front().first);
      parent[std::max(a, b)] = std::min(a, b);
    }
  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t k = 0; k < K; ++k) components[find(k)].push_back(k);

  for (const auto& [root, classes] : components) {
    std::vector<ClassData> data;
    std::vector<std::mt19937_64> rng;
    for (std::size_t k : classes) {
      data.push_back(class_examples(networks[k], static_cast<ClassId>(k), train, validation));
      rng.emplace_back(Fnv1a().add(config.seed).add(k).add(0xd15cu).value());
    }
    const bool can_stop = std::all_of(data.begin(), data.end(),
                                      [](const ClassData& d) { return !d.val_pos.empty() && !d.val_neg.empty(); });
    auto group_score = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < classes.size(); ++i) s += held_out_margin(networks[classes[i]], data[i]);
      return s;
    };
    double best = group_score();
    std::vector<std::vector<double>> best_weights;
    for (std::size_t k : classes) best_weights.push_back(snapshot(networks[k]));
    int since = 0;

    for (int epoch = 1; epoch <= config.discriminative_epochs; ++epoch) {
      std::map<std::size_t, double> pending;
      for (std::size_t i = 0; i < classes.size(); ++i) {
        const std::size_t k = classes[i];
        Network& net = networks[k];
        const ClassData& d = data[i];
        if (d.train_pos.empty() || d.train_neg.empty()) continue;
        const std::size_t total_pairs = d.train_pos.size() * d.train_neg.size();
        const std::size_t n_pairs = std::min(config.max_pairs_per_epoch, total_pairs);
        std::uniform_int_distribution<std::size_t> pick_pos(0, d.train_pos.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_neg(0, d.train_neg.size() - 1);
        std::size_t violations = 0;
        double slack_sum = 0.0;
        for (std::size_t p = 0; p < n_pairs; ++p) {
          const Example& pos = d.train_pos[pick_pos(rng[i])];
          const Example& neg = d.train_neg[pick_neg(rng[i])];
          const MarginGradient g = margin_gradient(net, pos.evidence, neg.evidence, config.margin);
          if (g.slack <= 0.0) continue;
          ++violations;
          slack_sum += g.slack;
          std::map<EdgeId, double> own;
          std::set<std::size_t> moved;
          for (auto [e, dir] : g.direction) {
            auto it = group_of.find({k, e});
            if (it == group_of.end()) {
              own[e] = dir;
            } else if (dir != 0.0) {
              pending[it->second] += config.learning_rate * dir;
              moved.insert(it->second);
            }
          }
          for (std::size_t gidx : moved) ++rep.update_counts[gidx][k];
          apply_update(net, own, config.learning_rate);
        }
        rep.log.push_back(fmt::format("discriminative class {} epoch {} pairs {} violation_rate {:.4f} mean_slack {:.6f}",
                                      k, epoch, n_pairs, n_pairs ? double(violations) / double(n_pairs) : 0.0,
                                      violations ? slack_sum / double(violations) : 0.0));
      }
      std::set<std::pair<std::size_t, NodeId>> touched;
      for (auto [gidx, inc] : pending)
        for (auto [k, e] : shared[gidx].members) {
          networks[k].set_weight(e, std::max(kWeightFloor, networks[k].weight(e) + inc));
          touched.insert({k, networks[k].edge(e).parent});
        }
      for (auto [k, s] : touched) renormalize_floored(networks[k], s);
      for (std::size_t k : classes) ++rep.epochs_run[k];

      if (!can_stop) continue;
      const double score = group_score();
      rep.log.push_back(fmt::format("discriminative group {} epoch {} held_out_margin {:.6e}", root, epoch, score));
      if (score > best) {
        best = score;
        since = 0;
        for (std::size_t i = 0; i < classes.size(); ++i) best_weights[i] = snapshot(networks[classes[i]]);
      } else if (++since >= config.early_stop_patience) {
        break;
      }
    }
    if (can_stop)
      for (std::size_t i = 0; i < classes.size(); ++i) restore(networks[classes[i]], best_weights[i]);
    for (std::size_t i = 0; i < classes.size(); ++i)
      rep.best_margin[classes[i]] = held_out_margin(networks[classes[i]], data[i]);
  }
  return rep;
}

JointReport joint_train(std::vector<Network>& networks, const std::vector<SharedGroup>& shared,
                        const Dataset& train, const Dataset& validation, const TrainConfig& config) {
  if (config.mode != Mode::JHS_SPN)
    throw Error(ErrorKind::Contract, fmt::format("joint training requires mode jhs-spn, got {}", to_string(config.mode)));
  return discriminative_train(networks, shared, train, validation, config);
}

// ---------------------------------------------------------------------------
// Pipeline

Bundle train_all(const Dataset& data, const StructureConfig& structure, const TrainConfig& config) {
  validate(config);
  if (config.mode == Mode::IHS_SPN || config.mode == Mode::JHS_SPN) validate(structure);
  if (data.num_classes == 0) throw Error(ErrorKind::InsufficientData, "dataset has no classes");

  auto [fit, validation] = split_per_class(data, 1.0 - config.validation_fraction, config.seed);
  Bundle b;
  b.mode = config.mode;
  b.num_parts = data.num_parts;
  b.num_classes = data.num_classes;
  b.stats.resize(data.num_classes);

  for (ClassId k = 0; k < data.num_classes; ++k) {
    const auto positives = fit.of_class(k);
    if (positives.empty())
      throw Error(ErrorKind::InsufficientData, fmt::format("class {} has no training images", k));
    Network net;
    ClassStats& st = b.stats[k];
    switch (config.mode) {
      case Mode::SPN: net = build_bag_network(data.num_parts, k); break;
      case Mode::FS_SPN: net = build_flat_network(data.num_parts, k); break;
      case Mode::IHS_SPN:
      case Mode::JHS_SPN: {
        const PartitionTree tree = learn_partition_tree(fit, k, structure);
        BuildStats bs;
        net = build_class_network(tree, fit, k, structure, &bs);
        st.constant_leaves = bs.constant_leaves;
        if (bs.constant_leaves)
          b.log.push_back(fmt::format("class {}: {} leaf regions without qualifying parts use a constant leaf", k,
                                      bs.constant_leaves));
        break;
      }
    }
    const GenerativeReport gen = generative_train(net, positives, config);
    for (std::size_t e = 0; e < gen.mean_log.size(); ++e)
      b.log.push_back(fmt::format("generative class {} epoch {} mean_log_max {:.6f}", k, e, gen.mean_log[e]));
    PruneResult pr = prune(net, config.prune_threshold);
    st.pruned_edges = pr.edges_removed;
    b.log.push_back(fmt::format("prune class {} edges_removed {} nodes_removed {}", k, pr.edges_removed,
                                pr.nodes_removed));
    net = std::move(pr.network);
    const ValidityReport vr = validate(net);
    if (!vr.valid_scoring_circuit())
      throw Error(ErrorKind::Contract, fmt::format("class {} network failed validation: {}", k,
                                                   vr.violations.front().detail));
    b.networks.push_back(std::move(net));
  }

  if (config.mode == Mode::JHS_SPN) {
    b.shared = find_shared_structures(b.networks);
    tie_shared_weights(b.networks, b.shared);
    b.log.push_back(fmt::format("shared groups {}", b.shared.size()));
  }
  const JointReport jr = config.mode == Mode::JHS_SPN
                             ? joint_train(b.networks, b.shared, fit, validation, config)
                             : discriminative_train(b.networks, {}, fit, validation, config);
  b.log.insert(b.log.end(), jr.log.begin(), jr.log.end());
  b.shared_update_counts = jr.update_counts;
  for (const auto& per_class : jr.update_counts)
    b.shared_update_totals.push_back(std::accumulate(per_class.begin(), per_class.end(), std::size_t{0}));

  for (ClassId k = 0; k < data.num_classes; ++k) {
    ClassStats& st = b.stats[k];
    const Network& net = b.networks[k];
    st.nodes = net.size();
    st.edges = net.edges().size();
    st.gadgets = gadget_count(net);
    st.pairs = modeled_pair_count(net);
  }
  return b;
}

Classification classify(const ImageRecord& image, const Bundle& bundle) {
  Classification c;
  for (const Network& net : bundle.networks)
    c.log_scores.push_back(evaluate(net, assignment_to_indicators(image, net, {}, bundle.num_parts)).root_log);
  c.label = static_cast<ClassId>(std::max_element(c.log_scores.begin(), c.log_scores.end()) - c.log_scores.begin());
  return c;
}

// ---------------------------------------------------------------------------
// Bundle directory

void save_bundle(const Bundle& b, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Spec, "cannot create " + dir + ": " + ec.message());
  std::string manifest = "spn-bundle v1\n";
  manifest += fmt::format("mode {}\nparts {}\nclasses {}\n", to_string(b.mode), b.num_parts, b.num_classes);
  for (std::size_t k = 0; k < b.networks.size(); ++k) {
    const auto name = fmt::format("class_{}.spn", k);
    save_network(b.networks[k], (fs::path(dir) / name).string());
    manifest += fmt::format("model {} {}\n", k, name);
  }
  for (std::size_t k = 0; k < b.stats.size(); ++k) {
    const ClassStats& s = b.stats[k];
    manifest += fmt::format("stats {} nodes={} edges={} gadgets={} pairs={} pruned={} constant_leaves={}\n", k,
                            s.nodes, s.edges, s.gadgets, s.pairs, s.pruned_edges, s.constant_leaves);
  }
  for (std::size_t g = 0; g < b.shared.size(); ++g) {
    manifest += fmt::format("shared {:016x}", b.shared[g].signature);
    if (g < b.shared_update_totals.size()) manifest += fmt::format(" updates={}", b.shared_update_totals[g]);
    for (auto [k, e] : b.shared[g].members) manifest += fmt::format(" {}:{}", k, e);
    manifest += '\n';
  }
  std::ofstream(fs::path(dir) / "manifest.txt", std::ios::binary) << manifest;
  std::ofstream log(fs::path(dir) / "train.log", std::ios::binary);
  for (const auto& line : b.log) log << line << '\n';
}

Bundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "manifest.txt", std::ios::binary);
  if (!f) throw Error(ErrorKind::Parse, "cannot read " + (fs::path(dir) / "manifest.txt").string());
  Bundle b;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::Parse, fmt::format("manifest line {}: {}", line_no, msg));
  };
  bool header = false;
  while (std::getline(f, line)) {
    ++line_no;
    std::istringstream in(line);
    std::string key;
    if (!(in >> key)) continue;
    if (!header) {
      std::string v;
      if (key != "spn-bundle" || !(in >> v) || v != "v1") fail("expected 'spn-bundle v1'");
      header = true;
      continue;
    }
    if (key == "mode") {
      std::string m;
      in >> m;
      b.mode = mode_from_string(m);
    } else if (key == "parts") {
      if (!(in >> b.num_parts)) fail("bad part count");
    } else if (key == "classes") {
      if (!(in >> b.num_classes)) fail("bad class count");
    } else if (key == "model") {
      std::size_t k;
      std::string name;
      if (!(in >> k >> name) || k != b.networks.size()) fail("model lines must list classes in order");
      b.networks.push_back(load_network((fs::path(dir) / name).string()));
    } else if (key == "stats") {
      std::size_t k;
      in >> k;
      ClassStats s;
      for (std::string kv; in >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail("bad stats field '" + kv + "'");
        const auto name = kv.substr(0, eq);
        const auto value = std::stoull(kv.substr(eq + 1));
        if (name == "nodes") s.nodes = value;
        else if (name == "edges") s.edges = value;
        else if (name == "gadgets") s.gadgets = value;
        else if (name == "pairs") s.pairs = value;
        else if (name == "pruned") s.pruned_edges = value;
        else if (name == "constant_leaves") s.constant_leaves = value;
      }
      b.stats.push_back(s);
    } else if (key == "shared") {
      std::string sig;
      in >> sig;
      SharedGroup g;
      g.signature = std::stoull(sig, nullptr, 16);
      for (std::string tok; in >> tok;) {
        if (tok.rfind("updates=", 0) == 0) {
          b.shared_update_totals.push_back(std::stoull(tok.substr(8)));
          continue;
        }
        const auto colon = tok.find(':');
        if (colon == std::string::npos) fail("bad shared member '" + tok + "'");
        g.members.emplace_back(std::stoull(tok.substr(0, colon)),
                               static_cast<EdgeId>(std::stoull(tok.substr(colon + 1))));
      }
      for (auto [k, e] : g.members)
        if (k >= b.networks.size() || e >= b.networks[k].edges().size()) fail("shared member out of range");
      b.shared.push_back(std::move(g));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw Error(ErrorKind::Parse, "empty bundle manifest");
  if (b.networks.size() != b.num_classes)
    throw Error(ErrorKind::Mismatch, fmt::format("manifest lists {} models for {} classes", b.networks.size(), b.num_classes));
  for (const SharedGroup& g : b.shared)
    for (auto [k, e] : g.members) b.networks[k].mark_shared(e);
  std::ifstream log(fs::path(dir) / "train.log");
  for (std::string l; std::getline(log, l);) b.log.push_back(l);
  return b;
}

}  // namespace hsspn
