#include "hsspn/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "hsspn/data.hpp"
#include "hsspn/evaluation.hpp"
#include "hsspn/inference.hpp"
#include "hsspn/learning.hpp"
#include "hsspn/oracle.hpp"
#include "hsspn/structure.hpp"

namespace hsspn::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Parse, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Spec, "cannot write " + path);
  f << text;
}

std::uint32_t part_variable(const Network& net, PartId p) {
  for (std::uint32_t v = 0; v < net.variables().size(); ++v)
    if (net.variables()[v].kind == VariableKind::Part && net.variables()[v].a == p) return v;
  throw Error(ErrorKind::Contract, fmt::format("part {} is not in the network", p));
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Nonzero gradients t/w have magnitude at least 1.
double gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
}

Check make_check(std::string name, double measured, double expected, double tolerance) {
  return {std::move(name), measured, expected, tolerance, std::abs(measured - expected) <= tolerance};
}

struct RunConfig {
  std::uint64_t seed = 1;
  std::string mode = "ihs-spn";
  StructureConfig structure;
  TrainConfig train;

  // generate
  std::string preset;
  std::string spec_path;
  std::size_t images = 200;
  // cluster
  std::string features_path;
  std::size_t k_init = 0;
  std::size_t clusters = 4;
  double drop_fraction = 0.1;
  // train, classify, evaluate, inspect
  std::string data_path;
  std::string model_dir;
  std::size_t ablate = 0;
  std::string mpe_image;
  // verify
  double perturb = 0.0;

  std::string out;
};

void echo(const RunConfig& c, const std::string& command, std::ostream& out) {
  out << fmt::format("command: {}\n", command);
  out << fmt::format("config.seed: {}\n", c.seed);
  out << fmt::format("config.mode: {}\n", c.mode);
  const StructureConfig& s = c.structure;
  out << fmt::format("config.sub-images: {}\nconfig.candidates: {}\nconfig.keep: {}\nconfig.depth: {}\n", s.s, s.M, s.m,
                     s.D);
  out << fmt::format("config.min-area: {}\nconfig.tau: {}\n", s.min_region_area, s.tau);
  const TrainConfig& t = c.train;
  out << fmt::format("config.gen-epochs: {}\nconfig.alpha: {}\nconfig.prune-threshold: {}\n", t.generative_epochs,
                     t.smoothing, t.prune_threshold);
  out << fmt::format("config.eta: {}\nconfig.margin: {}\nconfig.pairs-per-epoch: {}\n", t.learning_rate, t.margin,
                     t.max_pairs_per_epoch);
  out << fmt::format("config.disc-epochs: {}\nconfig.patience: {}\nconfig.validation-fraction: {}\n",
                     t.discriminative_epochs, t.early_stop_patience, t.validation_fraction);
}

int input_error(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (const auto* h = dynamic_cast<const Error*>(&e); h && h->kind() == ErrorKind::Mismatch) return kMismatch;
  return kInputError;
}

int cmd_generate(const RunConfig& c, bool seed_given, std::ostream& out) {
  SyntheticSpec spec;
  if (!c.spec_path.empty()) {
    spec = parse_synthetic_spec(read_file(c.spec_path));
    if (seed_given) spec.seed = c.seed;
  } else if (c.preset == "mirror") {
    spec = mirror_preset(c.images, c.seed);
  } else {
    throw Error(ErrorKind::Spec, fmt::format("field 'preset': unknown preset '{}'", c.preset));
  }
  validate(spec);
  const Dataset data = generate_synthetic(spec);
  if (c.out.empty()) throw Error(ErrorKind::Spec, "field 'out': an output path is required");
  save_dataset(data, c.out);
  out << fmt::format("classes: {}\nparts: {}\nimages: {}\nout: {}\n", data.num_classes, data.num_parts,
                     data.records.size(), c.out);
  return kOk;
}

int cmd_cluster(const RunConfig& c, std::ostream& out) {
  const FeatureSet fs = parse_features(read_file(c.features_path));
  const auto n = static_cast<std::size_t>(fs.values.rows());
  if (c.clusters == 0 || c.clusters > n)
    throw Error(ErrorKind::Spec, fmt::format("field 'clusters': {} clusters requested from {} features", c.clusters, n));
  const std::size_t k_init = c.k_init ? c.k_init : std::min(n, 4 * c.clusters);
  const Agglomeration agg = agglomerate(fs.values, k_init, c.clusters, c.drop_fraction, c.seed);
  const std::string text = format_clusters(agg.clusters, fs.ids);
  if (!c.out.empty()) write_file(c.out, text);
  out << fmt::format("features: {}\nk_init: {}\nclusters: {}\ndropped: {}\n", n, k_init, agg.clusters.size(),
                     agg.dropped);
  if (c.out.empty()) out << text;
  return kOk;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Dataset data;
  StructureConfig sc = c.structure;
  TrainConfig tc = c.train;
  try {
    LoadStats ls;
    data = load_dataset(c.data_path, &ls);
    sc.seed = c.seed;
    tc.seed = c.seed;
    tc.mode = mode_from_string(c.mode);
    validate(sc);
    validate(tc);
    if (c.out.empty()) throw Error(ErrorKind::Spec, "field 'out': a model directory is required");
    out << fmt::format("images: {}\nduplicates_dropped: {}\n", data.records.size(), ls.duplicates_dropped);
  } catch (const std::exception& e) {
    return input_error(e, err);
  }

  Bundle bundle;
  try {
    bundle = train_all(data, sc, tc);
    save_bundle(bundle, c.out);
  } catch (const std::exception& e) {
    err << "training failed: " << e.what() << '\n';
    return kTrainingFailed;
  }

  std::set<PairKey> modeled;
  std::size_t total = 0;
  for (std::size_t k = 0; k < bundle.networks.size(); ++k) {
    const ClassStats& s = bundle.stats[k];
    out << fmt::format("class_{}_nodes: {}\nclass_{}_edges: {}\nclass_{}_gadgets: {}\nclass_{}_pairs: {}\n", k, s.nodes,
                       k, s.edges, k, s.gadgets, k, s.pairs);
    total += s.gadgets;
    for (const VariableId& v : bundle.networks[k].variables())
      if (v.kind == VariableKind::SpatialPair) modeled.insert(v.pair_key());
  }
  out << fmt::format("gadget_count: {}\npair_count: {}\nflat_pair_count: {}\nshared_groups: {}\nout: {}\n", total,
                     modeled.size(), pair_count(data.num_parts), bundle.shared.size(), c.out);
  return kOk;
}

int cmd_classify(const RunConfig& c, std::ostream& out) {
  const Bundle bundle = load_bundle(c.model_dir);
  const Dataset data = load_dataset(c.data_path);
  if (data.num_parts != bundle.num_parts)
    throw Error(ErrorKind::Mismatch,
                fmt::format("dataset has {} parts but the model was trained on {}", data.num_parts, bundle.num_parts));
  std::string text;
  for (const ImageRecord& img : data.records) {
    const Classification r = classify(img, bundle);
    text += fmt::format("{}: {}", img.id, r.label);
    for (double s : r.log_scores) text += fmt::format(" {:.9g}", s);
    text += '\n';
  }
  if (!c.out.empty()) write_file(c.out, text);
  out << text;
  return kOk;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const Bundle bundle = load_bundle(c.model_dir);
  const Dataset data = load_dataset(c.data_path);
  const std::string text = format_report(evaluate_bundle(bundle, data));
  if (!c.out.empty()) write_file(c.out, text);
  out << text;
  return kOk;
}

int cmd_inspect(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Bundle bundle = load_bundle(c.model_dir);
  out << fmt::format("mode: {}\nparts: {}\nclasses: {}\n", to_string(bundle.mode), bundle.num_parts,
                     bundle.num_classes);
  std::set<PairKey> pairs;
  for (std::size_t k = 0; k < bundle.networks.size(); ++k) {
    const Network& net = bundle.networks[k];
    out << fmt::format("class_{}_nodes: {}\nclass_{}_edges: {}\nclass_{}_shared_edges: {}\n", k, net.size(), k,
                       net.edges().size(), k, net.shared_edges().size());
    out << fmt::format("class_{}_gadgets: {}\nclass_{}_pairs: {}\n", k, gadget_count(net), k, modeled_pair_count(net));
    for (const VariableId& v : net.variables())
      if (v.kind == VariableKind::SpatialPair) pairs.insert(v.pair_key());
  }
  out << fmt::format("shared_groups: {}\n", bundle.shared.size());
  out << fmt::format("flat_pairs_unordered: {}\nflat_pairs_ordered: {}\n", pair_count(bundle.num_parts),
                     2 * pair_count(bundle.num_parts));

  if ((c.ablate > 0 || !c.mpe_image.empty()) && c.data_path.empty())
    throw Error(ErrorKind::Spec, "field 'data': ablation and MPE dumps need a dataset");
  if (c.data_path.empty()) return kOk;
  const Dataset data = load_dataset(c.data_path);
  check_vocabulary(bundle, data);

  if (!c.mpe_image.empty()) {
    const ImageRecord* img = nullptr;
    for (const ImageRecord& r : data.records)
      if (r.id == c.mpe_image) img = &r;
    if (!img) throw Error(ErrorKind::Spec, fmt::format("field 'mpe-image': no image '{}'", c.mpe_image));
    for (std::size_t k = 0; k < bundle.networks.size(); ++k) {
      const Network& net = bundle.networks[k];
      const MpeResult r = mpe(to_mpn(net), assignment_to_indicators(*img, net, {}, bundle.num_parts));
      out << fmt::format("mpe_class_{}_root_log: {:.9g}\n", k, r.root_log);
      for (auto [e, t] : r.traversal.t)
        out << fmt::format("mpe_class_{}_edge_{}: {} -> {} count={}\n", k, e, net.edge(e).parent, net.edge(e).child, t);
    }
  }

  if (c.ablate > 0) {
    const auto ranked = ablate_pairs(bundle, data);
    std::size_t k = c.ablate;
    if (k > ranked.size()) {
      err << fmt::format("warning: {} pairs requested but only {} carry gadgets\n", k, ranked.size());
      k = ranked.size();
    }
    for (std::size_t i = 0; i < k; ++i)
      out << fmt::format("ablation_{}: pair={}-{} drop={:.6f} accuracy={:.6f} gadgets={}\n", i + 1, ranked[i].pair.a,
                         ranked[i].pair.b, ranked[i].drop, ranked[i].accuracy, ranked[i].gadgets);
  }
  return kOk;
}

}  // namespace

std::vector<Check> run_verification(double fixture_perturbation) {
  std::vector<Check> checks;

  Network fig = two_variable_example();
  const EdgeId first_root_edge = fig.node(fig.root()).children.front();
  fig.set_weight(first_root_edge, fig.weight(first_root_edge) + fixture_perturbation);
  const std::uint32_t x1 = part_variable(fig, 0), x2 = part_variable(fig, 1);

  IndicatorValues s1001(fig.variables().size());
  s1001.set_part(x1, true);
  s1001.set_part(x2, false);
  checks.push_back(make_check("fixture_value", evaluate(fig, s1001).root_value, 0.12, 1e-12));

  IndicatorValues q(fig.variables().size());
  q.set_part(x1, true);
  q.marginalize_part(x2);
  const std::uint32_t query[] = {x2};
  const MpeResult r = mpe(to_mpn(fig), q, query);
  checks.push_back(make_check("fixture_mpe_x2", r.completed.part(x2, Polarity::Positive), 1.0, 0.0));
  const EvaluationResult maxed = evaluate(to_mpn(fig), q);
  const auto& root_children = fig.node(fig.root()).children;
  auto branch = [&](std::size_t i) {
    const Edge& e = fig.edge(root_children.at(i));
    return e.weight * std::exp(maxed.log_values[e.child]);
  };
  checks.push_back(make_check("fixture_branch_1", branch(0), 0.192, 1e-12));
  checks.push_back(make_check("fixture_branch_2", branch(1), 0.072, 1e-12));
  checks.push_back(make_check("fixture_mpe_oracle", brute_force_mpe(to_mpn(fig), q).value, r.root_value, 1e-12));

  std::mt19937_64 rng(20240601);
  double marginal_err = 0.0, mpe_reeval = 0.0, mpe_oracle = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Network net = random_network(rng);
    const IndicatorValues ev = random_evidence(net, rng);
    marginal_err = std::max(marginal_err, relative_error(evaluate(net, ev).root_value, brute_force_marginal(net, ev)));
    std::vector<std::uint32_t> marginal;
    for (std::uint32_t v = 0; v < net.variables().size(); ++v)
      if ((ev.matrix().row(v).array() == 1.0).all()) marginal.push_back(v);
    const MpeResult m = mpe(to_mpn(net), ev, marginal);
    mpe_reeval = std::max(mpe_reeval, std::abs(evaluate(to_mpn(net), m.completed).root_value - m.root_value));
    mpe_oracle = std::max(mpe_oracle, std::abs(brute_force_mpe(to_mpn(net), ev).value - m.root_value));
  }
  checks.push_back(make_check("marginal_oracle_rel_error", marginal_err, 0.0, 1e-9));
  checks.push_back(make_check("mpe_reevaluation_error", mpe_reeval, 0.0, 1e-12));
  checks.push_back(make_check("mpe_oracle_error", mpe_oracle, 0.0, 1e-12));

  double grad_err = 0.0;
  int fixtures = 0;
  for (int attempt = 0; fixtures < 50 && attempt < 1000; ++attempt) {
    const Network net = random_network(rng);
    const IndicatorValues pos = random_evidence(net, rng), neg = random_evidence(net, rng);
    const MpeResult rp = mpe(to_mpn(net), pos), rn = mpe(to_mpn(net), neg);
    if (!std::isfinite(rp.root_log) || !std::isfinite(rn.root_log)) continue;
    double worst = 0.0;
    bool stable = true;
    for (EdgeId e : net.sum_edges()) {
      const FiniteDifference fd = finite_difference_gradient(to_mpn(net), pos, neg, e);
      if (!fd.conclusive) {
        stable = false;
        break;
      }
      const double analytic = static_cast<double>(rp.traversal[e] - rn.traversal[e]) / net.weight(e);
      worst = std::max(worst, gradient_error(analytic, fd.value));
    }
    if (!stable) continue;
    ++fixtures;
    grad_err = std::max(grad_err, worst);
  }
  checks.push_back(make_check("gradient_fixtures", fixtures, 50, 0.0));
  checks.push_back(make_check("gradient_rel_error", grad_err, 0.0, 1e-4));

  double link_err = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(1 + i % 5, 3), b = Eigen::MatrixXd::Random(2 + i % 3, 3);
    double total = 0.0;
    for (Eigen::Index x = 0; x < a.rows(); ++x)
      for (Eigen::Index y = 0; y < b.rows(); ++y) total += (a.row(x) - b.row(y)).norm();
    link_err = std::max(link_err, std::abs(average_link(a, b) - total / static_cast<double>(a.rows() * b.rows())));
  }
  checks.push_back(make_check("average_link_error", link_err, 0.0, 1e-12));

  const PlantedBlobs blobs = planted_blobs(25, 4, 12.0, 7);
  std::vector<std::vector<std::size_t>> singletons;
  for (Eigen::Index i = 0; i < blobs.features.rows(); i += 5) singletons.push_back({static_cast<std::size_t>(i)});
  const auto fast = merge_by_average_link(blobs.features, singletons, 1).merges;
  const auto slow = brute_force_merges(blobs.features, singletons, 1);
  checks.push_back(make_check("merge_order_mismatch", fast == slow ? 0.0 : 1.0, 0.0, 0.0));

  const Agglomeration agg = agglomerate(blobs.features, 12, 4, 0.1, 7);
  std::size_t impure = 0;
  for (const Cluster& c : agg.clusters)
    for (std::size_t m : c.members) impure += blobs.blob[m] != blobs.blob[c.members.front()];
  std::set<std::size_t> covered;
  for (const Cluster& c : agg.clusters) covered.insert(blobs.blob[c.members.front()]);
  checks.push_back(make_check("blob_recovery_errors", static_cast<double>(impure + (4 - covered.size())), 0.0, 0.0));
  return checks;
}

std::string format_checks(const std::vector<Check>& checks) {
  std::string out;
  std::size_t failed = 0;
  for (const Check& c : checks) {
    out += fmt::format("{}: measured={:.12g} expected={:.12g} tolerance={:g} {}\n", c.name, c.measured, c.expected,
                       c.tolerance, c.pass ? "PASS" : "FAIL");
    failed += !c.pass;
  }
  out += fmt::format("checks: {}\nfailed: {}\n", checks.size(), failed);
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Hierarchical spatial sum-product networks over part detections"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--seed", c.seed, "Seed for every random choice");
  app.add_option("--mode", c.mode, "spn, fs-spn, ihs-spn or jhs-spn");
  StructureConfig& s = c.structure;
  app.add_option("--sub-images", s.s, "Sub-images per partition");
  app.add_option("--candidates", s.M, "Partitions sampled per region");
  app.add_option("--keep", s.m, "Partitions kept per region");
  app.add_option("--depth", s.D, "Partition recursion depth");
  app.add_option("--min-area", s.min_region_area, "Smallest region area as a fraction of the image");
  app.add_option("--tau", s.tau, "Pair co-occurrence threshold among positives");
  TrainConfig& t = c.train;
  app.add_option("--gen-epochs", t.generative_epochs, "Hard EM epochs");
  app.add_option("--alpha", t.smoothing, "Count smoothing");
  app.add_option("--prune-threshold", t.prune_threshold, "Sum edges at or below this weight are removed");
  app.add_option("--eta", t.learning_rate, "Discriminative learning rate");
  app.add_option("--margin", t.margin, "Ranking margin");
  app.add_option("--pairs-per-epoch", t.max_pairs_per_epoch, "Positive/negative pairs sampled per epoch");
  app.add_option("--disc-epochs", t.discriminative_epochs, "Discriminative epochs");
  app.add_option("--patience", t.early_stop_patience, "Early-stopping patience in epochs");
  app.add_option("--validation-fraction", t.validation_fraction, "Held-out share of the training data");

  auto* gen = app.add_subcommand("generate", "Write a synthetic part-detection dataset");
  gen->add_option("--preset", c.preset, "Built-in scene family (mirror)");
  gen->add_option("--spec", c.spec_path, "Synthetic spec file");
  gen->add_option("--images", c.images, "Images per class for presets");
  gen->add_option("--out", c.out, "Dataset file to write");

  auto* clu = app.add_subcommand("cluster", "Cluster feature vectors into part candidates");
  clu->add_option("--features", c.features_path, "Feature file")->required();
  clu->add_option("--k-init", c.k_init, "k-means clusters before merging (default 4x target)");
  clu->add_option("--clusters", c.clusters, "Clusters to keep");
  clu->add_option("--drop-fraction", c.drop_fraction, "Small-cluster threshold relative to the mean size");
  clu->add_option("--out", c.out, "Cluster file to write");

  auto* tr = app.add_subcommand("train", "Learn structure and weights for every class");
  tr->add_option("--data", c.data_path, "Training dataset")->required();
  tr->add_option("--out", c.out, "Model directory");

  auto* cls = app.add_subcommand("classify", "Score and label every image");
  cls->add_option("--model", c.model_dir, "Model directory")->required();
  cls->add_option("--data", c.data_path, "Dataset")->required();
  cls->add_option("--out", c.out, "Write labels here as well");

  auto* ev = app.add_subcommand("evaluate", "Average precision, accuracy and confusion matrix");
  ev->add_option("--model", c.model_dir, "Model directory")->required();
  ev->add_option("--data", c.data_path, "Held-out dataset")->required();
  ev->add_option("--out", c.out, "Write the report here as well");

  auto* ins = app.add_subcommand(
      "inspect",
      "Network statistics, MPE edge counts and pair ablation. A flat model over N parts has N(N-1)/2 unordered "
      "pairs, printed as flat_pairs_unordered; N(N-1) counts ordered pairs. For 500 parts these are 124,750 and "
      "249,500.");
  ins->add_option("--model", c.model_dir, "Model directory")->required();
  ins->add_option("--data", c.data_path, "Held-out dataset for ablation and MPE");
  ins->add_option("--ablate-pairs", c.ablate, "Report the k pairs whose ablation costs the most accuracy");
  ins->add_option("--mpe-image", c.mpe_image, "Print the MPE edge counts of this image under every class");

  auto* ver = app.add_subcommand("verify", "Run the oracle suite");
  ver->add_option("--perturb-fixture", c.perturb)->group("");

  std::vector<const char*> argv{"hsspn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  const bool seed_given = app.get_option("--seed")->count() > 0;

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  echo(c, name, out);
  if (sub == tr) return cmd_train(c, out, err);
  try {
    if (sub == gen) return cmd_generate(c, seed_given, out);
    if (sub == clu) return cmd_cluster(c, out);
    if (sub == cls) return cmd_classify(c, out);
    if (sub == ev) return cmd_evaluate(c, out);
    if (sub == ins) return cmd_inspect(c, out, err);
    if (sub == ver) {
      const auto checks = run_verification(c.perturb);
      out << format_checks(checks);
      for (const Check& chk : checks)
        if (!chk.pass) return kVerifyFailed;
      return kOk;
    }
  } catch (const std::exception& e) {
    return input_error(e, err);
  }
  return kInputError;
}

}  // namespace hsspn::cli
