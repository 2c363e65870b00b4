#include <doctest.h>

#include <random>

#include "hsspn/data.hpp"
#include "hsspn/learning.hpp"
#include "hsspn/spatial.hpp"
#include "support.hpp"

using namespace hsspn;
using hsspn::test::image;

namespace {

struct Gadget {
  Network net;
  PairGadget g;

  Gadget() {
    net.add_region(Region::whole());
    g = build_pair_gadget(net, {0, 1});
    net.set_root(g.sum);
  }

  double weight(SpatialRelation r) const { return net.weight(g.edges[static_cast<std::size_t>(r)]); }
};

ImageRecord left_of(std::string id, double dy = 0) { return image(std::move(id), 0, {{0, {10, 50}}, {1, {60, 50 + dy}}}); }
ImageRecord right_of(std::string id) { return image(std::move(id), 0, {{0, {60, 50}}, {1, {10, 50}}}); }

std::vector<double> weights(const Network& net) {
  std::vector<double> w;
  for (EdgeId e : net.sum_edges()) w.push_back(net.weight(e));
  return w;
}

void check_normalized(const Network& net) {
  for (const Node& n : net.nodes()) {
    if (n.kind != NodeKind::Sum) continue;
    double total = 0;
    for (EdgeId e : n.children) {
      CHECK(net.weight(e) >= 0.0);
      total += net.weight(e);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

}  // namespace

TEST_SUITE("learning") {

TEST_CASE("huge smoothing keeps the weights uniform") {
  Gadget gd;
  std::vector<ImageRecord> imgs;
  for (int i = 0; i < 10; ++i) imgs.push_back(left_of("l" + std::to_string(i)));
  std::vector<const ImageRecord*> ptrs;
  for (const auto& i : imgs) ptrs.push_back(&i);
  TrainConfig cfg;
  cfg.smoothing = 1e12;
  cfg.generative_epochs = 1;
  generative_train(gd.net, ptrs, cfg);
  for (SpatialRelation r : kAllRelations) CHECK(gd.weight(r) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("one image without smoothing puts all mass on its traversed edge") {
  Gadget gd;
  const ImageRecord img = left_of("a");
  const ImageRecord* ptr[] = {&img};
  TrainConfig cfg;
  cfg.smoothing = 0.0;
  cfg.generative_epochs = 1;
  generative_train(gd.net, ptr, cfg);
  CHECK(gd.weight(SpatialRelation::LeftOf) == 1.0);
  CHECK(gd.weight(SpatialRelation::RightOf) == 0.0);
  CHECK(gd.weight(SpatialRelation::Above) == 0.0);
  CHECK(gd.weight(SpatialRelation::Below) == 0.0);
}

TEST_CASE("hard EM without smoothing never lowers the mean max-product log value") {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const Dataset data = generate_synthetic(mirror_preset(40, s));
    StructureConfig sc;
    sc.seed = s;
    Network net = build_class_network(learn_partition_tree(data, 0, sc), data, 0, sc);
    TrainConfig cfg;
    cfg.smoothing = 0.0;
    const auto rep = generative_train(net, data.of_class(0), cfg);
    REQUIRE(rep.mean_log.size() >= 2);
    for (std::size_t i = 1; i < rep.mean_log.size(); ++i) CHECK(rep.mean_log[i] >= rep.mean_log[i - 1] - 1e-9);
  }
}

TEST_CASE("generative training needs positives") {
  Gadget gd;
  CHECK_THROWS_AS(generative_train(gd.net, {}, TrainConfig{}), Error);
}

TEST_CASE("pruning") {
  Network net;
  const NodeId a = net.part_leaf(0, Polarity::Positive), b = net.part_leaf(0, Polarity::Negative);
  const NodeId c = net.part_leaf(1, Polarity::Positive), d = net.part_leaf(1, Polarity::Negative);
  const NodeId inner = net.add_product();
  net.connect(inner, a);
  net.connect(inner, d);
  const NodeId p1 = net.add_product();
  net.connect(p1, a);
  net.connect(p1, c);
  const NodeId p2 = net.add_product();
  net.connect(p2, b);
  net.connect(p2, c);
  const NodeId s = net.add_sum();
  net.connect(s, p1, 0.7);
  net.connect(s, p2, 0.3);
  net.connect(s, inner, 0.0);
  net.set_root(s);

  const PruneResult r = prune(net, 1e-6);
  CHECK(r.edges_removed == 3);  // the zero edge plus both edges of the dangling product
  CHECK(r.nodes_removed == 2);  // the product and the leaf only it used
  const Node& root = r.network.node(r.network.root());
  REQUIRE(root.children.size() == 2);
  CHECK(r.network.weight(root.children[0]) == doctest::Approx(0.7));
  CHECK(r.network.weight(root.children[1]) == doctest::Approx(0.3));
  CHECK(validate(r.network).valid());

  const PruneResult again = prune(r.network, 1e-6);
  CHECK(again.edges_removed == 0);
  CHECK(again.nodes_removed == 0);
  CHECK(again.network == r.network);

  CHECK_THROWS_AS(prune(net, 0.9), Error);
}

TEST_CASE("discriminative step") {
  SUBCASE("identical trees leave the weights alone") {
    Gadget gd;
    const auto before = weights(gd.net);
    const MarginRecord m = discriminative_step(gd.net, left_of("p"), left_of("n", 5), 0.01);
    CHECK(m.slack == doctest::Approx(1.25));  // the negative also activates Below: 1 - (0.25 - 0.5)
    CHECK(weights(gd.net) == before);
  }
  SUBCASE("the positive-only edge grows and the negative-only edge shrinks") {
    Gadget gd;
    discriminative_step(gd.net, left_of("p"), right_of("n"), 0.01);
    CHECK(gd.weight(SpatialRelation::LeftOf) > 0.25);
    CHECK(gd.weight(SpatialRelation::RightOf) < 0.25);
    check_normalized(gd.net);
  }
  SUBCASE("a satisfied margin changes nothing") {
    Gadget gd;
    gd.net.set_weight(gd.g.edges[0], 0.91);
    for (std::size_t i = 1; i < 4; ++i) gd.net.set_weight(gd.g.edges[i], 0.03);
    const auto before = weights(gd.net);
    const MarginRecord m = discriminative_step(gd.net, left_of("p"), right_of("n"), 0.01, 0.5);
    CHECK(m.slack == 0.0);
    CHECK(weights(gd.net) == before);
  }
}

TEST_CASE("updates keep every sum normalized and nonnegative") {
  std::mt19937_64 rng(12);
  Gadget gd;
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 200; ++i) {
    const ImageRecord p = image("p", 0, {{0, {u(rng), u(rng)}}, {1, {u(rng), u(rng)}}});
    const ImageRecord n = image("n", 0, {{0, {u(rng), u(rng)}}, {1, {u(rng), u(rng)}}});
    discriminative_step(gd.net, p, n, 0.5);
    for (EdgeId e : gd.net.sum_edges()) CHECK(gd.net.weight(e) >= kWeightFloor * 0.25);
  }
  check_normalized(gd.net);
}

TEST_CASE("joint stage: mode check and equivalence without sharing") {
  const Dataset data = generate_synthetic(mirror_preset(30, 2));
  const auto [train, validation] = split_per_class(data, 0.8, 2);
  std::vector<Network> nets;
  TrainConfig cfg;
  cfg.discriminative_epochs = 2;
  for (ClassId k = 0; k < 2; ++k) {
    nets.push_back(build_flat_network(data.num_parts, k));
    generative_train(nets.back(), train.of_class(k), cfg);
  }
  std::vector<Network> a = nets, b = nets;
  CHECK_THROWS_AS(joint_train(a, {}, train, validation, cfg), Error);
  discriminative_train(a, {}, train, validation, cfg);
  cfg.mode = Mode::JHS_SPN;
  joint_train(b, {}, train, validation, cfg);
  for (std::size_t k = 0; k < 2; ++k) CHECK(weights(a[k]) == weights(b[k]));
}

TEST_CASE("tied weights are equal across a group") {
  Gadget x, y;
  y.net.set_weight(y.g.edges[0], 0.7);
  for (std::size_t i = 1; i < 4; ++i) y.net.set_weight(y.g.edges[i], 0.1);
  std::vector<Network> nets{x.net, y.net};
  std::vector<SharedGroup> groups;
  for (std::size_t i = 0; i < 4; ++i) groups.push_back({i, {{0, x.g.edges[i]}, {1, y.g.edges[i]}}});
  tie_shared_weights(nets, groups);
  for (std::size_t i = 0; i < 4; ++i) CHECK(nets[0].weight(x.g.edges[i]) == nets[1].weight(y.g.edges[i]));
  check_normalized(nets[0]);
}

TEST_CASE("train_all is deterministic and classify handles empty images") {
  const Dataset data = generate_synthetic(mirror_preset(30, 4));
  StructureConfig sc;
  TrainConfig tc;
  tc.discriminative_epochs = 2;
  const Bundle a = train_all(data, sc, tc), b = train_all(data, sc, tc);
  REQUIRE(a.networks.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) CHECK(serialize(a.networks[k]) == serialize(b.networks[k]));

  const Classification c = classify(image("empty", 0, {}, 200, 200), a);
  CHECK(c.log_scores.size() == 2);
  CHECK(c.label < 2);
  for (double s : c.log_scores) CHECK(std::isfinite(s));
}

TEST_CASE("duplicating a positive does not lower its max-product value") {
  const Dataset data = generate_synthetic(mirror_preset(20, 5));
  auto positives = data.of_class(0);
  TrainConfig cfg;
  cfg.smoothing = 0.0;
  cfg.generative_epochs = 1;
  for (std::size_t i = 0; i < 5; ++i) {
    Network base = build_flat_network(data.num_parts, 0), dup = base;
    generative_train(base, positives, cfg);
    auto more = positives;
    more.push_back(positives[i]);
    generative_train(dup, more, cfg);
    const auto ev = assignment_to_indicators(*positives[i], base);
    CHECK(evaluate(dup, ev, Combine::Max).root_value >= evaluate(base, ev, Combine::Max).root_value - 1e-12);
  }
}

TEST_CASE("mode names round-trip") {
  for (Mode m : {Mode::SPN, Mode::FS_SPN, Mode::IHS_SPN, Mode::JHS_SPN}) CHECK(mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(mode_from_string("deep"), Error);
}

}  // TEST_SUITE
