#include <doctest.h>

#include <random>

#include "hsspn/inference.hpp"
#include "hsspn/network.hpp"
#include "hsspn/oracle.hpp"
#include "support.hpp"

using namespace hsspn;
using hsspn::test::fixture_evidence;

TEST_SUITE("network") {

TEST_CASE("two-variable fixture is valid and scores S(1,0,0,1) = 0.12") {
  const Network net = two_variable_example();
  CHECK(validate(net).valid());
  CHECK(evaluate(net, fixture_evidence(net, 1, 0)).root_value == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(evaluate_linear<double>(net, fixture_evidence(net, 1, 0)) == doctest::Approx(0.12).epsilon(1e-12));
}

TEST_CASE("all indicators on gives total mass 1") {
  const Network net = two_variable_example();
  CHECK(evaluate(net, fixture_evidence(net, -1, -1)).root_value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one-hot states sum to one") {
  const Network net = two_variable_example();
  double total = 0;
  for (int a : {0, 1})
    for (int b : {0, 1}) total += evaluate(net, fixture_evidence(net, a, b)).root_value;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("product with repeated part is a decomposability violation naming it") {
  Network net;
  const NodeId x = net.part_leaf(1, Polarity::Positive);
  const NodeId nx = net.part_leaf(1, Polarity::Negative);
  const NodeId s1 = net.add_sum();
  net.connect(s1, x, 0.5);
  net.connect(s1, nx, 0.5);
  const NodeId p = net.add_product();
  net.connect(p, s1);
  net.connect(p, x);
  net.set_root(p);
  const ValidityReport r = validate(net);
  REQUIRE(r.count(ViolationKind::Decomposability) == 1);
  for (const Violation& v : r.violations)
    if (v.kind == ViolationKind::Decomposability) CHECK(v.node == p);
}

TEST_CASE("self-loop is reported as a cycle") {
  Network net;
  const NodeId x = net.part_leaf(0, Polarity::Positive);
  const NodeId s = net.add_sum();
  net.connect(s, x, 1.0);
  net.connect(s, s, 1.0);
  net.set_root(s);
  CHECK(validate(net).count(ViolationKind::Cycle) >= 1);
}

TEST_CASE("orphans and incomplete sums are reported") {
  Network net;
  const NodeId x = net.part_leaf(0, Polarity::Positive);
  const NodeId y = net.part_leaf(1, Polarity::Positive);
  net.part_leaf(2, Polarity::Positive);
  const NodeId s = net.add_sum();
  net.connect(s, x, 0.5);
  net.connect(s, y, 0.5);
  net.set_root(s);
  const ValidityReport r = validate(net);
  CHECK(r.count(ViolationKind::Unreachable) == 1);
  CHECK(r.count(ViolationKind::Completeness) == 1);
  CHECK_FALSE(r.valid());
}

TEST_CASE("assignment_to_indicators encodes presence, queries and missing partners") {
  Network net;
  net.add_region(Region::whole());
  const NodeId a = net.part_leaf(0, Polarity::Positive), na = net.part_leaf(0, Polarity::Negative);
  const NodeId b = net.part_leaf(1, Polarity::Positive), nb = net.part_leaf(1, Polarity::Negative);
  const NodeId l = net.spatial_leaf({0, 1}, SpatialRelation::LeftOf);
  const NodeId s0 = net.add_sum(), s1 = net.add_sum();
  net.connect(s0, a, 0.5);
  net.connect(s0, na, 0.5);
  net.connect(s1, b, 0.5);
  net.connect(s1, nb, 0.5);
  const NodeId p = net.add_product();
  net.connect(p, s0);
  net.connect(p, s1);
  net.connect(p, l);
  net.set_root(p);
  const std::uint32_t v0 = net.node(a).variable, v1 = net.node(b).variable, vp = net.node(l).variable;

  const ImageRecord only_first = test::image("i", 0, {{0, {10, 10}}});
  IndicatorValues ev = assignment_to_indicators(only_first, net);
  CHECK(ev.part(v0, Polarity::Positive) == 1.0);
  CHECK(ev.part(v0, Polarity::Negative) == 0.0);
  CHECK(ev.part(v1, Polarity::Positive) == 0.0);
  CHECK(ev.part(v1, Polarity::Negative) == 1.0);
  for (SpatialRelation r : kAllRelations) CHECK(ev.relation(vp, r) == 1.0);

  const PartId query[] = {1};
  ev = assignment_to_indicators(only_first, net, query);
  CHECK(ev.part(v1, Polarity::Positive) == 1.0);
  CHECK(ev.part(v1, Polarity::Negative) == 1.0);

  const ImageRecord both = test::image("j", 0, {{0, {10, 80}}, {1, {50, 20}}});
  ev = assignment_to_indicators(both, net);
  CHECK(ev.relation(vp, SpatialRelation::LeftOf) == 1.0);
  CHECK(ev.relation(vp, SpatialRelation::Below) == 1.0);
  CHECK(ev.relation(vp, SpatialRelation::RightOf) == 0.0);
  CHECK(ev.relation(vp, SpatialRelation::Above) == 0.0);

  CHECK_THROWS_AS(assignment_to_indicators(test::image("k", 0, {{0, {100, 5}}}), net), Error);
}

TEST_CASE("evaluation is affine in every single indicator") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const Network net = random_network(rng);
    IndicatorValues ev = random_evidence(net, rng);
    const auto v = static_cast<Eigen::Index>(rng() % net.variables().size());
    const Eigen::Index c = net.variables()[v].kind == VariableKind::Part ? rng() % 2 : rng() % 4;
    double at[3];
    const double xs[3] = {0.0, 0.4, 1.0};
    for (int k = 0; k < 3; ++k) {
      ev.matrix()(v, c) = xs[k];
      at[k] = evaluate_linear<double>(net, ev);
    }
    CHECK(at[1] == doctest::Approx(0.6 * at[0] + 0.4 * at[2]).epsilon(1e-12));
  }
}

TEST_CASE("marginalizing a part equals the sum of its two one-hot evaluations") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 30; ++i) {
    const Network net = random_network(rng);
    IndicatorValues ev = random_evidence(net, rng);
    std::uint32_t v = 0;
    while (net.variables()[v].kind != VariableKind::Part) ++v;
    ev.marginalize_part(v);
    const double marg = evaluate(net, ev).root_value;
    ev.set_part(v, true);
    const double pos = evaluate(net, ev).root_value;
    ev.set_part(v, false);
    const double neg = evaluate(net, ev).root_value;
    CHECK(std::abs(marg - (pos + neg)) <= 1e-9 * std::max(1.0, marg));
  }
}

TEST_CASE("scaling the root sum scales the root value") {
  Network net = two_variable_example();
  const IndicatorValues ev = fixture_evidence(net, 1, -1);
  const double before = evaluate(net, ev).root_value;
  for (EdgeId e : net.node(net.root()).children) net.set_weight(e, 3.0 * net.weight(e));
  CHECK(evaluate(net, ev).root_value == doctest::Approx(3.0 * before).epsilon(1e-12));
}

TEST_CASE("log-domain values agree with a linear recheck per node") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const Network net = random_network(rng);
    const IndicatorValues ev = random_evidence(net, rng);
    const EvaluationResult r = evaluate(net, ev);
    for (NodeId id = 0; id < net.size(); ++id) {
      const Node& n = net.node(id);
      if (n.is_leaf()) continue;
      double expect = n.kind == NodeKind::Product ? 1.0 : 0.0;
      for (EdgeId e : n.children) {
        const double c = std::exp(r.log_values[net.edge(e).child]);
        if (n.kind == NodeKind::Product) expect *= c;
        else expect += net.weight(e) * c;
      }
      CHECK(std::abs(std::exp(r.log_values[id]) - expect) <= 1e-12);
    }
  }
}

TEST_CASE("normalize_weights") {
  Network net;
  const NodeId x = net.part_leaf(0, Polarity::Positive), nx = net.part_leaf(0, Polarity::Negative);
  const NodeId s = net.add_sum();
  const EdgeId e1 = net.connect(s, x, 2.0), e2 = net.connect(s, nx, 3.0);
  net.set_root(s);
  Network n = normalize_weights(net);
  CHECK(n.weight(e1) == doctest::Approx(0.4));
  CHECK(n.weight(e2) == doctest::Approx(0.6));

  Network three;
  const NodeId a = three.part_leaf(0, Polarity::Positive), b = three.part_leaf(0, Polarity::Negative);
  const NodeId c = three.add_constant();
  const NodeId t = three.add_sum();
  const EdgeId f1 = three.connect(t, a, 5.0), f2 = three.connect(t, b, 0.0), f3 = three.connect(t, c, 0.0);
  three.set_root(t);
  three = normalize_weights(three);
  CHECK(three.weight(f1) == 1.0);
  CHECK(three.weight(f2) == 0.0);
  CHECK(three.weight(f3) == 0.0);

  const Network fixture = two_variable_example();
  const Network again = normalize_weights(fixture);
  for (EdgeId e : fixture.sum_edges()) CHECK(std::abs(again.weight(e) - fixture.weight(e)) <= 1e-12);
}

TEST_CASE("normalize_weights preserves the order of children") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int i = 0; i < 20; ++i) {
    Network net = random_network(rng);
    for (EdgeId e : net.sum_edges()) net.set_weight(e, u(rng));
    const Network n = normalize_weights(net);
    for (const Node& node : net.nodes()) {
      if (node.kind != NodeKind::Sum) continue;
      for (EdgeId a : node.children)
        for (EdgeId b : node.children)
          if (net.weight(a) < net.weight(b)) CHECK(n.weight(a) < n.weight(b));
    }
  }
}

TEST_CASE("serialization round-trips every field") {
  Network net = two_variable_example();
  net.set_label(3);
  net.mark_shared(net.sum_edges().front());
  CHECK(deserialize(serialize(net)) == net);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) {
    const Network r = random_network(rng);
    CHECK(deserialize(serialize(r)) == r);
    CHECK(serialize(deserialize(serialize(r))) == serialize(r));
  }
}

TEST_CASE("malformed model files are rejected") {
  const std::string good = serialize(two_variable_example());
  std::string negative = good;
  const auto pos = negative.find(" 0.3");
  REQUIRE(pos != std::string::npos);
  negative.replace(pos, 4, " -0.1");
  CHECK_THROWS_AS(deserialize(negative), Error);

  std::string unknown = good;
  const auto sum = unknown.find(" sum");
  unknown.replace(sum, 4, " blend");
  try {
    deserialize(unknown);
    FAIL("accepted an unknown node kind");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("blend") != std::string::npos);
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  CHECK_THROWS_AS(deserialize(""), Error);
  CHECK_THROWS_AS(deserialize("spn-model v2\n"), Error);
}

}  // TEST_SUITE
