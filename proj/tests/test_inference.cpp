#include <doctest.h>

#include <random>

#include "hsspn/inference.hpp"
#include "hsspn/oracle.hpp"
#include "support.hpp"

using namespace hsspn;
using hsspn::test::fixture_evidence;

namespace {

std::vector<std::uint32_t> marginalized(const Network& net, const IndicatorValues& ev) {
  std::vector<std::uint32_t> q;
  for (std::uint32_t v = 0; v < net.variables().size(); ++v)
    if ((ev.matrix().row(v).array() == 1.0).all()) q.push_back(v);
  return q;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("max-product root of the fixture at (1,0,1,1) is 0.192") {
  const Network net = two_variable_example();
  CHECK(evaluate(to_mpn(net), fixture_evidence(net, 1, -1)).root_value == doctest::Approx(0.192).epsilon(1e-12));
}

TEST_CASE("MPE of the fixture completes x2 = 1") {
  const Network net = two_variable_example();
  const std::uint32_t q[] = {1};
  const MpeResult r = mpe(to_mpn(net), fixture_evidence(net, 1, -1), q);
  CHECK(r.completed.part(1, Polarity::Positive) == 1.0);
  CHECK(r.completed.part(1, Polarity::Negative) == 0.0);
  CHECK(r.root_value == doctest::Approx(0.192).epsilon(1e-12));
  CHECK_FALSE(r.unconstrained[1]);
}

TEST_CASE("networks without sums evaluate the same under max") {
  Network net;
  const NodeId a = net.part_leaf(0, Polarity::Positive), b = net.part_leaf(1, Polarity::Positive);
  const NodeId p = net.add_product();
  net.connect(p, a);
  net.connect(p, b);
  net.set_root(p);
  IndicatorValues ev(2);
  ev.set_part(0, true);
  ev.marginalize_part(1);
  CHECK(evaluate(to_mpn(net), ev).root_value == evaluate(net, ev).root_value);
  CHECK(&to_mpn(to_mpn(net)).network() == &net);
}

TEST_CASE("fully observed evidence is returned unchanged") {
  const Network net = two_variable_example();
  const IndicatorValues ev = fixture_evidence(net, 0, 1);
  CHECK(mpe(to_mpn(net), ev).completed == ev);
}

TEST_CASE("query variables must be marginalized") {
  const Network net = two_variable_example();
  const std::uint32_t q[] = {1};
  CHECK_THROWS_AS(mpe(to_mpn(net), fixture_evidence(net, 1, 0), q), Error);
}

TEST_CASE("random networks: self-consistency, oracle agreement and dominance") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 100; ++i) {
    const Network net = random_network(rng);
    const IndicatorValues ev = random_evidence(net, rng);
    const auto q = marginalized(net, ev);
    const MpeResult r = mpe(to_mpn(net), ev, q);
    CHECK(std::abs(evaluate(to_mpn(net), r.completed).root_value - r.root_value) <= 1e-12);
    CHECK(std::abs(brute_force_mpe(to_mpn(net), ev).value - r.root_value) <= 1e-12);
    CHECK(r.root_value <= evaluate(net, ev).root_value + 1e-15);
  }
}

TEST_CASE("unconstrained flag is set exactly when no selected leaf touches the variable") {
  std::mt19937_64 rng(78);
  for (int i = 0; i < 100; ++i) {
    const Network net = random_network(rng);
    const IndicatorValues ev = random_evidence(net, rng);
    const auto q = marginalized(net, ev);
    const MpeResult r = mpe(to_mpn(net), ev, q);
    std::vector<bool> touched(net.variables().size(), false);
    for (auto [e, t] : r.traversal.t) {
      const Node& child = net.node(net.edge(e).child);
      if (t > 0 && child.is_leaf() && child.kind != NodeKind::Constant) touched[child.variable] = true;
    }
    if (net.node(net.root()).is_leaf()) touched[net.node(net.root()).variable] = true;
    for (std::uint32_t v : q) CHECK(r.unconstrained[v] == !touched[v]);
  }
}

TEST_CASE("traversal counts are conserved through max nodes") {
  std::mt19937_64 rng(79);
  for (int i = 0; i < 50; ++i) {
    const Network net = random_network(rng);
    const MpeResult r = mpe(to_mpn(net), random_evidence(net, rng));
    std::vector<std::int64_t> incoming(net.size(), 0);
    incoming[net.root()] = 1;
    for (auto [e, t] : r.traversal.t) incoming[net.edge(e).child] += t;
    for (NodeId id = 0; id < net.size(); ++id) {
      const Node& n = net.node(id);
      if (n.kind != NodeKind::Sum || incoming[id] == 0) continue;
      std::int64_t out = 0;
      for (EdgeId e : n.children) out += r.traversal[e];
      CHECK(out == incoming[id]);
    }
  }
}

TEST_CASE("traversal_difference") {
  const Network net = two_variable_example();
  const MpeResult a = mpe(to_mpn(net), fixture_evidence(net, 1, 1));
  const MpeResult same = mpe(to_mpn(net), fixture_evidence(net, 1, 1));
  CHECK(traversal_difference(a.traversal, same.traversal).empty());

  // x1=1,x2=1 goes through the first branch, x1=1,x2=0 through the second
  const MpeResult b = mpe(to_mpn(net), fixture_evidence(net, 1, 0));
  const auto d = traversal_difference(a.traversal, b.traversal);
  const auto& root_edges = net.node(net.root()).children;
  CHECK(d.at(root_edges[0]) == 1);
  CHECK(d.at(root_edges[1]) == -1);
  for (auto [e, t] : d) CHECK((t == 1 || t == -1));

  Network other = two_variable_example();
  other.add_sum();
  CHECK_THROWS_AS(traversal_difference(a.traversal, mpe(to_mpn(other), fixture_evidence(other, 1, 1)).traversal),
                  Error);
}

TEST_CASE("exact ties go to the lowest child node id") {
  Network net;
  const NodeId a = net.part_leaf(0, Polarity::Positive), b = net.part_leaf(0, Polarity::Negative);
  const NodeId s = net.add_sum();
  net.connect(s, b, 0.5);
  net.connect(s, a, 0.5);
  net.set_root(s);
  IndicatorValues ev(1);
  ev.marginalize_part(0);
  const std::uint32_t q[] = {0};
  const MpeResult r = mpe(to_mpn(net), ev, q);
  CHECK(r.completed.part(0, Polarity::Positive) == 1.0);
  CHECK(r.completed.part(0, Polarity::Negative) == 0.0);
}

}  // TEST_SUITE
