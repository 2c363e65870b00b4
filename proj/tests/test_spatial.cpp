#include <doctest.h>

#include "hsspn/network.hpp"
#include "hsspn/spatial.hpp"

using namespace hsspn;

namespace {

struct GadgetFixture {
  Network net;
  PairGadget g;
  std::uint32_t va = 0, vb = 0, vp = 0;

  GadgetFixture() {
    net.add_region(Region::whole());
    g = build_pair_gadget(net, {0, 1});
    net.set_root(g.sum);
    for (std::uint32_t v = 0; v < net.variables().size(); ++v) {
      const VariableId& id = net.variables()[v];
      if (id.kind == VariableKind::SpatialPair) vp = v;
      else if (id.a == 0) va = v;
      else vb = v;
    }
  }

  IndicatorValues evidence(bool a, bool b, RelationFlags f) const {
    IndicatorValues ev(net.variables().size());
    ev.set_part(va, a);
    ev.set_part(vb, b);
    for (SpatialRelation r : kAllRelations) ev.relation(vp, r) = f[r] ? 1.0 : 0.0;
    return ev;
  }
};

}  // namespace

TEST_SUITE("spatial") {

TEST_CASE("relations of the illustrated configurations") {
  // below-left: smaller x, larger y (y grows downward)
  const RelationFlags bl = compute_relations({10, 80}, {50, 20});
  CHECK(bl[SpatialRelation::LeftOf]);
  CHECK(bl[SpatialRelation::Below]);
  CHECK_FALSE(bl[SpatialRelation::RightOf]);
  CHECK_FALSE(bl[SpatialRelation::Above]);

  const RelationFlags al = compute_relations({10, 10}, {50, 20});
  CHECK(al[SpatialRelation::LeftOf]);
  CHECK(al[SpatialRelation::Above]);

  const RelationFlags same = compute_relations({5, 5}, {5, 5});
  for (SpatialRelation r : kAllRelations) CHECK_FALSE(same[r]);
}

TEST_CASE("relations are antisymmetric and exclusive on an integer grid") {
  for (int ax = 0; ax < 6; ++ax)
    for (int ay = 0; ay < 6; ++ay)
      for (int bx = 0; bx < 6; ++bx)
        for (int by = 0; by < 6; ++by) {
          const Location a{double(ax), double(ay)}, b{double(bx), double(by)};
          const RelationFlags f = compute_relations(a, b), g = compute_relations(b, a);
          CHECK(f[SpatialRelation::LeftOf] == g[SpatialRelation::RightOf]);
          CHECK(f[SpatialRelation::Above] == g[SpatialRelation::Below]);
          CHECK_FALSE((f[SpatialRelation::LeftOf] && f[SpatialRelation::RightOf]));
          CHECK_FALSE((f[SpatialRelation::Above] && f[SpatialRelation::Below]));
        }
}

TEST_CASE("gadget structure: one sum over four relation products") {
  GadgetFixture fx;
  CHECK(fx.net.node(fx.g.sum).children.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fx.net.weight(fx.g.edges[i]) == 0.25);
    const Node& p = fx.net.node(fx.g.products[i]);
    CHECK(p.kind == NodeKind::Product);
    int spatial = 0;
    for (EdgeId e : p.children) {
      const Node& leaf = fx.net.node(fx.net.edge(e).child);
      if (leaf.kind == NodeKind::SpatialIndicator) {
        ++spatial;
        CHECK(static_cast<std::size_t>(leaf.relation()) == i);
      }
    }
    CHECK(spatial == 1);
  }
  CHECK(validate(fx.net).valid());
}

TEST_CASE("gadget values") {
  GadgetFixture fx;
  const RelationFlags lb = compute_relations({10, 80}, {50, 20});
  CHECK(evaluate(fx.net, fx.evidence(true, true, lb)).root_value == doctest::Approx(0.5));
  CHECK(evaluate(fx.net, fx.evidence(true, false, lb)).root_value == 0.0);

  IndicatorValues all(fx.net.variables().size());
  all.marginalize_part(fx.va);
  all.marginalize_part(fx.vb);
  all.marginalize_pair(fx.vp);
  CHECK(evaluate(fx.net, all).root_value == doctest::Approx(1.0));
}

TEST_CASE("raising a relation weight only moves inputs that activate it") {
  GadgetFixture fx;
  const IndicatorValues left = fx.evidence(true, true, compute_relations({10, 50}, {50, 50}));
  const IndicatorValues right = fx.evidence(true, true, compute_relations({50, 50}, {10, 50}));
  const double l0 = evaluate(fx.net, left).root_value, r0 = evaluate(fx.net, right).root_value;
  fx.net.set_weight(fx.g.edges[0], 0.5);
  CHECK(evaluate(fx.net, left).root_value > l0);
  CHECK(evaluate(fx.net, right).root_value == doctest::Approx(r0).epsilon(1e-15));
}

}  // TEST_SUITE
