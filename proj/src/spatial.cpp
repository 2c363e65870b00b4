#include "hsspn/spatial.hpp"

#include "hsspn/network.hpp"

namespace hsspn {

PairGadget build_pair_gadget(Network& net, PairKey pair, RegionId region) {
  const NodeId xa = net.part_leaf(pair.a, Polarity::Positive, region);
  const NodeId xb = net.part_leaf(pair.b, Polarity::Positive, region);

  PairGadget g;
  for (std::size_t i = 0; i < 4; ++i) {
    const NodeId f = net.spatial_leaf(pair, kAllRelations[i], region);
    const NodeId p = net.add_product();
    net.connect(p, xa);
    net.connect(p, xb);
    net.connect(p, f);
    g.products[i] = p;
  }
  g.sum = net.add_sum();
  for (std::size_t i = 0; i < 4; ++i) g.edges[i] = net.connect(g.sum, g.products[i], 0.25);
  return g;
}

}  // namespace hsspn
