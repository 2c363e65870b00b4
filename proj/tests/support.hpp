#pragma once

#include <cmath>
#include <random>

#include "hsspn/data.hpp"
#include "hsspn/network.hpp"

namespace hsspn::test {

inline ImageRecord image(std::string id, ClassId label, std::vector<Detection> dets, double w = 100, double h = 100) {
  return {std::move(id), label, w, h, std::move(dets)};
}

/// Indicator values of the two-variable fixture for the states of parts 0 and 1;
/// -1 marginalizes the part.
inline IndicatorValues fixture_evidence(const Network& net, int x1, int x2) {
  IndicatorValues ev(net.variables().size());
  auto set = [&](std::uint32_t v, int s) {
    if (s < 0) ev.marginalize_part(v);
    else ev.set_part(v, s == 1);
  };
  set(0, x1);
  set(1, x2);
  return ev;
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace hsspn::test
