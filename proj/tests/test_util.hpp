#pragma once

#include "dopa/channel.hpp"
#include "dopa/types.hpp"
#include "dopa/waterfill.hpp"

namespace dopa::test {

inline PhyConfig ref_phy() { return PhyConfig{}; }

/// Reference two-stream scenario: beta = (1,10), lambda*tau = 0.02,
/// 200-bit packets, N = 4.
inline ChainParams ref_chain(double gamma = 0.01) {
  ChainParams c;
  c.tau = 1.0;
  c.gamma = gamma;
  c.buffer = 4;
  c.streams = {{1.0, 0.02, 200.0}, {10.0, 0.02, 200.0}};
  return c;
}

/// Shared mid-size eigenvalue cache (generated once per test binary).
inline const EigenSampleCache& shared_cache() {
  static const EigenSampleCache cache = EigenSampleCache::generate(ref_phy(), 30000, 42);
  return cache;
}

inline const PhiEvaluator& shared_eval() {
  static const PhiEvaluator eval(shared_cache());
  return eval;
}

}  // namespace dopa::test
