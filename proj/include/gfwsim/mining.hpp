// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gfwsim/rng.hpp"
#include "gfwsim/types.hpp"

namespace gfwsim {

struct MinerSpec {
  MinerId id = 0;
  std::string name;
  double hash_share = 0.0;
  std::string region;
  std::string group;  // reporting label, e.g. nationality
  std::string strategy;
  PoolId pool = kNoPool;
};

struct PoolSpec {
  PoolId id = 0;
  std::string name;
  std::string manager_region;
  std::set<MinerId> members;
};

struct ShareRecord {
  MinerId miner = 0;
  PoolId pool = kNoPool;
  std::uint64_t ppow_count = 0;
  std::uint64_t full_blocks_submitted = 0;
  std::uint64_t full_blocks_found = 0;
};

/// Waiting time until `miner` finds its next block when the whole network
/// finds one every `mean_interval` seconds on average. Infinite for zero hash.
inline Seconds sample_next_find(const MinerSpec& miner, Seconds mean_interval, RngStream& rng) {
  if (!(mean_interval > 0.0)) throw ValidationError("mean_interval", "must be > 0");
  if (miner.hash_share <= 0.0) return kNever;
  return rng.exponential(miner.hash_share / mean_interval);
}

/// Validates hash shares: each positive, summing to one.
inline void validate_hash_shares(const std::vector<MinerSpec>& miners, double tol = 1e-9) {
  double sum = 0.0;
  for (const auto& m : miners) {
    if (!(m.hash_share > 0.0) || m.hash_share > 1.0)
      throw ValidationError("miners." + m.name + ".hash_share", "must be in (0, 1]");
    sum += m.hash_share;
  }
  if (std::abs(sum - 1.0) > tol)
    throw ValidationError("miners.hash_share", "shares sum to " + std::to_string(sum) + ", expected 1");
}

inline void validate_pools(const std::vector<PoolSpec>& pools) {
  std::set<MinerId> seen;
  for (const auto& p : pools)
    for (MinerId m : p.members)
      if (!seen.insert(m).second)
        throw ValidationError("pools." + p.name + ".members", "miner belongs to more than one pool");
}

/// Adds a Poisson-distributed number of partial proofs-of-work for `elapsed`
/// seconds of mining. `ppows_per_block` is the expected PPoW count per full
/// block the miner would find in the same time.
inline void record_share(ShareRecord& rec, double hash_share, Seconds elapsed,
                         Seconds mean_interval, std::uint32_t ppows_per_block, RngStream& rng) {
  if (ppows_per_block < 1) throw ValidationError("ppows_per_block", "must be >= 1");
  if (elapsed <= 0.0 || hash_share <= 0.0) return;
  rec.ppow_count += rng.poisson(static_cast<double>(ppows_per_block) * hash_share * elapsed / mean_interval);
}

/// Splits a pool's settled revenue among members in proportion to PPoW count.
/// The split is exact: the last member with shares absorbs rounding drift.
inline std::map<MinerId, Btc> distribute_pool_rewards(const PoolSpec& pool,
                                                      const std::map<MinerId, ShareRecord>& shares,
                                                      Btc pool_revenue) {
  std::map<MinerId, Btc> out;
  std::uint64_t total = 0;
  for (MinerId m : pool.members) {
    auto it = shares.find(m);
    if (it != shares.end()) total += it->second.ppow_count;
    out[m] = 0.0;
  }
  if (pool_revenue == 0.0) return out;
  if (total == 0) throw std::logic_error("pool " + pool.name + " has revenue but no shares");
  Btc assigned = 0.0;
  MinerId last = kNoMiner;
  for (MinerId m : pool.members) {
    auto it = shares.find(m);
    if (it == shares.end() || it->second.ppow_count == 0) continue;
    const Btc part = pool_revenue * static_cast<double>(it->second.ppow_count) / static_cast<double>(total);
    out[m] = part;
    assigned += part;
    last = m;
  }
  out[last] += pool_revenue - assigned;
  return out;
}

}  // namespace gfwsim
