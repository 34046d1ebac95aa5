// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

// Invariants that must hold for any seed, checked over a handful of runs.

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gfwsim/harness.hpp"

using namespace gfwsim;

namespace {

const std::string kDir = GFWSIM_SCENARIO_DIR;

struct Run {
  RunResult r;
  MetricsReport report;
  std::vector<MinerSpec> miners;
  std::vector<NodeId> nodes;
  Topology topo;
};

Run simulate(const Scenario& s, std::uint64_t seed) {
  SimConfig c = s.build(seed);
  Run out;
  out.topo = c.topology;
  for (const auto& m : c.miners) {
    out.miners.push_back(m.spec);
    out.nodes.push_back(m.node);
  }
  Simulation sim(std::move(c));
  out.r = sim.run();
  SimConfig again = s.build(seed);
  out.report = build_report(again, out.r, s.metrics());
  return out;
}

class EveryScenario : public ::testing::TestWithParam<std::string> {};

Scenario quick(const std::string& name) {
  auto s = Scenario::load(kDir + "/" + name + ".json");
  if (s.doc().contains("horizon") && s.doc()["horizon"].contains("blocks"))
    s = s.with("horizon.blocks", std::min<double>(s.doc()["horizon"]["blocks"].get<double>(), 800.0), true);
  return s;
}

}  // namespace

TEST_P(EveryScenario, ChainIsWellFormed) {
  auto s = quick(GetParam());
  for (std::uint64_t seed : {1, 2}) {
    auto run = simulate(s, seed);
    const auto& chain = run.r.main_chain;
    ASSERT_FALSE(chain.empty());
    EXPECT_TRUE(chain.front()->is_genesis());
    std::set<TxId> seen;
    for (std::size_t i = 1; i < chain.size(); ++i) {
      EXPECT_EQ(chain[i]->parent, chain[i - 1]->id);
      EXPECT_EQ(chain[i]->height, chain[i - 1]->height + 1);
      EXPECT_GE(chain[i]->found_at, chain[i - 1]->found_at);
      EXPECT_LE(chain[i]->size_bytes, 1'000'000u);
      // No explicit transaction is confirmed twice.
      for (std::size_t t = 1; t < chain[i]->txs.size(); ++t)
        EXPECT_TRUE(seen.insert(chain[i]->txs[t]->id).second) << "tx " << chain[i]->txs[t]->id;
    }
    EXPECT_EQ(run.r.settlement.main_chain_blocks + 1, chain.size());
    EXPECT_EQ(run.r.settlement.main_chain_blocks + run.r.settlement.orphans, run.r.published_blocks);
  }
}

TEST_P(EveryScenario, SettlementReconciles) {
  auto s = quick(GetParam());
  auto run = simulate(s, 3);
  const auto& st = run.r.settlement;
  double revenue = 0, fees = 0;
  std::uint32_t main = 0;
  for (const auto& [m, ms] : st.miners) {
    revenue += ms.revenue;
    main += ms.main_blocks;
  }
  for (std::size_t i = 1; i < run.r.main_chain.size(); ++i) fees += run.r.main_chain[i]->fees();
  EXPECT_EQ(main, st.main_chain_blocks);
  EXPECT_NEAR(fees, st.total_fees, 1e-6);
  EXPECT_NEAR(revenue, st.total_revenue, 1e-6);
  EXPECT_NEAR(st.total_revenue, run.r.ledger.block_reward * st.main_chain_blocks + st.total_fees, 1e-6);
  // Pool distribution moves money between members but creates none.
  double paid = 0;
  for (const auto& [m, b] : run.r.payouts) paid += b;
  if (!run.r.payouts.empty()) {
    EXPECT_NEAR(paid, st.total_revenue, 1e-6 * std::max(1.0, st.total_revenue));
  }
}

TEST_P(EveryScenario, RatesAndSharesAreFractions) {
  auto run = simulate(quick(GetParam()), 4);
  for (const auto& row : run.report.rows) {
    const auto& m = row.metric;
    const bool fraction = m.ends_with("_rate") || m.ends_with("_share") || m == "precision" || m == "recall" ||
                          m == "accuracy";
    if (!fraction) continue;
    EXPECT_GE(row.value, 0.0) << row.section << '/' << row.entity << ' ' << m;
    EXPECT_LE(row.value, 1.0 + 1e-12) << row.section << '/' << row.entity << ' ' << m;
  }
}

INSTANTIATE_TEST_SUITE_P(Shipped, EveryScenario,
                         ::testing::Values("gfw-empty-blocks-2015", "bip152-switch", "selfish-sweep",
                                           "feather-fork-censorship", "punitive-censorship", "double-spend-race",
                                           "double-spend-finney", "double-spend-brute", "balance-attack",
                                           "eclipse-goldfinger", "withholding-bwh", "withholding-faw",
                                           "deanon-origin"),
                         [](const auto& info) {
                           std::string n = info.param;
                           for (char& c : n)
                             if (c == '-') c = '_';
                           return n;
                         });

TEST(Property, PropagationNeverBeatsTheWire) {
  auto run = simulate(quick("gfw-empty-blocks-2015"), 5);
  ASSERT_FALSE(run.r.propagation.empty());
  for (const auto& [key, stat] : run.r.propagation) {
    const bool cross = key.find("inside->outside") != std::string::npos ||
                       key.find("outside->inside") != std::string::npos;
    const double floor = cross ? 0.218 : 0.081;
    // Header then body: at least two one-way latencies.
    EXPECT_GE(stat.mean(), 2 * floor) << key;
  }
}

TEST(Property, EmptyBlocksOnlyFollowUnvalidatedForeignParents) {
  auto run = simulate(quick("gfw-empty-blocks-2015"), 6);
  std::map<BlockId, BlockPtr> by_id;
  for (const auto& b : run.r.all_blocks) by_id[b->id] = b;
  int empties = 0;
  for (const auto& b : run.r.all_blocks) {
    if (b->is_genesis() || !b->is_empty()) continue;
    ++empties;
    auto p = by_id.find(b->parent);
    ASSERT_NE(p, by_id.end());
    EXPECT_NE(p->second->miner, b->miner) << "empty block " << b->id << " on own parent";
  }
  EXPECT_GT(empties, 0);
}

// Each foreign full block opens a window, from header arrival until the body
// is validated, during which an empty-block miner with share s finds a block
// with probability 1 - exp(-s W / T). Summing over blocks predicts the count.
TEST(Property, EmptyFindsMatchPerWindowProbability) {
  const auto s = quick("gfw-empty-blocks-2015").with("horizon.blocks", 3000, true);
  const double k = 42.6379, bw = 762673.92, per_mb = 0.2, interval = 600.0;
  auto window = [&](bool cross, double bytes) {
    const double lat = cross ? 0.218 : 0.081, loss = cross ? 0.069 : 0.002;
    const double goodput = bw * (1 - loss) / (1 + k * std::sqrt(loss));
    return lat + bytes / goodput + per_mb * bytes / 1e6;
  };
  double expected = 0, observed = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto run = simulate(s, seed);
    for (std::size_t m = 0; m < run.miners.size(); ++m) {
      if (run.miners[m].strategy != "empty_block") continue;
      observed += static_cast<double>(run.r.miners[m].empty_found);
      const auto& region = run.topo.node(run.nodes[m]).region;
      for (const auto& b : run.r.all_blocks) {
        if (b->is_genesis() || b->is_empty() || b->miner == m) continue;
        const bool cross = run.topo.node(run.nodes[b->miner]).region != region;
        expected += 1 - std::exp(-run.miners[m].hash_share * window(cross, static_cast<double>(b->size_bytes)) / interval);
      }
    }
  }
  ASSERT_GT(expected, 50);
  RecordProperty("ratio", std::to_string(observed / expected));
  EXPECT_NEAR(observed / expected, 1.0, 0.10) << "observed " << observed << " expected " << expected;
}

TEST(Property, CompactRelayShrinksEmptyBlockRate) {
  auto full = quick("gfw-empty-blocks-2015").with("horizon.blocks", 2000, true);
  auto compact = full.with("relay.mode", "compact");
  double ef = 0, ec = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ef += *simulate(full, seed).report.find("group", "china", "empty_main");
    ec += *simulate(compact, seed).report.find("group", "china", "empty_main");
  }
  EXPECT_LT(ec * 5, ef);
}

TEST(Property, RunsAreReproducible) {
  auto s = quick("selfish-sweep");
  auto a = simulate(s, 9), b = simulate(s, 9);
  EXPECT_EQ(a.r.events, b.r.events);
  EXPECT_EQ(a.r.main_chain.back()->id, b.r.main_chain.back()->id);
  ASSERT_EQ(a.report.rows.size(), b.report.rows.size());
  for (std::size_t i = 0; i < a.report.rows.size(); ++i) EXPECT_EQ(a.report.rows[i].value, b.report.rows[i].value);
}
