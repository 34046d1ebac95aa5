// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gfwsim/metrics.hpp"
#include "gfwsim/simulator.hpp"
#include "gfwsim/strategies.hpp"

using namespace gfwsim;

namespace {

LinkProfile fast(Seconds latency = 0.0) { return {latency, 1e15, 0.0}; }

MinerId add_miner(SimConfig& c, NodeId node, double share, std::unique_ptr<Strategy> s,
                  const std::string& group = "", PoolId pool = kNoPool) {
  MinerBinding b;
  b.spec.id = static_cast<MinerId>(c.miners.size());
  b.spec.name = "m" + std::to_string(b.spec.id);
  b.spec.hash_share = share;
  b.spec.region = c.topology.node(node).region;
  b.spec.group = group.empty() ? b.spec.name : group;
  b.spec.strategy = std::string(s->kind());
  b.spec.pool = pool;
  b.node = node;
  b.strategy = std::move(s);
  if (pool != kNoPool) c.pools[pool].members.insert(b.spec.id);
  c.miners.push_back(std::move(b));
  return c.miners.back().spec.id;
}

SimConfig clique(std::size_t n, Seconds latency, std::uint64_t seed) {
  SimConfig c;
  c.seed = seed;
  for (std::size_t i = 0; i < n; ++i) c.topology.add_node("n" + std::to_string(i), "r");
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = a + 1; b < n; ++b) c.topology.add_edge(a, b, fast(latency));
  c.roles.resize(n);
  return c;
}

double main_share(const RunResult& r, MinerId m) {
  return static_cast<double>(r.settlement.miners.at(m).main_blocks) / r.settlement.main_chain_blocks;
}

// Absorption probability of a +-1 walk by value iteration; independent of
// the closed form under test.
double walk_absorb_low(double down, int start, int low, int high) {
  std::vector<double> v(static_cast<std::size_t>(high - low + 1), 0.0);
  v[0] = 1.0;
  for (int it = 0; it < 20000; ++it)
    for (int x = low + 1; x < high; ++x) {
      const auto i = static_cast<std::size_t>(x - low);
      v[i] = down * v[i - 1] + (1 - down) * v[i + 1];
    }
  return v[static_cast<std::size_t>(start - low)];
}

// Eyal-Sirer relative revenue.
double selfish_revenue(double a, double g) {
  return (a * (1 - a) * (1 - a) * (4 * a + g * (1 - 2 * a)) - a * a * a) / (1 - a * (1 + (2 - a) * a));
}

// Success probability of a brute-force double spend against n confirmations,
// with the attacker quitting once it trails by more than `give_up` blocks.
double double_spend_oracle(double q, int n, int give_up) {
  const double p = 1 - q, r = q / p;
  const int top = give_up + 2;  // distance-to-lead at which the attacker quits
  double total = 0, nb = std::pow(p, n);  // m = 0 term of the negative binomial
  for (int m = 0; m < 400; ++m) {
    if (m > 0) nb *= q * (m + n - 1) / m;
    const int x = n - m + 1;  // blocks needed to get strictly ahead
    const double win = x <= 0 ? 1.0 : (std::pow(r, x) - std::pow(r, top)) / (1 - std::pow(r, top));
    total += nb * win;
  }
  return total;
}

bool carries(const SimBlock& b, TxId tx) {
  for (const auto& t : b.txs)
    if (t->id == tx) return true;
  return false;
}

// Honest miner that issues one blacklisted payment before it starts mining.
struct TaintIssuer : HonestStrategy {
  TxId issued = 0;
  void on_start(MinerContext& ctx) override {
    auto tx = ctx.make_tx({{1ULL << 45, 1}}, {{(1ULL << 45) + 1, 1.0}}, ctx.chain().fee_per_tx, true);
    issued = tx->id;
    ctx.broadcast_tx(tx, ctx.node());
    HonestStrategy::on_start(ctx);
  }
};

}  // namespace

TEST(Feather, ClosedFormMatchesWalk) {
  for (double a : {0.05, 0.2, 0.35, 0.49}) {
    for (std::uint32_t d : {1u, 2u, 4u}) {
      // Lead of the tainted chain starts at 1; orphaned at -1, abandoned at d+1.
      const double oracle = walk_absorb_low(a, 1, -1, static_cast<int>(d) + 1);
      EXPECT_NEAR(feather_orphan_probability(a, d), oracle, 1e-9) << a << " " << d;
    }
  }
  EXPECT_NEAR(feather_orphan_probability(0.2, 1), 1.0 / 21.0, 1e-12);
  EXPECT_EQ(feather_orphan_probability(0.0, 3), 0.0);
}

TEST(Feather, SimulatedOrphanRateMatchesOracle) {
  // One blacklisted tx issued at t=0; count how often the first honest block
  // carrying it ends up off the main chain.
  const int trials = 3000;
  int orphaned = 0, counted = 0;
  for (int t = 0; t < trials; ++t) {
    auto c = clique(2, 0.0, 1000 + t);
    auto issuer = std::make_unique<TaintIssuer>();
    TaintIssuer* probe = issuer.get();
    add_miner(c, 0, 0.8, std::move(issuer));
    add_miner(c, 1, 0.2, std::make_unique<ForkCensorStrategy>(std::unordered_set<AddressId>{}, 1u));
    c.horizon.blocks = 25;
    Simulation sim(std::move(c));
    auto r = sim.run();
    const TxId tx = probe->issued;
    BlockPtr first;
    for (const auto& b : r.all_blocks)
      if (b->miner == 0 && carries(*b, tx) && (!first || b->id < first->id)) first = b;
    if (!first) continue;
    ++counted;
    bool on_main = false;
    for (const auto& b : r.main_chain) on_main = on_main || b->id == first->id;
    orphaned += !on_main;
  }
  ASSERT_GT(counted, trials * 9 / 10);
  EXPECT_NEAR(static_cast<double>(orphaned) / counted, feather_orphan_probability(0.2, 1), 0.012);
}

TEST(Punitive, MajorityKeepsBlacklistOffTheChain) {
  auto c = clique(2, 0.05, 9);
  add_miner(c, 0, 0.4, std::make_unique<HonestStrategy>());
  const MinerId f = add_miner(c, 1, 0.6, std::make_unique<ForkCensorStrategy>(std::unordered_set<AddressId>{},
                                                                              std::nullopt));
  c.tx_stream.rate = 1.0 / 300;
  c.tx_stream.censored_fraction = 1.0;
  c.tx_stream.origins = {0};
  c.horizon.blocks = 1500;
  auto r = Simulation(std::move(c)).run();
  ASSERT_GT(r.tracked.size(), 1000u);
  const std::size_t settled = r.main_chain.size() - 20;
  std::size_t tainted = 0;
  for (std::size_t i = 1; i < settled; ++i)
    for (std::size_t k = 1; k < r.main_chain[i]->txs.size(); ++k) tainted += r.main_chain[i]->txs[k]->censored;
  EXPECT_EQ(tainted, 0u);
  EXPECT_GT(main_share(r, f), 0.9);
  EXPECT_EQ(r.strategy_metrics.count("fork.abandoned"), 0u);
}

TEST(Selfish, RevenueMatchesEyalSirerWithoutTieWins) {
  // A lone honest miner never adopts an attacker block at equal height.
  for (double a : {0.2, 0.4}) {
    auto c = clique(2, 0.0, 11);
    add_miner(c, 0, 1 - a, std::make_unique<HonestStrategy>());
    const MinerId s = add_miner(c, 1, a, std::make_unique<SelfishStrategy>());
    c.roles[1].relay_foreign = false;
    c.horizon.blocks = 20000;
    auto r = Simulation(std::move(c)).run();
    EXPECT_NEAR(main_share(r, s), selfish_revenue(a, 0.0), 0.015) << a;
  }
}

TEST(Selfish, NegligibleAttackerLeavesChainIntact) {
  auto c = clique(2, 0.0, 12);
  add_miner(c, 0, 0.999, std::make_unique<HonestStrategy>());
  add_miner(c, 1, 0.001, std::make_unique<SelfishStrategy>());
  c.horizon.blocks = 2000;
  auto r = Simulation(std::move(c)).run();
  EXPECT_LE(r.settlement.orphans, 5u);
  EXPECT_GE(r.settlement.miners[0].main_blocks, 1990u);
}

TEST(Honest, RevenueSharesTrackHash) {
  auto c = clique(3, 0.0, 13);
  const std::vector<double> shares{0.5, 0.3, 0.2};
  for (NodeId i = 0; i < 3; ++i) add_miner(c, i, shares[i], std::make_unique<HonestStrategy>());
  c.horizon.blocks = 8000;
  auto r = Simulation(std::move(c)).run();
  for (MinerId m = 0; m < 3; ++m)
    EXPECT_NEAR(r.settlement.miners[m].revenue / r.settlement.total_revenue, shares[m], 0.02) << m;
}

TEST(Honest, RationalMinerCensorsWhenForkThreatDominates) {
  auto c = clique(1, 0.0, 1);
  add_miner(c, 0, 1.0, std::make_unique<HonestStrategy>());
  Simulation sim(std::move(c));
  MinerContext ctx(sim, 0);
  RationalCensorship rc;
  rc.forker_share = 0.2;
  HonestStrategy rational(rc);
  // 1/21 of 25.25 BTC dwarfs one tx fee.
  EXPECT_EQ(rational.policy(ctx).kind, TemplatePolicy::Kind::censoring);
  rc.forker_share = 1e-6;
  HonestStrategy calm(rc);
  EXPECT_EQ(calm.policy(ctx).kind, TemplatePolicy::Kind::full);
}

TEST(DoubleSpend, BruteForceMatchesCatchUpOracle) {
  const double q = 0.3;
  const int n = 2, trials = 2000;
  int wins = 0;
  for (int t = 0; t < trials; ++t) {
    auto c = clique(3, 0.01, derive_seed(77, {static_cast<std::uint64_t>(t)}));
    add_miner(c, 0, 1 - q, std::make_unique<HonestStrategy>());
    DoubleSpendParams p;
    p.merchant = "shop";
    p.variant = DoubleSpendVariant::brute;
    add_miner(c, 1, q, std::make_unique<DoubleSpendStrategy>(p));
    c.roles[1].relay_foreign = false;
    c.merchants.push_back({"shop", 2, static_cast<std::uint32_t>(n), 1ULL << 50});
    c.stop_on_payment_decision = true;
    c.horizon.blocks = 400;
    auto r = Simulation(std::move(c)).run();
    ASSERT_EQ(r.payments.size(), 1u);
    wins += r.payments[0].success;
  }
  EXPECT_NEAR(static_cast<double>(wins) / trials, double_spend_oracle(q, n, 20), 0.035);
}

TEST(DoubleSpend, OracleWithoutBarrierIsNakamotoCatchUp) {
  // With a far barrier the oracle approaches the unbounded catch-up sum.
  const double q = 0.1, p = 0.9;
  double unbounded = 0, nb = p;
  for (int m = 0; m < 200; ++m) {
    if (m > 0) nb *= q;
    unbounded += nb * std::min(1.0, std::pow(q / p, 1 - m + 1));
  }
  EXPECT_NEAR(double_spend_oracle(q, 1, 200), unbounded, 1e-9);
}

TEST(DoubleSpend, VariantConfirmationRules) {
  DoubleSpendParams p;
  p.variant = DoubleSpendVariant::race;
  EXPECT_NO_THROW(validate_double_spend(p, 0));
  EXPECT_THROW(validate_double_spend(p, 1), ValidationError);
  p.variant = DoubleSpendVariant::finney;
  EXPECT_THROW(validate_double_spend(p, 0), ValidationError);
  p.variant = DoubleSpendVariant::brute;
  EXPECT_NO_THROW(validate_double_spend(p, 3));
  p.give_up_deficit = 0;
  EXPECT_THROW(validate_double_spend(p, 3), ValidationError);
}

TEST(DoubleSpend, RaceAgainstZeroConfMerchantSometimesWins) {
  int wins = 0, accepted = 0;
  for (int t = 0; t < 300; ++t) {
    auto c = clique(3, 0.01, 500 + t);
    add_miner(c, 0, 0.7, std::make_unique<HonestStrategy>());
    DoubleSpendParams p;
    p.merchant = "shop";
    p.variant = DoubleSpendVariant::race;
    add_miner(c, 1, 0.3, std::make_unique<DoubleSpendStrategy>(p));
    c.roles[1].relay_foreign = false;
    c.merchants.push_back({"shop", 2, 0, 1ULL << 50});
    c.stop_on_payment_decision = true;
    c.horizon.blocks = 200;
    auto r = Simulation(std::move(c)).run();
    accepted += r.payments.at(0).accepted();
    wins += r.payments.at(0).success;
  }
  EXPECT_EQ(accepted, 300);
  // At least the chance the attacker finds the next block first.
  EXPECT_GT(wins, 300 * 0.25);
}

TEST(Withhold, BwhCostsVictimPoolItsInfiltratedShare) {
  const double hp = 0.3, inf = 0.1;
  double ratio = 0;
  const int seeds = 4;
  for (int s = 0; s < seeds; ++s) {
    auto c = clique(3, 0.0, 40 + s);
    c.pools.push_back({0, "victim", "r", {}});
    add_miner(c, 0, 1 - hp - inf - 0.1, std::make_unique<HonestStrategy>());
    add_miner(c, 1, hp, std::make_unique<HonestStrategy>(), "", 0);
    add_miner(c, 1, inf, std::make_unique<WithholdStrategy>(false), "attacker", 0);
    add_miner(c, 2, 0.1, std::make_unique<HonestStrategy>(), "attacker");
    c.horizon.blocks = 5000;
    auto r = Simulation(std::move(c)).run();
    ratio += r.payouts.at(1) / hp / r.settlement.total_revenue;
    EXPECT_EQ(r.miners[2].published, 0u);
    EXPECT_GT(r.miners[2].found, 0u);
  }
  ratio /= seeds;
  const double oracle = hp / ((1 - inf) * (hp + inf));
  EXPECT_NEAR(ratio, oracle, 0.1 * oracle);
  EXPECT_LT(ratio, 0.92);
}

TEST(Withhold, FawForksOnCompetingBlocks) {
  auto c = clique(3, 2.0, 50);
  c.pools.push_back({0, "victim", "r", {}});
  add_miner(c, 0, 0.5, std::make_unique<HonestStrategy>());
  add_miner(c, 1, 0.3, std::make_unique<HonestStrategy>(), "", 0);
  add_miner(c, 1, 0.2, std::make_unique<WithholdStrategy>(true), "attacker", 0);
  c.horizon.blocks = 3000;
  auto r = Simulation(std::move(c)).run();
  EXPECT_GT(r.strategy_metrics["withhold.forks"], 0.0);
  EXPECT_LT(r.miners[2].published, r.miners[2].found);
}

TEST(Goldfinger, MajorityFillsChainWithEmptyBlocks) {
  auto c = clique(2, 0.1, 60);
  add_miner(c, 0, 0.4, std::make_unique<HonestStrategy>());
  const MinerId g = add_miner(c, 1, 0.6, std::make_unique<GoldfingerStrategy>());
  c.load.arrival_rate = 3.0;
  c.horizon.blocks = 2000;
  auto r = Simulation(std::move(c)).run();
  const auto& s = r.settlement.miners[g];
  EXPECT_EQ(s.empty_main, s.main_blocks);
  EXPECT_NEAR(main_share(r, g), 0.6, 0.04);
  EXPECT_GT(r.miners[g].forgone_fees, 0.0);
}

TEST(Balance, NeedsAPartition) {
  auto c = clique(3, 0.0, 70);
  add_miner(c, 0, 0.9, std::make_unique<HonestStrategy>());
  BalanceParams p;
  p.merchant = "shop";
  add_miner(c, 1, 0.1, std::make_unique<BalanceAttackStrategy>(p));
  c.merchants.push_back({"shop", 2, 1, 1ULL << 50});
  c.horizon.blocks = 10;
  EXPECT_THROW(Simulation(std::move(c)).run(), ValidationError);
}
