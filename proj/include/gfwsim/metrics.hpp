// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfwsim/simulator.hpp"

namespace gfwsim {

/// One tidy output row: (section, entity, metric) -> value.
struct MetricRow {
  std::string section;
  std::string entity;
  std::string metric;
  double value = 0.0;
};

struct MetricsReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;

  void add(std::string section, std::string entity, std::string metric, double value) {
    rows.push_back({std::move(section), std::move(entity), std::move(metric), value});
  }

  std::optional<double> find(const std::string& section, const std::string& entity, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.section == section && r.entity == entity && r.metric == metric) return r.value;
    return std::nullopt;
  }

  double value(const std::string& section, const std::string& entity, const std::string& metric) const {
    if (auto v = find(section, entity, metric)) return *v;
    throw std::out_of_range("no metric " + section + "/" + entity + "/" + metric);
  }
};

struct MetricsOptions {
  std::uint32_t finality_depth = 6;        // trailing blocks treated as not yet final
  std::uint32_t censor_window_blocks = 3;  // inclusion counted within this many blocks of issuance
  Seconds series_bucket = 86400.0;
};

namespace detail {

inline void add_group(std::map<std::string, std::map<std::string, double>>& g, const std::string& group,
                      const std::string& metric, double v) {
  g[group][metric] += v;
}

}  // namespace detail

/// Derives the report rows for one run.
inline MetricsReport build_report(const SimConfig& cfg, const RunResult& r, const MetricsOptions& opt = {}) {
  MetricsReport rep;
  rep.seed = r.seed;

  const std::uint32_t main_len = r.main_chain.empty() ? 0 : static_cast<std::uint32_t>(r.main_chain.size() - 1);
  const double total_blocks = static_cast<double>(main_len + r.settlement.orphans);
  rep.add("run", "all", "main_chain_blocks", main_len);
  rep.add("run", "all", "orphans", r.settlement.orphans);
  rep.add("run", "all", "orphan_rate", total_blocks > 0 ? r.settlement.orphans / total_blocks : 0.0);
  rep.add("run", "all", "published_blocks", r.published_blocks);
  rep.add("run", "all", "end_time", r.end_time);
  rep.add("run", "all", "events", static_cast<double>(r.events));
  rep.add("run", "all", "duplicate_emissions", static_cast<double>(r.duplicate_emissions));

  // Per miner and per group.
  std::map<std::string, std::map<std::string, double>> groups;
  const double total_rev = r.settlement.total_revenue;
  for (MinerId m = 0; m < cfg.miners.size(); ++m) {
    const auto& spec = cfg.miners[m].spec;
    const auto it = r.settlement.miners.find(m);
    const MinerSettlement s = it == r.settlement.miners.end() ? MinerSettlement{} : it->second;
    const auto& st = r.miners[m];
    const double payout = r.payouts.count(m) ? r.payouts.at(m) : 0.0;
    const std::string& e = spec.name;
    rep.add("miner", e, "hash_share", spec.hash_share);
    rep.add("miner", e, "found", static_cast<double>(st.found));
    rep.add("miner", e, "published", static_cast<double>(st.published));
    rep.add("miner", e, "main_blocks", s.main_blocks);
    rep.add("miner", e, "orphaned", s.orphaned);
    rep.add("miner", e, "empty_main", s.empty_main);
    rep.add("miner", e, "empty_rate", s.main_blocks ? static_cast<double>(s.empty_main) / s.main_blocks : 0.0);
    rep.add("miner", e, "revenue", s.revenue);
    rep.add("miner", e, "revenue_share", total_rev > 0 ? s.revenue / total_rev : 0.0);
    rep.add("miner", e, "payout", payout);
    rep.add("miner", e, "ppows", static_cast<double>(st.shares.ppow_count));
    rep.add("miner", e, "forgone_fees", st.forgone_fees);
    const std::string& g = spec.group;
    detail::add_group(groups, g, "hash_share", spec.hash_share);
    detail::add_group(groups, g, "found", static_cast<double>(st.found));
    detail::add_group(groups, g, "main_blocks", s.main_blocks);
    detail::add_group(groups, g, "orphaned", s.orphaned);
    detail::add_group(groups, g, "empty_main", s.empty_main);
    detail::add_group(groups, g, "revenue", s.revenue);
    detail::add_group(groups, g, "payout", payout);
    detail::add_group(groups, g, "forgone_fees", st.forgone_fees);
  }
  for (const auto& [g, m] : groups) {
    const double main_blocks = m.at("main_blocks");
    for (const auto& [k, v] : m) rep.add("group", g, k, v);
    rep.add("group", g, "empty_rate", main_blocks > 0 ? m.at("empty_main") / main_blocks : 0.0);
    rep.add("group", g, "main_share", main_len ? main_blocks / main_len : 0.0);
    rep.add("group", g, "revenue_share", total_rev > 0 ? m.at("revenue") / total_rev : 0.0);
    const double found = m.at("found");
    rep.add("group", g, "orphan_rate", found > 0 ? m.at("orphaned") / found : 0.0);
  }

  // Pools: revenue per unit of hash, overall and for members that mine honestly.
  for (const auto& pool : cfg.pools) {
    double hash = 0, honest_hash = 0, revenue = 0, honest_payout = 0, infiltrator_payout = 0;
    for (MinerId m : pool.members) {
      const auto& b = cfg.miners.at(m);
      const double payout = r.payouts.count(m) ? r.payouts.at(m) : 0.0;
      const auto it = r.settlement.miners.find(m);
      revenue += it == r.settlement.miners.end() ? 0.0 : it->second.revenue;
      hash += b.spec.hash_share;
      if (b.spec.strategy.rfind("withhold", 0) == 0) {
        infiltrator_payout += payout;
      } else {
        honest_hash += b.spec.hash_share;
        honest_payout += payout;
      }
    }
    rep.add("pool", pool.name, "hash_share", hash);
    rep.add("pool", pool.name, "revenue", revenue);
    rep.add("pool", pool.name, "revenue_per_hash", hash > 0 ? revenue / hash : 0.0);
    rep.add("pool", pool.name, "honest_payout", honest_payout);
    rep.add("pool", pool.name, "honest_revenue_per_hash", honest_hash > 0 ? honest_payout / honest_hash : 0.0);
    // Honest members' revenue per unit hash relative to a fair share (1.0).
    rep.add("pool", pool.name, "honest_relative_revenue",
            honest_hash > 0 && total_rev > 0 ? honest_payout / honest_hash / total_rev : 0.0);
    rep.add("pool", pool.name, "infiltrator_payout", infiltrator_payout);
  }

  // Propagation by size class and region pair.
  for (const auto& [key, stat] : r.propagation) {
    rep.add("propagation", key, "mean_seconds", stat.mean());
    rep.add("propagation", key, "samples", static_cast<double>(stat.count));
  }
  if (r.full_block_payload.count) {
    rep.add("relay", "full_blocks", "mean_payload_bytes", r.full_block_payload.mean());
    rep.add("relay", "full_blocks", "mean_block_bytes", r.full_block_size.mean());
    rep.add("relay", "full_blocks", "payload_reduction",
            1.0 - r.full_block_payload.mean() / r.full_block_size.mean());
  }

  // Throughput on the main chain.
  double explicit_txs = 0, filler = 0;
  for (const auto& b : r.main_chain) {
    if (b->is_genesis()) continue;
    explicit_txs += static_cast<double>(b->txs.size() - 1);
    filler += b->filler_count;
  }
  rep.add("throughput", "main_chain", "txs_per_block", main_len ? (explicit_txs + filler) / main_len : 0.0);

  // Censorship of tracked transactions.
  if (!r.tracked.empty()) {
    std::unordered_map<TxId, std::uint32_t> position;  // index in main chain
    for (std::uint32_t i = 1; i < r.main_chain.size(); ++i)
      for (std::size_t k = 1; k < r.main_chain[i]->txs.size(); ++k) position[r.main_chain[i]->txs[k]->id] = i;
    const std::uint32_t final_len = main_len > opt.finality_depth ? main_len - opt.finality_depth : 0;
    struct Tally {
      double issued = 0, eligible = 0, included = 0, on_final = 0;
    };
    std::map<std::string, Tally> tallies;
    std::size_t next_block = 1;
    std::vector<const TrackedTx*> order;
    for (const auto& t : r.tracked) order.push_back(&t);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->issued_at < b->issued_at; });
    for (const TrackedTx* t : order) {
      while (next_block < r.main_chain.size() && r.main_chain[next_block]->found_at <= t->issued_at) ++next_block;
      auto& tl = tallies[t->censored ? "censored" : "clean"];
      tl.issued += 1;
      auto it = position.find(t->id);
      if (it != position.end() && it->second <= final_len) tl.on_final += 1;
      const std::size_t last = next_block + opt.censor_window_blocks - 1;
      if (last > final_len) continue;
      tl.eligible += 1;
      if (it != position.end() && it->second <= last) tl.included += 1;
    }
    for (const auto& [name, tl] : tallies) {
      rep.add("censorship", name, "issued", tl.issued);
      rep.add("censorship", name, "eligible", tl.eligible);
      rep.add("censorship", name, "included_in_window", tl.included);
      rep.add("censorship", name, "inclusion_rate", tl.eligible > 0 ? tl.included / tl.eligible : 0.0);
      rep.add("censorship", name, "on_final_chain", tl.on_final);
    }
  }

  // Double-spend payments.
  if (!r.payments.empty()) {
    double accepted = 0, success = 0;
    for (const auto& p : r.payments) {
      accepted += p.accepted();
      success += p.success;
    }
    rep.add("double_spend", "all", "attempts", static_cast<double>(r.payments.size()));
    rep.add("double_spend", "all", "accepted", accepted);
    rep.add("double_spend", "all", "successes", success);
    rep.add("double_spend", "all", "success_rate", success / static_cast<double>(r.payments.size()));
  }

  // Cost ledger for majority-style attacks: fees the attacking group gave up
  // by mining empty blocks versus what honest miners lost to orphaning.
  {
    double attacker_forgone = 0, honest_lost = 0;
    std::set<std::string> attacker_groups;
    for (const auto& b : cfg.miners)
      if (b.spec.strategy == "goldfinger") attacker_groups.insert(b.spec.group);
    if (!attacker_groups.empty()) {
      std::unordered_map<BlockId, bool> main;
      for (const auto& b : r.main_chain) main[b->id] = true;
      for (MinerId m = 0; m < cfg.miners.size(); ++m) {
        const auto& spec = cfg.miners[m].spec;
        if (attacker_groups.count(spec.group)) {
          attacker_forgone += r.miners[m].forgone_fees;
        } else {
          const auto it = r.settlement.miners.find(m);
          if (it != r.settlement.miners.end()) honest_lost += it->second.orphaned * cfg.chain.block_reward;
        }
      }
      rep.add("cost_ledger", "attacker", "forgone_fees", attacker_forgone);
      rep.add("cost_ledger", "honest", "orphaned_rewards", honest_lost);
    }
  }

  for (const auto& [k, v] : r.strategy_metrics) rep.add("strategy", k.substr(0, k.find('.')), k.substr(k.find('.') + 1), v);

  // Daily main-chain series per group.
  if (opt.series_bucket > 0) {
    std::map<std::pair<long, std::string>, std::pair<double, double>> series;
    for (const auto& b : r.main_chain) {
      if (b->is_genesis() || b->miner >= cfg.miners.size()) continue;
      const long day = static_cast<long>(std::floor(b->found_at / opt.series_bucket));
      auto& cell = series[{day, cfg.miners[b->miner].spec.group}];
      cell.first += 1;
      cell.second += b->is_empty();
    }
    for (const auto& [key, cell] : series) {
      const std::string e = "day" + std::to_string(key.first) + "|" + key.second;
      rep.add("series", e, "blocks", cell.first);
      rep.add("series", e, "empty", cell.second);
    }
  }
  return rep;
}

}  // namespace gfwsim
