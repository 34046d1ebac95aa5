// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion A1..A10, nonzero exit on
// any failure. Runs single-threaded unless GFWSIM_JOBS says otherwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gfwsim/gfwsim.hpp"

using namespace gfwsim;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kDir = GFWSIM_SCENARIO_DIR;
unsigned g_jobs = 1;
constexpr double kZ = 1.959963984540054;

Scenario load(const std::string& name) { return Scenario::load(kDir + "/" + name + ".json"); }

struct Stat {
  double mean = 0, low = 0, high = 0;
  std::size_t n = 0;
};

Stat stat_of(const std::vector<AggregateRow>& rows, const std::string& sec, const std::string& ent,
             const std::string& met) {
  const auto* a = find_row(rows, sec, ent, met);
  if (!a) throw std::runtime_error("missing metric " + sec + "/" + ent + " " + met);
  return {a->mean, a->ci_low, a->ci_high, a->n};
}

std::vector<AggregateRow> runs(const Scenario& s, std::uint32_t seeds) { return aggregate(run_seeds(s, seeds, g_jobs)); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string show(const Stat& s) { return fmt("%.4f [%.4f, %.4f]", s.mean, s.low, s.high); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome a1() {
  auto rows = runs(load("gfw-empty-blocks-2015"), 30);
  const auto china = stat_of(rows, "group", "china", "empty_rate");
  const auto other = stat_of(rows, "group", "non-china", "empty_rate");
  const bool ok = china.mean >= 0.03 && china.mean <= 0.13 && other.mean >= 0.01 && other.mean <= 0.035;
  return {ok, "china empty_rate " + show(china) + " want [0.03, 0.13]; non-china " + show(other) +
                  " want [0.01, 0.035]; 30 seeds x 10000 blocks"};
}

Outcome a2() {
  auto s = load("gfw-empty-blocks-2015").with("relay.mode", "compact");
  auto rows = runs(s, 30);
  bool ok = true;
  std::string d;
  for (const char* g : {"china", "non-china", "background"}) {
    const auto e = stat_of(rows, "group", g, "empty_rate");
    ok &= e.mean < 0.03;
    d += fmt("%s empty_rate %.4f; ", g, e.mean);
  }
  double worst = 0;
  for (const auto& a : rows) {
    if (a.section != "propagation" || a.metric != "mean_seconds" || a.entity.rfind("full|", 0) != 0) continue;
    const auto* e = find_row(rows, "propagation", "empty|" + a.entity.substr(5), "mean_seconds");
    if (!e) continue;
    worst = std::max(worst, std::abs(a.mean - e->mean) / e->mean);
  }
  const auto red = stat_of(rows, "relay", "full_blocks", "payload_reduction");
  ok &= worst <= 0.02 && red.mean >= 0.98;
  d += fmt("worst full-vs-empty propagation gap %.4f (want <= 0.02); payload reduction %.4f (want >= 0.98)", worst,
           red.mean);
  return {ok, d};
}

Outcome a3() {
  auto base = load("selfish-sweep");
  const std::vector<double> alphas{0.2, 0.225, 0.25, 0.275, 0.3};
  std::vector<Json> values(alphas.begin(), alphas.end());
  auto cells = sweep(base, "miners.attacker.hash_share", values, 30, g_jobs);
  std::vector<Stat> share;
  for (const auto& c : cells) share.push_back(stat_of(c.rows, "group", "attacker", "revenue_share"));
  double cross = std::nan("");
  for (std::size_t i = 1; i < alphas.size() && std::isnan(cross); ++i) {
    const double d0 = share[i - 1].mean - alphas[i - 1], d1 = share[i].mean - alphas[i];
    if (d0 < 0 && d1 >= 0) cross = alphas[i - 1] + (alphas[i] - alphas[i - 1]) * (-d0) / (d1 - d0);
  }
  const bool above = share.back().low > 0.3, below = share.front().high < 0.2;
  const bool near = !std::isnan(cross) && std::abs(cross - 0.25) <= 0.03;
  std::string d = "revenue share:";
  for (std::size_t i = 0; i < alphas.size(); ++i) d += fmt(" a=%.3f %s;", alphas[i], show(share[i]).c_str());
  d += fmt(" crossing %.4f (want 0.25 +- 0.03)", cross);
  return {above && below && near, d};
}

// Independent check for A4: race phase by forward dynamic programming, then
// the catch-up walk solved as a tridiagonal linear system.
double brute_oracle(double q, int n, int give_up) {
  const double p = 1 - q;
  const int top = give_up + 2;  // blocks-to-lead at which the attacker walks away
  // Gambler's ruin: v[0] = 1, v[top] = 0, v[x] = q v[x-1] + p v[x+1].
  std::vector<double> a(top + 1, 0), b(top + 1, 1), c(top + 1, 0), rhs(top + 1, 0);
  rhs[0] = 1;
  for (int x = 1; x < top; ++x) {
    a[x] = -q;
    c[x] = -p;
  }
  for (int x = 1; x <= top; ++x) {
    const double w = a[x] / b[x - 1];
    b[x] -= w * c[x - 1];
    rhs[x] -= w * rhs[x - 1];
  }
  std::vector<double> v(top + 1);
  v[top] = rhs[top] / b[top];
  for (int x = top - 1; x >= 0; --x) v[x] = (rhs[x] - c[x] * v[x + 1]) / b[x];
  // Attacker blocks found while honest miners produce n: mass[h][m].
  const int mmax = 600;
  std::vector<double> mass(mmax + 1, 0.0), next(mmax + 1);
  mass[0] = 1;
  double total = 0;
  for (int h = 0; h < n; ++h) {
    // Before the h+1-th honest block the attacker finds k more with prob q^k p.
    std::fill(next.begin(), next.end(), 0.0);
    for (int m = 0; m <= mmax; ++m) {
      if (mass[m] == 0) continue;
      double pk = p;
      for (int k = 0; m + k <= mmax; ++k, pk *= q) next[m + k] += mass[m] * pk;
    }
    mass.swap(next);
  }
  for (int m = 0; m <= mmax; ++m) {
    const int x = n - m + 1;
    total += mass[m] * (x <= 0 ? 1.0 : x >= top ? 0.0 : v[x]);
  }
  return total;
}

Outcome a4() {
  auto base = load("double-spend-brute").with("trials", 1000, true);
  const int give_up = base.doc()["miners"][0]["strategy"].value("give_up_deficit", 20);
  bool ok = true;
  std::string d;
  for (double q : {0.1, 0.3, 0.45})
    for (int n : {1, 2, 4, 6}) {
      auto s = base.with("miners.attacker.hash_share", q, true).with("merchants.shop.confirmations", n, true);
      auto reps = run_seeds(s, 10, g_jobs);
      double succ = 0, att = 0;
      for (const auto& r : reps) {
        succ += *r.find("double_spend", "all", "successes");
        att += *r.find("double_spend", "all", "attempts");
      }
      const double sim = succ / att, oracle = brute_oracle(q, n, give_up);
      const bool cell = std::abs(sim - oracle) <= 0.02 && att >= 10000;
      ok &= cell;
      d += fmt("q=%.2f n=%d sim %.4f oracle %.4f (%s, %.0f trials); ", q, n, sim, oracle, cell ? "ok" : "off", att);
    }
  return {ok, d};
}

Outcome a5() {
  auto pun = runs(load("punitive-censorship"), 30);
  const auto final_chain = stat_of(pun, "censorship", "censored", "on_final_chain");
  auto feather = load("feather-fork-censorship");
  auto attack = stat_of(runs(feather, 30), "censorship", "censored", "inclusion_rate");
  auto baseline_s = feather.with("miners.forker.strategy", Json{{"kind", "honest"}});
  auto baseline = stat_of(runs(baseline_s, 30), "censorship", "censored", "inclusion_rate");
  const bool ok = final_chain.mean == 0 && final_chain.high <= 0 && attack.high < baseline.low;
  return {ok, fmt("punitive 60%%: blacklisted txs on final chain %.3f per run (max CI %.3f), 30 seeds x 5000 blocks; "
                  "feather 20%%: censored inclusion %s vs no-attack baseline %s",
                  final_chain.mean, final_chain.high, show(attack).c_str(), show(baseline).c_str())};
}

Outcome a6() {
  auto s = load("eclipse-goldfinger");
  const auto with = stat_of(runs(s, 30), "group", "attacker", "main_share");
  Json doc = s.doc();
  doc.erase("control");
  const auto without = stat_of(runs(Scenario::from_json(doc), 30), "group", "attacker", "main_share");
  const double predicted = 0.40 / 0.75;
  const bool ok = with.mean >= 0.5 && std::abs(with.mean - predicted) <= 0.03 && without.mean < 0.45;
  return {ok, fmt("eclipsed: attacker main share %s (predicted %.4f +- 0.03, >= 0.5); no eclipse %s (want < 0.45)",
                  show(with).c_str(), predicted, show(without).c_str())};
}

Outcome a7() {
  auto bwh_s = load("withholding-bwh");
  auto bwh_runs = run_seeds(bwh_s, 30, g_jobs);
  auto faw_runs = run_seeds(load("withholding-faw"), 30, g_jobs);
  const auto rel = stat_of(aggregate(bwh_runs), "pool", "victim", "honest_relative_revenue");
  // Oracle from the scenario's own parameters: victim honest hash h, infiltration i.
  double h = 0, i = 0;
  for (const auto& m : bwh_s.doc()["miners"]) {
    if (m.value("pool", "") == "victim") h += m["hash_share"].get<double>();
    if (m.contains("strategy") && m["strategy"].value("kind", "") == "withhold_bwh")
      i = m["strategy"]["infiltration"].get<double>();
  }
  const double expected = 1 - h / ((1 - i) * (h + i));
  const double reduction = 1 - rel.mean;
  const bool bwh_ok = std::abs(reduction - expected) <= 0.10 * expected;
  // Paired by seed: identical topology and hash draws up to the strategy.
  std::vector<double> diff;
  for (std::size_t k = 0; k < bwh_runs.size(); ++k)
    diff.push_back(*faw_runs[k].find("group", "attacker", "payout") - *bwh_runs[k].find("group", "attacker", "payout"));
  double mean = 0, ss = 0;
  for (double x : diff) mean += x;
  mean /= static_cast<double>(diff.size());
  for (double x : diff) ss += (x - mean) * (x - mean);
  const double half = kZ * std::sqrt(ss / static_cast<double>(diff.size() - 1)) / std::sqrt(static_cast<double>(diff.size()));
  const bool faw_ok = mean - half >= 0;
  return {bwh_ok && faw_ok,
          fmt("BWH victim revenue-per-hash reduction %.4f vs oracle %.4f (h=%.2f, i=%.2f; rel err %.3f, want <= 0.10); "
              "FAW - BWH attacker payout %.1f [%.1f, %.1f] (want lower bound >= 0)",
              reduction, expected, h, i, std::abs(reduction - expected) / expected, mean, mean - half, mean + half)};
}

Outcome a8() {
  auto balance = stat_of(runs(load("balance-attack"), 30), "double_spend", "all", "success_rate");
  auto race_s = load("double-spend-race").with("miners.attacker.hash_share", 0.15, true);
  auto race = stat_of(runs(race_s, 30), "double_spend", "all", "success_rate");
  return {balance.low > race.high,
          "alpha 0.15: partition success " + show(balance) + " vs no-partition race " + show(race) + ", 30 seeds each"};
}

Outcome a9() {
  auto cl = load("deanon-clustering");
  bool precise = true, monotone = true;
  double prev = -1;
  std::string d;
  for (double pm : {0.0, 0.2, 0.5, 1.0}) {
    auto reps = run_seeds(cl.with("deanon.p_merge", pm, true), 30, g_jobs);
    for (const auto& r : reps) precise &= *r.find("deanon", "clustering", "precision") == 1.0;
    const auto rec = stat_of(aggregate(reps), "deanon", "clustering", "recall");
    monotone &= rec.mean >= prev;
    prev = rec.mean;
    d += fmt("p_merge %.1f recall %.4f; ", pm, rec.mean);
  }
  auto org = aggregate(run_seeds(load("deanon-origin"), 30, g_jobs));
  const auto acc = stat_of(org, "deanon", "origin", "accuracy");
  const auto base = stat_of(org, "deanon", "origin", "random_baseline");
  d += fmt("precision %s in 120 worlds; origin accuracy %s vs baseline %.4f", precise ? "1.0" : "BELOW 1",
           show(acc).c_str(), base.high);
  return {precise && monotone && acc.low > base.high, d};
}

std::string csv_once(const Scenario& s) {
  std::ostringstream os;
  write_csv(os, {run_scenario(s, s.seed(), g_jobs)});
  return os.str();
}

Outcome a10(Clock::time_point suite_start) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(kDir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  bool same = true;
  std::string mismatched;
  for (const auto& f : files) {
    auto s = Scenario::load(f.string());
    if (csv_once(s) != csv_once(s)) {
      same = false;
      mismatched += " " + s.name();
    }
  }
  const double total = std::chrono::duration<double>(Clock::now() - suite_start).count();
  return {same && total < 900.0,
          fmt("%zu scenarios rerun at their base seed: %s; whole suite %.1f s on %u thread(s) (want < 900 s)",
              files.size(), same ? "byte-identical" : ("DIFFER:" + mismatched).c_str(), total, g_jobs)};
}

}  // namespace

int main() {
  if (const char* j = std::getenv("GFWSIM_JOBS")) g_jobs = std::max(1, std::atoi(j));
  const auto start = Clock::now();
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1 empty blocks behind the boundary", a1},
      {"A2 compact relay remedy", a2},
      {"A3 selfish-mining threshold", a3},
      {"A4 double-spend oracle agreement", a4},
      {"A5 censorship", a5},
      {"A6 eclipse-assisted majority", a6},
      {"A7 pool withholding attacks", a7},
      {"A8 balance attack", a8},
      {"A9 deanonymization", a9},
      {"A10 determinism and runtime", [&] { return a10(start); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << fmt(" (%.1f s): ", secs) << o.detail << std::endl;
  }
  std::cout << (failed ? fmt("%d of %zu criteria failed", failed, criteria.size())
                       : fmt("all %zu criteria passed", criteria.size()))
            << std::endl;
  return failed ? 1 : 0;
}
