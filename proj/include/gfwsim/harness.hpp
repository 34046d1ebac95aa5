// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "gfwsim/deanon.hpp"
#include "gfwsim/metrics.hpp"
#include "gfwsim/scenario.hpp"

namespace gfwsim {

/// Shortest round-trip decimal form; identical input gives identical text.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::uint32_t trial) {
  return trial == 0 ? seed : derive_seed(seed, {0x747269616CULL, trial});
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results land by index,
// so output never depends on scheduling.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(jobs, n); ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline MetricsReport run_consensus_once(const Scenario& s, std::uint64_t seed) {
  SimConfig cfg = s.build(seed);
  Simulation sim(std::move(cfg));
  RunResult r = sim.run();
  MetricsReport rep = build_report(sim.config(), r, s.metrics());
  if (s.kind() == "deanon-origin") {
    const auto& topo = sim.config().topology;
    auto score = score_origins(infer_origin(r.first_hears, topo, sim.config().relay.tx_bytes), r.tracked);
    std::size_t active = 0;
    for (NodeId n = 0; n < topo.node_count(); ++n)
      active += n >= sim.config().roles.size() || !sim.config().roles[n].passive;
    rep.add("deanon", "origin", "issued", static_cast<double>(r.tracked.size()));
    rep.add("deanon", "origin", "guessed", static_cast<double>(score.guessed));
    rep.add("deanon", "origin", "correct", static_cast<double>(score.correct));
    rep.add("deanon", "origin", "accuracy", score.accuracy());
    rep.add("deanon", "origin", "random_baseline", active ? 1.0 / static_cast<double>(active) : 0.0);
  }
  return rep;
}

// Averages repeated trials of one seed; payment counts add up instead.
inline MetricsReport merge_trials(const std::vector<MetricsReport>& trials) {
  MetricsReport out;
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, double> sum;
  for (const auto& t : trials)
    for (const auto& row : t.rows) {
      auto key = std::make_tuple(row.section, row.entity, row.metric);
      auto [it, fresh] = sum.try_emplace(key, 0.0);
      if (fresh) order.push_back(key);
      it->second += row.value;
    }
  const double n = static_cast<double>(trials.size());
  for (const auto& key : order) {
    const auto& [sec, ent, met] = key;
    if (sec == "double_spend" && met == "success_rate") continue;
    const bool additive = sec == "double_spend";
    out.add(sec, ent, met, additive ? sum[key] : sum[key] / n);
  }
  auto attempts = sum.find({"double_spend", "all", "attempts"});
  if (attempts != sum.end() && attempts->second > 0)
    out.add("double_spend", "all", "success_rate", sum[{"double_spend", "all", "successes"}] / attempts->second);
  out.add("run", "all", "trials", n);
  return out;
}

}  // namespace detail

/// All metrics for one seed of a scenario, including repeated trials.
inline MetricsReport run_scenario(const Scenario& s, std::uint64_t seed, unsigned jobs = 1) {
  MetricsReport rep;
  if (s.kind() == "deanon-clustering") {
    RngStream rng(seed, {0x776F726CULL});
    auto world = generate_world(s.world(), rng);
    auto clusters = cluster_multi_input(world.ledger);
    auto score = score_clusters(clusters, world.owner);
    rep.add("deanon", "clustering", "precision", score.precision);
    rep.add("deanon", "clustering", "recall", score.recall);
    rep.add("deanon", "clustering", "clusters", static_cast<double>(clusters.cluster_count()));
    rep.add("deanon", "clustering", "addresses", static_cast<double>(clusters.root.size()));
    rep.add("deanon", "clustering", "users", static_cast<double>(world.users.size()));
    rep.add("deanon", "clustering", "transactions", static_cast<double>(world.ledger.size()));
  } else if (s.trials() == 1) {
    rep = detail::run_consensus_once(s, seed);
  } else {
    std::vector<MetricsReport> trials(s.trials());
    detail::parallel_for(trials.size(), jobs,
                         [&](std::size_t t) { trials[t] = detail::run_consensus_once(s, trial_seed(seed, static_cast<std::uint32_t>(t))); });
    rep = detail::merge_trials(trials);
  }
  rep.scenario = s.name();
  rep.seed = seed;
  for (const auto& p : s.provenance()) rep.add("config", p.parameter, p.source, p.value);
  return rep;
}

struct AggregateRow {
  std::string section, entity, metric;
  double mean = 0, sd = 0, ci_low = 0, ci_high = 0;
  std::size_t n = 0;
};

/// Mean and normal-approximation 95% interval of each metric across seeds.
/// Row order follows first appearance.
inline std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      Key k{row.section, row.entity, row.metric};
      auto [it, fresh] = values.try_emplace(k);
      if (fresh) order.push_back(k);
      it->second.push_back(row.value);
    }
  std::vector<AggregateRow> out;
  for (const auto& k : order) {
    const auto& v = values[k];
    AggregateRow a{std::get<0>(k), std::get<1>(k), std::get<2>(k)};
    a.n = v.size();
    for (double x : v) a.mean += x;
    a.mean /= static_cast<double>(a.n);
    double ss = 0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.sd = a.n > 1 ? std::sqrt(ss / static_cast<double>(a.n - 1)) : 0.0;
    const double half = 1.959963984540054 * a.sd / std::sqrt(static_cast<double>(a.n));
    a.ci_low = a.mean - half;
    a.ci_high = a.mean + half;
    out.push_back(std::move(a));
  }
  return out;
}

inline const AggregateRow* find_row(const std::vector<AggregateRow>& rows, const std::string& section,
                                    const std::string& entity, const std::string& metric) {
  for (const auto& r : rows)
    if (r.section == section && r.entity == entity && r.metric == metric) return &r;
  return nullptr;
}

/// Seeds are consecutive from the scenario's base seed.
inline std::vector<MetricsReport> run_seeds(const Scenario& s, std::uint32_t seeds, unsigned jobs = 1) {
  std::vector<MetricsReport> out(seeds);
  const bool inner = s.trials() > 1;
  detail::parallel_for(seeds, inner ? 1 : jobs,
                       [&](std::size_t i) { out[i] = run_scenario(s, s.seed() + i, inner ? jobs : 1); });
  return out;
}

struct SweepCell {
  std::string param;
  Json value;
  std::vector<MetricsReport> runs;
  std::vector<AggregateRow> rows;
};

inline std::vector<SweepCell> sweep(const Scenario& base, const std::string& param, const std::vector<Json>& values,
                                    std::uint32_t seeds, unsigned jobs = 1) {
  if (values.empty()) throw ValidationError("values", "no sweep values");
  std::vector<SweepCell> cells;
  for (const auto& v : values) {
    SweepCell c;
    c.param = param;
    c.value = v;
    Scenario s = base.with(param, v, true);
    c.runs = run_seeds(s, seeds, jobs);
    c.rows = aggregate(c.runs);
    cells.push_back(std::move(c));
  }
  return cells;
}

/// Parses "0.1,0.2" or "a:b:step" into sweep values.
inline std::vector<Json> parse_sweep_values(const std::string& spec) {
  std::vector<Json> out;
  auto value = [](const std::string& t) -> Json {
    if (t == "true") return true;
    if (t == "false") return false;
    double d;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec == std::errc() && p == t.data() + t.size()) return d;
    return t;
  };
  const auto c1 = spec.find(':');
  if (c1 != std::string::npos && spec.find(',') == std::string::npos) {
    const auto c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos) throw ValidationError("values", "range needs start:stop:step");
    const Json a = value(spec.substr(0, c1)), b = value(spec.substr(c1 + 1, c2 - c1 - 1)),
               st = value(spec.substr(c2 + 1));
    if (!a.is_number() || !b.is_number() || !st.is_number() || st.get<double>() <= 0)
      throw ValidationError("values", "range bounds must be numbers with a positive step");
    const double lo = a.get<double>(), hi = b.get<double>(), step = st.get<double>();
    for (int i = 0;; ++i) {
      const double x = lo + step * i;
      if (x > hi + step * 1e-9) break;
      out.push_back(std::round(x * 1e12) / 1e12);
    }
    return out;
  }
  std::string tok;
  for (std::size_t i = 0; i <= spec.size(); ++i) {
    if (i == spec.size() || spec[i] == ',') {
      if (!tok.empty()) out.push_back(value(tok));
      tok.clear();
    } else {
      tok += spec[i];
    }
  }
  if (out.empty()) throw ValidationError("values", "no sweep values");
  return out;
}

// --- writers ----------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& os, const std::vector<MetricsReport>& runs) {
  os << "scenario,seed,section,entity,metric,value\n";
  for (const auto& r : runs)
    for (const auto& row : r.rows)
      os << csv_field(r.scenario) << ',' << r.seed << ',' << csv_field(row.section) << ',' << csv_field(row.entity)
         << ',' << csv_field(row.metric) << ',' << format_number(row.value) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const std::string& scenario, const std::vector<SweepCell>& cells) {
  os << "scenario,param,param_value,section,entity,metric,mean,sd,ci95_low,ci95_high,n\n";
  for (const auto& c : cells) {
    const std::string v = c.value.is_string() ? c.value.get<std::string>()
                          : c.value.is_number() ? format_number(c.value.get<double>())
                                                : c.value.dump();
    for (const auto& a : c.rows)
      os << csv_field(scenario) << ',' << csv_field(c.param) << ',' << csv_field(v) << ',' << csv_field(a.section)
         << ',' << csv_field(a.entity) << ',' << csv_field(a.metric) << ',' << format_number(a.mean) << ','
         << format_number(a.sd) << ',' << format_number(a.ci_low) << ',' << format_number(a.ci_high) << ',' << a.n
         << '\n';
  }
}

inline Json rows_json(const std::vector<AggregateRow>& rows) {
  Json out = Json::array();
  for (const auto& a : rows)
    out.push_back({{"section", a.section}, {"entity", a.entity}, {"metric", a.metric}, {"mean", a.mean},
                   {"sd", a.sd}, {"ci95", {a.ci_low, a.ci_high}}, {"n", a.n}});
  return out;
}

inline Json to_json(const Scenario& s, const std::vector<MetricsReport>& runs) {
  Json j;
  j["scenario"] = s.name();
  j["kind"] = s.kind();
  Json jr = Json::array();
  for (const auto& r : runs) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"section", row.section}, {"entity", row.entity}, {"metric", row.metric}, {"value", row.value}});
    jr.push_back({{"seed", r.seed}, {"rows", std::move(rows)}});
  }
  j["runs"] = std::move(jr);
  if (runs.size() > 1) j["aggregate"] = rows_json(aggregate(runs));
  return j;
}

inline Json to_json(const Scenario& s, const std::vector<SweepCell>& cells) {
  Json j;
  j["scenario"] = s.name();
  j["kind"] = s.kind();
  Json jc = Json::array();
  for (const auto& c : cells) jc.push_back({{"param", c.param}, {"value", c.value}, {"aggregate", rows_json(c.rows)}});
  j["cells"] = std::move(jc);
  return j;
}

namespace detail {

inline bool summary_section(const std::string& s) { return s != "series" && s != "config" && s != "miner"; }

inline std::string interval(const AggregateRow& a) {
  if (a.n < 2) return format_number(a.mean);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6g  [%.6g, %.6g]", a.mean, a.ci_low, a.ci_high);
  return buf;
}

}  // namespace detail

/// Plain-text digest: headline metrics with 95% intervals, then the
/// parameters that fell back to built-in defaults.
inline void write_summary(std::ostream& os, const Scenario& s, const std::vector<MetricsReport>& runs) {
  os << "scenario: " << s.name() << '\n';
  if (!s.description().empty()) os << "  " << s.description() << '\n';
  os << "seeds: " << runs.size();
  if (!runs.empty()) os << " (" << runs.front().seed << ".." << runs.back().seed << ")";
  os << '\n';
  const auto rows = aggregate(runs);
  std::string current;
  for (const auto& a : rows) {
    if (!detail::summary_section(a.section)) continue;
    if (a.section != current) {
      os << '\n' << a.section << '\n';
      current = a.section;
    }
    os << "  " << a.entity << " " << a.metric << ": " << detail::interval(a) << '\n';
  }
  if (!s.expectations().empty()) os << "\nexpected bands\n";
  for (const auto& x : s.expectations()) {
    const auto* a = find_row(rows, x.section, x.entity, x.metric);
    os << "  " << (x.label.empty() ? x.section + "/" + x.entity + " " + x.metric : x.label) << ": ";
    if (!a) {
      os << "no data\n";
      continue;
    }
    const bool in = a->mean >= x.min && a->mean <= x.max;
    os << detail::interval(*a) << "  band [" << (x.min == -kNever ? "-inf" : format_number(x.min)) << ", "
       << (x.max == kNever ? "inf" : format_number(x.max)) << "]  " << (in ? "inside" : "OUTSIDE") << '\n';
  }
  bool header = false;
  for (const auto& p : s.provenance()) {
    if (p.source != "default") continue;
    if (!header) os << "\ndefaults used\n";
    header = true;
    os << "  " << p.parameter << " = " << format_number(p.value) << '\n';
  }
}

inline void write_sweep_summary(std::ostream& os, const Scenario& s, const std::vector<SweepCell>& cells,
                                const std::vector<std::string>& focus = {}) {
  os << "sweep of " << s.name() << '\n';
  for (const auto& c : cells) {
    os << '\n' << c.param << " = " << (c.value.is_string() ? c.value.get<std::string>() : c.value.dump()) << '\n';
    for (const auto& a : c.rows) {
      if (!detail::summary_section(a.section)) continue;
      if (!focus.empty() && std::find(focus.begin(), focus.end(), a.section) == focus.end()) continue;
      os << "  " << a.section << '/' << a.entity << ' ' << a.metric << ": " << detail::interval(a) << '\n';
    }
  }
}

}  // namespace gfwsim
