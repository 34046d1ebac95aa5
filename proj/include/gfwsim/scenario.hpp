// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfwsim/deanon.hpp"
#include "gfwsim/metrics.hpp"
#include "gfwsim/network.hpp"
#include "gfwsim/simulator.hpp"
#include "gfwsim/strategies.hpp"

namespace gfwsim {

using Json = nlohmann::json;

/// A parameter that fed the run, and where its value came from.
struct ProvenanceRow {
  std::string parameter;
  double value = 0.0;
  std::string source;  // "scenario" or "default"
};

/// A target band for one reported metric, shown next to the result.
struct Expectation {
  std::string label;
  std::string section, entity, metric;
  double min = -kNever;
  double max = kNever;
};

inline const std::set<std::string>& strategy_kinds() {
  static const std::set<std::string> k{"honest",        "empty_block",         "selfish",
                                       "punitive_fork", "feather_fork",        "withhold_bwh",
                                       "withhold_faw",  "double_spend_race",   "double_spend_finney",
                                       "double_spend_brute", "balance_attack", "goldfinger"};
  return k;
}

namespace detail {

inline void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(where, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError(where + "." + k, "unknown field");
  }
}

template <typename T>
T get(const Json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(where + "." + key, "wrong type");
  }
}

inline double number(const Json& obj, const char* key, double fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ValidationError(where + "." + key, "expected a number");
  return it->get<double>();
}

inline const Json& object_or_empty(const Json& obj, const char* key) {
  static const Json empty = Json::object();
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? empty : *it;
}

inline LinkProfile parse_profile(const Json& j, const std::string& where, LinkProfile base) {
  check_keys(j, where, {"latency", "bandwidth", "loss", "loss_k"});
  base.latency = number(j, "latency", base.latency, where);
  base.bandwidth = number(j, "bandwidth", base.bandwidth, where);
  base.loss = number(j, "loss", base.loss, where);
  base.loss_k = number(j, "loss_k", base.loss_k, where);
  base.validate(where);
  return base;
}

}  // namespace detail

class Scenario {
 public:
  static Scenario parse(const std::string& text, const std::string& origin = "<scenario>") {
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ValidationError(origin, std::string("malformed JSON: ") + e.what());
    }
    return from_json(std::move(doc));
  }

  static Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path, "cannot open scenario file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static Scenario from_json(Json doc) {
    Scenario s;
    s.doc_ = std::move(doc);
    s.validate();
    return s;
  }

  const Json& doc() const noexcept { return doc_; }
  const std::string& name() const noexcept { return name_; }
  const std::string& kind() const noexcept { return kind_; }
  const std::string& description() const noexcept { return description_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t seeds() const noexcept { return seeds_; }
  std::uint32_t trials() const noexcept { return trials_; }
  const MetricsOptions& metrics() const noexcept { return metrics_; }
  const WorldParams& world() const noexcept { return world_; }
  const std::vector<ProvenanceRow>& provenance() const noexcept { return provenance_; }
  const std::vector<Expectation>& expectations() const noexcept { return expect_; }

  /// Fresh simulation input for one run. Topology randomness derives from the seed.
  SimConfig build(std::uint64_t seed) const;

  /// Returns a copy with `path` (dot-separated; array elements of objects are
  /// addressed by their "name") set to `value`. Setting a miner's hash_share
  /// rescales the other miners so shares still sum to one.
  Scenario with(const std::string& path, const Json& value, bool numeric = false) const;

 private:
  void validate();
  void note(const std::string& param, const Json& obj, const char* key, double fallback) {
    auto it = obj.find(key);
    const bool set = it != obj.end() && it->is_number();
    provenance_.push_back({param, set ? it->get<double>() : fallback, set ? "scenario" : "default"});
  }

  Json doc_;
  std::string name_, kind_, description_;
  std::uint64_t seed_ = 1;
  std::uint32_t seeds_ = 30;
  std::uint32_t trials_ = 1;
  MetricsOptions metrics_;
  WorldParams world_;
  std::vector<ProvenanceRow> provenance_;
  std::vector<Expectation> expect_;
};

// ---------------------------------------------------------------------------

inline void Scenario::validate() {
  using detail::check_keys;
  const Json& d = doc_;
  check_keys(d, "scenario",
             {"name", "description", "kind", "seed", "seeds", "trials", "horizon", "mean_block_interval", "chain",
              "load", "relay", "profiles", "topology", "miners", "pools", "ppows_per_block", "tracked_txs",
              "blacklist", "control", "merchants", "observers", "metrics", "deanon", "expect"});
  name_ = detail::get<std::string>(d, "name", "", "scenario");
  if (name_.empty()) throw ValidationError("name", "scenario needs a name");
  description_ = detail::get<std::string>(d, "description", "", "scenario");
  kind_ = detail::get<std::string>(d, "kind", "consensus", "scenario");
  if (kind_ != "consensus" && kind_ != "deanon-clustering" && kind_ != "deanon-origin")
    throw ValidationError("kind", "unknown scenario kind '" + kind_ + "'");
  seed_ = detail::get<std::uint64_t>(d, "seed", 1, "scenario");
  seeds_ = detail::get<std::uint32_t>(d, "seeds", 30, "scenario");
  trials_ = detail::get<std::uint32_t>(d, "trials", 1, "scenario");
  if (seeds_ < 1) throw ValidationError("seeds", "must be >= 1");
  if (trials_ < 1) throw ValidationError("trials", "must be >= 1");

  const Json& ex = detail::object_or_empty(d, "expect");
  if (!ex.is_array() && !(ex.is_object() && ex.empty())) throw ValidationError("expect", "expected a list");
  for (const auto& e : ex) {
    check_keys(e, "expect", {"label", "section", "entity", "metric", "min", "max"});
    Expectation x;
    x.label = detail::get<std::string>(e, "label", "", "expect");
    x.section = detail::get<std::string>(e, "section", "", "expect");
    x.entity = detail::get<std::string>(e, "entity", "", "expect");
    x.metric = detail::get<std::string>(e, "metric", "", "expect");
    x.min = detail::number(e, "min", -kNever, "expect");
    x.max = detail::number(e, "max", kNever, "expect");
    if (x.section.empty() || x.metric.empty()) throw ValidationError("expect", "needs section and metric");
    expect_.push_back(std::move(x));
  }

  const Json& m = detail::object_or_empty(d, "metrics");
  check_keys(m, "metrics", {"finality_depth", "censor_window_blocks", "series_bucket_seconds"});
  metrics_.finality_depth = detail::get<std::uint32_t>(m, "finality_depth", 6, "metrics");
  metrics_.censor_window_blocks = detail::get<std::uint32_t>(m, "censor_window_blocks", 3, "metrics");
  metrics_.series_bucket = detail::number(m, "series_bucket_seconds", 86400.0, "metrics");
  if (metrics_.censor_window_blocks < 1) throw ValidationError("metrics.censor_window_blocks", "must be >= 1");

  if (kind_ == "deanon-clustering") {
    const Json& w = detail::object_or_empty(d, "deanon");
    check_keys(w, "deanon", {"users", "addresses_per_user", "tx_count", "p_merge", "coinbase_every"});
    world_.users = detail::get<std::uint32_t>(w, "users", world_.users, "deanon");
    world_.addresses_per_user = detail::get<std::uint32_t>(w, "addresses_per_user", world_.addresses_per_user, "deanon");
    world_.tx_count = detail::get<std::uint32_t>(w, "tx_count", world_.tx_count, "deanon");
    world_.p_merge = detail::number(w, "p_merge", world_.p_merge, "deanon");
    world_.coinbase_every = detail::get<std::uint32_t>(w, "coinbase_every", world_.coinbase_every, "deanon");
    world_.validate();
    provenance_.push_back({"deanon.users", static_cast<double>(world_.users), w.contains("users") ? "scenario" : "default"});
    provenance_.push_back({"deanon.p_merge", world_.p_merge, w.contains("p_merge") ? "scenario" : "default"});
    return;
  }

  // Provenance of calibrated defaults.
  note("mean_block_interval", d, "mean_block_interval", 600.0);
  const Json& chain = detail::object_or_empty(d, "chain");
  note("chain.block_reward", chain, "block_reward", 25.0);
  note("chain.fee_per_tx", chain, "fee_per_tx", 0.0001);
  note("chain.tx_bytes", chain, "tx_bytes", 400.0);
  const Json& load = detail::object_or_empty(d, "load");
  note("load.arrival_rate", load, "arrival_rate", 0.0);
  note("load.initial_backlog", load, "initial_backlog", 0.0);
  const Json& relay = detail::object_or_empty(d, "relay");
  note("relay.header_bytes", relay, "header_bytes", 100.0);
  note("relay.compact_bytes", relay, "compact_bytes", 15000.0);
  note("relay.validation_seconds_per_mb", relay, "validation_seconds_per_mb", 0.2);
  note("ppows_per_block", d, "ppows_per_block", 100.0);
  provenance_.push_back({"links.loss_k", kLossK, "default"});
  provenance_.push_back({"links.bandwidth", kDefaultBandwidth, "default"});
  provenance_.push_back({"metrics.finality_depth", static_cast<double>(metrics_.finality_depth),
                         m.contains("finality_depth") ? "scenario" : "default"});
  provenance_.push_back({"metrics.censor_window_blocks", static_cast<double>(metrics_.censor_window_blocks),
                         m.contains("censor_window_blocks") ? "scenario" : "default"});

  // A dry build catches every structural problem before anything runs.
  (void)build(seed_);
}

namespace detail {

struct NodeTable {
  std::map<std::string, NodeId> ids;
  NodeId at(const Json& name, const std::string& where) const {
    if (!name.is_string()) throw ValidationError(where, "expected a node name");
    auto it = ids.find(name.get<std::string>());
    if (it == ids.end()) throw ValidationError(where, "unknown node '" + name.get<std::string>() + "'");
    return it->second;
  }
  std::vector<NodeId> list(const Json& names, const std::string& where) const {
    std::vector<NodeId> out;
    if (names.is_null()) return out;
    if (!names.is_array()) throw ValidationError(where, "expected a list of node names");
    for (const auto& n : names) out.push_back(at(n, where));
    return out;
  }
};

inline std::unordered_set<AddressId> parse_blacklist(const Json& j, const std::string& where) {
  std::unordered_set<AddressId> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ValidationError(where, "expected a list of address ids");
  for (const auto& a : j) {
    if (!a.is_number_unsigned()) throw ValidationError(where, "address ids are non-negative integers");
    out.insert(a.get<AddressId>());
  }
  return out;
}

}  // namespace detail

inline SimConfig Scenario::build(std::uint64_t seed) const {
  using detail::check_keys;
  using detail::number;
  const Json& d = doc_;
  SimConfig c;
  c.seed = seed;
  c.mean_interval = number(d, "mean_block_interval", 600.0, "scenario");
  if (!(c.mean_interval > 0)) throw ValidationError("mean_block_interval", "must be > 0");

  const Json& chain = detail::object_or_empty(d, "chain");
  check_keys(chain, "chain", {"block_reward", "fee_per_tx", "tx_bytes", "max_block_bytes", "header_bytes", "coinbase_bytes"});
  c.chain.block_reward = number(chain, "block_reward", 25.0, "chain");
  c.chain.fee_per_tx = number(chain, "fee_per_tx", 0.0001, "chain");
  c.chain.tx_bytes = detail::get<std::uint32_t>(chain, "tx_bytes", 400, "chain");
  c.chain.max_block_bytes = detail::get<std::uint64_t>(chain, "max_block_bytes", kMaxBlockBytes, "chain");
  c.chain.header_bytes = detail::get<std::uint32_t>(chain, "header_bytes", 80, "chain");
  c.chain.coinbase_bytes = detail::get<std::uint32_t>(chain, "coinbase_bytes", 200, "chain");
  if (c.chain.fee_per_tx < 0) throw ValidationError("chain.fee_per_tx", "must be >= 0");
  if (c.chain.block_reward < 0) throw ValidationError("chain.block_reward", "must be >= 0");

  const Json& load = detail::object_or_empty(d, "load");
  check_keys(load, "load", {"arrival_rate", "initial_backlog"});
  c.load.arrival_rate = number(load, "arrival_rate", 0.0, "load");
  c.load.initial_backlog = number(load, "initial_backlog", 0.0, "load");
  if (c.load.arrival_rate < 0 || c.load.initial_backlog < 0) throw ValidationError("load", "must be >= 0");

  const Json& relay = detail::object_or_empty(d, "relay");
  check_keys(relay, "relay", {"mode", "switch_to_compact_at", "header_bytes", "compact_bytes", "tx_bytes",
                              "validation_seconds_per_mb"});
  const auto mode = detail::get<std::string>(relay, "mode", "full", "relay");
  if (mode == "full")
    c.relay.mode = RelayConfig::Mode::full;
  else if (mode == "compact")
    c.relay.mode = RelayConfig::Mode::compact;
  else
    throw ValidationError("relay.mode", "expected 'full' or 'compact'");
  if (relay.contains("switch_to_compact_at") && !relay["switch_to_compact_at"].is_null())
    c.relay.switch_to_compact_at = number(relay, "switch_to_compact_at", 0.0, "relay");
  c.relay.header_bytes = detail::get<std::uint32_t>(relay, "header_bytes", 100, "relay");
  c.relay.compact_bytes = detail::get<std::uint32_t>(relay, "compact_bytes", 15000, "relay");
  c.relay.tx_bytes = detail::get<std::uint32_t>(relay, "tx_bytes", 500, "relay");
  c.relay.validation_seconds_per_byte = number(relay, "validation_seconds_per_mb", 0.2, "relay") / 1e6;
  if (c.relay.validation_seconds_per_byte < 0) throw ValidationError("relay.validation_seconds_per_mb", "must be >= 0");

  // Link profiles by name.
  std::map<std::string, LinkProfile> profiles{{"intra", LinkProfile::intra_region()},
                                              {"cross", LinkProfile::cross_boundary()}};
  const Json& pj = detail::object_or_empty(d, "profiles");
  if (!pj.is_object()) throw ValidationError("profiles", "expected an object");
  for (const auto& [k, v] : pj.items()) {
    auto base = profiles.count(k) ? profiles[k] : LinkProfile{};
    profiles[k] = detail::parse_profile(v, "profiles." + k, base);
  }
  auto profile = [&](const Json& name, const std::string& where) {
    if (!name.is_string()) throw ValidationError(where, "expected a profile name");
    auto it = profiles.find(name.get<std::string>());
    if (it == profiles.end()) throw ValidationError(where, "unknown profile '" + name.get<std::string>() + "'");
    return it->second;
  };

  // Topology.
  RngStream topo_rng(seed, {0x746F706FULL});
  detail::NodeTable nodes;
  std::vector<bool> own_relay;
  const Json& t = detail::object_or_empty(d, "topology");
  check_keys(t, "topology", {"layout", "nodes", "random", "star", "edges", "intra_profile", "cross_profile",
                             "latency_jitter"});
  const auto layout = detail::get<std::string>(t, "layout", "regions", "topology");
  const double jitter = number(t, "latency_jitter", 0.0, "topology");
  if (jitter < 0 || jitter >= 1) throw ValidationError("topology.latency_jitter", "must be in [0, 1)");
  const LinkProfile intra = profile(t.value("intra_profile", Json("intra")), "topology.intra_profile");
  const LinkProfile cross = profile(t.value("cross_profile", Json("cross")), "topology.cross_profile");
  auto add_node = [&](const std::string& name, const std::string& region, const std::string& where) {
    if (nodes.ids.count(name)) throw ValidationError(where, "duplicate node '" + name + "'");
    nodes.ids[name] = c.topology.add_node(name, region);
    c.roles.emplace_back();
  };
  std::vector<NodeId> generated;
  if (layout == "random") {
    const Json& r = detail::object_or_empty(t, "random");
    check_keys(r, "topology.random", {"count", "degree", "region", "prefix", "profile"});
    const auto count = detail::get<std::uint32_t>(r, "count", 0, "topology.random");
    if (count < 2) throw ValidationError("topology.random.count", "need at least 2 nodes");
    const auto prefix = detail::get<std::string>(r, "prefix", "n", "topology.random");
    const auto region = detail::get<std::string>(r, "region", "net", "topology.random");
    for (std::uint32_t i = 0; i < count; ++i) {
      add_node(prefix + std::to_string(i), region, "topology.random");
      generated.push_back(static_cast<NodeId>(c.topology.node_count() - 1));
    }
  } else if (layout == "star") {
    const Json& r = detail::object_or_empty(t, "star");
    check_keys(r, "topology.star", {"leaves", "region", "profile"});
    const auto leaves = detail::get<std::uint32_t>(r, "leaves", 0, "topology.star");
    if (leaves < 1) throw ValidationError("topology.star.leaves", "need at least 1 leaf");
    const auto region = detail::get<std::string>(r, "region", "net", "topology.star");
    add_node("hub", region, "topology.star");
    for (std::uint32_t i = 0; i < leaves; ++i) add_node("leaf" + std::to_string(i), region, "topology.star");
  } else if (layout != "regions" && layout != "explicit") {
    throw ValidationError("topology.layout", "unknown layout '" + layout + "'");
  }
  const Json& nj = detail::object_or_empty(t, "nodes");
  std::vector<std::pair<NodeId, Json>> node_peers;
  if (!nj.is_null() && !(nj.is_object() && nj.empty())) {
    if (!nj.is_array()) throw ValidationError("topology.nodes", "expected a list");
    for (const auto& n : nj) {
      check_keys(n, "topology.nodes", {"name", "region", "relay", "passive", "peers"});
      const auto name = detail::get<std::string>(n, "name", "", "topology.nodes");
      if (name.empty()) throw ValidationError("topology.nodes.name", "missing");
      add_node(name, detail::get<std::string>(n, "region", "net", "topology.nodes." + name), "topology.nodes." + name);
      auto& role = c.roles.back();
      const auto relay_mode = detail::get<std::string>(n, "relay", "all", "topology.nodes." + name);
      if (relay_mode != "all" && relay_mode != "own")
        throw ValidationError("topology.nodes." + name + ".relay", "expected 'all' or 'own'");
      role.relay_foreign = relay_mode == "all";
      role.passive = detail::get<bool>(n, "passive", false, "topology.nodes." + name);
      if (n.contains("peers")) node_peers.emplace_back(nodes.ids[name], n["peers"]);
    }
  }
  if (c.topology.node_count() == 0) throw ValidationError("topology", "no nodes");

  auto link = [&](NodeId a, NodeId b, LinkProfile p) {
    if (!c.topology.edge_index(a, b)) c.topology.add_edge(a, b, jittered(p, jitter, topo_rng));
  };
  // Explicit edges first; layouts only fill pairs still unlinked.
  const Json& ej = detail::object_or_empty(t, "edges");
  if (!ej.is_null() && !(ej.is_object() && ej.empty())) {
    if (!ej.is_array()) throw ValidationError("topology.edges", "expected a list");
    for (const auto& e : ej) {
      check_keys(e, "topology.edges", {"a", "b", "profile", "latency"});
      const NodeId a = nodes.at(e.value("a", Json()), "topology.edges.a");
      const NodeId b = nodes.at(e.value("b", Json()), "topology.edges.b");
      LinkProfile p = e.contains("profile") ? profile(e["profile"], "topology.edges.profile")
                                            : (c.topology.crosses_boundary(a, b) ? cross : intra);
      if (e.contains("latency")) p.latency = number(e, "latency", p.latency, "topology.edges");
      p.validate("topology.edges");
      if (c.topology.edge_index(a, b)) throw ValidationError("topology.edges", "duplicate edge");
      c.topology.add_edge(a, b, jittered(p, jitter, topo_rng));
    }
  }

  if (layout == "regions") {
    for (NodeId a = 0; a < c.topology.node_count(); ++a)
      for (NodeId b = a + 1; b < c.topology.node_count(); ++b) {
        if (c.roles[a].passive || c.roles[b].passive) continue;
        link(a, b, c.topology.crosses_boundary(a, b) ? cross : intra);
      }
  } else if (layout == "random") {
    const Json& r = detail::object_or_empty(t, "random");
    const LinkProfile p = r.contains("profile") ? profile(r["profile"], "topology.random.profile") : intra;
    build_random(c.topology, generated, number(r, "degree", 4.0, "topology.random"), p, jitter, topo_rng);
  } else if (layout == "star") {
    const Json& r = detail::object_or_empty(t, "star");
    const LinkProfile p = r.contains("profile") ? profile(r["profile"], "topology.star.profile") : intra;
    const NodeId hub = nodes.ids.at("hub");
    for (const auto& [name, id] : nodes.ids)
      if (name.rfind("leaf", 0) == 0) link(hub, id, p);
  }
  for (const auto& [id, peers] : node_peers) {
    const std::string where = "topology.nodes." + c.topology.node(id).name + ".peers";
    std::vector<NodeId> targets;
    if (peers.is_number_unsigned()) {
      // Random peers from the generated or declared population.
      std::vector<NodeId> pool;
      for (NodeId n = 0; n < c.topology.node_count(); ++n)
        if (n != id && !c.roles[n].passive) pool.push_back(n);
      const auto k = std::min<std::size_t>(peers.get<std::size_t>(), pool.size());
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + topo_rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        targets.push_back(pool[i]);
      }
    } else if (peers.is_string() && peers.get<std::string>() == "all") {
      for (NodeId n = 0; n < c.topology.node_count(); ++n)
        if (n != id) targets.push_back(n);
    } else {
      targets = nodes.list(peers, where);
    }
    for (NodeId n : targets) link(id, n, c.topology.crosses_boundary(id, n) ? cross : intra);
  }
  // Global blacklist and tracked transactions.
  c.blacklist = detail::parse_blacklist(d.value("blacklist", Json()), "blacklist");
  const Json& tx = detail::object_or_empty(d, "tracked_txs");
  check_keys(tx, "tracked_txs", {"rate", "censored_fraction", "origins", "start_at", "stop_at", "fee"});
  c.tx_stream.rate = number(tx, "rate", 0.0, "tracked_txs");
  c.tx_stream.censored_fraction = number(tx, "censored_fraction", 0.0, "tracked_txs");
  if (c.tx_stream.censored_fraction < 0 || c.tx_stream.censored_fraction > 1)
    throw ValidationError("tracked_txs.censored_fraction", "must be in [0, 1]");
  if (c.tx_stream.rate < 0) throw ValidationError("tracked_txs.rate", "must be >= 0");
  c.tx_stream.origins = nodes.list(tx.value("origins", Json()), "tracked_txs.origins");
  c.tx_stream.start_at = number(tx, "start_at", 0.0, "tracked_txs");
  c.tx_stream.stop_at = number(tx, "stop_at", kNever, "tracked_txs");
  c.tx_stream.fee = number(tx, "fee", c.chain.fee_per_tx, "tracked_txs");
  c.tx_stream.size_bytes = c.chain.tx_bytes;

  // Merchants.
  const Json& mj = detail::object_or_empty(d, "merchants");
  std::map<std::string, std::uint32_t> merchant_n;
  if (!mj.is_null() && !(mj.is_object() && mj.empty())) {
    if (!mj.is_array()) throw ValidationError("merchants", "expected a list");
    for (const auto& m : mj) {
      check_keys(m, "merchants", {"name", "node", "confirmations"});
      MerchantSpec ms;
      ms.name = detail::get<std::string>(m, "name", "", "merchants");
      if (ms.name.empty()) throw ValidationError("merchants.name", "missing");
      ms.node = nodes.at(m.value("node", Json()), "merchants." + ms.name + ".node");
      ms.confirmations = detail::get<std::uint32_t>(m, "confirmations", 0, "merchants." + ms.name);
      ms.address = (1ULL << 50) + c.merchants.size();
      merchant_n[ms.name] = ms.confirmations;
      c.merchants.push_back(ms);
    }
  }
  c.observers = nodes.list(d.value("observers", Json()), "observers");
  for (NodeId o : c.observers) c.roles[o].passive = true;
  c.ppows_per_block = detail::get<std::uint32_t>(d, "ppows_per_block", 100, "scenario");
  if (c.ppows_per_block < 1) throw ValidationError("ppows_per_block", "must be >= 1");

  // Control actions.
  const Json& cj = detail::object_or_empty(d, "control");
  if (!cj.is_null() && !(cj.is_object() && cj.empty())) {
    if (!cj.is_array()) throw ValidationError("control", "expected a list");
    for (const auto& a : cj) {
      check_keys(a, "control", {"kind", "at", "group_a", "group_b", "exempt", "victims", "controller",
                                "forward_to_victim", "forward_from_victim", "extra_delay", "filter_id",
                                "boundary_only", "into_region", "blacklist", "censored_flag", "blocks"});
      ControlAction ca;
      ca.kind = control_kind_from_string(detail::get<std::string>(a, "kind", "", "control"));
      const std::string where = "control." + to_string(ca.kind);
      ca.at = number(a, "at", 0.0, where);
      if (ca.at < 0) throw ValidationError(where + ".at", "must be >= 0");
      ca.group_a = nodes.list(a.value("group_a", Json()), where + ".group_a");
      ca.group_b = nodes.list(a.value("group_b", Json()), where + ".group_b");
      ca.exempt = nodes.list(a.value("exempt", Json()), where + ".exempt");
      ca.victims = nodes.list(a.value("victims", Json()), where + ".victims");
      if (a.contains("controller")) ca.controller = nodes.at(a["controller"], where + ".controller");
      ca.forward_to_victim = detail::get<bool>(a, "forward_to_victim", false, where);
      ca.forward_from_victim = detail::get<bool>(a, "forward_from_victim", false, where);
      ca.extra_delay = number(a, "extra_delay", 0.0, where);
      ca.filter_id = detail::get<std::string>(a, "filter_id", "default", where);
      ca.boundary_only = detail::get<bool>(a, "boundary_only", true, where);
      ca.into_region = detail::get<std::string>(a, "into_region", "", where);
      ca.filter.blacklist = a.contains("blacklist") ? detail::parse_blacklist(a["blacklist"], where + ".blacklist")
                                                    : c.blacklist;
      ca.filter.censored_flag = detail::get<bool>(a, "censored_flag", true, where);
      ca.filter.blocks = detail::get<bool>(a, "blocks", false, where);
      if (ca.kind == ControlAction::Kind::eclipse && ca.controller == kNoNode)
        throw ValidationError(where + ".controller", "eclipse needs a controller");
      c.control.push_back(std::move(ca));
    }
    std::stable_sort(c.control.begin(), c.control.end(),
                     [](const ControlAction& x, const ControlAction& y) { return x.at < y.at; });
    // Dry-run the sequence so overlapping partitions fail at load time.
    ControlPlane probe(c.topology);
    for (const auto& ca : c.control) probe.apply(ca);
  }
  const bool has_partition = std::any_of(c.control.begin(), c.control.end(), [](const ControlAction& a) {
    return a.kind == ControlAction::Kind::partition;
  });

  // Pools.
  const Json& pools = detail::object_or_empty(d, "pools");
  std::map<std::string, PoolId> pool_ids;
  std::map<PoolId, NodeId> pool_node;
  if (!pools.is_null() && !(pools.is_object() && pools.empty())) {
    if (!pools.is_array()) throw ValidationError("pools", "expected a list");
    for (const auto& p : pools) {
      check_keys(p, "pools", {"name", "node", "manager_region"});
      PoolSpec ps;
      ps.id = static_cast<PoolId>(c.pools.size());
      ps.name = detail::get<std::string>(p, "name", "", "pools");
      if (ps.name.empty() || pool_ids.count(ps.name)) throw ValidationError("pools.name", "missing or duplicate");
      const NodeId n = nodes.at(p.value("node", Json()), "pools." + ps.name + ".node");
      ps.manager_region = c.topology.node(n).region;
      pool_ids[ps.name] = ps.id;
      pool_node[ps.id] = n;
      c.pools.push_back(ps);
    }
  }

  // Miners.
  const Json& miners = detail::object_or_empty(d, "miners");
  if (!miners.is_array() && !(miners.is_object() && miners.empty()))
    throw ValidationError("miners", "expected a list");
  std::vector<MinerSpec> specs_for_validation;
  double feather_share = 0.0;
  for (const auto& mj2 : miners) {
    const auto s = mj2.value("strategy", Json::object());
    if (s.is_object() && s.value("kind", "") == "feather_fork") feather_share += mj2.value("hash_share", 0.0);
  }
  std::set<std::string> names;
  auto push_miner = [&](MinerSpec spec, NodeId node, std::unique_ptr<Strategy> strat) {
    spec.id = static_cast<MinerId>(c.miners.size());
    MinerBinding b;
    b.spec = std::move(spec);
    b.node = node;
    b.strategy = std::move(strat);
    if (b.spec.pool != kNoPool) c.pools[b.spec.pool].members.insert(b.spec.id);
    c.miners.push_back(std::move(b));
  };
  for (const auto& mjs : miners) {
    check_keys(mjs, "miners", {"name", "hash_share", "node", "group", "strategy", "pool"});
    MinerSpec spec;
    spec.name = detail::get<std::string>(mjs, "name", "", "miners");
    if (spec.name.empty()) throw ValidationError("miners.name", "missing");
    if (!names.insert(spec.name).second) throw ValidationError("miners." + spec.name, "duplicate miner name");
    const std::string where = "miners." + spec.name;
    spec.hash_share = number(mjs, "hash_share", -1.0, where);
    specs_for_validation.push_back(spec);
    const NodeId node = nodes.at(mjs.value("node", Json()), where + ".node");
    spec.region = c.topology.node(node).region;
    spec.group = detail::get<std::string>(mjs, "group", spec.region, where);
    if (mjs.contains("pool") && !mjs["pool"].is_null()) {
      const auto pn = detail::get<std::string>(mjs, "pool", "", where);
      if (!pool_ids.count(pn)) throw ValidationError(where + ".pool", "unknown pool '" + pn + "'");
      spec.pool = pool_ids[pn];
    }
    const Json& sj = detail::object_or_empty(mjs, "strategy");
    if (!sj.is_object()) throw ValidationError(where + ".strategy", "expected an object");
    const auto kind = detail::get<std::string>(sj, "kind", "honest", where + ".strategy");
    if (!strategy_kinds().count(kind))
      throw ValidationError(where + ".strategy.kind", "unknown strategy kind '" + kind + "'");
    spec.strategy = kind;
    const std::string sw = where + ".strategy";
    std::unique_ptr<Strategy> strat;
    auto blacklist_for = [&]() {
      auto bl = sj.contains("blacklist") ? detail::parse_blacklist(sj["blacklist"], sw + ".blacklist") : c.blacklist;
      if (bl.empty() && c.tx_stream.censored_fraction <= 0)
        throw ValidationError(sw + ".blacklist", "censoring needs a non-empty blacklist or censored tracked transactions");
      return bl;
    };
    if (kind == "honest") {
      check_keys(sj, sw, {"kind", "rational", "forker_share", "give_up_depth"});
      std::optional<RationalCensorship> rational;
      if (detail::get<bool>(sj, "rational", false, sw)) {
        RationalCensorship rc;
        rc.forker_share = number(sj, "forker_share", feather_share, sw);
        rc.give_up_depth = detail::get<std::uint32_t>(sj, "give_up_depth", 1, sw);
        rc.blacklist = c.blacklist;
        rational = rc;
      }
      strat = std::make_unique<HonestStrategy>(rational);
    } else if (kind == "empty_block") {
      check_keys(sj, sw, {"kind"});
      strat = std::make_unique<EmptyBlockStrategy>();
    } else if (kind == "selfish") {
      check_keys(sj, sw, {"kind"});
      strat = std::make_unique<SelfishStrategy>();
      c.roles[node].relay_foreign = false;
    } else if (kind == "punitive_fork") {
      check_keys(sj, sw, {"kind", "blacklist", "max_fork_depth"});
      std::optional<std::uint32_t> depth;
      if (sj.contains("max_fork_depth") && !sj["max_fork_depth"].is_null())
        depth = detail::get<std::uint32_t>(sj, "max_fork_depth", 0, sw);
      strat = std::make_unique<ForkCensorStrategy>(blacklist_for(), depth);
    } else if (kind == "feather_fork") {
      check_keys(sj, sw, {"kind", "blacklist", "give_up_depth"});
      strat = std::make_unique<ForkCensorStrategy>(blacklist_for(),
                                                   detail::get<std::uint32_t>(sj, "give_up_depth", 1, sw));
    } else if (kind == "withhold_bwh" || kind == "withhold_faw") {
      check_keys(sj, sw, {"kind", "target_pool", "infiltration"});
      const auto target = detail::get<std::string>(sj, "target_pool", "", sw);
      if (!pool_ids.count(target)) throw ValidationError(sw + ".target_pool", "unknown pool '" + target + "'");
      const double infiltration = number(sj, "infiltration", 0.0, sw);
      if (infiltration < 0) throw ValidationError(sw + ".infiltration", "must be >= 0");
      if (infiltration > spec.hash_share + 1e-12)
        throw ValidationError(sw + ".infiltration", "exceeds the attacker's total hash share");
      if (spec.pool != kNoPool) throw ValidationError(where + ".pool", "a pool attacker mines solo outside the target");
      // Split the attacker into a solo honest part and an infiltrator that
      // mines for the target pool from the pool manager's node.
      MinerSpec solo = spec;
      solo.hash_share = spec.hash_share - infiltration;
      solo.strategy = "honest";
      MinerSpec inf = spec;
      inf.name = spec.name + "/infiltrator";
      inf.hash_share = infiltration;
      inf.pool = pool_ids[target];
      const NodeId pool_at = pool_node[inf.pool];
      inf.region = c.topology.node(pool_at).region;
      if (solo.hash_share > 1e-12) push_miner(solo, node, std::make_unique<HonestStrategy>());
      if (infiltration > 0) push_miner(inf, pool_at, std::make_unique<WithholdStrategy>(kind == "withhold_faw"));
      continue;
    } else if (kind.rfind("double_spend_", 0) == 0) {
      check_keys(sj, sw, {"kind", "merchant", "give_up_deficit", "start_at", "amount"});
      DoubleSpendParams p;
      p.variant = kind == "double_spend_race"     ? DoubleSpendVariant::race
                  : kind == "double_spend_finney" ? DoubleSpendVariant::finney
                                                  : DoubleSpendVariant::brute;
      p.merchant = detail::get<std::string>(sj, "merchant", "", sw);
      if (!merchant_n.count(p.merchant)) throw ValidationError(sw + ".merchant", "unknown merchant '" + p.merchant + "'");
      p.give_up_deficit = detail::get<std::uint32_t>(sj, "give_up_deficit", 20, sw);
      p.start_at = number(sj, "start_at", 0.0, sw);
      p.amount = number(sj, "amount", 1.0, sw);
      validate_double_spend(p, merchant_n[p.merchant]);
      strat = std::make_unique<DoubleSpendStrategy>(p);
      c.roles[node].relay_foreign = false;
      c.stop_on_payment_decision = true;
    } else if (kind == "balance_attack") {
      check_keys(sj, sw, {"kind", "merchant", "shift_time", "start_at"});
      if (!has_partition) throw ValidationError(sw, "balance attack needs a partition control action");
      BalanceParams p;
      p.merchant = detail::get<std::string>(sj, "merchant", "", sw);
      if (!merchant_n.count(p.merchant)) throw ValidationError(sw + ".merchant", "unknown merchant '" + p.merchant + "'");
      p.shift_time = number(sj, "shift_time", 0.0, sw);
      p.start_at = number(sj, "start_at", 1.0, sw);
      strat = std::make_unique<BalanceAttackStrategy>(p);
      c.roles[node].relay_foreign = false;
    } else if (kind == "goldfinger") {
      check_keys(sj, sw, {"kind"});
      strat = std::make_unique<GoldfingerStrategy>();
    }
    push_miner(spec, node, std::move(strat));
  }
  if (kind_ == "consensus") {
    if (specs_for_validation.empty()) throw ValidationError("miners", "consensus scenarios need miners");
    validate_hash_shares(specs_for_validation, 1e-9);
  }
  validate_pools(c.pools);

  // Horizon.
  const Json& h = detail::object_or_empty(d, "horizon");
  check_keys(h, "horizon", {"blocks", "seconds"});
  if (h.contains("blocks")) c.horizon.blocks = detail::get<std::uint32_t>(h, "blocks", 0, "horizon");
  if (h.contains("seconds")) c.horizon.seconds = number(h, "seconds", 0.0, "horizon");
  if (!c.horizon.blocks && !c.horizon.seconds) throw ValidationError("horizon", "set blocks or seconds");
  return c;
}

inline Scenario Scenario::with(const std::string& path, const Json& value, bool numeric) const {
  Json doc = doc_;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) throw ValidationError("param", "empty path");
  Json* cur = &doc;
  Json* miners_array = nullptr;
  Json* miner_entry = nullptr;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& key = parts[i];
    if (cur->is_array()) {
      Json* found = nullptr;
      for (auto& e : *cur)
        if (e.is_object() && e.value("name", "") == key) found = &e;
      if (!found) {
        try {
          const std::size_t idx = std::stoul(key);
          if (idx < cur->size()) found = &(*cur)[idx];
        } catch (const std::exception&) {
        }
      }
      if (!found) throw ValidationError("param", "no element '" + key + "' in " + path);
      if (i == 1 && parts[0] == "miners") {
        miners_array = cur;
        miner_entry = found;
      }
      cur = found;
    } else {
      if (!cur->is_object()) throw ValidationError("param", "cannot descend into " + key);
      cur = &(*cur)[key];
    }
  }
  const std::string& leaf = parts.back();
  if (cur->is_array()) throw ValidationError("param", "path must end at an object field");
  if (numeric) {
    if (!value.is_number()) throw ValidationError("values", "sweep values must be numeric");
    if (cur->is_object() && cur->contains(leaf) && !(*cur)[leaf].is_number())
      throw ValidationError("param", path + " is not a numeric field");
  }
  (*cur)[leaf] = value;
  if (miners_array && miner_entry && leaf == "hash_share" && parts.size() == 3) {
    const double target = value.get<double>();
    double others = 0;
    for (auto& e : *miners_array)
      if (&e != miner_entry) others += e.value("hash_share", 0.0);
    if (others > 0)
      for (auto& e : *miners_array)
        if (&e != miner_entry) e["hash_share"] = e.value("hash_share", 0.0) * (1.0 - target) / others;
  }
  return from_json(std::move(doc));
}

}  // namespace gfwsim
