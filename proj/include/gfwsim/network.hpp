// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gfwsim/chain.hpp"
#include "gfwsim/rng.hpp"
#include "gfwsim/types.hpp"

namespace gfwsim {

// Goodput derating under packet loss follows an inverse-square-root law,
// derate(loss) = (1 - loss) / (1 + k * sqrt(loss)). The constants below are
// the solution of calibrate_links() for a 1 MB body taking 3.9 s inside a
// region (81 ms, 0.2% loss) and 17.4 s across the boundary (218 ms, 6.9% loss).
inline constexpr double kLossK = 42.63793450213488;
inline constexpr double kDefaultBandwidth = 762673.9205929914;  // bytes per second

struct LinkProfile {
  Seconds latency = 0.0;
  double bandwidth = kDefaultBandwidth;
  double loss = 0.0;
  double loss_k = kLossK;

  void validate(const std::string& field = "link") const {
    if (!(latency >= 0.0)) throw ValidationError(field + ".latency", "must be >= 0");
    if (!(bandwidth > 0.0)) throw ValidationError(field + ".bandwidth", "must be > 0");
    if (!(loss >= 0.0 && loss < 1.0)) throw ValidationError(field + ".loss", "must be in [0, 1)");
  }

  static LinkProfile intra_region() { return {0.081, kDefaultBandwidth, 0.002, kLossK}; }
  static LinkProfile cross_boundary() { return {0.218, kDefaultBandwidth, 0.069, kLossK}; }
};

inline double derate(double loss, double k) { return (1.0 - loss) / (1.0 + k * std::sqrt(loss)); }

inline double effective_goodput(const LinkProfile& p) { return p.bandwidth * derate(p.loss, p.loss_k); }

/// One-way time to move `size_bytes` over a link: latency plus serialization
/// at the loss-derated goodput.
inline Seconds transfer_time(const LinkProfile& p, std::uint64_t size_bytes) {
  return p.latency + static_cast<double>(size_bytes) / effective_goodput(p);
}

struct LinkCalibration {
  double loss_k = 0.0;
  double bandwidth = 0.0;
};

/// Solves for (k, bandwidth) such that a `size` body takes `target_a` seconds
/// over link `a` and `target_b` over link `b` (latencies and losses fixed).
inline LinkCalibration calibrate_links(const LinkProfile& a, Seconds target_a, const LinkProfile& b,
                                       Seconds target_b, std::uint64_t size) {
  const double ratio = (target_b - b.latency) / (target_a - a.latency) * (1.0 - b.loss) / (1.0 - a.loss);
  LinkCalibration c;
  c.loss_k = (ratio - 1.0) / (std::sqrt(b.loss) - ratio * std::sqrt(a.loss));
  c.bandwidth = static_cast<double>(size) * (1.0 + c.loss_k * std::sqrt(a.loss)) /
                ((1.0 - a.loss) * (target_a - a.latency));
  return c;
}

struct NodeSpec {
  NodeId id = 0;
  std::string name;
  std::string region;
};

struct Edge {
  NodeId a = 0;
  NodeId b = 0;
  LinkProfile ab;  // a -> b
  LinkProfile ba;  // b -> a
};

class Topology {
 public:
  NodeId add_node(std::string name, std::string region) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({id, std::move(name), std::move(region)});
    adjacency_.emplace_back();
    return id;
  }

  void add_edge(NodeId a, NodeId b, const LinkProfile& profile) { add_edge(a, b, profile, profile); }

  void add_edge(NodeId a, NodeId b, const LinkProfile& ab, const LinkProfile& ba) {
    if (a == b) throw ValidationError("topology.edges", "self-loop");
    if (a >= nodes_.size() || b >= nodes_.size()) throw ValidationError("topology.edges", "unknown node");
    if (edge_index(a, b)) throw ValidationError("topology.edges", "duplicate edge");
    ab.validate("topology.edges");
    ba.validate("topology.edges");
    const auto idx = edges_.size();
    edges_.push_back({a, b, ab, ba});
    adjacency_[a].push_back({b, idx});
    adjacency_[b].push_back({a, idx});
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
  const NodeSpec& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::optional<NodeId> find(const std::string& name) const {
    for (const auto& n : nodes_)
      if (n.name == name) return n.id;
    return std::nullopt;
  }

  struct Neighbor {
    NodeId node;
    std::size_t edge;
  };
  const std::vector<Neighbor>& neighbors(NodeId n) const { return adjacency_.at(n); }

  std::optional<std::size_t> edge_index(NodeId a, NodeId b) const {
    for (const auto& nb : adjacency_.at(a))
      if (nb.node == b) return nb.edge;
    return std::nullopt;
  }

  const LinkProfile& profile(NodeId from, NodeId to) const {
    const auto idx = edge_index(from, to);
    if (!idx) throw std::out_of_range("no edge between nodes");
    const Edge& e = edges_[*idx];
    return e.a == from ? e.ab : e.ba;
  }

  bool crosses_boundary(NodeId a, NodeId b) const { return nodes_.at(a).region != nodes_.at(b).region; }

  bool connected() const {
    if (nodes_.empty()) return true;
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<NodeId> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      for (const auto& nb : adjacency_[n])
        if (!seen[nb.node]) {
          seen[nb.node] = true;
          ++count;
          stack.push_back(nb.node);
        }
    }
    return count == nodes_.size();
  }

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

/// Scales latency by (1 + jitter * U(-1, 1)); used to break propagation symmetry.
inline LinkProfile jittered(LinkProfile p, double jitter, RngStream& rng) {
  if (jitter > 0.0) p.latency *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
  return p;
}

/// Connects every pair of nodes in `members` with `profile`.
inline void build_clique(Topology& t, const std::vector<NodeId>& members, const LinkProfile& profile,
                         double jitter, RngStream& rng) {
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j)
      t.add_edge(members[i], members[j], jittered(profile, jitter, rng));
}

/// Random connected graph: a random spanning tree plus extra random edges until
/// the mean degree reaches `degree`.
inline void build_random(Topology& t, const std::vector<NodeId>& members, double degree,
                         const LinkProfile& profile, double jitter, RngStream& rng) {
  if (members.size() < 2) return;
  for (std::size_t i = 1; i < members.size(); ++i) {
    const NodeId other = members[rng.below(i)];
    t.add_edge(members[i], other, jittered(profile, jitter, rng));
  }
  const std::size_t n = members.size();
  const auto target = static_cast<std::size_t>(degree * static_cast<double>(n) / 2.0);
  const std::size_t max_edges = n * (n - 1) / 2;
  std::size_t edges = n - 1;
  while (edges < std::min(target, max_edges)) {
    const NodeId a = members[rng.below(n)];
    const NodeId b = members[rng.below(n)];
    if (a == b || t.edge_index(a, b)) continue;
    t.add_edge(a, b, jittered(profile, jitter, rng));
    ++edges;
  }
}

/// Payload filter installed on links by a censor_link action.
struct TxFilter {
  std::unordered_set<AddressId> blacklist;
  bool censored_flag = true;
  bool blocks = false;  // also drop block bodies carrying a matching transaction

  bool matches(const SimTransaction& tx) const { return is_blacklisted(tx, blacklist, censored_flag); }
  bool matches(const SimBlock& b) const {
    for (std::size_t i = 1; i < b.txs.size(); ++i)
      if (matches(*b.txs[i])) return true;
    return false;
  }
};

struct ControlAction {
  enum class Kind { partition, heal, eclipse, release, censor_link, uncensor_link };
  Kind kind = Kind::partition;
  Seconds at = 0.0;
  // partition
  std::vector<NodeId> group_a;
  std::vector<NodeId> group_b;
  std::vector<NodeId> exempt;  // nodes that keep talking to both sides
  // eclipse
  std::vector<NodeId> victims;
  NodeId controller = kNoNode;
  bool forward_to_victim = false;
  bool forward_from_victim = false;
  Seconds extra_delay = 0.0;
  LinkProfile eclipse_link = LinkProfile::intra_region();
  // censor_link
  std::string filter_id = "default";
  bool boundary_only = true;
  std::string into_region;  // empty: both directions
  TxFilter filter;
};

inline std::string to_string(ControlAction::Kind k) {
  switch (k) {
    case ControlAction::Kind::partition: return "partition";
    case ControlAction::Kind::heal: return "heal";
    case ControlAction::Kind::eclipse: return "eclipse";
    case ControlAction::Kind::release: return "release";
    case ControlAction::Kind::censor_link: return "censor_link";
    case ControlAction::Kind::uncensor_link: return "uncensor_link";
  }
  return "?";
}

inline ControlAction::Kind control_kind_from_string(const std::string& s) {
  using K = ControlAction::Kind;
  if (s == "partition") return K::partition;
  if (s == "heal") return K::heal;
  if (s == "eclipse") return K::eclipse;
  if (s == "release") return K::release;
  if (s == "censor_link") return K::censor_link;
  if (s == "uncensor_link") return K::uncensor_link;
  throw ValidationError("control.kind", "unknown control action '" + s + "'");
}

struct EclipseState {
  NodeId controller = kNoNode;
  bool forward_to_victim = false;
  bool forward_from_victim = false;
  Seconds extra_delay = 0.0;
  LinkProfile link;
};

/// Mutable connectivity overlay on a static topology: partitions, eclipses,
/// and payload filters.
class ControlPlane {
 public:
  explicit ControlPlane(const Topology& topo) : topo_(&topo), side_(topo.node_count(), -1) {}

  void apply(const ControlAction& a) {
    using K = ControlAction::Kind;
    for (NodeId n : a.group_a) check_node(n, "group_a");
    for (NodeId n : a.group_b) check_node(n, "group_b");
    for (NodeId n : a.victims) check_node(n, "victims");
    switch (a.kind) {
      case K::partition:
        if (partition_active_)
          throw ValidationError("control.partition", "overlapping partitions are not supported");
        if (a.group_a.empty() || a.group_b.empty())
          throw ValidationError("control.partition", "both groups must be non-empty");
        std::fill(side_.begin(), side_.end(), -1);
        for (NodeId n : a.group_a) side_[n] = 0;
        for (NodeId n : a.group_b) {
          if (side_[n] == 0) throw ValidationError("control.partition", "groups overlap");
          side_[n] = 1;
        }
        for (NodeId n : a.exempt) side_[n] = -1;
        partition_active_ = true;
        break;
      case K::heal:
        partition_active_ = false;
        std::fill(side_.begin(), side_.end(), -1);
        break;
      case K::eclipse:
        check_node(a.controller, "controller");
        if (a.victims.empty()) throw ValidationError("control.eclipse", "no victims");
        for (NodeId v : a.victims) {
          if (v == a.controller) throw ValidationError("control.eclipse", "controller cannot eclipse itself");
          eclipses_[v] = {a.controller, a.forward_to_victim, a.forward_from_victim, a.extra_delay, a.eclipse_link};
        }
        break;
      case K::release:
        if (a.victims.empty()) eclipses_.clear();
        for (NodeId v : a.victims) eclipses_.erase(v);
        break;
      case K::censor_link:
        filters_[a.filter_id] = {a.boundary_only, a.into_region, a.filter};
        break;
      case K::uncensor_link:
        filters_.erase(a.filter_id);
        break;
    }
  }

  bool partition_active() const noexcept { return partition_active_; }

  bool partitioned(NodeId a, NodeId b) const {
    if (!partition_active_) return false;
    return side_[a] >= 0 && side_[b] >= 0 && side_[a] != side_[b];
  }

  const EclipseState* eclipse_of(NodeId n) const {
    auto it = eclipses_.find(n);
    return it == eclipses_.end() ? nullptr : &it->second;
  }

  /// Peers `n` can currently exchange messages with.
  std::vector<NodeId> peers(NodeId n) const {
    std::vector<NodeId> out;
    if (const auto* e = eclipse_of(n)) {
      out.push_back(e->controller);
      return out;
    }
    for (const auto& nb : topo_->neighbors(n)) {
      if (eclipse_of(nb.node) && eclipse_of(nb.node)->controller != n) continue;
      if (!partitioned(n, nb.node)) out.push_back(nb.node);
    }
    for (const auto& [victim, e] : eclipses_)
      if (e.controller == n && !topo_->edge_index(n, victim)) out.push_back(victim);
    return out;
  }

  /// Profile for a message from -> to, accounting for eclipse rerouting.
  LinkProfile link(NodeId from, NodeId to) const {
    if (const auto* e = eclipse_of(to); e && e->controller == from) {
      LinkProfile p = topo_->edge_index(from, to) ? topo_->profile(from, to) : e->link;
      p.latency += e->extra_delay;
      return p;
    }
    if (const auto* e = eclipse_of(from); e && e->controller == to) {
      LinkProfile p = topo_->edge_index(from, to) ? topo_->profile(from, to) : e->link;
      p.latency += e->extra_delay;
      return p;
    }
    return topo_->profile(from, to);
  }

  bool tx_blocked(NodeId from, NodeId to, const SimTransaction& tx) const {
    for (const auto& [id, f] : filters_)
      if (applies(f, from, to) && f.filter.matches(tx)) return true;
    return false;
  }

  bool block_blocked(NodeId from, NodeId to, const SimBlock& b) const {
    for (const auto& [id, f] : filters_)
      if (f.filter.blocks && applies(f, from, to) && f.filter.matches(b)) return true;
    return false;
  }

 private:
  struct InstalledFilter {
    bool boundary_only;
    std::string into_region;
    TxFilter filter;
  };

  void check_node(NodeId n, const char* what) const {
    if (n >= topo_->node_count()) throw ValidationError(std::string("control.") + what, "unknown node");
  }

  bool applies(const InstalledFilter& f, NodeId from, NodeId to) const {
    if (f.boundary_only && !topo_->crosses_boundary(from, to)) return false;
    if (!f.into_region.empty() && topo_->node(to).region != f.into_region) return false;
    return true;
  }

  const Topology* topo_;
  std::vector<int> side_;
  bool partition_active_ = false;
  std::map<NodeId, EclipseState> eclipses_;
  std::map<std::string, InstalledFilter> filters_;
};

}  // namespace gfwsim
