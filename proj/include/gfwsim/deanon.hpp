// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "gfwsim/chain.hpp"
#include "gfwsim/network.hpp"
#include "gfwsim/rng.hpp"
#include "gfwsim/simulator.hpp"

namespace gfwsim {

using UserId = std::uint32_t;

struct WorldParams {
  std::uint32_t users = 100;
  std::uint32_t addresses_per_user = 5;
  std::uint32_t tx_count = 2000;
  double p_merge = 0.3;  // chance a payment co-spends several of the payer's addresses
  std::uint32_t coinbase_every = 50;  // a miner payout every so many txs; 0 disables

  void validate() const {
    if (users < 2) throw ValidationError("deanon.users", "need at least 2 users");
    if (addresses_per_user < 1) throw ValidationError("deanon.addresses_per_user", "must be >= 1");
    if (tx_count < 1) throw ValidationError("deanon.tx_count", "must be >= 1");
    if (!(p_merge >= 0.0 && p_merge <= 1.0)) throw ValidationError("deanon.p_merge", "must be in [0, 1]");
  }
};

/// Synthetic wallets with known ownership. Every transaction's inputs belong
/// to a single user.
struct WalletWorld {
  std::vector<UserId> users;
  std::unordered_map<AddressId, UserId> owner;  // ground truth; analysis never reads it
  std::vector<SimTransaction> ledger;
};

inline AddressId world_address(UserId u, std::uint32_t k, std::uint32_t per_user) {
  return static_cast<AddressId>(u) * per_user + k + 1;
}

inline WalletWorld generate_world(const WorldParams& p, RngStream& rng) {
  p.validate();
  WalletWorld w;
  for (UserId u = 0; u < p.users; ++u) {
    w.users.push_back(u);
    for (std::uint32_t k = 0; k < p.addresses_per_user; ++k) w.owner[world_address(u, k, p.addresses_per_user)] = u;
  }
  TxId next = 1;
  std::uint64_t ref = 1;
  for (std::uint32_t i = 0; i < p.tx_count; ++i) {
    if (p.coinbase_every && i % p.coinbase_every == 0) {
      // Payouts to several users in one coinbase: never evidence of common ownership.
      SimTransaction cb;
      cb.id = next++;
      for (int j = 0; j < 3; ++j) {
        const auto u = static_cast<UserId>(rng.below(p.users));
        cb.outputs.push_back({world_address(u, static_cast<std::uint32_t>(rng.below(p.addresses_per_user)),
                                            p.addresses_per_user),
                              25.0 / 3});
      }
      w.ledger.push_back(std::move(cb));
    }
    const auto payer = static_cast<UserId>(rng.below(p.users));
    auto payee = static_cast<UserId>(rng.below(p.users - 1));
    if (payee >= payer) ++payee;
    SimTransaction tx;
    tx.id = next++;
    std::vector<std::uint32_t> slots(p.addresses_per_user);
    std::iota(slots.begin(), slots.end(), 0u);
    std::uint32_t n_in = 1;
    if (p.addresses_per_user > 1 && rng.bernoulli(p.p_merge))
      n_in = 2 + static_cast<std::uint32_t>(rng.below(p.addresses_per_user - 1));
    for (std::uint32_t j = 0; j < n_in; ++j) {
      const auto pick = j + static_cast<std::uint32_t>(rng.below(slots.size() - j));
      std::swap(slots[j], slots[pick]);
      tx.inputs.push_back({world_address(payer, slots[j], p.addresses_per_user), ref++});
    }
    tx.outputs.push_back(
        {world_address(payee, static_cast<std::uint32_t>(rng.below(p.addresses_per_user)), p.addresses_per_user), 1.0});
    tx.outputs.push_back(
        {world_address(payer, static_cast<std::uint32_t>(rng.below(p.addresses_per_user)), p.addresses_per_user), 0.5});
    tx.fee = 0.0001;
    w.ledger.push_back(std::move(tx));
  }
  return w;
}

/// Disjoint clusters over every address seen in the ledger.
struct ClusterSet {
  std::map<AddressId, AddressId> root;  // address -> smallest address in its cluster

  std::size_t cluster_count() const {
    std::size_t n = 0;
    for (const auto& [a, r] : root) n += a == r;
    return n;
  }
  bool same(AddressId a, AddressId b) const { return root.at(a) == root.at(b); }
};

/// Union-find over co-spent inputs; coinbase transactions carry no inputs and
/// contribute only singleton addresses.
inline ClusterSet cluster_multi_input(const std::vector<SimTransaction>& ledger) {
  std::unordered_map<AddressId, AddressId> parent;
  auto find = [&](AddressId a) {
    AddressId r = a;
    while (parent[r] != r) r = parent[r];
    while (parent[a] != r) {
      const AddressId up = parent[a];
      parent[a] = r;
      a = up;
    }
    return r;
  };
  auto touch = [&](AddressId a) { parent.try_emplace(a, a); };
  for (const auto& tx : ledger) {
    for (const auto& o : tx.outputs) touch(o.address);
    for (const auto& in : tx.inputs) touch(in.address);
    if (tx.is_coinbase() || tx.inputs.size() < 2) continue;
    for (std::size_t i = 1; i < tx.inputs.size(); ++i) {
      AddressId a = find(tx.inputs[0].address), b = find(tx.inputs[i].address);
      if (a == b) continue;
      // Smaller id becomes the root so the partition is order-independent.
      if (b < a) std::swap(a, b);
      parent[b] = a;
    }
  }
  ClusterSet out;
  for (const auto& [a, p] : parent) out.root[a] = a;
  for (auto& [a, r] : out.root) r = find(a);
  // Canonical root: smallest address in the cluster.
  std::map<AddressId, AddressId> smallest;
  for (const auto& [a, r] : out.root) smallest.try_emplace(r, a);
  for (auto& [a, r] : out.root) r = smallest[r];
  return out;
}

struct ClusterScore {
  double precision = 1.0;
  double recall = 1.0;
  std::uint64_t clustered_pairs = 0;
  std::uint64_t owner_pairs = 0;
  std::uint64_t true_pairs = 0;
};

/// Pairwise precision and recall of a clustering against ground-truth owners.
/// Vacuous ratios (no pairs) score 1.
inline ClusterScore score_clusters(const ClusterSet& c, const std::unordered_map<AddressId, UserId>& owner) {
  std::map<std::pair<AddressId, UserId>, std::uint64_t> cells;
  std::map<AddressId, std::uint64_t> by_cluster;
  std::map<UserId, std::uint64_t> by_owner;
  for (const auto& [a, r] : c.root) {
    const UserId u = owner.at(a);
    ++cells[{r, u}];
    ++by_cluster[r];
    ++by_owner[u];
  }
  auto pairs = [](std::uint64_t n) { return n * (n - 1) / 2; };
  ClusterScore s;
  for (const auto& [k, n] : cells) s.true_pairs += pairs(n);
  for (const auto& [k, n] : by_cluster) s.clustered_pairs += pairs(n);
  for (const auto& [k, n] : by_owner) s.owner_pairs += pairs(n);
  if (s.clustered_pairs) s.precision = static_cast<double>(s.true_pairs) / static_cast<double>(s.clustered_pairs);
  if (s.owner_pairs) s.recall = static_cast<double>(s.true_pairs) / static_cast<double>(s.owner_pairs);
  return s;
}

struct OriginGuess {
  NodeId node = kNoNode;
  Seconds estimated_send = 0.0;
};

/// Guesses each transaction's origin as the relaying peer whose estimated send
/// time (first-hear time minus that link's one-way transfer time) is earliest
/// across all observers.
inline std::map<TxId, OriginGuess> infer_origin(const std::vector<FirstHear>& log, const Topology& topo,
                                                std::uint32_t tx_bytes = 500) {
  std::map<TxId, OriginGuess> out;
  for (const auto& h : log) {
    const Seconds hop = topo.edge_index(h.peer, h.observer)
                            ? transfer_time(topo.profile(h.peer, h.observer), tx_bytes)
                            : 0.0;
    const Seconds est = h.time - hop;
    auto [it, fresh] = out.try_emplace(h.tx, OriginGuess{h.peer, est});
    if (!fresh && (est < it->second.estimated_send ||
                   (est == it->second.estimated_send && h.peer < it->second.node)))
      it->second = {h.peer, est};
  }
  return out;
}

struct OriginScore {
  std::uint64_t guessed = 0;
  std::uint64_t correct = 0;
  double accuracy() const { return guessed ? static_cast<double>(correct) / static_cast<double>(guessed) : 0.0; }
};

inline OriginScore score_origins(const std::map<TxId, OriginGuess>& guesses, const std::vector<TrackedTx>& truth) {
  std::unordered_map<TxId, NodeId> origin;
  for (const auto& t : truth) origin[t.id] = t.origin;
  OriginScore s;
  for (const auto& [tx, g] : guesses) {
    auto it = origin.find(tx);
    if (it == origin.end()) continue;
    ++s.guessed;
    s.correct += it->second == g.node;
  }
  return s;
}

}  // namespace gfwsim
