// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gfwsim/types.hpp"

namespace gfwsim {

struct TxInput {
  AddressId address = 0;
  std::uint64_t prev_ref = 0;  // identifies the prior output being spent

  friend bool operator==(const TxInput&, const TxInput&) = default;
};

struct TxOutput {
  AddressId address = 0;
  Btc amount = 0.0;
};

struct SimTransaction {
  TxId id = 0;
  std::vector<TxInput> inputs;  // empty only for coinbase
  std::vector<TxOutput> outputs;
  Btc fee = 0.0;
  NodeId origin_node = kNoNode;
  Seconds created_at = 0.0;
  bool censored = false;
  std::uint32_t size_bytes = 400;

  bool is_coinbase() const noexcept { return inputs.empty(); }

  Btc output_total() const noexcept {
    Btc total = 0.0;
    for (const auto& o : outputs) total += o.amount;
    return total;
  }

  bool touches(AddressId a) const noexcept {
    for (const auto& i : inputs)
      if (i.address == a) return true;
    for (const auto& o : outputs)
      if (o.address == a) return true;
    return false;
  }

  void validate() const {
    if (fee < 0.0) throw ValidationError("tx.fee", "must be >= 0");
    for (const auto& o : outputs)
      if (o.amount < 0.0) throw ValidationError("tx.outputs", "amounts must be >= 0");
  }
};

using TxPtr = std::shared_ptr<const SimTransaction>;

inline std::uint64_t input_key(const TxInput& in) noexcept {
  return in.address * 0x9E3779B97F4A7C15ULL ^ (in.prev_ref + 0x7F4A7C15ULL);
}

/// Byte and fee constants shared by template assembly and block construction.
struct ChainParams {
  std::uint32_t header_bytes = 80;
  std::uint32_t coinbase_bytes = 200;
  std::uint32_t tx_bytes = 400;  // background transactions
  Btc fee_per_tx = 0.0001;
  std::uint64_t max_block_bytes = kMaxBlockBytes;
  Btc block_reward = 25.0;
};

struct SimBlock {
  BlockId id = kGenesisId;
  BlockId parent = kNoBlock;
  std::uint32_t height = 0;
  MinerId miner = kNoMiner;
  std::vector<TxPtr> txs;  // txs[0] is the coinbase
  // Background fee-paying transactions are fungible and never conflict, so
  // only their count travels with the block.
  std::uint32_t filler_count = 0;
  Btc filler_fees = 0.0;
  std::uint64_t cumulative_filler = 0;
  std::uint64_t size_bytes = 0;
  Seconds found_at = 0.0;
  BlockId prev_explicit = kNoBlock;  // nearest ancestor carrying non-coinbase txs

  bool is_genesis() const noexcept { return parent == kNoBlock; }
  bool has_explicit() const noexcept { return txs.size() > 1; }
  bool is_empty() const noexcept { return txs.size() <= 1 && filler_count == 0; }
  std::size_t tx_count() const noexcept { return txs.size() + filler_count; }

  Btc fees() const noexcept {
    Btc total = filler_fees;
    for (std::size_t i = 1; i < txs.size(); ++i) total += txs[i]->fee;
    return total;
  }
};

using BlockPtr = std::shared_ptr<const SimBlock>;

inline TxPtr make_coinbase(TxId id, AddressId payout, Btc reward, Seconds at,
                           const ChainParams& params) {
  auto tx = std::make_shared<SimTransaction>();
  tx->id = id;
  tx->outputs.push_back({payout, reward});
  tx->created_at = at;
  tx->size_bytes = params.coinbase_bytes;
  return tx;
}

inline BlockPtr make_genesis(const ChainParams& params = {}) {
  auto b = std::make_shared<SimBlock>();
  b->id = kGenesisId;
  b->txs.push_back(make_coinbase(0, 0, 0.0, 0.0, params));
  b->size_bytes = params.header_bytes + params.coinbase_bytes;
  return b;
}

/// The non-coinbase content of a block about to be mined.
struct BlockTemplate {
  std::vector<TxPtr> txs;
  std::uint32_t filler_count = 0;
  std::uint64_t size_bytes = 0;
  Btc fees = 0.0;

  bool empty() const noexcept { return txs.empty() && filler_count == 0; }
};

/// Builds a block extending `parent` from a template. The coinbase id is
/// derived from the block id so it is unique within a run.
inline BlockPtr make_block(const SimBlock& parent, BlockId id, MinerId miner,
                           const BlockTemplate& tmpl, Seconds found_at,
                           const ChainParams& params, AddressId payout = 0) {
  auto b = std::make_shared<SimBlock>();
  b->id = id;
  b->parent = parent.id;
  b->height = parent.height + 1;
  b->miner = miner;
  b->found_at = found_at;
  b->txs.reserve(tmpl.txs.size() + 1);
  b->txs.push_back(make_coinbase((id << 1) | 1ULL << 63, payout, params.block_reward + tmpl.fees,
                                 found_at, params));
  for (const auto& tx : tmpl.txs) b->txs.push_back(tx);
  b->filler_count = tmpl.filler_count;
  b->filler_fees = tmpl.filler_count * params.fee_per_tx;
  b->cumulative_filler = parent.cumulative_filler + tmpl.filler_count;
  std::uint64_t size = params.header_bytes + params.coinbase_bytes;
  for (const auto& tx : tmpl.txs) size += tx->size_bytes;
  size += static_cast<std::uint64_t>(tmpl.filler_count) * params.tx_bytes;
  b->size_bytes = size;
  b->prev_explicit = parent.has_explicit() ? parent.id : parent.prev_explicit;
  if (size > params.max_block_bytes) throw StructuralError("block exceeds size limit");
  return b;
}

/// Outcome of ChainView::insert_block.
struct TipChange {
  bool duplicate = false;
  bool buffered = false;  // parent unknown; held until it arrives
  BlockId missing_parent = kNoBlock;
  BlockId old_tip = kNoBlock;
  BlockId new_tip = kNoBlock;
  std::uint32_t reorg_depth = 0;   // blocks rolled back from old_tip to the fork point
  std::vector<BlockPtr> connected;  // the block and any pending descendants now attached

  bool tip_changed() const noexcept { return old_tip != new_tip; }
};

/// One node's view of the block tree under longest-chain, first-seen fork choice.
class ChainView {
 public:
  explicit ChainView(BlockPtr genesis, Seconds seen_at = 0.0) {
    auto& e = entries_[genesis->id];
    e.block = std::move(genesis);
    e.first_seen = seen_at;
    best_ = &e;
    tips_.insert(e.block->id);
  }

  ChainView(const ChainView&) = delete;
  ChainView& operator=(const ChainView&) = delete;
  ChainView(ChainView&&) = default;
  ChainView& operator=(ChainView&&) = default;

  TipChange insert_block(const BlockPtr& block, Seconds now) {
    TipChange report;
    report.old_tip = best_->block->id;
    report.new_tip = report.old_tip;
    if (entries_.count(block->id) || pending_ids_.count(block->id)) {
      report.duplicate = true;
      return report;
    }
    auto parent_it = entries_.find(block->parent);
    if (block->is_genesis()) throw StructuralError("second genesis block");
    if (parent_it == entries_.end()) {
      pending_[block->parent].push_back(block);
      pending_ids_.insert(block->id);
      report.buffered = true;
      report.missing_parent = block->parent;
      return report;
    }
    const Entry* old_best = best_;
    std::vector<BlockPtr> frontier{block};
    while (!frontier.empty()) {
      BlockPtr b = std::move(frontier.back());
      frontier.pop_back();
      connect(b, now);
      report.connected.push_back(b);
      auto pit = pending_.find(b->id);
      if (pit != pending_.end()) {
        for (auto& child : pit->second) {
          pending_ids_.erase(child->id);
          frontier.push_back(std::move(child));
        }
        pending_.erase(pit);
      }
    }
    report.new_tip = best_->block->id;
    if (best_ != old_best) {
      const Entry* fork = fork_entry(old_best, best_);
      report.reorg_depth = old_best->block->height - fork->block->height;
    }
    return report;
  }

  bool contains(BlockId id) const { return entries_.count(id) != 0; }
  bool knows(BlockId id) const { return contains(id) || pending_ids_.count(id) != 0; }
  bool is_pending(BlockId id) const { return pending_ids_.count(id) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }

  BlockPtr get(BlockId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : it->second.block;
  }

  const BlockPtr& best() const noexcept { return best_->block; }
  BlockId best_tip() const noexcept { return best_->block->id; }
  std::uint32_t best_height() const noexcept { return best_->block->height; }
  const std::unordered_set<BlockId>& tips() const noexcept { return tips_; }

  Seconds first_seen(BlockId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? kNever : it->second.first_seen;
  }

  /// Ancestor of `id` at the given height (O(log n) via skip links).
  BlockPtr ancestor_at(BlockId id, std::uint32_t height) const {
    const Entry* e = find(id);
    if (!e) return nullptr;
    e = ancestor_entry(e, height);
    return e ? e->block : nullptr;
  }

  bool is_ancestor(BlockId ancestor, BlockId descendant) const {
    const Entry* a = find(ancestor);
    const Entry* d = find(descendant);
    if (!a || !d) return false;
    return ancestor_entry(d, a->block->height) == a;
  }

  BlockPtr fork_point(BlockId a, BlockId b) const {
    const Entry* ea = find(a);
    const Entry* eb = find(b);
    if (!ea || !eb) return nullptr;
    return fork_entry(ea, eb)->block;
  }

  /// Blocks from genesis to `tip` inclusive.
  std::vector<BlockPtr> chain_to(BlockId tip) const {
    std::vector<BlockPtr> out;
    for (const Entry* e = find(tip); e; e = e->parent) out.push_back(e->block);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::vector<BlockPtr> main_chain() const { return chain_to(best_tip()); }

  /// True if a block on the chain ending at `tip` carries transaction `tx`.
  bool on_chain(TxId tx, BlockId tip) const {
    auto it = tx_blocks_.find(tx);
    if (it == tx_blocks_.end()) return false;
    for (BlockId b : it->second)
      if (is_ancestor(b, tip)) return true;
    return false;
  }

  /// Block on the chain ending at `tip` that carries `tx`, if any.
  BlockPtr block_with(TxId tx, BlockId tip) const {
    auto it = tx_blocks_.find(tx);
    if (it == tx_blocks_.end()) return nullptr;
    for (BlockId b : it->second)
      if (is_ancestor(b, tip)) return get(b);
    return nullptr;
  }

  /// True if some transaction other than `except` spends `in` on the chain ending at `tip`.
  bool input_spent(const TxInput& in, BlockId tip, TxId except) const {
    auto it = spenders_.find(input_key(in));
    if (it == spenders_.end()) return false;
    for (const auto& [tx, b] : it->second)
      if (tx != except && is_ancestor(b, tip)) return true;
    return false;
  }

  /// A transaction may extend `tip` if it is not already there and none of
  /// its inputs is consumed there.
  bool can_include(const SimTransaction& tx, BlockId tip) const {
    if (on_chain(tx.id, tip)) return false;
    for (const auto& in : tx.inputs)
      if (input_spent(in, tip, tx.id)) return false;
    return true;
  }

  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    for (const auto& [id, e] : entries_) fn(e.block);
  }

 private:
  struct Entry {
    BlockPtr block;
    Seconds first_seen = 0.0;
    const Entry* parent = nullptr;
    const Entry* skip = nullptr;
  };

  static std::uint32_t invert_lowest_one(std::uint32_t n) { return n & (n - 1); }
  static std::uint32_t skip_height(std::uint32_t h) {
    if (h < 2) return 0;
    return (h & 1) ? invert_lowest_one(invert_lowest_one(h - 1)) + 1 : invert_lowest_one(h);
  }

  const Entry* find(BlockId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  static const Entry* ancestor_entry(const Entry* e, std::uint32_t height) {
    if (!e || height > e->block->height) return nullptr;
    const auto target = static_cast<std::int64_t>(height);
    while (e->block->height > height) {
      const std::uint32_t h = e->block->height;
      const auto hs = static_cast<std::int64_t>(skip_height(h));
      const auto hs_prev = static_cast<std::int64_t>(skip_height(h - 1));
      if (e->skip && (hs == target || (hs > target && !(hs_prev < hs - 2 && hs_prev >= target)))) {
        e = e->skip;
      } else {
        e = e->parent;
      }
    }
    return e;
  }

  static const Entry* fork_entry(const Entry* a, const Entry* b) {
    if (a->block->height > b->block->height) a = ancestor_entry(a, b->block->height);
    if (b->block->height > a->block->height) b = ancestor_entry(b, a->block->height);
    while (a != b) {
      a = a->parent;
      b = b->parent;
    }
    return a;
  }

  static bool better(const Entry& a, const Entry& b) {
    if (a.block->height != b.block->height) return a.block->height > b.block->height;
    if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
    return a.block->id < b.block->id;
  }

  void connect(const BlockPtr& b, Seconds now) {
    const Entry* parent = find(b->parent);
    if (b->height != parent->block->height + 1)
      throw StructuralError("height mismatch with parent");
    for (std::size_t i = 1; i < b->txs.size(); ++i) {
      const auto& tx = *b->txs[i];
      if (!can_include(tx, parent->block->id))
        throw StructuralError("transaction conflicts with parent chain");
    }
    auto& e = entries_[b->id];
    e.block = b;
    e.first_seen = now;
    e.parent = parent;
    e.skip = ancestor_entry(parent, skip_height(b->height));
    tips_.erase(b->parent);
    tips_.insert(b->id);
    for (std::size_t i = 1; i < b->txs.size(); ++i) {
      const auto& tx = *b->txs[i];
      tx_blocks_[tx.id].push_back(b->id);
      for (const auto& in : tx.inputs) spenders_[input_key(in)].emplace_back(tx.id, b->id);
    }
    if (better(e, *best_)) best_ = &e;
  }

  std::unordered_map<BlockId, Entry> entries_;
  std::unordered_map<BlockId, std::vector<BlockPtr>> pending_;
  std::unordered_set<BlockId> pending_ids_;
  std::unordered_set<BlockId> tips_;
  const Entry* best_ = nullptr;
  std::unordered_map<TxId, std::vector<BlockId>> tx_blocks_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<TxId, BlockId>>> spenders_;
};

/// What a miner is willing to put in a block.
struct TemplatePolicy {
  enum class Kind { full, empty, censoring };
  Kind kind = Kind::full;
  std::unordered_set<AddressId> blacklist;
  bool exclude_flagged = true;          // censoring also drops txs carrying the censored flag
  std::unordered_set<TxId> exclude;     // strategy-specific exclusions (e.g. a conflicting payment)
  bool include_background = true;       // background transactions fill remaining space

  static TemplatePolicy full() { return {}; }
  static TemplatePolicy empty() {
    TemplatePolicy p;
    p.kind = Kind::empty;
    return p;
  }
  static TemplatePolicy censoring(std::unordered_set<AddressId> blacklist, bool flagged = true) {
    TemplatePolicy p;
    p.kind = Kind::censoring;
    p.blacklist = std::move(blacklist);
    p.exclude_flagged = flagged;
    return p;
  }

  bool blocks(const SimTransaction& tx) const {
    if (exclude.count(tx.id)) return true;
    if (kind != Kind::censoring) return false;
    if (exclude_flagged && tx.censored) return true;
    for (AddressId a : blacklist)
      if (tx.touches(a)) return true;
    return false;
  }
};

/// Whether a transaction is a censorship target under a blacklist.
inline bool is_blacklisted(const SimTransaction& tx, const std::unordered_set<AddressId>& blacklist,
                           bool flagged = true) {
  if (flagged && tx.censored) return true;
  for (AddressId a : blacklist)
    if (tx.touches(a)) return true;
  return false;
}

/// Background transaction supply: a deterministic arrival stream shared by all
/// chains; each chain's backlog is arrivals minus what that chain already mined.
struct BackgroundLoad {
  double arrival_rate = 0.0;  // txs per second
  double initial_backlog = 0.0;

  std::uint64_t backlog(const SimBlock& parent, Seconds now) const {
    const double arrived = std::floor(initial_backlog + arrival_rate * now);
    const double left = arrived - static_cast<double>(parent.cumulative_filler);
    return left > 0.0 ? static_cast<std::uint64_t>(left) : 0;
  }
};

/// Highest-fee-first packing of mempool transactions that may extend `parent`,
/// topped up with background transactions, under the block size cap.
template <typename Mempool>
BlockTemplate assemble_template(const Mempool& mempool, const ChainView& view, BlockId parent,
                                const TemplatePolicy& policy, const ChainParams& params,
                                const BackgroundLoad& load = {}, Seconds now = 0.0) {
  BlockTemplate out;
  out.size_bytes = params.header_bytes + params.coinbase_bytes;
  if (policy.kind == TemplatePolicy::Kind::empty) return out;
  const BlockPtr base = view.get(parent);

  std::vector<TxPtr> candidates;
  for (const auto& entry : mempool) {
    const TxPtr& tx = [&]() -> const TxPtr& {
      if constexpr (requires { entry.second; })
        return entry.second;
      else
        return entry;
    }();
    if (tx->is_coinbase() || policy.blocks(*tx)) continue;
    if (base && !view.can_include(*tx, parent)) continue;
    candidates.push_back(tx);
  }
  std::sort(candidates.begin(), candidates.end(), [](const TxPtr& a, const TxPtr& b) {
    if (a->fee != b->fee) return a->fee > b->fee;
    return a->id < b->id;
  });
  std::unordered_set<std::uint64_t> spent_here;
  for (const auto& tx : candidates) {
    if (out.size_bytes + tx->size_bytes > params.max_block_bytes) continue;
    bool conflict = false;
    for (const auto& in : tx->inputs) conflict = conflict || spent_here.count(input_key(in));
    if (conflict) continue;
    for (const auto& in : tx->inputs) spent_here.insert(input_key(in));
    out.txs.push_back(tx);
    out.size_bytes += tx->size_bytes;
    out.fees += tx->fee;
  }
  if (policy.include_background && base && params.tx_bytes > 0) {
    const std::uint64_t room = (params.max_block_bytes - out.size_bytes) / params.tx_bytes;
    const std::uint64_t n = std::min<std::uint64_t>(room, load.backlog(*base, now));
    out.filler_count = static_cast<std::uint32_t>(n);
    out.size_bytes += n * params.tx_bytes;
    out.fees += static_cast<double>(n) * params.fee_per_tx;
  }
  return out;
}

struct RewardLedger {
  Btc block_reward = 25.0;
  std::map<MinerId, Btc> balances;

  Btc total() const noexcept {
    Btc t = 0.0;
    for (const auto& [m, b] : balances) t += b;
    return t;
  }
};

struct MinerSettlement {
  Btc revenue = 0.0;
  std::uint32_t main_blocks = 0;
  std::uint32_t orphaned = 0;
  std::uint32_t empty_main = 0;
  Btc fees = 0.0;
};

struct Settlement {
  std::map<MinerId, MinerSettlement> miners;
  std::uint32_t main_chain_blocks = 0;  // excluding genesis
  std::uint32_t orphans = 0;
  Btc total_fees = 0.0;
  Btc total_revenue = 0.0;
};

/// Credits block reward plus fees for every main-chain block to its miner.
/// Blocks off the main chain credit nothing and are tallied as orphans.
inline Settlement settle_rewards(const ChainView& view, RewardLedger& ledger) {
  Settlement s;
  std::unordered_set<BlockId> main;
  for (BlockPtr b = view.best(); b && !b->is_genesis(); b = view.get(b->parent)) {
    main.insert(b->id);
    const Btc fees = b->fees();
    auto& m = s.miners[b->miner];
    m.revenue += ledger.block_reward + fees;
    m.fees += fees;
    ++m.main_blocks;
    if (b->is_empty()) ++m.empty_main;
    ledger.balances[b->miner] += ledger.block_reward + fees;
    s.total_fees += fees;
    s.total_revenue += ledger.block_reward + fees;
    ++s.main_chain_blocks;
  }
  view.for_each_block([&](const BlockPtr& b) {
    if (b->is_genesis() || main.count(b->id)) return;
    ++s.miners[b->miner].orphaned;
    ++s.orphans;
  });
  return s;
}

}  // namespace gfwsim
