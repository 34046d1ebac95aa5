// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gfwsim/chain.hpp"
#include "gfwsim/simulator.hpp"

namespace gfwsim {

/// Probability that a feather-forking miner with hash share `alpha` orphans a
/// block carrying a blacklisted transaction, given it abandons the fork once
/// the tainted chain leads by more than `give_up_depth` blocks and ties go to
/// the tainted chain. The fork starts one block behind; it succeeds once it
/// is one block ahead.
inline double feather_orphan_probability(double alpha, std::uint32_t give_up_depth) {
  if (alpha <= 0.0) return 0.0;
  if (alpha >= 1.0) return 1.0;
  if (give_up_depth == 0) return 0.0;
  // Random walk on (tainted height - fork height) starting at 1, absorbing at
  // -1 (orphaned) and give_up_depth + 1 (abandoned). Shift by one.
  const double n = static_cast<double>(give_up_depth) + 2.0;
  const double j = 2.0;
  const double r = alpha / (1.0 - alpha);
  if (std::abs(r - 1.0) < 1e-12) return 1.0 - j / n;
  // P(reach 0 before n from j) with down-step probability alpha.
  return (std::pow(r, j) - std::pow(r, n)) / (1.0 - std::pow(r, n));
}

// ---------------------------------------------------------------------------

struct RationalCensorship {
  double forker_share = 0.0;
  std::uint32_t give_up_depth = 1;
  std::unordered_set<AddressId> blacklist;
};

class HonestStrategy : public Strategy {
 public:
  HonestStrategy() = default;
  explicit HonestStrategy(std::optional<RationalCensorship> rational) : rational_(std::move(rational)) {}

  std::string_view kind() const override { return "honest"; }

  void on_start(MinerContext& ctx) override { ctx.mine_on(ctx.view().best(), policy(ctx)); }
  void on_block(MinerContext& ctx, const TipChange& change) override {
    if (change.tip_changed() || ctx.target_parent()->id != ctx.view().best_tip())
      ctx.mine_on(ctx.view().best(), policy(ctx));
  }
  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    ctx.publish(block);
    ctx.mine_on(ctx.view().best(), policy(ctx));
  }

  /// Rational miners skip blacklisted transactions when the expected loss from
  /// being orphaned outweighs the extra fees.
  TemplatePolicy policy(const MinerContext& ctx) const {
    if (!rational_ || rational_->forker_share <= 0.0) return TemplatePolicy::full();
    const double p = feather_orphan_probability(rational_->forker_share, rational_->give_up_depth);
    const double at_risk = ctx.chain().block_reward + 0.25;
    const double gain = ctx.chain().fee_per_tx;  // per blacklisted transaction
    if (p * at_risk <= gain) return TemplatePolicy::full();
    return TemplatePolicy::censoring(rational_->blacklist);
  }

 private:
  std::optional<RationalCensorship> rational_;
};

/// Mines a coinbase-only block on a fresh header while its body is still
/// downloading and being validated.
class EmptyBlockStrategy : public Strategy {
 public:
  std::string_view kind() const override { return "empty_block"; }

  void on_header(MinerContext& ctx, const BlockPtr& header) override {
    if (header->height > ctx.target_parent()->height) {
      ctx.mine_on(header, TemplatePolicy::empty());
      empty_ = true;
    }
  }
  void on_block(MinerContext& ctx, const TipChange&) override {
    const BlockPtr& best = ctx.view().best();
    const BlockPtr& target = ctx.target_parent();
    if (empty_ && !ctx.view().contains(target->id) && best->height < target->height) return;
    if (empty_ || target->id != best->id) {
      ctx.mine_on(best);
      empty_ = false;
    }
  }
  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    ctx.publish(block);
    if (ctx.view().contains(block->id)) {
      ctx.mine_on(ctx.view().best());
      empty_ = false;
    } else {
      ctx.mine_on(block, TemplatePolicy::empty());  // parent body still pending
      empty_ = true;
    }
  }

 private:
  bool empty_ = false;
};

/// Hidden-chain state of a withholding miner.
struct PrivateChainState {
  std::vector<BlockPtr> hidden;
  BlockId branch_point = kGenesisId;
  std::int64_t lead = 0;
};

/// Selfish mining: keep found blocks secret and release them to win races.
/// Race outcomes depend on which block honest nodes see first.
class SelfishStrategy : public Strategy {
 public:
  std::string_view kind() const override { return "selfish"; }

  void on_start(MinerContext& ctx) override {
    tip_ = ctx.view().best();
    public_height_ = tip_->height;
    ctx.mine_on(tip_);
  }

  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    ctx.keep_private(block);
    if (state_.hidden.empty()) state_.branch_point = block->parent;
    state_.hidden.push_back(block);
    tip_ = block;
    if (racing_) {
      // Found on our branch during a tie: publishing wins outright.
      publish_upto(ctx, tip_->height);
      racing_ = false;
    }
    update_lead();
    ctx.mine_on(tip_);
  }

  void on_block(MinerContext& ctx, const TipChange& change) override {
    bool public_advance = false;
    for (const auto& b : change.connected) {
      if (ctx.own(*b)) continue;
      if (b->height > public_height_) {
        public_height_ = b->height;
        public_advance = true;
      }
    }
    if (!public_advance) return;
    update_lead();
    if (state_.lead < 0) {
      state_.hidden.clear();
      racing_ = false;
      tip_ = ctx.view().best();
      ctx.mine_on(tip_);
    } else if (state_.lead == 0) {
      if (!state_.hidden.empty()) publish_upto(ctx, tip_->height);
      racing_ = true;
    } else if (state_.lead == 1) {
      publish_upto(ctx, tip_->height);
      racing_ = false;
    } else {
      publish_upto(ctx, public_height_);
    }
    update_lead();
  }

  const PrivateChainState& state() const noexcept { return state_; }

 private:
  void publish_upto(MinerContext& ctx, std::uint32_t height) {
    std::size_t n = 0;
    while (n < state_.hidden.size() && state_.hidden[n]->height <= height) {
      ctx.publish(state_.hidden[n]);
      ++n;
    }
    if (n > 0) {
      public_height_ = std::max(public_height_, state_.hidden[n - 1]->height);
      state_.branch_point = state_.hidden[n - 1]->id;
      state_.hidden.erase(state_.hidden.begin(), state_.hidden.begin() + static_cast<std::ptrdiff_t>(n));
    }
  }
  void update_lead() {
    state_.lead = static_cast<std::int64_t>(tip_->height) - static_cast<std::int64_t>(public_height_);
  }

  PrivateChainState state_;
  BlockPtr tip_;
  std::uint32_t public_height_ = 0;
  bool racing_ = false;
};

/// Punitive and feather forking: refuse to extend chains carrying blacklisted
/// transactions. Feather forking gives up once the tainted chain is more than
/// `give_up_depth` blocks ahead; punitive forking never does.
class ForkCensorStrategy : public Strategy {
 public:
  ForkCensorStrategy(std::unordered_set<AddressId> blacklist, std::optional<std::uint32_t> give_up_depth)
      : blacklist_(std::move(blacklist)), give_up_(give_up_depth) {}

  std::string_view kind() const override { return give_up_ ? "feather_fork" : "punitive_fork"; }

  void on_start(MinerContext& ctx) override {
    clean_ = ctx.view().best();
    dirty_[clean_->id] = false;
    ctx.mine_on(clean_, policy());
  }

  void on_block(MinerContext& ctx, const TipChange& change) override {
    for (const auto& b : change.connected) {
      auto it = dirty_.find(b->parent);
      const bool d = (it != dirty_.end() && it->second) || carries_blacklisted(*b);
      dirty_[b->id] = d;
      if (d) {
        if (b->miner != ctx.miner()) ctx.add_metric("fork.tainted_seen", 1);
      } else if (b->height > clean_->height) {
        clean_ = b;
      }
    }
    const BlockPtr& best = ctx.view().best();
    if (give_up_ && dirty_[best->id] && best->height > clean_->height + *give_up_) {
      // Abandon the fork: the tainted chain becomes acceptable from here on.
      dirty_[best->id] = false;
      clean_ = best;
      ctx.add_metric("fork.abandoned", 1);
    }
    if (ctx.target_parent()->id != clean_->id) ctx.mine_on(clean_, policy());
  }

  void on_found(MinerContext& ctx, const BlockPtr& block) override { ctx.publish(block); }

  bool carries_blacklisted(const SimBlock& b) const {
    for (std::size_t i = 1; i < b.txs.size(); ++i)
      if (is_blacklisted(*b.txs[i], blacklist_)) return true;
    return false;
  }

 private:
  TemplatePolicy policy() const { return TemplatePolicy::censoring(blacklist_); }

  std::unordered_set<AddressId> blacklist_;
  std::optional<std::uint32_t> give_up_;
  std::unordered_map<BlockId, bool> dirty_;
  BlockPtr clean_;
};

/// Pool infiltrator. Block withholding (BWH) submits only partial proofs and
/// throws full blocks away. Fork-after-withholding (FAW) holds a found block
/// and submits it through the pool the moment a competing external block
/// shows up, forcing a fork.
class WithholdStrategy : public Strategy {
 public:
  explicit WithholdStrategy(bool faw) : faw_(faw) {}

  std::string_view kind() const override { return faw_ ? "withhold_faw" : "withhold_bwh"; }

  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    ctx.add_metric("withhold.found", 1);
    if (faw_) held_ = block;
  }

  void on_block(MinerContext& ctx, const TipChange& change) override {
    if (held_) {
      for (const auto& b : change.connected) {
        if (b->height < held_->height) continue;
        const bool external = ctx.spec_of(b->miner).pool != ctx.spec().pool &&
                              ctx.spec_of(b->miner).group != ctx.spec().group;
        if (external && b->parent == held_->parent && b->height == held_->height) {
          ctx.publish(held_);
          ctx.add_metric("withhold.forks", 1);
        }
        held_.reset();
        break;
      }
    }
    Strategy::on_block(ctx, change);
  }

 private:
  bool faw_;
  BlockPtr held_;
};

/// Majority-style disruption: mine empty blocks on the best tip, which ties
/// resolve towards since the attacker saw its own blocks first.
class GoldfingerStrategy : public Strategy {
 public:
  std::string_view kind() const override { return "goldfinger"; }
  void on_start(MinerContext& ctx) override { ctx.mine_on_best(TemplatePolicy::empty()); }
  void on_block(MinerContext& ctx, const TipChange& change) override {
    if (change.tip_changed() || ctx.target_parent()->id != ctx.view().best_tip())
      ctx.mine_on_best(TemplatePolicy::empty());
  }
  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    ctx.publish(block);
    ctx.mine_on_best(TemplatePolicy::empty());
  }
};

// ---------------------------------------------------------------------------
// Double spending.

enum class DoubleSpendVariant { race, finney, brute };

inline const char* to_string(DoubleSpendVariant v) {
  switch (v) {
    case DoubleSpendVariant::race: return "race";
    case DoubleSpendVariant::finney: return "finney";
    case DoubleSpendVariant::brute: return "brute";
  }
  return "?";
}

struct DoubleSpendParams {
  DoubleSpendVariant variant = DoubleSpendVariant::brute;
  std::string merchant;
  std::uint32_t give_up_deficit = 20;
  Seconds start_at = 0.0;
  Btc amount = 1.0;
};

/// Checks the merchant's confirmation depth against the variant.
inline void validate_double_spend(const DoubleSpendParams& p, std::uint32_t merchant_confirmations) {
  if (p.variant == DoubleSpendVariant::race && merchant_confirmations != 0)
    throw ValidationError("strategy.confirmations", "race attack targets merchants accepting at 0 confirmations");
  if ((p.variant == DoubleSpendVariant::finney || p.variant == DoubleSpendVariant::brute) &&
      merchant_confirmations < 1)
    throw ValidationError("strategy.confirmations", std::string(to_string(p.variant)) +
                                                        " attack needs a merchant waiting for >= 1 confirmation");
  if (p.give_up_deficit < 1) throw ValidationError("strategy.give_up_deficit", "must be >= 1");
}

namespace detail {

// Synthetic address space for attack transactions.
inline AddressId attacker_address(MinerId m) { return (1ULL << 48) + m; }

}  // namespace detail

class DoubleSpendStrategy : public Strategy {
 public:
  explicit DoubleSpendStrategy(DoubleSpendParams p) : p_(std::move(p)) {}

  std::string_view kind() const override {
    switch (p_.variant) {
      case DoubleSpendVariant::race: return "double_spend_race";
      case DoubleSpendVariant::finney: return "double_spend_finney";
      case DoubleSpendVariant::brute: return "double_spend_brute";
    }
    return "double_spend";
  }

  void on_start(MinerContext& ctx) override {
    public_tip_ = ctx.view().best();
    ctx.mine_on(public_tip_);
    ctx.set_timer(p_.start_at, 0);
  }

  void on_timer(MinerContext& ctx, int) override {
    const auto& merchant = ctx.merchant(p_.merchant);
    const AddressId mine = detail::attacker_address(ctx.miner());
    const TxInput coin{mine, 1};
    t1_ = ctx.make_tx({coin}, {{merchant.address, p_.amount}}, ctx.chain().fee_per_tx);
    t2_ = ctx.make_tx({coin}, {{mine, p_.amount}}, ctx.chain().fee_per_tx);
    ctx.watch_payment(p_.merchant, t1_->id, t2_->id);
    base_ = public_tip_;
    if (p_.variant == DoubleSpendVariant::finney) {
      phase_ = Phase::premine;
    } else {
      phase_ = Phase::attack;
      ctx.broadcast_tx(t1_, ctx.node());
    }
    mine_private(ctx);
  }

  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    if (phase_ == Phase::idle || phase_ == Phase::done) {
      ctx.publish(block);
      public_tip_ = block;
      ctx.mine_on(ctx.view().best());
      return;
    }
    ctx.keep_private(block);
    hidden_.push_back(block);
    if (phase_ == Phase::premine) {
      // The pre-mined block carrying the conflicting spend is ready; pay now.
      phase_ = Phase::attack;
      ctx.broadcast_tx(t1_, ctx.node());
    }
    if (published_) {
      ctx.publish(block);
      hidden_.clear();
    } else {
      maybe_publish(ctx);
    }
    mine_private(ctx);
  }

  void on_block(MinerContext& ctx, const TipChange& change) override {
    bool advanced = false;
    for (const auto& b : change.connected) {
      if (ctx.own(*b)) continue;
      if (b->height > public_tip_->height) {
        public_tip_ = b;
        advanced = true;
      }
    }
    if (!advanced) return;
    switch (phase_) {
      case Phase::idle:
      case Phase::done:
        ctx.mine_on(ctx.view().best());
        return;
      case Phase::premine:
        base_ = public_tip_;
        mine_private(ctx);
        return;
      case Phase::attack:
        break;
    }
    if (deficit() > static_cast<std::int64_t>(p_.give_up_deficit)) {
      phase_ = Phase::done;
      ctx.add_metric("double_spend.gave_up", 1);
      ctx.request_stop();
      return;
    }
    maybe_publish(ctx);
  }

 private:
  enum class Phase { idle, premine, attack, done };

  [[nodiscard]] std::uint32_t private_height() const {
    return hidden_.empty() ? (published_ ? published_tip_->height : base_->height) : hidden_.back()->height;
  }
  std::int64_t deficit() const {
    return static_cast<std::int64_t>(public_tip_->height) - static_cast<std::int64_t>(private_height());
  }

  void mine_private(MinerContext& ctx) {
    BlockPtr parent = hidden_.empty() ? (published_ ? published_tip_ : base_) : hidden_.back();
    TemplatePolicy policy = TemplatePolicy::full();
    policy.exclude.insert(t1_->id);
    ctx.mine_on(parent, std::move(policy), {t2_});
  }

  /// Whether the attacker, from public blocks it has seen, knows the merchant
  /// considers the payment confirmed.
  bool merchant_satisfied(MinerContext& ctx) const {
    const std::uint32_t n = ctx.merchant(p_.merchant).confirmations;
    if (n == 0) return true;
    const BlockPtr b = ctx.view().block_with(t1_->id, public_tip_->id);
    return b && public_tip_->height - b->height + 1 >= n;
  }

  void maybe_publish(MinerContext& ctx) {
    if (published_ || hidden_.empty() || !merchant_satisfied(ctx)) return;
    const std::uint32_t priv = hidden_.back()->height;
    const bool go = p_.variant == DoubleSpendVariant::race ? priv >= public_tip_->height
                                                           : priv > public_tip_->height;
    if (!go) return;
    for (const auto& b : hidden_) ctx.publish(b);
    published_tip_ = hidden_.back();
    hidden_.clear();
    if (p_.variant != DoubleSpendVariant::race) {
      published_ = true;
      phase_ = Phase::attack;
    } else {
      // Keep racing: later finds go out immediately.
      published_ = true;
    }
    ctx.add_metric("double_spend.published", 1);
  }

  DoubleSpendParams p_;
  Phase phase_ = Phase::idle;
  TxPtr t1_, t2_;
  BlockPtr base_, public_tip_, published_tip_;
  std::vector<BlockPtr> hidden_;
  bool published_ = false;
};

// ---------------------------------------------------------------------------

struct BalanceParams {
  std::string merchant;
  Seconds start_at = 1.0;
  Seconds shift_time = 0.0;
};

/// Balance attack: while the network is split into two groups, pay the
/// merchant in G1 and the attacker in G2, then mine for G2 so that its chain
/// wins when the partition heals.
class BalanceAttackStrategy : public Strategy {
 public:
  explicit BalanceAttackStrategy(BalanceParams p) : p_(std::move(p)) {}

  std::string_view kind() const override { return "balance_attack"; }

  void on_start(MinerContext& ctx) override {
    const ControlAction* part = nullptr;
    for (const auto& a : ctx.config().control)
      if (a.kind == ControlAction::Kind::partition) {
        part = &a;
        break;
      }
    if (!part) throw ValidationError("strategy.balance_attack", "needs a partition control action");
    for (NodeId n : part->group_a) side_of_node_[n] = 0;
    for (NodeId n : part->group_b) side_of_node_[n] = 1;
    partition_at_ = part->at;
    for (const auto& a : ctx.config().control)
      if (a.kind == ControlAction::Kind::heal && a.at >= partition_at_) heal_at_ = std::min(heal_at_, a.at);
    tips_[0] = tips_[1] = ctx.view().best();
    side_of_block_[tips_[0]->id] = -1;
    ctx.mine_on(tips_[0]);
    ctx.set_timer(std::max(p_.start_at, partition_at_), 0);
    ctx.set_timer(p_.shift_time, 1);
  }

  void on_timer(MinerContext& ctx, int tag) override {
    if (tag == 1) {
      side_ = 1;
      retarget(ctx);
      return;
    }
    const auto& merchant = ctx.merchant(p_.merchant);
    const AddressId mine = detail::attacker_address(ctx.miner());
    const TxInput coin{mine, 1};
    t1_ = ctx.make_tx({coin}, {{merchant.address, 1.0}}, ctx.chain().fee_per_tx);
    t2_ = ctx.make_tx({coin}, {{mine, 1.0}}, ctx.chain().fee_per_tx);
    ctx.watch_payment(p_.merchant, t1_->id, t2_->id);
    ctx.broadcast_tx(t1_, merchant.node);
    NodeId g2 = kNoNode;
    for (const auto& [n, s] : side_of_node_)
      if (s == 1 && (g2 == kNoNode || n < g2)) g2 = n;
    if (g2 != kNoNode) ctx.broadcast_tx(t2_, g2);
    armed_ = true;
    retarget(ctx);
  }

  void on_block(MinerContext& ctx, const TipChange& change) override {
    for (const auto& b : change.connected) {
      int side;
      if (ctx.own(*b)) {
        side = own_side_[b->id];
      } else {
        auto it = side_of_node_.find(ctx.node_of(b->miner));
        side = it != side_of_node_.end() ? it->second : side_of(b->parent);
      }
      side_of_block_[b->id] = side;
      for (int s = 0; s < 2; ++s)
        if ((side == s || side == -1) && b->height > tips_[s]->height) tips_[s] = b;
    }
    retarget(ctx);
  }

  void on_found(MinerContext& ctx, const BlockPtr& block) override {
    const int s = healed(ctx) ? -1 : side_;
    own_side_[block->id] = s;
    if (s < 0) {
      ctx.publish(block);
    } else {
      auto groups = side_of_node_;
      ctx.publish(block, [groups, s](NodeId peer) {
        auto it = groups.find(peer);
        return it != groups.end() && it->second == s;
      });
    }
    retarget(ctx);
  }

 private:
  int side_of(BlockId id) const {
    auto it = side_of_block_.find(id);
    return it == side_of_block_.end() ? -1 : it->second;
  }
  bool healed(const MinerContext& ctx) const { return ctx.now() >= heal_at_; }

  void retarget(MinerContext& ctx) {
    BlockPtr parent;
    bool for_g2 = side_ == 1;
    if (healed(ctx)) {
      parent = ctx.view().best();
      if (tips_[1]->height >= parent->height) parent = tips_[1];
      for_g2 = true;
    } else {
      parent = tips_[side_];
    }
    TemplatePolicy policy = TemplatePolicy::full();
    std::vector<TxPtr> forced;
    if (armed_) {
      policy.exclude.insert(for_g2 ? t1_->id : t2_->id);
      if (for_g2) forced.push_back(t2_);
    }
    ctx.mine_on(std::move(parent), std::move(policy), std::move(forced));
  }

  BalanceParams p_;
  std::unordered_map<NodeId, int> side_of_node_;
  std::unordered_map<BlockId, int> side_of_block_;
  std::unordered_map<BlockId, int> own_side_;
  BlockPtr tips_[2];
  int side_ = 0;
  bool armed_ = false;
  Seconds partition_at_ = 0.0;
  Seconds heal_at_ = kNever;
  TxPtr t1_, t2_;
};

}  // namespace gfwsim
