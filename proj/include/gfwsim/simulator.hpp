// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gfwsim/chain.hpp"
#include "gfwsim/event_queue.hpp"
#include "gfwsim/mining.hpp"
#include "gfwsim/network.hpp"
#include "gfwsim/rng.hpp"
#include "gfwsim/types.hpp"

namespace gfwsim {

struct RelayConfig {
  enum class Mode { full, compact };
  Mode mode = Mode::full;
  std::optional<Seconds> switch_to_compact_at;
  std::uint32_t header_bytes = 100;
  std::uint32_t compact_bytes = 15'000;
  std::uint32_t tx_bytes = 500;
  double validation_seconds_per_byte = 0.2 / 1e6;
};

/// Stream of individually tracked transactions (censorship targets, payments
/// to observe); background load is modelled separately by BackgroundLoad.
struct TxStreamConfig {
  double rate = 0.0;  // per second
  double censored_fraction = 0.0;
  std::vector<NodeId> origins;  // empty: any non-passive node
  Seconds start_at = 0.0;
  Seconds stop_at = kNever;
  Btc fee = 0.0001;
  std::uint32_t size_bytes = 400;
};

struct MerchantSpec {
  std::string name;
  NodeId node = kNoNode;
  std::uint32_t confirmations = 0;
  AddressId address = 0;
};

struct Horizon {
  std::optional<std::uint32_t> blocks;
  std::optional<Seconds> seconds;
};

struct NodeRole {
  bool relay_foreign = true;  // forward blocks and transactions originating elsewhere
  bool passive = false;       // observer: records traffic, never relays or mines
};

class Strategy;
class MinerContext;

struct MinerBinding {
  MinerSpec spec;
  NodeId node = kNoNode;
  std::unique_ptr<Strategy> strategy;
};

struct SimConfig {
  std::uint64_t seed = 1;
  ChainParams chain;
  BackgroundLoad load;
  Seconds mean_interval = 600.0;
  RelayConfig relay;
  Topology topology;
  std::vector<NodeRole> roles;  // indexed by node; missing entries use defaults
  std::vector<MinerBinding> miners;
  std::vector<PoolSpec> pools;
  std::uint32_t ppows_per_block = 100;
  std::vector<ControlAction> control;
  TxStreamConfig tx_stream;
  std::unordered_set<AddressId> blacklist;
  std::vector<MerchantSpec> merchants;
  std::vector<NodeId> observers;
  Horizon horizon;
  bool stop_on_payment_decision = false;
  std::uint64_t max_events = 2'000'000'000ULL;
};

struct MinerRunStats {
  std::uint64_t found = 0;
  std::uint64_t published = 0;
  std::uint64_t empty_found = 0;
  Btc forgone_fees = 0.0;  // fees a full template would have carried when mining empty
  ShareRecord shares;
};

struct MeanStat {
  double sum = 0.0;
  std::uint64_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

struct PaymentRecord {
  std::string merchant;
  NodeId merchant_node = kNoNode;
  std::uint32_t confirmations = 0;
  TxId payment = 0;     // pays the merchant
  TxId conflicting = 0;  // spends the same input back to the attacker
  Seconds accepted_at = kNever;
  Seconds reversed_at = kNever;
  bool success = false;  // accepted and the conflicting spend is on the final main chain

  bool accepted() const noexcept { return accepted_at != kNever; }
};

struct TrackedTx {
  TxId id = 0;
  Seconds issued_at = 0.0;
  bool censored = false;
  NodeId origin = kNoNode;
};

struct FirstHear {
  TxId tx = 0;
  NodeId observer = kNoNode;
  NodeId peer = kNoNode;
  Seconds time = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  Settlement settlement;
  RewardLedger ledger;
  std::map<MinerId, Btc> payouts;  // after pool distribution
  std::vector<MinerRunStats> miners;
  std::vector<BlockPtr> main_chain;  // genesis first
  std::vector<BlockPtr> all_blocks;  // every published block, by id
  std::uint32_t published_blocks = 0;
  // Key "<size class>|<from region>-><to region>", seconds from discovery to validation.
  std::map<std::string, MeanStat> propagation;
  MeanStat full_block_payload;  // body bytes sent per transfer of a >= 800 KB block
  MeanStat full_block_size;
  std::vector<PaymentRecord> payments;
  std::vector<TrackedTx> tracked;
  std::vector<FirstHear> first_hears;
  std::map<std::string, double> strategy_metrics;
  std::uint64_t duplicate_emissions = 0;
  std::uint64_t events = 0;
  Seconds end_time = 0.0;
};

/// Snapshot handed to Strategy::on_block.
struct BlockNotice {
  const TipChange& change;
  bool foreign(const SimBlock& b, MinerId self) const { return b.miner != self; }
};

/// Miner behaviour. Hooks run inside the single-threaded event loop.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string_view kind() const = 0;
  virtual void on_start(MinerContext& ctx);
  /// A header for an unknown block arrived at the miner's node (body not yet validated).
  virtual void on_header(MinerContext&, const BlockPtr&) {}
  /// Blocks were connected to the node's view (own publications included).
  virtual void on_block(MinerContext& ctx, const TipChange& change);
  virtual void on_found(MinerContext& ctx, const BlockPtr& block);
  virtual void on_timer(MinerContext&, int) {}
  virtual void on_finish(MinerContext&) {}
};

class Simulation {
 public:
  explicit Simulation(SimConfig cfg);

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  RunResult run();

  // -- accessors used by MinerContext and tests --
  Seconds now() const noexcept { return queue_.now(); }
  const SimConfig& config() const noexcept { return cfg_; }
  const ChainView& node_view(NodeId n) const { return nodes_.at(n).view; }
  const ChainView& archive() const noexcept { return archive_; }
  bool compact_mode() const noexcept { return mode_ == RelayConfig::Mode::compact; }
  NodeId miner_node(MinerId m) const { return cfg_.miners.at(m).node; }
  const MinerSpec& miner_spec(MinerId m) const { return cfg_.miners.at(m).spec; }
  std::size_t miner_count() const noexcept { return cfg_.miners.size(); }
  const ControlPlane& control_plane() const noexcept { return control_; }

 private:
  friend class MinerContext;

  enum class EvType : std::uint8_t { find, header, body, validated, tx, control, tx_spawn, relay_switch, timer };
  struct Event {
    EvType type;
    std::uint32_t a = 0;  // receiving node / miner / action index
    std::uint32_t b = 0;  // sending node
    std::uint64_t tag = 0;
    BlockPtr block{};
    TxPtr tx{};
  };

  struct MiningTarget {
    BlockPtr parent;
    TemplatePolicy policy;
    std::vector<TxPtr> forced;
  };

  struct MinerState {
    MiningTarget target;
    std::uint64_t generation = 0;
    Seconds last_share_at = 0.0;
    RngStream rng;
    MinerRunStats stats;
  };

  struct NodeState {
    explicit NodeState(BlockPtr genesis) : view(std::move(genesis)) {}
    ChainView view;
    NodeRole role;
    std::unordered_map<TxId, TxPtr> mempool;
    std::unordered_set<TxId> tx_seen;
    std::unordered_set<BlockId> fetching;
    std::unordered_set<BlockId> own_published;
    std::unordered_set<std::uint64_t> sent;  // (block, peer) pairs already announced or known
    std::unordered_map<BlockId, std::function<bool(NodeId)>> publish_filter;
    std::vector<MinerId> miners;
    std::vector<NodeId> peers;
    bool observer = false;
    bool merchant = false;
    std::uint32_t connects_since_evict = 0;
  };

  static std::uint64_t pair_key(std::uint64_t id, NodeId peer) { return (id << 20) ^ peer; }

  void schedule_find(MinerId m);
  void handle(Event& ev);
  void on_find(MinerId m, std::uint64_t gen);
  void on_header(NodeId to, NodeId from, const BlockPtr& b);
  void on_body(NodeId to, NodeId from, const BlockPtr& b);
  void on_tx(NodeId to, NodeId from, const TxPtr& tx);
  void apply_control(std::size_t index);
  void spawn_tracked_tx();

  void process_insert(NodeId node, const BlockPtr& b, NodeId from);
  void handle_connected(NodeId node, const BlockPtr& b);
  void announce(NodeId node, const BlockPtr& b);
  void fetch_parent(NodeId node, NodeId from, BlockId parent);
  void send_tx(NodeId node, const TxPtr& tx, NodeId except);
  void check_payments(NodeId node);
  void evict_mempool(NodeState& n);
  bool link_open(NodeId from, NodeId to) const;
  void rebuild_peers();
  std::uint64_t body_payload(const SimBlock& b) const;
  Seconds validation_delay(const SimBlock& b) const;

  void publish(MinerId m, const BlockPtr& b, std::function<bool(NodeId)> filter);
  void keep_private(MinerId m, const BlockPtr& b);
  void broadcast_tx(NodeId origin, const TxPtr& tx);
  void retarget(MinerId m, MiningTarget t);
  RunResult finish();

  SimConfig cfg_;
  EventQueue<Event> queue_;
  ControlPlane control_;
  std::vector<NodeState> nodes_;
  std::vector<MinerState> miners_;
  ChainView archive_;
  BlockPtr genesis_;
  RelayConfig::Mode mode_;
  RngStream tx_rng_;
  BlockId next_block_id_ = 1;
  std::unordered_map<BlockId, Seconds> released_at_;  // first announcement by the mining node
  TxId next_tx_id_ = 1;
  bool stop_ = false;
  RunResult out_;
  std::unordered_map<TxId, std::size_t> payment_index_;
};

/// The strategy-facing surface of a running simulation for one miner.
class MinerContext {
 public:
  MinerContext(Simulation& sim, MinerId miner) : sim_(&sim), miner_(miner) {}

  Seconds now() const { return sim_->now(); }
  MinerId miner() const noexcept { return miner_; }
  const MinerSpec& spec() const { return sim_->miner_spec(miner_); }
  NodeId node() const { return sim_->miner_node(miner_); }
  const ChainView& view() const { return sim_->node_view(node()); }
  const SimConfig& config() const { return sim_->cfg_; }
  const ChainParams& chain() const { return sim_->cfg_.chain; }

  NodeId node_of(MinerId m) const { return sim_->miner_node(m); }
  const MinerSpec& spec_of(MinerId m) const { return sim_->miner_spec(m); }
  std::size_t miner_count() const { return sim_->miner_count(); }
  bool own(const SimBlock& b) const { return b.miner == miner_; }

  const BlockPtr& target_parent() const { return sim_->miners_[miner_].target.parent; }

  void mine_on(BlockPtr parent, TemplatePolicy policy = TemplatePolicy::full(),
               std::vector<TxPtr> forced = {}) {
    sim_->retarget(miner_, {std::move(parent), std::move(policy), std::move(forced)});
  }
  void mine_on_best(TemplatePolicy policy = TemplatePolicy::full()) { mine_on(view().best(), std::move(policy)); }

  void publish(const BlockPtr& b, std::function<bool(NodeId)> filter = {}) {
    sim_->publish(miner_, b, std::move(filter));
  }
  void keep_private(const BlockPtr& b) { sim_->keep_private(miner_, b); }

  TxPtr make_tx(std::vector<TxInput> inputs, std::vector<TxOutput> outputs, Btc fee,
                bool censored = false) {
    auto tx = std::make_shared<SimTransaction>();
    tx->id = sim_->next_tx_id_++;
    tx->inputs = std::move(inputs);
    tx->outputs = std::move(outputs);
    tx->fee = fee;
    tx->origin_node = node();
    tx->created_at = now();
    tx->censored = censored;
    tx->size_bytes = sim_->cfg_.chain.tx_bytes;
    return tx;
  }
  void broadcast_tx(const TxPtr& tx, NodeId origin) { sim_->broadcast_tx(origin, tx); }

  const MerchantSpec& merchant(const std::string& name) const {
    for (const auto& m : sim_->cfg_.merchants)
      if (m.name == name) return m;
    throw ValidationError("merchant", "unknown merchant '" + name + "'");
  }
  /// Starts tracking a payment at a merchant; returns the record index.
  std::size_t watch_payment(const std::string& merchant_name, TxId payment, TxId conflicting) {
    const auto& m = merchant(merchant_name);
    PaymentRecord rec;
    rec.merchant = m.name;
    rec.merchant_node = m.node;
    rec.confirmations = m.confirmations;
    rec.payment = payment;
    rec.conflicting = conflicting;
    sim_->out_.payments.push_back(rec);
    sim_->payment_index_[payment] = sim_->out_.payments.size() - 1;
    return sim_->out_.payments.size() - 1;
  }

  void set_timer(Seconds at, int tag) {
    sim_->queue_.push(std::max(at, now()), {Simulation::EvType::timer, miner_, 0, static_cast<std::uint64_t>(tag)});
  }
  void request_stop() { sim_->stop_ = true; }
  void add_metric(const std::string& key, double v) { sim_->out_.strategy_metrics[key] += v; }
  void set_metric(const std::string& key, double v) { sim_->out_.strategy_metrics[key] = v; }
  const Topology& topology() const { return sim_->cfg_.topology; }

 private:
  Simulation* sim_;
  MinerId miner_;
};

// ---------------------------------------------------------------------------

inline void Strategy::on_start(MinerContext& ctx) { ctx.mine_on_best(); }

inline void Strategy::on_block(MinerContext& ctx, const TipChange& change) {
  if (change.tip_changed() || ctx.target_parent()->id != ctx.view().best_tip()) ctx.mine_on_best();
}

inline void Strategy::on_found(MinerContext& ctx, const BlockPtr& block) {
  ctx.publish(block);
  ctx.mine_on_best();
}

inline Simulation::Simulation(SimConfig cfg)
    : cfg_(std::move(cfg)),
      control_(cfg_.topology),
      archive_(make_genesis(cfg_.chain)),
      mode_(cfg_.relay.mode),
      tx_rng_(cfg_.seed, {0x7478ULL}) {
  genesis_ = archive_.best();
  if (cfg_.mean_interval <= 0.0) throw ValidationError("mean_block_interval", "must be > 0");
  const std::size_t n = cfg_.topology.node_count();
  nodes_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes_.emplace_back(genesis_);
    if (i < cfg_.roles.size()) nodes_[i].role = cfg_.roles[i];
  }
  for (NodeId o : cfg_.observers) {
    if (o >= n) throw ValidationError("observers", "unknown node");
    nodes_[o].observer = true;
  }
  miners_.resize(cfg_.miners.size());
  for (MinerId m = 0; m < cfg_.miners.size(); ++m) {
    auto& b = cfg_.miners[m];
    if (b.spec.id != m) throw ValidationError("miners.id", "miner ids must be dense and ordered");
    if (b.node >= n) throw ValidationError("miners." + b.spec.name + ".node", "unknown node");
    if (!b.strategy) throw ValidationError("miners." + b.spec.name + ".strategy", "missing");
    nodes_[b.node].miners.push_back(m);
    miners_[m].rng = RngStream(cfg_.seed, {0x6D696E65ULL, m});
    miners_[m].target.parent = genesis_;
    miners_[m].stats.shares.miner = m;
    miners_[m].stats.shares.pool = b.spec.pool;
  }
  for (const auto& m : cfg_.merchants) {
    if (m.node >= n) throw ValidationError("merchants." + m.name + ".node", "unknown node");
    nodes_[m.node].merchant = true;
  }
  rebuild_peers();
}

inline void Simulation::rebuild_peers() {
  for (NodeId i = 0; i < nodes_.size(); ++i) nodes_[i].peers = control_.peers(i);
}

inline bool Simulation::link_open(NodeId from, NodeId to) const {
  if (control_.partitioned(from, to)) return false;
  if (const auto* e = control_.eclipse_of(to); e && e->controller != from) return false;
  if (const auto* e = control_.eclipse_of(from); e && e->controller != to) return false;
  if (!cfg_.topology.edge_index(from, to)) {
    const auto* e = control_.eclipse_of(to);
    const auto* f = control_.eclipse_of(from);
    return (e && e->controller == from) || (f && f->controller == to);
  }
  return true;
}

inline std::uint64_t Simulation::body_payload(const SimBlock& b) const {
  return compact_mode() ? cfg_.relay.compact_bytes : b.size_bytes;
}

inline Seconds Simulation::validation_delay(const SimBlock& b) const {
  // With compact relay the transactions were validated on mempool admission;
  // only the flat sketch remains to check.
  const double bytes = compact_mode() ? static_cast<double>(cfg_.relay.compact_bytes)
                                      : static_cast<double>(b.size_bytes);
  return bytes * cfg_.relay.validation_seconds_per_byte;
}

inline void Simulation::schedule_find(MinerId m) {
  auto& st = miners_[m];
  const Seconds wait = sample_next_find(cfg_.miners[m].spec, cfg_.mean_interval, st.rng);
  if (wait == kNever) return;
  queue_.push(now() + wait, {EvType::find, m, 0, ++st.generation});
}

inline void Simulation::retarget(MinerId m, MiningTarget t) {
  // The pending discovery time is kept: exponential waiting is memoryless.
  miners_[m].target = std::move(t);
}

inline RunResult Simulation::run() {
  out_.seed = cfg_.seed;
  for (std::size_t i = 0; i < cfg_.control.size(); ++i)
    queue_.push(cfg_.control[i].at, {EvType::control, static_cast<std::uint32_t>(i)});
  if (cfg_.relay.switch_to_compact_at) queue_.push(*cfg_.relay.switch_to_compact_at, {EvType::relay_switch});
  if (cfg_.tx_stream.rate > 0.0) {
    const Seconds first = cfg_.tx_stream.start_at + tx_rng_.exponential(cfg_.tx_stream.rate);
    queue_.push(first, {EvType::tx_spawn});
  }
  for (MinerId m = 0; m < miners_.size(); ++m) {
    MinerContext ctx(*this, m);
    cfg_.miners[m].strategy->on_start(ctx);
    schedule_find(m);
  }
  const Seconds end_time = cfg_.horizon.seconds.value_or(kNever);
  while (!queue_.empty() && !stop_) {
    if (queue_.next_time() > end_time) break;
    auto item = queue_.pop();
    ++out_.events;
    handle(item.event);
    if (cfg_.horizon.blocks && archive_.best_height() >= *cfg_.horizon.blocks) break;
    if (out_.events >= cfg_.max_events) break;
  }
  return finish();
}

inline void Simulation::handle(Event& ev) {
  switch (ev.type) {
    case EvType::find: on_find(ev.a, ev.tag); break;
    case EvType::header: on_header(ev.a, ev.b, ev.block); break;
    case EvType::body: on_body(ev.a, ev.b, ev.block); break;
    case EvType::validated:
      if (!link_open(ev.b, ev.a) && ev.b != ev.a) {
        nodes_[ev.a].fetching.erase(ev.block->id);
        break;
      }
      process_insert(ev.a, ev.block, ev.b);
      break;
    case EvType::tx: on_tx(ev.a, ev.b, ev.tx); break;
    case EvType::control: apply_control(ev.a); break;
    case EvType::tx_spawn: spawn_tracked_tx(); break;
    case EvType::relay_switch: mode_ = RelayConfig::Mode::compact; break;
    case EvType::timer: {
      MinerContext ctx(*this, ev.a);
      cfg_.miners[ev.a].strategy->on_timer(ctx, static_cast<int>(ev.tag));
      break;
    }
  }
}

inline void Simulation::on_find(MinerId m, std::uint64_t gen) {
  auto& st = miners_[m];
  if (gen != st.generation) return;
  const auto& spec = cfg_.miners[m].spec;
  auto& node = nodes_[cfg_.miners[m].node];
  if (spec.pool != kNoPool)
    record_share(st.stats.shares, spec.hash_share, now() - st.last_share_at, cfg_.mean_interval,
                 cfg_.ppows_per_block, st.rng);
  st.last_share_at = now();

  const MiningTarget& t = st.target;
  const bool parent_known = node.view.contains(t.parent->id);
  BlockTemplate tmpl;
  if (t.policy.kind == TemplatePolicy::Kind::empty || !parent_known) {
    tmpl.size_bytes = cfg_.chain.header_bytes + cfg_.chain.coinbase_bytes;
    if (t.policy.include_background)
      st.stats.forgone_fees += static_cast<double>(std::min<std::uint64_t>(
                                   cfg_.load.backlog(*t.parent, now()),
                                   (cfg_.chain.max_block_bytes - tmpl.size_bytes) / cfg_.chain.tx_bytes)) *
                               cfg_.chain.fee_per_tx;
  } else {
    TemplatePolicy policy = t.policy;
    std::vector<TxPtr> forced;
    for (const auto& tx : t.forced)
      if (node.view.can_include(*tx, t.parent->id)) {
        forced.push_back(tx);
        policy.exclude.insert(tx->id);
        for (const auto& [id, other] : node.mempool)
          for (const auto& in : other->inputs)
            for (const auto& fin : tx->inputs)
              if (in == fin && id != tx->id) policy.exclude.insert(id);
      }
    tmpl = assemble_template(node.mempool, node.view, t.parent->id, policy, cfg_.chain, cfg_.load, now());
    if (!forced.empty()) {
      std::vector<TxPtr> txs = forced;
      for (const auto& f : forced) {
        tmpl.size_bytes += f->size_bytes;
        tmpl.fees += f->fee;
      }
      txs.insert(txs.end(), tmpl.txs.begin(), tmpl.txs.end());
      tmpl.txs = std::move(txs);
      while (tmpl.size_bytes > cfg_.chain.max_block_bytes && tmpl.filler_count > 0) {
        --tmpl.filler_count;
        tmpl.size_bytes -= cfg_.chain.tx_bytes;
        tmpl.fees -= cfg_.chain.fee_per_tx;
      }
    }
  }
  BlockPtr block = make_block(*t.parent, next_block_id_++, m, tmpl, now(), cfg_.chain);
  ++st.stats.found;
  if (block->is_empty()) ++st.stats.empty_found;
  ++st.stats.shares.full_blocks_found;
  MinerContext ctx(*this, m);
  cfg_.miners[m].strategy->on_found(ctx, block);
  if (!stop_) schedule_find(m);
}

inline void Simulation::publish(MinerId m, const BlockPtr& b, std::function<bool(NodeId)> filter) {
  const NodeId n = cfg_.miners[m].node;
  auto& node = nodes_[n];
  const bool first = archive_.insert_block(b, now()).duplicate == false;
  if (first && b->miner < miners_.size()) {
    ++miners_[b->miner].stats.published;
    ++miners_[b->miner].stats.shares.full_blocks_submitted;
    ++out_.published_blocks;
  }
  node.own_published.insert(b->id);
  if (filter) node.publish_filter[b->id] = std::move(filter);
  if (node.view.contains(b->id)) {
    announce(n, b);
  } else {
    process_insert(n, b, kNoNode);
  }
}

inline void Simulation::keep_private(MinerId m, const BlockPtr& b) {
  process_insert(cfg_.miners[m].node, b, kNoNode);
}

inline void Simulation::process_insert(NodeId n, const BlockPtr& b, NodeId from) {
  auto& node = nodes_[n];
  TipChange report = node.view.insert_block(b, now());
  if (report.duplicate) {
    node.fetching.erase(b->id);
    return;
  }
  // Propagation: found until validated here, ignoring any wait for a parent.
  if (from != kNoNode && from != n && b->miner < miners_.size()) {
    const auto& topo = cfg_.topology;
    const std::string size_class = b->is_empty() ? "empty" : (b->size_bytes >= 800'000 ? "full" : "partial");
    const NodeId origin = cfg_.miners[b->miner].node;
    const std::string key = size_class + "|" + topo.node(origin).region + "->" + topo.node(n).region;
    const auto rel = released_at_.find(b->id);
    out_.propagation[key].add(now() - (rel == released_at_.end() ? b->found_at : rel->second));
  }
  if (report.buffered) {
    node.fetching.erase(b->id);
    if (from != kNoNode && from != n) fetch_parent(n, from, report.missing_parent);
    return;
  }
  for (const auto& c : report.connected) handle_connected(n, c);
  for (MinerId m : node.miners) {
    MinerContext ctx(*this, m);
    cfg_.miners[m].strategy->on_block(ctx, report);
    if (stop_) return;
  }
  if (!cfg_.merchants.empty()) check_payments(n);
  if (++node.connects_since_evict >= 32) {
    node.connects_since_evict = 0;
    evict_mempool(node);
  }
}

inline void Simulation::handle_connected(NodeId n, const BlockPtr& c) {
  auto& node = nodes_[n];
  node.fetching.erase(c->id);
  const bool mined_here = c->miner < miners_.size() && cfg_.miners[c->miner].node == n;
  if (node.own_published.count(c->id) || (!mined_here && node.role.relay_foreign)) announce(n, c);
}

inline void Simulation::announce(NodeId n, const BlockPtr& b) {
  auto& node = nodes_[n];
  if (node.role.passive) return;
  const auto filt = node.publish_filter.find(b->id);
  const NodeId origin = b->miner < miners_.size() ? cfg_.miners[b->miner].node : kNoNode;
  const auto* origin_eclipse = origin != kNoNode ? control_.eclipse_of(origin) : nullptr;
  if (origin == n) released_at_.try_emplace(b->id, now());
  for (NodeId p : node.peers) {
    if (nodes_[p].role.passive) continue;
    if (filt != node.publish_filter.end() && !filt->second(p)) continue;
    // Eclipse controllers decide what crosses in either direction.
    if (const auto* e = control_.eclipse_of(p); e && e->controller == n && !e->forward_to_victim) continue;
    if (origin_eclipse && origin_eclipse->controller == n && origin != p && !origin_eclipse->forward_from_victim)
      continue;
    const auto key = pair_key(b->id, p);
    if (!node.sent.insert(key).second) continue;
    queue_.push(now() + transfer_time(control_.link(n, p), cfg_.relay.header_bytes),
                {EvType::header, p, n, 0, b});
  }
}

inline void Simulation::on_header(NodeId to, NodeId from, const BlockPtr& b) {
  if (!link_open(from, to)) return;
  auto& node = nodes_[to];
  if (node.role.passive) return;
  if (!node.sent.insert(pair_key(b->id, from)).second) ++out_.duplicate_emissions;
  if (node.view.knows(b->id) || node.fetching.count(b->id)) return;
  node.fetching.insert(b->id);
  for (MinerId m : node.miners) {
    MinerContext ctx(*this, m);
    cfg_.miners[m].strategy->on_header(ctx, b);
  }
  if (control_.block_blocked(from, to, *b)) {
    node.fetching.erase(b->id);
    return;
  }
  const std::uint64_t payload = body_payload(*b);
  if (b->size_bytes >= 800'000) {
    out_.full_block_payload.add(static_cast<double>(payload));
    out_.full_block_size.add(static_cast<double>(b->size_bytes));
  }
  queue_.push(now() + transfer_time(control_.link(from, to), payload), {EvType::body, to, from, 0, b});
}

inline void Simulation::on_body(NodeId to, NodeId from, const BlockPtr& b) {
  if (!link_open(from, to)) {
    nodes_[to].fetching.erase(b->id);
    return;
  }
  queue_.push(now() + validation_delay(*b), {EvType::validated, to, from, 0, b});
}

inline void Simulation::fetch_parent(NodeId n, NodeId from, BlockId parent) {
  auto& node = nodes_[n];
  if (node.view.knows(parent) || node.fetching.count(parent)) return;
  BlockPtr p = nodes_[from].view.get(parent);
  if (!p || !link_open(from, n)) return;
  node.fetching.insert(parent);
  const Seconds request = transfer_time(control_.link(n, from), cfg_.relay.header_bytes);
  queue_.push(now() + request + transfer_time(control_.link(from, n), body_payload(*p)),
              {EvType::body, n, from, 0, p});
}

inline void Simulation::broadcast_tx(NodeId origin, const TxPtr& tx) {
  auto& node = nodes_[origin];
  if (!node.tx_seen.insert(tx->id).second) return;
  if (node.role.passive) return;
  node.mempool.emplace(tx->id, tx);
  if (node.merchant) check_payments(origin);
  send_tx(origin, tx, kNoNode);
}

inline void Simulation::send_tx(NodeId n, const TxPtr& tx, NodeId except) {
  for (NodeId p : nodes_[n].peers) {
    if (p == except || control_.tx_blocked(n, p, *tx)) continue;
    queue_.push(now() + transfer_time(control_.link(n, p), cfg_.relay.tx_bytes), {EvType::tx, p, n, 0, nullptr, tx});
  }
}

inline void Simulation::on_tx(NodeId to, NodeId from, const TxPtr& tx) {
  if (!link_open(from, to) || control_.tx_blocked(from, to, *tx)) return;
  auto& node = nodes_[to];
  if (!node.tx_seen.insert(tx->id).second) return;
  if (node.observer) out_.first_hears.push_back({tx->id, to, from, now()});
  if (node.role.passive) return;
  node.mempool.emplace(tx->id, tx);
  if (node.merchant) check_payments(to);
  if (node.role.relay_foreign) send_tx(to, tx, from);
}

inline void Simulation::spawn_tracked_tx() {
  const auto& s = cfg_.tx_stream;
  if (now() > s.stop_at) return;
  NodeId origin;
  if (!s.origins.empty()) {
    origin = s.origins[tx_rng_.below(s.origins.size())];
  } else {
    std::vector<NodeId> active;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].role.passive) active.push_back(i);
    origin = active[tx_rng_.below(active.size())];
  }
  auto tx = std::make_shared<SimTransaction>();
  tx->id = next_tx_id_++;
  const AddressId from_addr = (1ULL << 40) + tx->id;
  tx->inputs.push_back({from_addr, tx->id});
  tx->outputs.push_back({(1ULL << 41) + tx_rng_.below(1u << 20), 0.01});
  tx->fee = s.fee;
  tx->origin_node = origin;
  tx->created_at = now();
  tx->censored = tx_rng_.bernoulli(s.censored_fraction);
  tx->size_bytes = s.size_bytes;
  out_.tracked.push_back({tx->id, now(), tx->censored, origin});
  broadcast_tx(origin, tx);
  queue_.push(now() + tx_rng_.exponential(s.rate), {EvType::tx_spawn});
}

inline void Simulation::apply_control(std::size_t index) {
  const auto& action = cfg_.control[index];
  control_.apply(action);
  rebuild_peers();
  using K = ControlAction::Kind;
  if (action.kind == K::heal || action.kind == K::release) {
    // Reconnected nodes announce their best tips; missing ancestors are
    // fetched parent-by-parent from the announcer.
    for (NodeId n = 0; n < nodes_.size(); ++n) {
      auto& node = nodes_[n];
      const BlockPtr& tip = node.view.best();
      if (tip->is_genesis()) continue;
      const bool mined_here = tip->miner < miners_.size() && cfg_.miners[tip->miner].node == n;
      if (node.own_published.count(tip->id) || (!mined_here && node.role.relay_foreign)) announce(n, tip);
    }
  }
}

inline void Simulation::check_payments(NodeId n) {
  const auto& view = nodes_[n].view;
  for (auto& p : out_.payments) {
    if (p.merchant_node != n) continue;
    const BlockId tip = view.best_tip();
    if (!p.accepted()) {
      // The including block is the first confirmation; zero means seen at all.
      const BlockPtr b = view.block_with(p.payment, tip);
      if (p.confirmations == 0 ? nodes_[n].tx_seen.count(p.payment) > 0
                               : b && view.best_height() - b->height + 1 >= p.confirmations)
        p.accepted_at = now();
    } else if (p.reversed_at == kNever && !view.on_chain(p.payment, tip) && view.on_chain(p.conflicting, tip)) {
      p.reversed_at = now();
      if (cfg_.stop_on_payment_decision) stop_ = true;
    }
  }
}

inline void Simulation::evict_mempool(NodeState& node) {
  const auto& view = node.view;
  const BlockId tip = view.best_tip();
  for (auto it = node.mempool.begin(); it != node.mempool.end();) {
    const BlockPtr b = view.block_with(it->first, tip);
    if (b && view.best_height() - b->height >= 12)
      it = node.mempool.erase(it);
    else
      ++it;
  }
}

inline RunResult Simulation::finish() {
  for (MinerId m = 0; m < miners_.size(); ++m) {
    MinerContext ctx(*this, m);
    cfg_.miners[m].strategy->on_finish(ctx);
    auto& st = miners_[m];
    if (cfg_.miners[m].spec.pool != kNoPool)
      record_share(st.stats.shares, cfg_.miners[m].spec.hash_share, now() - st.last_share_at,
                   cfg_.mean_interval, cfg_.ppows_per_block, st.rng);
    st.last_share_at = now();
  }
  out_.end_time = now();
  out_.ledger.block_reward = cfg_.chain.block_reward;
  out_.settlement = settle_rewards(archive_, out_.ledger);
  out_.main_chain = archive_.main_chain();
  archive_.for_each_block([&](const BlockPtr& b) { out_.all_blocks.push_back(b); });
  std::sort(out_.all_blocks.begin(), out_.all_blocks.end(), [](const BlockPtr& a, const BlockPtr& b) { return a->id < b->id; });
  for (auto& p : out_.payments)
    p.success = p.accepted() && archive_.on_chain(p.conflicting, archive_.best_tip()) &&
                !archive_.on_chain(p.payment, archive_.best_tip());
  std::map<PoolId, Btc> pool_revenue;
  for (MinerId m = 0; m < miners_.size(); ++m) {
    const auto& spec = cfg_.miners[m].spec;
    auto it = out_.settlement.miners.find(m);
    const Btc rev = it == out_.settlement.miners.end() ? 0.0 : it->second.revenue;
    if (spec.pool == kNoPool)
      out_.payouts[m] += rev;
    else
      pool_revenue[spec.pool] += rev;
  }
  std::map<MinerId, ShareRecord> shares;
  for (MinerId m = 0; m < miners_.size(); ++m) shares[m] = miners_[m].stats.shares;
  for (const auto& pool : cfg_.pools) {
    for (const auto& [m, amount] : distribute_pool_rewards(pool, shares, pool_revenue[pool.id]))
      out_.payouts[m] += amount;
  }
  // Every miner appears, even with zero revenue.
  for (MinerId m = 0; m < miners_.size(); ++m) out_.payouts.try_emplace(m, 0.0);
  out_.miners.clear();
  for (const auto& st : miners_) out_.miners.push_back(st.stats);
  return std::move(out_);
}

}  // namespace gfwsim
