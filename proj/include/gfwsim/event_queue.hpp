// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gfwsim/types.hpp"

namespace gfwsim {

/// Min-heap of timed events. Events with equal fire times pop in insertion
/// order, which keeps runs deterministic.
template <typename Event>
class EventQueue {
 public:
  struct Item {
    Seconds fire_time;
    std::uint64_t sequence;
    Event event;
  };

  void push(Seconds fire_time, Event event) {
    if (fire_time < now_) throw std::logic_error("event scheduled in the past");
    heap_.push(Item{fire_time, next_seq_++, std::move(event)});
  }

  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }
  Seconds now() const noexcept { return now_; }
  Seconds next_time() const { return heap_.top().fire_time; }

  Item pop() {
    Item item = std::move(const_cast<Item&>(heap_.top()));
    heap_.pop();
    now_ = item.fire_time;
    return item;
  }

  void clear() {
    heap_ = {};
  }

 private:
  struct Later {
    bool operator()(const Item& a, const Item& b) const noexcept {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.sequence > b.sequence;
    }
  };

  std::priority_queue<Item, std::vector<Item>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  Seconds now_ = 0.0;
};

}  // namespace gfwsim
