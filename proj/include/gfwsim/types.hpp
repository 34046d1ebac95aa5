// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gfwsim {

using BlockId = std::uint64_t;
using TxId = std::uint64_t;
using NodeId = std::uint32_t;
using MinerId = std::uint32_t;
using PoolId = std::uint32_t;
using AddressId = std::uint64_t;
using Btc = double;
using Seconds = double;

inline constexpr BlockId kNoBlock = std::numeric_limits<BlockId>::max();
inline constexpr BlockId kGenesisId = 0;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();
inline constexpr MinerId kNoMiner = std::numeric_limits<MinerId>::max();
inline constexpr PoolId kNoPool = std::numeric_limits<PoolId>::max();
inline constexpr Seconds kNever = std::numeric_limits<double>::infinity();

inline constexpr std::uint64_t kMaxBlockBytes = 1'000'000;

/// Raised when a scenario or parameter set violates a named constraint.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Raised when a block is internally inconsistent (e.g. wrong height).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gfwsim
