// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gfwsim/chain.hpp"
#include "gfwsim/deanon.hpp"
#include "gfwsim/event_queue.hpp"
#include "gfwsim/harness.hpp"
#include "gfwsim/metrics.hpp"
#include "gfwsim/mining.hpp"
#include "gfwsim/network.hpp"
#include "gfwsim/rng.hpp"
#include "gfwsim/scenario.hpp"
#include "gfwsim/simulator.hpp"
#include "gfwsim/strategies.hpp"
#include "gfwsim/types.hpp"
