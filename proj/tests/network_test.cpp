// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gfwsim/network.hpp"

using namespace gfwsim;

TEST(Links, LosslessZeroLatencyIsSizeOverBandwidth) {
  LinkProfile p{0.0, 1000.0, 0.0};
  EXPECT_DOUBLE_EQ(transfer_time(p, 5000), 5.0);
}

TEST(Links, IntraRegionMegabyte) {
  EXPECT_NEAR(transfer_time(LinkProfile::intra_region(), 1'000'000), 3.9, 3.9 * 0.05);
}

TEST(Links, CrossBoundaryMegabyte) {
  const double t = transfer_time(LinkProfile::cross_boundary(), 1'000'000);
  EXPECT_NEAR(t, 17.4, 17.4 * 0.05);
  EXPECT_NEAR(t / transfer_time(LinkProfile::intra_region(), 1'000'000), 4.46, 0.2);
}

TEST(Links, CalibrationRecoversDefaults) {
  LinkProfile a = LinkProfile::intra_region(), b = LinkProfile::cross_boundary();
  auto c = calibrate_links(a, 3.9, b, 17.4, 1'000'000);
  EXPECT_NEAR(c.loss_k, kLossK, 1e-6);
  EXPECT_NEAR(c.bandwidth, kDefaultBandwidth, 1e-3);
}

TEST(Links, TransferNeverBeatsLatency) {
  RngStream rng(2);
  for (int i = 0; i < 1000; ++i) {
    LinkProfile p{rng.uniform(0, 1), rng.uniform(1e3, 1e8), rng.uniform(0, 0.5)};
    EXPECT_GE(transfer_time(p, rng.below(2'000'000)), p.latency);
  }
}

TEST(Links, Validation) {
  EXPECT_THROW((LinkProfile{-1.0}).validate(), ValidationError);
  EXPECT_THROW((LinkProfile{0.1, 0.0}).validate(), ValidationError);
  EXPECT_THROW((LinkProfile{0.1, 1e6, 1.0}).validate(), ValidationError);
}

TEST(Topology, RejectsSelfAndDuplicateEdges) {
  Topology t;
  auto a = t.add_node("a", "inside");
  auto b = t.add_node("b", "outside");
  t.add_edge(a, b, LinkProfile::cross_boundary());
  EXPECT_THROW(t.add_edge(a, b, LinkProfile::cross_boundary()), ValidationError);
  EXPECT_THROW(t.add_edge(a, a, LinkProfile::intra_region()), ValidationError);
  EXPECT_TRUE(t.crosses_boundary(a, b));
  EXPECT_TRUE(t.connected());
  EXPECT_EQ(t.find("b"), b);
}

TEST(Topology, RandomGraphIsConnected) {
  RngStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Topology t;
    std::vector<NodeId> ids;
    for (int i = 0; i < 30; ++i) ids.push_back(t.add_node("n" + std::to_string(i), "r"));
    build_random(t, ids, 4.0, LinkProfile::intra_region(), 0.1, rng);
    EXPECT_TRUE(t.connected());
    EXPECT_EQ(t.edges().size(), 60u);
  }
}

namespace {

Topology two_regions(std::vector<NodeId>& inside, std::vector<NodeId>& outside) {
  Topology t;
  RngStream rng(1);
  for (int i = 0; i < 3; ++i) inside.push_back(t.add_node("in" + std::to_string(i), "inside"));
  for (int i = 0; i < 3; ++i) outside.push_back(t.add_node("out" + std::to_string(i), "outside"));
  build_clique(t, inside, LinkProfile::intra_region(), 0, rng);
  build_clique(t, outside, LinkProfile::intra_region(), 0, rng);
  for (NodeId a : inside)
    for (NodeId b : outside) t.add_edge(a, b, LinkProfile::cross_boundary());
  return t;
}

}  // namespace

TEST(ControlPlane, PartitionHidesOtherSide) {
  std::vector<NodeId> in, out;
  auto t = two_regions(in, out);
  ControlPlane cp(t);
  ControlAction p;
  p.kind = ControlAction::Kind::partition;
  p.group_a = in;
  p.group_b = out;
  cp.apply(p);
  EXPECT_TRUE(cp.partitioned(in[0], out[0]));
  EXPECT_EQ(cp.peers(in[0]).size(), 2u);
  EXPECT_THROW(cp.apply(p), ValidationError);
  ControlAction h;
  h.kind = ControlAction::Kind::heal;
  cp.apply(h);
  EXPECT_FALSE(cp.partitioned(in[0], out[0]));
  EXPECT_EQ(cp.peers(in[0]).size(), 5u);
}

TEST(ControlPlane, EclipsedVictimOnlySeesController) {
  std::vector<NodeId> in, out;
  auto t = two_regions(in, out);
  ControlPlane cp(t);
  ControlAction e;
  e.kind = ControlAction::Kind::eclipse;
  e.victims = {out[2]};
  e.controller = in[0];
  cp.apply(e);
  EXPECT_EQ(cp.peers(out[2]), std::vector<NodeId>{in[0]});
  for (NodeId n : {in[1], in[2], out[0], out[1]}) {
    auto peers = cp.peers(n);
    EXPECT_EQ(std::count(peers.begin(), peers.end(), out[2]), 0);
  }
  e.kind = ControlAction::Kind::release;
  cp.apply(e);
  EXPECT_EQ(cp.peers(out[2]).size(), 5u);
}

TEST(ControlPlane, CensorFilterOnlyOnBoundary) {
  std::vector<NodeId> in, out;
  auto t = two_regions(in, out);
  ControlPlane cp(t);
  ControlAction c;
  c.kind = ControlAction::Kind::censor_link;
  c.into_region = "outside";
  cp.apply(c);
  SimTransaction tx;
  tx.censored = true;
  EXPECT_TRUE(cp.tx_blocked(in[0], out[0], tx));
  EXPECT_FALSE(cp.tx_blocked(out[0], in[0], tx));
  EXPECT_FALSE(cp.tx_blocked(in[0], in[1], tx));
  tx.censored = false;
  EXPECT_FALSE(cp.tx_blocked(in[0], out[0], tx));
}
