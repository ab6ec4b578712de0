#include "uavchain/harness.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <tuple>

using namespace uavchain;

namespace {

Scenario small(double duration = 3.0) {
  auto s = build_desk_scenario();
  s.duration_s = duration;
  return s;
}

RunResult run_small(const Scenario& s, const FaultPlan& f = {}, std::uint64_t seed = 1, RunOptions o = {}) {
  return run(s, f, seed, s.duration_s, o);
}

double mean(const std::vector<double>& v) {
  double sum = 0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

}  // namespace

TEST(Deliver, TwoKilometreLinkOneQueued) {
  NetworkConfig net;
  const Vec3 a{0, 0, 100}, b{2000, 0, 100};
  const double c = radio::capacity(net.radio.bandwidth_hz, radio::snr(net.radio, 2000.0));
  const double bits = 0.010 * c;  // a message that takes exactly 10 ms on this link
  RngStream rng(1);
  const double now = 5.0;
  // One message already waiting at 1000 msg/s adds the 1 ms queueing term.
  const auto t = deliver(now, bits, a, b, 1.0, net, net.uav_service, rng, 0.0);
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(*t - now, 0.0210067, 1e-7);
  EXPECT_NEAR(*t - now, 0.010 + 0.001 + 0.010 + 2000.0 / 3.0e8, 1e-15);
  const auto idle = deliver(now, bits, a, b, 0.0, net, net.uav_service, rng, 0.0);
  EXPECT_NEAR(*idle - now, 0.010 + 0.010 + 2000.0 / 3.0e8, 1e-15);
}

TEST(Deliver, DropProbabilityExtremes) {
  NetworkConfig net;
  RngStream rng(2);
  int delivered = 0;
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(deliver(0, 1024, {}, {100, 0, 0}, 0, net, net.uav_service, rng, 1.0).has_value());
    delivered += deliver(0, 1024, {}, {100, 0, 0}, 0, net, net.uav_service, rng, 0.0).has_value() ? 1 : 0;
  }
  EXPECT_EQ(delivered, 1000);
  net.radio.tx_power_w = 0.0;
  EXPECT_FALSE(deliver(0, 1024, {}, {100, 0, 0}, 0, net, net.uav_service, rng, 0.0).has_value());
}

TEST(Run, EmptyFleetHasOnlyTicks) {
  auto s = small(10.0);
  s.fleet = {0, 0, 0, 0};
  const auto r = run_small(s, {}, 1, {.retain_messages = true});
  std::size_t ticks = 0;
  for (const auto& rec : r.trace.records) {
    EXPECT_TRUE(rec.kind == TraceKind::Tick || rec.kind == TraceKind::Run || rec.kind == TraceKind::End)
        << to_string(rec.kind);
    ticks += rec.kind == TraceKind::Tick ? 1 : 0;
  }
  EXPECT_GE(ticks, 100u);
  EXPECT_LE(ticks, 101u);
  EXPECT_EQ(r.trace.counters.sent, 0u);
}

TEST(Run, DeterministicTraceAndJsonl) {
  const auto s = small();
  std::ostringstream a, b;
  const auto r1 = run_small(s, {}, 7, {.jsonl = &a});
  const auto r2 = run_small(s, {}, 7, {.jsonl = &b});
  EXPECT_EQ(r1.trace.hash, r2.trace.hash);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_FALSE(a.str().empty());
  const auto r3 = run_small(s, {}, 8);
  EXPECT_NE(r1.trace.hash, r3.trace.hash);
}

TEST(Run, JsonlDetailDoesNotChangeHash) {
  const auto s = small(2.0);
  std::ostringstream full, blocks;
  const auto a = run_small(s, {}, 3, {.jsonl = &full});
  const auto b = run_small(s, {}, 3, {.jsonl = &blocks, .jsonl_messages = false});
  EXPECT_EQ(a.trace.hash, b.trace.hash);
  EXPECT_LT(blocks.str().size(), full.str().size());
}

TEST(Run, OrderedTimesAndSequence) {
  const auto r = run_small(small(2.0), {}, 1, {.retain_messages = true});
  ASSERT_GT(r.trace.records.size(), 100u);
  for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
    ASSERT_LE(r.trace.records[i - 1].time, r.trace.records[i].time);
    ASSERT_LT(r.trace.records[i - 1].seq, r.trace.records[i].seq);
  }
}

TEST(Run, ConservationOfMessages) {
  FaultPlan f;
  f.drop_prob = 0.1;
  f.delay_jitter_s = 0.01;
  const auto r = run_small(small(), f, 2);
  const auto& c = r.trace.counters;
  EXPECT_GT(c.sent, 0u);
  EXPECT_GT(c.dropped, 0u);
  EXPECT_EQ(c.sent, c.delivered + c.dropped + c.in_flight);
}

TEST(Run, CausalityPerLink) {
  const auto r = run_small(small(2.0), {}, 4, {.retain_messages = true});
  using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint8_t, std::uint64_t, std::uint64_t, Digest>;
  std::map<Key, std::vector<double>> arrivals, services;
  for (const auto& rec : r.trace.records) {
    const Key k{rec.a, rec.b, rec.tag, rec.x, rec.y, rec.digest};
    if (rec.kind == TraceKind::Send) {
      ASSERT_GE(rec.value, rec.time);
      arrivals[k].push_back(rec.value);
    } else if (rec.kind == TraceKind::Deliver) {
      ASSERT_GE(rec.value, 0.0);
      services[k].push_back(rec.time);
    }
  }
  std::size_t checked = 0;
  for (auto& [k, served] : services) {
    auto& sent = arrivals[k];
    ASSERT_LE(served.size(), sent.size());
    std::sort(sent.begin(), sent.end());
    std::sort(served.begin(), served.end());
    for (std::size_t i = 0; i < served.size(); ++i) ASSERT_GE(served[i] + 1e-12, sent[i]);
    checked += served.size();
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Run, TotalLossDeliversNothing) {
  FaultPlan f;
  f.drop_prob = 1.0;
  const auto r = run_small(small(2.0), f, 1);
  EXPECT_EQ(r.trace.counters.delivered, 0u);
  EXPECT_EQ(r.trace.counters.sent, r.trace.counters.dropped);
  EXPECT_TRUE(r.trace.blocks.empty());
}

TEST(Run, LosslessHasNoDrops) {
  const auto r = run_small(small(2.0), {}, 1);
  EXPECT_EQ(r.trace.counters.dropped, 0u);
  EXPECT_FALSE(r.trace.blocks.empty());
}

TEST(Run, RejectsTooManyByzantine) {
  const auto s = small(1.0);
  const auto set = initial_validators(s, s.consensus.protocol, 1);
  FaultPlan f;
  for (std::size_t i = 0; i <= consensus::max_faulty(set.size()); ++i) f.byzantine[set.members[i].node] = ByzantineStrategy::Silent;
  try {
    run_small(s, f, 1);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.kind(), ScenarioError::Kind::UnsafeFaults);
  }
  f.allow_unsafe = true;
  EXPECT_NO_THROW(run_small(s, f, 1));
}

TEST(Run, ByzantineWithinBoundStaysSafe) {
  const auto s = small(4.0);
  const auto set = initial_validators(s, s.consensus.protocol, 5);
  for (auto strategy : {ByzantineStrategy::Equivocate, ByzantineStrategy::InvalidBlock, ByzantineStrategy::Silent}) {
    FaultPlan f;
    for (std::size_t i = 0; i < consensus::max_faulty(set.size()); ++i) f.byzantine[set.members[i].node] = strategy;
    const auto r = run_small(s, f, 5);
    EXPECT_EQ(r.trace.counters.safety_violations, 0u) << to_string(strategy);
    EXPECT_FALSE(r.trace.blocks.empty()) << to_string(strategy);
    // With exactly f faulty the quorum needs every honest vote, so loss can
    // stall progress but never split the chain.
    f.drop_prob = 0.1;
    const auto lossy = run_small(s, f, 5);
    EXPECT_EQ(lossy.trace.counters.safety_violations, 0u) << to_string(strategy);
  }
}

TEST(Attack, ZeroFloodRateHasNoEffect) {
  const auto s = small(3.0);
  const auto set = initial_validators(s, s.consensus.protocol, 1);
  FaultPlan f;
  f.ddos.push_back({set.members[0].node, 1.0, 1.0, 0.0});
  const auto base = compute_metrics(run_small(s, {}, 1).trace);
  const auto hit = compute_metrics(run_small(s, f, 1).trace);
  EXPECT_EQ(base.committed_tx, hit.committed_tx);
  EXPECT_EQ(base.latencies, hit.latencies);
}

TEST(Attack, FloodAtServiceRateGrowsTargetQueue) {
  auto s = small(4.0);
  const auto set = initial_validators(s, s.consensus.protocol, 1);
  const NodeId target = set.members[0].node;
  const double rate = s.network.uav_service.service_rate_msgs_per_s;
  FaultPlan f;
  f.ddos.push_back({target, 1.0, 2.0, rate});
  const auto r = run_small(s, f, 1, {.retain_messages = true});
  std::vector<double> before, first_half, second_half;
  for (const auto& rec : r.trace.records) {
    if (rec.kind != TraceKind::Deliver || rec.b != target.value) continue;
    if (rec.time < 1.0) before.push_back(rec.value);
    else if (rec.time < 2.0) first_half.push_back(rec.value);
    else if (rec.time < 3.0) second_half.push_back(rec.value);
  }
  ASSERT_FALSE(before.empty());
  ASSERT_FALSE(first_half.empty());
  ASSERT_FALSE(second_half.empty());
  EXPECT_GT(mean(first_half), mean(before));
  EXPECT_GT(mean(second_half), mean(first_half));
  EXPECT_GT(r.trace.counters.junk, 0u);
  EXPECT_EQ(r.trace.counters.safety_violations, 0u);
}

TEST(Attack, SpoofChangesReportedPositionsOnly) {
  const auto s = small(2.0);
  FaultPlan f;
  f.spoof.push_back({NodeId{0}, {500, 0, 0}, 0.0, 2.0});
  const auto base = run_small(s, {}, 1, {.retain_messages = true});
  const auto spoofed = run_small(s, f, 1, {.retain_messages = true});
  auto tick_digests = [](const RunResult& r) {
    std::vector<Digest> d;
    for (const auto& rec : r.trace.records) {
      if (rec.kind == TraceKind::Tick) d.push_back(rec.digest);
    }
    return d;
  };
  // True kinematics are untouched; only link distances see the offset.
  EXPECT_EQ(tick_digests(base), tick_digests(spoofed));
  EXPECT_NE(base.trace.hash, spoofed.trace.hash);
  EXPECT_EQ(spoofed.trace.counters.safety_violations, 0u);
}

TEST(Run, CanonicalAttackKeepsSafety) {
  auto s = small(6.0);
  const auto f = canonical_attack_plan(s, s.consensus.protocol, 3);
  EXPECT_EQ(f.ddos.size(), 2u);
  EXPECT_EQ(f.byzantine.size(), 2u);
  EXPECT_EQ(f.spoof.size(), 5u);
  const auto r = run_small(s, f, 3);
  EXPECT_EQ(r.trace.counters.safety_violations, 0u);
  EXPECT_FALSE(r.trace.blocks.empty());
}

TEST(Run, HonestChainsShareCommonPrefix) {
  FaultPlan f;
  f.drop_prob = 0.2;
  f.delay_jitter_s = 0.05;
  const auto r = run_small(small(), f, 9);
  for (std::size_t a = 0; a < r.replicas.size(); ++a) {
    for (std::size_t b = a + 1; b < r.replicas.size(); ++b) {
      const auto& ca = r.replicas[a].committed_chain;
      const auto& cb = r.replicas[b].committed_chain;
      ASSERT_EQ(consensus::common_prefix(ca, cb), std::min(ca.size(), cb.size()));
    }
  }
}

TEST(Byzantine, TransformCounts) {
  RngStream rng(1);
  auto block = std::make_shared<const Block>(seal_block(Block{.height = 1, .parent_hash = make_genesis().block_hash}));
  const auto pp = make_message(PrePrepare{block, 0}, NodeId{0});
  const std::vector<NodeId> to{NodeId{1}, NodeId{2}, NodeId{3}};
  const auto bad = apply_byzantine(pp, to, ByzantineStrategy::InvalidBlock, rng);
  ASSERT_EQ(bad.size(), 3u);
  for (const auto& [m, dest] : bad) {
    EXPECT_TRUE(verify_message(m));
    EXPECT_TRUE(validate_block(*std::get<PrePrepare>(m.body).block, make_genesis().block_hash, 1).has_value());
  }
  const auto eq = apply_byzantine(pp, to, ByzantineStrategy::Equivocate, rng);
  std::set<Digest> blocks;
  for (const auto& [m, dest] : eq) blocks.insert(m.block_hash());
  EXPECT_EQ(blocks.size(), 2u);
  const auto vc = make_message(ViewChange{1, 1, nullptr, 0}, NodeId{0});
  EXPECT_EQ(apply_byzantine(vc, to, ByzantineStrategy::Equivocate, rng).size(), 3u);
}

TEST(Run, AnalyticQueueModeRuns) {
  auto s = small(2.0);
  s.network.queue_mode = QueueMode::Analytic;
  const auto r = run_small(s, {}, 1);
  EXPECT_FALSE(r.trace.blocks.empty());
  EXPECT_EQ(r.trace.counters.sent, r.trace.counters.delivered + r.trace.counters.dropped + r.trace.counters.in_flight);
}
