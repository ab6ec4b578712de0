// Acceptance run: one line per criterion, nonzero exit if any fails.

#include "cluster.hpp"
#include "uavchain/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>

using namespace uavchain;
using consensus::ProtocolKind;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool honest_chains_agree(const RunResult& r, const FaultPlan& f) {
  std::vector<const consensus::ConsensusState*> honest;
  for (const auto& rep : r.replicas) {
    if (f.byzantine.count(rep.node) == 0) honest.push_back(&rep);
  }
  for (std::size_t a = 0; a < honest.size(); ++a) {
    for (std::size_t b = a + 1; b < honest.size(); ++b) {
      const auto& ca = honest[a]->committed_chain;
      const auto& cb = honest[b]->committed_chain;
      if (consensus::common_prefix(ca, cb) != std::min(ca.size(), cb.size())) return false;
    }
  }
  return true;
}

// 1. Safety under byzantine validators, loss and delay.
Outcome safety() {
  Outcome o;
  RngStream rng(20240601);
  const std::array<ByzantineStrategy, 3> strategies{ByzantineStrategy::Equivocate, ByzantineStrategy::InvalidBlock,
                                                    ByzantineStrategy::Silent};
  std::size_t runs = 0, commits = 0, with_byzantine = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto n = static_cast<std::uint32_t>(4 + rng.below(7));
    auto s = build_desk_scenario();
    s.fleet = {n, 0, 0, 0};
    s.consensus.validator_count = n;
    s.consensus.protocol = i % 2 == 0 ? ProtocolKind::HybridDposPbft : ProtocolKind::PurePbft;
    s.duration_s = 10.0;
    s.workload.tx_rate_per_uav = 5.0;
    FaultPlan f;
    const auto set = initial_validators(s, s.consensus.protocol, static_cast<std::uint64_t>(i));
    const auto f_max = consensus::max_faulty(n);
    const auto count = rng.below(f_max + 1);
    auto members = set.nodes();
    rng.shuffle(members);
    for (std::size_t k = 0; k < count; ++k) f.byzantine[members[k]] = strategies[rng.below(3)];
    f.drop_prob = rng.uniform(0.0, 0.2);
    f.delay_jitter_s = rng.uniform(0.0, 0.05);
    const auto r = run(s, f, static_cast<std::uint64_t>(i), s.duration_s);
    ++runs;
    with_byzantine += count > 0 ? 1 : 0;
    commits += r.trace.blocks.size();
    o.require(r.trace.counters.safety_violations == 0, fmt("run %d: safety violation counter", i));
    o.require(honest_chains_agree(r, f), fmt("run %d: honest chains diverge", i));
  }
  o.detail = o.pass ? fmt("%zu runs (%zu with byzantine), %zu blocks, 0 divergent heights", runs, with_byzantine, commits)
                    : o.detail;
  return o;
}

// 2. Liveness with f crashed validators.
Outcome liveness() {
  Outcome o;
  std::size_t windows = 0, views = 0;
  double worst_gap = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto s = build_desk_scenario();
    s.duration_s = 60.0;
    const auto protocol = ProtocolKind::HybridDposPbft;
    const auto set = initial_validators(s, protocol, seed);
    const auto f_max = consensus::max_faulty(set.size());
    FaultPlan f;
    RngStream pick(derive_seed(seed, stream::kByzantine));
    auto members = set.nodes();
    pick.shuffle(members);
    f.crashed.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(f_max));
    const auto r = run(s, f, seed, s.duration_s);
    const double window = s.consensus.timeout_s * static_cast<double>(f_max + 1);

    std::map<std::uint32_t, std::vector<double>> commit_times;
    for (const auto& rec : r.trace.records) {
      if (rec.kind == TraceKind::Commit) commit_times[rec.a].push_back(rec.time);
      if (rec.kind == TraceKind::View) {
        ++views;
        const bool crashed = std::find(f.crashed.begin(), f.crashed.end(), NodeId{rec.b}) != f.crashed.end();
        o.require(crashed, fmt("seed %llu: view change away from live proposer %u at t=%.3f",
                               static_cast<unsigned long long>(seed), rec.b, rec.time));
      }
    }
    for (const auto& m : set.members) {
      if (std::find(f.crashed.begin(), f.crashed.end(), m.node) != f.crashed.end()) continue;
      const auto& times = commit_times[m.node.value];
      double last = 0.0;
      for (double t : times) {
        worst_gap = std::max(worst_gap, t - last);
        last = t;
      }
      worst_gap = std::max(worst_gap, s.duration_s - last);
      for (double start = 0.0; start + window <= s.duration_s; start += window) {
        ++windows;
        const bool grew = std::any_of(times.begin(), times.end(), [&](double t) { return t >= start && t < start + window; });
        o.require(grew, fmt("seed %llu: node %u idle over [%.1f, %.1f)", static_cast<unsigned long long>(seed),
                            m.node.value, start, start + window));
      }
    }
    o.require(r.trace.counters.safety_violations == 0, "safety violation");
  }
  if (o.pass) o.detail = fmt("%zu node-windows all grew, longest gap %.3f s, %zu view records all on crashed proposers",
                             windows, worst_gap, views);
  return o;
}

// 3. Commit decision against subset enumeration.
Outcome quorum_oracle() {
  Outcome o;
  std::size_t orders = 0;
  {
    testing::QuorumBench bench(4);
    const auto k = bench.voters().size();
    for (std::uint32_t pm = 0; pm < (1U << k); ++pm) {
      for (std::uint32_t cm = 0; cm < (1U << k); ++cm) {
        auto msgs = bench.messages(pm, cm);
        std::vector<std::size_t> idx(msgs.size());
        std::iota(idx.begin(), idx.end(), 0);
        const bool expect = bench.oracle(pm, cm);
        do {
          std::vector<ConsensusMessage> ordered;
          for (auto i : idx) ordered.push_back(msgs[i]);
          ++orders;
          o.require(bench.run(ordered) == expect, fmt("n=4 prepare=%u commit=%u order mismatch", pm, cm));
        } while (std::next_permutation(idx.begin(), idx.end()));
      }
    }
  }
  RngStream rng(99);
  for (std::size_t n = 5; n <= 7; ++n) {
    testing::QuorumBench bench(n);
    const auto k = bench.voters().size();
    for (int trial = 0; trial < 10000; ++trial) {
      const auto pm = static_cast<std::uint32_t>(rng.below(1ULL << k));
      const auto cm = static_cast<std::uint32_t>(rng.below(1ULL << k));
      auto msgs = bench.messages(pm, cm);
      rng.shuffle(msgs);
      ++orders;
      o.require(bench.run(msgs) == bench.oracle(pm, cm), fmt("n=%zu prepare=%u commit=%u mismatch", n, pm, cm));
    }
  }
  if (o.pass) o.detail = fmt("%zu orderings, exact agreement", orders);
  return o;
}

// 4. Latency model.
Outcome latency_model() {
  Outcome o;
  const radio::LinkBudgetParams p;
  const radio::NodeServiceProfile svc{0.010, 1000.0};
  RngStream rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double d = rng.uniform(1.0, 40000.0);
    const double bits = rng.uniform(1.0, 1e6);
    const double q = static_cast<double>(rng.below(500));
    const auto l = radio::latency_components(bits, d, q, p, svc);
    const double sum = l.proc_s + l.queue_s + l.trans_s + l.prop_s;
    o.require(std::fabs(l.total_s - sum) <= std::nextafter(sum, 1.0) - sum, "additivity beyond 1 ulp");
  }
  o.require(radio::latency_components(1, 3000.0, 0, p, svc).prop_s == 1e-5, "prop(3000 m) != 10 us");

  // Cluster latency presets through the scenario config.
  json j = {{"radio", {{"uav_proc_latency_s", 0.010}, {"uav_service_rate", 1000.0}}}};
  Scenario back = default_hurricane();
  apply_scenario_json(back, scenario_to_json(build_hurricane_scenario(j)), ScenarioError::Kind::UnknownKey);
  const auto& r = back.network.radio;
  const double d = 2000.0;
  const double c = radio::capacity(r.bandwidth_hz, radio::snr(r, d));
  const auto l = radio::latency_components(0.010 * c, d, 1.0, r, back.network.uav_service);
  o.require(l.proc_s == 0.010, "proc preset");
  o.require(l.queue_s == 0.001, "queue preset");
  o.require(std::fabs(l.trans_s - 0.010) < 1e-15, "trans preset");

  for (double dist : {10.0, 100.0, 1000.0, 5000.0}) {
    auto half = p;
    half.noise_power_w = p.noise_power_w / 2;
    o.require(radio::snr(half, dist) == 2 * radio::snr(p, dist), "halving noise does not double snr");
    const double ratio = radio::snr(p, dist) / radio::snr(p, 2 * dist);
    o.require(std::fabs(ratio - 4.0) < 1e-12, "inverse square");
  }
  if (o.pass) o.detail = "additivity within 1 ulp on 1e4 links, prop(3 km)=1e-5 s, presets 10/1/10 ms";
  return o;
}

// 5. Hybrid against PBFT on the desk scenario.
Outcome comparison() {
  Outcome o;
  auto s = build_desk_scenario();
  s.duration_s = 60.0;
  int iqr_wins = 0;
  std::string medians;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto hybrid = run_experiment(s, ProtocolKind::HybridDposPbft, {}, seed).report;
    const auto pbft = run_experiment(s, ProtocolKind::PurePbft, {}, seed).report;
    o.require(!hybrid.no_data() && !pbft.no_data(), "no commits");
    o.require(hybrid.latency.median < pbft.latency.median,
              fmt("seed %llu: hybrid median %.4f >= pbft %.4f", static_cast<unsigned long long>(seed),
                  hybrid.latency.median, pbft.latency.median));
    iqr_wins += hybrid.latency.iqr() <= pbft.latency.iqr() ? 1 : 0;
    medians += fmt(" %.1f/%.1f", hybrid.latency.median * 1e3, pbft.latency.median * 1e3);
  }
  o.require(iqr_wins >= 4, fmt("hybrid IQR smaller on only %d/5 seeds", iqr_wins));
  if (o.pass) o.detail = fmt("median ms hybrid/pbft:%s, IQR wins %d/5", medians.c_str(), iqr_wins);
  return o;
}

// 6. Canonical attack.
Outcome attack() {
  Outcome o;
  auto s = build_desk_scenario();
  s.duration_s = 60.0;
  double worst = -1e9;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto protocol = ProtocolKind::HybridDposPbft;
    const auto base = run_experiment(s, protocol, {}, seed).report;
    const auto plan = canonical_attack_plan(s, protocol, seed);
    const auto hit = run(s, plan, seed, s.duration_s);
    auto attacked = compute_metrics(hit.trace);
    attacked.protocol = protocol;
    const auto d = degradation(base, attacked);
    worst = std::max(worst, d.throughput_pct);
    o.require(d.throughput_pct <= 10.0, fmt("seed %llu: degradation %.2f%%", static_cast<unsigned long long>(seed),
                                            d.throughput_pct));
    o.require(hit.trace.counters.safety_violations == 0, "safety violation under attack");
    o.require(honest_chains_agree(hit, plan), "honest chains diverge under attack");
  }
  if (o.pass) o.detail = fmt("worst throughput degradation %.2f%% over 3 seeds, 0 safety violations", worst);
  return o;
}

// 7. Mission groups on the hurricane scenario.
Outcome groups() {
  Outcome o;
  const auto s = build_hurricane_scenario();
  int significant = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run_experiment(s, ProtocolKind::HybridDposPbft, {}, seed).report;
    const auto& rescue = r.group[static_cast<std::size_t>(Mission::Rescue)];
    const auto& conn = r.group[static_cast<std::size_t>(Mission::Connectivity)];
    const double ratio = rescue.median / conn.median;
    ratios += fmt(" %.3f", ratio);
    o.require(ratio >= 1.05, fmt("seed %llu: rescue/connectivity median ratio %.3f", static_cast<unsigned long long>(seed), ratio));
    const auto a = group_anova(r);
    significant += a && a->p_value < 0.05 ? 1 : 0;
  }
  o.require(significant >= 4, fmt("p < 0.05 on only %d/5 seeds", significant));
  if (o.pass) o.detail = fmt("rescue/connectivity medians:%s, p < 0.05 on %d/5 seeds", ratios.c_str(), significant);
  return o;
}

// 8. ANOVA numerics.
Outcome anova() {
  Outcome o;
  const std::vector<std::vector<double>> golden{
      {10.6479, 10.4693, 9.3570, 8.8217, 9.8553, 11.2035, 11.3336, 10.9083, 10.3466, 11.6000,
       11.2328, 9.7797, 8.9380, 9.6354, 9.5800, 10.6875, 8.1009, 9.8086, 11.6712, 9.0797},
      {10.2415, 10.9157, 9.5822, 10.8704, 10.9843, 10.9953, 10.0115, 10.6342, 11.6538, 10.2854,
       11.5472, 11.6555, 9.5730, 10.3547, 11.6553, 11.4935, 11.1794, 10.6514, 11.1086, 12.8748},
      {12.7785, 13.5796, 12.5833, 12.8017, 13.6480, 12.0710, 12.7576, 12.3897, 12.1413, 13.1758,
       14.2398, 13.2214, 12.6182, 11.5489, 13.8190, 13.2105, 12.3687, 13.8614, 14.5742, 11.3683},
  };
  const auto r = stats::anova_oneway(golden);
  const double ef = std::fabs(r.f_statistic - 52.06751176145842) / 52.06751176145842;
  const double ep = std::fabs(r.p_value - 1.3725238587349782e-13) / 1.3725238587349782e-13;
  o.require(ef < 1e-6 && ep < 1e-6, fmt("golden F rel err %.2e, p rel err %.2e", ef, ep));
  o.require(stats::anova_oneway({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}).f_statistic == 0.0, "identical groups F != 0");
  RngStream rng(77);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::vector<double>> g(2 + rng.below(5));
    for (auto& v : g) {
      const auto n = 2 + rng.below(30);
      const double mu = rng.uniform(-50, 50), sd = rng.uniform(0.01, 20);
      for (std::size_t i = 0; i < n; ++i) v.push_back(mu + sd * (rng.uniform() - 0.5));
    }
    const auto a = stats::anova_oneway(g);
    worst = std::max(worst, std::fabs(a.ss_between + a.ss_within - a.ss_total) / a.ss_total);
  }
  o.require(worst <= 1e-9, fmt("SS identity rel err %.2e", worst));
  if (o.pass) o.detail = fmt("F err %.1e, p err %.1e, SS identity worst %.1e", ef, ep, worst);
  return o;
}

// 9. Replay and byte-identical event logs.
Outcome replay() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / ("uavchain_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  auto s = build_desk_scenario();
  s.attacks = {AttackSpec::Mode::Canonical, {}};
  std::vector<RunRecord> runs;
  for (auto protocol : kProtocols) {
    for (std::uint64_t seed : {11, 12}) {
      const auto faults = resolve_faults(s, protocol, seed);
      const auto e = run_experiment(s, protocol, faults, seed);
      runs.push_back({e.report, e.faults});
    }
  }
  export_results(dir, "compare", s, runs);
  const auto checks = replay_summary(dir / "summary.json");
  std::size_t matched = 0;
  for (const auto& c : checks) matched += c.match() ? 1 : 0;
  o.require(!checks.empty() && matched == checks.size(), fmt("%zu/%zu replays matched", matched, checks.size()));

  std::ostringstream a, b;
  const auto faults = resolve_faults(s, ProtocolKind::HybridDposPbft, 5);
  const auto r1 = run(s, faults, 5, s.duration_s, {.jsonl = &a});
  const auto r2 = run(s, faults, 5, s.duration_s, {.jsonl = &b});
  o.require(a.str() == b.str(), "events.jsonl differs between equal-seed runs");
  o.require(r1.trace.hash == r2.trace.hash, "trace hash differs between equal-seed runs");
  std::filesystem::remove_all(dir);
  if (o.pass) o.detail = fmt("%zu/%zu replays reproduced the hash, %zu-byte event logs identical", matched, checks.size(),
                             a.str().size());
  return o;
}

// 10. Kinematics.
Outcome kinematics() {
  Outcome o;
  mobility::MobilityConfig cfg;
  cfg.limit_motion = false;
  cfg.reflect_at_bounds = false;
  const Vec3 p0{100, -200, 300}, v0{12, -3, 0.5}, acc{0.7, 1.1, -0.2};
  auto st = mobility::KinematicState::at(p0);
  st.velocity = v0;
  st.acceleration = acc;
  double worst = 0;
  for (int k = 1; k <= 1000; ++k) {
    st = mobility::step(st, cfg);
    const double t = k * cfg.dt;
    const Vec3 p = p0 + v0 * t + acc * (0.5 * t * t);
    for (double e : {std::fabs(st.position.x - p.x) / std::fabs(p.x), std::fabs(st.position.y - p.y) / std::fabs(p.y),
                     std::fabs(st.position.z - p.z) / std::fabs(p.z)}) {
      worst = std::max(worst, e);
    }
  }
  o.require(worst <= 1e-9, fmt("closed form rel err %.2e", worst));

  mobility::MobilityConfig bounded;
  bounded.area = Box{{0, 0, 50}, {25000, 25000, 500}};
  RngStream rng(10);
  auto u = mobility::KinematicState::at(bounded.area.center());
  double fastest = 0;
  for (int i = 0; i < 100000; ++i) {
    u.acceleration = {rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(-40, 40)};
    u = mobility::step(u, bounded);
    fastest = std::max(fastest, u.velocity.norm());
  }
  o.require(fastest <= 50.0, fmt("speed %.17g exceeds 50 m/s", fastest));
  if (o.pass) o.detail = fmt("closed form rel err %.1e over 1e3 steps, max speed %.6f m/s over 1e5 steps", worst, fastest);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{safety,     liveness, quorum_oracle, latency_model, comparison,
                                                       attack,     groups,   anova,         replay,        kinematics};
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu [PRIMARY]: %s  %s (%.1f s)\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
