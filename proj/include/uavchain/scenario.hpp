#pragma once

// Declarative experiment description and attack plan.

#include "uavchain/consensus.hpp"
#include "uavchain/mobility.hpp"
#include "uavchain/radio.hpp"

#include <array>
#include <cstdint>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace uavchain {

using consensus::Mission;
using mobility::Box;
using mobility::Vec3;

inline constexpr std::array<Mission, 4> kMissions{Mission::Connectivity, Mission::Delivery, Mission::Rescue,
                                                 Mission::Assessment};

struct FleetCounts {
  std::uint32_t connectivity = 50;
  std::uint32_t delivery = 100;
  std::uint32_t rescue = 25;
  std::uint32_t assessment = 25;

  std::uint32_t total() const noexcept { return connectivity + delivery + rescue + assessment; }
  std::uint32_t count(Mission m) const noexcept {
    switch (m) {
      case Mission::Connectivity: return connectivity;
      case Mission::Delivery: return delivery;
      case Mission::Rescue: return rescue;
      case Mission::Assessment: return assessment;
    }
    return 0;
  }
  /// Mission of the UAV with this id: ids are assigned cluster by cluster in kMissions order.
  Mission mission_of(NodeId id) const noexcept {
    std::uint32_t v = id.value;
    for (auto m : kMissions) {
      if (v < count(m)) return m;
      v -= count(m);
    }
    return Mission::Assessment;
  }
};

struct Geometry {
  Box area{{0.0, 0.0, 50.0}, {25000.0, 25000.0, 500.0}};
  std::vector<Vec3> base_stations;
  std::vector<Vec3> relief_camps;
  std::vector<Box> adversary_zones;
  std::array<Box, 4> deployment;  // operating region per mission, indexed by Mission
};

enum class QueueMode : std::uint8_t { Measured, Analytic };

struct NetworkConfig {
  radio::LinkBudgetParams radio;
  radio::NodeServiceProfile uav_service{0.010, 1000.0};
  radio::NodeServiceProfile station_service{0.001, 10000.0};
  double max_range_m = 10000.0;  // single-link reach; 0 = unlimited
  double backhaul_latency_s = 0.002;
  std::uint32_t vote_bits = 1024;
  std::uint32_t header_bits = 1024;
  QueueMode queue_mode = QueueMode::Measured;
};

struct Workload {
  double tx_rate_per_uav = 1.0;  // Poisson arrivals per UAV, tx/s
  std::uint32_t payload_bits = kDefaultPayloadBits;
};

/// Ranges the per-UAV election metrics are drawn from.
struct ProfileRanges {
  double stake_min = 1.0;
  double stake_max = 100.0;
  double fuel_min = 0.5;
  double fuel_max = 1.0;
  double capability_min = 0.3;
  double capability_max = 1.0;
  double initial_history = 0.5;
};


enum class ByzantineStrategy : std::uint8_t { Equivocate, InvalidBlock, Silent };

inline constexpr std::string_view to_string(ByzantineStrategy s) noexcept {
  switch (s) {
    case ByzantineStrategy::Equivocate: return "equivocate";
    case ByzantineStrategy::InvalidBlock: return "invalid_block";
    case ByzantineStrategy::Silent: return "silent";
  }
  return "unknown";
}

struct DdosAttack {
  NodeId target;
  double start_s = 0.0;
  double duration_s = 0.0;
  double flood_rate = 0.0;  // junk messages per second
};

struct SpoofAttack {
  NodeId target;
  Vec3 offset;
  double start_s = 0.0;
  double duration_s = 0.0;
};

struct FaultPlan {
  std::map<NodeId, ByzantineStrategy> byzantine;
  std::vector<NodeId> crashed;  // never start, never answer
  std::vector<DdosAttack> ddos;
  std::vector<SpoofAttack> spoof;
  double drop_prob = 0.0;
  double delay_jitter_s = 0.0;  // extra uniform delay per message
  bool allow_unsafe = false;    // skip the byzantine <= f check

  bool empty() const noexcept {
    return byzantine.empty() && crashed.empty() && ddos.empty() && spoof.empty() && drop_prob == 0.0 &&
           delay_jitter_s == 0.0;
  }
};

/// Attack section of a scenario: nothing, the canonical resilience plan
/// (resolved per seed against the initial validator set), or an explicit plan.
struct AttackSpec {
  enum class Mode : std::uint8_t { None, Canonical, Explicit };
  Mode mode = Mode::None;
  FaultPlan plan;
};

struct Scenario {
  std::string name = "hurricane";
  Geometry geometry;
  FleetCounts fleet;
  NetworkConfig network;
  mobility::MobilityConfig mobility;
  consensus::ConsensusConfig consensus;
  Workload workload;
  ProfileRanges profiles;
  AttackSpec attacks;
  double duration_s = 60.0;
};

class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { InvalidValue, UnknownKey, Parse, UnsafeFaults, InvalidOverride };
  ScenarioError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::string_view to_string(ScenarioError::Kind k) noexcept {
  switch (k) {
    case ScenarioError::Kind::InvalidValue: return "invalid_value";
    case ScenarioError::Kind::UnknownKey: return "unknown_key";
    case ScenarioError::Kind::Parse: return "parse_error";
    case ScenarioError::Kind::UnsafeFaults: return "unsafe_faults";
    case ScenarioError::Kind::InvalidOverride: return "invalid_override";
  }
  return "unknown";
}

inline void validate(const Scenario& s) {
  auto fail = [](const std::string& what) { throw ScenarioError(ScenarioError::Kind::InvalidValue, what); };
  const auto fleet = s.fleet.total();
  if (fleet != 0 && fleet < 4) fail("a non-empty fleet needs at least 4 UAVs");
  if (!s.mobility.valid()) fail("mobility parameters out of range");
  if (!s.network.radio.valid()) fail("radio parameters out of range");
  if (!(s.network.uav_service.service_rate_msgs_per_s > 0) || !(s.network.station_service.service_rate_msgs_per_s > 0) ||
      s.network.uav_service.proc_latency_s < 0 || s.network.station_service.proc_latency_s < 0) {
    fail("service profiles need positive rates and non-negative processing time");
  }
  if (s.network.max_range_m < 0 || s.network.backhaul_latency_s < 0) fail("negative range or backhaul latency");
  if (!(s.consensus.timeout_s > 0)) fail("timeout must be positive");
  if (fleet != 0 && s.consensus.protocol != consensus::ProtocolKind::PurePbft &&
      (s.consensus.validator_count < 4 || s.consensus.validator_count > fleet)) {
    fail("validator_count must lie in [4, fleet size]");
  }
  if (s.consensus.max_block_txs == 0) fail("max_block_txs must be positive");
  if (!(s.consensus.history_decay >= 0 && s.consensus.history_decay <= 1)) fail("history_decay must lie in [0, 1]");
  if (!(s.workload.tx_rate_per_uav >= 0) || s.workload.payload_bits == 0) fail("workload out of range");
  if (!(s.duration_s >= 0) || !std::isfinite(s.duration_s)) fail("duration must be finite and non-negative");
  for (const auto& box : s.geometry.deployment) {
    if (!box.non_degenerate()) fail("degenerate deployment region");
  }
  const auto& p = s.profiles;
  if (!(p.stake_min > 0 && p.stake_max >= p.stake_min && p.fuel_min >= 0 && p.fuel_max >= p.fuel_min &&
        p.capability_min >= 0 && p.capability_max >= p.capability_min && p.fuel_max <= 1 && p.capability_max <= 1 &&
        p.initial_history >= 0 && p.initial_history <= 1)) {
    fail("profile ranges out of order");
  }
}

}  // namespace uavchain
