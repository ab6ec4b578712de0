#pragma once

// Hurricane scenario, metrics extraction, protocol comparison, exporters and
// replay.

#include "uavchain/format.hpp"
#include "uavchain/scenario.hpp"
#include "uavchain/simnet.hpp"
#include "uavchain/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace uavchain {

using json = nlohmann::json;

class HarnessError : public std::runtime_error {
 public:
  enum class Kind { Io, Mismatch, BadSummary };
  HarnessError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::string_view to_string(HarnessError::Kind k) noexcept {
  switch (k) {
    case HarnessError::Kind::Io: return "io_error";
    case HarnessError::Kind::Mismatch: return "mismatch";
    case HarnessError::Kind::BadSummary: return "bad_summary";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

inline consensus::ProtocolKind parse_protocol(std::string_view name) {
  if (name == "hybrid") return consensus::ProtocolKind::HybridDposPbft;
  if (name == "dpos") return consensus::ProtocolKind::PureDpos;
  if (name == "pbft") return consensus::ProtocolKind::PurePbft;
  throw ScenarioError(ScenarioError::Kind::InvalidValue, "unknown protocol '" + std::string(name) + "'");
}

inline Mission parse_mission(std::string_view name) {
  for (auto m : kMissions) {
    if (consensus::to_string(m) == name) return m;
  }
  throw ScenarioError(ScenarioError::Kind::InvalidValue, "unknown mission '" + std::string(name) + "'");
}

inline ByzantineStrategy parse_strategy(std::string_view name) {
  for (auto s : {ByzantineStrategy::Equivocate, ByzantineStrategy::InvalidBlock, ByzantineStrategy::Silent}) {
    if (to_string(s) == name) return s;
  }
  throw ScenarioError(ScenarioError::Kind::InvalidValue, "unknown byzantine strategy '" + std::string(name) + "'");
}

inline constexpr std::array<consensus::ProtocolKind, 3> kProtocols{
    consensus::ProtocolKind::HybridDposPbft, consensus::ProtocolKind::PureDpos, consensus::ProtocolKind::PurePbft};

// ---------------------------------------------------------------------------
// Hurricane scenario
// ---------------------------------------------------------------------------

/// Base stations on a rows x cols grid starting at `origin`.
struct StationGrid {
  Vec3 origin{500.0, 500.0, 30.0};
  double spacing_m = 2000.0;
  std::uint32_t rows = 4;
  std::uint32_t cols = 4;

  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) out.push_back(origin + Vec3{c * spacing_m, r * spacing_m, 0.0});
    }
    return out;
  }
};

/// Default city layout. The station grid is compact and sits in the south-west
/// so that a 4 km rescue sector fits in the north-east corner more than 20 km
/// from every station, while connectivity and delivery sectors stay within
/// 10 km of the nearest one.
inline Geometry hurricane_geometry(const StationGrid& grid = {}) {
  Geometry g;
  g.area = {{0.0, 0.0, 50.0}, {25000.0, 25000.0, 500.0}};
  g.base_stations = grid.positions();
  g.relief_camps = {{0.0, 0.0, 0.0}, {25000.0, 0.0, 0.0}, {0.0, 25000.0, 0.0}, {25000.0, 25000.0, 0.0}};
  g.adversary_zones = {{{0.0, 0.0, 50.0}, {1000.0, 25000.0, 500.0}}, {{24000.0, 0.0, 50.0}, {25000.0, 25000.0, 500.0}}};
  g.deployment[static_cast<std::size_t>(Mission::Connectivity)] = {{0.0, 0.0, 100.0}, {10000.0, 10000.0, 300.0}};
  g.deployment[static_cast<std::size_t>(Mission::Delivery)] = {{0.0, 0.0, 100.0}, {13000.0, 13000.0, 300.0}};
  g.deployment[static_cast<std::size_t>(Mission::Rescue)] = {{21000.0, 21000.0, 100.0}, {25000.0, 25000.0, 300.0}};
  g.deployment[static_cast<std::size_t>(Mission::Assessment)] = {{13000.0, 0.0, 100.0}, {25000.0, 12000.0, 300.0}};
  return g;
}

/// Smallest distance from any point of `box` (horizontal extent) to `p`.
inline double min_horizontal_distance(const Box& box, const Vec3& p) {
  const double dx = std::max({box.lo.x - p.x, 0.0, p.x - box.hi.x});
  const double dy = std::max({box.lo.y - p.y, 0.0, p.y - box.hi.y});
  return std::hypot(dx, dy);
}

/// Largest horizontal distance from any point of `box` to its nearest station.
/// Evaluated on a fine grid, which is exact for the corner-dominated layouts used here
/// up to the grid step.
inline double max_distance_to_nearest_station(const Box& box, const std::vector<Vec3>& stations, int samples = 101) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      const double x = box.lo.x + (box.hi.x - box.lo.x) * i / (samples - 1);
      const double y = box.lo.y + (box.hi.y - box.lo.y) * j / (samples - 1);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : stations) best = std::min(best, std::hypot(x - s.x, y - s.y));
      worst = std::max(worst, best);
    }
  }
  return worst;
}

inline void apply_scenario_json(Scenario& s, const json& j, ScenarioError::Kind unknown_kind);

inline Scenario default_hurricane() {
  Scenario s;
  s.name = "hurricane";
  s.geometry = hurricane_geometry();
  s.mobility.area = s.geometry.area;
  return s;
}

/// Section IV hurricane scenario with `overrides` (a partial scenario object)
/// applied on top. Unknown or ill-typed override keys raise InvalidOverride.
inline Scenario build_hurricane_scenario(const json& overrides = json::object()) {
  Scenario s = default_hurricane();
  if (!overrides.is_null() && !overrides.empty()) apply_scenario_json(s, overrides, ScenarioError::Kind::InvalidOverride);
  return s;
}

/// The hurricane city with a fleet one fifth the size (10/20/5/5) and the same
/// 20 validators: small enough that full PBFT over every UAV runs in seconds.
inline Scenario build_desk_scenario(const json& overrides = json::object()) {
  Scenario s = default_hurricane();
  s.name = "desk";
  s.fleet = {10, 20, 5, 5};
  if (!overrides.is_null() && !overrides.empty()) apply_scenario_json(s, overrides, ScenarioError::Kind::InvalidOverride);
  return s;
}

// ---------------------------------------------------------------------------
// Scenario JSON
// ---------------------------------------------------------------------------

namespace detail {

/// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path, ScenarioError::Kind unknown_kind)
      : j_(j), path_(std::move(path)), unknown_kind_(unknown_kind) {
    if (!j_.is_object()) throw ScenarioError(unknown_kind_, where() + " must be an object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    seen_.insert(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ScenarioError(unknown_kind_, child(key) + " must be a number");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ScenarioError(unknown_kind_, child(key) + ": " + e.what());
    }
    return true;
  }

  const json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "scenario" : path_; }
  ScenarioError::Kind kind() const { return unknown_kind_; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ScenarioError(unknown_kind_, "unknown key '" + child(k) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  ScenarioError::Kind unknown_kind_;
  std::set<std::string> seen_;
};

inline Vec3 read_vec3(const json& j, const std::string& path, ScenarioError::Kind kind) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw ScenarioError(kind, path + " must be [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Box read_box(const json& j, const std::string& path, ScenarioError::Kind kind) {
  Section sec(j, path, kind);
  Box b;
  const json* lo = sec.sub("lo");
  const json* hi = sec.sub("hi");
  if (!lo || !hi) throw ScenarioError(kind, path + " needs lo and hi");
  b.lo = read_vec3(*lo, path + ".lo", kind);
  b.hi = read_vec3(*hi, path + ".hi", kind);
  sec.finish();
  return b;
}

inline json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json box_json(const Box& b) { return {{"lo", vec3_json(b.lo)}, {"hi", vec3_json(b.hi)}}; }

template <typename T, typename F>
std::vector<T> read_list(const json& j, const std::string& path, ScenarioError::Kind kind, F&& item) {
  if (!j.is_array()) throw ScenarioError(kind, path + " must be an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(item(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <typename E, typename F>
void read_enum(Section& sec, const char* key, E& out, F&& parse) {
  std::string name;
  if (!sec.get(key, name)) return;
  try {
    out = parse(name);
  } catch (const ScenarioError& e) {
    throw ScenarioError(sec.kind(), sec.child(key) + ": " + e.what());
  }
}

inline void read_geometry(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "geometry", kind);
  if (const json* a = sec.sub("area")) {
    s.geometry.area = read_box(*a, "geometry.area", kind);
    s.mobility.area = s.geometry.area;
  }
  if (const json* g = sec.sub("base_station_grid")) {
    Section gs(*g, "geometry.base_station_grid", kind);
    StationGrid grid;
    if (const json* o = gs.sub("origin")) grid.origin = read_vec3(*o, "geometry.base_station_grid.origin", kind);
    gs.get("spacing_m", grid.spacing_m);
    gs.get("rows", grid.rows);
    gs.get("cols", grid.cols);
    gs.finish();
    s.geometry.base_stations = grid.positions();
  }
  auto vec_item = [kind](const json& v, const std::string& p) { return read_vec3(v, p, kind); };
  auto box_item = [kind](const json& v, const std::string& p) { return read_box(v, p, kind); };
  if (const json* b = sec.sub("base_stations")) s.geometry.base_stations = read_list<Vec3>(*b, "geometry.base_stations", kind, vec_item);
  if (const json* r = sec.sub("relief_camps")) s.geometry.relief_camps = read_list<Vec3>(*r, "geometry.relief_camps", kind, vec_item);
  if (const json* z = sec.sub("adversary_zones")) {
    s.geometry.adversary_zones = read_list<Box>(*z, "geometry.adversary_zones", kind, box_item);
  }
  if (const json* d = sec.sub("deployment")) {
    Section ds(*d, "geometry.deployment", kind);
    for (auto m : kMissions) {
      const std::string name(consensus::to_string(m));
      if (const json* box = ds.sub(name.c_str())) {
        s.geometry.deployment[static_cast<std::size_t>(m)] = read_box(*box, "geometry.deployment." + name, kind);
      }
    }
    ds.finish();
  }
  sec.finish();
}

inline void read_fleet(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "fleet", kind);
  sec.get("connectivity", s.fleet.connectivity);
  sec.get("delivery", s.fleet.delivery);
  sec.get("rescue", s.fleet.rescue);
  sec.get("assessment", s.fleet.assessment);
  sec.finish();
}

inline void read_radio(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "radio", kind);
  auto& n = s.network;
  sec.get("tx_power_w", n.radio.tx_power_w);
  sec.get("tx_gain_dbi", n.radio.tx_gain_dbi);
  sec.get("rx_gain_dbi", n.radio.rx_gain_dbi);
  sec.get("carrier_hz", n.radio.carrier_hz);
  sec.get("noise_power_w", n.radio.noise_power_w);
  sec.get("bandwidth_hz", n.radio.bandwidth_hz);
  sec.get("uav_proc_latency_s", n.uav_service.proc_latency_s);
  sec.get("uav_service_rate", n.uav_service.service_rate_msgs_per_s);
  sec.get("station_proc_latency_s", n.station_service.proc_latency_s);
  sec.get("station_service_rate", n.station_service.service_rate_msgs_per_s);
  sec.get("max_range_m", n.max_range_m);
  sec.get("backhaul_latency_s", n.backhaul_latency_s);
  sec.get("vote_bits", n.vote_bits);
  sec.get("header_bits", n.header_bits);
  read_enum(sec, "queue_mode", n.queue_mode, [](const std::string& v) {
    if (v == "measured") return QueueMode::Measured;
    if (v == "analytic") return QueueMode::Analytic;
    throw ScenarioError(ScenarioError::Kind::InvalidValue, "queue_mode must be measured or analytic");
  });
  sec.finish();
}

inline void read_mobility(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "mobility", kind);
  sec.get("v_max", s.mobility.v_max);
  sec.get("a_max", s.mobility.a_max);
  sec.get("dt", s.mobility.dt);
  sec.get("waypoint_arrival_radius", s.mobility.waypoint_arrival_radius);
  sec.get("limit_motion", s.mobility.limit_motion);
  sec.get("reflect_at_bounds", s.mobility.reflect_at_bounds);
  sec.finish();
}

inline void read_consensus(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "consensus", kind);
  auto& c = s.consensus;
  read_enum(sec, "protocol", c.protocol, [](const std::string& v) { return parse_protocol(v); });
  read_enum(sec, "policy", c.policy, [](const std::string& v) {
    if (v == "stake_weighted") return consensus::ProposerPolicy::StakeWeighted;
    if (v == "round_robin") return consensus::ProposerPolicy::RoundRobin;
    throw ScenarioError(ScenarioError::Kind::InvalidValue, "policy must be stake_weighted or round_robin");
  });
  sec.get("validator_count", c.validator_count);
  if (const json* w = sec.sub("weights")) {
    Section ws(*w, "consensus.weights", kind);
    ws.get("stake", c.weights.w1);
    ws.get("fuel", c.weights.w2);
    ws.get("capability", c.weights.w3);
    ws.get("history", c.weights.w4);
    ws.finish();
  }
  sec.get("timeout_s", c.timeout_s);
  sec.get("optimistic_fast_path", c.optimistic_fast_path);
  sec.get("max_block_txs", c.max_block_txs);
  sec.get("reelection_interval", c.reelection_interval);
  sec.get("history_decay", c.history_decay);
  sec.get("proposer_seed", c.proposer_seed);
  if (const json* p = sec.sub("profiles")) {
    Section ps(*p, "consensus.profiles", kind);
    auto& r = s.profiles;
    ps.get("stake_min", r.stake_min);
    ps.get("stake_max", r.stake_max);
    ps.get("fuel_min", r.fuel_min);
    ps.get("fuel_max", r.fuel_max);
    ps.get("capability_min", r.capability_min);
    ps.get("capability_max", r.capability_max);
    ps.get("initial_history", r.initial_history);
    ps.finish();
  }
  sec.finish();
}

inline void read_workload(Scenario& s, const json& j, ScenarioError::Kind kind) {
  Section sec(j, "workload", kind);
  sec.get("tx_rate_per_uav", s.workload.tx_rate_per_uav);
  sec.get("payload_bits", s.workload.payload_bits);
  sec.finish();
}

}  // namespace detail

inline json fault_plan_json(const FaultPlan& f) {
  json byz = json::array();
  for (const auto& [id, strat] : f.byzantine) byz.push_back({{"node", id.value}, {"strategy", to_string(strat)}});
  json crashed = json::array();
  for (auto id : f.crashed) crashed.push_back(id.value);
  json ddos = json::array();
  for (const auto& d : f.ddos) {
    ddos.push_back({{"target", d.target.value}, {"start_s", d.start_s}, {"duration_s", d.duration_s}, {"flood_rate", d.flood_rate}});
  }
  json spoof = json::array();
  for (const auto& sp : f.spoof) {
    spoof.push_back({{"target", sp.target.value},
                     {"offset", detail::vec3_json(sp.offset)},
                     {"start_s", sp.start_s},
                     {"duration_s", sp.duration_s}});
  }
  return {{"byzantine", byz},       {"crashed", crashed},       {"ddos", ddos},
          {"spoof", spoof},         {"drop_prob", f.drop_prob}, {"delay_jitter_s", f.delay_jitter_s},
          {"allow_unsafe", f.allow_unsafe}};
}

/// Reads the explicit-plan keys of an attack object into `f`; `sec` tracks
/// which keys were consumed.
inline void read_fault_plan(detail::Section& sec, FaultPlan& f, const std::string& path) {
  const auto kind = sec.kind();
  if (const json* b = sec.sub("byzantine")) {
    if (!b->is_array()) throw ScenarioError(kind, path + ".byzantine must be an array");
    for (std::size_t i = 0; i < b->size(); ++i) {
      detail::Section e((*b)[i], path + ".byzantine[" + std::to_string(i) + "]", kind);
      std::uint32_t node = 0;
      ByzantineStrategy strat = ByzantineStrategy::Silent;
      e.get("node", node);
      detail::read_enum(e, "strategy", strat, [](const std::string& v) { return parse_strategy(v); });
      e.finish();
      f.byzantine[NodeId{node}] = strat;
    }
  }
  if (const json* c = sec.sub("crashed")) {
    if (!c->is_array()) throw ScenarioError(kind, path + ".crashed must be an array");
    for (const auto& v : *c) {
      if (!v.is_number_unsigned()) throw ScenarioError(kind, path + ".crashed entries must be node ids");
      f.crashed.push_back(NodeId{v.get<std::uint32_t>()});
    }
  }
  if (const json* d = sec.sub("ddos")) {
    if (!d->is_array()) throw ScenarioError(kind, path + ".ddos must be an array");
    for (std::size_t i = 0; i < d->size(); ++i) {
      detail::Section e((*d)[i], path + ".ddos[" + std::to_string(i) + "]", kind);
      DdosAttack a;
      e.get("target", a.target.value);
      e.get("start_s", a.start_s);
      e.get("duration_s", a.duration_s);
      e.get("flood_rate", a.flood_rate);
      e.finish();
      f.ddos.push_back(a);
    }
  }
  if (const json* sp = sec.sub("spoof")) {
    if (!sp->is_array()) throw ScenarioError(kind, path + ".spoof must be an array");
    for (std::size_t i = 0; i < sp->size(); ++i) {
      const std::string p = path + ".spoof[" + std::to_string(i) + "]";
      detail::Section e((*sp)[i], p, kind);
      SpoofAttack a;
      e.get("target", a.target.value);
      if (const json* o = e.sub("offset")) a.offset = detail::read_vec3(*o, p + ".offset", kind);
      e.get("start_s", a.start_s);
      e.get("duration_s", a.duration_s);
      e.finish();
      f.spoof.push_back(a);
    }
  }
  sec.get("drop_prob", f.drop_prob);
  sec.get("delay_jitter_s", f.delay_jitter_s);
  sec.get("allow_unsafe", f.allow_unsafe);
}

inline FaultPlan fault_plan_from_json(const json& j, const std::string& path = "faults") {
  detail::Section sec(j, path, ScenarioError::Kind::UnknownKey);
  FaultPlan f;
  read_fault_plan(sec, f, path);
  sec.finish();
  return f;
}

inline AttackSpec read_attacks(const json& j, ScenarioError::Kind kind) {
  detail::Section sec(j, "attacks", kind);
  AttackSpec a;
  std::string mode = "explicit";
  const bool has_mode = sec.get("mode", mode);
  read_fault_plan(sec, a.plan, "attacks");
  sec.finish();
  if (mode == "none") {
    a.mode = AttackSpec::Mode::None;
  } else if (mode == "canonical") {
    a.mode = AttackSpec::Mode::Canonical;
  } else if (mode == "explicit") {
    a.mode = has_mode || !a.plan.empty() ? AttackSpec::Mode::Explicit : AttackSpec::Mode::None;
  } else {
    throw ScenarioError(kind, "attacks.mode must be none, canonical or explicit");
  }
  return a;
}

inline std::string_view to_string(AttackSpec::Mode m) noexcept {
  switch (m) {
    case AttackSpec::Mode::None: return "none";
    case AttackSpec::Mode::Canonical: return "canonical";
    case AttackSpec::Mode::Explicit: return "explicit";
  }
  return "none";
}

inline json attacks_json(const AttackSpec& a) {
  json j = fault_plan_json(a.plan);
  j["mode"] = to_string(a.mode);
  return j;
}

/// Applies a (possibly partial) scenario object on top of `s`.
inline void apply_scenario_json(Scenario& s, const json& j, ScenarioError::Kind unknown_kind) {
  detail::Section sec(j, "", unknown_kind);
  sec.get("name", s.name);
  sec.get("duration_s", s.duration_s);
  if (const json* g = sec.sub("geometry")) detail::read_geometry(s, *g, unknown_kind);
  if (const json* f = sec.sub("fleet")) detail::read_fleet(s, *f, unknown_kind);
  if (const json* r = sec.sub("radio")) detail::read_radio(s, *r, unknown_kind);
  if (const json* m = sec.sub("mobility")) detail::read_mobility(s, *m, unknown_kind);
  if (const json* c = sec.sub("consensus")) detail::read_consensus(s, *c, unknown_kind);
  if (const json* w = sec.sub("workload")) detail::read_workload(s, *w, unknown_kind);
  if (const json* a = sec.sub("attacks")) s.attacks = read_attacks(*a, unknown_kind);
  sec.finish();
  for (const auto& bs : s.geometry.base_stations) {
    const auto& a = s.geometry.area;
    if (bs.x < a.lo.x || bs.x > a.hi.x || bs.y < a.lo.y || bs.y > a.hi.y) {
      throw ScenarioError(unknown_kind == ScenarioError::Kind::InvalidOverride ? unknown_kind
                                                                              : ScenarioError::Kind::InvalidValue,
                          "base station outside the area");
    }
  }
  validate(s);
}

inline json scenario_to_json(const Scenario& s) {
  json deployment = json::object();
  for (auto m : kMissions) deployment[std::string(consensus::to_string(m))] = detail::box_json(s.geometry.deployment[static_cast<std::size_t>(m)]);
  json stations = json::array();
  for (const auto& b : s.geometry.base_stations) stations.push_back(detail::vec3_json(b));
  json camps = json::array();
  for (const auto& c : s.geometry.relief_camps) camps.push_back(detail::vec3_json(c));
  json zones = json::array();
  for (const auto& z : s.geometry.adversary_zones) zones.push_back(detail::box_json(z));
  const auto& n = s.network;
  const auto& c = s.consensus;
  const auto& p = s.profiles;
  return {
      {"name", s.name},
      {"duration_s", s.duration_s},
      {"geometry",
       {{"area", detail::box_json(s.geometry.area)},
        {"base_stations", stations},
        {"relief_camps", camps},
        {"adversary_zones", zones},
        {"deployment", deployment}}},
      {"fleet",
       {{"connectivity", s.fleet.connectivity},
        {"delivery", s.fleet.delivery},
        {"rescue", s.fleet.rescue},
        {"assessment", s.fleet.assessment}}},
      {"radio",
       {{"tx_power_w", n.radio.tx_power_w},
        {"tx_gain_dbi", n.radio.tx_gain_dbi},
        {"rx_gain_dbi", n.radio.rx_gain_dbi},
        {"carrier_hz", n.radio.carrier_hz},
        {"noise_power_w", n.radio.noise_power_w},
        {"bandwidth_hz", n.radio.bandwidth_hz},
        {"uav_proc_latency_s", n.uav_service.proc_latency_s},
        {"uav_service_rate", n.uav_service.service_rate_msgs_per_s},
        {"station_proc_latency_s", n.station_service.proc_latency_s},
        {"station_service_rate", n.station_service.service_rate_msgs_per_s},
        {"max_range_m", n.max_range_m},
        {"backhaul_latency_s", n.backhaul_latency_s},
        {"vote_bits", n.vote_bits},
        {"header_bits", n.header_bits},
        {"queue_mode", n.queue_mode == QueueMode::Measured ? "measured" : "analytic"}}},
      {"mobility",
       {{"v_max", s.mobility.v_max},
        {"a_max", s.mobility.a_max},
        {"dt", s.mobility.dt},
        {"waypoint_arrival_radius", s.mobility.waypoint_arrival_radius},
        {"limit_motion", s.mobility.limit_motion},
        {"reflect_at_bounds", s.mobility.reflect_at_bounds}}},
      {"consensus",
       {{"protocol", consensus::to_string(c.protocol)},
        {"policy", consensus::to_string(c.policy)},
        {"validator_count", c.validator_count},
        {"weights", {{"stake", c.weights.w1}, {"fuel", c.weights.w2}, {"capability", c.weights.w3}, {"history", c.weights.w4}}},
        {"timeout_s", c.timeout_s},
        {"optimistic_fast_path", c.optimistic_fast_path},
        {"max_block_txs", c.max_block_txs},
        {"reelection_interval", c.reelection_interval},
        {"history_decay", c.history_decay},
        {"proposer_seed", c.proposer_seed},
        {"profiles",
         {{"stake_min", p.stake_min},
          {"stake_max", p.stake_max},
          {"fuel_min", p.fuel_min},
          {"fuel_max", p.fuel_max},
          {"capability_min", p.capability_min},
          {"capability_max", p.capability_max},
          {"initial_history", p.initial_history}}}}},
      {"workload", {{"tx_rate_per_uav", s.workload.tx_rate_per_uav}, {"payload_bits", s.workload.payload_bits}}},
      {"attacks", attacks_json(s.attacks)},
  };
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError(HarnessError::Kind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(ScenarioError::Kind::Parse, path.string() + ": " + e.what());
  }
}

/// Loads a scenario file. Keys not given keep the hurricane defaults.
inline Scenario load_scenario(const std::filesystem::path& path) {
  Scenario s = default_hurricane();
  apply_scenario_json(s, read_json_file(path), ScenarioError::Kind::UnknownKey);
  return s;
}

// ---------------------------------------------------------------------------
// Attack plans
// ---------------------------------------------------------------------------

inline consensus::ValidatorSet initial_validators(const Scenario& s, consensus::ProtocolKind protocol, std::uint64_t seed) {
  consensus::ElectionContext ctx;
  ctx.profiles = generate_profiles(s, seed);
  ctx.config = s.consensus;
  ctx.config.protocol = protocol;
  return ctx.elect(ctx.profiles);
}

/// Fixed-intensity plan for the resilience experiment: a flood at twice the
/// service rate on the two top-ranked validators for the middle fifth of the
/// run, two equivocating validators (fewer if f is smaller), and a 500 m
/// position spoof on five rescue UAVs for the whole run.
inline FaultPlan canonical_attack_plan(const Scenario& s, consensus::ProtocolKind protocol, std::uint64_t seed) {
  const auto set = initial_validators(s, protocol, seed);
  FaultPlan f;
  const double flood = 2.0 * s.network.uav_service.service_rate_msgs_per_s;
  for (std::size_t i = 0; i < 2 && i < set.size(); ++i) {
    f.ddos.push_back({set.members[i].node, 0.4 * s.duration_s, 0.2 * s.duration_s, flood});
  }
  const auto byz = std::min<std::size_t>(2, consensus::max_faulty(set.size()));
  for (std::size_t i = 0; i < byz && 2 + i < set.size(); ++i) {
    f.byzantine[set.members[2 + i].node] = ByzantineStrategy::Equivocate;
  }
  const std::uint32_t first_rescue = s.fleet.connectivity + s.fleet.delivery;
  for (std::uint32_t k = 0; k < 5 && k < s.fleet.rescue; ++k) {
    f.spoof.push_back({NodeId{first_rescue + k}, Vec3{500.0, 0.0, 0.0}, 0.0, s.duration_s});
  }
  return f;
}

inline FaultPlan resolve_faults(const Scenario& s, consensus::ProtocolKind protocol, std::uint64_t seed) {
  switch (s.attacks.mode) {
    case AttackSpec::Mode::None: return {};
    case AttackSpec::Mode::Canonical: return canonical_attack_plan(s, protocol, seed);
    case AttackSpec::Mode::Explicit: return s.attacks.plan;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsReport {
  consensus::ProtocolKind protocol = consensus::ProtocolKind::HybridDposPbft;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::uint64_t offered_tx = 0;
  std::uint64_t committed_tx = 0;
  std::uint64_t blocks = 0;
  double throughput_tps = 0.0;
  stats::Summary latency;
  std::array<stats::Summary, 4> group;  // indexed by Mission
  std::uint64_t view_changes = 0;
  std::uint64_t safety_violations = 0;
  Digest trace_hash;

  // Raw per-transaction samples, in transaction id order.
  std::vector<std::uint64_t> tx_ids;
  std::vector<Mission> tx_missions;
  std::vector<double> latencies;

  bool no_data() const noexcept { return latency.no_data(); }
  std::vector<double> group_samples(Mission m) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < latencies.size(); ++i) {
      if (tx_missions[i] == m) out.push_back(latencies[i]);
    }
    return out;
  }
};

/// Throughput and per-transaction commit latency (first honest commit minus
/// arrival) from a finished trace. Blocks committed after the run window do
/// not exist in the trace, so every counted commit lies inside it.
inline MetricsReport compute_metrics(const EventTrace& trace) {
  MetricsReport r;
  r.protocol = trace.protocol;
  r.seed = trace.seed;
  r.duration_s = trace.duration_s;
  r.offered_tx = trace.txs.size();
  r.blocks = trace.blocks.size();
  r.view_changes = trace.counters.view_changes;
  r.safety_violations = trace.counters.safety_violations;
  r.trace_hash = trace.hash;

  std::unordered_map<std::uint64_t, double> commit_at;
  for (const auto& b : trace.blocks) {
    for (auto id : b.tx_ids) commit_at.emplace(id, b.time);
  }
  for (const auto& tx : trace.txs) {
    auto it = commit_at.find(tx.tx_id);
    if (it == commit_at.end()) continue;
    r.tx_ids.push_back(tx.tx_id);
    r.tx_missions.push_back(tx.origin.value < trace.nodes.size() ? trace.nodes[tx.origin.value].mission : Mission::Connectivity);
    r.latencies.push_back(it->second - tx.created_at);
  }
  r.committed_tx = r.latencies.size();
  r.throughput_tps = r.duration_s > 0 ? static_cast<double>(r.committed_tx) / r.duration_s : 0.0;
  r.latency = stats::summarize(r.latencies);
  for (auto m : kMissions) r.group[static_cast<std::size_t>(m)] = stats::summarize(r.group_samples(m));
  return r;
}

/// Relative change of an attacked run against its same-seed baseline, in
/// percent. Positive means worse: less throughput, more latency.
struct Degradation {
  double throughput_pct = 0.0;
  double median_latency_pct = 0.0;
};

inline Degradation degradation(const MetricsReport& baseline, const MetricsReport& attacked) {
  if (baseline.seed != attacked.seed || baseline.protocol != attacked.protocol) {
    throw HarnessError(HarnessError::Kind::Mismatch, "degradation needs a same-seed, same-protocol baseline");
  }
  Degradation d;
  d.throughput_pct = baseline.throughput_tps > 0
                         ? 100.0 * (baseline.throughput_tps - attacked.throughput_tps) / baseline.throughput_tps
                         : 0.0;
  d.median_latency_pct = baseline.latency.median > 0
                             ? 100.0 * (attacked.latency.median - baseline.latency.median) / baseline.latency.median
                             : std::numeric_limits<double>::quiet_NaN();
  return d;
}

inline constexpr std::array<Mission, 3> kAnovaGroups{Mission::Connectivity, Mission::Delivery, Mission::Rescue};

/// ANOVA over connectivity, delivery and rescue latencies; nullopt if a group
/// is too small or every group is constant.
inline std::optional<stats::AnovaResult> group_anova(const MetricsReport& r) {
  std::vector<std::vector<double>> groups;
  for (auto m : kAnovaGroups) groups.push_back(r.group_samples(m));
  try {
    return stats::anova_oneway(groups);
  } catch (const stats::AnovaError&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct Experiment {
  MetricsReport report;
  EventTrace trace;
  FaultPlan faults;
};

inline Experiment run_experiment(const Scenario& scenario, consensus::ProtocolKind protocol, const FaultPlan& faults,
                                 std::uint64_t seed, RunOptions options = {}) {
  Scenario s = scenario;
  s.consensus.protocol = protocol;
  auto result = run(s, faults, seed, s.duration_s, options);
  Experiment e;
  e.report = compute_metrics(result.trace);
  e.trace = std::move(result.trace);
  e.faults = faults;
  return e;
}

struct ComparisonRow {
  consensus::ProtocolKind protocol;
  std::uint64_t seed;
  MetricsReport report;
  FaultPlan faults;
};

/// Runs every protocol on every seed; rows sorted by protocol, then seed.
inline std::vector<ComparisonRow> compare_protocols(const Scenario& scenario, const std::vector<std::uint64_t>& seeds) {
  std::vector<ComparisonRow> rows;
  for (auto protocol : kProtocols) {
    for (auto seed : seeds) {
      const auto faults = resolve_faults(scenario, protocol, seed);
      auto e = run_experiment(scenario, protocol, faults, seed);
      rows.push_back({protocol, seed, std::move(e.report), faults});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.protocol != b.protocol ? a.protocol < b.protocol : a.seed < b.seed;
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

inline json number_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline double number_from_json(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline json summary_stats_json(const stats::Summary& s) {
  return {{"count", s.count},         {"mean", number_json(s.mean)}, {"median", number_json(s.median)},
          {"p25", number_json(s.p25)}, {"p75", number_json(s.p75)},   {"p95", number_json(s.p95)},
          {"p99", number_json(s.p99)}, {"min", number_json(s.min)},   {"max", number_json(s.max)}};
}

inline stats::Summary summary_stats_from_json(const json& j) {
  stats::Summary s;
  s.count = j.at("count").get<std::size_t>();
  s.mean = number_from_json(j.at("mean"));
  s.median = number_from_json(j.at("median"));
  s.p25 = number_from_json(j.at("p25"));
  s.p75 = number_from_json(j.at("p75"));
  s.p95 = number_from_json(j.at("p95"));
  s.p99 = number_from_json(j.at("p99"));
  s.min = number_from_json(j.at("min"));
  s.max = number_from_json(j.at("max"));
  return s;
}

inline json metrics_json(const MetricsReport& r) {
  json groups = json::object();
  for (auto m : kMissions) groups[std::string(consensus::to_string(m))] = summary_stats_json(r.group[static_cast<std::size_t>(m)]);
  return {{"protocol", consensus::to_string(r.protocol)},
          {"seed", r.seed},
          {"duration_s", r.duration_s},
          {"offered_tx", r.offered_tx},
          {"committed_tx", r.committed_tx},
          {"blocks", r.blocks},
          {"throughput_tps", r.throughput_tps},
          {"no_data", r.no_data()},
          {"latency", summary_stats_json(r.latency)},
          {"groups", groups},
          {"view_changes", r.view_changes},
          {"safety_violations", r.safety_violations},
          {"trace_hash", r.trace_hash.hex()}};
}

/// Inverse of metrics_json for the aggregate fields (raw samples live in groups.csv).
inline MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  r.protocol = parse_protocol(j.at("protocol").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.duration_s = j.at("duration_s").get<double>();
  r.offered_tx = j.at("offered_tx").get<std::uint64_t>();
  r.committed_tx = j.at("committed_tx").get<std::uint64_t>();
  r.blocks = j.at("blocks").get<std::uint64_t>();
  r.throughput_tps = j.at("throughput_tps").get<double>();
  r.latency = summary_stats_from_json(j.at("latency"));
  for (auto m : kMissions) {
    r.group[static_cast<std::size_t>(m)] = summary_stats_from_json(j.at("groups").at(std::string(consensus::to_string(m))));
  }
  r.view_changes = j.at("view_changes").get<std::uint64_t>();
  r.safety_violations = j.at("safety_violations").get<std::uint64_t>();
  r.trace_hash = Digest::from_hex(j.at("trace_hash").get<std::string>());
  return r;
}

inline const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> cols{
      "protocol",          "seed",        "duration_s",     "offered_tx",     "committed_tx",   "blocks",
      "throughput_tps",    "latency_mean_s", "latency_median_s", "latency_p25_s", "latency_p75_s", "latency_p95_s",
      "latency_p99_s",     "view_changes", "safety_violations", "no_data",     "trace_hash"};
  return cols;
}

inline const std::vector<std::string>& anova_csv_columns() {
  static const std::vector<std::string> cols{"protocol",   "seed",       "f_statistic",      "p_value",
                                             "df_between", "df_within",  "ss_between",       "ss_within",
                                             "mean_connectivity_s", "mean_delivery_s", "mean_rescue_s", "status"};
  return cols;
}

namespace detail {

template <typename T>
void csv_row(std::ostream& os, const std::vector<T>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << ',';
    os << cells[i];
  }
  os << '\n';
}

inline std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HarnessError(HarnessError::Kind::Io, "cannot write " + path.string());
  return out;
}

}  // namespace detail

struct RunRecord {
  MetricsReport report;
  FaultPlan faults;
};

/// Writes metrics.csv, groups.csv, anova.csv and summary.json into `out_dir`.
/// events.jsonl is streamed by the run itself.
inline void export_results(const std::filesystem::path& out_dir, const std::string& command, const Scenario& scenario,
                           const std::vector<RunRecord>& runs) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw HarnessError(HarnessError::Kind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  {
    auto out = detail::open_out(out_dir / "metrics.csv");
    detail::csv_row(out, metrics_csv_columns());
    for (const auto& run : runs) {
      const auto& r = run.report;
      detail::csv_row(out, std::vector<std::string>{
                               std::string(consensus::to_string(r.protocol)), std::to_string(r.seed), detail::num(r.duration_s),
                               std::to_string(r.offered_tx), std::to_string(r.committed_tx), std::to_string(r.blocks),
                               detail::num(r.throughput_tps), detail::num(r.latency.mean), detail::num(r.latency.median),
                               detail::num(r.latency.p25), detail::num(r.latency.p75), detail::num(r.latency.p95),
                               detail::num(r.latency.p99), std::to_string(r.view_changes), std::to_string(r.safety_violations),
                               r.no_data() ? "true" : "false", r.trace_hash.hex()});
    }
    if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed: " + (out_dir / "metrics.csv").string());
  }
  {
    auto out = detail::open_out(out_dir / "groups.csv");
    out << "protocol,seed,tx_id,mission,latency_s\n";
    for (const auto& run : runs) {
      const auto& r = run.report;
      const std::string proto(consensus::to_string(r.protocol));
      for (std::size_t i = 0; i < r.latencies.size(); ++i) {
        out << proto << ',' << r.seed << ',' << r.tx_ids[i] << ',' << consensus::to_string(r.tx_missions[i]) << ','
            << format_double(r.latencies[i]) << '\n';
      }
    }
    if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed: " + (out_dir / "groups.csv").string());
  }
  json runs_json = json::array();
  {
    auto out = detail::open_out(out_dir / "anova.csv");
    detail::csv_row(out, anova_csv_columns());
    for (const auto& run : runs) {
      const auto& r = run.report;
      const auto a = group_anova(r);
      std::vector<std::string> row{std::string(consensus::to_string(r.protocol)), std::to_string(r.seed)};
      if (a) {
        row.insert(row.end(), {detail::num(a->f_statistic), detail::num(a->p_value), std::to_string(a->df_between),
                               std::to_string(a->df_within), detail::num(a->ss_between), detail::num(a->ss_within),
                               detail::num(a->group_means[0]), detail::num(a->group_means[1]),
                               detail::num(a->group_means[2]), "ok"});
      } else {
        row.insert(row.end(), {"", "", "", "", "", "", "", "", "", "insufficient_data"});
      }
      detail::csv_row(out, row);
      json entry = {{"protocol", consensus::to_string(r.protocol)},
                    {"seed", r.seed},
                    {"duration_s", r.duration_s},
                    {"faults", fault_plan_json(run.faults)},
                    {"trace_hash", r.trace_hash.hex()},
                    {"metrics", metrics_json(r)}};
      if (a) {
        entry["anova"] = {{"f_statistic", number_json(a->f_statistic)},
                          {"p_value", number_json(a->p_value)},
                          {"df_between", a->df_between},
                          {"df_within", a->df_within},
                          {"group_means", {a->group_means[0], a->group_means[1], a->group_means[2]}}};
      } else {
        entry["anova"] = nullptr;
      }
      runs_json.push_back(std::move(entry));
    }
    if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed: " + (out_dir / "anova.csv").string());
  }
  {
    const json summary = {{"format", "uavchain-summary"},
                          {"version", 1},
                          {"command", command},
                          {"scenario", scenario_to_json(scenario)},
                          {"runs", runs_json}};
    auto out = detail::open_out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
    if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed: " + (out_dir / "summary.json").string());
  }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayCheck {
  consensus::ProtocolKind protocol;
  std::uint64_t seed = 0;
  Digest expected;
  Digest actual;
  bool match() const noexcept { return expected == actual; }
};

/// Re-runs every run recorded in a summary.json and compares trace hashes.
inline std::vector<ReplayCheck> replay_summary(const json& summary) {
  std::vector<ReplayCheck> out;
  try {
    if (summary.value("format", "") != "uavchain-summary") {
      throw HarnessError(HarnessError::Kind::BadSummary, "not a summary file");
    }
    Scenario s = default_hurricane();
    apply_scenario_json(s, summary.at("scenario"), ScenarioError::Kind::UnknownKey);
    for (const auto& run : summary.at("runs")) {
      const auto protocol = parse_protocol(run.at("protocol").get<std::string>());
      const auto seed = run.at("seed").get<std::uint64_t>();
      Scenario rs = s;
      rs.duration_s = run.at("duration_s").get<double>();
      const auto faults = fault_plan_from_json(run.at("faults"), "runs.faults");
      const auto e = run_experiment(rs, protocol, faults, seed);
      out.push_back({protocol, seed, Digest::from_hex(run.at("trace_hash").get<std::string>()), e.report.trace_hash});
    }
  } catch (const json::exception& e) {
    throw HarnessError(HarnessError::Kind::BadSummary, e.what());
  } catch (const std::invalid_argument& e) {
    throw HarnessError(HarnessError::Kind::BadSummary, e.what());
  }
  return out;
}

inline std::vector<ReplayCheck> replay_summary(const std::filesystem::path& path) { return replay_summary(read_json_file(path)); }

}  // namespace uavchain
