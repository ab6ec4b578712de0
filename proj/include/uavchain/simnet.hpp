#pragma once

// Discrete-event network simulator. One global queue ordered by (time, seq)
// drives mobility ticks, transaction arrivals, message delivery through
// per-node FIFO servers, consensus timers and attacks. Every processed event
// is appended to a trace whose SHA-256 identifies the run.

#include "uavchain/consensus.hpp"
#include "uavchain/format.hpp"
#include "uavchain/hash.hpp"
#include "uavchain/mobility.hpp"
#include "uavchain/radio.hpp"
#include "uavchain/rng.hpp"
#include "uavchain/scenario.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <variant>
#include <vector>

namespace uavchain {

inline constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

enum class TraceKind : std::uint8_t {
  Run, Node, Tick, Tx, Send, Drop, Deliver, Commit, Block, View, Timeout, Attack, Sync, End
};

inline constexpr std::string_view to_string(TraceKind k) noexcept {
  switch (k) {
    case TraceKind::Run: return "run";
    case TraceKind::Node: return "node";
    case TraceKind::Tick: return "tick";
    case TraceKind::Tx: return "tx";
    case TraceKind::Send: return "send";
    case TraceKind::Drop: return "drop";
    case TraceKind::Deliver: return "deliver";
    case TraceKind::Commit: return "commit";
    case TraceKind::Block: return "block";
    case TraceKind::View: return "view";
    case TraceKind::Timeout: return "timeout";
    case TraceKind::Attack: return "attack";
    case TraceKind::Sync: return "sync";
    case TraceKind::End: return "end";
  }
  return "unknown";
}

// Payload tags for Send/Drop/Deliver records: MessageKind values, then these.
inline constexpr std::uint8_t kPayloadTx = 4;
inline constexpr std::uint8_t kPayloadJunk = 5;

inline constexpr std::string_view payload_name(std::uint8_t tag) noexcept {
  if (tag < kPayloadTx) return to_string(static_cast<MessageKind>(tag));
  return tag == kPayloadTx ? "tx" : "junk";
}

enum class AttackEvent : std::uint8_t { DdosStart, DdosEnd, SpoofStart, SpoofEnd };

inline constexpr std::string_view to_string(AttackEvent a) noexcept {
  switch (a) {
    case AttackEvent::DdosStart: return "ddos_start";
    case AttackEvent::DdosEnd: return "ddos_end";
    case AttackEvent::SpoofStart: return "spoof_start";
    case AttackEvent::SpoofEnd: return "spoof_end";
  }
  return "unknown";
}

// Node fault tags in Node records.
enum class NodeFault : std::uint8_t { None, Equivocate, InvalidBlock, Silent, Crashed };

inline constexpr std::string_view to_string(NodeFault f) noexcept {
  switch (f) {
    case NodeFault::None: return "none";
    case NodeFault::Equivocate: return "equivocate";
    case NodeFault::InvalidBlock: return "invalid_block";
    case NodeFault::Silent: return "silent";
    case NodeFault::Crashed: return "crashed";
  }
  return "unknown";
}

/// One trace line. Field meaning depends on kind:
///   run      a=nodes b=validators x=seed tag=protocol value=duration
///   node     a=node tag=mission x=initial validator y=NodeFault
///   tick     x=step digest=positions
///   tx       a=origin x=tx id
///   send     a=from b=to tag=payload x=height|tx id y=view digest=block value=arrival
///   drop     as send, no arrival
///   deliver  as send, at the start of service; value=time spent queued
///   commit   a=node x=height y=view digest=block
///   block    a=first honest committer b=proposer x=height y=view digest=block txs
///   view     a=node b=proposer that failed x=height y=new view
///   timeout  a=node x=height y=view
///   attack   a=target tag=AttackEvent value=rate or offset norm
///   sync     a=node b=source x=height installed
///   end      x=sent y=delivered a=dropped b=in flight
struct TraceRecord {
  double time = 0.0;
  std::uint64_t seq = 0;
  TraceKind kind = TraceKind::Run;
  std::uint8_t tag = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint64_t x = 0;
  std::uint64_t y = 0;
  double value = 0.0;
  Digest digest;
  BlockPtr block;
};

struct NodeInfo {
  NodeId node;
  Mission mission = Mission::Connectivity;
  bool initial_validator = false;
  NodeFault fault = NodeFault::None;
};

struct TxInfo {
  std::uint64_t tx_id = 0;
  NodeId origin;
  double created_at = 0.0;
};

struct BlockInfo {
  std::uint64_t height = 0;
  double time = 0.0;  // first commit by an honest replica
  NodeId proposer;
  std::uint64_t view = 0;
  Digest hash;
  std::vector<std::uint64_t> tx_ids;
};

struct TraceCounters {
  std::uint64_t events = 0;
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t junk = 0;
  std::uint64_t view_changes = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t syncs = 0;
  std::uint64_t safety_violations = 0;
};

struct EventTrace {
  std::uint64_t seed = 0;
  consensus::ProtocolKind protocol = consensus::ProtocolKind::HybridDposPbft;
  double duration_s = 0.0;
  std::vector<NodeInfo> nodes;
  std::vector<TxInfo> txs;
  std::vector<BlockInfo> blocks;                 // canonical chain, heights 1..
  std::vector<TraceRecord> records;              // message records only when retained
  std::vector<std::vector<double>> commit_times; // per node, honest replicas only
  TraceCounters counters;
  Digest hash;
};

/// Renders one record as a JSON object line (no trailing newline).
inline void render_json(std::string& out, const TraceRecord& r) {
  auto key = [&](std::string_view k) {
    out += ",\"";
    out += k;
    out += "\":";
  };
  auto str = [&](std::string_view v) {
    out += '"';
    out += v;
    out += '"';
  };
  out += "{\"t\":";
  append_double(out, r.time);
  key("seq");
  append_uint(out, r.seq);
  key("kind");
  str(to_string(r.kind));
  switch (r.kind) {
    case TraceKind::Run:
      key("nodes"), append_uint(out, r.a);
      key("validators"), append_uint(out, r.b);
      key("seed"), append_uint(out, r.x);
      key("protocol"), str(to_string(static_cast<consensus::ProtocolKind>(r.tag)));
      key("duration"), append_double(out, r.value);
      break;
    case TraceKind::Node:
      key("node"), append_uint(out, r.a);
      key("mission"), str(to_string(static_cast<Mission>(r.tag)));
      key("validator"), out += r.x != 0 ? "true" : "false";
      key("fault"), str(to_string(static_cast<NodeFault>(r.y)));
      break;
    case TraceKind::Tick:
      key("step"), append_uint(out, r.x);
      key("positions"), str(r.digest.hex());
      break;
    case TraceKind::Tx:
      key("origin"), append_uint(out, r.a);
      key("tx"), append_uint(out, r.x);
      break;
    case TraceKind::Send:
    case TraceKind::Drop:
    case TraceKind::Deliver:
      key("from");
      if (r.a == kNoNode) {
        out += "null";
      } else {
        append_uint(out, r.a);
      }
      key("to"), append_uint(out, r.b);
      key("msg"), str(payload_name(r.tag));
      if (r.tag == kPayloadTx) {
        key("tx"), append_uint(out, r.x);
      } else if (r.tag != kPayloadJunk) {
        key("height"), append_uint(out, r.x);
        key("view"), append_uint(out, r.y);
        key("block"), str(r.digest.hex());
      }
      if (r.kind == TraceKind::Send) key("arrival"), append_double(out, r.value);
      if (r.kind == TraceKind::Deliver) key("queued"), append_double(out, r.value);
      break;
    case TraceKind::Commit:
      key("node"), append_uint(out, r.a);
      key("height"), append_uint(out, r.x);
      key("view"), append_uint(out, r.y);
      key("block"), str(r.digest.hex());
      break;
    case TraceKind::Block:
      key("node"), append_uint(out, r.a);
      key("proposer"), append_uint(out, r.b);
      key("height"), append_uint(out, r.x);
      key("view"), append_uint(out, r.y);
      key("block"), str(r.digest.hex());
      key("txs");
      out += '[';
      if (r.block) {
        bool first = true;
        for (const auto& tx : r.block->transactions) {
          if (!first) out += ',';
          first = false;
          append_uint(out, tx.tx_id);
        }
      }
      out += ']';
      break;
    case TraceKind::View:
      key("node"), append_uint(out, r.a);
      key("failed_proposer"), append_uint(out, r.b);
      key("height"), append_uint(out, r.x);
      key("view"), append_uint(out, r.y);
      break;
    case TraceKind::Timeout:
      key("node"), append_uint(out, r.a);
      key("height"), append_uint(out, r.x);
      key("view"), append_uint(out, r.y);
      break;
    case TraceKind::Attack:
      key("target"), append_uint(out, r.a);
      key("attack"), str(to_string(static_cast<AttackEvent>(r.tag)));
      key("value"), append_double(out, r.value);
      break;
    case TraceKind::Sync:
      key("node"), append_uint(out, r.a);
      key("source"), append_uint(out, r.b);
      key("height"), append_uint(out, r.x);
      break;
    case TraceKind::End:
      key("sent"), append_uint(out, r.x);
      key("delivered"), append_uint(out, r.y);
      key("dropped"), append_uint(out, r.a);
      key("in_flight"), append_uint(out, r.b);
      break;
  }
  out += '}';
}

/// Streams records into the run hash and, optionally, a JSONL sink. The hash
/// covers a fixed-width binary encoding of every field, so it does not depend
/// on whether text is rendered.
class TraceWriter {
 public:
  TraceWriter(EventTrace& trace, bool retain_messages, std::ostream* jsonl, bool jsonl_messages = true)
      : trace_(trace), retain_messages_(retain_messages), jsonl_(jsonl), jsonl_messages_(jsonl_messages) {}

  void emit(TraceRecord r) {
    r.seq = seq_++;
    ++trace_.counters.events;
    buf_.clear();
    put64(std::bit_cast<std::uint64_t>(r.time));
    put64(r.seq);
    buf_.push_back(static_cast<std::uint8_t>(r.kind));
    buf_.push_back(r.tag);
    put64(r.a);
    put64(r.b);
    put64(r.x);
    put64(r.y);
    put64(std::bit_cast<std::uint64_t>(r.value));
    buf_.insert(buf_.end(), r.digest.bytes.begin(), r.digest.bytes.end());
    if (r.kind == TraceKind::Block && r.block) {
      put64(r.block->transactions.size());
      for (const auto& tx : r.block->transactions) put64(tx.tx_id);
    }
    sha_.update(std::span<const std::uint8_t>(buf_));
    const bool message = r.kind == TraceKind::Send || r.kind == TraceKind::Drop || r.kind == TraceKind::Deliver;
    if (jsonl_ && (jsonl_messages_ || !message)) {
      line_.clear();
      render_json(line_, r);
      line_ += '\n';
      jsonl_->write(line_.data(), static_cast<std::streamsize>(line_.size()));
    }
    if (!message || retain_messages_) {
      if (r.kind != TraceKind::Block) r.block.reset();
      trace_.records.push_back(std::move(r));
    }
  }

  Digest finish() { return sha_.finish(); }

 private:
  void put64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  EventTrace& trace_;
  bool retain_messages_;
  std::ostream* jsonl_;
  bool jsonl_messages_;
  Sha256 sha_;
  std::uint64_t seq_ = 0;
  std::vector<std::uint8_t> buf_;
  std::string line_;
};

// ---------------------------------------------------------------------------
// Fleet construction
// ---------------------------------------------------------------------------

inline std::vector<consensus::UavProfile> generate_profiles(const Scenario& s, std::uint64_t seed) {
  std::vector<consensus::UavProfile> out;
  const auto n = s.fleet.total();
  out.reserve(n);
  const auto& r = s.profiles;
  for (std::uint32_t i = 0; i < n; ++i) {
    RngStream rng(derive_seed(seed, stream::kProfiles, i));
    consensus::UavProfile p;
    p.node = NodeId{i};
    p.stake = rng.uniform(r.stake_min, r.stake_max);
    p.fuel = rng.uniform(r.fuel_min, r.fuel_max);
    p.capability = rng.uniform(r.capability_min, r.capability_max);
    p.history = r.initial_history;
    p.mission = s.fleet.mission_of(p.node);
    out.push_back(p);
  }
  return out;
}

inline Digest positions_digest(const std::vector<mobility::KinematicState>& states) {
  ByteWriter w;
  for (const auto& k : states) {
    w.u64(std::bit_cast<std::uint64_t>(k.position.x));
    w.u64(std::bit_cast<std::uint64_t>(k.position.y));
    w.u64(std::bit_cast<std::uint64_t>(k.position.z));
  }
  return w.hash();
}

// ---------------------------------------------------------------------------
// Links
// ---------------------------------------------------------------------------

/// Arrival time of a `bits`-sized message sent at `now` between two reported
/// positions, or nullopt if the link drops it (probability `drop_prob`, drawn
/// from `rng`) or has no capacity. Relays are inserted past the radio range.
inline std::optional<double> deliver(double now, double bits, const Vec3& from, const Vec3& to, double queue_len,
                                     const NetworkConfig& net, const radio::NodeServiceProfile& service, RngStream& rng,
                                     double drop_prob) {
  if (drop_prob > 0 && rng.bernoulli(drop_prob)) return std::nullopt;
  try {
    const auto lat = radio::relayed_latency(bits, radio::clamp_distance(mobility::distance(from, to)), net.max_range_m,
                                            queue_len, net.radio, service);
    return now + lat.total_s;
  } catch (const radio::RadioError&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Byzantine behaviour
// ---------------------------------------------------------------------------

/// A second valid block for the same slot: the original with one forged
/// transaction appended, resealed by the equivocating proposer.
inline BlockPtr equivocation_block(const Block& original, NodeId proposer, std::uint64_t view) {
  Block alt = original;
  alt.proposer = proposer;
  alt.view = view;
  Transaction forged;
  forged.tx_id = (std::uint64_t{1} << 63) | original.height;
  forged.origin = proposer;
  alt.transactions.push_back(forged);
  return std::make_shared<const Block>(seal_block(std::move(alt)));
}

inline BlockPtr corrupted_block(const Block& original) {
  Block bad = original;
  bad.block_hash.bytes[0] ^= 0xff;
  return std::make_shared<const Block>(std::move(bad));
}

/// Rewrites one outbound message of a faulty node into (message, recipient)
/// pairs. Honest nodes send `msg` to every recipient unchanged.
inline std::vector<std::pair<ConsensusMessage, NodeId>> apply_byzantine(const ConsensusMessage& msg,
                                                                          std::vector<NodeId> recipients,
                                                                          std::optional<ByzantineStrategy> strategy,
                                                                          RngStream& rng) {
  std::vector<std::pair<ConsensusMessage, NodeId>> out;
  if (!strategy) {
    for (auto to : recipients) out.emplace_back(msg, to);
    return out;
  }
  switch (*strategy) {
    case ByzantineStrategy::Silent:
      return out;
    case ByzantineStrategy::InvalidBlock: {
      const auto* pp = std::get_if<PrePrepare>(&msg.body);
      const ConsensusMessage sent =
          pp && pp->block ? make_message(PrePrepare{corrupted_block(*pp->block), pp->view}, msg.sender) : msg;
      for (auto to : recipients) out.emplace_back(sent, to);
      return out;
    }
    case ByzantineStrategy::Equivocate: {
      if (msg.kind() == MessageKind::ViewChange) {
        for (auto to : recipients) out.emplace_back(msg, to);
        return out;
      }
      // Fisher-Yates with our own stream so the split is reproducible.
      rng.shuffle(recipients);
      ConsensusMessage other = msg;
      if (const auto* pp = std::get_if<PrePrepare>(&msg.body)) {
        if (pp->block) other = make_message(PrePrepare{equivocation_block(*pp->block, msg.sender, pp->view), pp->view}, msg.sender);
      } else {
        ByteWriter w;
        w.digest(msg.block_hash()).u64(0x65717569766f6361ULL);
        const Digest forged = w.hash();
        if (const auto* p = std::get_if<Prepare>(&msg.body)) {
          other = make_message(Prepare{forged, p->height, p->view}, msg.sender);
        } else if (const auto* c = std::get_if<Commit>(&msg.body)) {
          other = make_message(Commit{forged, c->height, c->view}, msg.sender);
        }
      }
      const auto half = recipients.size() / 2;
      for (std::size_t i = 0; i < recipients.size(); ++i) out.emplace_back(i < half ? msg : other, recipients[i]);
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

struct RunOptions {
  bool retain_messages = false;   // keep send/drop/deliver records in memory
  std::ostream* jsonl = nullptr;  // events.jsonl sink
  bool jsonl_messages = true;     // false writes only non-message records; the hash is unaffected
};

struct RunResult {
  EventTrace trace;
  std::vector<consensus::ConsensusState> replicas;
};

class Simulator {
 public:
  Simulator(const Scenario& scenario, const FaultPlan& faults, std::uint64_t seed, double t_end, RunOptions options)
      : sc_(scenario),
        faults_(faults),
        seed_(seed),
        t_end_(t_end),
        writer_(result_.trace, options.retain_messages, options.jsonl, options.jsonl_messages),
        net_rng_(derive_seed(seed, stream::kNetwork)),
        load_rng_(derive_seed(seed, stream::kWorkload)) {
    validate(sc_);
    if (!(t_end >= 0) || !std::isfinite(t_end)) {
      throw ScenarioError(ScenarioError::Kind::InvalidValue, "duration must be finite and non-negative");
    }
    if (!(faults.drop_prob >= 0 && faults.drop_prob <= 1) || !(faults.delay_jitter_s >= 0)) {
      throw ScenarioError(ScenarioError::Kind::InvalidValue, "drop probability or jitter out of range");
    }
    setup();
  }

  RunResult run() {
    while (!queue_.empty() && queue_.top().time <= t_end_) {
      Event ev = queue_.top();
      queue_.pop();
      dispatch(ev);
    }
    finish();
    return std::move(result_);
  }

 private:
  enum class EventKind : std::uint8_t {
    Deliver, Serve, Tick, TimeoutCheck, TxArrival, Junk, AttackStart, AttackEnd, StateSync
  };

  struct Packet {
    std::uint8_t tag = 0;
    ConsensusMessage msg;
    Transaction tx;
  };

  struct Event {
    double time = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::Tick;
    std::uint32_t node = 0;
    std::uint32_t from = kNoNode;
    std::uint64_t index = 0;
    double arrival = 0.0;  // Serve: when the packet reached the queue
    std::shared_ptr<const Packet> packet;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const noexcept {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  const Scenario& sc_;
  FaultPlan faults_;
  std::uint64_t seed_;
  double t_end_;
  RunResult result_;
  TraceWriter writer_;
  RngStream net_rng_;
  RngStream load_rng_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;

  consensus::ElectionPtr election_;
  std::vector<consensus::ConsensusState>* reps_ = nullptr;
  std::vector<NodeFault> fault_of_;
  std::vector<RngStream> byz_rng_;
  std::vector<mobility::KinematicState> kin_;
  std::vector<Vec3> waypoint_;
  std::vector<RngStream> mob_rng_;
  std::vector<RngStream> tx_rng_;
  std::vector<std::size_t> nearest_station_;
  std::vector<double> station_distance_;
  std::vector<double> busy_until_;
  std::vector<std::uint64_t> pending_to_;
  std::vector<double> scheduled_deadline_;
  std::vector<char> sync_pending_;
  std::uint64_t next_tx_id_ = 1;
  std::uint64_t synced_epoch_ = 0;
  std::uint64_t tick_ = 0;

  std::uint32_t n() const noexcept { return static_cast<std::uint32_t>(kin_.size()); }
  consensus::ConsensusState& rep(std::uint32_t i) { return (*reps_)[i]; }
  bool crashed(std::uint32_t i) const { return fault_of_[i] == NodeFault::Crashed; }
  bool honest(std::uint32_t i) const { return fault_of_[i] == NodeFault::None; }
  std::optional<ByzantineStrategy> strategy(std::uint32_t i) const {
    auto it = faults_.byzantine.find(NodeId{i});
    if (it == faults_.byzantine.end()) return std::nullopt;
    return it->second;
  }

  void schedule(Event ev) {
    ev.seq = seq_++;
    queue_.push(std::move(ev));
  }

  void emit(TraceRecord r) {
    r.time = now_;
    writer_.emit(std::move(r));
  }

  void setup() {
    auto& trace = result_.trace;
    trace.seed = seed_;
    trace.protocol = sc_.consensus.protocol;
    trace.duration_s = t_end_;

    const auto count = sc_.fleet.total();
    auto ctx = std::make_shared<consensus::ElectionContext>();
    ctx->profiles = generate_profiles(sc_, seed_);
    ctx->config = sc_.consensus;
    ctx->config.proposer_seed = derive_seed(seed_ ^ sc_.consensus.proposer_seed, stream::kProposer);
    election_ = ctx;

    fault_of_.assign(count, NodeFault::None);
    for (const auto& [id, strat] : faults_.byzantine) {
      if (id.value >= count) throw ScenarioError(ScenarioError::Kind::InvalidValue, "byzantine node out of range");
      fault_of_[id.value] = strat == ByzantineStrategy::Equivocate    ? NodeFault::Equivocate
                            : strat == ByzantineStrategy::InvalidBlock ? NodeFault::InvalidBlock
                                                                       : NodeFault::Silent;
    }
    for (auto id : faults_.crashed) {
      if (id.value >= count) throw ScenarioError(ScenarioError::Kind::InvalidValue, "crashed node out of range");
      fault_of_[id.value] = NodeFault::Crashed;
    }

    result_.replicas.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) result_.replicas.push_back(consensus::make_replica(NodeId{i}, election_, 0.0));
    reps_ = &result_.replicas;

    static const consensus::ValidatorSet kNone;
    const auto& initial = count > 0 ? rep(0).validators() : kNone;
    std::size_t faulty = 0;
    for (const auto& m : initial.members) faulty += fault_of_[m.node.value] != NodeFault::None ? 1 : 0;
    if (!faults_.allow_unsafe && faulty > consensus::max_faulty(initial.size())) {
      throw ScenarioError(ScenarioError::Kind::UnsafeFaults,
                          "fault plan has " + std::to_string(faulty) + " faulty validators, more than f = " +
                              std::to_string(consensus::max_faulty(initial.size())));
    }

    trace.commit_times.assign(count, {});
    byz_rng_.reserve(count);
    mob_rng_.reserve(count);
    tx_rng_.reserve(count);
    kin_.resize(count);
    waypoint_.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      byz_rng_.emplace_back(derive_seed(seed_, stream::kByzantine, i));
      mob_rng_.emplace_back(derive_seed(seed_, stream::kMobility, i));
      tx_rng_.emplace_back(derive_seed(seed_, stream::kWorkload, i));
      const auto& region = sc_.geometry.deployment[static_cast<std::size_t>(sc_.fleet.mission_of(NodeId{i}))];
      RngStream deploy(derive_seed(seed_, stream::kDeployment, i));
      kin_[i] = mobility::KinematicState::at(mobility::sample_waypoint(deploy, region));
      waypoint_[i] = mobility::sample_waypoint(mob_rng_[i], region);
    }
    busy_until_.assign(count, 0.0);
    pending_to_.assign(count, 0);
    scheduled_deadline_.assign(count, -1.0);
    sync_pending_.assign(count, 0);
    refresh_stations();

    emit({.kind = TraceKind::Run,
          .tag = static_cast<std::uint8_t>(sc_.consensus.protocol),
          .a = count,
          .b = static_cast<std::uint32_t>(initial.size()),
          .x = seed_,
          .value = t_end_});
    trace.nodes.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      NodeInfo info{NodeId{i}, sc_.fleet.mission_of(NodeId{i}), initial.contains(NodeId{i}), fault_of_[i]};
      trace.nodes.push_back(info);
      emit({.kind = TraceKind::Node,
            .tag = static_cast<std::uint8_t>(info.mission),
            .a = i,
            .x = info.initial_validator ? 1u : 0u,
            .y = static_cast<std::uint64_t>(info.fault)});
    }

    schedule({.time = sc_.mobility.dt, .kind = EventKind::Tick});
    if (sc_.workload.tx_rate_per_uav > 0) {
      for (std::uint32_t i = 0; i < count; ++i) {
        schedule({.time = tx_rng_[i].exponential(sc_.workload.tx_rate_per_uav), .kind = EventKind::TxArrival, .node = i});
      }
    }
    for (std::size_t k = 0; k < faults_.ddos.size(); ++k) {
      const auto& d = faults_.ddos[k];
      if (d.target.value >= count || !(d.flood_rate >= 0) || !(d.duration_s > 0)) {
        throw ScenarioError(ScenarioError::Kind::InvalidValue, "invalid ddos attack");
      }
      schedule({.time = d.start_s, .kind = EventKind::AttackStart, .node = d.target.value, .index = k});
      schedule({.time = d.start_s + d.duration_s, .kind = EventKind::AttackEnd, .node = d.target.value, .index = k});
    }
    for (std::size_t k = 0; k < faults_.spoof.size(); ++k) {
      const auto& sp = faults_.spoof[k];
      if (sp.target.value >= count || !sp.offset.finite()) {
        throw ScenarioError(ScenarioError::Kind::InvalidValue, "invalid spoofing attack");
      }
      const auto idx = faults_.ddos.size() + k;
      schedule({.time = sp.start_s, .kind = EventKind::AttackStart, .node = sp.target.value, .index = idx});
      schedule({.time = sp.start_s + sp.duration_s, .kind = EventKind::AttackEnd, .node = sp.target.value, .index = idx});
    }

    for (std::uint32_t i = 0; i < count; ++i) {
      if (crashed(i)) continue;
      consensus::StepResult out;
      consensus::start(rep(i), 0.0, out);
      after_step(i, out, rep(i).height, rep(i).view);
    }
  }

  // -- geometry -------------------------------------------------------------

  void refresh_stations() {
    const auto& stations = sc_.geometry.base_stations;
    nearest_station_.assign(n(), 0);
    station_distance_.assign(n(), 0.0);
    if (stations.empty()) return;
    for (std::uint32_t i = 0; i < n(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < stations.size(); ++k) {
        const double d = mobility::distance(kin_[i].reported_position, stations[k]);
        if (d < best) {
          best = d;
          best_k = k;
        }
      }
      nearest_station_[i] = best_k;
      station_distance_[i] = best;
    }
  }

  double link_latency(double bits, double distance, std::uint32_t to, const radio::NodeServiceProfile& service) {
    const double queue_len = sc_.network.queue_mode == QueueMode::Analytic ? static_cast<double>(pending_to_[to]) : 0.0;
    return radio::relayed_latency(bits, radio::clamp_distance(distance), sc_.network.max_range_m, queue_len,
                                  sc_.network.radio, service)
        .total_s;
  }

  // -- sending --------------------------------------------------------------

  double message_bits(const ConsensusMessage& m) const {
    const double header = sc_.network.header_bits;
    if (const auto* pp = std::get_if<PrePrepare>(&m.body)) {
      return header + (pp->block ? static_cast<double>(pp->block->payload_bits()) : 0.0);
    }
    if (const auto* vc = std::get_if<ViewChange>(&m.body)) {
      return sc_.network.vote_bits + (vc->prepared ? header + static_cast<double>(vc->prepared->payload_bits()) : 0.0);
    }
    return sc_.network.vote_bits;
  }

  static TraceRecord message_record(TraceKind kind, std::uint32_t from, std::uint32_t to, const Packet& p) {
    TraceRecord r{.kind = kind, .tag = p.tag, .a = from, .b = to};
    if (p.tag == kPayloadTx) {
      r.x = p.tx.tx_id;
    } else if (p.tag != kPayloadJunk) {
      r.x = p.msg.height();
      r.y = p.msg.view();
      r.digest = p.msg.block_hash();
    }
    return r;
  }

  /// Puts a packet on the air; returns false if the link loses it.
  bool transmit(std::uint32_t from, std::uint32_t to, std::shared_ptr<const Packet> packet, double latency,
                bool over_air = true) {
    auto& c = result_.trace.counters;
    ++c.sent;
    const bool lost = over_air && faults_.drop_prob > 0 && net_rng_.bernoulli(faults_.drop_prob);
    if (!lost && over_air && faults_.delay_jitter_s > 0) latency += net_rng_.uniform(0.0, faults_.delay_jitter_s);
    auto rec = message_record(lost ? TraceKind::Drop : TraceKind::Send, from, to, *packet);
    if (lost) {
      ++c.dropped;
      emit(rec);
      return false;
    }
    rec.value = now_ + latency;
    emit(rec);
    ++pending_to_[to];
    schedule({.time = now_ + latency, .kind = EventKind::Deliver, .node = to, .from = from, .packet = std::move(packet)});
    return true;
  }

  void send_message(std::uint32_t from, std::uint32_t to, const ConsensusMessage& msg) {
    auto packet = std::make_shared<Packet>();
    packet->tag = static_cast<std::uint8_t>(msg.kind());
    packet->msg = msg;
    double latency = 0.0;
    try {
      latency = link_latency(message_bits(msg), mobility::distance(kin_[from].reported_position, kin_[to].reported_position),
                             to, sc_.network.uav_service);
    } catch (const radio::RadioError&) {
      ++result_.trace.counters.sent;
      ++result_.trace.counters.dropped;
      emit(message_record(TraceKind::Drop, from, to, *packet));
      return;
    }
    transmit(from, to, std::move(packet), latency);
  }

  /// Transaction path: origin to its nearest base station, station backhaul,
  /// then downlink from the station nearest each validator.
  void send_transaction(const Transaction& tx, const consensus::ValidatorSet& set) {
    const auto origin = tx.origin.value;
    auto packet = std::make_shared<Packet>();
    packet->tag = kPayloadTx;
    packet->tx = tx;
    const double bits = tx.payload_bits;
    const bool stations = !sc_.geometry.base_stations.empty();
    double uplink = 0.0;
    if (stations) uplink = link_latency(bits, station_distance_[origin], origin, sc_.network.uav_service);
    for (const auto& m : set.members) {
      const auto to = m.node.value;
      double latency = 0.0;
      if (to == origin) {
        latency = 0.0;
      } else if (stations) {
        latency = uplink + sc_.network.backhaul_latency_s +
                  link_latency(bits, station_distance_[to], to, sc_.network.station_service);
      } else {
        latency = link_latency(bits, mobility::distance(kin_[origin].reported_position, kin_[to].reported_position), to,
                               sc_.network.uav_service);
      }
      transmit(origin, to, packet, latency);
    }
  }

  // -- replica glue ---------------------------------------------------------

  /// Validator set a message belongs to: the sender's set for its height.
  const consensus::ValidatorSet& set_for(const consensus::ConsensusState& s, std::uint64_t height) const {
    const auto epoch = s.election->epoch_of(height);
    return s.epoch_sets.at(std::min<std::size_t>(epoch, s.epoch_sets.size() - 1));
  }

  void after_step(std::uint32_t i, consensus::StepResult& out, std::uint64_t old_height, std::uint64_t old_view) {
    auto& s = rep(i);
    if (s.height == old_height && s.view > old_view) {
      ++result_.trace.counters.view_changes;
      emit({.kind = TraceKind::View,
            .a = i,
            .b = s.proposer_for(s.height, s.view - 1).value,
            .x = s.height,
            .y = s.view});
    }
    for (const auto& block : out.committed) on_commit(i, block);
    for (const auto& ob : out.outbound) {
      std::vector<NodeId> recipients;
      if (ob.to) {
        recipients.push_back(*ob.to);
      } else {
        for (const auto& m : set_for(s, ob.msg.height()).members) {
          if (m.node.value != i) recipients.push_back(m.node);
        }
      }
      for (const auto& [msg, to] : apply_byzantine(ob.msg, std::move(recipients), strategy(i), byz_rng_[i])) {
        send_message(i, to.value, msg);
      }
    }
    reschedule_timeout(i);
  }

  void reschedule_timeout(std::uint32_t i) {
    const auto& s = rep(i);
    if (crashed(i) || !s.synced || s.role != consensus::Role::Validator) return;
    if (s.timeout_deadline == scheduled_deadline_[i]) return;
    scheduled_deadline_[i] = s.timeout_deadline;
    schedule({.time = s.timeout_deadline, .kind = EventKind::TimeoutCheck, .node = i});
  }

  void on_commit(std::uint32_t i, const BlockPtr& block) {
    auto& trace = result_.trace;
    emit({.kind = TraceKind::Commit, .a = i, .x = block->height, .y = block->view, .digest = block->block_hash});
    if (!honest(i)) return;
    trace.commit_times[i].push_back(now_);
    const auto h = block->height;
    if (h <= trace.blocks.size()) {
      if (trace.blocks[h - 1].hash != block->block_hash) ++trace.counters.safety_violations;
    } else if (h == trace.blocks.size() + 1) {
      BlockInfo info{h, now_, block->proposer, block->view, block->block_hash, {}};
      info.tx_ids.reserve(block->transactions.size());
      for (const auto& tx : block->transactions) info.tx_ids.push_back(tx.tx_id);
      trace.blocks.push_back(std::move(info));
      emit({.kind = TraceKind::Block,
            .a = i,
            .b = block->proposer.value,
            .x = h,
            .y = block->view,
            .digest = block->block_hash,
            .block = block});
      maybe_start_epoch(i, h);
    }
  }

  /// The first honest commit that closes an epoch hands the chain to the
  /// replicas elected into the next one.
  void maybe_start_epoch(std::uint32_t source, std::uint64_t height) {
    const auto& s = rep(source);
    const auto epoch = s.election->epoch_of(height + 1);
    if (epoch <= synced_epoch_ || epoch == s.election->epoch_of(height)) return;
    synced_epoch_ = epoch;
    const auto& next = s.epoch_sets.at(epoch);
    const auto& prev = s.epoch_sets.at(epoch - 1);
    for (const auto& m : next.members) {
      if (!prev.contains(m.node)) request_sync(m.node.value, source);
    }
  }

  void request_sync(std::uint32_t target, std::uint32_t source) {
    if (crashed(target) || sync_pending_[target]) return;
    sync_pending_[target] = 1;
    rep(target).synced = false;
    double latency = 0.0;
    try {
      latency = link_latency(sc_.network.header_bits,
                             mobility::distance(kin_[source].reported_position, kin_[target].reported_position), target,
                             sc_.network.uav_service);
    } catch (const radio::RadioError&) {
      latency = sc_.consensus.timeout_s;
    }
    schedule({.time = now_ + latency, .kind = EventKind::StateSync, .node = target, .from = source});
  }

  // -- event handlers -------------------------------------------------------

  void dispatch(const Event& ev) {
    now_ = ev.time;
    switch (ev.kind) {
      case EventKind::Deliver: return on_deliver(ev);
      case EventKind::Serve: return serve(ev.node, ev.from, *ev.packet, ev.arrival);
      case EventKind::Tick: return on_tick();
      case EventKind::TimeoutCheck: return on_timeout_check(ev);
      case EventKind::TxArrival: return on_tx_arrival(ev.node);
      case EventKind::Junk: return on_junk(ev);
      case EventKind::AttackStart: return on_attack(ev, true);
      case EventKind::AttackEnd: return on_attack(ev, false);
      case EventKind::StateSync: return on_state_sync(ev);
    }
  }

  void on_deliver(const Event& ev) {
    const auto to = ev.node;
    --pending_to_[to];
    if (sc_.network.queue_mode == QueueMode::Analytic) return serve(to, ev.from, *ev.packet, now_);
    // Single FIFO server per node: service starts when the previous message is done.
    const double rate = sc_.network.uav_service.service_rate_msgs_per_s;
    const double start = std::max(now_, busy_until_[to]);
    busy_until_[to] = start + 1.0 / rate;
    if (start == now_) return serve(to, ev.from, *ev.packet, now_);
    schedule({.time = start, .kind = EventKind::Serve, .node = to, .from = ev.from, .arrival = now_, .packet = ev.packet});
  }

  void serve(std::uint32_t to, std::uint32_t from, const Packet& p, double arrival) {
    ++result_.trace.counters.delivered;
    auto rec = message_record(TraceKind::Deliver, from, to, p);
    rec.value = now_ - arrival;
    emit(rec);
    if (crashed(to)) return;
    auto& s = rep(to);
    if (p.tag == kPayloadTx) {
      consensus::add_transaction(s, p.tx);
      return;
    }
    const auto h = s.height;
    const auto v = s.view;
    consensus::StepResult out;
    consensus::apply_message(s, p.msg, now_, out);
    after_step(to, out, h, v);
  }

  void on_tick() {
    const auto& cfg = sc_.mobility;
    for (std::uint32_t i = 0; i < n(); ++i) {
      auto& k = kin_[i];
      if (mobility::distance(k.position, waypoint_[i]) <= cfg.waypoint_arrival_radius) {
        const auto& region = sc_.geometry.deployment[static_cast<std::size_t>(sc_.fleet.mission_of(NodeId{i}))];
        waypoint_[i] = mobility::sample_waypoint(mob_rng_[i], region);
      }
      k.acceleration = mobility::steer_to_waypoint(k, waypoint_[i], cfg);
      k = mobility::step(k, cfg);
    }
    refresh_stations();
    ++tick_;
    emit({.kind = TraceKind::Tick, .x = tick_, .digest = positions_digest(kin_)});
    schedule({.time = static_cast<double>(tick_ + 1) * cfg.dt, .kind = EventKind::Tick});
  }

  void on_timeout_check(const Event& ev) {
    const auto i = ev.node;
    auto& s = rep(i);
    if (ev.time != scheduled_deadline_[i] || crashed(i) || !s.synced) return;
    scheduled_deadline_[i] = -1.0;
    if (s.role != consensus::Role::Validator) return;
    ++result_.trace.counters.timeouts;
    emit({.kind = TraceKind::Timeout, .a = i, .x = s.height, .y = s.view});
    if (catch_up(i)) return;
    const auto h = s.height;
    const auto v = s.view;
    consensus::StepResult out;
    consensus::apply_timeout(s, now_, out);
    after_step(i, out, h, v);
  }

  /// A replica that times out while holding messages for later heights has
  /// fallen behind; fetch the chain from the most advanced sender instead of
  /// waiting for votes that were already cast.
  bool catch_up(std::uint32_t i) {
    const auto& s = rep(i);
    std::uint32_t best = kNoNode;
    std::uint64_t best_height = s.height;
    for (const auto& m : s.future) {
      const auto src = m.sender.value;
      if (m.height() > best_height && src < n() && !crashed(src) && rep(src).synced &&
          rep(src).committed_chain.size() > s.height) {
        best_height = m.height();
        best = src;
      }
    }
    if (best == kNoNode) return false;
    request_sync(i, best);
    return true;
  }

  void on_state_sync(const Event& ev) {
    const auto i = ev.node;
    sync_pending_[i] = 0;
    auto& s = rep(i);
    const auto& src = rep(ev.from);
    consensus::StepResult out;
    if (src.committed_chain.size() > s.committed_chain.size()) {
      ++result_.trace.counters.syncs;
      emit({.kind = TraceKind::Sync, .a = i, .b = ev.from, .x = src.committed_chain.back()->height});
      consensus::install_snapshot(s, src, now_, out);
    } else {
      // Nothing newer to install; resume with what we have.
      s.synced = true;
      s.role = s.is_member() ? consensus::Role::Validator : consensus::Role::Observer;
      consensus::start(s, now_, out);
      std::vector<ConsensusMessage> pending;
      pending.swap(s.future);
      for (const auto& m : pending) consensus::apply_message(s, m, now_, out);
    }
    scheduled_deadline_[i] = -1.0;
    after_step(i, out, s.height, s.view);
  }

  const consensus::ValidatorSet& reference_set() {
    if (n() == 0) {
      static const consensus::ValidatorSet kNone;
      return kNone;
    }
    std::uint32_t best = 0;
    std::uint64_t best_height = 0;
    for (std::uint32_t i = 0; i < n(); ++i) {
      if (honest(i) && rep(i).synced && rep(i).height > best_height) {
        best_height = rep(i).height;
        best = i;
      }
    }
    return rep(best).validators();
  }

  void on_tx_arrival(std::uint32_t origin) {
    Transaction tx;
    tx.tx_id = next_tx_id_++;
    tx.origin = NodeId{origin};
    tx.created_at = now_;
    tx.payload_bits = sc_.workload.payload_bits;
    tx.kind = consensus::tx_kind_for(sc_.fleet.mission_of(tx.origin));
    result_.trace.txs.push_back({tx.tx_id, tx.origin, now_});
    emit({.kind = TraceKind::Tx, .a = origin, .x = tx.tx_id});
    send_transaction(tx, reference_set());
    schedule({.time = now_ + tx_rng_[origin].exponential(sc_.workload.tx_rate_per_uav),
              .kind = EventKind::TxArrival,
              .node = origin});
  }

  void on_attack(const Event& ev, bool begin) {
    const auto k = static_cast<std::size_t>(ev.index);
    if (k < faults_.ddos.size()) {
      const auto& d = faults_.ddos[k];
      emit({.kind = TraceKind::Attack,
            .tag = static_cast<std::uint8_t>(begin ? AttackEvent::DdosStart : AttackEvent::DdosEnd),
            .a = ev.node,
            .value = d.flood_rate});
      if (begin && d.flood_rate > 0) schedule({.time = now_, .kind = EventKind::Junk, .node = ev.node, .index = k});
      return;
    }
    const auto& sp = faults_.spoof[k - faults_.ddos.size()];
    emit({.kind = TraceKind::Attack,
          .tag = static_cast<std::uint8_t>(begin ? AttackEvent::SpoofStart : AttackEvent::SpoofEnd),
          .a = ev.node,
          .value = sp.offset.norm()});
    auto& kin = kin_[ev.node];
    kin = mobility::apply_spoofing(kin, begin ? sp.offset : Vec3{});
    refresh_stations();
  }

  /// One flood message: it lands in the target's queue, costs a service slot
  /// and fails signature verification.
  void on_junk(const Event& ev) {
    const auto& d = faults_.ddos[ev.index];
    if (now_ >= d.start_s + d.duration_s) return;
    ++result_.trace.counters.junk;
    auto packet = std::make_shared<Packet>();
    packet->tag = kPayloadJunk;
    packet->msg = ConsensusMessage{Prepare{Digest{}, rep(ev.node).height, rep(ev.node).view}, NodeId{ev.node}, Signature{}};
    transmit(kNoNode, ev.node, std::move(packet), 0.0, false);
    schedule({.time = now_ + 1.0 / d.flood_rate, .kind = EventKind::Junk, .node = ev.node, .index = ev.index});
  }

  void finish() {
    auto& c = result_.trace.counters;
    c.in_flight = 0;
    while (!queue_.empty()) {
      const auto& ev = queue_.top();
      if (ev.kind == EventKind::Deliver || ev.kind == EventKind::Serve) ++c.in_flight;
      queue_.pop();
    }
    now_ = t_end_;
    emit({.kind = TraceKind::End,
          .a = static_cast<std::uint32_t>(c.dropped),
          .b = static_cast<std::uint32_t>(c.in_flight),
          .x = c.sent,
          .y = c.delivered});
    result_.trace.hash = writer_.finish();
  }
};

/// Runs one simulation to `t_end` seconds.
inline RunResult run(const Scenario& scenario, const FaultPlan& faults, std::uint64_t seed, double t_end,
                     RunOptions options = {}) {
  return Simulator(scenario, faults, seed, t_end, options).run();
}

}  // namespace uavchain
