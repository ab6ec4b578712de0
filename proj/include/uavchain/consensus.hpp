#pragma once

// DPoS validator election combined with three-phase PBFT agreement, plus the
// pure-DPoS and pure-PBFT baselines used for comparison.
//
// Each replica is a deterministic state machine. handle_message and
// on_timeout are pure functions of (state, input, now); the in-place
// variants apply_message/apply_timeout are what the simulator drives.
//
// Views count from zero at every height. The view-0 proposer of a height is
// chosen by the proposer policy; view v rotates v places further through the
// validator list, so consecutive views at a height never reuse a proposer
// until the list wraps.
//
// Safety across views comes from locking: a replica that observes a prepare
// quorum for block B in view v locks on (B, v) and afterwards prepares only B
// at that height, unless it later observes a prepare quorum for another block
// in a higher view. ViewChange messages carry the sender's lock so a new
// proposer re-proposes the most recently prepared block.

#include "uavchain/domain.hpp"
#include "uavchain/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace uavchain::consensus {

enum class Mission : std::uint8_t { Connectivity, Delivery, Rescue, Assessment };

inline constexpr std::string_view to_string(Mission m) noexcept {
  switch (m) {
    case Mission::Connectivity: return "connectivity";
    case Mission::Delivery: return "delivery";
    case Mission::Rescue: return "rescue";
    case Mission::Assessment: return "assessment";
  }
  return "unknown";
}

inline constexpr TxKind tx_kind_for(Mission m) noexcept {
  switch (m) {
    case Mission::Connectivity: return TxKind::StatusReport;
    case Mission::Delivery: return TxKind::SupplyRequest;
    case Mission::Rescue: return TxKind::TaskAssignment;
    case Mission::Assessment: return TxKind::DamageReport;
  }
  return TxKind::StatusReport;
}

struct UavProfile {
  NodeId node;
  double stake = 1.0;
  double fuel = 1.0;
  double capability = 1.0;
  double history = 0.5;
  Mission mission = Mission::Connectivity;

  bool valid() const noexcept {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    return stake >= 0.0 && unit(fuel) && unit(capability) && unit(history);
  }
};

struct ScoreWeights {
  double w1 = 0.25;  // stake
  double w2 = 0.25;  // fuel
  double w3 = 0.25;  // capability
  double w4 = 0.25;  // history

  ScoreWeights normalized() const {
    const double sum = w1 + w2 + w3 + w4;
    if (!(sum > 0.0) || w1 < 0 || w2 < 0 || w3 < 0 || w4 < 0) {
      throw std::invalid_argument("score weights must be non-negative with a positive sum");
    }
    return {w1 / sum, w2 / sum, w3 / sum, w4 / sum};
  }
};

enum class ProtocolKind : std::uint8_t { HybridDposPbft, PureDpos, PurePbft };
enum class ProposerPolicy : std::uint8_t { RoundRobin, StakeWeighted };

inline constexpr std::string_view to_string(ProtocolKind p) noexcept {
  switch (p) {
    case ProtocolKind::HybridDposPbft: return "hybrid";
    case ProtocolKind::PureDpos: return "dpos";
    case ProtocolKind::PurePbft: return "pbft";
  }
  return "unknown";
}

inline constexpr std::string_view to_string(ProposerPolicy p) noexcept {
  return p == ProposerPolicy::RoundRobin ? "round_robin" : "stake_weighted";
}

class ConsensusError : public std::runtime_error {
 public:
  enum class Kind { TooFewNodes, ZeroTotalStake, EmptySet };
  ConsensusError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Weighted validator score; stake must already be scaled to [0, 1].
inline double validator_score(const UavProfile& p, const ScoreWeights& w) noexcept {
  return w.w1 * p.stake + w.w2 * p.fuel + w.w3 * p.capability + w.w4 * p.history;
}

struct ValidatorEntry {
  NodeId node;
  double score = 0.0;
  double stake = 0.0;
};

struct ValidatorSet {
  std::vector<ValidatorEntry> members;  // score descending, then NodeId ascending

  std::size_t size() const noexcept { return members.size(); }
  bool empty() const noexcept { return members.empty(); }

  std::optional<std::size_t> index_of(NodeId id) const noexcept {
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (members[i].node == id) return i;
    }
    return std::nullopt;
  }
  bool contains(NodeId id) const noexcept { return index_of(id).has_value(); }

  std::vector<NodeId> nodes() const {
    std::vector<NodeId> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.node);
    return out;
  }

  friend bool operator==(const ValidatorSet& a, const ValidatorSet& b) {
    if (a.members.size() != b.members.size()) return false;
    for (std::size_t i = 0; i < a.members.size(); ++i) {
      if (a.members[i].node != b.members[i].node) return false;
    }
    return true;
  }
};

inline bool score_order(const ValidatorEntry& a, const ValidatorEntry& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.node < b.node;
}

/// Scores every profile with stake divided by the fleet maximum and keeps the
/// top `n` (ties to the lower NodeId).
inline ValidatorSet elect_validators(const std::vector<UavProfile>& profiles, const ScoreWeights& weights,
                                     std::size_t n) {
  if (profiles.size() < n) {
    throw ConsensusError(ConsensusError::Kind::TooFewNodes,
                         "elect_validators: " + std::to_string(profiles.size()) + " profiles for " +
                             std::to_string(n) + " validator seats");
  }
  double max_stake = 0.0;
  for (const auto& p : profiles) max_stake = std::max(max_stake, p.stake);
  std::vector<ValidatorEntry> ranked;
  ranked.reserve(profiles.size());
  for (auto p : profiles) {
    const double raw = p.stake;
    p.stake = max_stake > 0.0 ? raw / max_stake : 0.0;
    ranked.push_back({p.node, validator_score(p, weights), raw});
  }
  std::sort(ranked.begin(), ranked.end(), score_order);
  ranked.resize(n);
  return ValidatorSet{std::move(ranked)};
}

/// Every profile is a validator, ordered by NodeId (the PBFT baseline).
inline ValidatorSet all_nodes_set(const std::vector<UavProfile>& profiles) {
  ValidatorSet set;
  for (const auto& p : profiles) set.members.push_back({p.node, 1.0, p.stake});
  std::sort(set.members.begin(), set.members.end(), score_order);
  return set;
}

/// Stake-proportional proposer probabilities.
inline std::vector<double> proposer_distribution(const ValidatorSet& set) {
  double total = 0.0;
  for (const auto& m : set.members) total += m.stake;
  if (!(total > 0.0)) {
    throw ConsensusError(ConsensusError::Kind::ZeroTotalStake, "proposer_distribution: total validator stake is zero");
  }
  std::vector<double> p;
  p.reserve(set.size());
  for (const auto& m : set.members) p.push_back(m.stake / total);
  return p;
}

inline std::size_t select_proposer_index(const ValidatorSet& set, ProposerPolicy policy, std::uint64_t round,
                                         RngStream& rng) {
  if (set.empty()) throw ConsensusError(ConsensusError::Kind::EmptySet, "select_proposer: empty validator set");
  if (policy == ProposerPolicy::RoundRobin) return static_cast<std::size_t>(round % set.size());
  const auto probs = proposer_distribution(set);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc && probs[i] > 0.0) return i;
  }
  // Rounding left u above the final partial sum: take the last staked member.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return 0;
}

inline NodeId select_proposer(const ValidatorSet& set, ProposerPolicy policy, std::uint64_t round, RngStream& rng) {
  return set.members[select_proposer_index(set, policy, round, rng)].node;
}

/// Smallest vote count strictly greater than 2n/3.
inline constexpr std::size_t quorum_threshold(std::size_t n) noexcept { return 2 * n / 3 + 1; }

/// Smallest vote count strictly greater than n/2 (the DPoS baseline).
inline constexpr std::size_t majority_threshold(std::size_t n) noexcept { return n / 2 + 1; }

inline constexpr std::size_t max_faulty(std::size_t n) noexcept { return n == 0 ? 0 : (n - 1) / 3; }

// ---------------------------------------------------------------------------
// Election schedule
// ---------------------------------------------------------------------------

struct ConsensusConfig {
  ProtocolKind protocol = ProtocolKind::HybridDposPbft;
  ProposerPolicy policy = ProposerPolicy::StakeWeighted;
  std::uint32_t validator_count = 20;
  ScoreWeights weights;
  double timeout_s = 0.5;
  bool optimistic_fast_path = false;
  std::uint32_t max_block_txs = 500;
  std::uint32_t reelection_interval = 50;  // blocks per epoch; 0 keeps the first set forever
  double history_decay = 0.9;
  std::uint64_t proposer_seed = 0;
};

/// Everything a replica needs to recompute validator sets from its own chain.
struct ElectionContext {
  std::vector<UavProfile> profiles;  // indexed by NodeId
  ConsensusConfig config;

  ProposerPolicy effective_policy() const noexcept {
    return config.protocol == ProtocolKind::HybridDposPbft ? config.policy : ProposerPolicy::RoundRobin;
  }

  ValidatorSet elect(const std::vector<UavProfile>& current) const {
    if (config.protocol == ProtocolKind::PurePbft) return all_nodes_set(current);
    return elect_validators(current, config.weights.normalized(), config.validator_count);
  }

  std::uint64_t epoch_of(std::uint64_t height) const noexcept {
    if (config.protocol == ProtocolKind::PurePbft || config.reelection_interval == 0) return 0;
    return height / config.reelection_interval;
  }

  /// Index of the proposer for (height, view).
  std::size_t proposer_index(const ValidatorSet& set, std::uint64_t height, std::uint64_t view) const {
    RngStream rng(derive_seed(config.proposer_seed, stream::kProposer, height));
    const auto base = select_proposer_index(set, effective_policy(), height, rng);
    return static_cast<std::size_t>((base + view) % set.size());
  }

  NodeId proposer(const ValidatorSet& set, std::uint64_t height, std::uint64_t view) const {
    return set.members[proposer_index(set, height, view)].node;
  }
};

using ElectionPtr = std::shared_ptr<const ElectionContext>;

// ---------------------------------------------------------------------------
// Replica state
// ---------------------------------------------------------------------------

enum class Phase : std::uint8_t { Idle, PrePrepared, Prepared, Committed };
enum class Role : std::uint8_t { Validator, Observer };

struct Lock {
  BlockPtr block;
  std::uint64_t view = 0;
};

struct Outbound {
  ConsensusMessage msg;
  std::optional<NodeId> to;  // nullopt: every other member of the sender's validator set
};

struct StepResult {
  std::vector<Outbound> outbound;
  std::vector<BlockPtr> committed;
};

struct ReplicaCounters {
  std::uint64_t invalid_signature = 0;
  std::uint64_t unknown_sender = 0;
  std::uint64_t stale = 0;
  std::uint64_t duplicate = 0;
  std::uint64_t invalid_block = 0;
  std::uint64_t wrong_proposer = 0;
  std::uint64_t buffered = 0;
  std::uint64_t view_changes = 0;
  std::uint64_t equivocations_seen = 0;
};

using VoteKey = std::pair<std::uint64_t, Digest>;  // (view, block hash)

struct ConsensusState {
  NodeId node;
  Role role = Role::Validator;
  bool synced = true;  // false while a newly elected replica waits for the chain
  ElectionPtr election;

  std::uint64_t height = 1;  // next height to decide; genesis is height 0
  std::uint64_t view = 0;
  Phase phase = Phase::Idle;
  BlockPtr current_block;

  std::map<VoteKey, std::set<NodeId>> prepare_votes;
  std::map<VoteKey, std::set<NodeId>> commit_votes;
  std::map<std::uint64_t, std::map<NodeId, ViewChange>> view_change_votes;
  std::map<Digest, BlockPtr> known_blocks;  // valid candidates at this height
  std::optional<Lock> lock;
  bool prepare_sent = false;
  bool commit_sent = false;
  bool proposal_seen = false;
  std::uint64_t requested_view = 0;

  std::vector<BlockPtr> committed_chain;  // [0] is genesis
  std::vector<double> commit_times;
  std::deque<Transaction> mempool;
  std::unordered_set<std::uint64_t> mempool_ids;
  std::unordered_set<std::uint64_t> committed_tx_ids;

  double timeout_deadline = 0.0;
  double current_timeout = 0.5;
  std::uint64_t faults_observed = 0;

  // Election bookkeeping: sets per epoch and profiles with history applied
  // through the committed tip.
  std::vector<ValidatorSet> epoch_sets;
  std::vector<UavProfile> live_profiles;

  std::vector<ConsensusMessage> future;  // higher height or view, replayed later
  ReplicaCounters counters;

  const ConsensusConfig& config() const { return election->config; }
  const Digest& tip_hash() const { return committed_chain.back()->block_hash; }

  const ValidatorSet& validators() const { return epoch_sets.at(election->epoch_of(height)); }
  bool is_member() const { return validators().contains(node); }
  NodeId proposer_for(std::uint64_t h, std::uint64_t v) const {
    return election->proposer(epoch_sets.at(election->epoch_of(h)), h, v);
  }
  std::size_t quorum() const {
    return config().protocol == ProtocolKind::PureDpos ? majority_threshold(validators().size())
                                                       : quorum_threshold(validators().size());
  }
};


inline constexpr std::size_t kMaxBufferedMessages = 50000;

/// Fresh replica holding only genesis.
inline ConsensusState make_replica(NodeId node, ElectionPtr election, double now = 0.0) {
  ConsensusState s;
  s.node = node;
  s.election = std::move(election);
  s.committed_chain.push_back(std::make_shared<const Block>(make_genesis()));
  s.commit_times.push_back(0.0);
  s.live_profiles = s.election->profiles;
  s.epoch_sets.push_back(s.election->elect(s.live_profiles));
  s.current_timeout = s.election->config.timeout_s;
  s.timeout_deadline = now + s.current_timeout;
  s.role = s.is_member() ? Role::Validator : Role::Observer;
  return s;
}

/// Block at the replica's next height holding up to `max_txs` mempool
/// transactions in arrival order. An empty mempool yields an empty block.
inline Block create_block(const ConsensusState& s, std::size_t max_txs) {
  Block b;
  b.height = s.height;
  b.parent_hash = s.tip_hash();
  b.proposer = s.node;
  b.view = s.view;
  for (const auto& tx : s.mempool) {
    if (b.transactions.size() >= max_txs) break;
    if (s.mempool_ids.count(tx.tx_id) == 0) continue;
    b.transactions.push_back(tx);
  }
  return seal_block(std::move(b));
}

inline void add_transaction(ConsensusState& s, const Transaction& tx) {
  if (s.committed_tx_ids.count(tx.tx_id) != 0) return;
  if (!s.mempool_ids.insert(tx.tx_id).second) return;
  s.mempool.push_back(tx);
}

inline void apply_message(ConsensusState& s, const ConsensusMessage& msg, double now, StepResult& out);

namespace detail {

inline void broadcast(ConsensusState& s, StepResult& out, MessageBody body) {
  out.outbound.push_back({make_message(std::move(body), s.node), std::nullopt});
}

inline void buffer(ConsensusState& s, const ConsensusMessage& msg) {
  if (s.future.size() >= kMaxBufferedMessages) s.future.erase(s.future.begin());
  s.future.push_back(msg);
  ++s.counters.buffered;
}

inline void replay_buffered(ConsensusState& s, double now, StepResult& out) {
  if (s.future.empty()) return;
  std::vector<ConsensusMessage> pending;
  pending.swap(s.future);
  for (const auto& m : pending) apply_message(s, m, now, out);
}

/// History update for one committed block; elects the next epoch's set when
/// the block closes an epoch.
inline void record_commit_for_election(ConsensusState& s, const Block& b) {
  const auto& ctx = *s.election;
  const auto& set = s.epoch_sets.at(ctx.epoch_of(b.height));
  const NodeId scheduled = ctx.proposer(set, b.height, 0);
  const double keep = ctx.config.history_decay;
  auto bump = [&](NodeId id, double outcome) {
    if (id.value < s.live_profiles.size()) {
      auto& h = s.live_profiles[id.value].history;
      h = keep * h + (1.0 - keep) * outcome;
    }
  };
  if (b.proposer == scheduled) {
    bump(scheduled, 1.0);
  } else {
    bump(scheduled, 0.0);
    bump(b.proposer, 1.0);
  }
  const auto next_epoch = ctx.epoch_of(b.height + 1);
  while (s.epoch_sets.size() <= next_epoch) s.epoch_sets.push_back(ctx.elect(s.live_profiles));
}

inline bool touches_committed(const ConsensusState& s, const Block& b) {
  for (const auto& tx : b.transactions) {
    if (s.committed_tx_ids.count(tx.tx_id) != 0) return true;
  }
  return false;
}

inline bool valid_candidate(const ConsensusState& s, const Block& b) {
  return !validate_block(b, s.tip_hash(), s.height) && !touches_committed(s, b);
}

inline void enter_view(ConsensusState& s, std::uint64_t view, double now, StepResult& out);
inline void check_prepared(ConsensusState& s, double now, StepResult& out);
inline void check_commit(ConsensusState& s, double now, StepResult& out);

inline void compact_mempool(ConsensusState& s) {
  while (!s.mempool.empty() && s.mempool_ids.count(s.mempool.front().tx_id) == 0) s.mempool.pop_front();
  if (s.mempool.size() > 2 * s.mempool_ids.size() + 64) {
    std::deque<Transaction> live;
    for (const auto& tx : s.mempool) {
      if (s.mempool_ids.count(tx.tx_id) != 0) live.push_back(tx);
    }
    s.mempool.swap(live);
  }
}

inline void commit_block(ConsensusState& s, const BlockPtr& block, double now, StepResult& out) {
  s.phase = Phase::Committed;
  s.committed_chain.push_back(block);
  s.commit_times.push_back(now);
  out.committed.push_back(block);
  for (const auto& tx : block->transactions) {
    s.committed_tx_ids.insert(tx.tx_id);
    s.mempool_ids.erase(tx.tx_id);
  }
  compact_mempool(s);
  record_commit_for_election(s, *block);

  s.height += 1;
  s.requested_view = 0;
  s.lock.reset();
  s.prepare_votes.clear();
  s.commit_votes.clear();
  s.view_change_votes.clear();
  s.known_blocks.clear();
  s.current_timeout = s.config().timeout_s;
  s.role = s.is_member() ? Role::Validator : Role::Observer;
  enter_view(s, 0, now, out);
  replay_buffered(s, now, out);
}

inline void accept_proposal(ConsensusState& s, const BlockPtr& block, double now, StepResult& out) {
  s.current_block = block;
  s.known_blocks[block->block_hash] = block;
  s.phase = Phase::PrePrepared;
  s.proposal_seen = true;
  s.timeout_deadline = now + s.current_timeout;
  if (!s.prepare_sent) {
    s.prepare_sent = true;
    broadcast(s, out, Prepare{block->block_hash, s.height, s.view});
    s.prepare_votes[{s.view, block->block_hash}].insert(s.node);
  }
  const auto& cfg = s.config();
  if (cfg.protocol == ProtocolKind::HybridDposPbft && cfg.optimistic_fast_path && s.faults_observed == 0) {
    // Fast path: finalise on the proposer's signature, still voting so that
    // replicas which have seen faults can complete the three phases.
    s.lock = Lock{block, s.view};
    s.commit_sent = true;
    broadcast(s, out, Commit{block->block_hash, s.height, s.view});
    commit_block(s, block, now, out);
    return;
  }
  check_prepared(s, now, out);
  if (s.current_block == block) check_commit(s, now, out);
}

inline void propose(ConsensusState& s, double now, StepResult& out) {
  BlockPtr block;
  if (s.lock) {
    block = s.lock->block;
  } else {
    // Re-propose the most recently prepared block reported by the view change quorum.
    std::uint64_t best_view = 0;
    if (auto it = s.view_change_votes.find(s.view); it != s.view_change_votes.end()) {
      for (const auto& [sender, vc] : it->second) {
        if (vc.prepared && (!block || vc.prepared_view > best_view) && valid_candidate(s, *vc.prepared)) {
          block = vc.prepared;
          best_view = vc.prepared_view;
        }
      }
    }
  }
  if (!block) block = std::make_shared<const Block>(create_block(s, s.config().max_block_txs));
  broadcast(s, out, PrePrepare{block, s.view});
  accept_proposal(s, block, now, out);
}

inline void enter_view(ConsensusState& s, std::uint64_t view, double now, StepResult& out) {
  s.view = view;
  s.phase = Phase::Idle;
  s.current_block.reset();
  s.prepare_sent = false;
  s.commit_sent = false;
  s.proposal_seen = false;
  s.timeout_deadline = now + s.current_timeout;
  if (s.role != Role::Validator || !s.synced) return;
  if (s.proposer_for(s.height, view) == s.node) propose(s, now, out);
}

inline void check_prepared(ConsensusState& s, double now, StepResult& out) {
  if (s.config().protocol == ProtocolKind::PureDpos) return;
  const auto q = s.quorum();
  // A prepare quorum in the current view moves the lock to that block.
  for (auto it = s.prepare_votes.lower_bound({s.view, Digest{}}); it != s.prepare_votes.end() && it->first.first == s.view;
       ++it) {
    if (it->second.size() < q) continue;
    auto known = s.known_blocks.find(it->first.second);
    if (known == s.known_blocks.end()) continue;
    if (!s.lock || s.lock->view < s.view || s.lock->block->block_hash == known->first) {
      s.lock = Lock{known->second, s.view};
    }
  }
  if (!s.current_block && s.lock && s.lock->view == s.view) {
    accept_proposal(s, s.lock->block, now, out);
    return;
  }
  if (!s.current_block || s.commit_sent) return;
  const auto& hash = s.current_block->block_hash;
  auto votes = s.prepare_votes.find({s.view, hash});
  if (votes == s.prepare_votes.end() || votes->second.size() < q) return;
  s.phase = Phase::Prepared;
  s.lock = Lock{s.current_block, s.view};
  s.commit_sent = true;
  s.timeout_deadline = now + s.current_timeout;
  broadcast(s, out, Commit{hash, s.height, s.view});
  s.commit_votes[{s.view, hash}].insert(s.node);
}

inline void check_commit(ConsensusState& s, double now, StepResult& out) {
  const auto q = s.quorum();
  const auto& tally = s.config().protocol == ProtocolKind::PureDpos ? s.prepare_votes : s.commit_votes;
  for (const auto& [key, voters] : tally) {
    if (voters.size() < q) continue;
    auto known = s.known_blocks.find(key.second);
    if (known == s.known_blocks.end()) continue;
    const BlockPtr block = known->second;
    commit_block(s, block, now, out);
    return;
  }
}

inline void check_view_change(ConsensusState& s, double now, StepResult& out) {
  const auto q = s.quorum();
  for (auto it = s.view_change_votes.rbegin(); it != s.view_change_votes.rend(); ++it) {
    if (it->first <= s.view) break;
    if (it->second.size() < q) continue;
    ++s.counters.view_changes;
    ++s.faults_observed;
    enter_view(s, it->first, now, out);
    replay_buffered(s, now, out);
    return;
  }
}

inline void send_view_change(ConsensusState& s, std::uint64_t target, StepResult& out) {
  s.requested_view = target;
  ViewChange vc{target, s.height, nullptr, 0};
  if (s.lock) {
    vc.prepared = s.lock->block;
    vc.prepared_view = s.lock->view;
  }
  s.view_change_votes[target].emplace(s.node, vc);
  broadcast(s, out, vc);
}

inline void on_pre_prepare(ConsensusState& s, const ConsensusMessage& msg, const PrePrepare& pp, double now,
                           StepResult& out) {
  if (pp.view < s.view) {
    ++s.counters.stale;
    return;
  }
  if (!pp.block) {
    ++s.counters.invalid_block;
    return;
  }
  if (msg.sender != s.proposer_for(s.height, pp.view)) {
    ++s.counters.wrong_proposer;
    ++s.faults_observed;
    return;
  }
  const auto& block = pp.block;
  const bool fresh_ok = block->view == pp.view && block->proposer == msg.sender;
  const bool reproposal_ok = block->view < pp.view;
  if (!valid_candidate(s, *block) || !(fresh_ok || reproposal_ok)) {
    ++s.counters.invalid_block;
    ++s.faults_observed;
    return;
  }
  if (pp.view > s.view) {
    s.known_blocks[block->block_hash] = block;
    buffer(s, msg);
    check_commit(s, now, out);
    return;
  }
  if (s.current_block) {
    if (s.current_block->block_hash != block->block_hash) {
      ++s.counters.equivocations_seen;
      ++s.faults_observed;
      s.known_blocks[block->block_hash] = block;
      check_prepared(s, now, out);
      check_commit(s, now, out);
    } else {
      ++s.counters.duplicate;
    }
    return;
  }
  if (s.lock && s.lock->block->block_hash != block->block_hash) {
    // Locked elsewhere: remember the block in case a quorum forms for it.
    s.known_blocks[block->block_hash] = block;
    s.proposal_seen = true;
    check_prepared(s, now, out);
    check_commit(s, now, out);
    return;
  }
  accept_proposal(s, block, now, out);
}

inline void on_prepare(ConsensusState& s, const ConsensusMessage& msg, const Prepare& p, double now, StepResult& out) {
  const bool dpos = s.config().protocol == ProtocolKind::PureDpos;
  if (!dpos && p.view < s.view) {
    ++s.counters.stale;
    return;
  }
  if (!dpos && p.view > s.view) {
    buffer(s, msg);
    return;
  }
  if (!s.prepare_votes[{p.view, p.block_hash}].insert(msg.sender).second) {
    ++s.counters.duplicate;
    return;
  }
  if (dpos) {
    check_commit(s, now, out);
  } else {
    check_prepared(s, now, out);
    check_commit(s, now, out);
  }
}

inline void on_commit(ConsensusState& s, const ConsensusMessage& msg, const Commit& c, double now, StepResult& out) {
  // Commit evidence is valid whatever view the replica is in now.
  if (!s.commit_votes[{c.view, c.block_hash}].insert(msg.sender).second) {
    ++s.counters.duplicate;
    return;
  }
  check_commit(s, now, out);
}

inline void on_view_change(ConsensusState& s, const ConsensusMessage& msg, const ViewChange& vc, double now,
                           StepResult& out) {
  if (s.config().protocol == ProtocolKind::PureDpos || vc.new_view <= s.view) {
    ++s.counters.stale;
    return;
  }
  auto& votes = s.view_change_votes[vc.new_view];
  if (!votes.emplace(msg.sender, vc).second) {
    ++s.counters.duplicate;
    return;
  }
  if (vc.prepared && vc.prepared->height == s.height && valid_candidate(s, *vc.prepared)) {
    s.known_blocks.emplace(vc.prepared->block_hash, vc.prepared);
  }
  // f + 1 requests guarantee an honest one: join rather than wait for our own timer.
  if (vc.new_view > s.requested_view && votes.size() >= max_faulty(s.validators().size()) + 1 &&
      votes.count(s.node) == 0) {
    send_view_change(s, vc.new_view, out);
  }
  check_view_change(s, now, out);
  check_commit(s, now, out);
}

}  // namespace detail

/// In-place transition for one received message.
inline void apply_message(ConsensusState& s, const ConsensusMessage& msg, double now, StepResult& out) {
  if (!verify_message(msg)) {
    ++s.counters.invalid_signature;
    return;
  }
  if (!s.synced) {
    detail::buffer(s, msg);
    return;
  }
  const auto h = msg.height();
  if (h < s.height) {
    ++s.counters.stale;
    return;
  }
  if (h > s.height) {
    detail::buffer(s, msg);
    return;
  }
  if (s.role != Role::Validator) {
    ++s.counters.stale;
    return;
  }
  if (!s.validators().contains(msg.sender)) {
    ++s.counters.unknown_sender;
    return;
  }
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, PrePrepare>) {
          detail::on_pre_prepare(s, msg, body, now, out);
        } else if constexpr (std::is_same_v<T, Prepare>) {
          detail::on_prepare(s, msg, body, now, out);
        } else if constexpr (std::is_same_v<T, Commit>) {
          detail::on_commit(s, msg, body, now, out);
        } else {
          detail::on_view_change(s, msg, body, now, out);
        }
      },
      msg.body);
}

/// In-place timer expiry. No-op before the deadline.
inline void apply_timeout(ConsensusState& s, double now, StepResult& out) {
  if (!s.synced || s.role != Role::Validator || now < s.timeout_deadline) return;
  if (s.config().protocol == ProtocolKind::PureDpos) {
    // Missed slot: move to the next proposer in the rotation without voting.
    ++s.counters.view_changes;
    detail::enter_view(s, s.view + 1, now, out);
    detail::replay_buffered(s, now, out);
    return;
  }
  const bool waiting_on_view_change = s.requested_view > s.view;
  // A silent proposer is replaced at the base timeout; a proposal that stalled,
  // or a view change that did not complete, means the timeout is too short.
  if (s.proposal_seen || waiting_on_view_change) s.current_timeout *= 2.0;
  const std::uint64_t target = std::max(s.view, s.requested_view) + 1;
  detail::send_view_change(s, target, out);
  s.timeout_deadline = now + s.current_timeout;
  detail::check_view_change(s, now, out);
}

/// Starts the replica's first view; the view-0 proposer of height 1 proposes.
inline void start(ConsensusState& s, double now, StepResult& out) { detail::enter_view(s, s.view, now, out); }

/// Installs a chain snapshot on a newly elected replica and replays what it
/// buffered while waiting.
inline void install_snapshot(ConsensusState& s, const ConsensusState& source, double now, StepResult& out) {
  s.committed_chain = source.committed_chain;
  s.commit_times = source.commit_times;
  s.committed_tx_ids = source.committed_tx_ids;
  s.epoch_sets = source.epoch_sets;
  s.live_profiles = source.live_profiles;
  for (auto id : s.committed_tx_ids) s.mempool_ids.erase(id);
  detail::compact_mempool(s);
  s.height = source.committed_chain.back()->height + 1;
  s.requested_view = 0;
  s.lock.reset();
  s.prepare_votes.clear();
  s.commit_votes.clear();
  s.view_change_votes.clear();
  s.known_blocks.clear();
  s.current_timeout = s.config().timeout_s;
  s.synced = true;
  s.role = s.is_member() ? Role::Validator : Role::Observer;
  detail::enter_view(s, 0, now, out);
  detail::replay_buffered(s, now, out);
}

struct Transition {
  ConsensusState state;
  std::vector<Outbound> outbound;
  std::vector<BlockPtr> committed;
};

/// Pure form of apply_message.
inline Transition handle_message(ConsensusState state, const ConsensusMessage& msg, double now) {
  StepResult out;
  apply_message(state, msg, now, out);
  return {std::move(state), std::move(out.outbound), std::move(out.committed)};
}

/// Pure form of apply_timeout.
inline Transition on_timeout(ConsensusState state, double now) {
  StepResult out;
  apply_timeout(state, now, out);
  return {std::move(state), std::move(out.outbound), std::move(out.committed)};
}

/// Number of leading blocks on which two chains agree; equals the shorter
/// length exactly when neither chain has diverged.
inline std::size_t common_prefix(const std::vector<BlockPtr>& a, const std::vector<BlockPtr>& b) {
  const auto n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i]->block_hash == b[i]->block_hash) ++i;
  return i;
}

}  // namespace uavchain::consensus
