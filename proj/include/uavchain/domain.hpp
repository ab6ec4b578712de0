#pragma once

// Ledger and identity types shared by every layer: transactions, blocks,
// simulation-grade signatures and the four consensus message kinds.
//
// Canonical block encoding (input to hash_block), all integers big-endian:
//
//   height      u64
//   parent_hash 32 bytes
//   proposer    u64
//   view        u64
//   tx_id       u64   repeated once per transaction, in block order
//
// Digests are rendered as lowercase hex wherever they are logged.

#include "uavchain/hash.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

namespace uavchain {

struct NodeId {
  std::uint32_t value = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend std::ostream& operator<<(std::ostream& os, NodeId id) { return os << id.value; }
};

enum class TxKind : std::uint8_t { StatusReport, TaskAssignment, SupplyRequest, DamageReport };

inline constexpr std::string_view to_string(TxKind kind) noexcept {
  switch (kind) {
    case TxKind::StatusReport: return "status_report";
    case TxKind::TaskAssignment: return "task_assignment";
    case TxKind::SupplyRequest: return "supply_request";
    case TxKind::DamageReport: return "damage_report";
  }
  return "unknown";
}

inline constexpr std::uint32_t kDefaultPayloadBits = 2048;

struct Transaction {
  std::uint64_t tx_id = 0;
  NodeId origin;
  double created_at = 0.0;
  std::uint32_t payload_bits = kDefaultPayloadBits;
  TxKind kind = TxKind::StatusReport;

  bool well_formed() const noexcept { return payload_bits > 0 && created_at >= 0.0; }
};

/// Simulation-grade signature: who signed, what was signed, and whether the
/// signature would verify. Swapping in real cryptography only touches sign/verify.
struct Signature {
  NodeId signer;
  Digest digest;
  bool valid_flag = false;
};

inline Signature sign(const Digest& digest, NodeId signer) noexcept { return Signature{signer, digest, true}; }

inline bool verify(const Signature& sig, const Digest& digest, NodeId signer) noexcept {
  return sig.valid_flag && sig.digest == digest && sig.signer == signer;
}

struct Block {
  std::uint64_t height = 0;
  Digest parent_hash;
  NodeId proposer;
  std::uint64_t view = 0;
  std::vector<Transaction> transactions;
  Digest block_hash;
  Signature proposer_signature;

  std::uint64_t payload_bits() const noexcept {
    std::uint64_t bits = 0;
    for (const auto& tx : transactions) bits += tx.payload_bits;
    return bits;
  }
};

inline Digest hash_block(std::uint64_t height, const Digest& parent_hash, NodeId proposer, std::uint64_t view,
                         std::span<const std::uint64_t> tx_ids) {
  ByteWriter w;
  w.u64(height).digest(parent_hash).u64(proposer.value).u64(view);
  for (auto id : tx_ids) w.u64(id);
  return w.hash();
}

inline Digest hash_block(const Block& b) {
  std::vector<std::uint64_t> ids;
  ids.reserve(b.transactions.size());
  for (const auto& tx : b.transactions) ids.push_back(tx.tx_id);
  return hash_block(b.height, b.parent_hash, b.proposer, b.view, ids);
}

/// Fills block_hash and the proposer signature from the header fields.
inline Block seal_block(Block b) {
  b.block_hash = hash_block(b);
  b.proposer_signature = sign(b.block_hash, b.proposer);
  return b;
}

inline Block make_genesis() {
  Block g;
  g.proposer = NodeId{0};
  return seal_block(std::move(g));
}

enum class BlockError : std::uint8_t { BadHash, BadParent, BadHeight, BadSignature, DuplicateTx };

inline constexpr std::string_view to_string(BlockError e) noexcept {
  switch (e) {
    case BlockError::BadHash: return "bad_hash";
    case BlockError::BadParent: return "bad_parent";
    case BlockError::BadHeight: return "bad_height";
    case BlockError::BadSignature: return "bad_signature";
    case BlockError::DuplicateTx: return "duplicate_tx";
  }
  return "unknown";
}

/// nullopt when the block may extend `expected_parent` at `expected_height`.
inline std::optional<BlockError> validate_block(const Block& block, const Digest& expected_parent,
                                                std::uint64_t expected_height) {
  if (hash_block(block) != block.block_hash) return BlockError::BadHash;
  if (block.parent_hash != expected_parent) return BlockError::BadParent;
  if (block.height != expected_height) return BlockError::BadHeight;
  if (!verify(block.proposer_signature, block.block_hash, block.proposer)) return BlockError::BadSignature;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& tx : block.transactions) {
    if (!seen.insert(tx.tx_id).second) return BlockError::DuplicateTx;
  }
  return std::nullopt;
}

using BlockPtr = std::shared_ptr<const Block>;

// ---------------------------------------------------------------------------
// Consensus messages
// ---------------------------------------------------------------------------

/// Proposal for (block.height, view). A block prepared in an earlier view may be
/// re-proposed unchanged, so `view` can exceed block->view.
struct PrePrepare {
  BlockPtr block;
  std::uint64_t view = 0;
};

struct Prepare {
  Digest block_hash;
  std::uint64_t height = 0;
  std::uint64_t view = 0;
};

struct Commit {
  Digest block_hash;
  std::uint64_t height = 0;
  std::uint64_t view = 0;
};

/// Request to move `height` to `new_view`. Carries the sender's lock, if any:
/// the block it saw a prepare quorum for and the view of that quorum.
struct ViewChange {
  std::uint64_t new_view = 0;
  std::uint64_t height = 0;
  BlockPtr prepared;
  std::uint64_t prepared_view = 0;
};

using MessageBody = std::variant<PrePrepare, Prepare, Commit, ViewChange>;

enum class MessageKind : std::uint8_t { PrePrepare, Prepare, Commit, ViewChange };

inline constexpr std::string_view to_string(MessageKind k) noexcept {
  switch (k) {
    case MessageKind::PrePrepare: return "pre_prepare";
    case MessageKind::Prepare: return "prepare";
    case MessageKind::Commit: return "commit";
    case MessageKind::ViewChange: return "view_change";
  }
  return "unknown";
}

struct ConsensusMessage {
  MessageBody body;
  NodeId sender;
  Signature signature;

  MessageKind kind() const noexcept { return static_cast<MessageKind>(body.index()); }

  std::uint64_t height() const noexcept {
    return std::visit(
        [](const auto& b) -> std::uint64_t {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, PrePrepare>) {
            return b.block ? b.block->height : 0;
          } else {
            return b.height;
          }
        },
        body);
  }

  std::uint64_t view() const noexcept {
    return std::visit(
        [](const auto& b) -> std::uint64_t {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, ViewChange>) {
            return b.new_view;
          } else {
            return b.view;
          }
        },
        body);
  }

  /// Hash of the block the message refers to; zero for view changes.
  Digest block_hash() const noexcept {
    return std::visit(
        [](const auto& b) -> Digest {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, PrePrepare>) {
            return b.block ? b.block->block_hash : Digest{};
          } else if constexpr (std::is_same_v<T, ViewChange>) {
            return b.prepared ? b.prepared->block_hash : Digest{};
          } else {
            return b.block_hash;
          }
        },
        body);
  }
};

/// Digest a sender signs: kind, height, view and referenced block hash.
inline Digest message_digest(const MessageBody& body) {
  ConsensusMessage probe{body, {}, {}};
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(body.index())).u64(probe.height()).u64(probe.view()).digest(probe.block_hash());
  if (const auto* vc = std::get_if<ViewChange>(&body)) w.u64(vc->prepared_view);
  return w.hash();
}

inline ConsensusMessage make_message(MessageBody body, NodeId sender) {
  auto digest = message_digest(body);
  return ConsensusMessage{std::move(body), sender, sign(digest, sender)};
}

inline bool verify_message(const ConsensusMessage& msg) {
  return verify(msg.signature, message_digest(msg.body), msg.sender);
}

}  // namespace uavchain

template <>
struct std::hash<uavchain::NodeId> {
  std::size_t operator()(uavchain::NodeId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
