#include "uavchain/domain.hpp"

#include <gtest/gtest.h>

#include <array>

using namespace uavchain;

namespace {

Block child_of(const Block& parent, std::vector<std::uint64_t> ids, NodeId proposer = NodeId{1}) {
  Block b;
  b.height = parent.height + 1;
  b.parent_hash = parent.block_hash;
  b.proposer = proposer;
  for (auto id : ids) b.transactions.push_back(Transaction{.tx_id = id, .origin = NodeId{0}});
  return seal_block(std::move(b));
}

}  // namespace

TEST(HashBlock, GoldenReferenceBlock) {
  // Computed with Python hashlib over the big-endian encoding.
  const std::array<std::uint64_t, 3> ids{1, 2, 3};
  EXPECT_EQ(hash_block(1, Digest::zero(), NodeId{3}, 0, ids).hex(),
            "7901a92a34b6b3bc5f7d887e1e2527c25bf9f79da2006957cedef102af1eb6aa");
  EXPECT_EQ(make_genesis().block_hash.hex(), "d4817aa5497628e7c77e6b606107042bbba3130888c5f47a375e6179be789fbb");
}

TEST(HashBlock, DeterministicAndSensitiveToHeight) {
  const std::array<std::uint64_t, 2> ids{7, 9};
  const auto a = hash_block(1, Digest::zero(), NodeId{2}, 0, ids);
  EXPECT_EQ(a, hash_block(1, Digest::zero(), NodeId{2}, 0, ids));
  EXPECT_NE(a, hash_block(0, Digest::zero(), NodeId{2}, 0, ids));
  EXPECT_NE(a, hash_block(1, Digest::zero(), NodeId{2}, 1, ids));
  const std::array<std::uint64_t, 2> swapped{9, 7};
  EXPECT_NE(a, hash_block(1, Digest::zero(), NodeId{2}, 0, swapped));
}

TEST(Digest, HexRoundTrip) {
  const auto d = make_genesis().block_hash;
  EXPECT_EQ(Digest::from_hex(d.hex()), d);
  EXPECT_THROW(Digest::from_hex("abc"), std::invalid_argument);
  EXPECT_THROW(Digest::from_hex(std::string(64, 'g')), std::invalid_argument);
  EXPECT_TRUE(Digest::zero().is_zero());
}

TEST(ValidateBlock, AcceptsWellFormedChild) {
  const auto g = make_genesis();
  const auto b = child_of(g, {1, 2});
  EXPECT_FALSE(validate_block(b, g.block_hash, 1).has_value());
}

TEST(ValidateBlock, RejectsGrandparentLink) {
  const auto g = make_genesis();
  const auto b1 = child_of(g, {1});
  auto b2 = child_of(b1, {2});
  b2.parent_hash = g.block_hash;  // points two heights back
  b2 = seal_block(b2);
  EXPECT_EQ(validate_block(b2, b1.block_hash, 2), BlockError::BadParent);
}

TEST(ValidateBlock, ErrorKinds) {
  const auto g = make_genesis();
  auto b = child_of(g, {1});
  EXPECT_EQ(validate_block(b, g.block_hash, 2), BlockError::BadHeight);

  auto forged = b;
  forged.proposer_signature.valid_flag = false;
  EXPECT_EQ(validate_block(forged, g.block_hash, 1), BlockError::BadSignature);

  auto tampered = b;
  tampered.transactions.push_back(Transaction{.tx_id = 99, .origin = NodeId{0}});
  EXPECT_EQ(validate_block(tampered, g.block_hash, 1), BlockError::BadHash);

  const auto dup = child_of(g, {4, 4});
  EXPECT_EQ(validate_block(dup, g.block_hash, 1), BlockError::DuplicateTx);

  auto other_signer = b;
  other_signer.proposer_signature = sign(b.block_hash, NodeId{8});
  EXPECT_EQ(validate_block(other_signer, g.block_hash, 1), BlockError::BadSignature);
}

TEST(Signature, SignVerify) {
  const auto d = make_genesis().block_hash;
  const auto sig = sign(d, NodeId{5});
  EXPECT_TRUE(verify(sig, d, NodeId{5}));
  EXPECT_FALSE(verify(sig, Digest::zero(), NodeId{5}));
  EXPECT_FALSE(verify(sig, d, NodeId{6}));
  auto forged = sig;
  forged.valid_flag = false;
  EXPECT_FALSE(verify(forged, d, NodeId{5}));
}

TEST(Message, DigestGoldenAndVerification) {
  const Prepare p{make_genesis().block_hash, 1, 2};
  EXPECT_EQ(message_digest(p).hex(), "c86056a2574d7aa3732b3e1622096e3a22653652d4fc6590bda591c1b8a632eb");
  auto m = make_message(p, NodeId{3});
  EXPECT_TRUE(verify_message(m));
  EXPECT_EQ(m.kind(), MessageKind::Prepare);
  EXPECT_EQ(m.height(), 1u);
  EXPECT_EQ(m.view(), 2u);
  m.sender = NodeId{4};
  EXPECT_FALSE(verify_message(m));
  // Same fields, different phase: digests differ.
  EXPECT_NE(message_digest(Commit{p.block_hash, 1, 2}), message_digest(p));
}

TEST(Chain, IntegrityAcrossHeights) {
  std::vector<Block> chain{make_genesis()};
  for (std::uint64_t h = 1; h <= 20; ++h) chain.push_back(child_of(chain.back(), {h * 10, h * 10 + 1}));
  for (std::size_t h = 1; h < chain.size(); ++h) {
    EXPECT_EQ(chain[h].parent_hash, chain[h - 1].block_hash);
    EXPECT_FALSE(validate_block(chain[h], chain[h - 1].block_hash, h).has_value());
  }
}
