#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "vibgmm/checkpoint.hpp"
#include "vibgmm/nn.hpp"

using namespace vibgmm;

TEST(Checkpoint, RoundTripPreservesNamesShapesAndBits) {
  Rng rng(1);
  Mlp net(MlpSpec::encoder(3, {4}, 2), "encoder", rng);
  const auto params = net.parameters();
  std::vector<NamedTensor> tensors = snapshot(params);
  tensors.push_back({"scalar", Tensor::scalar(-0.0)});
  const auto bytes = encode_checkpoint(tensors);
  const auto back = decode_checkpoint(bytes, "mem");
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].tensor.shape(), tensors[i].tensor.shape());
    for (std::size_t j = 0; j < back[i].tensor.size(); ++j) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i].tensor[j]), std::bit_cast<std::uint64_t>(tensors[i].tensor[j]));
    }
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint({{"ab", Tensor::vector({1.0})}});
  // magic, version, name length, name, rank, one dim, one f64
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 4 + 8 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VIBW");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 'a');
  EXPECT_EQ(bytes[14], 1);  // rank
  EXPECT_EQ(bytes[18], 1);  // dim
  // 1.0 little-endian: 00 .. 00 f0 3f
  EXPECT_EQ(bytes[33], 0x3f);
  EXPECT_EQ(bytes[32], 0xf0);
}

TEST(Checkpoint, BadMagicAndTruncationReportOffsets) {
  auto bytes = encode_checkpoint({{"w", Tensor::vector({1.0, 2.0})}});
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad, "mem"), ParseError);
  bytes.pop_back();
  try {
    decode_checkpoint(bytes, "mem");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FileRoundTripAndRestore) {
  Rng rng(2);
  Mlp a(MlpSpec::encoder(2, {3}, 1), "enc", rng);
  Mlp b(MlpSpec::encoder(2, {3}, 1), "enc");
  const auto path = (std::filesystem::temp_directory_path() / "vibgmm_ckpt_test.vibw").string();
  save_checkpoint(path, snapshot(a.parameters()));
  restore(b.parameters(), load_checkpoint(path));
  std::remove(path.c_str());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i]->value, b.parameters()[i]->value);
  }
}

TEST(Checkpoint, RestoreRejectsMissingOrMisshapen) {
  Mlp net(MlpSpec::encoder(2, {3}, 1), "enc");
  EXPECT_THROW(restore(net.parameters(), {}), ParseError);
  auto tensors = snapshot(net.parameters());
  tensors[0].tensor = Tensor(Shape{3, 3});
  EXPECT_THROW(restore(net.parameters(), tensors), DimensionError);
}
