#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "tta/checkpoint.hpp"
#include "tta/error.hpp"

using namespace tta;

namespace {

std::string serialize(const SmallClassifier& m) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(m, out);
  return out.str();
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesEveryArray) {
  const auto m = oracle::random_model({5, 7, 3, 4}, 12);
  std::istringstream in(serialize(m), std::ios::binary);
  const auto back = read_checkpoint(in);
  EXPECT_TRUE(back.same_architecture(m));
  EXPECT_EQ(back.content_hash(), m.content_hash());
  EXPECT_EQ(back.flat_params(ParamScope::kAllParams), m.flat_params(ParamScope::kAllParams));
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    EXPECT_EQ(back.layers()[l].bn.running_var, m.layers()[l].bn.running_var);
    EXPECT_EQ(back.layers()[l].activation, m.layers()[l].activation);
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize(oracle::random_model({2, 3, 2}, 1));
  ASSERT_GE(bytes.size(), 17u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("TTACKPT\0", 8));
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 2u);  // input_dim, little-endian u32
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 2u);  // layer count
}

TEST(Checkpoint, RejectsVersionMismatchAndGarbage) {
  auto bytes = serialize(oracle::random_model({2, 3, 2}, 1));
  auto wrong_version = bytes;
  wrong_version[8] = static_cast<char>(kCheckpointVersion + 1);
  std::istringstream a(wrong_version, std::ios::binary);
  try {
    read_checkpoint(a);
    FAIL() << "version mismatch accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream b(bad_magic, std::ios::binary);
  EXPECT_THROW(read_checkpoint(b), Error);
  std::istringstream c(bytes.substr(0, bytes.size() - 5), std::ios::binary);
  EXPECT_THROW(read_checkpoint(c), Error);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "tta_test_checkpoint.bin";
  const auto m = oracle::random_model({3, 4, 2}, 5);
  save_checkpoint(m, path);
  EXPECT_EQ(load_checkpoint(path).content_hash(), m.content_hash());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}
