#include <gtest/gtest.h>

#include <random>

#include "steplabel/block_header.hpp"
#include "steplabel/core.hpp"

using namespace steplabel;

TEST(BlockHeader, ParsesStepAndDescription) {
  EXPECT_EQ(parse_block_header("# Step 1: Locate the dog\nboxes = find(image, 'dog')"),
            (BlockHeader{1, "Locate the dog"}));
  EXPECT_EQ(parse_block_header("# Step 12: Count items"), (BlockHeader{12, "Count items"}));
}

TEST(BlockHeader, ToleratesWhitespaceAndLeadingBlankLines) {
  EXPECT_EQ(parse_block_header("\n\n  #Step   3 :   Check it  \nx=1"), (BlockHeader{3, "Check it"}));
  EXPECT_EQ(parse_block_header("# step 2: lower case"), (BlockHeader{2, "lower case"}));
}

TEST(BlockHeader, MissingHeader) {
  EXPECT_THROW(parse_block_header("x = 1"), MissingHeader);
  EXPECT_THROW(parse_block_header(""), MissingHeader);
  EXPECT_THROW(parse_block_header("x = 1\n# Step 1: late"), MissingHeader);
  EXPECT_THROW(parse_block_header("# Steps to follow"), MissingHeader);
}

TEST(BlockHeader, MalformedIndex) {
  EXPECT_THROW(parse_block_header("# Step 0: zero"), MalformedIndex);
  EXPECT_THROW(parse_block_header("# Step -1: negative"), MalformedIndex);
  EXPECT_THROW(parse_block_header("# Step N: literal"), MalformedIndex);
  EXPECT_THROW(parse_block_header("# Step 1.5: fraction"), MalformedIndex);
}

TEST(BlockHeader, RendersCanonically) {
  EXPECT_EQ(render_block_header(4, "Sum up"), "# Step 4: Sum up");
}

TEST(BlockHeader, RoundTripProperty) {
  std::mt19937 rng(1234);
  const std::string alphabet = "abcdefghij KLMNOP,.()'-0123456789:";
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 100000)(rng);
    std::string d;
    const int len = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < len; ++i) {
      d += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    }
    d = trim(d);
    if (d.empty()) d = "x";
    const auto parsed = parse_block_header(render_block_header(n, d) + "\nvalue = 1\n");
    ASSERT_EQ(parsed.step_index, n);
    ASSERT_EQ(parsed.description, d);
  }
}
