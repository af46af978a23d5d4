#include <gtest/gtest.h>

#include "ponbranch/common.hpp"

using namespace ponbranch;

TEST(SubSeed, DependsOnPurposeAndIndex) {
  EXPECT_EQ(sub_seed(7, "plants"), sub_seed(7, "plants"));
  EXPECT_NE(sub_seed(7, "plants"), sub_seed(7, "noise"));
  EXPECT_NE(sub_seed(7, "plants"), sub_seed(8, "plants"));
  EXPECT_NE(sub_seed(7, "noise", 0), sub_seed(7, "noise", 1));
}

TEST(Hasher, LengthPrefixedStrings) {
  EXPECT_NE(Hasher{}.add("ab").add("c").value(), Hasher{}.add("a").add("bc").value());
  EXPECT_EQ(Hasher::to_hex(0xabcULL), "0000000000000abc");
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1e-12, 123456.789, -3.25}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_fixed(2.0 / 3.0, 3), "0.667");
}

TEST(KeyValueConfig, SectionsCommentsAndTypes) {
  const auto kv = KeyValueConfig::parse(
      "# plant\n"
      "feeder_length = 1000   # metres\n"
      "name = setup a\n"
      "\n"
      "[branch.1]\n"
      "length = 150.5\n"
      "[branch.0]\n"
      "length = 60\n");
  EXPECT_DOUBLE_EQ(kv.get_double("feeder_length", 0), 1000);
  EXPECT_EQ(kv.get_string("name", ""), "setup a");
  EXPECT_DOUBLE_EQ(kv.get_double("branch.1.length", 0), 150.5);
  EXPECT_EQ(kv.get_int("missing", 5), 5);
  EXPECT_EQ(kv.indices("branch"), (std::vector<std::size_t>{0, 1}));
}

TEST(KeyValueConfig, SerializeRoundTrip) {
  KeyValueConfig kv;
  kv.set("a", 1.5);
  kv.set("branch.0.length", 60.0);
  kv.set("branch.0.reflectance", -14.7);
  kv.set("sim.rng_seed", std::uint64_t{99});
  const auto back = KeyValueConfig::parse(kv.serialize());
  EXPECT_EQ(back.entries(), kv.entries());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), ValidationError);
  EXPECT_THROW(KeyValueConfig::parse("[broken\n"), ValidationError);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), ValidationError);
  const auto kv = KeyValueConfig::parse("x = abc\ny = 1.5\n");
  EXPECT_THROW(kv.get_double("x", 0), ValidationError);
  EXPECT_THROW(kv.get_int("y", 0), ValidationError);
}
