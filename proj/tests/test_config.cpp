#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "alscd/config.hpp"

using namespace alscd;

TEST(Config, SectionsAndComments) {
  const Config c = Config::parse(
      "# top\n"
      "seed = 7\n"
      "[grid]\n"
      "cell_size=0.5\r\n"
      "  # indented comment\n"
      "[model]\n"
      "streams = zin\n"
      "widths=16,32,64\n");
  EXPECT_EQ(c.get<int>("", "seed", 0), 7);
  EXPECT_EQ(c.get<double>("grid", "cell_size", 1.0), 0.5);
  EXPECT_EQ(c.get<std::string>("model", "streams", ""), "zin");
  EXPECT_EQ(parse_list<int>(c.get("model", "widths"), "widths"), (std::vector<int>{16, 32, 64}));
  EXPECT_EQ(c.get<double>("grid", "missing", 2.5), 2.5);
  EXPECT_TRUE(c.has_section("model"));
  EXPECT_FALSE(c.has("model", "seed"));
}

TEST(Config, BadLinesReportLineNumber) {
  try {
    Config::parse("[a]\nx=1\nnot a pair\n");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.code(), Errc::BadConfig);
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(Config::parse("[open\n"), Error);
  EXPECT_THROW(Config::parse("=3\n"), Error);
}

TEST(Config, TypedErrorsNameTheKey) {
  const Config c = Config::parse("[train]\nepochs=ten\nflag=maybe\n");
  try {
    c.get<int>("train", "epochs", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadConfig);
    EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos);
  }
  EXPECT_THROW(c.get<bool>("train", "flag", false), Error);
  EXPECT_THROW(c.get("train", "nope"), Error);
}

TEST(Config, Bools) {
  const Config c = Config::parse("a=true\nb=0\n");
  EXPECT_TRUE(c.get<bool>("", "a", false));
  EXPECT_FALSE(c.get<bool>("", "b", true));
}

TEST(Config, TextRoundTrip) {
  Config c;
  c.set("", "seed", "42");
  c.set("grid", "cell_size", format_double(0.1));
  c.set("model", "streams", "zin,rgb");
  const Config back = Config::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.get<double>("grid", "cell_size", 0), 0.1);
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(parse_number<double>(format_double(v), "v"), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(-9999), "-9999");
  EXPECT_EQ(parse_number<double>(format_double(std::numeric_limits<double>::denorm_min()), "v"),
            std::numeric_limits<double>::denorm_min());
}

TEST(ParseNumber, RejectsTrailingGarbage) {
  EXPECT_THROW(parse_number<int>("12x", "k"), Error);
  EXPECT_THROW(parse_number<double>("", "k"), Error);
  EXPECT_EQ(parse_number<int>(" +4 ", "k"), 4);
}
