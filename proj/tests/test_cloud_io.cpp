#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "alscd/cloud_io.hpp"

using namespace alscd;

namespace {

// Byte-level LAS assembly straight from the 1.2 header table, independent of
// the library writer.
struct LasBytes {
  std::vector<std::byte> buf;

  explicit LasBytes(std::size_t n) : buf(n) {}

  template <class T>
  void put(std::size_t off, T v) {
    std::memcpy(buf.data() + off, &v, sizeof(T));
  }
};

LasBytes two_point_format2_with_vlr() {
  // 227 header + 98 byte VLR (54 header + 44 payload) + 2 x 26 byte records = 377
  LasBytes f(377);
  std::memcpy(f.buf.data(), "LASF", 4);
  f.put<std::uint8_t>(24, 1);
  f.put<std::uint8_t>(25, 2);
  f.put<std::uint16_t>(94, 227);
  f.put<std::uint32_t>(96, 325);
  f.put<std::uint32_t>(100, 1);
  f.put<std::uint8_t>(104, 2);
  f.put<std::uint16_t>(105, 26);
  f.put<std::uint32_t>(107, 2);
  f.put<double>(131, 0.01);
  f.put<double>(139, 0.01);
  f.put<double>(147, 0.01);
  // VLR payload length
  f.put<std::uint16_t>(227 + 20, 44);
  // record 0 at 325
  f.put<std::int32_t>(325, 100);
  f.put<std::int32_t>(329, 50);
  f.put<std::int32_t>(333, 1234);
  f.put<std::uint16_t>(337, 700);
  f.put<std::uint8_t>(339, 0b00010001);  // return 1 of 2
  f.put<std::uint16_t>(345, 65535);
  f.put<std::uint16_t>(347, 10);
  f.put<std::uint16_t>(349, 20);
  // record 1 at 351
  f.put<std::int32_t>(351, 200);
  f.put<std::int32_t>(355, -50);
  f.put<std::int32_t>(359, 0);
  f.put<std::uint16_t>(363, 1);
  f.put<std::uint8_t>(365, 0b00100011);  // return 3 of 4
  return f;
}

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::IoError;
}

}  // namespace

TEST(ParseLas, HandAssembledFormat2) {
  auto f = two_point_format2_with_vlr();
  ASSERT_EQ(f.buf.size(), 377u);
  auto c = parse_las(f.buf);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_TRUE(c.has_rgb());
  EXPECT_DOUBLE_EQ(c.points()[0].x, 1.00);
  EXPECT_DOUBLE_EQ(c.points()[1].x, 2.00);
  EXPECT_DOUBLE_EQ(c.points()[0].y, 0.50);
  EXPECT_DOUBLE_EQ(c.points()[1].y, -0.50);
  EXPECT_DOUBLE_EQ(c.points()[0].z, 12.34);
  EXPECT_EQ(c.points()[0].intensity, 700);
  EXPECT_EQ(c.points()[0].num_returns, 2);
  EXPECT_EQ(c.points()[1].num_returns, 4);
  EXPECT_EQ(c.points()[0].r, 65535);
  EXPECT_EQ(c.points()[0].g, 10);
  EXPECT_EQ(c.points()[0].b, 20);
  ASSERT_TRUE(c.bounds().has_value());
  EXPECT_DOUBLE_EQ(c.bounds()->min_x, 1.0);
  EXPECT_DOUBLE_EQ(c.bounds()->max_x, 2.0);
}

TEST(ParseLas, ZeroCountGivesEmptyCloud) {
  auto f = two_point_format2_with_vlr();
  f.put<std::uint32_t>(107, 0);
  auto c = parse_las(f.buf);
  EXPECT_TRUE(c.empty());
  EXPECT_FALSE(c.bounds().has_value());
}

TEST(ParseLas, BadMagic) {
  auto f = two_point_format2_with_vlr();
  std::memcpy(f.buf.data(), "XASF", 4);
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::BadMagic);
}

TEST(ParseLas, TruncatedStream) {
  auto f = two_point_format2_with_vlr();
  f.put<std::uint32_t>(107, 3);
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::TruncatedStream);
  f.buf.resize(100);
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::TruncatedStream);
}

TEST(ParseLas, FormatWithoutRgbParses) {
  auto f = two_point_format2_with_vlr();
  f.put<std::uint8_t>(104, 0);
  auto c = parse_las(f.buf);  // 26-byte records are still long enough for format 0
  EXPECT_FALSE(c.has_rgb());
  for (const auto& p : c.points()) EXPECT_EQ(p.r + p.g + p.b, 0);
}

TEST(ParseLas, OtherFormatsUnsupported) {
  auto f = two_point_format2_with_vlr();
  f.put<std::uint8_t>(104, 6);
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::UnsupportedFormat);
  f.put<std::uint8_t>(104, 0x80 | 2);
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::UnsupportedFormat);
  f.put<std::uint8_t>(104, 3);  // 26 < 34 bytes required
  EXPECT_EQ(code_of([&] { parse_las(f.buf); }), Errc::UnsupportedFormat);
}

TEST(ParseLas, WriterRoundTripAtScale) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 500);
  std::vector<PointRecord> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back({674000 + u(rng), 6580000 + u(rng), u(rng) / 10, std::uint16_t(i), std::uint16_t(2 * i),
                   std::uint16_t(3 * i), std::uint16_t(40000 + i), std::uint8_t(1 + i % 5)});
  PointCloud c(pts, true);
  auto bytes = write_las(c, 0.001);
  auto back = parse_las(std::as_bytes(std::span(bytes.data(), bytes.size())));
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(back.points()[i].x, c.points()[i].x, 0.0005 + 1e-9);
    EXPECT_NEAR(back.points()[i].z, c.points()[i].z, 0.0005 + 1e-9);
    EXPECT_EQ(back.points()[i].intensity, c.points()[i].intensity);
    EXPECT_EQ(back.points()[i].num_returns, c.points()[i].num_returns);
    EXPECT_EQ(back.points()[i].b, c.points()[i].b);
  }
}

TEST(ParseXyz, SingleLine) {
  auto c = parse_xyz_text("1.0 2.0 10.5 255 0 0 700 2");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.points()[0].z, 10.5);
  EXPECT_EQ(c.points()[0].num_returns, 2);
  EXPECT_EQ(c.points()[0].r, 255);
  EXPECT_EQ(c.points()[0].intensity, 700);
  EXPECT_TRUE(c.has_rgb());
}

TEST(ParseXyz, EmptyAndCommentsOnly) {
  EXPECT_TRUE(parse_xyz_text("").empty());
  EXPECT_TRUE(parse_xyz_text("# nothing\n\n   \n").empty());
}

TEST(ParseXyz, WrongFieldCountReportsLine) {
  try {
    parse_xyz_text("1 2 3 4 5");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.code(), Errc::MalformedLine);
    EXPECT_EQ(e.line(), 1u);
  }
  try {
    parse_xyz_text("# header\n1 2 3 4 5 6 7 1\n1 2 x 4 5 6 7 1\n");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.code(), Errc::MalformedLine);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseXyz, ReturnCountRange) {
  EXPECT_EQ(code_of([] { parse_xyz_text("1 2 3 4 5 6 7 0"); }), Errc::RangeError);
  EXPECT_EQ(code_of([] { parse_xyz_text("1 2 3 4 5 6 7 16"); }), Errc::RangeError);
  EXPECT_EQ(code_of([] { parse_xyz_text("1 2 3 70000 5 6 7 1"); }), Errc::RangeError);
}

TEST(WriteXyz, EmptyCloudIsHeaderOnly) {
  auto text = write_xyz_text(PointCloud{});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(text.front(), '#');
}

TEST(WriteXyz, SinglePointRoundTrip) {
  PointCloud c({{0.1, -7.3e-5, 1e10 / 3, 1, 2, 3, 4, 15}}, true);
  auto text = write_xyz_text(c);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(parse_xyz_text(text), c);
}

TEST(WriteXyz, RandomCloudRoundTripIsExact) {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::uniform_int_distribution<int> c16(0, 65535), nr(1, 15);
  std::vector<PointRecord> pts;
  for (int i = 0; i < 10000; ++i)
    pts.push_back({u(rng), u(rng), u(rng) * 1e-3, std::uint16_t(c16(rng)), std::uint16_t(c16(rng)),
                   std::uint16_t(c16(rng)), std::uint16_t(c16(rng)), std::uint8_t(nr(rng))});
  PointCloud c(pts, true, "EPSG:3006");
  EXPECT_EQ(parse_xyz_text(write_xyz_text(c)), c);
  PointCloud no_rgb(pts, false);
  EXPECT_EQ(parse_xyz_text(write_xyz_text(no_rgb)), no_rgb);
}

TEST(PointCloud, BoundsAndRgbInvariant) {
  PointCloud c({{1, 5, -2, 9, 9, 9, 0, 1}, {-3, 2, 8, 1, 1, 1, 0, 1}}, false);
  EXPECT_EQ(*c.bounds(), (Bounds{-3, 2, -2, 1, 5, 8}));
  for (const auto& p : c.points()) EXPECT_EQ(p.r + p.g + p.b, 0);
}
