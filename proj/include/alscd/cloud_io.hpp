#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "alscd/error.hpp"

namespace alscd {

static_assert(std::endian::native == std::endian::little, "LAS decoding assumes a little-endian host");

/// One LiDAR return. Elevation lives in z, color in r/g/b.
struct PointRecord {
  double x = 0, y = 0, z = 0;
  std::uint16_t r = 0, g = 0, b = 0;
  std::uint16_t intensity = 0;
  std::uint8_t num_returns = 1;

  friend bool operator==(const PointRecord&, const PointRecord&) = default;
};

struct Bounds {
  double min_x, min_y, min_z, max_x, max_y, max_z;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Ordered, immutable point set. Bounds are absent exactly when the cloud is empty.
class PointCloud {
 public:
  PointCloud() = default;
  PointCloud(std::vector<PointRecord> points, bool has_rgb, std::string crs_tag = {})
      : points_(std::move(points)), has_rgb_(has_rgb), crs_tag_(std::move(crs_tag)) {
    if (!has_rgb_)
      for (auto& p : points_) p.r = p.g = p.b = 0;
    for (const auto& p : points_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw Error(Errc::RangeError, "point coordinates must be finite");
      if (p.num_returns < 1) throw Error(Errc::RangeError, "num_returns must be >= 1");
    }
    if (!points_.empty()) {
      Bounds b{points_[0].x, points_[0].y, points_[0].z, points_[0].x, points_[0].y, points_[0].z};
      for (const auto& p : points_) {
        b.min_x = std::min(b.min_x, p.x);
        b.min_y = std::min(b.min_y, p.y);
        b.min_z = std::min(b.min_z, p.z);
        b.max_x = std::max(b.max_x, p.x);
        b.max_y = std::max(b.max_y, p.y);
        b.max_z = std::max(b.max_z, p.z);
      }
      bounds_ = b;
    }
  }

  const std::vector<PointRecord>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  bool has_rgb() const noexcept { return has_rgb_; }
  const std::optional<Bounds>& bounds() const noexcept { return bounds_; }
  const std::string& crs_tag() const noexcept { return crs_tag_; }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.has_rgb_ == b.has_rgb_ && a.crs_tag_ == b.crs_tag_ && a.points_ == b.points_;
  }

 private:
  std::vector<PointRecord> points_;
  bool has_rgb_ = true;
  std::string crs_tag_;
  std::optional<Bounds> bounds_;
};

// ---------------------------------------------------------------------------
// LAS 1.x, point formats 0-3, uncompressed.

namespace las {

inline constexpr std::size_t kHeaderSize = 227;

inline constexpr std::size_t min_record_length(int format) {
  constexpr std::array<std::size_t, 4> len{20, 28, 26, 34};
  return len[static_cast<std::size_t>(format)];
}

template <class T>
T read_le(std::span<const std::byte> buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

template <class T>
void put_le(std::string& out, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.append(raw, sizeof(T));
}

}  // namespace las

inline PointCloud parse_las(std::span<const std::byte> bytes) {
  using las::read_le;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "LASF", 4) != 0)
    throw Error(Errc::BadMagic, "missing LASF signature");
  if (bytes.size() < las::kHeaderSize) throw Error(Errc::TruncatedStream, "LAS header shorter than 227 bytes");

  const auto header_size = read_le<std::uint16_t>(bytes, 94);
  const auto point_offset = read_le<std::uint32_t>(bytes, 96);
  const auto format_byte = read_le<std::uint8_t>(bytes, 104);
  const auto record_length = read_le<std::uint16_t>(bytes, 105);
  const auto count = read_le<std::uint32_t>(bytes, 107);
  const double sx = read_le<double>(bytes, 131), sy = read_le<double>(bytes, 139), sz = read_le<double>(bytes, 147);
  const double ox = read_le<double>(bytes, 155), oy = read_le<double>(bytes, 163), oz = read_le<double>(bytes, 171);

  if (format_byte & 0x80) throw Error(Errc::UnsupportedFormat, "compressed (LAZ) point data");
  const int format = format_byte & 0x3f;
  if (format > 3) throw Error(Errc::UnsupportedFormat, "point data record format " + std::to_string(format));
  if (header_size < las::kHeaderSize) throw Error(Errc::TruncatedStream, "header size field below 227");
  if (record_length < las::min_record_length(format))
    throw Error(Errc::UnsupportedFormat, "record length " + std::to_string(record_length) + " too short for format " +
                                             std::to_string(format));

  const bool has_rgb = format == 2 || format == 3;
  const std::size_t rgb_off = format == 2 ? 20 : 28;
  const std::size_t needed = std::size_t{point_offset} + std::size_t{count} * record_length;
  if (bytes.size() < needed)
    throw Error(Errc::TruncatedStream, "header announces " + std::to_string(count) + " records, stream holds " +
                                           std::to_string(bytes.size() < point_offset
                                                              ? 0
                                                              : (bytes.size() - point_offset) / record_length));

  std::vector<PointRecord> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t o = point_offset + i * record_length;
    PointRecord& p = pts[i];
    p.x = read_le<std::int32_t>(bytes, o) * sx + ox;
    p.y = read_le<std::int32_t>(bytes, o + 4) * sy + oy;
    p.z = read_le<std::int32_t>(bytes, o + 8) * sz + oz;
    p.intensity = read_le<std::uint16_t>(bytes, o + 12);
    // bits 3-5 of the return byte; writers that leave it 0 are read as single returns
    p.num_returns = static_cast<std::uint8_t>(std::max(1, (read_le<std::uint8_t>(bytes, o + 14) >> 3) & 0x7));
    if (has_rgb) {
      p.r = read_le<std::uint16_t>(bytes, o + rgb_off);
      p.g = read_le<std::uint16_t>(bytes, o + rgb_off + 2);
      p.b = read_le<std::uint16_t>(bytes, o + rgb_off + 4);
    }
  }
  return PointCloud(std::move(pts), has_rgb);
}

inline PointCloud parse_las(std::istream& in) {
  std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_las(std::as_bytes(std::span(buf.data(), buf.size())));
}

/// Writes LAS 1.2 with point format 2 (RGB) or 0. Coordinates are quantized
/// to `scale` around the cloud's minimum corner.
inline std::string write_las(const PointCloud& cloud, double scale = 0.001) {
  using las::put_le;
  const int format = cloud.has_rgb() ? 2 : 0;
  const std::uint16_t rec_len = static_cast<std::uint16_t>(las::min_record_length(format));
  const Bounds b = cloud.bounds().value_or(Bounds{0, 0, 0, 0, 0, 0});
  const double ox = std::floor(b.min_x), oy = std::floor(b.min_y), oz = std::floor(b.min_z);

  std::string out;
  out.reserve(las::kHeaderSize + cloud.size() * rec_len);
  out.append("LASF", 4);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint16_t>(out, 0);
  out.append(16, '\0');
  put_le<std::uint8_t>(out, 1);
  put_le<std::uint8_t>(out, 2);
  std::string ident(64, '\0');
  std::memcpy(ident.data() + 32, "alscd", 5);
  out += ident;
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint16_t>(out, 2024);
  put_le<std::uint16_t>(out, las::kHeaderSize);
  put_le<std::uint32_t>(out, las::kHeaderSize);
  put_le<std::uint32_t>(out, 0);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(format));
  put_le<std::uint16_t>(out, rec_len);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  std::array<std::uint32_t, 5> by_return{};
  by_return[0] = static_cast<std::uint32_t>(cloud.size());
  for (auto v : by_return) put_le(out, v);
  for (int i = 0; i < 3; ++i) put_le(out, scale);
  put_le(out, ox);
  put_le(out, oy);
  put_le(out, oz);
  for (double v : {b.max_x, b.min_x, b.max_y, b.min_y, b.max_z, b.min_z}) put_le(out, v);

  auto q = [scale](double v, double o) { return static_cast<std::int32_t>(std::llround((v - o) / scale)); };
  for (const auto& p : cloud.points()) {
    put_le(out, q(p.x, ox));
    put_le(out, q(p.y, oy));
    put_le(out, q(p.z, oz));
    put_le(out, p.intensity);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(0x01 | ((p.num_returns & 0x7) << 3)));
    put_le<std::uint8_t>(out, 0);
    put_le<std::int8_t>(out, 0);
    put_le<std::uint8_t>(out, 0);
    put_le<std::uint16_t>(out, 0);
    if (format == 2) {
      put_le(out, p.r);
      put_le(out, p.g);
      put_le(out, p.b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// XYZ text: "x y z r g b intensity num_returns", '#' comments.
//
// Two optional metadata comments are recognized: "# crs=<tag>" and
// "# has_rgb=0". The writer emits them only when they differ from the
// defaults, so an empty default cloud is a single header line.

namespace xyz {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace xyz

inline PointCloud parse_xyz_text(std::istream& in) {
  std::vector<PointRecord> pts;
  std::string crs;
  bool has_rgb = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view s = xyz::trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      const std::string_view body = xyz::trim(s.substr(1));
      if (body.starts_with("crs=")) crs = std::string(body.substr(4));
      if (body == "has_rgb=0") has_rgb = false;
      continue;
    }
    std::array<double, 8> v{};
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < s.size()) {
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
      if (pos >= s.size()) break;
      std::size_t end = pos;
      while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
      if (n == v.size()) throw LineError(Errc::MalformedLine, line_no, "more than 8 fields");
      const char* first = s.data() + pos;
      const char* last = s.data() + end;
      if (*first == '+') ++first;
      auto res = std::from_chars(first, last, v[n]);
      if (res.ec != std::errc() || res.ptr != last)
        throw LineError(Errc::MalformedLine, line_no, "non-numeric token '" + std::string(s.substr(pos, end - pos)) + "'");
      ++n;
      pos = end;
    }
    if (n != v.size())
      throw LineError(Errc::MalformedLine, line_no, "expected 8 fields, found " + std::to_string(n));
    for (std::size_t i = 0; i < 3; ++i)
      if (!std::isfinite(v[i])) throw LineError(Errc::RangeError, line_no, "non-finite coordinate");
    auto u16 = [&](double d, const char* what) {
      if (!(d >= 0 && d <= 65535) || d != std::floor(d))
        throw LineError(Errc::RangeError, line_no, std::string(what) + " must be an integer in [0, 65535]");
      return static_cast<std::uint16_t>(d);
    };
    if (!(v[7] >= 1 && v[7] <= 15) || v[7] != std::floor(v[7]))
      throw LineError(Errc::RangeError, line_no, "num_returns must be an integer in [1, 15]");
    pts.push_back(PointRecord{v[0], v[1], v[2], u16(v[3], "r"), u16(v[4], "g"), u16(v[5], "b"),
                              u16(v[6], "intensity"), static_cast<std::uint8_t>(v[7])});
  }
  return PointCloud(std::move(pts), has_rgb, std::move(crs));
}

inline PointCloud parse_xyz_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_xyz_text(in);
}

inline void write_xyz_text(const PointCloud& cloud, std::ostream& out) {
  std::string buf = "# x y z r g b intensity num_returns\n";
  if (!cloud.crs_tag().empty()) buf += "# crs=" + cloud.crs_tag() + "\n";
  if (!cloud.has_rgb()) buf += "# has_rgb=0\n";
  for (const auto& p : cloud.points()) {
    xyz::append_double(buf, p.x);
    buf += ' ';
    xyz::append_double(buf, p.y);
    buf += ' ';
    xyz::append_double(buf, p.z);
    for (unsigned v : {unsigned{p.r}, unsigned{p.g}, unsigned{p.b}, unsigned{p.intensity}, unsigned{p.num_returns}}) {
      buf += ' ';
      buf += std::to_string(v);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

inline std::string write_xyz_text(const PointCloud& cloud) {
  std::ostringstream os;
  write_xyz_text(cloud, os);
  return os.str();
}

}  // namespace alscd
