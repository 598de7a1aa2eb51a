#pragma once

#include <png.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>

#include "alscd/change.hpp"
#include "alscd/cloud_io.hpp"
#include "alscd/config.hpp"
#include "alscd/error.hpp"
#include "alscd/grid.hpp"
#include "alscd/raster.hpp"

namespace alscd {

inline constexpr double kFloatNoData = -9999.0;
inline constexpr double kLabelNoData = 255.0;

// ---------------------------------------------------------------------------
// files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed: " + path);
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create directory " + dir + ": " + ec.message());
}

/// .las binary, anything else XYZ text.
inline PointCloud read_cloud(const std::string& path) {
  const std::string bytes = read_file(path);
  if (std::filesystem::path(path).extension() == ".las")
    return parse_las(std::span<const std::byte>(reinterpret_cast<const std::byte*>(bytes.data()), bytes.size()));
  return parse_xyz_text(std::string_view(bytes));
}

inline void write_cloud(const std::string& path, const PointCloud& cloud) {
  write_file(path, std::filesystem::path(path).extension() == ".las" ? write_las(cloud) : write_xyz_text(cloud));
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid
//
// ncols / nrows / xllcorner / yllcorner / cellsize / NODATA_value, then
// nrows lines of ncols values, northernmost row first. Values use the
// shortest text that parses back to the same double.

struct AsciiGrid {
  GridSpec spec;
  Grid<double> values;
  double nodata = kFloatNoData;
};

template <class T>
std::string format_ascii_grid(const GridSpec& spec, const Grid<T>& g, double nodata, const Mask* valid = nullptr) {
  require_shape(g.same_shape(spec), "ascii grid: values do not match the grid spec");
  std::string out;
  out.reserve(spec.cells() * 6 + 160);
  out += "ncols " + std::to_string(spec.width) + "\nnrows " + std::to_string(spec.height) +
         "\nxllcorner " + format_double(spec.origin_x) + "\nyllcorner " + format_double(spec.origin_y) +
         "\ncellsize " + format_double(spec.cell_size) + "\nNODATA_value " + format_double(nodata) + "\n";
  char buf[64];
  for (std::size_t r = spec.height; r-- > 0;) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      if (c) out += ' ';
      const std::size_t i = spec.index(c, r);
      std::to_chars_result res;
      if (valid && !(*valid)[i])
        res = std::to_chars(buf, buf + sizeof buf, nodata);
      else if constexpr (std::is_floating_point_v<T>)
        res = std::to_chars(buf, buf + sizeof buf, static_cast<double>(g[i]));
      else
        res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(g[i]));
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

inline AsciiGrid parse_ascii_grid(std::string_view text) {
  AsciiGrid g;
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= text.size()) return std::nullopt;
    const std::size_t e = text.find('\n', pos);
    std::string_view l = text.substr(pos, e == std::string_view::npos ? std::string_view::npos : e - pos);
    pos = e == std::string_view::npos ? text.size() : e + 1;
    ++line_no;
    return l;
  };
  auto lower = [](std::string_view s) {
    std::string o(s);
    for (auto& ch : o) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return o;
  };
  const char* keys[] = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"};
  double header[6] = {};
  for (std::size_t k = 0; k < 6; ++k) {
    auto l = next_line();
    if (!l) throw Error(Errc::TruncatedStream, "ascii grid header ends after " + std::to_string(k) + " lines");
    const std::string_view s = xyz::trim(*l);
    const auto sp = s.find_first_of(" \t");
    if (sp == std::string_view::npos) throw LineError(Errc::MalformedLine, line_no, "expected '<key> <value>'");
    if (lower(s.substr(0, sp)) != keys[k])
      throw LineError(Errc::MalformedLine, line_no, "expected header key " + std::string(keys[k]));
    const std::string_view v = xyz::trim(s.substr(sp));
    auto res = std::from_chars(v.data(), v.data() + v.size(), header[k]);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw LineError(Errc::MalformedLine, line_no, "bad header value '" + std::string(v) + "'");
  }
  if (header[0] < 1 || header[1] < 1 || header[0] != std::floor(header[0]) || header[1] != std::floor(header[1]))
    throw Error(Errc::RangeError, "ncols and nrows must be positive integers");
  g.spec.width = static_cast<std::size_t>(header[0]);
  g.spec.height = static_cast<std::size_t>(header[1]);
  g.spec.origin_x = header[2];
  g.spec.origin_y = header[3];
  g.spec.cell_size = header[4];
  g.nodata = header[5];
  if (!(g.spec.cell_size > 0)) throw Error(Errc::RangeError, "cellsize must be > 0");
  g.values = Grid<double>(g.spec);
  for (std::size_t r = g.spec.height; r-- > 0;) {
    auto l = next_line();
    if (!l) throw Error(Errc::TruncatedStream, "ascii grid has " + std::to_string(g.spec.height - r - 1) + " of " +
                                                   std::to_string(g.spec.height) + " rows");
    const std::string_view s = *l;
    std::size_t p = 0, c = 0;
    while (true) {
      while (p < s.size() && (s[p] == ' ' || s[p] == '\t' || s[p] == '\r')) ++p;
      if (p >= s.size()) break;
      if (c == g.spec.width) throw LineError(Errc::MalformedLine, line_no, "more than ncols values");
      double v;
      auto res = std::from_chars(s.data() + p, s.data() + s.size(), v);
      if (res.ec != std::errc() || (res.ptr < s.data() + s.size() && *res.ptr != ' ' && *res.ptr != '\t' && *res.ptr != '\r'))
        throw LineError(Errc::MalformedLine, line_no, "non-numeric value");
      g.values(c++, r) = v;
      p = static_cast<std::size_t>(res.ptr - s.data());
    }
    if (c != g.spec.width)
      throw LineError(Errc::MalformedLine, line_no, "expected " + std::to_string(g.spec.width) + " values, found " + std::to_string(c));
  }
  while (auto l = next_line())
    if (!xyz::trim(*l).empty()) throw LineError(Errc::MalformedLine, line_no, "data after the last row");
  return g;
}

template <class T>
void save_ascii_grid(const std::string& path, const GridSpec& spec, const Grid<T>& g, double nodata,
                     const Mask* valid = nullptr) {
  write_file(path, format_ascii_grid(spec, g, nodata, valid));
}

inline AsciiGrid load_ascii_grid(const std::string& path) { return parse_ascii_grid(read_file(path)); }

/// Integer-valued grid in [0, 255] (labels, masks).
inline Grid<std::uint8_t> to_byte_grid(const AsciiGrid& g, const std::string& what) {
  Grid<std::uint8_t> out(g.spec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = g.values[i];
    if (!(v >= 0 && v <= 255) || v != std::floor(v)) throw Error(Errc::RangeError, what + ": value " + format_double(v) + " is not a byte");
    out[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

/// Six-line world file: pixel size, rotations, negative pixel height, then
/// the center of the upper-left pixel.
inline std::string world_file(const GridSpec& s) {
  return format_double(s.cell_size) + "\n0\n0\n" + format_double(-s.cell_size) + "\n" +
         format_double(s.origin_x + 0.5 * s.cell_size) + "\n" + format_double(s.max_y() - 0.5 * s.cell_size) + "\n";
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB)

inline void save_png(const std::string& path, const RgbImage& img) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(Errc::IoError, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(Errc::IoError, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::IoError, "libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline RgbImage load_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw Error(Errc::IoError, "cannot open " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw Error(Errc::BadMagic, path + " is not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(Errc::IoError, "libpng initialization failed");
  }
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::TruncatedStream, "libpng failed reading " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::UnsupportedFormat, path + ": only 8-bit RGB PNG is supported");
  }
  img = RgbImage(png_get_image_width(png, info), png_get_image_height(png, info));
  for (std::size_t y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + y * img.width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// ---------------------------------------------------------------------------
// raster directories

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

/// z.asc (NODATA -9999 on invalid cells), intensity, returns, r, g, b,
/// valid (0/1), a shared world file and crs.txt.
inline void save_surface_raster(const std::string& dir, const SurfaceRaster& r) {
  ensure_dir(dir);
  const GridSpec& s = r.spec;
  save_ascii_grid(join_path(dir, "z.asc"), s, r.z, kFloatNoData, &r.valid);
  save_ascii_grid(join_path(dir, "intensity.asc"), s, r.intensity, kFloatNoData);
  save_ascii_grid(join_path(dir, "returns.asc"), s, r.num_returns, kFloatNoData);
  save_ascii_grid(join_path(dir, "r.asc"), s, r.r, kFloatNoData);
  save_ascii_grid(join_path(dir, "g.asc"), s, r.g, kFloatNoData);
  save_ascii_grid(join_path(dir, "b.asc"), s, r.b, kFloatNoData);
  save_ascii_grid(join_path(dir, "valid.asc"), s, r.valid, kLabelNoData);
  write_file(join_path(dir, "surface.wld"), world_file(s));
  write_file(join_path(dir, "crs.txt"), s.crs_tag + "\n");
}

namespace detail {

inline std::string read_crs(const std::string& dir) {
  const std::string p = join_path(dir, "crs.txt");
  if (!std::filesystem::exists(p)) return {};
  return std::string(xyz::trim(read_file(p)));
}

template <class U>
Grid<U> narrow_grid(const AsciiGrid& g, double hi, const std::string& what) {
  Grid<U> out(g.spec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = g.values[i];
    if (!(v >= 0 && v <= hi) || v != std::floor(v)) throw Error(Errc::RangeError, what + ": value " + format_double(v) + " out of range");
    out[i] = static_cast<U>(v);
  }
  return out;
}

inline GridSpec spec_of(const AsciiGrid& g, const std::string& crs) {
  GridSpec s = g.spec;
  s.crs_tag = crs;
  return s;
}

}  // namespace detail

inline SurfaceRaster load_surface_raster(const std::string& dir) {
  const std::string crs = detail::read_crs(dir);
  const AsciiGrid z = load_ascii_grid(join_path(dir, "z.asc"));
  SurfaceRaster r(detail::spec_of(z, crs));
  auto load = [&](const std::string& name) {
    AsciiGrid g = load_ascii_grid(join_path(dir, name));
    require_same_spec(detail::spec_of(g, crs), r.spec, name);
    return g;
  };
  r.valid = detail::narrow_grid<std::uint8_t>(load("valid.asc"), 1, "valid.asc");
  r.intensity = detail::narrow_grid<std::uint16_t>(load("intensity.asc"), 65535, "intensity.asc");
  r.num_returns = detail::narrow_grid<std::uint8_t>(load("returns.asc"), 255, "returns.asc");
  r.r = detail::narrow_grid<std::uint16_t>(load("r.asc"), 65535, "r.asc");
  r.g = detail::narrow_grid<std::uint16_t>(load("g.asc"), 65535, "g.asc");
  r.b = detail::narrow_grid<std::uint16_t>(load("b.asc"), 65535, "b.asc");
  for (std::size_t i = 0; i < r.spec.cells(); ++i) r.z[i] = r.valid[i] ? z.values[i] : kNoDataZ;
  return r;
}

/// Binary mask grid (0/1) with its spec.
inline Mask load_mask(const std::string& path, GridSpec* spec = nullptr) {
  const AsciiGrid g = load_ascii_grid(path);
  if (spec) *spec = g.spec;
  return detail::narrow_grid<std::uint8_t>(g, 1, path);
}

/// label.asc (NODATA 255) and magnitude.asc (m).
inline void save_change_map(const std::string& dir, const ChangeMap& m) {
  ensure_dir(dir);
  save_ascii_grid(join_path(dir, "label.asc"), m.spec, m.label, kLabelNoData);
  save_ascii_grid(join_path(dir, "magnitude.asc"), m.spec, m.magnitude, kFloatNoData);
  write_file(join_path(dir, "change.wld"), world_file(m.spec));
  write_file(join_path(dir, "crs.txt"), m.spec.crs_tag + "\n");
}

inline ChangeMap load_change_map(const std::string& dir) {
  const std::string crs = detail::read_crs(dir);
  const AsciiGrid label = load_ascii_grid(join_path(dir, "label.asc"));
  const AsciiGrid mag = load_ascii_grid(join_path(dir, "magnitude.asc"));
  ChangeMap m(detail::spec_of(label, crs));
  require_same_spec(detail::spec_of(mag, crs), m.spec, "magnitude.asc");
  m.label = to_byte_grid(label, "label.asc");
  for (std::size_t i = 0; i < m.label.size(); ++i) {
    const auto l = m.label[i];
    if (l > 4 && l != label_value(ChangeLabel::NoData))
      throw Error(Errc::RangeError, "label.asc: unknown change label " + std::to_string(l));
  }
  m.magnitude = mag.values;
  return m;
}

}  // namespace alscd
