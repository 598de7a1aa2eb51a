#pragma once

#include <cstdint>
#include <string_view>

#include "alscd/grid.hpp"

namespace alscd {

enum class ChangeLabel : std::uint8_t {
  NoChange = 0,
  NewlyBuilt = 1,
  Demolished = 2,
  Taller = 3,
  Shorter = 4,
  NoData = 255,
};

inline constexpr std::uint8_t label_value(ChangeLabel l) { return static_cast<std::uint8_t>(l); }

inline constexpr std::string_view label_name(ChangeLabel l) {
  switch (l) {
    case ChangeLabel::NoChange: return "no_change";
    case ChangeLabel::NewlyBuilt: return "newly_built";
    case ChangeLabel::Demolished: return "demolished";
    case ChangeLabel::Taller: return "taller";
    case ChangeLabel::Shorter: return "shorter";
    case ChangeLabel::NoData: return "no_data";
  }
  return "unknown";
}

inline constexpr ChangeLabel kChangeClasses[] = {ChangeLabel::NewlyBuilt, ChangeLabel::Demolished, ChangeLabel::Taller,
                                                 ChangeLabel::Shorter};

/// Per-cell change class plus signed elevation change in meters.
struct ChangeMap {
  GridSpec spec;
  Grid<std::uint8_t> label;
  Grid<double> magnitude;

  ChangeMap() = default;
  explicit ChangeMap(const GridSpec& s) : spec(s), label(s), magnitude(s) {}

  ChangeLabel at(std::size_t i) const { return static_cast<ChangeLabel>(label[i]); }

  friend bool operator==(const ChangeMap&, const ChangeMap&) = default;
};

}  // namespace alscd
