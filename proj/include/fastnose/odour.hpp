#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace fastnose {

/// Odour species delivered by the olfactometer. Blank is the odourless
/// mineral-oil control.
enum class Odour { IA = 0, EB = 1, Eu = 2, H2 = 3, Blank = 4 };

inline constexpr std::size_t kOdourCount = 5;
inline constexpr std::array<Odour, kOdourCount> kAllOdours{
    Odour::IA, Odour::EB, Odour::Eu, Odour::H2, Odour::Blank};
inline constexpr std::array<Odour, 4> kActiveOdours{Odour::IA, Odour::EB, Odour::Eu,
                                                    Odour::H2};

constexpr std::size_t index_of(Odour o) { return static_cast<std::size_t>(o); }

/// Short names as used in manifests and parameter files: IA, EB, Eu, 2H, blank.
std::string_view odour_name(Odour o);
std::optional<Odour> parse_odour(std::string_view name);
/// Throws std::invalid_argument for unknown names.
Odour odour_from_name(std::string_view name);

/// Per-odour scalar table.
using OdourTable = std::array<double, kOdourCount>;

}  // namespace fastnose
