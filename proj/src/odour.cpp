#include "fastnose/odour.hpp"

#include <stdexcept>

namespace fastnose {

std::string_view odour_name(Odour o) {
  switch (o) {
    case Odour::IA: return "IA";
    case Odour::EB: return "EB";
    case Odour::Eu: return "Eu";
    case Odour::H2: return "2H";
    case Odour::Blank: return "blank";
  }
  return "?";
}

std::optional<Odour> parse_odour(std::string_view name) {
  for (Odour o : kAllOdours) {
    if (odour_name(o) == name) return o;
  }
  return std::nullopt;
}

Odour odour_from_name(std::string_view name) {
  if (auto o = parse_odour(name)) return *o;
  throw std::invalid_argument("unknown odour '" + std::string(name) + "'");
}

}  // namespace fastnose
