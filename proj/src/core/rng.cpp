#include "occaug/core/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "occaug/core/error.hpp"

namespace occaug {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw DomainError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
  if (span == 0) return static_cast<std::int64_t>(engine_());  // full range
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span + 1) % span;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw > limit);
  return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::normal() {
  double u1 = uniform01();
  const double u2 = uniform01();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::uint64_t> Rng::save_state() const {
  std::ostringstream out;
  out << engine_;
  std::istringstream in(out.str());
  std::vector<std::uint64_t> words;
  std::uint64_t w;
  while (in >> w) words.push_back(w);
  return words;
}

void Rng::load_state(std::span<const std::uint64_t> words) {
  std::ostringstream text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text << ' ';
    text << words[i];
  }
  std::istringstream in(text.str());
  std::mt19937_64 restored;
  in >> restored;
  if (in.fail()) throw FormatError("corrupt random stream state");
  engine_ = restored;
}

}  // namespace occaug
