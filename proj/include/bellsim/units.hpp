#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace bellsim {

// Internal time base: signed 64-bit picosecond ticks. Covers ~10^6 s
// comfortably, which is far beyond any run length we simulate.
using Picoseconds = std::chrono::duration<std::int64_t, std::pico>;

inline constexpr double kPicosecondsPerSecond = 1e12;

inline Picoseconds from_seconds(double s) {
  return Picoseconds{static_cast<std::int64_t>(std::llround(s * kPicosecondsPerSecond))};
}

inline constexpr double to_seconds(Picoseconds t) {
  return static_cast<double>(t.count()) / kPicosecondsPerSecond;
}

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Floor division for possibly negative tick counts.
inline constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

enum class Side : std::uint8_t { Alice = 0, Bob = 1 };

// Output port of a two-channel polarizer.
enum class Outcome : std::uint8_t { Plus = 0, Minus = 1 };

inline constexpr int sign_of(Outcome o) { return o == Outcome::Plus ? 1 : -1; }
inline constexpr Outcome flip(Outcome o) { return o == Outcome::Plus ? Outcome::Minus : Outcome::Plus; }
inline constexpr char symbol(Outcome o) { return o == Outcome::Plus ? '+' : '-'; }

}  // namespace bellsim
