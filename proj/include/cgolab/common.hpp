#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgolab {

using complex = std::complex<double>;
inline constexpr double pi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const {
    double n = norm();
    return {x / n, y / n};
  }
  // rotate by +90 degrees
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Quintic smoothstep: 0 for t<=0, 1 for t>=1, C^2 join.
inline double smoothstep5(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

// C-infinity step built from exp(-1/t); flat to all orders at both ends,
// so windows made from it have superalgebraic spectral decay.
inline double smoothstep_inf(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// value and first two derivatives of smoothstep_inf, needed wherever the
// window's commutator with a differential operator has to be exact
struct StepJet {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

inline StepJet smoothstep_inf_jet(double t) {
  if (t <= 0.0) return {0.0, 0.0, 0.0};
  if (t >= 1.0) return {1.0, 0.0, 0.0};
  const double u = 1.0 - t;
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / u);
  const double ad1 = a / (t * t);
  const double bd1 = -b / (u * u);
  const double ad2 = a * (1.0 - 2.0 * t) / (t * t * t * t);
  const double bd2 = b * (1.0 - 2.0 * u) / (u * u * u * u);
  const double S = a + b;
  const double N = ad1 * b - a * bd1;
  StepJet j;
  j.v = a / S;
  j.d1 = N / (S * S);
  j.d2 = (ad2 * b - a * bd2) / (S * S) -
         2.0 * N * (ad1 + bd1) / (S * S * S);
  return j;
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace cgolab
