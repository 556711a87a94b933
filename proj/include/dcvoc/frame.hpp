#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace dcvoc {

// Planar (alpha-beta frame) phasor algebra. Complex quantities a+jb live as
// Vec2 [a b]^T or, when they act as operators, as the 2x2 matrix
// [a -b; b a].
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Planar rotation by an unwrapped angle in radians.
struct Rot2 {
  double angle{0.0};

  Rot2() = default;
  explicit Rot2(double theta) : angle(theta) {}

  Mat2 matrix() const {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat2 m;
    m << c, -s, s, c;
    return m;
  }

  Vec2 operator*(const Vec2& v) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
  }

  Rot2 operator*(const Rot2& other) const { return Rot2(angle + other.angle); }
};

inline Vec2 rotate(const Rot2& r, const Vec2& v) { return r * v; }

/// Matrix form of the complex number a+jb.
inline Mat2 complex_to_matrix(const Vec2& c) {
  Mat2 m;
  m << c.x(), -c.y(), c.y(), c.x();
  return m;
}

/// Inverse of complex_to_matrix; expects m11=m22, m12=-m21.
inline Vec2 matrix_to_complex(const Mat2& m) { return Vec2(m(0, 0), m(1, 0)); }

/// Complex product (a1+jb1)(a2+jb2) on vector representatives.
inline Vec2 complex_mul(const Vec2& a, const Vec2& b) {
  return Vec2(a.x() * b.x() - a.y() * b.y(), a.x() * b.y() + a.y() * b.x());
}

struct PowerPair {
  double p{0.0};
  double q{0.0};
};

/// p+jq = (u_alpha + j u_beta) * conj(i_alpha + j i_beta).
inline PowerPair apparent_power(const Vec2& u, const Vec2& i) {
  return {u.x() * i.x() + u.y() * i.y(), u.y() * i.x() - u.x() * i.y()};
}

/// (p_phi, q_phi) = e^{J(pi/2 - phi)} (p, q) / scale.
/// scale is i^2, i_ref^2 or u^2 depending on the caller.
inline PowerPair rotated_power(double p, double q, double phi, double scale) {
  if (scale <= 0.0) {
    throw std::domain_error("rotated_power: nonpositive magnitude-squared scale");
  }
  const Vec2 r = Rot2(M_PI_2 - phi) * Vec2(p, q);
  return {r.x() / scale, r.y() / scale};
}

}  // namespace dcvoc
