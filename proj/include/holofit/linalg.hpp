#pragma once

// Fixed-size 2/3-vectors and 3x3 matrices over an arbitrary scalar, so the
// same geometry code runs on double and on ad::Var.

#include <array>
#include <cmath>

#include "holofit/ad.hpp"

namespace holofit {

using ad::value;

template <class S>
struct Vec2 {
  S x{}, y{};
};

template <class S>
struct Vec3 {
  S x{}, y{}, z{};

  S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  template <class T>
  Vec3<T> cast() const {
    return {T(x), T(y), T(z)};
  }
};

template <class S>
Vec3<S> operator+(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class S>
Vec3<S> operator-(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class S>
Vec3<S> operator-(const Vec3<S>& a) {
  return {-a.x, -a.y, -a.z};
}
template <class S>
Vec3<S> operator*(const S& s, const Vec3<S>& a) {
  return {s * a.x, s * a.y, s * a.z};
}
template <class S>
Vec3<S> operator*(const Vec3<S>& a, const S& s) {
  return s * a;
}
template <class S>
Vec3<S> operator/(const Vec3<S>& a, const S& s) {
  return {a.x / s, a.y / s, a.z / s};
}

template <class S>
S dot(const Vec3<S>& a, const Vec3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class S>
Vec3<S> cross(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class S>
S squared_norm(const Vec3<S>& a) {
  return dot(a, a);
}
template <class S>
S norm(const Vec3<S>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <class S>
struct Mat3 {
  // Row-major storage.
  std::array<S, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {S(1.0), S(0.0), S(0.0), S(0.0), S(1.0), S(0.0), S(0.0), S(0.0), S(1.0)};
    return r;
  }

  static Mat3 from_columns(const Vec3<S>& c0, const Vec3<S>& c1, const Vec3<S>& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }

  S& operator()(int r, int c) { return m[r * 3 + c]; }
  const S& operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3<S> column(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  template <class T>
  Mat3<T> cast() const {
    Mat3<T> r;
    for (int i = 0; i < 9; ++i) r.m[i] = T(m[i]);
    return r;
  }
};

template <class S>
Mat3<S> operator*(const Mat3<S>& a, const Mat3<S>& b) {
  Mat3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
  return r;
}

template <class S>
Vec3<S> operator*(const Mat3<S>& a, const Vec3<S>& v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
          a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
          a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

template <class S>
S determinant(const Mat3<S>& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Rotation by `angle` radians about a unit `axis` (Rodrigues).
inline Mat3<double> axis_angle_matrix(const Vec3<double>& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis.x, y = axis.y, z = axis.z;
  Mat3<double> r;
  r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
         t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
         t * x * z - s * y, t * y * z + s * x, t * z * z + c};
  return r;
}

inline Mat3<double> rotation_vector_matrix(const Vec3<double>& rv) {
  const double angle = norm(rv);
  if (angle < 1e-15) return Mat3<double>::identity();
  return axis_angle_matrix(rv / angle, angle);
}

// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Mat3<double> align_vectors(const Vec3<double>& from, const Vec3<double>& to) {
  const Vec3<double> axis = cross(from, to);
  const double s = norm(axis);
  const double c = dot(from, to);
  if (s < 1e-15) {
    if (c > 0) return Mat3<double>::identity();
    // Antiparallel: rotate pi about any perpendicular axis.
    Vec3<double> p = std::abs(from.x) < 0.9 ? Vec3<double>{1, 0, 0} : Vec3<double>{0, 1, 0};
    p = cross(from, p);
    return axis_angle_matrix(p / norm(p), M_PI);
  }
  return axis_angle_matrix(axis / s, std::atan2(s, c));
}

}  // namespace holofit
