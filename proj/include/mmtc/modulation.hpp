#pragma once

#include <array>
#include <limits>

#include "mmtc/common.hpp"

namespace mmtc {

// Gray-mapped unit-energy QPSK. Bit pair (b1, b2) maps to
// ((1-2*b1) + j*(1-2*b2))/sqrt(2):
//   (0,0) -> (+1+j)/sqrt2   (0,1) -> (+1-j)/sqrt2
//   (1,0) -> (-1+j)/sqrt2   (1,1) -> (-1-j)/sqrt2
// Adjacent (rotationally neighbouring) symbols differ in exactly one bit.
inline constexpr int kBitsPerSymbol = 2;

inline cx qpsk_map(int b1, int b2) {
  if ((b1 != 0 && b1 != 1) || (b2 != 0 && b2 != 1))
    throw std::domain_error("qpsk_map: bits must be 0 or 1");
  const double s = 1.0 / std::sqrt(2.0);
  return {(1 - 2 * b1) * s, (1 - 2 * b2) * s};
}

inline std::array<int, 2> qpsk_demap_hard(cx symbol) {
  return {symbol.real() < 0.0 ? 1 : 0, symbol.imag() < 0.0 ? 1 : 0};
}

// Augmented alphabet A0 = A u {0}. Nonzero points first, in bit-pattern
// order 00,01,10,11; the zero (inactive) point is last.
struct AugmentedAlphabet {
  std::array<cx, 5> points;
  int zero_index;

  AugmentedAlphabet()
      : points{qpsk_map(0, 0), qpsk_map(0, 1), qpsk_map(1, 0), qpsk_map(1, 1),
               cx(0.0, 0.0)},
        zero_index(4) {}

  int size() const { return static_cast<int>(points.size()); }
  int constellation_size() const { return size() - 1; }
  cx operator[](int i) const { return points[i]; }

  // Nearest point by Euclidean distance; ties break to the lowest index.
  int nearest(cx d) const {
    int best = 0;
    double best_d = std::norm(d - points[0]);
    for (int i = 1; i < size(); ++i) {
      double dist = std::norm(d - points[i]);
      if (dist < best_d - 1e-15 * (1.0 + best_d)) {
        best_d = dist;
        best = i;
      }
    }
    return best;
  }

  int nearest_nonzero(cx d) const {
    int best = 0;
    double best_d = std::norm(d - points[0]);
    for (int i = 1; i < constellation_size(); ++i) {
      double dist = std::norm(d - points[i]);
      if (dist < best_d - 1e-15 * (1.0 + best_d)) {
        best_d = dist;
        best = i;
      }
    }
    return best;
  }

  // Sign of the z-th bit (z in {0,1}) of nonzero point i: +1 for bit 0,
  // -1 for bit 1. The zero point carries no bit labels.
  static int bit_sign(int point_index, int z) {
    int bit = (z == 0) ? (point_index >> 1) & 1 : point_index & 1;
    return bit == 0 ? +1 : -1;
  }
};

inline const AugmentedAlphabet& augmented_alphabet() {
  static const AugmentedAlphabet a;
  return a;
}

inline cx quantize_augmented(cx d_soft, const AugmentedAlphabet& alphabet) {
  return alphabet[alphabet.nearest(d_soft)];
}

}  // namespace mmtc
