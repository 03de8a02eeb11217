#pragma once

// Scalar triple-loop reference implementations of the mask algebra, written
// against plain doubles so the tensor code can be checked independently.

#include <algorithm>
#include <vector>

namespace oracle {

struct Rig {
  int C = 0, P = 0, H = 0, W = 0;
  std::vector<double> ar_plus, ar_minus;  // [C*P]
  std::vector<double> att_diff;           // [C]
  std::vector<double> parts;              // [P*H*W]
};

inline std::vector<double> ar_star(const Rig& r) {
  std::vector<double> out(r.P, 0.0);
  for (int p = 0; p < r.P; ++p) {
    double acc = 0;
    for (int c = 0; c < r.C; ++c) {
      if (r.att_diff[c] > 0) acc += r.ar_plus[c * r.P + p];
      if (r.att_diff[c] < 0) acc += r.ar_minus[c * r.P + p];
    }
    out[p] = std::min(1.0, acc);
  }
  return out;
}

inline std::vector<double> preserved(const Rig& r) {
  auto star = ar_star(r);
  std::vector<double> out(r.H * r.W, 0.0);
  for (int y = 0; y < r.H; ++y)
    for (int x = 0; x < r.W; ++x) {
      double covered = 0;
      for (int p = 0; p < r.P; ++p) covered += r.parts[(p * r.H + y) * r.W + x] * star[p];
      out[y * r.W + x] = std::clamp(1.0 - covered, 0.0, 1.0);
    }
  return out;
}

// Editable coverage for a single +-e_i diff (set rig.att_diff accordingly).
inline std::vector<double> influence(const Rig& r) {
  auto star = ar_star(r);
  std::vector<double> out(r.H * r.W, 0.0);
  for (int y = 0; y < r.H; ++y)
    for (int x = 0; x < r.W; ++x) {
      double covered = 0;
      for (int p = 0; p < r.P; ++p) covered += r.parts[(p * r.H + y) * r.W + x] * star[p];
      out[y * r.W + x] = std::min(1.0, covered);
    }
  return out;
}

}  // namespace oracle
