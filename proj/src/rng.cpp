#include "flap/rng.hpp"

#include <cmath>

namespace flap {

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  // Box-Muller on two fresh uniforms; the cosine twin is kept for next call.
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::cos(theta);
  has_spare_ = true;
  return mean + stddev * r * std::sin(theta);
}

std::vector<size_t> Rng::permutation(size_t n) {
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) {
    perm[i] = i;
  }
  for (size_t i = n; i > 1; --i) {
    size_t j = uniform_int(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace flap
