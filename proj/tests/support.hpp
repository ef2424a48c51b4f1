// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "artic/core_math.hpp"
#include "artic/params.hpp"

namespace artic::testing {

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Rotation::from_wxyz(n(rng), n(rng), n(rng), n(rng));
}

inline RigidTransform random_transform(std::mt19937_64& rng, double scale = 1.0) {
  return {random_rotation(rng), random_vec(rng, scale)};
}

/// Relative error with an absolute floor for tiny gradients.
inline bool grad_close(double analytic, double numeric, double rel_tol, double abs_floor,
                       double abs_tol) {
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  if (mag < abs_floor) return std::abs(analytic - numeric) < abs_tol;
  return std::abs(analytic - numeric) / mag < rel_tol;
}

inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
};

/// Compares `grad` against central differences of `loss` for the given flat indices.
inline GradientCheck check_gradient(ParameterStore& store, const std::function<double()>& loss,
                                    std::span<const double> grad,
                                    std::span<const std::size_t> indices, double h,
                                    double rel_tol, double abs_floor, double abs_tol) {
  GradientCheck out;
  auto values = store.all();
  for (std::size_t i : indices) {
    const double numeric = central_difference(loss, values[i], h);
    const double analytic = grad[i];
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    const double err = mag < abs_floor ? std::abs(analytic - numeric)
                                       : std::abs(analytic - numeric) / mag;
    out.worst = std::max(out.worst, err);
    ++out.checked;
    if (!grad_close(analytic, numeric, rel_tol, abs_floor, abs_tol)) ++out.failed;
  }
  return out;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Fresh, empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / "artic_tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace artic::testing
