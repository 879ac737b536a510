#pragma once

// Stand-in for a learned monocular block-position estimator: a rigid rotation
// about a virtual camera pivot (camera misalignment) plus isotropic Gaussian
// noise (estimator error).

#include <cmath>
#include <numbers>

#include "d2s/env.hpp"
#include "d2s/errors.hpp"
#include "d2s/rng.hpp"

namespace d2s {

struct PerceptionModel {
    double shift_deg = 0.0;
    double noise_std = 0.0;  // meters, per axis
    Vec3 camera_pivot{0.0, -0.5, 0.25};
};

/// Expected norm of a 3-D isotropic Gaussian with unit per-axis std: 2*sqrt(2/pi).
inline constexpr double kChi3Mean = 2.0 * 0.7978845608028654;  // sqrt(2/pi) = 0.79788...

/// Per-axis sigma whose 3-D Euclidean error has the requested mean.
inline double calibrate_noise(double target_mean_error) {
    if (!(target_mean_error > 0.0) || !std::isfinite(target_mean_error))
        throw ConfigError("calibrate_noise: target mean error must be positive");
    return target_mean_error / kChi3Mean;
}

inline PerceptionModel make_perception(double shift_deg, double target_mean_error) {
    if (!std::isfinite(shift_deg)) throw ConfigError("perception: shift_deg must be finite");
    PerceptionModel m;
    m.shift_deg = shift_deg;
    m.noise_std = target_mean_error > 0.0 ? calibrate_noise(target_mean_error) : 0.0;
    return m;
}

/// Noise-free part of the estimate: rotation of `true_pos` about the vertical
/// axis through the camera pivot by `shift_deg`.
inline Vec3 biased_position(const PerceptionModel& m, const Vec3& true_pos) {
    if (m.shift_deg == 0.0) return true_pos;
    const double rad = m.shift_deg * std::numbers::pi / 180.0;
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix();
    return m.camera_pivot + rot * (true_pos - m.camera_pivot);
}

/// Draws three Gaussian samples (x, y, z order) whenever noise_std > 0.
inline Vec3 estimate_block_position(const PerceptionModel& m, const Vec3& true_pos, Rng& rng) {
    Vec3 est = biased_position(m, true_pos);
    if (m.noise_std > 0.0) {
        for (int i = 0; i < 3; ++i) est[i] += gaussian(rng, m.noise_std);
    }
    return est;
}

}  // namespace d2s
