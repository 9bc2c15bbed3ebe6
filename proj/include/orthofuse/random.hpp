// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthofuse/common.hpp"

#include <numbers>
#include <random>

namespace orthofuse {

// Seeded generator with distribution code of our own, so sequences do not
// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform direction on the unit sphere (Archimedes: z uniform, azimuth uniform).
    Vec3 unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * std::numbers::pi);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

    /// Uniform point in the unit ball.
    Vec3 in_unit_ball() {
        for (;;) {
            const Vec3 p(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
            if (p.squaredNorm() < 1.0) {
                return p;
            }
        }
    }

    /// Uniformly distributed rotation (random unit quaternion).
    Mat3 rotation() {
        Eigen::Vector4d q(normal(), normal(), normal(), normal());
        q.normalize();
        return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace orthofuse
