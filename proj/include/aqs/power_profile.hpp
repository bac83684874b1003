#pragma once

#include <cmath>
#include <cstdint>

#include "aqs/common.hpp"

namespace aqs {

/// Per-event energy costs in mAh-equivalents at nominal voltage.
struct PowerProfile {
    double e_wake = 0.03;          // per wake event
    double e_sense = 4.0;          // per detection
    double e_upload = 8.0;         // per upload event
    double e_sleep_per_min = 0.017;
    double capacity_mAh = 13600.0;

    void validate() const {
        if (e_wake < 0 || e_sense < 0 || e_upload < 0 || e_sleep_per_min < 0)
            throw ValidationError("power_profile: per-event costs must be >= 0");
        if (!(capacity_mAh > 0)) throw ValidationError("power_profile: capacity must be > 0");
    }
};

/// Calibrated so sensing+uploading take ~85% of daily energy at the default
/// (30, 60) intervals and a full battery lasts about a month.
inline PowerProfile default_power_profile() { return PowerProfile{}; }

/// The simulator books charge in integer micro-mAh so ledger sums equal
/// battery deltas exactly.
inline std::int64_t to_umah(double mAh) { return std::llround(mAh * 1e6); }
inline double from_umah(std::int64_t u) { return static_cast<double>(u) * 1e-6; }

}  // namespace aqs
