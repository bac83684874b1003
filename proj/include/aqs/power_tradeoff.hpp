#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "aqs/aerial_plan.hpp"
#include "aqs/device_net_sim.hpp"
#include "aqs/fitting.hpp"
#include "aqs/power_profile.hpp"

namespace aqs {

struct IntervalPolicy {
    int base_sense_min = 30;
    int base_upload_min = 60;
    std::vector<double> aqi_thresholds;  // ascending, ug/m^3
    std::vector<double> scale_factors;   // one per threshold, in (0,1]
    int floor_min = 1;

    void validate() const;
};

// Steady-state hours on one charge: daily draw is the per-minute idle cost
// plus prorated sensing and uploading events.
double battery_duration_h(const PowerProfile& profile, int sense_min, int upload_min);

// Product of the scale factors of every crossed threshold (value >= threshold),
// applied to the base intervals, floored; upload never shorter than sensing.
std::pair<int, int> adapt_intervals(const IntervalPolicy& policy, double aqi_proxy);

struct SweepRowStatus {
    int n_seeds_ok = 0;
    bool ok = true;
    std::string note;
};

struct IntervalSweepRow {
    int sense_min = 0;
    int upload_min = 0;
    double battery_hours = 0.0;
    double mrd = 0.0;
    SweepRowStatus status;
};

struct IntervalSweepParams {
    ScreeningParams screening;
    MlpSpec mlp;
    int upload_factor = 2;  // upload interval = factor * sensing interval
    int n_probe_positions = 8;
    std::uint64_t probe_seed = 7;
    double probe_step_s = 3600.0;
    int max_probe_times = 12;

    void validate() const;
};

// Fig-6a style sweep: reruns the network simulation per interval setting and
// seed, fits the screened model on what the server received, and scores the
// freshest available estimate against truth on one shared probe schedule.
std::vector<IntervalSweepRow> interval_accuracy_sweep(const SimConfig& base, const Field& field,
                                                      const std::vector<int>& sense_intervals_min,
                                                      const std::vector<std::uint64_t>& seeds,
                                                      const IntervalSweepParams& params);

struct AerialSetup {
    GridSpec scan_grid;
    NoiseModel noise;
    UavEnergyModel uav;
    PdtParams pdt;
    double hover_s = 5.0;
    double tau_s = 2.5;
    Vec3 start;
    int n_probe_positions = 16;
    std::uint64_t probe_seed = 11;
    double horizon_h = 24.0;
    double probe_step_h = 1.0;
    // When the coarse scan happens. Dynamic fields start from a uniform state,
    // so scanning at 0 would plan against pure sensor noise.
    double scan_time_s = 0.0;

    void validate() const;
};

struct AerialSweepRow {
    double interval_h = 0.0;
    double energy_per_day_J = 0.0;
    double mrd = 0.0;
    bool default_band = false;  // inside the 6..12 h default interval band
    SweepRowStatus status;
};

// Fig-6b style sweep: one route planned per seed, flown every interval_h; the
// latest completed flight answers each probe until the next one lands.
std::vector<AerialSweepRow> aerial_interval_sweep(const Field& field, const AerialSetup& setup,
                                                  const std::vector<double>& intervals_h,
                                                  const std::vector<std::uint64_t>& seeds);

struct HoverSweepRow {
    double hover_s = 0.0;
    double mean_positions = 0.0;  // waypoints admitted under the fixed budget
    double mrd = 0.0;
    SweepRowStatus status;
};

struct HoverSweepResult {
    std::vector<HoverSweepRow> rows;  // ascending hover_s
    double argmin_hover_s = 0.0;      // lowest-deviation hover among ok rows
};

// Fig-6c style sweep: longer hovers purge residual air better but afford
// fewer waypoints; deviation is scored over every scan cell at flight end.
HoverSweepResult hover_sweep(const Field& field, const AerialSetup& setup,
                             const std::vector<double>& hover_times_s,
                             const std::vector<std::uint64_t>& seeds);

void write_interval_sweep_csv(const std::vector<IntervalSweepRow>& rows, std::ostream& out);
void write_aerial_sweep_csv(const std::vector<AerialSweepRow>& rows, std::ostream& out);
void write_hover_sweep_csv(const HoverSweepResult& result, std::ostream& out);

}  // namespace aqs
