#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aqs/device_net_sim.hpp"
#include "aqs/field_model.hpp"

namespace aqs {

struct ScanSample {
    int cell = 0;  // index in the scan grid
    Vec3 position; // cell center
    double time = 0.0;
    double value = 0.0;
};

// Serpentine scan over the whole space: z layers ascending; y ascending in
// even layers and descending in odd ones; x ascending when y+z is even. The
// path is continuous (each step moves to an adjacent cell). One noisy sample
// per cell.
std::vector<ScanSample> coarse_scan(const Field& field, const GridSpec& scan_grid, double time,
                                    const NoiseModel& noise, std::uint64_t seed);

struct CoarseField {
    GridSpec grid;
    std::vector<double> values;         // per cell, >= 0
    std::vector<ScanSample> provenance; // samples the fit consumed
};

// Sampled cells keep their (mean) sample value; unsampled cells are filled by
// inverse-distance weighting over the k=6 nearest samples with power 2.
CoarseField fit_coarse(const std::vector<ScanSample>& samples, const GridSpec& scan_grid);

struct PdtParams {
    double grad_threshold = -1.0;  // ug/m^3 per m; < 0 resolves to the 75th percentile
    bool include_extrema = true;
    double w_grad = 1.0;
    double w_ext = 1.0;

    void validate() const;
};

enum class PointKind { gradient, extremum, both };
const char* to_string(PointKind kind);

struct ImportancePoint {
    int cell = 0;
    PointKind kind = PointKind::gradient;
    double importance = 0.0;  // > 0
};

struct PdtResult {
    std::vector<ImportancePoint> points;  // importance descending, ties by cell
    std::vector<int> skipped_axes;        // 0=x 1=y 2=z, single-cell axes
    double threshold = 0.0;               // the theta actually applied
};

// Nearest-rank 75th percentile of |gradient| over all cells; the scale-free
// default threshold.
double default_grad_threshold(const CoarseField& coarse);

// Gradient points: |central-difference gradient| > theta, scored
// w_grad*(|g|-theta). Strict face-neighbor extrema scored
// w_ext*|value - mean(neighbors)|. A cell matching both sums the scores.
PdtResult compute_pdt(const CoarseField& coarse, const PdtParams& params);

struct UavEnergyModel {
    double e_fly_J_per_m = 18.0;
    double e_hover_J_per_s = 150.0;
    double budget_J = 100000.0;
    double speed_m_s = 8.0;

    void validate() const;
};

struct LedgerEntry {
    int cell = 0;
    double fly_J = 0.0;
    double hover_J = 0.0;
};

struct FlightPlan {
    Vec3 start;
    std::vector<int> cells;       // visit order
    std::vector<Vec3> waypoints;  // cell centers, same order
    std::vector<double> hover_s;
    std::vector<LedgerEntry> ledger;
    double total_fly_J = 0.0;
    double total_hover_J = 0.0;

    double total_energy() const { return total_fly_J + total_hover_J; }
};

// Ratio-greedy routing: each step takes the admissible unvisited point with
// the best importance/(e_fly*distance + e_hover*hover) ratio, ties by cell
// index; stops when nothing more fits the budget. An empty plan is valid.
FlightPlan plan_route(const std::vector<ImportancePoint>& points, const CoarseField& coarse,
                      const Vec3& start, const UavEnergyModel& energy, double hover_time_s);

struct FlightSample {
    int cell = 0;
    Vec3 position;
    double time = 0.0;
    double value = 0.0;  // noisy, after residual-air mixing
    double truth = 0.0;  // field truth at the sample time
};

struct FlightResult {
    std::vector<FlightSample> samples;
    double energy_used_J = 0.0;
    double end_time = 0.0;
};

// Residual-air mixing: measured = a*truth + (1-a)*carryover with
// a = 1 - exp(-hover/tau); carryover is the previous waypoint's truth
// (initially the truth at the start position). Noise applies after mixing.
FlightResult simulate_flight(const FlightPlan& plan, const Field& field,
                             const UavEnergyModel& energy, double tau_s, double start_time,
                             const NoiseModel& noise, std::uint64_t seed);

std::string flight_plan_json(const FlightPlan& plan);
void write_importance_csv(const PdtResult& pdt, const GridSpec& grid, std::ostream& out);

}  // namespace aqs
