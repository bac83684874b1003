#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "aqs/common.hpp"

namespace aqs {

/// Spatial grid of cell-centred concentration values plus a simulated-time axis.
/// Cell (i,j,k) spans [i*h,(i+1)*h) per axis; its value sits at the centre.
struct GridSpec {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    double cell_size = 1.0;   // m per cell edge
    double t_step = 60.0;     // s per stored time step
    int n_steps = 1;

    void validate() const;
    std::size_t cells() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t cell_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    Vec3 cell_center(int x, int y, int z) const {
        return {(x + 0.5) * cell_size, (y + 0.5) * cell_size, (z + 0.5) * cell_size};
    }
    Vec3 extent() const { return {nx * cell_size, ny * cell_size, nz * cell_size}; }
    double duration() const { return static_cast<double>(n_steps) * t_step; }
};

struct SourceSpec {
    Vec3 position;               // m, inside grid bounds
    double emission_rate = 0.0;  // ug/s
    double t_start = 0.0;        // s, active window inclusive
    double t_end = 0.0;
};

struct WeatherRecord {
    double time = 0.0;  // s
    Vec3 wind;          // m/s
    double humidity = 50.0;     // percent
    double temperature = 15.0;  // deg C
    bool forecast = false;      // true when served as a forecast rather than a measurement
};

/// First-order autoregressive generator settings, one process per component.
struct WeatherParams {
    Vec3 wind_mean;
    double wind_sigma = 0.0;
    double wind_phi = 0.9;
    double humidity_mean = 50.0;
    double humidity_sigma = 0.0;
    double humidity_phi = 0.95;
    double temperature_mean = 15.0;
    double temperature_sigma = 0.0;
    double temperature_phi = 0.95;
};

struct DiffusionParams {
    double diffusion = 1.0;  // m^2/s
    double initial_value = 0.0;
    WeatherParams weather;
};

class Field {
public:
    Field(GridSpec grid, std::vector<double> concentration, std::vector<WeatherRecord> weather);

    const GridSpec& grid() const { return grid_; }
    double at(int x, int y, int z, int t) const {
        return conc_[static_cast<std::size_t>(t) * grid_.cells() + grid_.cell_index(x, y, z)];
    }
    const std::vector<double>& concentration() const { return conc_; }
    const std::vector<WeatherRecord>& weather() const { return weather_; }

    /// Quadrilinear interpolation: trilinear over cell centres, linear in time.
    /// Beyond the centre lattice hull (but inside the domain) the nearest cell
    /// layer is held. Throws ValidationError naming the offending axis.
    double sample_truth(const Vec3& position, double time) const;

    /// Record of the nearest earlier time step (piecewise-constant hold).
    const WeatherRecord& weather_at(double time) const;

    bool operator==(const Field& o) const {
        return conc_ == o.conc_;
    }

private:
    GridSpec grid_;
    std::vector<double> conc_;  // indexed [t * cells + cell_index]
    std::vector<WeatherRecord> weather_;
};

std::vector<WeatherRecord> generate_weather(const GridSpec& grid, const WeatherParams& params,
                                            std::uint64_t seed);

/// Explicit advection-diffusion evolution with source injection, upwind wind
/// transport from the generated weather trace and zero-gradient boundaries.
/// Rejects configurations violating D*dt/h^2 <= 1/6 or per-axis CFL |w|*dt/h <= 1.
Field build_field(const GridSpec& grid, const std::vector<SourceSpec>& sources,
                  std::uint64_t weather_seed, const DiffusionParams& dynamics);

/// CSV columns x,y,z,t,value (cell centres in m, time in s).
void export_field_csv(const Field& field, std::ostream& out);

void write_weather_csv(const std::vector<WeatherRecord>& trace, std::ostream& out);
std::vector<WeatherRecord> read_weather_csv(std::istream& in);

}  // namespace aqs
