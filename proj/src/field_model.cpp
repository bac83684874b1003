#include "aqs/field_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "aqs/rng.hpp"

namespace aqs {

void GridSpec::validate() const {
    if (nx < 1 || ny < 1 || nz < 1)
        throw ValidationError("grid: nx, ny, nz must each be >= 1");
    if (!(cell_size > 0.0)) throw ValidationError("grid: cell_size must be > 0");
    if (!(t_step > 0.0)) throw ValidationError("grid: t_step must be > 0");
    if (n_steps < 1) throw ValidationError("grid: n_steps must be >= 1");
}

Field::Field(GridSpec grid, std::vector<double> concentration, std::vector<WeatherRecord> weather)
    : grid_(grid), conc_(std::move(concentration)), weather_(std::move(weather)) {
    grid_.validate();
    if (conc_.size() != grid_.cells() * static_cast<std::size_t>(grid_.n_steps))
        throw ValidationError("field: concentration size does not match grid");
    if (weather_.size() != static_cast<std::size_t>(grid_.n_steps))
        throw ValidationError("field: weather length must equal n_steps");
}

namespace {

// Maps a physical coordinate to (lower cell, fractional weight) on the centre
// lattice, holding the boundary layer outside the hull.
void axis_weights(double pos, double h, int n, int& i0, double& frac) {
    double u = pos / h - 0.5;
    if (n == 1) {
        i0 = 0;
        frac = 0.0;
        return;
    }
    double fl = std::floor(u);
    i0 = std::clamp(static_cast<int>(fl), 0, n - 2);
    frac = std::clamp(u - i0, 0.0, 1.0);
}

}  // namespace

double Field::sample_truth(const Vec3& position, double time) const {
    const double h = grid_.cell_size;
    if (position.x < 0.0 || position.x > grid_.nx * h)
        throw ValidationError("sample_truth: position.x outside grid bounds");
    if (position.y < 0.0 || position.y > grid_.ny * h)
        throw ValidationError("sample_truth: position.y outside grid bounds");
    if (position.z < 0.0 || position.z > grid_.nz * h)
        throw ValidationError("sample_truth: position.z outside grid bounds");
    if (time < 0.0 || time > grid_.duration())
        throw ValidationError("sample_truth: time outside field range");

    int ix, iy, iz;
    double fx, fy, fz;
    axis_weights(position.x, h, grid_.nx, ix, fx);
    axis_weights(position.y, h, grid_.ny, iy, fy);
    axis_weights(position.z, h, grid_.nz, iz, fz);

    double tau = time / grid_.t_step;
    int t0;
    double ft;
    if (grid_.n_steps == 1) {
        t0 = 0;
        ft = 0.0;
    } else {
        t0 = std::clamp(static_cast<int>(std::floor(tau)), 0, grid_.n_steps - 2);
        ft = std::clamp(tau - t0, 0.0, 1.0);
    }

    auto tri = [&](int t) {
        double acc = 0.0;
        for (int dz = 0; dz <= 1; ++dz) {
            int z = std::min(iz + dz, grid_.nz - 1);
            double wz = dz ? fz : 1.0 - fz;
            if (wz == 0.0) continue;
            for (int dy = 0; dy <= 1; ++dy) {
                int y = std::min(iy + dy, grid_.ny - 1);
                double wy = dy ? fy : 1.0 - fy;
                if (wy == 0.0) continue;
                for (int dx = 0; dx <= 1; ++dx) {
                    int x = std::min(ix + dx, grid_.nx - 1);
                    double wx = dx ? fx : 1.0 - fx;
                    if (wx == 0.0) continue;
                    acc += wz * wy * wx * at(x, y, z, t);
                }
            }
        }
        return acc;
    };

    double v0 = tri(t0);
    if (ft == 0.0) return v0;
    double v1 = tri(t0 + 1);
    return (1.0 - ft) * v0 + ft * v1;
}

const WeatherRecord& Field::weather_at(double time) const {
    if (time < weather_.front().time)
        throw ValidationError("weather_at: time before first record");
    if (time > grid_.duration())
        throw ValidationError("weather_at: time beyond trace range");
    int idx = std::min(static_cast<int>(std::floor(time / grid_.t_step)), grid_.n_steps - 1);
    return weather_[static_cast<std::size_t>(idx)];
}

std::vector<WeatherRecord> generate_weather(const GridSpec& grid, const WeatherParams& p,
                                            std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WeatherRecord> trace;
    trace.reserve(static_cast<std::size_t>(grid.n_steps));
    WeatherRecord cur;
    for (int t = 0; t < grid.n_steps; ++t) {
        if (t == 0) {
            cur.wind.x = p.wind_mean.x + p.wind_sigma * rng.gaussian();
            cur.wind.y = p.wind_mean.y + p.wind_sigma * rng.gaussian();
            cur.wind.z = p.wind_mean.z + p.wind_sigma * rng.gaussian();
            cur.humidity = p.humidity_mean + p.humidity_sigma * rng.gaussian();
            cur.temperature = p.temperature_mean + p.temperature_sigma * rng.gaussian();
        } else {
            auto ar1 = [&](double prev, double mean, double phi, double sigma) {
                return mean + phi * (prev - mean) + sigma * rng.gaussian();
            };
            cur.wind.x = ar1(cur.wind.x, p.wind_mean.x, p.wind_phi, p.wind_sigma);
            cur.wind.y = ar1(cur.wind.y, p.wind_mean.y, p.wind_phi, p.wind_sigma);
            cur.wind.z = ar1(cur.wind.z, p.wind_mean.z, p.wind_phi, p.wind_sigma);
            cur.humidity = ar1(cur.humidity, p.humidity_mean, p.humidity_phi, p.humidity_sigma);
            cur.temperature =
                ar1(cur.temperature, p.temperature_mean, p.temperature_phi, p.temperature_sigma);
        }
        cur.humidity = std::clamp(cur.humidity, 0.0, 100.0);
        cur.time = t * grid.t_step;
        cur.forecast = false;
        trace.push_back(cur);
    }
    return trace;
}

Field build_field(const GridSpec& grid, const std::vector<SourceSpec>& sources,
                  std::uint64_t weather_seed, const DiffusionParams& dyn) {
    grid.validate();
    if (dyn.diffusion < 0.0) throw ValidationError("dynamics: diffusion coefficient must be >= 0");
    if (dyn.initial_value < 0.0) throw ValidationError("dynamics: initial_value must be >= 0");

    const double h = grid.cell_size;
    const double dt = grid.t_step;

    double diff_number = dyn.diffusion * dt / (h * h);
    if (diff_number > 1.0 / 6.0 + 1e-12) {
        throw ValidationError("dynamics: diffusion stability violated, D*t_step/cell_size^2 = " +
                              fmt_double(diff_number) + " exceeds 1/6");
    }

    for (std::size_t i = 0; i < sources.size(); ++i) {
        const Vec3& sp = sources[i].position;
        if (sp.x < 0.0 || sp.x >= grid.nx * h || sp.y < 0.0 || sp.y >= grid.ny * h ||
            sp.z < 0.0 || sp.z >= grid.nz * h)
            throw ValidationError("sources[" + std::to_string(i) + "]: position outside grid");
        if (sources[i].emission_rate < 0.0)
            throw ValidationError("sources[" + std::to_string(i) + "]: emission_rate must be >= 0");
        if (sources[i].t_start > sources[i].t_end)
            throw ValidationError("sources[" + std::to_string(i) + "]: t_start > t_end");
    }

    std::vector<WeatherRecord> weather = generate_weather(grid, dyn.weather, weather_seed);
    for (const WeatherRecord& w : weather) {
        double cmax = std::max({std::fabs(w.wind.x), std::fabs(w.wind.y), std::fabs(w.wind.z)});
        if (cmax * dt / h > 1.0 + 1e-12) {
            throw ValidationError("dynamics: CFL violated at t=" + fmt_double(w.time) +
                                  ", |wind|*t_step/cell_size = " + fmt_double(cmax * dt / h));
        }
    }

    const std::size_t cells = grid.cells();
    std::vector<double> conc(cells * static_cast<std::size_t>(grid.n_steps), dyn.initial_value);

    // Precompute per-source injection cell and increment.
    struct Inject {
        std::size_t cell;
        double add;  // concentration added per step while active
        double t_start, t_end;
    };
    std::vector<Inject> inj;
    inj.reserve(sources.size());
    for (const SourceSpec& s : sources) {
        int cx = std::min(static_cast<int>(s.position.x / h), grid.nx - 1);
        int cy = std::min(static_cast<int>(s.position.y / h), grid.ny - 1);
        int cz = std::min(static_cast<int>(s.position.z / h), grid.nz - 1);
        inj.push_back({grid.cell_index(cx, cy, cz), s.emission_rate * dt / (h * h * h), s.t_start,
                       s.t_end});
    }

    for (int t = 0; t + 1 < grid.n_steps; ++t) {
        const double* cur = conc.data() + static_cast<std::size_t>(t) * cells;
        double* nxt = conc.data() + static_cast<std::size_t>(t + 1) * cells;
        const Vec3 wind = weather[static_cast<std::size_t>(t)].wind;
        const double t_now = t * dt;

        for (int z = 0; z < grid.nz; ++z) {
            for (int y = 0; y < grid.ny; ++y) {
                for (int x = 0; x < grid.nx; ++x) {
                    std::size_t idx = grid.cell_index(x, y, z);
                    double c = cur[idx];
                    // zero-gradient boundary: clamp neighbour indices
                    double cxm = cur[grid.cell_index(std::max(x - 1, 0), y, z)];
                    double cxp = cur[grid.cell_index(std::min(x + 1, grid.nx - 1), y, z)];
                    double cym = cur[grid.cell_index(x, std::max(y - 1, 0), z)];
                    double cyp = cur[grid.cell_index(x, std::min(y + 1, grid.ny - 1), z)];
                    double czm = cur[grid.cell_index(x, y, std::max(z - 1, 0))];
                    double czp = cur[grid.cell_index(x, y, std::min(z + 1, grid.nz - 1))];

                    // grouped per axis so an x<->y swap of a symmetric state is bit-exact
                    double sx = (cxm + cxp) - 2.0 * c;
                    double sy = (cym + cyp) - 2.0 * c;
                    double sz = (czm + czp) - 2.0 * c;
                    double lap = ((sx + sy) + sz) / (h * h);

                    double ax = wind.x > 0.0 ? wind.x * (c - cxm) : wind.x * (cxp - c);
                    double ay = wind.y > 0.0 ? wind.y * (c - cym) : wind.y * (cyp - c);
                    double az = wind.z > 0.0 ? wind.z * (c - czm) : wind.z * (czp - c);
                    double adv = ((ax + ay) + az) / h;

                    nxt[idx] = c + dt * (dyn.diffusion * lap - adv);
                }
            }
        }
        for (const Inject& s : inj) {
            if (t_now >= s.t_start && t_now <= s.t_end) nxt[s.cell] += s.add;
        }
        for (std::size_t i = 0; i < cells; ++i) {
            if (nxt[i] < 0.0) nxt[i] = 0.0;
        }
    }

    return Field(grid, std::move(conc), std::move(weather));
}

void export_field_csv(const Field& field, std::ostream& out) {
    const GridSpec& g = field.grid();
    out << "x,y,z,t,value\n";
    for (int t = 0; t < g.n_steps; ++t) {
        for (int z = 0; z < g.nz; ++z) {
            for (int y = 0; y < g.ny; ++y) {
                for (int x = 0; x < g.nx; ++x) {
                    Vec3 c = g.cell_center(x, y, z);
                    out << fmt_double(c.x) << ',' << fmt_double(c.y) << ',' << fmt_double(c.z)
                        << ',' << fmt_double(t * g.t_step) << ','
                        << fmt_double(field.at(x, y, z, t)) << '\n';
                }
            }
        }
    }
}

void write_weather_csv(const std::vector<WeatherRecord>& trace, std::ostream& out) {
    out << "t,wx,wy,wz,humidity,temp,flag\n";
    for (const WeatherRecord& w : trace) {
        out << fmt_double(w.time) << ',' << fmt_double(w.wind.x) << ',' << fmt_double(w.wind.y)
            << ',' << fmt_double(w.wind.z) << ',' << fmt_double(w.humidity) << ','
            << fmt_double(w.temperature) << ',' << (w.forecast ? "forecast" : "actual") << '\n';
    }
}

std::vector<WeatherRecord> read_weather_csv(std::istream& in) {
    std::vector<WeatherRecord> trace;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("weather csv: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        WeatherRecord w;
        auto next = [&]() {
            if (!std::getline(ls, tok, ',')) throw ValidationError("weather csv: short row");
            return tok;
        };
        w.time = std::stod(next());
        w.wind.x = std::stod(next());
        w.wind.y = std::stod(next());
        w.wind.z = std::stod(next());
        w.humidity = std::stod(next());
        w.temperature = std::stod(next());
        w.forecast = next() == "forecast";
        trace.push_back(w);
    }
    return trace;
}

}  // namespace aqs
