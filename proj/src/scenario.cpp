#include "aqs/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace aqs {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ValidationError("scenario: " + path + ": " + msg);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(path + "." + it.key(), "unknown key");
    }
}

const json* find(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& require(const json& j, const std::string& path, const char* key) {
    const json* p = find(j, key);
    if (!p) fail(path, "missing required key '" + std::string(key) + "'");
    return *p;
}

double as_double(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "must be a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "must be an integer");
    return j.get<int>();
}

std::uint64_t as_seed(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        auto v = j.get<std::int64_t>();
        if (v < 0) fail(path, "must be a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }
    fail(path, "must be a non-negative integer");
}

bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "must be a boolean");
    return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "must be a string");
    return j.get<std::string>();
}

const json& as_array(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "must be an array");
    return j;
}

Vec3 as_vec3(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) fail(path, "must be an array of 3 numbers");
    return {as_double(j[0], path + "[0]"), as_double(j[1], path + "[1]"),
            as_double(j[2], path + "[2]")};
}

std::vector<double> as_double_vec(const json& j, const std::string& path) {
    const json& arr = as_array(j, path);
    std::vector<double> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(as_double(arr[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<int> as_int_vec(const json& j, const std::string& path) {
    const json& arr = as_array(j, path);
    std::vector<int> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(as_int(arr[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<std::uint64_t> as_seed_vec(const json& j, const std::string& path) {
    const json& arr = as_array(j, path);
    std::vector<std::uint64_t> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(as_seed(arr[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

GridSpec parse_grid(const json& j, const std::string& path) {
    check_keys(j, path, {"nx", "ny", "nz", "cell_size", "t_step", "n_steps"});
    GridSpec g;
    g.nx = as_int(require(j, path, "nx"), path + ".nx");
    g.ny = as_int(require(j, path, "ny"), path + ".ny");
    g.nz = as_int(require(j, path, "nz"), path + ".nz");
    g.cell_size = as_double(require(j, path, "cell_size"), path + ".cell_size");
    g.t_step = as_double(require(j, path, "t_step"), path + ".t_step");
    g.n_steps = as_int(require(j, path, "n_steps"), path + ".n_steps");
    g.validate();
    return g;
}

FieldSection parse_field(const json& j, const std::string& path) {
    check_keys(j, path, {"grid", "sources", "dynamics", "weather_seed"});
    FieldSection f;
    f.grid = parse_grid(require(j, path, "grid"), path + ".grid");
    if (const json* p = find(j, "sources")) {
        const json& arr = as_array(*p, path + ".sources");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            std::string sp = path + ".sources[" + std::to_string(i) + "]";
            check_keys(arr[i], sp, {"position", "emission_rate", "t_start", "t_end"});
            SourceSpec src;
            src.position = as_vec3(require(arr[i], sp, "position"), sp + ".position");
            src.emission_rate =
                as_double(require(arr[i], sp, "emission_rate"), sp + ".emission_rate");
            if (src.emission_rate < 0) fail(sp + ".emission_rate", "must be >= 0");
            if (const json* q = find(arr[i], "t_start"))
                src.t_start = as_double(*q, sp + ".t_start");
            if (const json* q = find(arr[i], "t_end")) src.t_end = as_double(*q, sp + ".t_end");
            if (src.t_end < src.t_start) fail(sp + ".t_end", "must be >= t_start");
            f.sources.push_back(src);
        }
    }
    if (const json* p = find(j, "dynamics")) {
        std::string dp = path + ".dynamics";
        check_keys(*p, dp, {"diffusion", "initial_value", "weather"});
        if (const json* q = find(*p, "diffusion"))
            f.dynamics.diffusion = as_double(*q, dp + ".diffusion");
        if (f.dynamics.diffusion < 0) fail(dp + ".diffusion", "must be >= 0");
        if (const json* q = find(*p, "initial_value"))
            f.dynamics.initial_value = as_double(*q, dp + ".initial_value");
        if (f.dynamics.initial_value < 0) fail(dp + ".initial_value", "must be >= 0");
        if (const json* q = find(*p, "weather")) {
            std::string wp = dp + ".weather";
            check_keys(*q, wp,
                       {"wind_mean", "wind_sigma", "wind_phi", "humidity_mean", "humidity_sigma",
                        "humidity_phi", "temperature_mean", "temperature_sigma",
                        "temperature_phi"});
            WeatherParams& w = f.dynamics.weather;
            if (const json* r = find(*q, "wind_mean")) w.wind_mean = as_vec3(*r, wp + ".wind_mean");
            if (const json* r = find(*q, "wind_sigma"))
                w.wind_sigma = as_double(*r, wp + ".wind_sigma");
            if (const json* r = find(*q, "wind_phi")) w.wind_phi = as_double(*r, wp + ".wind_phi");
            if (const json* r = find(*q, "humidity_mean"))
                w.humidity_mean = as_double(*r, wp + ".humidity_mean");
            if (const json* r = find(*q, "humidity_sigma"))
                w.humidity_sigma = as_double(*r, wp + ".humidity_sigma");
            if (const json* r = find(*q, "humidity_phi"))
                w.humidity_phi = as_double(*r, wp + ".humidity_phi");
            if (const json* r = find(*q, "temperature_mean"))
                w.temperature_mean = as_double(*r, wp + ".temperature_mean");
            if (const json* r = find(*q, "temperature_sigma"))
                w.temperature_sigma = as_double(*r, wp + ".temperature_sigma");
            if (const json* r = find(*q, "temperature_phi"))
                w.temperature_phi = as_double(*r, wp + ".temperature_phi");
            for (double phi : {w.wind_phi, w.humidity_phi, w.temperature_phi})
                if (phi < 0 || phi >= 1) fail(wp, "autoregression phi must be in [0,1)");
            if (w.wind_sigma < 0 || w.humidity_sigma < 0 || w.temperature_sigma < 0)
                fail(wp, "sigma must be >= 0");
        }
    }
    if (const json* p = find(j, "weather_seed"))
        f.weather_seed = as_seed(*p, path + ".weather_seed");
    return f;
}

DeviceConfig parse_device(const json& j, const std::string& path) {
    check_keys(j, path,
               {"id", "kind", "position", "battery_mAh", "sensing_interval_min",
                "uploading_interval_min", "calibration", "noise_seed"});
    DeviceConfig d;
    d.id = as_int(require(j, path, "id"), path + ".id");
    if (d.id < 0) fail(path + ".id", "must be >= 0");
    if (const json* p = find(j, "kind")) {
        std::string k = as_string(*p, path + ".kind");
        if (k == "ground")
            d.kind = DeviceKind::ground;
        else if (k == "aerial")
            d.kind = DeviceKind::aerial;
        else
            fail(path + ".kind", "must be 'ground' or 'aerial'");
    }
    d.position = as_vec3(require(j, path, "position"), path + ".position");
    if (const json* p = find(j, "battery_mAh")) d.battery_mAh = as_double(*p, path + ".battery_mAh");
    if (!(d.battery_mAh > 0)) fail(path + ".battery_mAh", "must be > 0");
    if (const json* p = find(j, "sensing_interval_min"))
        d.sensing_interval_min = as_int(*p, path + ".sensing_interval_min");
    if (d.sensing_interval_min < 1) fail(path + ".sensing_interval_min", "must be >= 1");
    if (const json* p = find(j, "uploading_interval_min"))
        d.uploading_interval_min = as_int(*p, path + ".uploading_interval_min");
    if (d.uploading_interval_min < 1) fail(path + ".uploading_interval_min", "must be >= 1");
    if (const json* p = find(j, "calibration")) {
        std::string cp = path + ".calibration";
        check_keys(*p, cp, {"gain", "offset"});
        if (const json* q = find(*p, "gain")) d.calibration.gain = as_double(*q, cp + ".gain");
        if (const json* q = find(*p, "offset")) d.calibration.offset = as_double(*q, cp + ".offset");
        if (!(d.calibration.gain > 0)) fail(cp + ".gain", "must be > 0");
    }
    if (const json* p = find(j, "noise_seed")) d.noise_seed = as_seed(*p, path + ".noise_seed");
    return d;
}

ScreeningParams parse_screening(const json& j, const std::string& path) {
    check_keys(j, path, {"k_spatial", "k_temporal", "history_len", "pattern_window"});
    ScreeningParams s;
    if (const json* p = find(j, "k_spatial")) s.k_spatial = as_int(*p, path + ".k_spatial");
    if (const json* p = find(j, "k_temporal")) s.k_temporal = as_int(*p, path + ".k_temporal");
    if (const json* p = find(j, "history_len")) s.history_len = as_int(*p, path + ".history_len");
    if (const json* p = find(j, "pattern_window"))
        s.pattern_window = as_int(*p, path + ".pattern_window");
    s.validate();
    return s;
}

MlpSpec parse_mlp(const json& j, const std::string& path) {
    check_keys(j, path,
               {"layer_widths", "activation", "learning_rate", "epochs", "batch_size",
                "init_seed"});
    MlpSpec m;
    if (const json* p = find(j, "layer_widths")) m.layer_widths = as_int_vec(*p, path + ".layer_widths");
    if (const json* p = find(j, "activation")) {
        std::string a = as_string(*p, path + ".activation");
        if (a == "tanh")
            m.activation = Activation::tanh_;
        else if (a == "relu")
            m.activation = Activation::relu;
        else
            fail(path + ".activation", "must be 'tanh' or 'relu'");
    }
    if (const json* p = find(j, "learning_rate")) m.learning_rate = as_double(*p, path + ".learning_rate");
    if (const json* p = find(j, "epochs")) m.epochs = as_int(*p, path + ".epochs");
    if (const json* p = find(j, "batch_size")) m.batch_size = as_int(*p, path + ".batch_size");
    if (const json* p = find(j, "init_seed")) m.init_seed = as_seed(*p, path + ".init_seed");
    m.validate();
    return m;
}

FitEvalSection parse_fit_eval(const json& j, const std::string& path) {
    check_keys(j, path, {"holdout_fraction", "seeds"});
    FitEvalSection f;
    if (const json* p = find(j, "holdout_fraction"))
        f.holdout_fraction = as_double(*p, path + ".holdout_fraction");
    if (!(f.holdout_fraction > 0) || !(f.holdout_fraction < 1))
        fail(path + ".holdout_fraction", "must be in (0,1)");
    if (const json* p = find(j, "seeds")) f.seeds = as_seed_vec(*p, path + ".seeds");
    if (f.seeds.empty()) fail(path + ".seeds", "must not be empty");
    return f;
}

PredictEvalSection parse_predict_eval(const json& j, const std::string& path) {
    check_keys(j, path,
               {"weather", "horizons_s", "max_horizon_s", "min_train_steps", "cut_stride", "mlp"});
    PredictEvalSection p;
    if (const json* q = find(j, "weather")) {
        std::string wp = path + ".weather";
        check_keys(*q, wp, {"wind", "humidity", "temperature", "lag_steps"});
        if (const json* r = find(*q, "wind")) p.weather.wind = as_bool(*r, wp + ".wind");
        if (const json* r = find(*q, "humidity")) p.weather.humidity = as_bool(*r, wp + ".humidity");
        if (const json* r = find(*q, "temperature"))
            p.weather.temperature = as_bool(*r, wp + ".temperature");
        if (const json* r = find(*q, "lag_steps")) p.weather.lag_steps = as_int(*r, wp + ".lag_steps");
        p.weather.validate();
    }
    if (const json* q = find(j, "horizons_s")) p.horizons_s = as_double_vec(*q, path + ".horizons_s");
    if (p.horizons_s.empty()) fail(path + ".horizons_s", "must not be empty");
    if (const json* q = find(j, "max_horizon_s"))
        p.max_horizon_s = as_double(*q, path + ".max_horizon_s");
    if (const json* q = find(j, "min_train_steps"))
        p.min_train_steps = as_int(*q, path + ".min_train_steps");
    if (const json* q = find(j, "cut_stride")) p.cut_stride = as_int(*q, path + ".cut_stride");
    for (std::size_t i = 0; i < p.horizons_s.size(); ++i) {
        if (!(p.horizons_s[i] > 0)) fail(path + ".horizons_s", "entries must be > 0");
        if (i > 0 && !(p.horizons_s[i] > p.horizons_s[i - 1]))
            fail(path + ".horizons_s", "must be strictly ascending");
        if (p.horizons_s[i] > p.max_horizon_s)
            fail(path + ".horizons_s", "exceeds max_horizon_s");
    }
    if (p.min_train_steps < 1) fail(path + ".min_train_steps", "must be >= 1");
    if (p.cut_stride < 1) fail(path + ".cut_stride", "must be >= 1");
    if (const json* q = find(j, "mlp")) p.mlp = parse_mlp(*q, path + ".mlp");
    return p;
}

DeploySection parse_deploy(const json& j, const std::string& path) {
    check_keys(j, path, {"survey_csv", "n_deploy", "bins", "sigma_d", "sigma_p", "seed", "initial"});
    DeploySection d;
    d.survey_csv = as_string(require(j, path, "survey_csv"), path + ".survey_csv");
    if (d.survey_csv.empty()) fail(path + ".survey_csv", "must not be empty");
    d.n_deploy = as_int(require(j, path, "n_deploy"), path + ".n_deploy");
    if (d.n_deploy < 1) fail(path + ".n_deploy", "must be >= 1");
    if (const json* p = find(j, "bins")) d.bins = as_int(*p, path + ".bins");
    if (d.bins < 1) fail(path + ".bins", "must be >= 1");
    if (const json* p = find(j, "sigma_d")) d.affinity.sigma_d = as_double(*p, path + ".sigma_d");
    if (d.affinity.sigma_d < 0) fail(path + ".sigma_d", "must be >= 0 (0 selects the data-driven scale)");
    if (const json* p = find(j, "sigma_p")) d.affinity.sigma_p = as_double(*p, path + ".sigma_p");
    if (!(d.affinity.sigma_p > 0)) fail(path + ".sigma_p", "must be > 0");
    if (const json* p = find(j, "seed")) d.seed = as_seed(*p, path + ".seed");
    if (const json* p = find(j, "initial")) {
        d.initial = as_int_vec(*p, path + ".initial");
        if (static_cast<int>(d.initial->size()) != d.n_deploy)
            fail(path + ".initial", "must list exactly n_deploy candidate ids");
    }
    return d;
}

AerialSection parse_aerial(const json& j, const std::string& path) {
    check_keys(j, path,
               {"scan_grid", "uav", "pdt", "hover_s", "tau_s", "start", "n_probe_positions",
                "probe_seed", "horizon_h", "probe_step_h", "scan_seed", "flight_seed",
                "scan_time_s", "flight_start_s"});
    AerialSection a;
    a.setup.scan_grid = parse_grid(require(j, path, "scan_grid"), path + ".scan_grid");
    if (const json* p = find(j, "uav")) {
        std::string up = path + ".uav";
        check_keys(*p, up, {"e_fly_J_per_m", "e_hover_J_per_s", "budget_J", "speed_m_s"});
        UavEnergyModel& u = a.setup.uav;
        if (const json* q = find(*p, "e_fly_J_per_m")) u.e_fly_J_per_m = as_double(*q, up + ".e_fly_J_per_m");
        if (const json* q = find(*p, "e_hover_J_per_s"))
            u.e_hover_J_per_s = as_double(*q, up + ".e_hover_J_per_s");
        if (const json* q = find(*p, "budget_J")) u.budget_J = as_double(*q, up + ".budget_J");
        if (const json* q = find(*p, "speed_m_s")) u.speed_m_s = as_double(*q, up + ".speed_m_s");
        u.validate();
    }
    if (const json* p = find(j, "pdt")) {
        std::string pp = path + ".pdt";
        check_keys(*p, pp, {"grad_threshold", "include_extrema", "w_grad", "w_ext"});
        PdtParams& t = a.setup.pdt;
        if (const json* q = find(*p, "grad_threshold"))
            t.grad_threshold = as_double(*q, pp + ".grad_threshold");
        if (const json* q = find(*p, "include_extrema"))
            t.include_extrema = as_bool(*q, pp + ".include_extrema");
        if (const json* q = find(*p, "w_grad")) t.w_grad = as_double(*q, pp + ".w_grad");
        if (const json* q = find(*p, "w_ext")) t.w_ext = as_double(*q, pp + ".w_ext");
        t.validate();
    }
    if (const json* p = find(j, "hover_s")) a.setup.hover_s = as_double(*p, path + ".hover_s");
    if (!(a.setup.hover_s > 0)) fail(path + ".hover_s", "must be > 0");
    if (const json* p = find(j, "tau_s")) a.setup.tau_s = as_double(*p, path + ".tau_s");
    if (!(a.setup.tau_s > 0)) fail(path + ".tau_s", "must be > 0");
    if (const json* p = find(j, "start")) a.setup.start = as_vec3(*p, path + ".start");
    if (const json* p = find(j, "n_probe_positions"))
        a.setup.n_probe_positions = as_int(*p, path + ".n_probe_positions");
    if (a.setup.n_probe_positions < 1) fail(path + ".n_probe_positions", "must be >= 1");
    if (const json* p = find(j, "probe_seed")) a.setup.probe_seed = as_seed(*p, path + ".probe_seed");
    if (const json* p = find(j, "horizon_h")) a.setup.horizon_h = as_double(*p, path + ".horizon_h");
    if (!(a.setup.horizon_h > 0)) fail(path + ".horizon_h", "must be > 0");
    if (const json* p = find(j, "probe_step_h"))
        a.setup.probe_step_h = as_double(*p, path + ".probe_step_h");
    if (!(a.setup.probe_step_h > 0)) fail(path + ".probe_step_h", "must be > 0");
    if (const json* p = find(j, "scan_seed")) a.scan_seed = as_seed(*p, path + ".scan_seed");
    if (const json* p = find(j, "flight_seed")) a.flight_seed = as_seed(*p, path + ".flight_seed");
    if (const json* p = find(j, "scan_time_s"))
        a.setup.scan_time_s = as_double(*p, path + ".scan_time_s");
    if (a.setup.scan_time_s < 0) fail(path + ".scan_time_s", "must be >= 0");
    if (const json* p = find(j, "flight_start_s"))
        a.flight_start_s = as_double(*p, path + ".flight_start_s");
    if (a.flight_start_s < 0) fail(path + ".flight_start_s", "must be >= 0");
    return a;
}

SweepsSection parse_sweeps(const json& j, const std::string& path) {
    check_keys(j, path, {"intervals", "aerial", "hover"});
    SweepsSection s;
    if (const json* p = find(j, "intervals")) {
        std::string ip = path + ".intervals";
        check_keys(*p, ip,
                   {"grid_min", "seeds", "upload_factor", "n_probe_positions", "probe_seed",
                    "probe_step_s", "max_probe_times"});
        IntervalSweepSection v;
        if (const json* q = find(*p, "grid_min")) v.grid_min = as_int_vec(*q, ip + ".grid_min");
        if (v.grid_min.empty()) fail(ip + ".grid_min", "must not be empty");
        for (int m : v.grid_min)
            if (m < 1) fail(ip + ".grid_min", "intervals must be >= 1 minute");
        if (const json* q = find(*p, "seeds")) v.seeds = as_seed_vec(*q, ip + ".seeds");
        if (v.seeds.empty()) fail(ip + ".seeds", "must not be empty");
        if (const json* q = find(*p, "upload_factor")) v.upload_factor = as_int(*q, ip + ".upload_factor");
        if (v.upload_factor < 1) fail(ip + ".upload_factor", "must be >= 1");
        if (const json* q = find(*p, "n_probe_positions"))
            v.n_probe_positions = as_int(*q, ip + ".n_probe_positions");
        if (v.n_probe_positions < 1) fail(ip + ".n_probe_positions", "must be >= 1");
        if (const json* q = find(*p, "probe_seed")) v.probe_seed = as_seed(*q, ip + ".probe_seed");
        if (const json* q = find(*p, "probe_step_s"))
            v.probe_step_s = as_double(*q, ip + ".probe_step_s");
        if (!(v.probe_step_s > 0)) fail(ip + ".probe_step_s", "must be > 0");
        if (const json* q = find(*p, "max_probe_times"))
            v.max_probe_times = as_int(*q, ip + ".max_probe_times");
        if (v.max_probe_times < 1) fail(ip + ".max_probe_times", "must be >= 1");
        s.intervals = v;
    }
    if (const json* p = find(j, "aerial")) {
        std::string ap = path + ".aerial";
        check_keys(*p, ap, {"intervals_h", "seeds"});
        AerialSweepSection v;
        if (const json* q = find(*p, "intervals_h")) v.intervals_h = as_double_vec(*q, ap + ".intervals_h");
        if (v.intervals_h.empty()) fail(ap + ".intervals_h", "must not be empty");
        for (double h : v.intervals_h)
            if (!(h > 0)) fail(ap + ".intervals_h", "intervals must be > 0");
        if (const json* q = find(*p, "seeds")) v.seeds = as_seed_vec(*q, ap + ".seeds");
        if (v.seeds.empty()) fail(ap + ".seeds", "must not be empty");
        s.aerial = v;
    }
    if (const json* p = find(j, "hover")) {
        std::string hp = path + ".hover";
        check_keys(*p, hp, {"hover_times_s", "seeds"});
        HoverSweepSection v;
        if (const json* q = find(*p, "hover_times_s"))
            v.hover_times_s = as_double_vec(*q, hp + ".hover_times_s");
        if (v.hover_times_s.empty()) fail(hp + ".hover_times_s", "must not be empty");
        for (double h : v.hover_times_s)
            if (!(h > 0)) fail(hp + ".hover_times_s", "hover times must be > 0");
        if (const json* q = find(*p, "seeds")) v.seeds = as_seed_vec(*q, hp + ".seeds");
        if (v.seeds.empty()) fail(hp + ".seeds", "must not be empty");
        s.hover = v;
    }
    return s;
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

json grid_json(const GridSpec& g) {
    return {{"nx", g.nx},     {"ny", g.ny},         {"nz", g.nz},
            {"cell_size", g.cell_size}, {"t_step", g.t_step}, {"n_steps", g.n_steps}};
}

json canonical_json_of(const Scenario& s) {
    json j;
    j["master_seed"] = s.master_seed;
    j["output_dir"] = s.output_dir;
    j["duration_min"] = s.duration_min;
    if (s.field) {
        json f;
        f["grid"] = grid_json(s.field->grid);
        f["sources"] = json::array();
        for (const SourceSpec& src : s.field->sources)
            f["sources"].push_back({{"position", vec3_json(src.position)},
                                    {"emission_rate", src.emission_rate},
                                    {"t_start", src.t_start},
                                    {"t_end", src.t_end}});
        const WeatherParams& w = s.field->dynamics.weather;
        f["dynamics"] = {{"diffusion", s.field->dynamics.diffusion},
                         {"initial_value", s.field->dynamics.initial_value},
                         {"weather",
                          {{"wind_mean", vec3_json(w.wind_mean)},
                           {"wind_sigma", w.wind_sigma},
                           {"wind_phi", w.wind_phi},
                           {"humidity_mean", w.humidity_mean},
                           {"humidity_sigma", w.humidity_sigma},
                           {"humidity_phi", w.humidity_phi},
                           {"temperature_mean", w.temperature_mean},
                           {"temperature_sigma", w.temperature_sigma},
                           {"temperature_phi", w.temperature_phi}}}};
        f["weather_seed"] = s.field->weather_seed;
        j["field"] = f;
    }
    j["devices"] = json::array();
    for (const DeviceConfig& d : s.devices)
        j["devices"].push_back({{"id", d.id},
                                {"kind", d.kind == DeviceKind::ground ? "ground" : "aerial"},
                                {"position", vec3_json(d.position)},
                                {"battery_mAh", d.battery_mAh},
                                {"sensing_interval_min", d.sensing_interval_min},
                                {"uploading_interval_min", d.uploading_interval_min},
                                {"calibration",
                                 {{"gain", d.calibration.gain}, {"offset", d.calibration.offset}}},
                                {"noise_seed", d.noise_seed}});
    j["link"] = {{"latency_base_s", s.link.latency_base_s},
                 {"latency_jitter_s", s.link.latency_jitter_s},
                 {"loss_probability", s.link.loss_probability}};
    j["power_profile"] = {{"e_wake", s.profile.e_wake},
                          {"e_sense", s.profile.e_sense},
                          {"e_upload", s.profile.e_upload},
                          {"e_sleep_per_min", s.profile.e_sleep_per_min},
                          {"capacity_mAh", s.profile.capacity_mAh}};
    j["noise"] = {{"sigma_rel", s.noise.sigma_rel},
                  {"p_fault", s.noise.p_fault},
                  {"fault_low", s.noise.fault_low},
                  {"fault_high", s.noise.fault_high},
                  {"pm10_ratio", s.noise.pm10_ratio}};
    j["commands"] = json::array();
    for (const ScheduledCommand& c : s.commands)
        j["commands"].push_back({{"device_id", c.cmd.device_id},
                                 {"sensing_interval_min", c.cmd.sensing_interval_min},
                                 {"uploading_interval_min", c.cmd.uploading_interval_min},
                                 {"issue_time", c.cmd.issue_time},
                                 {"via", c.via}});
    if (s.screening)
        j["screening"] = {{"k_spatial", s.screening->k_spatial},
                          {"k_temporal", s.screening->k_temporal},
                          {"history_len", s.screening->history_len},
                          {"pattern_window", s.screening->pattern_window}};
    auto mlp_json = [](const MlpSpec& m) {
        return json{{"layer_widths", m.layer_widths},
                    {"activation", m.activation == Activation::tanh_ ? "tanh" : "relu"},
                    {"learning_rate", m.learning_rate},
                    {"epochs", m.epochs},
                    {"batch_size", m.batch_size},
                    {"init_seed", m.init_seed}};
    };
    if (s.mlp) j["mlp"] = mlp_json(*s.mlp);
    if (s.fit_eval)
        j["fit_eval"] = {{"holdout_fraction", s.fit_eval->holdout_fraction},
                         {"seeds", s.fit_eval->seeds}};
    if (s.predict_eval)
        j["predict_eval"] = {{"weather",
                              {{"wind", s.predict_eval->weather.wind},
                               {"humidity", s.predict_eval->weather.humidity},
                               {"temperature", s.predict_eval->weather.temperature},
                               {"lag_steps", s.predict_eval->weather.lag_steps}}},
                             {"horizons_s", s.predict_eval->horizons_s},
                             {"max_horizon_s", s.predict_eval->max_horizon_s},
                             {"min_train_steps", s.predict_eval->min_train_steps},
                             {"cut_stride", s.predict_eval->cut_stride}};
    if (s.predict_eval && s.predict_eval->mlp)
        j["predict_eval"]["mlp"] = mlp_json(*s.predict_eval->mlp);
    if (s.deploy) {
        json d = {{"survey_csv", s.deploy->survey_csv}, {"n_deploy", s.deploy->n_deploy},
                  {"bins", s.deploy->bins},             {"sigma_d", s.deploy->affinity.sigma_d},
                  {"sigma_p", s.deploy->affinity.sigma_p}, {"seed", s.deploy->seed}};
        if (s.deploy->initial) d["initial"] = *s.deploy->initial;
        j["deploy"] = d;
    }
    if (s.aerial) {
        const AerialSetup& a = s.aerial->setup;
        j["aerial"] = {{"scan_grid", grid_json(a.scan_grid)},
                       {"uav",
                        {{"e_fly_J_per_m", a.uav.e_fly_J_per_m},
                         {"e_hover_J_per_s", a.uav.e_hover_J_per_s},
                         {"budget_J", a.uav.budget_J},
                         {"speed_m_s", a.uav.speed_m_s}}},
                       {"pdt",
                        {{"grad_threshold", a.pdt.grad_threshold},
                         {"include_extrema", a.pdt.include_extrema},
                         {"w_grad", a.pdt.w_grad},
                         {"w_ext", a.pdt.w_ext}}},
                       {"hover_s", a.hover_s},
                       {"tau_s", a.tau_s},
                       {"start", vec3_json(a.start)},
                       {"n_probe_positions", a.n_probe_positions},
                       {"probe_seed", a.probe_seed},
                       {"horizon_h", a.horizon_h},
                       {"probe_step_h", a.probe_step_h},
                       {"scan_seed", s.aerial->scan_seed},
                       {"flight_seed", s.aerial->flight_seed},
                       {"scan_time_s", a.scan_time_s},
                       {"flight_start_s", s.aerial->flight_start_s}};
    }
    json sweeps = json::object();
    if (s.sweeps.intervals)
        sweeps["intervals"] = {{"grid_min", s.sweeps.intervals->grid_min},
                               {"seeds", s.sweeps.intervals->seeds},
                               {"upload_factor", s.sweeps.intervals->upload_factor},
                               {"n_probe_positions", s.sweeps.intervals->n_probe_positions},
                               {"probe_seed", s.sweeps.intervals->probe_seed},
                               {"probe_step_s", s.sweeps.intervals->probe_step_s},
                               {"max_probe_times", s.sweeps.intervals->max_probe_times}};
    if (s.sweeps.aerial)
        sweeps["aerial"] = {{"intervals_h", s.sweeps.aerial->intervals_h},
                            {"seeds", s.sweeps.aerial->seeds}};
    if (s.sweeps.hover)
        sweeps["hover"] = {{"hover_times_s", s.sweeps.hover->hover_times_s},
                           {"seeds", s.sweeps.hover->seeds}};
    if (!sweeps.empty()) j["sweeps"] = sweeps;
    return j;
}

}  // namespace

LoadedScenario parse_scenario(const std::string& text, const std::string& base_dir) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("scenario: file is not valid JSON");
    check_keys(j, "$",
               {"master_seed", "output_dir", "field", "devices", "link", "power_profile", "noise",
                "commands", "duration_min", "screening", "mlp", "fit_eval", "predict_eval",
                "deploy", "aerial", "sweeps"});

    Scenario s;
    s.master_seed = as_seed(require(j, "$", "master_seed"), "$.master_seed");
    s.output_dir = as_string(require(j, "$", "output_dir"), "$.output_dir");
    if (s.output_dir.empty()) fail("$.output_dir", "must not be empty");
    if (const json* p = find(j, "duration_min")) s.duration_min = as_int(*p, "$.duration_min");
    if (s.duration_min < 0) fail("$.duration_min", "must be >= 0");
    if (const json* p = find(j, "field")) s.field = parse_field(*p, "$.field");
    if (const json* p = find(j, "devices")) {
        const json& arr = as_array(*p, "$.devices");
        std::map<int, std::size_t> first_index;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            DeviceConfig d = parse_device(arr[i], "$.devices[" + std::to_string(i) + "]");
            auto [it, fresh] = first_index.emplace(d.id, i);
            if (!fresh)
                fail("$.devices[" + std::to_string(i) + "].id",
                     "duplicate device id " + std::to_string(d.id) + ", first defined at $.devices[" +
                         std::to_string(it->second) + "]");
            s.devices.push_back(d);
        }
    }
    if (const json* p = find(j, "link")) {
        check_keys(*p, "$.link", {"latency_base_s", "latency_jitter_s", "loss_probability"});
        if (const json* q = find(*p, "latency_base_s"))
            s.link.latency_base_s = as_double(*q, "$.link.latency_base_s");
        if (const json* q = find(*p, "latency_jitter_s"))
            s.link.latency_jitter_s = as_double(*q, "$.link.latency_jitter_s");
        if (const json* q = find(*p, "loss_probability"))
            s.link.loss_probability = as_double(*q, "$.link.loss_probability");
        s.link.validate();
    }
    if (const json* p = find(j, "power_profile")) {
        check_keys(*p, "$.power_profile",
                   {"e_wake", "e_sense", "e_upload", "e_sleep_per_min", "capacity_mAh"});
        if (const json* q = find(*p, "e_wake")) s.profile.e_wake = as_double(*q, "$.power_profile.e_wake");
        if (const json* q = find(*p, "e_sense"))
            s.profile.e_sense = as_double(*q, "$.power_profile.e_sense");
        if (const json* q = find(*p, "e_upload"))
            s.profile.e_upload = as_double(*q, "$.power_profile.e_upload");
        if (const json* q = find(*p, "e_sleep_per_min"))
            s.profile.e_sleep_per_min = as_double(*q, "$.power_profile.e_sleep_per_min");
        if (const json* q = find(*p, "capacity_mAh"))
            s.profile.capacity_mAh = as_double(*q, "$.power_profile.capacity_mAh");
        s.profile.validate();
    }
    if (const json* p = find(j, "noise")) {
        check_keys(*p, "$.noise", {"sigma_rel", "p_fault", "fault_low", "fault_high", "pm10_ratio"});
        if (const json* q = find(*p, "sigma_rel")) s.noise.sigma_rel = as_double(*q, "$.noise.sigma_rel");
        if (s.noise.sigma_rel < 0) fail("$.noise.sigma_rel", "must be >= 0");
        if (const json* q = find(*p, "p_fault")) s.noise.p_fault = as_double(*q, "$.noise.p_fault");
        if (s.noise.p_fault < 0 || s.noise.p_fault > 1) fail("$.noise.p_fault", "must be in [0,1]");
        if (const json* q = find(*p, "fault_low")) s.noise.fault_low = as_double(*q, "$.noise.fault_low");
        if (const json* q = find(*p, "fault_high"))
            s.noise.fault_high = as_double(*q, "$.noise.fault_high");
        if (s.noise.fault_high < s.noise.fault_low)
            fail("$.noise.fault_high", "must be >= fault_low");
        if (const json* q = find(*p, "pm10_ratio"))
            s.noise.pm10_ratio = as_double(*q, "$.noise.pm10_ratio");
        if (!(s.noise.pm10_ratio > 0)) fail("$.noise.pm10_ratio", "must be > 0");
    }
    if (const json* p = find(j, "commands")) {
        const json& arr = as_array(*p, "$.commands");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            std::string cp = "$.commands[" + std::to_string(i) + "]";
            check_keys(arr[i], cp,
                       {"device_id", "sensing_interval_min", "uploading_interval_min", "issue_time",
                        "via"});
            ScheduledCommand c;
            c.cmd.device_id = as_int(require(arr[i], cp, "device_id"), cp + ".device_id");
            if (const json* q = find(arr[i], "sensing_interval_min"))
                c.cmd.sensing_interval_min = as_int(*q, cp + ".sensing_interval_min");
            if (c.cmd.sensing_interval_min < 1) fail(cp + ".sensing_interval_min", "must be >= 1");
            if (const json* q = find(arr[i], "uploading_interval_min"))
                c.cmd.uploading_interval_min = as_int(*q, cp + ".uploading_interval_min");
            if (c.cmd.uploading_interval_min < 1)
                fail(cp + ".uploading_interval_min", "must be >= 1");
            if (const json* q = find(arr[i], "issue_time"))
                c.cmd.issue_time = as_double(*q, cp + ".issue_time");
            if (c.cmd.issue_time < 0) fail(cp + ".issue_time", "must be >= 0");
            if (const json* q = find(arr[i], "via")) c.via = as_string(*q, cp + ".via");
            if (c.via != "short_message" && c.via != "response")
                fail(cp + ".via", "must be 'short_message' or 'response'");
            bool known = false;
            for (const DeviceConfig& d : s.devices)
                if (d.id == c.cmd.device_id) known = true;
            if (!known) fail(cp + ".device_id", "no such device");
            s.commands.push_back(c);
        }
    }
    if (const json* p = find(j, "screening")) s.screening = parse_screening(*p, "$.screening");
    if (const json* p = find(j, "mlp")) s.mlp = parse_mlp(*p, "$.mlp");
    if (const json* p = find(j, "fit_eval")) s.fit_eval = parse_fit_eval(*p, "$.fit_eval");
    if (const json* p = find(j, "predict_eval"))
        s.predict_eval = parse_predict_eval(*p, "$.predict_eval");
    if (const json* p = find(j, "deploy")) s.deploy = parse_deploy(*p, "$.deploy");
    if (const json* p = find(j, "aerial")) s.aerial = parse_aerial(*p, "$.aerial");
    if (const json* p = find(j, "sweeps")) s.sweeps = parse_sweeps(*p, "$.sweeps");

    // Cross-section checks that individual parsers cannot see.
    if (!s.devices.empty()) {
        if (!s.field) fail("$.field", "required when devices are present");
        if (s.duration_min < 1) fail("$.duration_min", "must be >= 1 when devices are present");
        const Vec3 ext = s.field->grid.extent();
        for (std::size_t i = 0; i < s.devices.size(); ++i) {
            const Vec3& p = s.devices[i].position;
            if (p.x < 0 || p.y < 0 || p.z < 0 || p.x > ext.x || p.y > ext.y || p.z > ext.z)
                fail("$.devices[" + std::to_string(i) + "].position", "outside the field extent");
        }
        if (s.duration_min * 60.0 > s.field->grid.duration() + 1e-9)
            fail("$.duration_min", "exceeds the simulated field duration");
    }
    if (s.field)
        for (std::size_t i = 0; i < s.field->sources.size(); ++i) {
            const Vec3& p = s.field->sources[i].position;
            const Vec3 ext = s.field->grid.extent();
            if (p.x < 0 || p.y < 0 || p.z < 0 || p.x > ext.x || p.y > ext.y || p.z > ext.z)
                fail("$.field.sources[" + std::to_string(i) + "].position",
                     "outside the field extent");
        }
    if (s.aerial) {
        s.aerial->setup.noise = s.noise;
        s.aerial->setup.validate();
    }

    LoadedScenario out;
    out.scenario = std::move(s);
    out.canonical_json = canonical_json_of(out.scenario).dump(2) + "\n";
    out.config_hash = hex64(fnv1a64(text));
    out.base_dir = base_dir;
    return out;
}

LoadedScenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("scenario: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::filesystem::path p(path);
    std::string dir = p.has_parent_path() ? p.parent_path().string() : ".";
    return parse_scenario(buf.str(), dir);
}

SimConfig make_sim_config(const Scenario& s) {
    if (!s.field) throw ValidationError("scenario: $.field: required for this command");
    if (s.devices.empty()) throw ValidationError("scenario: $.devices: required for this command");
    if (s.duration_min < 1)
        throw ValidationError("scenario: $.duration_min: required for this command");
    SimConfig cfg;
    cfg.grid = s.field->grid;
    cfg.sources = s.field->sources;
    cfg.dynamics = s.field->dynamics;
    cfg.devices = s.devices;
    cfg.link = s.link;
    cfg.profile = s.profile;
    cfg.noise = s.noise;
    cfg.commands = s.commands;
    cfg.duration_min = s.duration_min;
    cfg.master_seed = s.master_seed;
    cfg.validate();
    return cfg;
}

Field build_scenario_field(const Scenario& s) {
    if (!s.field) throw ValidationError("scenario: $.field: required for this command");
    return build_field(s.field->grid, s.field->sources, s.field->weather_seed, s.field->dynamics);
}

}  // namespace aqs
