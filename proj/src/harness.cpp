#include "aqs/harness.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aqs/preprocess.hpp"
#include "aqs/rng.hpp"

namespace aqs {
namespace {

using nlohmann::json;

namespace fs = std::filesystem;

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects artifact files for one run directory and finishes with the
/// manifest naming exactly those files.
class RunDir {
public:
    RunDir(const fs::path& dir, const LoadedScenario& loaded, const std::string& command,
           bool reproducible)
        : dir_(dir), command_(command), reproducible_(reproducible) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw RuntimeFailure("harness: cannot create " + dir_.string());
        manifest_["command"] = command;
        manifest_["config_hash"] = loaded.config_hash;
        manifest_["master_seed"] = loaded.scenario.master_seed;
        manifest_["parameters"] = json::parse(loaded.canonical_json);
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw RuntimeFailure("harness: cannot write " + (dir_ / name).string());
        f << content;
        if (!f) throw RuntimeFailure("harness: short write to " + (dir_ / name).string());
        names_.push_back(name);
    }

    void set_time_range(double t0, double t1) {
        manifest_["sim_time_start_s"] = t0;
        manifest_["sim_time_end_s"] = t1;
    }

    json& extra() { return manifest_; }

    void finish() {
        manifest_["artifacts"] = names_;
        if (!reproducible_) manifest_["generated_at"] = utc_now();
        std::ofstream f(dir_ / "manifest.json", std::ios::binary);
        if (!f) throw RuntimeFailure("harness: cannot write manifest in " + dir_.string());
        f << manifest_.dump(2) << "\n";
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::string command_;
    bool reproducible_;
    std::vector<std::string> names_;
    json manifest_;
};

const Scenario& need(const LoadedScenario& loaded) { return loaded.scenario; }

void require_section(bool present, const std::string& path, const std::string& command) {
    if (!present)
        throw ValidationError("scenario: " + path + ": required by the " + command + " command");
}

std::vector<Sample> received_samples(const SimulationTrace& trace) {
    std::vector<Sample> out;
    out.reserve(trace.received.size());
    for (const ReceivedSample& r : trace.received) out.push_back(r.sample);
    return out;
}

std::string command_log_json(const SimulationTrace& trace) {
    json arr = json::array();
    for (const CommandLogEntry& e : trace.command_log)
        arr.push_back({{"device_id", e.cmd.device_id},
                       {"sensing_interval_min", e.cmd.sensing_interval_min},
                       {"uploading_interval_min", e.cmd.uploading_interval_min},
                       {"issue_time", e.cmd.issue_time},
                       {"via", e.via},
                       {"applied_time", e.applied_time},
                       {"status", e.status}});
    return json{{"commands", arr}}.dump(2) + "\n";
}

int run_simulate(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    SimConfig cfg = make_sim_config(need(loaded));
    Field field = build_scenario_field(need(loaded));
    SimulationTrace trace = run_simulation(cfg, field);
    std::ostringstream samples;
    trace.write_samples_csv(samples);
    run.write("samples.csv", samples.str());
    run.write("ledgers.json", trace.ledgers_json());
    run.write("commands.json", command_log_json(trace));
    run.set_time_range(0.0, cfg.duration_min * 60.0);
    int dead = 0;
    for (const DeviceReport& d : trace.devices)
        if (d.dead) ++dead;
    run.extra()["n_received"] = trace.received.size();
    run.extra()["n_dead_devices"] = dead;
    out << "simulate: " << trace.received.size() << " samples received, " << dead
        << " devices exhausted\n";
    return 0;
}

int run_fit_eval(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.screening.has_value(), "$.screening", "fit-eval");
    require_section(s.mlp.has_value(), "$.mlp", "fit-eval");
    require_section(s.fit_eval.has_value(), "$.fit_eval", "fit-eval");
    SimConfig cfg = make_sim_config(s);
    Field field = build_scenario_field(s);
    SimulationTrace trace = run_simulation(cfg, field);
    std::vector<Sample> samples = received_samples(trace);
    SeriesDataset data = dataset_from_samples(samples);

    std::ostringstream csv;
    csv << "seed,method,rmse,mrd,n_points\n";
    std::map<std::string, std::pair<double, double>> sums;
    json per_seed = json::array();
    for (std::uint64_t seed : s.fit_eval->seeds) {
        FitEvalParams params;
        params.screening = *s.screening;
        params.mlp = *s.mlp;
        params.mlp.init_seed = derive_seed(seed, "init");
        params.holdout_fraction = s.fit_eval->holdout_fraction;
        params.split_seed = seed;
        FitEvalResult result = evaluate_fitting(data, params);
        for (const MethodScore& m : result.scores) {
            csv << seed << "," << m.method << "," << fmt_double(m.rmse) << ","
                << fmt_double(m.mrd) << "," << result.n_eval_points << "\n";
            sums[m.method].first += m.rmse;
            sums[m.method].second += m.mrd;
        }
        per_seed.push_back({{"seed", seed},
                            {"holdout_ids", result.holdout_ids},
                            {"n_eval_points", result.n_eval_points}});
    }
    run.write("fit_eval.csv", csv.str());

    const double n = static_cast<double>(s.fit_eval->seeds.size());
    std::vector<std::pair<std::string, std::pair<double, double>>> means(sums.begin(), sums.end());
    std::sort(means.begin(), means.end(),
              [](const auto& a, const auto& b) { return a.second.first < b.second.first; });
    std::ostringstream summary;
    summary << "method,mean_rmse,mean_mrd,n_seeds\n";
    for (const auto& [method, acc] : means)
        summary << method << "," << fmt_double(acc.first / n) << "," << fmt_double(acc.second / n)
                << "," << s.fit_eval->seeds.size() << "\n";
    run.write("fit_eval_summary.csv", summary.str());

    run.set_time_range(0.0, cfg.duration_min * 60.0);
    run.extra()["per_seed"] = per_seed;
    out << "fit-eval: " << s.fit_eval->seeds.size() << " seeds, best method "
        << (means.empty() ? std::string("none") : means.front().first) << "\n";
    return 0;
}

int run_predict_eval(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.screening.has_value(), "$.screening", "predict-eval");
    require_section(s.mlp.has_value(), "$.mlp", "predict-eval");
    require_section(s.predict_eval.has_value(), "$.predict_eval", "predict-eval");
    SimConfig cfg = make_sim_config(s);
    Field field = build_scenario_field(s);
    SimulationTrace trace = run_simulation(cfg, field);
    std::vector<Sample> samples = received_samples(trace);
    SeriesDataset data = dataset_from_samples(samples);

    PredictionEvalParams params;
    params.screening = *s.screening;
    params.mlp = s.predict_eval->mlp ? *s.predict_eval->mlp : *s.mlp;
    params.weather_spec = s.predict_eval->weather;
    params.horizons_s = s.predict_eval->horizons_s;
    params.max_horizon_s = s.predict_eval->max_horizon_s;
    params.min_train_steps = s.predict_eval->min_train_steps;
    params.cut_stride = s.predict_eval->cut_stride;
    PredictionEvalResult result = evaluate_prediction(data, field.weather(), params);

    std::ostringstream csv;
    write_prediction_csv(result, csv);
    run.write("prediction.csv", csv.str());
    run.set_time_range(0.0, cfg.duration_min * 60.0);
    run.extra()["dropped_horizons"] = result.dropped_horizons;
    run.extra()["skipped_pairs"] = result.skipped_pairs;
    run.extra()["n_cuts"] = result.n_cuts;
    out << "predict-eval: " << result.rows.size() << " rows over " << result.n_cuts << " cuts\n";
    return 0;
}

int run_deploy(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.deploy.has_value(), "$.deploy", "deploy");
    fs::path survey(s.deploy->survey_csv);
    if (survey.is_relative()) survey = fs::path(loaded.base_dir) / survey;
    std::ifstream in(survey);
    if (!in) throw ValidationError("deploy: cannot open survey file " + survey.string());
    CandidateSet candidates = read_survey_csv(in, s.deploy->bins);
    AffinityParams affinity = resolve_affinity(candidates, s.deploy->affinity);
    const std::vector<int>* initial = s.deploy->initial ? &*s.deploy->initial : nullptr;
    DeploymentPlan plan = greedy_swap(candidates, s.deploy->n_deploy, initial, affinity,
                                      s.deploy->seed);
    run.write("plan.json", plan_json(plan, affinity, s.deploy->n_deploy));
    run.set_time_range(0.0, 0.0);
    run.extra()["n_candidates"] = candidates.locations.size();
    run.extra()["weights_converged"] = plan.weights_converged;
    out << "deploy: entropy " << fmt_double(plan.mean_entropy) << " after " << plan.swaps.size()
        << " swaps\n";
    return plan.weights_converged ? 0 : 4;
}

int run_plan_uav(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.field.has_value(), "$.field", "plan-uav");
    require_section(s.aerial.has_value(), "$.aerial", "plan-uav");
    Field field = build_scenario_field(s);
    const AerialSection& a = *s.aerial;
    std::vector<ScanSample> scan =
        coarse_scan(field, a.setup.scan_grid, a.setup.scan_time_s, s.noise, a.scan_seed);
    CoarseField coarse = fit_coarse(scan, a.setup.scan_grid);
    PdtResult pdt = compute_pdt(coarse, a.setup.pdt);
    FlightPlan plan = plan_route(pdt.points, coarse, a.setup.start, a.setup.uav, a.setup.hover_s);
    FlightResult flight = simulate_flight(plan, field, a.setup.uav, a.setup.tau_s,
                                          a.flight_start_s, s.noise, a.flight_seed);

    std::ostringstream importance;
    write_importance_csv(pdt, a.setup.scan_grid, importance);
    run.write("importance.csv", importance.str());
    run.write("flight_plan.json", flight_plan_json(plan));
    std::ostringstream samples;
    samples << "cell,x,y,z,t,value,truth\n";
    for (const FlightSample& fsamp : flight.samples)
        samples << fsamp.cell << "," << fmt_double(fsamp.position.x) << ","
                << fmt_double(fsamp.position.y) << "," << fmt_double(fsamp.position.z) << ","
                << fmt_double(fsamp.time) << "," << fmt_double(fsamp.value) << ","
                << fmt_double(fsamp.truth) << "\n";
    run.write("flight_samples.csv", samples.str());

    run.set_time_range(a.setup.scan_time_s, flight.end_time);
    run.extra()["grad_threshold"] = pdt.threshold;
    run.extra()["skipped_axes"] = pdt.skipped_axes;
    run.extra()["n_importance_points"] = pdt.points.size();
    run.extra()["n_waypoints"] = plan.cells.size();
    run.extra()["energy_used_J"] = flight.energy_used_J;
    out << "plan-uav: " << pdt.points.size() << " important points, " << plan.cells.size()
        << " waypoints, " << fmt_double(flight.energy_used_J) << " J\n";
    return 0;
}

int run_sweep_intervals(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.screening.has_value(), "$.screening", "sweep intervals");
    require_section(s.mlp.has_value(), "$.mlp", "sweep intervals");
    require_section(s.sweeps.intervals.has_value(), "$.sweeps.intervals", "sweep intervals");
    SimConfig cfg = make_sim_config(s);
    Field field = build_scenario_field(s);
    const IntervalSweepSection& sec = *s.sweeps.intervals;
    IntervalSweepParams params;
    params.screening = *s.screening;
    params.mlp = *s.mlp;
    params.upload_factor = sec.upload_factor;
    params.n_probe_positions = sec.n_probe_positions;
    params.probe_seed = sec.probe_seed;
    params.probe_step_s = sec.probe_step_s;
    params.max_probe_times = sec.max_probe_times;
    std::vector<IntervalSweepRow> rows =
        interval_accuracy_sweep(cfg, field, sec.grid_min, sec.seeds, params);
    std::ostringstream csv;
    write_interval_sweep_csv(rows, csv);
    run.write("sweep_intervals.csv", csv.str());
    run.set_time_range(0.0, cfg.duration_min * 60.0);
    out << "sweep intervals: " << rows.size() << " settings\n";
    return 0;
}

int run_sweep_aerial(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.field.has_value(), "$.field", "sweep aerial");
    require_section(s.aerial.has_value(), "$.aerial", "sweep aerial");
    require_section(s.sweeps.aerial.has_value(), "$.sweeps.aerial", "sweep aerial");
    Field field = build_scenario_field(s);
    std::vector<AerialSweepRow> rows = aerial_interval_sweep(field, s.aerial->setup,
                                                             s.sweeps.aerial->intervals_h,
                                                             s.sweeps.aerial->seeds);
    std::ostringstream csv;
    write_aerial_sweep_csv(rows, csv);
    run.write("sweep_aerial.csv", csv.str());
    run.set_time_range(0.0, s.aerial->setup.horizon_h * 3600.0);
    out << "sweep aerial: " << rows.size() << " intervals\n";
    return 0;
}

int run_sweep_hover(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.field.has_value(), "$.field", "sweep hover");
    require_section(s.aerial.has_value(), "$.aerial", "sweep hover");
    require_section(s.sweeps.hover.has_value(), "$.sweeps.hover", "sweep hover");
    Field field = build_scenario_field(s);
    HoverSweepResult result =
        hover_sweep(field, s.aerial->setup, s.sweeps.hover->hover_times_s, s.sweeps.hover->seeds);
    std::ostringstream csv;
    write_hover_sweep_csv(result, csv);
    run.write("sweep_hover.csv", csv.str());
    run.set_time_range(0.0, field.grid().duration());
    run.extra()["argmin_hover_s"] = result.argmin_hover_s;
    out << "sweep hover: argmin at " << fmt_double(result.argmin_hover_s) << " s\n";
    return 0;
}

int run_export_field(const LoadedScenario& loaded, RunDir& run, std::ostream& out) {
    const Scenario& s = need(loaded);
    require_section(s.field.has_value(), "$.field", "export-field");
    Field field = build_scenario_field(s);
    std::ostringstream fieldcsv;
    export_field_csv(field, fieldcsv);
    run.write("field.csv", fieldcsv.str());
    std::ostringstream weathercsv;
    write_weather_csv(field.weather(), weathercsv);
    run.write("weather.csv", weathercsv.str());
    run.set_time_range(0.0, field.grid().duration());
    out << "export-field: " << field.grid().cells() << " cells x " << field.grid().n_steps
        << " steps\n";
    return 0;
}

}  // namespace

const std::vector<std::string>& known_commands() {
    static const std::vector<std::string> cmds = {
        "simulate",     "fit-eval",     "predict-eval", "deploy",       "plan-uav",
        "sweep-intervals", "sweep-aerial", "sweep-hover", "export-field", "validate"};
    return cmds;
}

int run_command(const LoadedScenario& loaded, const std::string& command, const RunOptions& opts,
                std::ostream& out) {
    if (command == "validate") {
        out << loaded.canonical_json;
        return 0;
    }
    const std::string base = opts.out_dir.empty() ? loaded.scenario.output_dir : opts.out_dir;
    fs::path dir = fs::path(base) / command;
    RunDir run(dir, loaded, command, opts.reproducible);
    int code = 0;
    if (command == "simulate")
        code = run_simulate(loaded, run, out);
    else if (command == "fit-eval")
        code = run_fit_eval(loaded, run, out);
    else if (command == "predict-eval")
        code = run_predict_eval(loaded, run, out);
    else if (command == "deploy")
        code = run_deploy(loaded, run, out);
    else if (command == "plan-uav")
        code = run_plan_uav(loaded, run, out);
    else if (command == "sweep-intervals")
        code = run_sweep_intervals(loaded, run, out);
    else if (command == "sweep-aerial")
        code = run_sweep_aerial(loaded, run, out);
    else if (command == "sweep-hover")
        code = run_sweep_hover(loaded, run, out);
    else if (command == "export-field")
        code = run_export_field(loaded, run, out);
    else
        throw ValidationError("harness: unknown command " + command);
    run.finish();
    return code;
}

}  // namespace aqs
