#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aqs/aerial_plan.hpp"
#include "aqs/device_net_sim.hpp"
#include "aqs/fitting.hpp"
#include "aqs/ground_deploy.hpp"
#include "aqs/mlp.hpp"
#include "aqs/power_tradeoff.hpp"
#include "aqs/prediction.hpp"

namespace aqs {

/// Truth-field construction inputs. Optional in a scenario: commands that only
/// read a survey CSV never need one.
struct FieldSection {
    GridSpec grid;
    std::vector<SourceSpec> sources;
    DiffusionParams dynamics;
    std::uint64_t weather_seed = 1;
};

struct FitEvalSection {
    double holdout_fraction = 0.2;
    std::vector<std::uint64_t> seeds = {1};
};

struct PredictEvalSection {
    WeatherFeatureSpec weather;
    std::vector<double> horizons_s = {900.0, 1800.0, 3600.0, 7200.0};
    double max_horizon_s = 7200.0;
    int min_train_steps = 8;
    int cut_stride = 8;
    // Walk-forward training retrains one net per cut; scenarios that need a
    // heavier fitting net can give the forecaster a lighter one here.
    std::optional<MlpSpec> mlp;
};

struct DeploySection {
    std::string survey_csv;  // resolved against the scenario file's directory
    int n_deploy = 1;
    int bins = 16;
    AffinityParams affinity;
    std::uint64_t seed = 1;
    std::optional<std::vector<int>> initial;  // n_deploy distinct candidate ids
};

struct AerialSection {
    AerialSetup setup;  // setup.noise is always the scenario-level noise model
    std::uint64_t scan_seed = 1;
    std::uint64_t flight_seed = 2;
    double flight_start_s = 0.0;
};

struct IntervalSweepSection {
    std::vector<int> grid_min = {15, 30, 60, 120};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int upload_factor = 2;
    int n_probe_positions = 8;
    std::uint64_t probe_seed = 7;
    double probe_step_s = 3600.0;
    int max_probe_times = 12;
};

struct AerialSweepSection {
    std::vector<double> intervals_h = {3.0, 6.0, 12.0, 24.0};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct HoverSweepSection {
    std::vector<double> hover_times_s = {1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 15.0};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

struct SweepsSection {
    std::optional<IntervalSweepSection> intervals;
    std::optional<AerialSweepSection> aerial;
    std::optional<HoverSweepSection> hover;
};

/// Everything a run needs, parsed from one JSON file. master_seed is the only
/// entropy source anywhere; nothing reads the wall clock into results.
struct Scenario {
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";
    std::optional<FieldSection> field;
    std::vector<DeviceConfig> devices;
    LinkModel link;
    PowerProfile profile;
    NoiseModel noise;
    std::vector<ScheduledCommand> commands;
    int duration_min = 0;
    std::optional<ScreeningParams> screening;
    std::optional<MlpSpec> mlp;
    std::optional<FitEvalSection> fit_eval;
    std::optional<PredictEvalSection> predict_eval;
    std::optional<DeploySection> deploy;
    std::optional<AerialSection> aerial;
    SweepsSection sweeps;
};

struct LoadedScenario {
    Scenario scenario;
    std::string canonical_json;  // defaults materialized, keys sorted
    std::string config_hash;     // over the exact bytes read from disk
    std::string base_dir;        // directory of the scenario file, for relative paths
};

/// Strict parse: unknown keys are rejected and every complaint names the full
/// path to the offending field. base_dir resolves relative file references.
LoadedScenario parse_scenario(const std::string& text, const std::string& base_dir);

LoadedScenario load_scenario(const std::string& path);

/// Assembles the simulator config. Throws ValidationError naming whichever of
/// field/devices/duration the scenario is missing.
SimConfig make_sim_config(const Scenario& s);

Field build_scenario_field(const Scenario& s);

}  // namespace aqs
