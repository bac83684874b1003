#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "aqs/harness.hpp"

namespace {

struct Shared {
    std::string config;
    std::string out;
    bool reproducible = false;
};

void add_shared(CLI::App* sub, Shared& sh) {
    sub->add_option("-c,--config", sh.config, "Scenario JSON file")->required();
    sub->add_option("-o,--out", sh.out, "Output directory, overriding the scenario's output_dir");
    sub->add_flag("--reproducible", sh.reproducible,
                  "Omit wall-clock metadata so reruns are byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator and analysis toolkit for an aerial-ground air-quality network"};
    app.require_subcommand(1);
    Shared sh;

    app.add_subcommand("validate", "Check a scenario file and echo its canonical form");
    app.add_subcommand("simulate", "Run the device network against the truth field");
    app.add_subcommand("fit-eval", "Score estimation methods on held-out locations");
    app.add_subcommand("predict-eval", "Walk-forward evaluation of ahead-of-time estimates");
    app.add_subcommand("deploy", "Pick ground sensor sites from a survey CSV");
    app.add_subcommand("plan-uav", "Coarse scan, importance extraction, route, flight");
    app.add_subcommand("export-field", "Dump the truth field and weather trace as CSV");
    CLI::App* sweep = app.add_subcommand("sweep", "Parameter sweeps for the operating trade-offs");
    std::string sweep_kind;
    sweep->add_option("kind", sweep_kind, "Which sweep: intervals, aerial or hover")
        ->required()
        ->check(CLI::IsMember({"intervals", "aerial", "hover"}));

    for (CLI::App* sub : app.get_subcommands(nullptr)) add_shared(sub, sh);

    CLI11_PARSE(app, argc, argv);

    std::string command = app.get_subcommands().front()->get_name();
    if (command == "sweep") command += "-" + sweep_kind;

    try {
        aqs::LoadedScenario loaded = aqs::load_scenario(sh.config);
        aqs::RunOptions opts;
        opts.out_dir = sh.out;
        opts.reproducible = sh.reproducible;
        return aqs::run_command(loaded, command, opts, std::cout);
    } catch (const aqs::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const aqs::NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const aqs::RuntimeFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
