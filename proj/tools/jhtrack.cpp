// jhtrack: generate data, train, evaluate and render panels for one experiment config.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jh/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kMissing = 3, kDiverged = 4, kOther = 1 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised moving-target masking with Jekyll/Hyde hourglass networks"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string workspace;
    app.add_option("--config", config_path, "Experiment JSON; built-in defaults when omitted");
    app.add_option("--seed", seed, "Override the scene, split and training seeds");
    app.add_option("--workspace", workspace, "Workspace directory (overrides paths.workspace)");

    auto* generate = app.add_subcommand("generate", "Simulate the cube, carve samples and split them");
    auto* train = app.add_subcommand("train", "Train Jekyll+Hyde or the supervised Utterson baseline");
    std::string mode = "unsupervised";
    std::optional<int> epochs;
    train->add_option("--mode", mode, "unsupervised | supervised")->check(CLI::IsMember({"unsupervised", "supervised"}));
    train->add_option("--epochs", epochs, "Override train.epochs")->check(CLI::PositiveNumber);
    auto* eval = app.add_subcommand("eval", "Sweep thresholds on the test subset and write CSVs");
    auto* render = app.add_subcommand("render", "Write the 4x6 panel figure for one sample");
    std::int64_t sample = 0;
    render->add_option("--sample", sample, "Sample id from data/manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        auto config = config_path.empty() ? jh::ExperimentConfig{} : jh::load_experiment(config_path);
        if (seed) jh::apply_seed(config, *seed);
        if (!workspace.empty()) config.workspace = workspace;
        if (epochs) config.train.epochs = *epochs;
        jh::validate(config);
        std::cout << "config " << jh::config_hash(config) << std::endl;

        if (generate->parsed()) jh::cmd_generate(config, std::cerr);
        else if (train->parsed()) jh::cmd_train(config, jh::train_mode_from_string(mode), std::cerr);
        else if (eval->parsed()) jh::cmd_eval(config, std::cerr);
        else if (render->parsed()) jh::cmd_render(config, sample, std::cerr);
        return kOk;
    } catch (const jh::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const jh::MissingPrerequisite& e) {
        std::cerr << "missing prerequisite: " << e.what() << "\n";
        return kMissing;
    } catch (const jh::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n" << e.diagnostics().dump(2) << "\n";
        return kDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
}
