// Command-line driver for the conversion pipeline.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snnconv/errors.hpp"
#include "snnconv/pipeline.hpp"

namespace {

std::vector<double> parse_amplitudes(const std::string &text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        const auto slash = item.find('/');
        try {
            if (slash != std::string::npos) {
                out.push_back(std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
            } else {
                out.push_back(std::stod(item));
            }
        } catch (const std::exception &) {
            throw snnconv::ConfigError("cannot parse amplitude '" + item + "'");
        }
    }
    return out;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Train, quantize, partition and simulate a spiking U-Net for a two-chip neuromorphic target"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", snnconv::kToolVersion);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    unsigned threads = 0;
    app.add_option("-c,--config", config_path, "JSON run configuration (defaults apply to missing keys)");
    app.add_option("--set", overrides, "Override a config field, e.g. --set train.epochs=5")->take_all();
    app.add_option("-o,--out-dir", out_dir, "Artifact directory (overrides paths.out_dir and SNNCONV_OUT_DIR)");
    auto *threads_opt = app.add_option("-j,--threads", threads, "Worker threads, 0 = all cores");

    std::vector<std::pair<std::string, CLI::App *>> stages;
    for (const std::string &name : snnconv::stage_names()) {
        stages.emplace_back(name, app.add_subcommand(name, "Run the " + name + " stage"));
    }
    auto *run_cmd = app.add_subcommand("run", "Run every stage in order");
    auto *sweep_cmd = app.add_subcommand("sweep", "Amplitude sweep of unregularized networks vs the trained one");
    std::string amplitudes;
    sweep_cmd->add_option("--amplitudes", amplitudes,
                          "Comma-separated amplitudes such as 1/200,1/300 (default: sweep.amplitudes)");
    auto *cal_cmd = app.add_subcommand("calibrate", "Fit the energy model scales to the hardware reference row");
    auto *config_cmd = app.add_subcommand("config", "Print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        // Help and version exit 0; usage errors count as config errors.
        return app.exit(e) == 0 ? 0 : 2;
    }
    const bool have_threads = threads_opt->count() > 0;

    try {
        if (have_threads) {
            overrides.push_back("run.threads=" + std::to_string(threads));
        }
        snnconv::RunConfig config = snnconv::load_config(config_path, overrides);
        if (!out_dir.empty()) {
            config.out_dir = out_dir;
        }
        std::ostream &log = std::cout;
        if (config_cmd->parsed()) {
            std::cout << snnconv::config_to_json(config).dump(2) << "\n";
        } else if (run_cmd->parsed()) {
            snnconv::cmd_run(config, log);
        } else if (sweep_cmd->parsed()) {
            const auto list = amplitudes.empty() ? config.sweep.amplitudes : parse_amplitudes(amplitudes);
            snnconv::cmd_sweep(config, list, log);
        } else if (cal_cmd->parsed()) {
            snnconv::cmd_calibrate(config, snnconv::prior_energy_params(), log);
        } else {
            for (const auto &[name, cmd] : stages) {
                if (!cmd->parsed()) {
                    continue;
                }
                if (name == "build") {
                    snnconv::cmd_build(config, log);
                } else if (name == "train") {
                    snnconv::cmd_train(config, log);
                } else if (name == "quantize") {
                    snnconv::cmd_quantize(config, log);
                } else if (name == "partition") {
                    snnconv::cmd_partition(config, log);
                } else if (name == "simulate") {
                    snnconv::cmd_simulate(config, log);
                } else {
                    snnconv::cmd_report(config, log);
                }
            }
        }
    } catch (const std::exception &e) {
        std::cerr << "snnconv: error: " << e.what() << "\n";
        return snnconv::exit_code_for(e);
    }
    return 0;
}
