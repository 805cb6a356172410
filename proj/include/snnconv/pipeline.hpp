#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnconv/costmodel.hpp"
#include "snnconv/data.hpp"
#include "snnconv/netgraph.hpp"
#include "snnconv/partitioner.hpp"
#include "snnconv/quantizer.hpp"
#include "snnconv/trainer.hpp"

namespace snnconv {

inline constexpr const char *kToolVersion = "0.1.0";

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or "dir"
    std::string train_dir;             // PGM pairs, used when source == "dir"
    std::string test_dir;
    std::uint64_t train_seed = 1;
    std::uint64_t test_seed = 2;
    int train_images = 40;  // synthetic base images before augmentation
    int test_images = 20;
    int image_size = 48;
    int crop = 40;
    int resize_to = 32;
    int train_samples = 200;
    int test_samples = 100;
    std::uint64_t train_crop_seed = 11;
    std::uint64_t test_crop_seed = 12;
};

struct QuantizeConfig {
    ChipLimits limits;
    double v_th = 1.0;
};

struct PartitionConfig {
    CoreBudget budget;
    double tolerance = 0.05;
    std::uint64_t seed = 0;
};

struct SimulateConfig {
    int steps = 200;
    int window = 100;          // decode the head over the last `window` steps
    int rate_from_step = 50;   // layer rates skip the fill-in transient
    int samples = 0;           // 0: the whole test set
    int curve_every = 10;      // accuracy-vs-steps sampling interval
    std::int64_t v_min = 0;
    bool raster = false;       // write the spike raster of the first sample
};

struct SweepConfig {
    std::vector<double> amplitudes{1.0 / 200, 1.0 / 300, 1.0 / 400, 1.0 / 500, 1.0 / 1000};
    int epochs = -1;   // -1: train.epochs
    int samples = 20;  // test crops simulated per entry
};

// Defaults of a run: the desk-scale network of configs/desk.json.
inline UNetConfig desk_graph()
{
    UNetConfig g;
    g.input_size = 32;
    g.base_channels = 4;
    g.meta_layers = 2;
    g.seed = 1;
    return g;
}

inline TrainConfig desk_train()
{
    TrainConfig t;
    t.seed = 3;
    return t;
}

struct RunConfig {
    UNetConfig graph = desk_graph();
    DataConfig data;
    TrainConfig train = desk_train();
    QuantizeConfig quantize;
    PartitionConfig partition;
    SimulateConfig simulate;
    EnergyParams energy = default_energy_params();
    SweepConfig sweep;
    std::string out_dir = "out";
    unsigned threads = 0;  // 0: hardware concurrency; results do not depend on it
};

/// Fully resolved configuration, one object per section.
nlohmann::json config_to_json(const RunConfig &config);
/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig config_from_json(const nlohmann::json &doc);

/// Reads the config file (empty path: defaults), applies "section.key=value"
/// overrides (the value is parsed as JSON, falling back to a string) and then
/// the SNNCONV_OUT_DIR environment variable.
RunConfig load_config(const std::filesystem::path &path, const std::vector<std::string> &overrides = {});

std::vector<ImageSample> make_train_set(const DataConfig &config);
std::vector<ImageSample> make_test_set(const DataConfig &config);

std::string sha256_hex(const std::string &bytes);

/// Pipeline stages in order.
const std::vector<std::string> &stage_names();

void cmd_build(const RunConfig &config, std::ostream &log);
void cmd_train(const RunConfig &config, std::ostream &log);
void cmd_quantize(const RunConfig &config, std::ostream &log);
void cmd_partition(const RunConfig &config, std::ostream &log);
void cmd_simulate(const RunConfig &config, std::ostream &log);
void cmd_report(const RunConfig &config, std::ostream &log);
/// Every stage in order.
void cmd_run(const RunConfig &config, std::ostream &log);

/// Throws StageOrderError naming the first stage whose artifacts are missing,
/// were modified, or were produced from different inputs or configuration.
void verify_stage(const RunConfig &config, const std::string &stage);

struct SweepEntry {
    std::string label;
    double amplitude = 0.0;
    bool regularized = false;
    double rate_accuracy = 0.0;
    double spiking_accuracy = 0.0;
    std::vector<int> curve_steps;
    std::vector<double> curve_accuracy;
    std::vector<std::string> layer_names;
    std::vector<double> layer_rate_model;  // Hz
    std::vector<double> layer_fixsim;      // Hz
    double mean_abs_rate_diff = 0.0;       // mean over layers of |fixsim - model| / model
    double mean_rate = 0.0;                // Hz, fixsim over all spiking neurons
    CostReport cost;
};

/// Trains unregularized variants at each amplitude, evaluates them next to
/// the pipeline's trained (regularized) network and writes sweep.json,
/// sweep.csv and SVG plots under <out_dir>/sweep. Needs the train stage.
std::vector<SweepEntry> cmd_sweep(const RunConfig &config, const std::vector<double> &amplitudes, std::ostream &log);

/// Fits the energy and time scales to the hardware reference row from the
/// simulate stage's spike counts, starting at `prior`; writes
/// <out_dir>/calibration.json.
EnergyParams cmd_calibrate(const RunConfig &config, const EnergyParams &prior, std::ostream &log);

/// Exit code for an exception thrown by a stage (2 config, 3 stage order,
/// 4 numerical, 1 other).
int exit_code_for(const std::exception &error);

} // namespace snnconv
