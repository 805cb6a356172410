#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "snnconv/errors.hpp"
#include "snnconv/pipeline.hpp"

using namespace snnconv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name)
{
    const fs::path p = fs::temp_directory_path() / ("snnconv_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig tiny_config(const fs::path &out)
{
    RunConfig c;
    c.graph.input_size = 16;
    c.graph.base_channels = 2;
    c.graph.meta_layers = 1;
    c.data.train_images = 4;
    c.data.test_images = 2;
    c.data.image_size = 20;
    c.data.crop = 18;
    c.data.resize_to = 16;
    c.data.train_samples = 10;
    c.data.test_samples = 3;
    c.train.epochs = 1;
    c.train.batch_size = 5;
    c.simulate.steps = 30;
    c.simulate.window = 10;
    c.simulate.rate_from_step = 5;
    c.simulate.curve_every = 10;
    c.out_dir = out.string();
    c.threads = 1;
    return c;
}

std::map<std::string, std::string> read_tree(const fs::path &root)
{
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            out[fs::relative(e.path(), root).string()] = ss.str();
        }
    }
    return out;
}

int run_cli(const std::string &args)
{
    const std::string cmd = std::string(SNNCONV_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config json round trips and rejects unknown or mistyped keys")
{
    const RunConfig c = tiny_config("x");
    const RunConfig r = config_from_json(config_to_json(c));
    CHECK(config_to_json(r) == config_to_json(c));
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"graph": {"colour": 1}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train": {"epochs": "ten"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train": {"epochs": 2.5}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"data": {"resize_to": 20}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"simulate": {"window": 500}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"([1, 2])")), ConfigError);
}

TEST_CASE("overrides and the output directory variable apply in order")
{
    const fs::path dir = scratch("overrides");
    const fs::path cfg = dir / "c.json";
    std::ofstream(cfg) << R"({"train": {"epochs": 3}, "paths": {"out_dir": "from_file"}})";
    RunConfig c = load_config(cfg, {"train.epochs=5", "train.reg.weight=0"});
    CHECK(c.train.epochs == 5);
    CHECK(c.train.reg.weight == 0.0);
    CHECK(c.out_dir == "from_file");
    ::setenv("SNNCONV_OUT_DIR", "from_env", 1);
    c = load_config(cfg, {});
    ::unsetenv("SNNCONV_OUT_DIR");
    CHECK(c.out_dir == "from_env");
    CHECK_THROWS_AS(load_config(cfg, {"noequals"}), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json", {}), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("stages refuse to run before their inputs exist")
{
    const fs::path dir = scratch("order");
    const RunConfig c = tiny_config(dir);
    std::ostringstream log;
    try {
        cmd_quantize(c, log);
        FAIL("expected StageOrderError");
    } catch (const StageOrderError &e) {
        CHECK(std::string(e.what()).find("'train'") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("tiny pipeline runs end to end, reruns byte-identically and detects stale inputs")
{
    const fs::path a = scratch("run_a");
    const fs::path b = scratch("run_b");
    RunConfig c = tiny_config(a);
    std::ostringstream log;
    cmd_run(c, log);
    for (const char *f : {"graph_init.json", "graph.json", "quant.json", "partition.json", "core_graph.txt", "sim.json",
                          "spike_counts.json", "report.json", "cost.json", "cost.csv", "report.manifest.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(a / f));
    }
    for (const std::string &s : stage_names()) {
        CHECK_NOTHROW(verify_stage(c, s));
    }
    c.out_dir = b.string();
    c.threads = 3;
    cmd_run(c, log);
    CHECK(read_tree(a) == read_tree(b));

    // Editing an upstream artifact makes the downstream stages stale.
    { std::ofstream(b / "quant.json", std::ios::app) << " "; }
    try {
        verify_stage(c, "simulate");
        FAIL("expected StageOrderError");
    } catch (const StageOrderError &e) {
        CHECK(std::string(e.what()).find("stale") != std::string::npos);
    }
    // A config change of an earlier stage is detected too.
    c.out_dir = a.string();
    c.train.learning_rate = 0.01;
    CHECK_THROWS_AS(cmd_quantize(c, log), StageOrderError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("exit codes map error classes")
{
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(StageOrderError("x")) == 3);
    CHECK(exit_code_for(NumericalError("x")) == 4);
    CHECK(exit_code_for(QuantizationError("x")) == 4);
    CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("command line exit codes")
{
    const fs::path dir = scratch("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("config") == 0);
    CHECK(run_cli("config --set graph.nope=1") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("quantize -o " + dir.string()) == 3);
    CHECK(run_cli("simulate -o " + (dir / "none").string()) == 3);
    fs::remove_all(dir);
}
