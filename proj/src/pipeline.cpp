#include "snnconv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "snnconv/blob.hpp"
#include "snnconv/errors.hpp"
#include "snnconv/fixsim.hpp"
#include "snnconv/graph_io.hpp"
#include "snnconv/parallel.hpp"

namespace snnconv {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

json config_to_json(const RunConfig &c)
{
    json doc;
    doc["graph"] = {{"input_size", c.graph.input_size},
                    {"base_channels", c.graph.base_channels},
                    {"meta_layers", c.graph.meta_layers},
                    {"dt", c.graph.dt},
                    {"tau_s", c.graph.tau_s},
                    {"amplitude", c.graph.amplitude},
                    {"encoder_channels", c.graph.encoder_channels},
                    {"seed", c.graph.seed}};
    doc["data"] = {{"source", c.data.source},
                   {"train_dir", c.data.train_dir},
                   {"test_dir", c.data.test_dir},
                   {"train_seed", c.data.train_seed},
                   {"test_seed", c.data.test_seed},
                   {"train_images", c.data.train_images},
                   {"test_images", c.data.test_images},
                   {"image_size", c.data.image_size},
                   {"crop", c.data.crop},
                   {"resize_to", c.data.resize_to},
                   {"train_samples", c.data.train_samples},
                   {"test_samples", c.data.test_samples},
                   {"train_crop_seed", c.data.train_crop_seed},
                   {"test_crop_seed", c.data.test_crop_seed}};
    doc["train"] = {{"epochs", c.train.epochs},
                    {"batch_size", c.train.batch_size},
                    {"learning_rate", c.train.learning_rate},
                    {"momentum", c.train.momentum},
                    {"grad_clip", c.train.grad_clip},
                    {"seed", c.train.seed},
                    {"noise", c.train.noise_enabled},
                    {"reg",
                     {{"f_min", c.train.reg.f_min},
                      {"f_max", c.train.reg.f_max},
                      {"percentile", c.train.reg.percentile},
                      {"weight", c.train.reg.weight}}}};
    const ChipLimits &l = c.quantize.limits;
    doc["quantize"] = {{"mantissa_max", l.mantissa_max}, {"u_max", l.u_max},     {"v_max", l.v_max},
                       {"b_max", l.b_max},               {"decay_bits", l.decay_bits}, {"a_start", l.a_start},
                       {"a_min", l.a_min},               {"v_th", c.quantize.v_th}};
    const CoreBudget &b = c.partition.budget;
    doc["partition"] = {{"max_neurons", b.max_neurons},   {"max_in_axons", b.max_in_axons},
                        {"max_out_axons", b.max_out_axons}, {"max_synapses", b.max_synapses},
                        {"tolerance", c.partition.tolerance}, {"seed", c.partition.seed}};
    doc["simulate"] = {{"steps", c.simulate.steps},
                       {"window", c.simulate.window},
                       {"rate_from_step", c.simulate.rate_from_step},
                       {"samples", c.simulate.samples},
                       {"curve_every", c.simulate.curve_every},
                       {"v_min", c.simulate.v_min},
                       {"raster", c.simulate.raster}};
    const EnergyParams &e = c.energy;
    doc["energy"] = {{"e_synop", e.e_synop},
                     {"e_neuron_update", e.e_neuron_update},
                     {"e_spike_hop_intra", e.e_spike_hop_intra},
                     {"e_spike_hop_inter", e.e_spike_hop_inter},
                     {"t_step_base", e.t_step_base},
                     {"t_synop", e.t_synop},
                     {"t_inter_hop", e.t_inter_hop}};
    doc["sweep"] = {{"amplitudes", c.sweep.amplitudes}, {"epochs", c.sweep.epochs}, {"samples", c.sweep.samples}};
    doc["paths"] = {{"out_dir", c.out_dir}};
    doc["run"] = {{"threads", c.threads}};
    return doc;
}

namespace {

// Overlays `patch` on `base`; every key must already exist in `base` with a
// compatible type.
void overlay(json &base, const json &patch, const std::string &where)
{
    if (!patch.is_object()) {
        throw ConfigError(where.empty() ? "config must be a JSON object" : where + " must be an object");
    }
    for (const auto &[key, value] : patch.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        json &slot = base[key];
        if (slot.is_object()) {
            overlay(slot, value, path);
            continue;
        }
        bool ok = false;
        if (slot.is_boolean()) {
            ok = value.is_boolean();
        } else if (slot.is_string()) {
            ok = value.is_string();
        } else if (slot.is_number_unsigned()) {
            ok = value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
        } else if (slot.is_number_integer()) {
            ok = value.is_number_integer();
        } else if (slot.is_number()) {
            ok = value.is_number();
        } else if (slot.is_array()) {
            ok = value.is_array() && std::all_of(value.begin(), value.end(), [](const json &v) { return v.is_number(); });
        }
        if (!ok) {
            const std::string expected = slot.is_number_unsigned() ? "non-negative integer"
                                         : slot.is_number_integer() ? "integer"
                                                                    : slot.type_name();
            throw ConfigError("config key '" + path + "' has the wrong type (expected " + expected + ", got " +
                              value.dump() + ")");
        }
        slot = value;
    }
}

template <class T>
void get(const json &section, const char *key, T &out)
{
    section.at(key).get_to(out);
}

json parse_json_text(const std::string &text, const std::string &what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(what + ": " + e.what());
    }
}

} // namespace

RunConfig config_from_json(const json &doc)
{
    json merged = config_to_json(RunConfig{});
    overlay(merged, doc, "");
    RunConfig c;
    const json &g = merged["graph"];
    get(g, "input_size", c.graph.input_size);
    get(g, "base_channels", c.graph.base_channels);
    get(g, "meta_layers", c.graph.meta_layers);
    get(g, "dt", c.graph.dt);
    get(g, "tau_s", c.graph.tau_s);
    get(g, "amplitude", c.graph.amplitude);
    get(g, "encoder_channels", c.graph.encoder_channels);
    get(g, "seed", c.graph.seed);
    const json &d = merged["data"];
    get(d, "source", c.data.source);
    get(d, "train_dir", c.data.train_dir);
    get(d, "test_dir", c.data.test_dir);
    get(d, "train_seed", c.data.train_seed);
    get(d, "test_seed", c.data.test_seed);
    get(d, "train_images", c.data.train_images);
    get(d, "test_images", c.data.test_images);
    get(d, "image_size", c.data.image_size);
    get(d, "crop", c.data.crop);
    get(d, "resize_to", c.data.resize_to);
    get(d, "train_samples", c.data.train_samples);
    get(d, "test_samples", c.data.test_samples);
    get(d, "train_crop_seed", c.data.train_crop_seed);
    get(d, "test_crop_seed", c.data.test_crop_seed);
    const json &t = merged["train"];
    get(t, "epochs", c.train.epochs);
    get(t, "batch_size", c.train.batch_size);
    get(t, "learning_rate", c.train.learning_rate);
    get(t, "momentum", c.train.momentum);
    get(t, "grad_clip", c.train.grad_clip);
    get(t, "seed", c.train.seed);
    get(t, "noise", c.train.noise_enabled);
    get(t["reg"], "f_min", c.train.reg.f_min);
    get(t["reg"], "f_max", c.train.reg.f_max);
    get(t["reg"], "percentile", c.train.reg.percentile);
    get(t["reg"], "weight", c.train.reg.weight);
    const json &q = merged["quantize"];
    get(q, "mantissa_max", c.quantize.limits.mantissa_max);
    get(q, "u_max", c.quantize.limits.u_max);
    get(q, "v_max", c.quantize.limits.v_max);
    get(q, "b_max", c.quantize.limits.b_max);
    get(q, "decay_bits", c.quantize.limits.decay_bits);
    get(q, "a_start", c.quantize.limits.a_start);
    get(q, "a_min", c.quantize.limits.a_min);
    get(q, "v_th", c.quantize.v_th);
    const json &p = merged["partition"];
    get(p, "max_neurons", c.partition.budget.max_neurons);
    get(p, "max_in_axons", c.partition.budget.max_in_axons);
    get(p, "max_out_axons", c.partition.budget.max_out_axons);
    get(p, "max_synapses", c.partition.budget.max_synapses);
    get(p, "tolerance", c.partition.tolerance);
    get(p, "seed", c.partition.seed);
    const json &s = merged["simulate"];
    get(s, "steps", c.simulate.steps);
    get(s, "window", c.simulate.window);
    get(s, "rate_from_step", c.simulate.rate_from_step);
    get(s, "samples", c.simulate.samples);
    get(s, "curve_every", c.simulate.curve_every);
    get(s, "v_min", c.simulate.v_min);
    get(s, "raster", c.simulate.raster);
    const json &e = merged["energy"];
    get(e, "e_synop", c.energy.e_synop);
    get(e, "e_neuron_update", c.energy.e_neuron_update);
    get(e, "e_spike_hop_intra", c.energy.e_spike_hop_intra);
    get(e, "e_spike_hop_inter", c.energy.e_spike_hop_inter);
    get(e, "t_step_base", c.energy.t_step_base);
    get(e, "t_synop", c.energy.t_synop);
    get(e, "t_inter_hop", c.energy.t_inter_hop);
    const json &w = merged["sweep"];
    get(w, "amplitudes", c.sweep.amplitudes);
    get(w, "epochs", c.sweep.epochs);
    get(w, "samples", c.sweep.samples);
    get(merged["paths"], "out_dir", c.out_dir);
    get(merged["run"], "threads", c.threads);

    try {
        check(c.train);
        check(c.quantize.limits);
        check(c.partition.budget);
        check(c.energy);
        check(RateNeuronParams{c.graph.dt, c.graph.tau_s, c.graph.amplitude});
    } catch (const std::invalid_argument &err) {
        throw ConfigError(err.what());
    }
    if (c.data.source != "synthetic" && c.data.source != "dir") {
        throw ConfigError("data.source must be \"synthetic\" or \"dir\"");
    }
    if (c.data.train_samples < 1 || c.data.test_samples < 1 || c.data.train_images < 1 || c.data.test_images < 1) {
        throw ConfigError("data sample and image counts must be >= 1");
    }
    if (c.data.crop > c.data.image_size || c.data.crop < 1 || c.data.resize_to < 1) {
        throw ConfigError("data.crop must be in [1, image_size] and resize_to >= 1");
    }
    if (c.data.resize_to != c.graph.input_size) {
        throw ConfigError("data.resize_to (" + std::to_string(c.data.resize_to) + ") must equal graph.input_size (" +
                          std::to_string(c.graph.input_size) + ")");
    }
    const SimulateConfig &sc = c.simulate;
    if (sc.steps < 1 || sc.window < 1 || sc.window > sc.steps || sc.rate_from_step < 0 ||
        sc.rate_from_step >= sc.steps || sc.samples < 0 || sc.curve_every < 1 || sc.v_min > 0) {
        throw ConfigError("simulate: need 1 <= window <= steps, 0 <= rate_from_step < steps, samples >= 0, "
                          "curve_every >= 1, v_min <= 0");
    }
    if (!(c.partition.tolerance >= 0.0) || c.partition.tolerance >= 1.0) {
        throw ConfigError("partition.tolerance must be in [0, 1)");
    }
    for (double a : c.sweep.amplitudes) {
        if (!(a > 0.0)) {
            throw ConfigError("sweep.amplitudes must be positive");
        }
    }
    if (c.sweep.samples < 1 || c.sweep.epochs < -1) {
        throw ConfigError("sweep.samples must be >= 1 and sweep.epochs >= -1");
    }
    if (c.out_dir.empty()) {
        throw ConfigError("paths.out_dir is empty");
    }
    return c;
}

RunConfig load_config(const fs::path &path, const std::vector<std::string> &overrides)
{
    json doc = json::object();
    if (!path.empty()) {
        std::string text;
        try {
            text = read_file(path);
        } catch (const std::exception &e) {
            throw ConfigError("cannot read config " + path.string() + ": " + e.what());
        }
        doc = parse_json_text(text, path.string());
    }
    for (const std::string &item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + item + "' is not section.key=value");
        }
        const std::string key = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) {
            value = raw;
        }
        json *node = &doc;
        std::stringstream parts(key);
        std::string part;
        std::vector<std::string> names;
        while (std::getline(parts, part, '.')) {
            names.push_back(part);
        }
        for (std::size_t i = 0; i + 1 < names.size(); ++i) {
            if (!node->contains(names[i])) {
                (*node)[names[i]] = json::object();
            }
            node = &(*node)[names[i]];
        }
        (*node)[names.back()] = value;
    }
    if (const char *env = std::getenv("SNNCONV_OUT_DIR"); env != nullptr && *env != '\0') {
        doc["paths"]["out_dir"] = env;
    }
    return config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Data

namespace {

std::vector<ImageSample> make_set(const DataConfig &c, std::uint64_t seed, int images, const std::string &dir,
                                  std::uint64_t crop_seed, int samples)
{
    std::vector<ImageSample> base;
    if (c.source == "dir") {
        try {
            base = load_dataset_dir(dir);
        } catch (const std::exception &e) {
            throw ConfigError("data directory '" + dir + "': " + e.what());
        }
    } else {
        base = synth_cells(seed, static_cast<std::size_t>(images), c.image_size);
    }
    AugmentConfig ac;
    ac.crop = c.crop;
    ac.resize_to = c.resize_to;
    ac.seed = crop_seed;
    return sample_crops(expand_base(base, ac), ac, static_cast<std::size_t>(samples));
}

} // namespace

std::vector<ImageSample> make_train_set(const DataConfig &c)
{
    return make_set(c, c.train_seed, c.train_images, c.train_dir, c.train_crop_seed, c.train_samples);
}

std::vector<ImageSample> make_test_set(const DataConfig &c)
{
    return make_set(c, c.test_seed, c.test_images, c.test_dir, c.test_crop_seed, c.test_samples);
}

// ---------------------------------------------------------------------------
// Manifests

std::string sha256_hex(const std::string &bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static const char *hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

namespace {

struct StageInput {
    std::string stage;
    std::string file;
};

struct StageSpec {
    std::string name;
    std::vector<StageInput> inputs;
    std::vector<std::string> outputs;
    std::vector<std::string> sections;  // config sections the stage depends on
};

StageSpec stage_spec(const RunConfig &c, const std::string &name)
{
    if (name == "build") {
        return {name, {}, {"graph_init.json", "graph_init.spkf"}, {"graph"}};
    }
    if (name == "train") {
        return {name,
                {{"build", "graph_init.json"}, {"build", "graph_init.spkf"}},
                {"graph.json", "graph.spkf", "train_history.jsonl", "eval_rate.json"},
                {"data", "train"}};
    }
    if (name == "quantize") {
        return {name, {{"train", "graph.json"}, {"train", "graph.spkf"}}, {"quant.json", "quant.spkf"}, {"quantize"}};
    }
    if (name == "partition") {
        return {name,
                {{"train", "graph.json"}, {"train", "graph.spkf"}},
                {"partition.json", "core_graph.txt"},
                {"partition"}};
    }
    if (name == "simulate") {
        StageSpec s{name,
                    {{"train", "graph.json"},
                     {"train", "graph.spkf"},
                     {"quantize", "quant.json"},
                     {"quantize", "quant.spkf"},
                     {"partition", "partition.json"}},
                    {"sim.json", "spike_counts.json"},
                    {"data", "simulate"}};
        if (c.simulate.raster) {
            s.outputs.emplace_back("raster.spkr");
        }
        return s;
    }
    if (name == "report") {
        return {name,
                {{"train", "graph.json"},
                 {"train", "graph.spkf"},
                 {"train", "eval_rate.json"},
                 {"partition", "partition.json"},
                 {"simulate", "sim.json"},
                 {"simulate", "spike_counts.json"}},
                {"report.json", "cost.json", "cost.csv"},
                {"energy"}};
    }
    throw std::invalid_argument("unknown stage '" + name + "'");
}

std::uint64_t stage_seed(const RunConfig &c, const std::string &name)
{
    if (name == "build") {
        return c.graph.seed;
    }
    if (name == "train") {
        return c.train.seed;
    }
    if (name == "partition") {
        return c.partition.seed;
    }
    return 0;
}

json stage_config(const RunConfig &c, const StageSpec &spec)
{
    const json all = config_to_json(c);
    json out = json::object();
    for (const std::string &s : spec.sections) {
        out[s] = all[s];
    }
    return out;
}

fs::path out_path(const RunConfig &c, const std::string &file)
{
    return fs::path(c.out_dir) / file;
}

std::string manifest_name(const std::string &stage)
{
    return stage + ".manifest.json";
}

std::string file_hash(const fs::path &path)
{
    return sha256_hex(read_file(path));
}

void write_manifest(const RunConfig &c, const std::string &stage)
{
    const StageSpec spec = stage_spec(c, stage);
    json doc;
    doc["format"] = "snnconv-manifest";
    doc["stage"] = stage;
    doc["tool_version"] = kToolVersion;
    doc["seed"] = stage_seed(c, stage);
    const json cfg = stage_config(c, spec);
    doc["config"] = cfg;
    doc["config_sha256"] = sha256_hex(cfg.dump());
    json inputs = json::array();
    for (const StageInput &in : spec.inputs) {
        inputs.push_back({{"stage", in.stage}, {"file", in.file}, {"sha256", file_hash(out_path(c, in.file))}});
    }
    doc["inputs"] = inputs;
    json outputs = json::array();
    for (const std::string &f : spec.outputs) {
        outputs.push_back({{"file", f}, {"sha256", file_hash(out_path(c, f))}});
    }
    doc["outputs"] = outputs;
    write_file(out_path(c, manifest_name(stage)), doc.dump(2) + "\n");
}

json read_manifest(const RunConfig &c, const std::string &stage, const std::string &needed_by)
{
    const fs::path path = out_path(c, manifest_name(stage));
    if (!fs::exists(path)) {
        throw StageOrderError("stage '" + stage + "' has not been run in " + c.out_dir + " (no " + manifest_name(stage) +
                              "); run it before '" + needed_by + "'");
    }
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error &) {
        throw StageOrderError("stage '" + stage + "' is stale: " + manifest_name(stage) + " is unreadable; rerun it");
    }
}

void verify_produced(const RunConfig &c, const std::string &stage, const std::string &needed_by,
                     std::set<std::string> &done)
{
    if (done.count(stage) != 0) {
        return;
    }
    const StageSpec spec = stage_spec(c, stage);
    for (const StageInput &in : spec.inputs) {
        verify_produced(c, in.stage, stage, done);
    }
    const json m = read_manifest(c, stage, needed_by);
    const std::string rerun = "; rerun 'snnconv " + stage + "'";
    if (m.value("tool_version", "") != kToolVersion) {
        throw StageOrderError("stage '" + stage + "' is stale: produced by tool version " +
                              m.value("tool_version", "?") + rerun);
    }
    if (m.value("config_sha256", "") != sha256_hex(stage_config(c, spec).dump())) {
        throw StageOrderError("stage '" + stage + "' is stale: its configuration changed since it ran" + rerun);
    }
    for (const auto &in : m.at("inputs")) {
        const std::string file = in.at("file").get<std::string>();
        const fs::path path = out_path(c, file);
        if (!fs::exists(path) || file_hash(path) != in.at("sha256").get<std::string>()) {
            throw StageOrderError("stage '" + stage + "' is stale: input " + file + " changed since it ran" + rerun);
        }
    }
    for (const auto &out : m.at("outputs")) {
        const std::string file = out.at("file").get<std::string>();
        const fs::path path = out_path(c, file);
        if (!fs::exists(path)) {
            throw StageOrderError("stage '" + stage + "' is stale: output " + file + " is missing" + rerun);
        }
        if (file_hash(path) != out.at("sha256").get<std::string>()) {
            throw StageOrderError("stage '" + stage + "' is stale: output " + file + " was modified" + rerun);
        }
    }
    done.insert(stage);
}

} // namespace

const std::vector<std::string> &stage_names()
{
    static const std::vector<std::string> names{"build", "train", "quantize", "partition", "simulate", "report"};
    return names;
}

void verify_stage(const RunConfig &c, const std::string &stage)
{
    const StageSpec spec = stage_spec(c, stage);
    std::set<std::string> done;
    for (const StageInput &in : spec.inputs) {
        verify_produced(c, in.stage, stage, done);
    }
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::vector<const ImageSample *> first_n(const std::vector<ImageSample> &set, int n)
{
    const std::size_t count = n <= 0 ? set.size() : std::min(set.size(), static_cast<std::size_t>(n));
    std::vector<const ImageSample *> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(&set[i]);
    }
    return out;
}

std::vector<ImageSample> copy_of(const std::vector<const ImageSample *> &items)
{
    std::vector<ImageSample> out;
    out.reserve(items.size());
    for (const ImageSample *s : items) {
        out.push_back(*s);
    }
    return out;
}

Mask output_label(const NetworkGraph &graph, const ImageSample &s)
{
    const TensorShape os = graph.layers[static_cast<std::size_t>(graph.output_layer())].out_shape;
    return center_crop(s.label, s.height, s.width, os.height, os.width);
}

json eval_to_json(const NetworkGraph &graph, const EvalResult &ev)
{
    json layers = json::array();
    for (std::size_t i = 0; i < ev.layers.size(); ++i) {
        layers.push_back({{"layer", ev.layers[i]},
                          {"name", graph.layers[static_cast<std::size_t>(ev.layers[i])].name},
                          {"mean_rate_hz", ev.layer_mean[i]},
                          {"p99_rate_hz", ev.layer_p99[i]}});
    }
    return {{"format", "snnconv-rate-eval"},
            {"pixel_accuracy", ev.pixel_accuracy},
            {"mean_iou", ev.mean_iou},
            {"outside_band", ev.outside_band},
            {"layers", layers}};
}

// Spiking evaluation of `samples` on the quantized network.
struct SpikingRun {
    SpikeStats stats;
    double pixel_accuracy = 0.0;
    double mean_iou = 0.0;
    std::vector<int> curve_steps;
    std::vector<double> curve_accuracy;
};

SpikingRun run_spiking(const NetworkGraph &graph, const QuantizationResult &quant, const Partition &part,
                       const std::vector<const ImageSample *> &samples, const SimulateConfig &sc, unsigned threads)
{
    SimOptions so;
    so.threads = 1;
    so.v_min = sc.v_min;
    const Simulator sim(graph, quant, part, so);
    std::vector<int> checkpoints;
    for (int t = sc.curve_every; t < sc.steps; t += sc.curve_every) {
        checkpoints.push_back(t);
    }
    checkpoints.push_back(sc.steps);

    const std::size_t n = samples.size();
    std::vector<SpikeStats> stats(n);
    std::vector<Mask> preds(n);
    std::vector<std::vector<double>> curve(n);
    parallel_for(n, threads, [&](std::size_t i) {
        InferenceResult r = sim.run(*samples[i], sc.steps);
        const Mask label = output_label(graph, *samples[i]);
        for (int t : checkpoints) {
            curve[i].push_back(pixel_accuracy(decode_output(r.output, std::min(sc.window, t), t), label));
        }
        preds[i] = decode_output(r.output, sc.window);
        stats[i] = std::move(r.stats);
    });
    SpikingRun out;
    std::vector<Mask> labels;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        accumulate(out.stats, stats[i]);
        labels.push_back(output_label(graph, *samples[i]));
        acc += pixel_accuracy(preds[i], labels.back());
    }
    out.pixel_accuracy = n > 0 ? acc / static_cast<double>(n) : 0.0;
    out.mean_iou = mean_iou(preds, labels);
    out.curve_steps = checkpoints;
    out.curve_accuracy.assign(checkpoints.size(), 0.0);
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            out.curve_accuracy[k] += curve[i][k];
        }
        out.curve_accuracy[k] /= std::max<std::size_t>(1, n);
    }
    return out;
}

SpikeStats run_float_references(const NetworkGraph &graph, const std::vector<const ImageSample *> &samples,
                                int steps, unsigned threads)
{
    std::vector<SpikeStats> per(samples.size());
    parallel_for(samples.size(), threads,
                 [&](std::size_t i) { per[i] = run_float_reference(graph, *samples[i], steps, true); });
    SpikeStats total;
    for (SpikeStats &s : per) {
        if (total.inferences == 0) {
            total = std::move(s);
            continue;
        }
        for (std::size_t l = 0; l < total.layer_step_spikes.size(); ++l) {
            for (std::size_t t = 0; t < total.layer_step_spikes[l].size(); ++t) {
                total.layer_step_spikes[l][t] += s.layer_step_spikes[l][t];
            }
        }
        total.inferences += s.inferences;
    }
    return total;
}

Partition make_partition(const NetworkGraph &graph, const PartitionConfig &pc, unsigned threads, Bipartition *bp_out,
                         std::int64_t *naive_cut)
{
    Partition part = split_graph(graph, pc.budget, threads);
    const RouteTable routes = build_routes(graph, part);
    const CoreGraph cg = build_core_graph(part, routes);
    Bipartition bp = bipartition(cg, pc.tolerance, pc.seed);
    part.chip = bp.side;
    part.tolerance = pc.tolerance;
    part.relaxed = bp.relaxed;
    part.warning = bp.warning;
    if (naive_cut != nullptr) {
        *naive_cut = edge_cut(cg, naive_split(cg.nodes));
    }
    if (bp_out != nullptr) {
        *bp_out = std::move(bp);
    }
    return part;
}

double rel_diff(double value, double reference)
{
    if (reference == 0.0) {
        return value == 0.0 ? 0.0 : INFINITY;
    }
    return (value - reference) / reference;
}

// nlohmann refuses to serialise inf/nan; store them as null.
json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

} // namespace

void cmd_build(const RunConfig &c, std::ostream &log)
{
    NetworkGraph g;
    try {
        g = build_unet(c.graph);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("graph: ") + e.what());
    }
    save_graph(g, out_path(c, "graph_init.json"));
    write_manifest(c, "build");
    log << "build: " << g.layers.size() << " layers, " << neuron_count(g) << " spiking neurons, " << param_count(g)
        << " parameters\n";
}

void cmd_train(const RunConfig &c, std::ostream &log)
{
    verify_stage(c, "train");
    const NetworkGraph g = load_graph(out_path(c, "graph_init.json"));
    const auto train_set = make_train_set(c.data);
    const auto test_set = make_test_set(c.data);
    TrainConfig tc = c.train;
    tc.threads = c.threads;
    const TrainResult r = train(g, train_set, tc);
    save_graph(r.graph, out_path(c, "graph.json"));
    write_file(out_path(c, "train_history.jsonl"), history_jsonl(r.history));
    const EvalResult ev = evaluate(r.graph, test_set, c.train.reg, c.threads);
    write_file(out_path(c, "eval_rate.json"), eval_to_json(r.graph, ev).dump(2) + "\n");
    write_manifest(c, "train");
    if (!r.history.empty()) {
        const EpochRecord &last = r.history.back();
        log << "train: " << r.history.size() << " epochs, final task loss " << last.task_loss << ", reg loss "
            << last.reg_loss << "\n";
    }
    log << "train: rate-mode test pixel accuracy " << ev.pixel_accuracy << ", mean IoU " << ev.mean_iou
        << ", neurons outside band " << ev.outside_band << "\n";
}

void cmd_quantize(const RunConfig &c, std::ostream &log)
{
    verify_stage(c, "quantize");
    const NetworkGraph g = load_graph(out_path(c, "graph.json"));
    const QuantizationResult q = quantize(g, c.quantize.limits, c.quantize.v_th);
    save_quant(q, out_path(c, "quant.json").string());
    write_manifest(c, "quantize");
    log << "quantize: delta_u " << q.delta_u << ", y_hat " << q.y_hat << "\n";
    for (const LayerQuant &l : q.layers) {
        if (l.layer >= 0) {
            log << "  " << l.name << ": c " << l.c << ", a " << l.a << ", v_th " << l.v_th << "\n";
        }
    }
}

void cmd_partition(const RunConfig &c, std::ostream &log)
{
    verify_stage(c, "partition");
    const NetworkGraph g = load_graph(out_path(c, "graph.json"));
    Bipartition bp;
    std::int64_t naive = 0;
    const Partition part = make_partition(g, c.partition, c.threads, &bp, &naive);
    const RouteTable routes = build_routes(g, part);
    write_file(out_path(c, "partition.json"), partition_to_json(part, bp.cut, naive));
    write_file(out_path(c, "core_graph.txt"), core_graph_dump(build_core_graph(part, routes)));
    write_manifest(c, "partition");
    log << "partition: " << part.core_count() << " cores, edge cut " << bp.cut << " (naive split " << naive << ")\n";
    if (!bp.warning.empty()) {
        log << "partition: warning: " << bp.warning << "\n";
    }
}

void cmd_simulate(const RunConfig &c, std::ostream &log)
{
    verify_stage(c, "simulate");
    const NetworkGraph g = load_graph(out_path(c, "graph.json"));
    const QuantizationResult q = load_quant(out_path(c, "quant.json").string());
    const Partition part = partition_from_json(read_file(out_path(c, "partition.json")));
    const auto test_set = make_test_set(c.data);
    const auto samples = first_n(test_set, c.simulate.samples);

    const SpikingRun run = run_spiking(g, q, part, samples, c.simulate, c.threads);
    const EvalResult ev = evaluate(g, copy_of(samples), c.train.reg, c.threads);
    const SpikeStats ref = run_float_references(g, samples, c.simulate.steps, c.threads);
    const auto fix_rates = layer_rates(run.stats, g, c.simulate.rate_from_step);
    const auto ref_rates = layer_rates(ref, g, c.simulate.rate_from_step);

    json layers = json::array();
    for (std::size_t i = 0; i < ev.layers.size(); ++i) {
        const auto l = static_cast<std::size_t>(ev.layers[i]);
        layers.push_back({{"layer", ev.layers[i]},
                          {"name", g.layers[l].name},
                          {"rate_model_hz", ev.layer_mean[i]},
                          {"float_spiking_hz", ref_rates[l]},
                          {"fixsim_hz", fix_rates[l]},
                          {"rel_vs_rate_model", finite_or_null(rel_diff(fix_rates[l], ev.layer_mean[i]))},
                          {"rel_vs_float_spiking", finite_or_null(rel_diff(fix_rates[l], ref_rates[l]))}});
    }
    json doc;
    doc["format"] = "snnconv-simulation";
    doc["steps"] = c.simulate.steps;
    doc["window"] = c.simulate.window;
    doc["rate_from_step"] = c.simulate.rate_from_step;
    doc["samples"] = samples.size();
    doc["spiking_pixel_accuracy"] = run.pixel_accuracy;
    doc["spiking_mean_iou"] = run.mean_iou;
    doc["rate_pixel_accuracy"] = ev.pixel_accuracy;
    doc["rate_mean_iou"] = ev.mean_iou;
    doc["accuracy_vs_steps"] = {{"steps", run.curve_steps}, {"pixel_accuracy", run.curve_accuracy}};
    doc["layers"] = layers;
    doc["saturations"] = run.stats.saturations;
    doc["stats"] = json::parse(stats_to_json(run.stats, g));
    write_file(out_path(c, "sim.json"), doc.dump(2) + "\n");
    write_file(out_path(c, "spike_counts.json"), stats_dump(run.stats));
    if (c.simulate.raster) {
        SimOptions so;
        so.record_raster = true;
        so.v_min = c.simulate.v_min;
        const InferenceResult r = run_inference(g, q, part, *samples.front(), c.simulate.steps, so);
        write_file(out_path(c, "raster.spkr"), encode_raster(r.raster));
    }
    write_manifest(c, "simulate");
    log << "simulate: " << samples.size() << " samples x " << c.simulate.steps << " steps, spiking pixel accuracy "
        << run.pixel_accuracy << " (rate mode " << ev.pixel_accuracy << "), saturations " << run.stats.saturations
        << "\n";
    for (const auto &l : layers) {
        log << "  " << l["name"].get<std::string>() << ": model " << l["rate_model_hz"].get<double>() << " Hz, float "
            << l["float_spiking_hz"].get<double>() << " Hz, fixsim " << l["fixsim_hz"].get<double>() << " Hz\n";
    }
}

void cmd_report(const RunConfig &c, std::ostream &log)
{
    verify_stage(c, "report");
    const NetworkGraph g = load_graph(out_path(c, "graph.json"));
    const std::string part_text = read_file(out_path(c, "partition.json"));
    const Partition part = partition_from_json(part_text);
    const json part_doc = json::parse(part_text);
    const SpikeStats stats = stats_from_json(read_file(out_path(c, "spike_counts.json")));
    const json sim = json::parse(read_file(out_path(c, "sim.json")));
    const json rate_eval = json::parse(read_file(out_path(c, "eval_rate.json")));

    const CostReport opt = estimate(stats, part, g, c.energy);
    Partition naive = part;
    naive.chip = naive_split(part.core_count());
    const SpikeStats naive_stats = traffic_for_partition(stats, g, naive, build_routes(g, naive));
    const CostReport nai = estimate(naive_stats, naive, g, c.energy);
    const CostComparison cmp = compare(nai, opt, "naive split", "optimized partition");
    const HardwareReference ref;

    json manifests = json::object();
    for (const std::string &s : stage_names()) {
        if (s != "report") {
            manifests[s] = read_manifest(c, s, "report");
        }
    }
    json summary;
    summary["rate_pixel_accuracy_test_set"] = rate_eval["pixel_accuracy"];
    summary["rate_mean_iou_test_set"] = rate_eval["mean_iou"];
    summary["neurons_outside_band"] = rate_eval["outside_band"];
    summary["rate_pixel_accuracy"] = sim["rate_pixel_accuracy"];
    summary["spiking_pixel_accuracy"] = sim["spiking_pixel_accuracy"];
    summary["spiking_mean_iou"] = sim["spiking_mean_iou"];
    summary["conversion_gap"] =
            sim["rate_pixel_accuracy"].get<double>() - sim["spiking_pixel_accuracy"].get<double>();
    summary["steps"] = sim["steps"];
    summary["layers"] = sim["layers"];
    summary["rate_layers"] = rate_eval["layers"];
    summary["cores"] = part.core_count();
    summary["edge_cut"] = part_doc["edge_cut"];
    summary["naive_edge_cut"] = part_doc["naive_edge_cut"];
    summary["cost"] = {{"optimized", json::parse(cost_to_json(opt))},
                       {"naive", json::parse(cost_to_json(nai))},
                       {"energy_ratio", cmp.energy_ratio},
                       {"throughput_ratio", cmp.throughput_ratio},
                       {"inter_hop_ratio", finite_or_null(cmp.inter_hop_ratio)},
                       {"summary", cmp.summary}};
    summary["hardware_reference"] = {{"label", ref.label},
                                     {"energy_per_inference_j", ref.energy_per_inference},
                                     {"published_energy_per_inference_j", 0.01},
                                     {"inferences_per_second", ref.inferences_per_second},
                                     {"dynamic_power_w", ref.dynamic_power}};
    json doc;
    doc["format"] = "snnconv-report";
    doc["tool_version"] = kToolVersion;
    doc["summary"] = summary;
    doc["manifests"] = manifests;
    write_file(out_path(c, "report.json"), doc.dump(2) + "\n");
    write_file(out_path(c, "cost.json"), cost_to_json(opt, &ref));
    write_file(out_path(c, "cost.csv"), cost_to_csv({{"optimized", opt}, {"naive", nai}}));
    write_manifest(c, "report");

    log << "report: rate accuracy " << summary["rate_pixel_accuracy"].get<double>() << ", spiking accuracy "
        << summary["spiking_pixel_accuracy"].get<double>() << " at T=" << sim["steps"].get<int>() << "\n";
    log << "report: " << part.core_count() << " cores, edge cut " << part_doc["edge_cut"].get<std::int64_t>()
        << " vs naive " << part_doc["naive_edge_cut"].get<std::int64_t>() << "\n";
    log << "report: " << opt.energy_per_inference << " J/inference, " << opt.inferences_per_second
        << " inferences/s, " << opt.dynamic_power << " W dynamic\n";
    log << "report: " << cmp.summary << "\n";
    log << "report: " << ref.label << ": " << ref.energy_per_inference << " J/inference, "
        << ref.inferences_per_second << " inferences/s, " << ref.dynamic_power << " W\n";
}

void cmd_run(const RunConfig &c, std::ostream &log)
{
    cmd_build(c, log);
    cmd_train(c, log);
    cmd_quantize(c, log);
    cmd_partition(c, log);
    cmd_simulate(c, log);
    cmd_report(c, log);
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

std::string fmt(double v, int precision = 6)
{
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::string amplitude_label(double a)
{
    const double inv = 1.0 / a;
    if (std::abs(inv - std::round(inv)) < 1e-9) {
        return "1/" + std::to_string(static_cast<long>(std::round(inv)));
    }
    return fmt(a);
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal line/scatter chart.
std::string svg_chart(const std::string &title, const std::string &xlabel, const std::string &ylabel,
                      const std::vector<Series> &series, bool lines)
{
    const double w = 640;
    const double h = 420;
    const double left = 70;
    const double right = 170;
    const double top = 40;
    const double bottom = 50;
    double x0 = INFINITY;
    double x1 = -INFINITY;
    double y0 = INFINITY;
    double y1 = -INFINITY;
    for (const Series &s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0;
        x1 = 1;
        y0 = 0;
        y1 = 1;
    }
    if (x1 - x0 < 1e-12) {
        x1 = x0 + 1;
    }
    if (y1 - y0 < 1e-12) {
        y1 = y0 + 1;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };
    static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4;
        const double yv = y0 + (y1 - y0) * k / 4;
        os << "<text x=\"" << px(xv) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">" << fmt(xv, 4)
           << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv, 4)
           << "</text>\n";
    }
    os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << h / 2 << ")\">"
       << ylabel << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series &s = series[k];
        const char *color = colors[k % 7];
        if (lines && s.x.size() > 1) {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                os << px(s.x[i]) << "," << py(s.y[i]) << " ";
            }
            os << "\"/>\n";
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color
               << "\"/>\n";
        }
        const double ly = top + 16 * static_cast<double>(k);
        os << "<rect x=\"" << w - right + 12 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color
           << "\"/>\n";
        os << "<text x=\"" << w - right + 28 << "\" y=\"" << ly + 1 << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

SweepEntry sweep_entry(const RunConfig &c, const NetworkGraph &trained, const std::string &label, bool regularized,
                       const std::vector<const ImageSample *> &samples)
{
    SweepEntry e;
    e.label = label;
    e.amplitude = trained.amplitude;
    e.regularized = regularized;
    const EvalResult ev = evaluate(trained, copy_of(samples), c.train.reg, 1);
    e.rate_accuracy = ev.pixel_accuracy;
    const QuantizationResult q = quantize(trained, c.quantize.limits, c.quantize.v_th);
    const Partition part = make_partition(trained, c.partition, 1, nullptr, nullptr);
    const SpikingRun run = run_spiking(trained, q, part, samples, c.simulate, 1);
    e.spiking_accuracy = run.pixel_accuracy;
    e.curve_steps = run.curve_steps;
    e.curve_accuracy = run.curve_accuracy;
    const auto rates = layer_rates(run.stats, trained, c.simulate.rate_from_step);
    double diff = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < ev.layers.size(); ++i) {
        const auto l = static_cast<std::size_t>(ev.layers[i]);
        e.layer_names.push_back(trained.layers[l].name);
        e.layer_rate_model.push_back(ev.layer_mean[i]);
        e.layer_fixsim.push_back(rates[l]);
        if (ev.layer_mean[i] > 0.0) {
            diff += std::abs(rates[l] - ev.layer_mean[i]) / ev.layer_mean[i];
            ++counted;
        }
    }
    e.mean_abs_rate_diff = counted > 0 ? diff / counted : 0.0;
    e.cost = estimate(run.stats, part, trained, c.energy);
    e.mean_rate = e.cost.mean_rate;
    return e;
}

} // namespace

std::vector<SweepEntry> cmd_sweep(const RunConfig &c, const std::vector<double> &amplitudes, std::ostream &log)
{
    std::set<std::string> done;
    verify_produced(c, "train", "sweep", done);
    for (double a : amplitudes) {
        if (!(a > 0.0)) {
            throw ConfigError("sweep amplitudes must be positive");
        }
    }
    const NetworkGraph base = load_graph(out_path(c, "graph.json"));
    const auto train_set = make_train_set(c.data);
    const auto test_set = make_test_set(c.data);
    const auto samples = first_n(test_set, c.sweep.samples);

    std::vector<SweepEntry> entries(amplitudes.size() + 1);
    parallel_for(entries.size(), c.threads, [&](std::size_t k) {
        if (k == 0) {
            entries[0] = sweep_entry(c, base, "regularized", true, samples);
            return;
        }
        const double a = amplitudes[k - 1];
        UNetConfig gc = c.graph;
        gc.amplitude = a;
        TrainConfig tc = c.train;
        tc.reg.weight = 0.0;
        tc.threads = 1;
        if (c.sweep.epochs >= 0) {
            tc.epochs = c.sweep.epochs;
        }
        const TrainResult r = train(build_unet(gc), train_set, tc);
        entries[k] = sweep_entry(c, r.graph, "A=" + amplitude_label(a), false, samples);
    });

    const fs::path dir = fs::path(c.out_dir) / "sweep";
    json doc;
    doc["format"] = "snnconv-sweep";
    doc["tool_version"] = kToolVersion;
    doc["steps"] = c.simulate.steps;
    doc["samples"] = samples.size();
    json rows = json::array();
    std::ostringstream csv;
    csv.precision(10);
    csv << "label,amplitude,regularized,rate_accuracy,spiking_accuracy,mean_rate_hz,mean_abs_layer_rate_diff,"
           "energy_per_inference_j,inferences_per_second\n";
    std::ostringstream layer_csv;
    layer_csv.precision(10);
    layer_csv << "label,layer,rate_model_hz,fixsim_hz,rel_diff\n";
    std::vector<Series> acc_series;
    std::vector<Series> cost_series;
    std::vector<Series> diff_series;
    for (const SweepEntry &e : entries) {
        json layers = json::array();
        for (std::size_t i = 0; i < e.layer_names.size(); ++i) {
            const double rd = rel_diff(e.layer_fixsim[i], e.layer_rate_model[i]);
            layers.push_back({{"name", e.layer_names[i]},
                              {"rate_model_hz", e.layer_rate_model[i]},
                              {"fixsim_hz", e.layer_fixsim[i]},
                              {"rel_diff", finite_or_null(rd)}});
            layer_csv << e.label << ',' << e.layer_names[i] << ',' << e.layer_rate_model[i] << ','
                      << e.layer_fixsim[i] << ',' << (std::isfinite(rd) ? fmt(rd, 10) : "") << '\n';
        }
        rows.push_back({{"label", e.label},
                        {"amplitude", e.amplitude},
                        {"regularized", e.regularized},
                        {"rate_accuracy", e.rate_accuracy},
                        {"spiking_accuracy", e.spiking_accuracy},
                        {"accuracy_vs_steps", {{"steps", e.curve_steps}, {"pixel_accuracy", e.curve_accuracy}}},
                        {"layers", layers},
                        {"mean_abs_layer_rate_diff", e.mean_abs_rate_diff},
                        {"mean_rate_hz", e.mean_rate},
                        {"cost", json::parse(cost_to_json(e.cost))}});
        csv << e.label << ',' << e.amplitude << ',' << (e.regularized ? 1 : 0) << ',' << e.rate_accuracy << ','
            << e.spiking_accuracy << ',' << e.mean_rate << ',' << e.mean_abs_rate_diff << ','
            << e.cost.energy_per_inference << ',' << e.cost.inferences_per_second << '\n';
        Series s{e.label, {}, e.curve_accuracy};
        for (int t : e.curve_steps) {
            s.x.push_back(t);
        }
        acc_series.push_back(s);
        cost_series.push_back({e.label, {e.mean_rate}, {e.cost.energy_per_inference * 1e3}});
        Series d{e.label, {}, {}};
        for (std::size_t i = 0; i < e.layer_names.size(); ++i) {
            d.x.push_back(static_cast<double>(i));
            d.y.push_back(e.layer_fixsim[i] - e.layer_rate_model[i]);
        }
        diff_series.push_back(d);
    }
    doc["entries"] = rows;
    write_file(dir / "sweep.json", doc.dump(2) + "\n");
    write_file(dir / "sweep.csv", csv.str());
    write_file(dir / "sweep_layers.csv", layer_csv.str());
    write_file(dir / "accuracy_vs_steps.svg",
               svg_chart("Spiking pixel accuracy vs timesteps", "timesteps", "pixel accuracy", acc_series, true));
    write_file(dir / "layer_rate_diff.svg", svg_chart("Layer mean rate: fixsim minus rate model", "spiking layer index",
                                                      "rate difference (Hz)", diff_series, true));
    write_file(dir / "energy_vs_rate.svg",
               svg_chart("Energy per inference vs mean rate", "mean rate (Hz)", "energy (mJ)", cost_series, false));
    for (const SweepEntry &e : entries) {
        log << "sweep: " << e.label << ": rate acc " << e.rate_accuracy << ", spiking acc " << e.spiking_accuracy
            << ", mean rate " << e.mean_rate << " Hz, layer rate diff " << e.mean_abs_rate_diff << ", "
            << e.cost.energy_per_inference << " J/inference\n";
    }
    return entries;
}

EnergyParams cmd_calibrate(const RunConfig &c, const EnergyParams &prior, std::ostream &log)
{
    verify_stage(c, "report");
    const NetworkGraph g = load_graph(out_path(c, "graph.json"));
    const Partition part = partition_from_json(read_file(out_path(c, "partition.json")));
    const SpikeStats stats = stats_from_json(read_file(out_path(c, "spike_counts.json")));
    const HardwareReference ref;
    const CostReport before = estimate(stats, part, g, prior);
    const EnergyParams fitted = calibrate(prior, before, ref);
    const CostReport after = estimate(stats, part, g, fitted);
    RunConfig shown = c;
    shown.energy = fitted;
    json doc;
    doc["format"] = "snnconv-calibration";
    doc["note"] = "curve fit to a published hardware row; not a validation";
    doc["reference"] = {{"label", ref.label},
                        {"energy_per_inference_j", ref.energy_per_inference},
                        {"inferences_per_second", ref.inferences_per_second},
                        {"dynamic_power_w", ref.dynamic_power}};
    doc["energy"] = config_to_json(shown)["energy"];
    doc["fitted_report"] = json::parse(cost_to_json(after));
    write_file(out_path(c, "calibration.json"), doc.dump(2) + "\n");
    std::ostringstream os;
    os.precision(17);
    os << "e_synop " << fitted.e_synop << "\ne_neuron_update " << fitted.e_neuron_update << "\ne_spike_hop_intra "
       << fitted.e_spike_hop_intra << "\ne_spike_hop_inter " << fitted.e_spike_hop_inter << "\nt_step_base "
       << fitted.t_step_base << "\nt_synop " << fitted.t_synop << "\nt_inter_hop " << fitted.t_inter_hop << "\n";
    log << "calibrate: fitted constants\n" << os.str();
    log << "calibrate: model now gives " << after.energy_per_inference << " J/inference, "
        << after.inferences_per_second << " inferences/s, " << after.dynamic_power << " W\n";
    return fitted;
}

int exit_code_for(const std::exception &error)
{
    if (dynamic_cast<const ConfigError *>(&error) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const StageOrderError *>(&error) != nullptr) {
        return 3;
    }
    if (dynamic_cast<const NumericalError *>(&error) != nullptr) {
        return 4;
    }
    return 1;
}

} // namespace snnconv
