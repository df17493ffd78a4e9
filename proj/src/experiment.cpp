#include "jh/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "jh/tensor_io.hpp"

namespace jh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename F>
void as_config_error(F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

TargetSpec target_from_json(const json& j, const std::string& where) {
    check_keys(j, {"x0", "y0", "vx", "vy", "peak", "psf_sigma"}, where);
    TargetSpec t;
    read_opt(j, "x0", t.x0, where);
    read_opt(j, "y0", t.y0, where);
    read_opt(j, "vx", t.vx, where);
    read_opt(j, "vy", t.vy, where);
    read_opt(j, "peak", t.peak, where);
    read_opt(j, "psf_sigma", t.psf_sigma, where);
    return t;
}

json target_to_json(const TargetSpec& t) {
    return {{"x0", t.x0}, {"y0", t.y0}, {"vx", t.vx}, {"vy", t.vy}, {"peak", t.peak}, {"psf_sigma", t.psf_sigma}};
}

SceneSpec scene_from_json(const json& j) {
    const std::string w = "scene";
    check_keys(j,
               {"frames", "width", "height", "offset", "background_amplitude", "background_scale", "decoy_count",
                "decoy_peak_min", "decoy_peak_max", "decoy_psf_sigma", "targets", "random_targets", "noise_sigma",
                "seed"},
               w);
    SceneSpec s;
    read_opt(j, "frames", s.frames, w);
    read_opt(j, "width", s.width, w);
    read_opt(j, "height", s.height, w);
    read_opt(j, "offset", s.offset, w);
    read_opt(j, "background_amplitude", s.background_amplitude, w);
    read_opt(j, "background_scale", s.background_scale, w);
    read_opt(j, "decoy_count", s.decoy_count, w);
    read_opt(j, "decoy_peak_min", s.decoy_peak_min, w);
    read_opt(j, "decoy_peak_max", s.decoy_peak_max, w);
    read_opt(j, "decoy_psf_sigma", s.decoy_psf_sigma, w);
    read_opt(j, "noise_sigma", s.noise_sigma, w);
    read_opt(j, "seed", s.seed, w);
    if (j.contains("targets")) {
        if (!j["targets"].is_array()) throw ConfigError(w + ".targets: expected an array");
        for (std::size_t i = 0; i < j["targets"].size(); ++i)
            s.targets.push_back(target_from_json(j["targets"][i], w + ".targets[" + std::to_string(i) + "]"));
    }
    if (j.contains("random_targets")) {
        const auto& r = j["random_targets"];
        const auto rw = w + ".random_targets";
        check_keys(r, {"count", "speed_min", "speed_max", "peak_min", "peak_max", "psf_sigma"}, rw);
        read_opt(r, "count", s.random_targets.count, rw);
        read_opt(r, "speed_min", s.random_targets.speed_min, rw);
        read_opt(r, "speed_max", s.random_targets.speed_max, rw);
        read_opt(r, "peak_min", s.random_targets.peak_min, rw);
        read_opt(r, "peak_max", s.random_targets.peak_max, rw);
        read_opt(r, "psf_sigma", s.random_targets.psf_sigma, rw);
    }
    return s;
}

TrainConfig train_from_json(const json& j) {
    const std::string w = "train";
    check_keys(j,
               {"epochs", "batch_size", "lr_hyde", "lr_utterson", "lr_jekyll", "weight_decay", "alpha", "epsilon",
                "seed", "shuffle"},
               w);
    TrainConfig t;
    read_opt(j, "epochs", t.epochs, w);
    read_opt(j, "batch_size", t.batch_size, w);
    read_opt(j, "lr_hyde", t.lr_hyde, w);
    read_opt(j, "lr_utterson", t.lr_utterson, w);
    read_opt(j, "lr_jekyll", t.lr_jekyll, w);
    read_opt(j, "weight_decay", t.weight_decay, w);
    read_opt(j, "alpha", t.alpha, w);
    read_opt(j, "epsilon", t.epsilon, w);
    read_opt(j, "seed", t.seed, w);
    read_opt(j, "shuffle", t.shuffle, w);
    return t;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw MissingPrerequisite("missing " + path.string());
    return json::parse(is);
}

fs::path data_dir(const ExperimentConfig& c) { return c.workspace / "data"; }
fs::path runs_dir(const ExperimentConfig& c) { return c.workspace / "runs"; }

std::string sample_stem(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04zu", i);
    return buf;
}

std::vector<std::uint8_t> to_u8(const Tensor& t) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(t.numel()));
    auto d = t.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] != 0.0f ? 1 : 0;
    return out;
}

Model load_model(const ExperimentConfig& c, const std::string& name) {
    const auto dir = runs_dir(c) / name;
    if (!fs::exists(dir / "manifest.json"))
        throw MissingPrerequisite("no " + name + " checkpoint in " + dir.string() + "; run `train` first");
    return load_checkpoint(dir);
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
    check_keys(j, {"scene", "carve", "split", "model", "train", "eval", "paths"}, "config");
    ExperimentConfig c;
    if (j.contains("scene")) c.scene = scene_from_json(j["scene"]);
    if (j.contains("carve")) {
        const auto& s = j["carve"];
        check_keys(s, {"extent", "stride"}, "carve");
        read_extent(s, "extent", c.carve.extent, "carve");
        read_extent(s, "stride", c.carve.stride, "carve");
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        check_keys(s, {"train", "val", "test", "seed"}, "split");
        read_opt(s, "train", c.split.train, "split");
        read_opt(s, "val", c.split.val, "split");
        read_opt(s, "test", c.split.test, "split");
        read_opt(s, "seed", c.split_seed, "split");
    }
    if (j.contains("model")) {
        const auto& s = j["model"];
        check_keys(s, {"jekyll", "hyde"}, "model");
        if (s.contains("jekyll")) c.jekyll = hourglass_config_from_json(s["jekyll"]);
        if (s.contains("hyde")) c.hyde = hourglass_config_from_json(s["hyde"]);
    }
    if (j.contains("train")) c.train = train_from_json(j["train"]);
    if (j.contains("eval")) {
        const auto& s = j["eval"];
        check_keys(s, {"thresholds", "panel_gutter"}, "eval");
        read_opt(s, "thresholds", c.thresholds, "eval");
        read_opt(s, "panel_gutter", c.panel_gutter, "eval");
    }
    if (j.contains("paths")) {
        const auto& s = j["paths"];
        check_keys(s, {"workspace"}, "paths");
        std::string w = c.workspace.string();
        read_opt(s, "workspace", w, "paths");
        c.workspace = w;
    }
    validate(c);
    return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return experiment_from_json(j);
}

void validate(const ExperimentConfig& c) {
    as_config_error([&] {
        validate(c.scene);
        validate(c.jekyll);
        validate(c.hyde);
        validate(c.train);
    });
    for (auto e : c.carve.extent)
        if (e < 1) throw ConfigError("carve.extent must be positive");
    for (auto s : c.carve.stride)
        if (s < 0) throw ConfigError("carve.stride must be non-negative");
    const Extent3 cube{c.scene.frames, c.scene.width, c.scene.height};
    for (int a = 0; a < 3; ++a)
        if (c.carve.extent[a] > cube[a]) throw ConfigError("carve.extent exceeds the scene");
    for (const auto* m : {&c.jekyll, &c.hyde})
        if (m->input_width != c.carve.extent[1] || m->input_height != c.carve.extent[2])
            throw ConfigError("model input extent does not match carve.extent");
    const auto& f = c.split;
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    if (c.thresholds.empty()) throw ConfigError("eval.thresholds is empty");
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        if (!(c.thresholds[i] >= 0.0 && c.thresholds[i] <= 1.0)) throw ConfigError("eval.thresholds must lie in [0, 1]");
        if (i && !(c.thresholds[i] > c.thresholds[i - 1]))
            throw ConfigError("eval.thresholds must be strictly increasing");
    }
    if (c.panel_gutter < 0) throw ConfigError("eval.panel_gutter must be non-negative");
}

json scene_to_json(const SceneSpec& s) {
    json targets = json::array();
    for (const auto& t : s.targets) targets.push_back(target_to_json(t));
    const auto& r = s.random_targets;
    return {{"frames", s.frames},
            {"width", s.width},
            {"height", s.height},
            {"offset", s.offset},
            {"background_amplitude", s.background_amplitude},
            {"background_scale", s.background_scale},
            {"decoy_count", s.decoy_count},
            {"decoy_peak_min", s.decoy_peak_min},
            {"decoy_peak_max", s.decoy_peak_max},
            {"decoy_psf_sigma", s.decoy_psf_sigma},
            {"targets", targets},
            {"random_targets",
             {{"count", r.count},
              {"speed_min", r.speed_min},
              {"speed_max", r.speed_max},
              {"peak_min", r.peak_min},
              {"peak_max", r.peak_max},
              {"psf_sigma", r.psf_sigma}}},
            {"noise_sigma", s.noise_sigma},
            {"seed", s.seed}};
}

json to_json(const ExperimentConfig& c) {
    return {{"scene", scene_to_json(c.scene)},
            {"carve", {{"extent", c.carve.extent}, {"stride", c.carve.stride}}},
            {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.split_seed}}},
            {"model", {{"jekyll", to_json(c.jekyll)}, {"hyde", to_json(c.hyde)}}},
            {"train", to_json(c.train)},
            {"eval", {{"thresholds", c.thresholds}, {"panel_gutter", c.panel_gutter}}}};
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

std::string data_hash(const ExperimentConfig& c) {
    const auto j = to_json(c);
    return fnv1a_hex(json{{"scene", j["scene"]}, {"carve", j["carve"]}, {"split", j["split"]}}.dump());
}

void apply_seed(ExperimentConfig& c, std::uint64_t seed) {
    c.scene.seed = seed;
    c.split_seed = seed + 1;
    c.train.seed = seed + 2;
}

std::uint64_t model_seed(const TrainConfig& train, const std::string& model) {
    return splitmix64(train.seed ^ std::stoull(fnv1a_hex(model), nullptr, 16));
}

std::vector<Sample> Dataset::subset(const std::vector<std::size_t>& ids) const {
    std::vector<Sample> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(samples.at(i));
    return out;
}

void cmd_generate(const ExperimentConfig& c, std::ostream& log) {
    const auto hash = config_hash(c);
    const auto dir = data_dir(c);
    fs::create_directories(dir);
    fs::remove_all(dir / "samples");
    fs::create_directories(dir / "samples");

    auto cube = gaussian_scale(generate_cube(c.scene));
    write_jht(dir / "cube.jht", cube.intensity);
    write_jht(dir / "cube_labels.jht", cube.labels.shape(), to_u8(cube.labels));
    json targets = json::array();
    for (const auto& t : cube.targets) targets.push_back(target_to_json(t));
    write_text(dir / "cube.json", json{{"config_hash", hash},
                                       {"scene", scene_to_json(c.scene)},
                                       {"seed", c.scene.seed},
                                       {"mean", cube.mean},
                                       {"stddev", cube.stddev},
                                       {"targets", targets},
                                       {"intensity", "cube.jht"},
                                       {"labels", "cube_labels.jht"}}
                                      .dump(2) + "\n");

    const auto samples = carve_samples(cube, c.carve, 0);
    if (samples.empty()) throw ConfigError("carving produced no samples");
    json entries = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto stem = sample_stem(i);
        write_jht(dir / "samples" / (stem + "_input.jht"), samples[i].input);
        write_jht(dir / "samples" / (stem + "_label.jht"), samples[i].label.shape(), to_u8(samples[i].label));
        const auto& p = samples[i].provenance;
        entries.push_back({{"id", i},
                           {"input", "samples/" + stem + "_input.jht"},
                           {"label", "samples/" + stem + "_label.jht"},
                           {"cube", p.cube_id},
                           {"t", p.t},
                           {"x", p.x},
                           {"y", p.y}});
    }
    const auto split = split_indices(samples.size(), c.split, c.split_seed);
    write_text(dir / "manifest.json", json{{"config_hash", hash},
                                           {"data_hash", data_hash(c)},
                                           {"count", samples.size()},
                                           {"samples", entries},
                                           {"split",
                                            {{"seed", c.split_seed},
                                             {"train", split.train},
                                             {"val", split.val},
                                             {"test", split.test}}}}
                                          .dump(2) + "\n");
    log << "generated " << samples.size() << " samples (train " << split.train.size() << ", val " << split.val.size()
        << ", test " << split.test.size() << ") in " << dir.string() << "\n";
}

Dataset load_dataset(const ExperimentConfig& c) {
    const auto dir = data_dir(c);
    if (!fs::exists(dir / "manifest.json"))
        throw MissingPrerequisite("no dataset in " + dir.string() + "; run `generate` first");
    const auto manifest = read_json(dir / "manifest.json");
    if (manifest.at("data_hash").get<std::string>() != data_hash(c))
        throw MissingPrerequisite("dataset in " + dir.string() +
                                  " was generated from a different scene/carve/split; rerun `generate`");
    Dataset d;
    for (const auto& e : manifest.at("samples")) {
        Sample s;
        s.input = read_tensor(dir / e.at("input").get<std::string>());
        s.label = read_tensor(dir / e.at("label").get<std::string>());
        s.provenance = {e.at("cube").get<int>(), e.at("t").get<std::int64_t>(), e.at("x").get<std::int64_t>(),
                        e.at("y").get<std::int64_t>()};
        d.samples.push_back(std::move(s));
    }
    const auto& sp = manifest.at("split");
    d.split.train = sp.at("train").get<std::vector<std::size_t>>();
    d.split.val = sp.at("val").get<std::vector<std::size_t>>();
    d.split.test = sp.at("test").get<std::vector<std::size_t>>();
    return d;
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "unsupervised") return TrainMode::Unsupervised;
    if (name == "supervised") return TrainMode::Supervised;
    throw ConfigError("unknown training mode '" + name + "' (expected unsupervised or supervised)");
}

RunRecord cmd_train(const ExperimentConfig& c, TrainMode mode, std::ostream& log) {
    const auto hash = config_hash(c);
    const auto data = load_dataset(c);
    const auto train = data.subset(data.split.train);
    const auto val = data.subset(data.split.val);
    const auto dir = runs_dir(c);
    fs::create_directories(dir);
    const std::string name = mode == TrainMode::Unsupervised ? "unsupervised" : "supervised";

    std::ostringstream jsonl;
    auto on_epoch = [&](const EpochRecord& r) {
        auto j = r.to_json();
        j["mode"] = name;
        j["config_hash"] = hash;
        jsonl << j.dump() << '\n';
        log << name << " epoch " << r.epoch << "/" << c.train.epochs << "  train " << r.train_loss << "  val "
            << r.val_loss << "\n";
        log.flush();
    };
    const json extra{{"config_hash", hash}};
    RunRecord record;
    if (mode == TrainMode::Unsupervised) {
        auto jekyll = build_hourglass(c.jekyll, Head::Sigmoid, model_seed(c.train, "jekyll"));
        auto hyde = build_hourglass(c.hyde, Head::FrameMean, model_seed(c.train, "hyde"));
        record = train_unsupervised(jekyll, hyde, train, val, c.train, on_epoch);
        save_checkpoint(jekyll, dir / "jekyll", extra);
        save_checkpoint(hyde, dir / "hyde", extra);
        record.checkpoints = {(dir / "jekyll").string(), (dir / "hyde").string()};
    } else {
        auto utterson = build_hourglass(c.jekyll, Head::Sigmoid, model_seed(c.train, "utterson"));
        record = train_supervised(utterson, train, val, c.train, on_epoch);
        save_checkpoint(utterson, dir / "utterson", extra);
        record.checkpoints = {(dir / "utterson").string()};
    }
    write_text(dir / (name + ".jsonl"), jsonl.str());
    // Wall-clock time lives here, not in the JSONL, so reruns give identical records.
    write_text(dir / (name + ".json"), json{{"mode", name},
                                            {"config_hash", hash},
                                            {"config", to_json(c)},
                                            {"wall_seconds", record.wall_seconds},
                                            {"optimizer_steps", record.batches},
                                            {"checkpoints", record.checkpoints}}
                                           .dump(2) + "\n");
    log << name << " training finished in " << record.wall_seconds << " s\n";
    return record;
}

Evaluation cmd_eval(const ExperimentConfig& c, std::ostream& log) {
    const auto hash = config_hash(c);
    std::optional<Model> jekyll, utterson;
    if (fs::exists(runs_dir(c) / "jekyll" / "manifest.json")) jekyll = load_model(c, "jekyll");
    if (fs::exists(runs_dir(c) / "utterson" / "manifest.json")) utterson = load_model(c, "utterson");
    if (!jekyll && !utterson)
        throw MissingPrerequisite("no checkpoints in " + runs_dir(c).string() + "; run `train` first");
    const auto data = load_dataset(c);
    const auto ev = evaluate(jekyll ? &*jekyll : nullptr, utterson ? &*utterson : nullptr,
                             data.subset(data.split.test), c.thresholds, c.train.batch_size);
    const auto dir = c.workspace / "eval";
    fs::create_directories(dir);
    json summary{{"config_hash", hash}, {"test_samples", data.split.test.size()}, {"tables", json::object()}};
    auto emit = [&](const char* name, const SweepTable& t) {
        write_text(dir / (std::string(name) + ".csv"), to_csv(t));
        summary["tables"][name] = std::string(name) + ".csv";
        log << "wrote " << (dir / (std::string(name) + ".csv")).string() << "\n";
    };
    if (ev.jekyll) emit("jekyll", *ev.jekyll);
    if (ev.utterson) emit("utterson", *ev.utterson);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return ev;
}

PanelGrid cmd_render(const ExperimentConfig& c, std::int64_t sample_id, std::ostream& log) {
    const auto jekyll = load_model(c, "jekyll");
    const auto hyde = load_model(c, "hyde");
    std::optional<Model> utterson;
    if (fs::exists(runs_dir(c) / "utterson" / "manifest.json")) utterson = load_model(c, "utterson");
    const auto data = load_dataset(c);
    if (sample_id < 0 || sample_id >= static_cast<std::int64_t>(data.samples.size()))
        throw ConfigError("unknown sample id " + std::to_string(sample_id) + " (dataset has " +
                          std::to_string(data.samples.size()) + " samples)");

    const std::size_t idx[] = {static_cast<std::size_t>(sample_id)};
    auto [x, y] = stack_batch(data.samples, idx);
    NoGradGuard guard;
    const auto J = forward_jekyll(jekyll, x);
    const auto H = forward_hyde(hyde, x);
    Tensor U = Tensor::zeros(J.shape());
    if (utterson)
        U = forward_jekyll(*utterson, x);
    else
        log << "no utterson checkpoint; its column is left blank\n";
    auto grid = render_panels(x, H, J, U, y, c.panel_gutter);

    const auto dir = c.workspace / "figures";
    fs::create_directories(dir);
    const auto stem = sample_stem(static_cast<std::size_t>(sample_id));
    write_pgm(dir / (stem + ".pgm"), grid);
    write_jht(dir / (stem + "_cells.jht"), grid.cells);
    const char* subset = "train";
    for (auto i : data.split.val) subset = i == idx[0] ? "val" : subset;
    for (auto i : data.split.test) subset = i == idx[0] ? "test" : subset;
    write_text(dir / (stem + ".json"), json{{"config_hash", config_hash(c)},
                                            {"sample", sample_id},
                                            {"subset", subset},
                                            {"frames", kPanelFrames},
                                            {"columns", kPanelColumns},
                                            {"pgm", stem + ".pgm"},
                                            {"cells", stem + "_cells.jht"}}
                                           .dump(2) + "\n");
    log << "wrote " << (dir / (stem + ".pgm")).string() << " (" << subset << " sample)\n";
    return grid;
}

}  // namespace jh
