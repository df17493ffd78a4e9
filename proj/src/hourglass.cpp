#include "jh/hourglass.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "jh/json_util.hpp"
#include "jh/random.hpp"
#include "jh/tensor_io.hpp"

namespace jh {

std::string to_string(Head head) { return head == Head::Sigmoid ? "sigmoid" : "frame_mean"; }

Head head_from_string(const std::string& name) {
    if (name == "sigmoid") return Head::Sigmoid;
    if (name == "frame_mean") return Head::FrameMean;
    throw std::invalid_argument("unknown head '" + name + "'");
}

StageGeometry HourglassConfig::stage(int s) const {
    if (stages.empty()) return {};
    return stages.at(static_cast<std::size_t>(s));
}

void validate(const HourglassConfig& c) {
    if (c.depth < 1) throw std::invalid_argument("hourglass: depth must be >= 1");
    if (c.base_channels < 1 || c.in_channels < 1) throw std::invalid_argument("hourglass: channel counts must be positive");
    if (!c.stages.empty() && c.stages.size() != static_cast<std::size_t>(c.depth))
        throw std::invalid_argument("hourglass: need one stage geometry per encoder stage");
    for (int s = 0; s < c.depth; ++s) {
        const auto g = c.stage(s);
        for (int a = 0; a < 3; ++a) {
            // Skip partners must have identical extents, so every conv preserves shape.
            if (g.stride[a] != 1 || g.kernel[a] < 1 || 2 * g.padding[a] != g.kernel[a] - 1)
                throw std::invalid_argument("hourglass: stage " + std::to_string(s) +
                                            " must use stride 1 and padding (k-1)/2 on every axis");
        }
    }
    for (int a = 0; a < 3; ++a)
        if (c.pool[a] < 1) throw std::invalid_argument("hourglass: pool extents must be >= 1");
    std::int64_t w = c.input_width, h = c.input_height;
    for (int s = 0; s < c.depth; ++s) {
        if (w % c.pool[1] != 0 || h % c.pool[2] != 0)
            throw std::invalid_argument("hourglass: spatial extent " + std::to_string(c.input_width) + "x" +
                                        std::to_string(c.input_height) + " is not divisible by the pooling factor at depth " +
                                        std::to_string(c.depth));
        w /= c.pool[1];
        h /= c.pool[2];
    }
}

std::int64_t parameter_count(const HourglassConfig& c) {
    std::int64_t total = 0;
    for (int s = 0; s < c.depth; ++s) {
        const auto k = c.stage(s).kernel;
        const auto kvol = k[0] * k[1] * k[2];
        const auto cin = s == 0 ? c.in_channels : c.channels(s - 1);
        total += cin * c.channels(s) * kvol + c.channels(s);
        const auto dec_out = s == 0 ? c.base_channels : c.channels(s - 1);
        total += 2 * c.channels(s) * dec_out * kvol + dec_out;
    }
    return total + c.base_channels + 1;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

Model build_hourglass(const HourglassConfig& config, Head head, std::uint64_t seed) {
    validate(config);
    Model m{config, head, seed, 0, {}, {}};
    Rng rng(seed);
    auto weight = [&](const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out) {
        std::vector<float> data(static_cast<std::size_t>(numel(shape)));
        const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        for (auto& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
        m.names.push_back(name + ".weight");
        m.params.emplace_back(std::move(shape), std::move(data), true);
    };
    auto bias = [&](const std::string& name, std::int64_t n) {
        m.names.push_back(name + ".bias");
        m.params.push_back(Tensor::zeros({n}, true));
    };

    for (int s = 0; s < config.depth; ++s) {
        const auto k = config.stage(s).kernel;
        const auto kvol = k[0] * k[1] * k[2];
        const auto cin = s == 0 ? config.in_channels : config.channels(s - 1);
        const auto cout = config.channels(s);
        const auto name = "encoder." + std::to_string(s);
        weight(name, {cout, cin, k[0], k[1], k[2]}, cin * kvol, cout * kvol);
        bias(name, cout);
    }
    // Decoder j undoes encoder stage depth-1-j.
    for (int j = 0; j < config.depth; ++j) {
        const int s = config.depth - 1 - j;
        const auto k = config.stage(s).kernel;
        const auto kvol = k[0] * k[1] * k[2];
        const auto cin = 2 * config.channels(s);
        const auto cout = s == 0 ? config.base_channels : config.channels(s - 1);
        const auto name = "decoder." + std::to_string(j);
        weight(name, {cin, cout, k[0], k[1], k[2]}, cin * kvol, cout * kvol);
        bias(name, cout);
    }
    weight("project", {1, config.base_channels, 1, 1, 1}, config.base_channels, 1);
    bias("project", 1);
    return m;
}

template <typename T>
ForwardTrace<T> hourglass_forward(const HourglassConfig& c, Head head, std::span<const BasicTensor<T>> p,
                                  const BasicTensor<T>& input) {
    if (p.size() != static_cast<std::size_t>(4 * c.depth + 2))
        throw std::invalid_argument("hourglass: expected " + std::to_string(4 * c.depth + 2) + " parameter tensors");
    if (input.ndim() != 5 || input.dim(1) != c.in_channels)
        throw std::invalid_argument("hourglass: input must be [K," + std::to_string(c.in_channels) +
                                    ",N,W,H], got " + shape_str(input.shape()));
    std::int64_t w = input.dim(3), h = input.dim(4);
    for (int s = 0; s < c.depth; ++s) {
        if (w % c.pool[1] != 0 || h % c.pool[2] != 0)
            throw std::invalid_argument("hourglass: input " + shape_str(input.shape()) +
                                        " spatial extent not divisible by the pooling factor at depth " +
                                        std::to_string(c.depth));
        w /= c.pool[1];
        h /= c.pool[2];
    }

    std::vector<BasicTensor<T>> skips;
    std::vector<IndexTensor> indices;
    BasicTensor<T> x = input;
    std::size_t next = 0;
    for (int s = 0; s < c.depth; ++s) {
        const auto g = c.stage(s);
        x = relu(conv3d(x, p[next], p[next + 1], ConvGeometry{g.stride, g.padding}));
        next += 2;
        skips.push_back(x);
        auto pooled = maxpool3d(x, c.pool);
        indices.push_back(std::move(pooled.indices));
        x = pooled.values;
    }
    for (int j = 0; j < c.depth; ++j) {
        const int s = c.depth - 1 - j;
        const auto g = c.stage(s);
        const auto& partner = skips[static_cast<std::size_t>(s)];
        auto up = maxunpool3d(x, indices[static_cast<std::size_t>(s)], Extent3{partner.dim(2), partner.dim(3), partner.dim(4)});
        x = relu(conv_transpose3d(concat_channels(up, partner), p[next], p[next + 1], ConvGeometry{g.stride, g.padding}));
        next += 2;
    }
    auto last = conv3d(x, p[next], p[next + 1]);
    auto out = head == Head::Sigmoid ? sigmoid(last) : mean_over_time(last);
    return {out, last};
}

template ForwardTrace<float> hourglass_forward<float>(const HourglassConfig&, Head, std::span<const BasicTensor<float>>,
                                                      const BasicTensor<float>&);
template ForwardTrace<double> hourglass_forward<double>(const HourglassConfig&, Head,
                                                        std::span<const BasicTensor<double>>, const BasicTensor<double>&);

ForwardTrace<float> forward_trace(const Model& model, const Tensor& input) {
    return hourglass_forward<float>(model.config, model.head, model.params, input);
}

Tensor forward_jekyll(const Model& model, const Tensor& input) {
    if (model.head != Head::Sigmoid) throw std::invalid_argument("forward_jekyll: model head is not sigmoid");
    return forward_trace(model, input).output;
}

Tensor forward_hyde(const Model& model, const Tensor& input) {
    if (model.head != Head::FrameMean) throw std::invalid_argument("forward_hyde: model head is not frame_mean");
    return forward_trace(model, input).output;
}

nlohmann::json to_json(const HourglassConfig& c) {
    nlohmann::json j{{"depth", c.depth},
                     {"base_channels", c.base_channels},
                     {"in_channels", c.in_channels},
                     {"pool", c.pool},
                     {"input_width", c.input_width},
                     {"input_height", c.input_height}};
    if (!c.stages.empty()) {
        j["stages"] = nlohmann::json::array();
        for (const auto& s : c.stages)
            j["stages"].push_back({{"kernel", s.kernel}, {"padding", s.padding}, {"stride", s.stride}});
    }
    return j;
}

HourglassConfig hourglass_config_from_json(const nlohmann::json& j) {
    const std::string where = "model";
    check_keys(j, {"depth", "base_channels", "in_channels", "stages", "pool", "input_width", "input_height"}, where);
    HourglassConfig c;
    read_opt(j, "depth", c.depth, where);
    read_opt(j, "base_channels", c.base_channels, where);
    read_opt(j, "in_channels", c.in_channels, where);
    read_opt(j, "input_width", c.input_width, where);
    read_opt(j, "input_height", c.input_height, where);
    read_extent(j, "pool", c.pool, where);
    if (j.contains("stages")) {
        if (!j["stages"].is_array()) throw ConfigError(where + ".stages: expected an array");
        for (std::size_t i = 0; i < j["stages"].size(); ++i) {
            const auto& sj = j["stages"][i];
            const auto sw = where + ".stages[" + std::to_string(i) + "]";
            check_keys(sj, {"kernel", "padding", "stride"}, sw);
            StageGeometry g;
            read_extent(sj, "kernel", g.kernel, sw);
            read_extent(sj, "padding", g.padding, sw);
            read_extent(sj, "stride", g.stride, sw);
            c.stages.push_back(g);
        }
    }
    try {
        validate(c);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"format", "jh-checkpoint-1"},
                            {"config", to_json(model.config)},
                            {"head", to_string(model.head)},
                            {"seed", model.seed},
                            {"epoch", model.epoch},
                            {"parameters", nlohmann::json::array()}};
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto file = model.names[i] + ".jht";
        write_jht(dir / file, model.params[i]);
        manifest["parameters"].push_back({{"name", model.names[i]}, {"file", file}, {"shape", model.params[i].shape()}});
    }
    if (!extra.is_null())
        for (const auto& [k, v] : extra.items()) manifest[k] = v;
    std::ofstream f(dir / "manifest.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
    f << manifest.dump(2) << '\n';
}

Model load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("no checkpoint manifest in " + dir.string());
    const auto manifest = nlohmann::json::parse(f);
    Model m = build_hourglass(hourglass_config_from_json(manifest.at("config")),
                              head_from_string(manifest.at("head").get<std::string>()),
                              manifest.at("seed").get<std::uint64_t>());
    m.epoch = manifest.at("epoch").get<std::int64_t>();
    const auto& entries = manifest.at("parameters");
    if (entries.size() != m.params.size())
        throw std::runtime_error("checkpoint " + dir.string() + " has " + std::to_string(entries.size()) +
                                 " parameters, architecture expects " + std::to_string(m.params.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto loaded = read_tensor(dir / entries[i].at("file").get<std::string>());
        if (loaded.shape() != m.params[i].shape())
            throw std::runtime_error("checkpoint parameter " + m.names[i] + " has shape " + shape_str(loaded.shape()) +
                                     ", expected " + shape_str(m.params[i].shape()));
        auto dst = m.params[i].mutable_data();
        std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
    }
    return m;
}

}  // namespace jh
