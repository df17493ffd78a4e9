#include "jh/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "jh/adam.hpp"
#include "jh/ops.hpp"
#include "jh/random.hpp"

namespace jh {

void validate(const TrainConfig& c) {
    if (c.epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
    if (c.batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    for (double lr : {c.lr_hyde, c.lr_utterson, c.lr_jekyll})
        if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train learning rates must be positive");
    if (!(c.weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (!(c.alpha > 0.0)) throw std::invalid_argument("train.alpha must be positive");
    if (!(c.epsilon > 0.0)) throw std::invalid_argument("train.epsilon must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},         {"batch_size", c.batch_size},
            {"lr_hyde", c.lr_hyde},       {"lr_utterson", c.lr_utterson},
            {"lr_jekyll", c.lr_jekyll},   {"weight_decay", c.weight_decay},
            {"alpha", c.alpha},           {"epsilon", c.epsilon},
            {"seed", c.seed},             {"shuffle", c.shuffle}};
}

nlohmann::json EpochRecord::to_json() const {
    return {{"epoch", epoch},
            {"train_loss", train_loss},
            {"val_loss", val_loss},
            {"train_background_term", train_background_term},
            {"train_mask_cost", train_mask_cost},
            {"mask_above_one_minus_eps", mask_above_one_minus_eps}};
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const Shape& s0 = samples.at(indices[0]).input.shape();
    if (s0.size() != 4) throw std::invalid_argument("stack_batch: sample input must be [1,N,W,H], got " + shape_str(s0));
    const auto per = static_cast<std::size_t>(numel(s0));
    std::vector<float> x, y;
    x.reserve(per * indices.size());
    y.reserve(per * indices.size());
    for (auto i : indices) {
        const auto& s = samples.at(i);
        if (s.input.shape() != s0 || s.label.shape() != s0)
            throw std::invalid_argument("stack_batch: samples differ in shape");
        x.insert(x.end(), s.input.data().begin(), s.input.data().end());
        y.insert(y.end(), s.label.data().begin(), s.label.data().end());
    }
    Shape shape{static_cast<std::int64_t>(indices.size()), s0[0], s0[1], s0[2], s0[3]};
    return {Tensor(shape, std::move(x)), Tensor(shape, std::move(y))};
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch, bool shuffle, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle)
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch))
        out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch));
    return out;
}

double param_norm(const Model& m) {
    double acc = 0.0;
    for (const auto& p : m.params)
        for (float v : p.data()) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
}

void check_models(const Model& m, Head head, const char* who) {
    if (m.head != head) throw std::invalid_argument(std::string(who) + " model has the wrong head");
    if (m.params.empty()) throw std::invalid_argument(std::string(who) + " model has no parameters");
}

bool all_finite(const Tensor& t) {
    for (float v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

void check_samples(const std::vector<Sample>& train) {
    if (train.empty()) throw std::invalid_argument("training set is empty");
}

}  // namespace

RunRecord train_unsupervised(Model& jekyll, Model& hyde, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    check_samples(train);
    check_models(jekyll, Head::Sigmoid, "Jekyll");
    check_models(hyde, Head::FrameMean, "Hyde");
    if (jekyll.config.input_width != hyde.config.input_width || jekyll.config.input_height != hyde.config.input_height)
        throw std::invalid_argument("Jekyll and Hyde input geometry differ");

    const auto start = Clock::now();
    Adam opt_j(jekyll.params, {config.lr_jekyll, 0.9, 0.999, 1e-8, config.weight_decay});
    Adam opt_h(hyde.params, {config.lr_hyde, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng rng(config.seed);
    const float eps = static_cast<float>(config.epsilon);

    RunRecord record;
    record.mode = "unsupervised";
    record.config = to_json(config);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double total = 0.0, background = 0.0, cost = 0.0;
        std::int64_t high = 0, voxels = 0;
        for (const auto& idx : make_batches(train.size(), config.batch_size, config.shuffle, rng)) {
            auto [x, unused] = stack_batch(train, idx);
            auto J = forward_jekyll(jekyll, x);
            auto H = forward_hyde(hyde, x);
            auto diverged = [&](const std::string& what, const nlohmann::json& loss) {
                return DivergenceError(what + " at epoch " + std::to_string(epoch),
                                       {{"epoch", epoch},
                                        {"batch", idx},
                                        {"loss", loss},
                                        {"jekyll_param_norm", param_norm(jekyll)},
                                        {"hyde_param_norm", param_norm(hyde)}});
            };
            if (!all_finite(J) || !all_finite(H)) throw diverged("model output is not finite", nullptr);
            auto loss = dual_loss(x, J, H, config.alpha, config.epsilon);
            const double l = loss.total.item();
            if (!std::isfinite(l)) throw diverged("unsupervised loss is not finite", to_json(loss));
            const double k = static_cast<double>(idx.size());
            total += l * k;
            background += loss.background_term.item() * k;
            cost += loss.mask_cost.item() * k;
            for (float v : J.data()) high += v > 1.0f - eps;
            voxels += J.numel();

            opt_j.zero_grad();
            opt_h.zero_grad();
            backward(loss.total);
            opt_j.step();
            opt_h.step();
            ++record.batches;
        }
        const double n = static_cast<double>(train.size());
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = total / n;
        rec.train_background_term = background / n;
        rec.train_mask_cost = cost / n;
        rec.mask_above_one_minus_eps = static_cast<double>(high) / static_cast<double>(voxels);
        if (!val.empty()) {
            NoGradGuard guard;
            double acc = 0.0;
            Rng none(0);
            for (const auto& idx : make_batches(val.size(), config.batch_size, false, none)) {
                auto [x, unused] = stack_batch(val, idx);
                auto loss = dual_loss(x, forward_jekyll(jekyll, x), forward_hyde(hyde, x), config.alpha, config.epsilon);
                acc += loss.total.item() * static_cast<double>(idx.size());
            }
            rec.val_loss = acc / static_cast<double>(val.size());
        }
        if (opt_j.steps() != record.batches || opt_h.steps() != record.batches)
            throw std::logic_error("Jekyll and Hyde optimizer steps drifted from the batch count");
        jekyll.epoch = hyde.epoch = epoch;
        record.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return record;
}

RunRecord train_supervised(Model& utterson, const std::vector<Sample>& train, const std::vector<Sample>& val,
                           const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    check_samples(train);
    check_models(utterson, Head::Sigmoid, "Utterson");

    const auto start = Clock::now();
    Adam opt(utterson.params, {config.lr_utterson, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng rng(config.seed);

    RunRecord record;
    record.mode = "supervised";
    record.config = to_json(config);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& idx : make_batches(train.size(), config.batch_size, config.shuffle, rng)) {
            auto [x, y] = stack_batch(train, idx);
            auto p = forward_jekyll(utterson, x);
            if (!all_finite(p))
                throw DivergenceError("model output is not finite at epoch " + std::to_string(epoch),
                                      {{"epoch", epoch}, {"batch", idx}, {"param_norm", param_norm(utterson)}});
            auto loss = bce_loss(p, y);
            const double l = loss.item();
            if (!std::isfinite(l))
                throw DivergenceError("supervised loss is not finite at epoch " + std::to_string(epoch),
                                      {{"epoch", epoch}, {"batch", idx}, {"param_norm", param_norm(utterson)}});
            total += l * static_cast<double>(idx.size());
            opt.zero_grad();
            backward(loss);
            opt.step();
            ++record.batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = total / static_cast<double>(train.size());
        if (!val.empty()) {
            NoGradGuard guard;
            double acc = 0.0;
            Rng none(0);
            for (const auto& idx : make_batches(val.size(), config.batch_size, false, none)) {
                auto [x, y] = stack_batch(val, idx);
                acc += bce_loss(forward_jekyll(utterson, x), y).item() * static_cast<double>(idx.size());
            }
            rec.val_loss = acc / static_cast<double>(val.size());
        }
        utterson.epoch = epoch;
        record.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return record;
}

std::vector<float> predict(const Model& model, const std::vector<Sample>& samples, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("predict: batch_size must be >= 1");
    NoGradGuard guard;
    Rng none(0);
    std::vector<float> out;
    for (const auto& idx : make_batches(samples.size(), batch_size, false, none)) {
        auto [x, unused] = stack_batch(samples, idx);
        auto y = forward_trace(model, x).output;
        out.insert(out.end(), y.data().begin(), y.data().end());
    }
    return out;
}

Evaluation evaluate(const Model* jekyll, const Model* utterson, const std::vector<Sample>& test,
                    const std::vector<double>& thresholds, int batch_size) {
    if (test.empty()) throw std::invalid_argument("evaluate: test set is empty");
    std::vector<float> labels;
    for (const auto& s : test) labels.insert(labels.end(), s.label.data().begin(), s.label.data().end());
    Evaluation out;
    if (jekyll) {
        check_models(*jekyll, Head::Sigmoid, "Jekyll");
        out.jekyll = sweep(predict(*jekyll, test, batch_size), labels, thresholds);
    }
    if (utterson) {
        check_models(*utterson, Head::Sigmoid, "Utterson");
        out.utterson = sweep(rescale_unit(predict(*utterson, test, batch_size)), labels, thresholds);
    }
    return out;
}

namespace {

struct Volume {
    std::span<const float> v;
    std::int64_t n, w, h;

    float at(std::int64_t t, std::int64_t x, std::int64_t y) const { return v[(t * w + x) * h + y]; }
};

Volume trailing3(const Tensor& t, const char* what) {
    const auto& s = t.shape();
    if (s.size() < 3) throw std::invalid_argument(std::string("render_panels: ") + what + " needs >= 3 axes");
    const auto r = s.size();
    if (numel(s) != s[r - 3] * s[r - 2] * s[r - 1])
        throw std::invalid_argument(std::string("render_panels: ") + what + " has a leading axis > 1: " + shape_str(s));
    return {t.data(), s[r - 3], s[r - 2], s[r - 1]};
}

}  // namespace

PanelGrid render_panels(const Tensor& input, const Tensor& hyde_out, const Tensor& jekyll_out,
                        const Tensor& utterson_out, const Tensor& labels, std::int64_t gutter) {
    if (gutter < 0) throw std::invalid_argument("render_panels: negative gutter");
    const auto in = trailing3(input, "input");
    const auto hy = trailing3(hyde_out, "hyde");
    const auto je = trailing3(jekyll_out, "jekyll");
    const auto ut = trailing3(utterson_out, "utterson");
    const auto lb = trailing3(labels, "labels");
    if (in.n <= kPanelFrames.back()) throw std::invalid_argument("render_panels: sample has too few frames");
    if (hy.n != 1) throw std::invalid_argument("render_panels: Hyde output must have one frame");
    for (const auto* v : {&hy, &je, &ut, &lb})
        if (v->w != in.w || v->h != in.h || (v != &hy && v->n != in.n))
            throw std::invalid_argument("render_panels: panel tensors disagree in extent");

    const std::int64_t W = in.w, H = in.h;
    const std::int64_t rows = kPanelFrames.size(), cols = kPanelColumns.size();
    PanelGrid grid;
    grid.width = cols * (W + gutter);
    grid.height = rows * (H + gutter);
    grid.pixels.assign(static_cast<std::size_t>(grid.width * grid.height), 255);
    std::vector<float> cells(static_cast<std::size_t>(rows * cols * W * H));

    for (std::int64_t r = 0; r < rows; ++r) {
        const auto t = kPanelFrames[r];
        for (std::int64_t c = 0; c < cols; ++c) {
            float* cell = cells.data() + (r * cols + c) * W * H;
            for (std::int64_t x = 0; x < W; ++x)
                for (std::int64_t y = 0; y < H; ++y) {
                    float v = 0.0f;
                    switch (c) {
                        case 0: v = in.at(t, x, y); break;
                        case 1: v = hy.at(0, x, y); break;
                        case 2: v = je.at(t, x, y); break;
                        case 3: v = in.at(t, x, y) - hy.at(0, x, y); break;
                        case 4: v = ut.at(t, x, y); break;
                        default: v = lb.at(t, x, y); break;
                    }
                    cell[x * H + y] = v;
                }
            const auto [lo, hi] = std::minmax_element(cell, cell + W * H);
            const double span = static_cast<double>(*hi) - *lo;
            const std::int64_t top = r * (H + gutter), left = c * (W + gutter);
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x) {
                    const double u = span > 0.0 ? (cell[x * H + y] - *lo) / span : 0.0;
                    grid.pixels[static_cast<std::size_t>((top + y) * grid.width + left + x)] =
                        static_cast<std::uint8_t>(std::lround(255.0 * u));
                }
        }
    }
    grid.cells = Tensor({rows, cols, W, H}, std::move(cells));
    return grid;
}

std::vector<std::uint8_t> encode_pgm(const PanelGrid& grid) {
    if (static_cast<std::int64_t>(grid.pixels.size()) != grid.width * grid.height)
        throw std::invalid_argument("encode_pgm: pixel count does not match extents");
    const std::string header = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), grid.pixels.begin(), grid.pixels.end());
    return out;
}

void write_pgm(const std::filesystem::path& path, const PanelGrid& grid) {
    const auto bytes = encode_pgm(grid);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace jh
