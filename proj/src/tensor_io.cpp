#include "jh/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace jh {

namespace {

constexpr char kMagic[4] = {'J', 'H', 'T', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::vector<std::uint8_t> header(DType dtype, const Shape& shape) {
    if (shape.size() > 255) throw std::invalid_argument("JHT1: too many dimensions");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) put_u64(out, static_cast<std::uint64_t>(e));
    return out;
}

}  // namespace

Tensor StoredArray::to_tensor() const {
    if (dtype == DType::Float32) return Tensor(shape, f32);
    return Tensor(shape, std::vector<float>(u8.begin(), u8.end()));
}

std::vector<std::uint8_t> encode_jht(const Shape& shape, std::span<const float> values) {
    if (static_cast<std::int64_t>(values.size()) != numel(shape))
        throw std::invalid_argument("JHT1: payload size does not match shape " + shape_str(shape));
    auto out = header(DType::Float32, shape);
    out.reserve(out.size() + 4 * values.size());
    for (float v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

std::vector<std::uint8_t> encode_jht(const Shape& shape, std::span<const std::uint8_t> values) {
    if (static_cast<std::int64_t>(values.size()) != numel(shape))
        throw std::invalid_argument("JHT1: payload size does not match shape " + shape_str(shape));
    auto out = header(DType::UInt8, shape);
    out.insert(out.end(), values.begin(), values.end());
    return out;
}

StoredArray decode_jht(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("JHT1: bad magic");
    StoredArray a;
    const auto code = bytes[4];
    if (code > 1) throw std::runtime_error("JHT1: unknown dtype code " + std::to_string(code));
    a.dtype = static_cast<DType>(code);
    const std::size_t ndim = bytes[5];
    std::size_t pos = 6;
    if (bytes.size() < pos + 8 * ndim) throw std::runtime_error("JHT1: truncated header");
    for (std::size_t d = 0; d < ndim; ++d, pos += 8) a.shape.push_back(static_cast<std::int64_t>(get_u64(&bytes[pos])));
    const auto n = static_cast<std::size_t>(numel(a.shape));
    const std::size_t width = a.dtype == DType::Float32 ? 4 : 1;
    if (bytes.size() != pos + n * width)
        throw std::runtime_error("JHT1: payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                                 std::to_string(n * width));
    if (a.dtype == DType::UInt8) {
        a.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    } else {
        a.f32.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 3; b >= 0; --b) bits = (bits << 8) | bytes[pos + 4 * i + b];
            a.f32[i] = std::bit_cast<float>(bits);
        }
    }
    return a;
}

namespace {
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}
}  // namespace

void write_jht(const std::filesystem::path& path, const Tensor& tensor) {
    write_bytes(path, encode_jht(tensor.shape(), tensor.data()));
}

void write_jht(const std::filesystem::path& path, const Shape& shape, std::span<const std::uint8_t> values) {
    write_bytes(path, encode_jht(shape, values));
}

StoredArray read_jht(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_jht(bytes);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

Tensor read_tensor(const std::filesystem::path& path) { return read_jht(path).to_tensor(); }

}  // namespace jh
