#pragma once

// JHT1 tensor files:
//   "JHT1" | dtype u8 (0 = float32, 1 = uint8) | ndim u8 | ndim x u64 LE extents | payload (row-major, LE)

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "jh/tensor.hpp"

namespace jh {

enum class DType : std::uint8_t { Float32 = 0, UInt8 = 1 };

struct StoredArray {
    DType dtype = DType::Float32;
    Shape shape;
    std::vector<float> f32;
    std::vector<std::uint8_t> u8;

    // uint8 payloads are widened.
    Tensor to_tensor() const;
};

std::vector<std::uint8_t> encode_jht(const Shape& shape, std::span<const float> values);
std::vector<std::uint8_t> encode_jht(const Shape& shape, std::span<const std::uint8_t> values);
StoredArray decode_jht(std::span<const std::uint8_t> bytes);

void write_jht(const std::filesystem::path& path, const Tensor& tensor);
void write_jht(const std::filesystem::path& path, const Shape& shape, std::span<const std::uint8_t> values);
StoredArray read_jht(const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace jh
