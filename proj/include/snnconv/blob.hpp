#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace snnconv {

/// Tensor container file.
///
/// Layout (little-endian): "SPKF", u32 version, u32 tensor count, then per
/// tensor a directory entry {u16 name length, name bytes, u8 dtype (0 = f32,
/// 1 = i32), u8 rank, u32 dims[rank], u64 absolute data offset}, followed by
/// the packed tensor data in directory order.
enum class BlobDType : std::uint8_t { F32 = 0, I32 = 1 };

struct BlobTensor {
    std::string name;
    BlobDType dtype = BlobDType::F32;
    std::vector<std::uint32_t> dims;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    [[nodiscard]] std::size_t element_count() const;
};

inline constexpr std::uint32_t kBlobVersion = 1;

BlobTensor make_f32(std::string name, std::vector<std::uint32_t> dims, const std::vector<double> &values);
BlobTensor make_i32(std::string name, std::vector<std::uint32_t> dims, std::vector<std::int32_t> values);

std::string encode_blob(const std::vector<BlobTensor> &tensors);
/// Throws std::runtime_error on a malformed or truncated buffer.
std::vector<BlobTensor> decode_blob(const std::string &bytes);

void write_blob(const std::filesystem::path &path, const std::vector<BlobTensor> &tensors);
std::vector<BlobTensor> read_blob(const std::filesystem::path &path);

/// Directory offsets of each tensor's data, in order, for a given encoding.
std::vector<std::uint64_t> blob_offsets(const std::vector<BlobTensor> &tensors);

const BlobTensor &find_tensor(const std::vector<BlobTensor> &tensors, const std::string &name);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &bytes);

} // namespace snnconv
