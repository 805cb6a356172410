#include "snnconv/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace snnconv {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'F'};

template <class T>
void put(std::string &out, T value)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string &bytes) : bytes_(bytes) {}

    template <class T>
    T get()
    {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size()) {
            throw std::runtime_error("blob truncated at byte " + std::to_string(pos_));
        }
    }

private:
    const std::string &bytes_;
    std::size_t pos_ = 0;
};

std::size_t directory_size(const std::vector<BlobTensor> &tensors)
{
    std::size_t size = 4 + 4 + 4;
    for (const BlobTensor &t : tensors) {
        size += 2 + t.name.size() + 1 + 1 + 4 * t.dims.size() + 8;
    }
    return size;
}

} // namespace

std::size_t BlobTensor::element_count() const
{
    std::size_t n = 1;
    for (std::uint32_t d : dims) {
        n *= d;
    }
    return n;
}

BlobTensor make_f32(std::string name, std::vector<std::uint32_t> dims, const std::vector<double> &values)
{
    BlobTensor t;
    t.name = std::move(name);
    t.dtype = BlobDType::F32;
    t.dims = std::move(dims);
    t.f32.assign(values.begin(), values.end());
    if (t.f32.size() != t.element_count()) {
        throw std::invalid_argument("tensor '" + t.name + "' size does not match dims");
    }
    return t;
}

BlobTensor make_i32(std::string name, std::vector<std::uint32_t> dims, std::vector<std::int32_t> values)
{
    BlobTensor t;
    t.name = std::move(name);
    t.dtype = BlobDType::I32;
    t.dims = std::move(dims);
    t.i32 = std::move(values);
    if (t.i32.size() != t.element_count()) {
        throw std::invalid_argument("tensor '" + t.name + "' size does not match dims");
    }
    return t;
}

std::vector<std::uint64_t> blob_offsets(const std::vector<BlobTensor> &tensors)
{
    std::vector<std::uint64_t> offsets;
    std::uint64_t offset = directory_size(tensors);
    for (const BlobTensor &t : tensors) {
        offsets.push_back(offset);
        offset += 4 * t.element_count();
    }
    return offsets;
}

std::string encode_blob(const std::vector<BlobTensor> &tensors)
{
    std::string out;
    out.append(kMagic, 4);
    put<std::uint32_t>(out, kBlobVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    const auto offsets = blob_offsets(tensors);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const BlobTensor &t = tensors[i];
        if (t.name.size() > 0xffff || t.dims.size() > 0xff) {
            throw std::invalid_argument("tensor '" + t.name + "' name or rank too large");
        }
        put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
        out += t.name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) {
            put<std::uint32_t>(out, d);
        }
        put<std::uint64_t>(out, offsets[i]);
    }
    for (const BlobTensor &t : tensors) {
        const std::size_t n = t.element_count();
        if (t.dtype == BlobDType::F32) {
            if (t.f32.size() != n) {
                throw std::invalid_argument("tensor '" + t.name + "' size does not match dims");
            }
            out.append(reinterpret_cast<const char *>(t.f32.data()), 4 * n);
        } else {
            if (t.i32.size() != n) {
                throw std::invalid_argument("tensor '" + t.name + "' size does not match dims");
            }
            out.append(reinterpret_cast<const char *>(t.i32.data()), 4 * n);
        }
    }
    return out;
}

std::vector<BlobTensor> decode_blob(const std::string &bytes)
{
    Reader r(bytes);
    if (r.get_string(4) != std::string(kMagic, 4)) {
        throw std::runtime_error("not a SPKF blob (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kBlobVersion) {
        throw std::runtime_error("unsupported blob version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>();
    std::vector<BlobTensor> tensors(count);
    std::vector<std::uint64_t> offsets(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        BlobTensor &t = tensors[i];
        t.name = r.get_string(r.get<std::uint16_t>());
        const auto dtype = r.get<std::uint8_t>();
        if (dtype > 1) {
            throw std::runtime_error("tensor '" + t.name + "' has unknown dtype");
        }
        t.dtype = static_cast<BlobDType>(dtype);
        const auto rank = r.get<std::uint8_t>();
        for (int d = 0; d < rank; ++d) {
            t.dims.push_back(r.get<std::uint32_t>());
        }
        offsets[i] = r.get<std::uint64_t>();
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        BlobTensor &t = tensors[i];
        const std::size_t n = t.element_count();
        if (offsets[i] + 4 * n > bytes.size()) {
            throw std::runtime_error("tensor '" + t.name + "' data lies outside the blob");
        }
        const char *src = bytes.data() + offsets[i];
        if (t.dtype == BlobDType::F32) {
            t.f32.resize(n);
            std::memcpy(t.f32.data(), src, 4 * n);
        } else {
            t.i32.resize(n);
            std::memcpy(t.i32.data(), src, 4 * n);
        }
    }
    return tensors;
}

const BlobTensor &find_tensor(const std::vector<BlobTensor> &tensors, const std::string &name)
{
    for (const BlobTensor &t : tensors) {
        if (t.name == name) {
            return t;
        }
    }
    throw std::runtime_error("blob has no tensor '" + name + "'");
}

std::string read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path &path, const std::string &bytes)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

void write_blob(const std::filesystem::path &path, const std::vector<BlobTensor> &tensors)
{
    write_file(path, encode_blob(tensors));
}

std::vector<BlobTensor> read_blob(const std::filesystem::path &path)
{
    return decode_blob(read_file(path));
}

} // namespace snnconv
