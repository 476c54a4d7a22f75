#pragma once

// Named-tensor archive ("TMCK"):
//   magic "TMCK" | u32 version | u32 tensor count
//   per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims..., f32 data (LE)
//   trailing UTF-8 JSON metadata (rest of file)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "trajmamba/grad/nn.hpp"

namespace trajmamba {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    nlohmann::json metadata = nlohmann::json::object();

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    const NamedTensor& get(const std::string& name) const {
        if (const auto* t = find(name)) return *t;
        throw DataError("checkpoint: missing tensor '" + name + "'");
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void floats(float* dst, std::size_t n, const char* what) {
        need(n * 4, what);
        std::memcpy(dst, bytes_.data() + pos_, n * 4);
        pos_ += n * 4;
    }

    std::string rest() const { return bytes_.substr(pos_); }

private:
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size()) throw DataError(std::string("checkpoint: truncated while reading ") + what);
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out = "TMCK";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& t : ck.tensors) {
        if (numel_of(t.shape) != t.data.size()) throw ShapeError("checkpoint: tensor '" + t.name + "' size mismatch");
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    }
    out += ck.metadata.dump();
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    detail::ByteReader in(bytes);
    if (in.take(4, "magic") != "TMCK") throw DataError("checkpoint: bad magic");
    const auto version = in.u32("version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ck;
    const auto count = in.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = in.take(in.u32("name length"), "name");
        const auto rank = in.u32("rank");
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.u32("dims"));
        t.data.resize(numel_of(t.shape));
        in.floats(t.data.data(), t.data.size(), "tensor data");
        ck.tensors.push_back(std::move(t));
    }
    const std::string meta = in.rest();
    if (meta.empty()) throw DataError("checkpoint: truncated, metadata missing");
    try {
        ck.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed metadata: ") + e.what());
    }
    return ck;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

/// Appends every parameter and buffer under its registered name.
template <typename T>
void export_parameters(const ParameterSet<T>& ps, Checkpoint& ck) {
    for (const auto& [name, t] : ps.params) {
        ck.tensors.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
    }
    for (const auto& [name, buf] : ps.buffers) {
        ck.tensors.push_back({name, {buf->size()}, std::vector<float>(buf->begin(), buf->end())});
    }
}

/// Overwrites parameter and buffer values from the archive; every name must
/// be present with an identical shape.
template <typename T>
void import_parameters(const Checkpoint& ck, ParameterSet<T>& ps) {
    for (auto& [name, t] : ps.params) {
        const auto& src = ck.get(name);
        if (src.shape != t.shape()) {
            throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(src.shape) +
                            ", model expects " + shape_str(t.shape()));
        }
        auto dst = t.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.data[i]);
    }
    for (auto& [name, buf] : ps.buffers) {
        const auto& src = ck.get(name);
        if (src.data.size() != buf->size()) {
            throw DataError("checkpoint: buffer '" + name + "' has " + std::to_string(src.data.size()) +
                            " values, model expects " + std::to_string(buf->size()));
        }
        for (std::size_t i = 0; i < buf->size(); ++i) (*buf)[i] = static_cast<T>(src.data[i]);
    }
}

/// Copies values between two parameter sets of identical layout.
template <typename T>
void copy_parameter_values(const ParameterSet<T>& src, ParameterSet<T>& dst) {
    if (src.params.size() != dst.params.size() || src.buffers.size() != dst.buffers.size()) {
        throw ShapeError("copy_parameter_values: parameter sets differ in layout");
    }
    for (std::size_t i = 0; i < src.params.size(); ++i) {
        const auto& s = src.params[i].second;
        auto& d = dst.params[i].second;
        if (s.shape() != d.shape()) throw ShapeError("copy_parameter_values: shape mismatch at " + src.params[i].first);
        std::copy(s.data().begin(), s.data().end(), d.mutable_data().begin());
    }
    for (std::size_t i = 0; i < src.buffers.size(); ++i) *dst.buffers[i].second = *src.buffers[i].second;
}

}  // namespace trajmamba
