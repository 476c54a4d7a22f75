#pragma once

// Text embeddings keyed by exact description string.
//
// File layout (little-endian):
//   "TEMB" | u32 count | u32 dim | count x (u32 key_len | key bytes | dim x f32)

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trajmamba/grad/checkpoint.hpp"
#include "trajmamba/traj/types.hpp"

namespace trajmamba {

static_assert(std::endian::native == std::endian::little, "TEMB files assume a little-endian host");

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Deterministic stand-in for a text model: every whitespace token adds
/// signed unit contributions at hashed positions; the sum is L2-normalized.
inline std::vector<float> pseudo_embed(const std::string& text, std::size_t dim, std::uint64_t seed = 0) {
    if (dim == 0) throw UsageError("pseudo_embed: dim must be positive");
    constexpr int kTaps = 4;
    std::vector<double> acc(dim, 0.0);
    std::istringstream in(text);
    std::string tok;
    std::size_t tokens = 0;
    while (in >> tok) {
        ++tokens;
        std::uint64_t state = fnv1a64(tok) ^ (seed * 0x9E3779B97F4A7C15ULL);
        for (int k = 0; k < kTaps; ++k) {
            const std::uint64_t r = splitmix64(state);
            acc[r % dim] += (r >> 63) ? 1.0 : -1.0;
        }
    }
    if (tokens == 0) throw DataError("pseudo_embed: empty description");
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    // Colliding taps can cancel exactly; fall back to the first tap position.
    if (norm == 0.0) {
        acc[fnv1a64(text) % dim] = 1.0;
        norm = 1.0;
    }
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

class TextEmbeddingStore {
  public:
    TextEmbeddingStore() = default;
    explicit TextEmbeddingStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(const std::string& key) const { return entries_.count(key) > 0; }
    const std::map<std::string, std::vector<float>>& entries() const { return entries_; }

    void put(const std::string& key, std::vector<float> v) {
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_)
            throw DataError("text embedding store: entry '" + key + "' has dim " + std::to_string(v.size()) +
                            ", store dim is " + std::to_string(dim_));
        entries_[key] = std::move(v);
    }

    const std::vector<float>& get(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw DataError("text embedding store: no embedding for key '" + key + "'");
        return it->second;
    }

    std::vector<std::uint8_t> encode() const {
        std::vector<std::uint8_t> out{'T', 'E', 'M', 'B'};
        auto put_u32 = [&](std::uint32_t v) {
            for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        };
        put_u32(static_cast<std::uint32_t>(entries_.size()));
        put_u32(static_cast<std::uint32_t>(dim_));
        for (const auto& [key, v] : entries_) {
            put_u32(static_cast<std::uint32_t>(key.size()));
            out.insert(out.end(), key.begin(), key.end());
            const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
            out.insert(out.end(), p, p + v.size() * sizeof(float));
        }
        return out;
    }

    static TextEmbeddingStore decode(const std::vector<std::uint8_t>& bytes) {
        std::size_t pos = 0;
        auto need = [&](std::size_t n) {
            if (pos + n > bytes.size()) throw DataError("text embedding store: truncated file");
        };
        auto get_u32 = [&] {
            need(4);
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
            pos += 4;
            return v;
        };
        need(4);
        if (std::memcmp(bytes.data(), "TEMB", 4) != 0) throw DataError("text embedding store: bad magic");
        pos = 4;
        const auto count = get_u32();
        TextEmbeddingStore s(get_u32());
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto len = get_u32();
            need(len);
            std::string key(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
            pos += len;
            need(s.dim_ * sizeof(float));
            std::vector<float> v(s.dim_);
            std::memcpy(v.data(), bytes.data() + pos, s.dim_ * sizeof(float));
            pos += s.dim_ * sizeof(float);
            s.put(key, std::move(v));
        }
        if (pos != bytes.size()) throw DataError("text embedding store: trailing bytes");
        return s;
    }

    void save(const std::filesystem::path& path) const {
        const auto b = encode();
        write_file_bytes(path, std::string(b.begin(), b.end()));
    }
    static TextEmbeddingStore load(const std::filesystem::path& path) {
        const auto s = read_file_bytes(path);
        return decode(std::vector<std::uint8_t>(s.begin(), s.end()));
    }

  private:
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<float>> entries_;
};

/// Every road and POI description of the world.
inline std::vector<std::string> world_descriptions(const World& w) {
    std::vector<std::string> out;
    for (const auto& e : w.network.edges) out.push_back(e.description);
    for (const auto& p : w.pois) out.push_back(p.description);
    return out;
}

inline TextEmbeddingStore pseudo_embedding_store(const std::vector<std::string>& texts, std::size_t dim,
                                                 std::uint64_t seed = 0) {
    TextEmbeddingStore s(dim);
    for (const auto& t : texts)
        if (!s.contains(t)) s.put(t, pseudo_embed(t, dim, seed));
    return s;
}

}  // namespace trajmamba
