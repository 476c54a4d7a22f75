#pragma once

// Client for a remote text-embedding service.
//   request:  POST {"input": [text, ...], "dim": d}
//   response: {"vectors": [[f, ...], ...]}
// Endpoint URL and bearer token come from EMBED_ENDPOINT and EMBED_TOKEN
// unless given explicitly.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <chrono>
#include <cstdlib>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "trajmamba/views/text_store.hpp"

namespace trajmamba {

struct RemoteError : DataError {
    int status;  // HTTP status, or -1 when no response arrived
    RemoteError(const std::string& msg, int st) : DataError(msg), status(st) {}
};

struct RemoteEmbedConfig {
    std::string endpoint;  // scheme://host[:port]/path
    std::string token;
    std::size_t dim = 256;
    std::size_t batch_size = 64;
    int max_attempts = 4;
    std::chrono::milliseconds backoff{250};  // doubled after each failed attempt
    std::chrono::seconds timeout{30};

    static RemoteEmbedConfig from_env() {
        RemoteEmbedConfig c;
        if (const char* e = std::getenv("EMBED_ENDPOINT")) c.endpoint = e;
        if (const char* t = std::getenv("EMBED_TOKEN")) c.token = t;
        return c;
    }
};

namespace remote_detail {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline Url parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw UsageError("embedding endpoint is not an http(s) URL: '" + url + "'");
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

inline std::vector<std::vector<float>> post_batch(httplib::Client& cli, const std::string& path,
                                                  const RemoteEmbedConfig& cfg,
                                                  const std::vector<std::string>& texts) {
    const std::string body = nlohmann::json{{"input", texts}, {"dim", cfg.dim}}.dump();
    httplib::Headers headers;
    if (!cfg.token.empty()) headers.emplace("Authorization", "Bearer " + cfg.token);
    int last_status = -1;
    std::string last_error;
    auto wait = cfg.backoff;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        auto res = cli.Post(path, headers, body, "application/json");
        if (res && res->status == 200) {
            try {
                auto j = nlohmann::json::parse(res->body);
                auto vecs = j.at("vectors").get<std::vector<std::vector<float>>>();
                if (vecs.size() != texts.size())
                    throw RemoteError("embedding service returned " + std::to_string(vecs.size()) + " vectors for " +
                                          std::to_string(texts.size()) + " inputs",
                                      res->status);
                return vecs;
            } catch (const nlohmann::json::exception& e) {
                throw RemoteError(std::string("embedding service sent malformed JSON: ") + e.what(), res->status);
            }
        }
        if (res) {
            last_status = res->status;
            last_error = "HTTP " + std::to_string(res->status);
            // Client errors other than throttling will not improve on retry.
            if (res->status >= 400 && res->status < 500 && res->status != 429) break;
        } else {
            last_error = httplib::to_string(res.error());
        }
        if (attempt < cfg.max_attempts) {
            std::this_thread::sleep_for(wait);
            wait *= 2;
        }
    }
    throw RemoteError("embedding request failed after retries: " + last_error, last_status);
}

}  // namespace remote_detail

/// Fetches embeddings for every text missing from the cache file, in batches,
/// and rewrites the cache. Returns the merged store.
inline TextEmbeddingStore fetch_remote_embeddings(const RemoteEmbedConfig& cfg, const std::vector<std::string>& texts,
                                                  const std::filesystem::path& cache_path) {
    if (cfg.endpoint.empty()) throw UsageError("no embedding endpoint configured (set EMBED_ENDPOINT)");
    if (cfg.batch_size == 0 || cfg.max_attempts < 1) throw UsageError("remote embedding: bad batch/attempt settings");
    TextEmbeddingStore store(cfg.dim);
    if (std::filesystem::exists(cache_path)) {
        store = TextEmbeddingStore::load(cache_path);
        if (store.dim() != cfg.dim)
            throw DataError("embedding cache " + cache_path.string() + " has dim " + std::to_string(store.dim()) +
                            ", requested " + std::to_string(cfg.dim));
    }
    std::vector<std::string> missing;
    for (const auto& t : texts)
        if (!store.contains(t) && std::find(missing.begin(), missing.end(), t) == missing.end()) missing.push_back(t);
    if (missing.empty()) return store;

    const auto url = remote_detail::parse_url(cfg.endpoint);
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(cfg.timeout);
    cli.set_read_timeout(cfg.timeout);
    for (std::size_t i = 0; i < missing.size(); i += cfg.batch_size) {
        std::vector<std::string> batch(missing.begin() + static_cast<std::ptrdiff_t>(i),
                                       missing.begin() + static_cast<std::ptrdiff_t>(std::min(missing.size(), i + cfg.batch_size)));
        auto vecs = remote_detail::post_batch(cli, url.path, cfg, batch);
        for (std::size_t k = 0; k < batch.size(); ++k) store.put(batch[k], std::move(vecs[k]));
        store.save(cache_path);  // persist progress batch by batch
    }
    return store;
}

}  // namespace trajmamba
