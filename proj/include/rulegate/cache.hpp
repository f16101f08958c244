#pragma once

// Content-addressed gate store: <hash>.gate holds the parameter blob (with its own
// checksum), <hash>.json is a human-readable manifest.

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>

#include "rulegate/hash.hpp"
#include "rulegate/neural.hpp"
#include "rulegate/rulegraph.hpp"

namespace rulegate {

struct CacheKey {
    std::string key;   // full lineage string
    std::string hash;  // 32 hex chars of SHA-256(key)
    Lineage lineage;
};

inline CacheKey make_cache_key(const RuleGraph& g, int node, const std::string& fp, const std::string& arch, int F) {
    Lineage lin{fp, arch, F};
    std::string k = subtree_key(g, node, lin);
    std::string h = sha256_hex(k, 32);
    return {std::move(k), std::move(h), std::move(lin)};
}

class CacheCorrupt : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kManifestVersion = 1;

class GateCache {
public:
    explicit GateCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path gate_path(const CacheKey& k) const { return dir_ / (k.hash + ".gate"); }
    std::filesystem::path manifest_path(const CacheKey& k) const { return dir_ / (k.hash + ".json"); }

    bool contains(const CacheKey& k) const { return std::filesystem::exists(gate_path(k)); }

    void store(const CacheKey& k, const Mlp& gate) {
        const std::string blob = serialize_mlp(gate);
        nlohmann::json manifest = {{"schema", "rulegate-gate-manifest"},
                                   {"version", kManifestVersion},
                                   {"key", k.key},
                                   {"hash", k.hash},
                                   {"created_at", now_utc()},
                                   {"arch", k.lineage.arch},
                                   {"feature_dim", k.lineage.feature_dim},
                                   {"encoder_fp", k.lineage.encoder_fp},
                                   {"blob_sha256", sha256_hex(blob)}};
        std::lock_guard<std::mutex> lock(write_mu_);
        write_atomic(gate_path(k), blob);
        write_atomic(manifest_path(k), manifest.dump(1) + "\n");
        ++stores_;
    }

    /// Absent keys give nullopt; damaged files throw CacheCorrupt.
    std::optional<Mlp> load(const CacheKey& k) const {
        std::ifstream f(gate_path(k), std::ios::binary);
        if (!f) {
            ++misses_;
            return std::nullopt;
        }
        std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        if (std::ifstream mf(manifest_path(k)); mf) {
            nlohmann::json m;
            try {
                m = nlohmann::json::parse(mf);
            } catch (const std::exception& e) {
                throw CacheCorrupt("manifest unreadable for " + k.hash + ": " + e.what());
            }
            if (m.value("key", "") != k.key) throw CacheCorrupt("key mismatch for " + k.hash);
        }
        try {
            Mlp gate = deserialize_mlp(blob);
            ++hits_;
            return gate;
        } catch (const std::exception& e) {
            throw CacheCorrupt("gate " + k.hash + ": " + e.what());
        }
    }

    long hits() const { return hits_; }
    long misses() const { return misses_; }
    long stores() const { return stores_; }

private:
    static std::string now_utc() {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        std::ostringstream os;
        os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
        return os.str();
    }

    void write_atomic(const std::filesystem::path& dest, const std::string& data) {
        auto tmp = dest;
        tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(tmp_counter_++);
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + tmp.string());
            f.write(data.data(), static_cast<std::streamsize>(data.size()));
            if (!f) throw std::runtime_error("write failed: " + tmp.string());
        }
        std::filesystem::rename(tmp, dest);
    }

    std::filesystem::path dir_;
    std::mutex write_mu_;
    long tmp_counter_ = 0;
    mutable std::atomic<long> hits_{0}, misses_{0};
    std::atomic<long> stores_{0};
};

}  // namespace rulegate
