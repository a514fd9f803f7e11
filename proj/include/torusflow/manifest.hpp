// Run manifests: configuration echo, artifact checksums, timings.
// Re-running a deterministic stage with the same manifest reproduces the
// same checksums.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "torusflow/serialize.hpp"

namespace torusflow {

inline constexpr const char* kVersion = "torusflow 0.1.0";

/// FNV-1a over a file's bytes.
inline std::uint64_t checksum_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

class RunManifest {
  public:
    RunManifest(std::string command, json config_echo, std::uint64_t seed)
        : command_(std::move(command)), config_(std::move(config_echo)), seed_(seed),
          start_(std::chrono::steady_clock::now()) {}

    /// Register an artifact already written inside the run directory.
    void add_artifact(const std::filesystem::path& file) {
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(checksum_file(file)));
        artifacts_.push_back({{"file", file.filename().string()}, {"fnv1a64", hex}});
    }

    void write(const std::filesystem::path& dir) const {
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                    start_).count();
        json j = {{"command", command_}, {"config", config_},   {"seed", seed_},
                  {"artifacts", artifacts_}, {"wall_seconds", wall}, {"version", kVersion},
                  {"schema", 1}};
        save_json(dir / "manifest.json", j);
    }

  private:
    std::string command_;
    json config_;
    std::uint64_t seed_;
    json artifacts_ = json::array();
    std::chrono::steady_clock::time_point start_;
};

}  // namespace torusflow
