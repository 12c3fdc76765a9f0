#pragma once

// Content-hash manifest of an output directory. Needs OpenSSL (libcrypto).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "fuse/errors.hpp"
#include "fuse/io.hpp"
#include "fuse/random.hpp"

namespace fuse {

inline constexpr const char* kManifestName = "manifest.json";

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

/// Lists every regular file under dir (except the manifest and temp files)
/// with its size and SHA-256, sorted by relative path.
inline nlohmann::json build_manifest(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), dir);
        if (rel == kManifestName || rel.extension() == ".tmp") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    nlohmann::json list = nlohmann::json::array();
    for (const auto& rel : files) {
        const std::string bytes = read_file(dir / rel);
        list.push_back({{"path", rel.generic_string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    }
    return {{"format_version", 1}, {"hash", "sha256"}, {"rng", kRngAlgorithm}, {"files", list}};
}

inline void write_manifest(const std::filesystem::path& dir) {
    write_file_atomic(dir / kManifestName, build_manifest(dir).dump(1) + "\n");
}

}  // namespace fuse
