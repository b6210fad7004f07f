#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

namespace vtseg {

// SHA-256 digests rendered as 64 lowercase hex characters. These are the
// digests recorded in provenance manifests; the algorithm is part of the
// manifest contract, so consumers can re-verify artifacts with any standard
// SHA-256 tool (e.g. `sha256sum`).
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& data);

// Streams the file in fixed-size chunks; throws std::runtime_error when the
// file cannot be opened or read.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace vtseg
