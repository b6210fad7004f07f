#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace vtseg {

// Provenance record written next to every run's outputs. It captures what is
// needed to reproduce the artifacts byte for byte: the tool version, the
// subcommand, the effective configuration, the seed, and SHA-256 digests of
// every consumed input and produced output.
//
// Two fields of the effective configuration are normalized in the snapshot:
// the worker count is recorded as 1 and the output directory as "" — both are
// execution details that never influence artifact bytes, so runs of the same
// work unit produce identical manifests regardless of parallelism or where
// their outputs land.
struct Manifest {
  std::string tool;        // "<name> <version>"
  std::string subcommand;  // the subcommand that ran
  std::uint64_t seed = 0;  // the global stream seed
  std::string config;      // canonical config snapshot (print_config output)
  // (path as referenced, hex digest); duplicates collapse in the rendering.
  std::vector<std::pair<std::string, std::string>> inputs;
  // (path relative to the output directory, hex digest)
  std::vector<std::pair<std::string, std::string>> outputs;
  // Subcommand-specific extras (drawn augmentation parameters, consensus
  // statistics, ...); omitted from the rendering when null.
  nlohmann::json details;
};

// Deterministic rendering: JSON with lexicographically sorted keys, two-space
// indentation, and a trailing newline. The digest algorithm is recorded
// explicitly ("digest_algorithm": "sha256").
std::string manifest_json(const Manifest& m);

void write_manifest(const Manifest& m, const std::filesystem::path& path);

}  // namespace vtseg
