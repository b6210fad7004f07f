#include "vtseg/manifest.hpp"

#include <fstream>
#include <stdexcept>

namespace vtseg {

std::string manifest_json(const Manifest& m) {
  nlohmann::json j;
  j["tool"] = m.tool;
  j["subcommand"] = m.subcommand;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["digest_algorithm"] = "sha256";
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [path, digest] : m.inputs) inputs[path] = digest;
  j["inputs"] = inputs;
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& [path, digest] : m.outputs) outputs[path] = digest;
  j["outputs"] = outputs;
  if (!m.details.is_null()) j["details"] = m.details;
  return j.dump(2) + "\n";
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + path.string());
  out << manifest_json(m);
  if (!out) throw std::runtime_error("failed writing manifest: " + path.string());
}

}  // namespace vtseg
