#pragma once

#include <filesystem>
#include <variant>

#include "vtseg/volume.hpp"

namespace vtseg {

// Supported NRRD subset: dimension 3, little-endian, types uint8/int16/float,
// encodings raw/gzip, axis-aligned space directions. Header fields outside
// this subset are carried through verbatim (VolumeMeta::extra_header).
enum class NrrdEncoding { raw, gzip };
enum class NrrdType { uint8, int16, float32 };

struct NrrdReadResult {
  std::variant<Volume, LabelMap> image;
  NrrdType stored_type = NrrdType::float32;
  NrrdEncoding encoding = NrrdEncoding::raw;
  // Set when the header declared neither `spacings` nor `space directions`;
  // spacing then defaults to (1,1,1) mm.
  bool spacing_defaulted = false;

  bool is_label() const { return std::holds_alternative<LabelMap>(image); }
  const VolumeMeta& meta() const {
    return is_label() ? std::get<LabelMap>(image).meta : std::get<Volume>(image).meta;
  }
};

// Reads a 3D NRRD file. uint8 payloads whose values are all in {0,1} load as
// LabelMap; everything else loads as Volume. Throws NrrdError with the
// offending header line on malformed or unsupported input.
NrrdReadResult read_nrrd(const std::filesystem::path& path);

// Convenience accessors that convert if needed. as_label throws unless the
// file satisfied the LabelMap detection rule.
Volume read_volume(const std::filesystem::path& path);
LabelMap read_label(const std::filesystem::path& path);

// Writes an NRRD file readable by read_nrrd and by standard NRRD consumers.
// For Volume the sample type defaults to float32; uint8/int16 may be requested
// and require every value to be exactly representable. LabelMap always writes
// uint8.
void write_nrrd(const Volume& v, const std::filesystem::path& path,
                NrrdEncoding encoding = NrrdEncoding::raw,
                NrrdType type = NrrdType::float32);
void write_nrrd(const LabelMap& m, const std::filesystem::path& path,
                NrrdEncoding encoding = NrrdEncoding::raw);

struct NrrdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vtseg
