#include "vtseg/nrrd.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "NRRD payloads are read/written assuming a little-endian host");

namespace vtseg {
namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t type_size(NrrdType t) {
  switch (t) {
    case NrrdType::uint8: return 1;
    case NrrdType::int16: return 2;
    case NrrdType::float32: return 4;
  }
  return 0;
}

const char* type_name(NrrdType t) {
  switch (t) {
    case NrrdType::uint8: return "uint8";
    case NrrdType::int16: return "short";
    case NrrdType::float32: return "float";
  }
  return "";
}

// Parses "(a,b,c)" into three doubles.
std::array<double, 3> parse_vec3(const std::string& tok, const std::string& line) {
  std::string t = trim(tok);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')')
    throw NrrdError("malformed vector in header line: " + line);
  std::array<double, 3> v{};
  std::string inner = t.substr(1, t.size() - 2);
  for (char& c : inner)
    if (c == ',') c = ' ';
  std::istringstream iss(inner);
  if (!(iss >> v[0] >> v[1] >> v[2]))
    throw NrrdError("malformed vector in header line: " + line);
  return v;
}

std::vector<unsigned char> gzip_decompress(const std::vector<unsigned char>& in,
                                           std::size_t expected) {
  std::vector<unsigned char> out(expected);
  z_stream zs{};
  // 15+32: accept both zlib and gzip wrappers.
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw NrrdError("zlib inflateInit failed");
  zs.next_in = const_cast<unsigned char*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  std::size_t produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && !(rc == Z_OK && produced == expected))
    throw NrrdError("payload length mismatch: gzip payload decodes to " +
                    std::to_string(produced) + " bytes, expected " + std::to_string(expected));
  if (produced != expected)
    throw NrrdError("payload length mismatch: gzip payload decodes to " +
                    std::to_string(produced) + " bytes, expected " + std::to_string(expected));
  return out;
}

std::vector<unsigned char> gzip_compress(const unsigned char* data, std::size_t n) {
  z_stream zs{};
  // Fixed level and gzip wrapper; zlib's default gzip header carries no
  // timestamp, so output bytes are reproducible.
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw NrrdError("zlib deflateInit failed");
  std::vector<unsigned char> out(deflateBound(&zs, static_cast<uLong>(n)));
  zs.next_in = const_cast<unsigned char*>(data);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  out.resize(out.size() - zs.avail_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw NrrdError("zlib deflate failed");
  return out;
}

struct Header {
  VolumeMeta meta;
  NrrdType type = NrrdType::float32;
  NrrdEncoding encoding = NrrdEncoding::raw;
  bool have_type = false, have_sizes = false, have_encoding = false;
  bool have_spacing = false, have_origin = false;
  bool big_endian = false;
};

Header parse_header(std::istream& in) {
  Header h;
  std::string line;
  if (!std::getline(in, line)) throw NrrdError("empty file");
  line = trim(line);
  if (line.rfind("NRRD000", 0) != 0)
    throw NrrdError("not an NRRD file (bad magic line: " + line + ")");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) return h;  // blank line ends the header
    if (line[0] == '#') {
      h.meta.extra_header.push_back(line);
      continue;
    }
    std::size_t kv = line.find(":=");
    std::size_t fs = line.find(':');
    if (kv != std::string::npos && kv == fs) {
      // key/value pair; carried through untouched
      h.meta.extra_header.push_back(line);
      continue;
    }
    if (fs == std::string::npos) throw NrrdError("malformed header line: " + line);
    std::string field = lower(trim(line.substr(0, fs)));
    std::string value = trim(line.substr(fs + 1));
    if (field == "dimension") {
      if (value != "3")
        throw NrrdError("unsupported dimension (only 3 supported): " + line);
    } else if (field == "sizes") {
      std::istringstream iss(value);
      long long n[3];
      if (!(iss >> n[0] >> n[1] >> n[2]) || n[0] < 1 || n[1] < 1 || n[2] < 1)
        throw NrrdError("malformed sizes field: " + line);
      std::string rest;
      if (iss >> rest) throw NrrdError("sizes must have exactly 3 entries: " + line);
      for (int a = 0; a < 3; ++a) h.meta.dims[a] = static_cast<std::size_t>(n[a]);
      h.have_sizes = true;
    } else if (field == "type") {
      std::string t = lower(value);
      if (t == "uint8" || t == "uchar" || t == "unsigned char")
        h.type = NrrdType::uint8;
      else if (t == "short" || t == "int16" || t == "signed short" || t == "int16_t")
        h.type = NrrdType::int16;
      else if (t == "float")
        h.type = NrrdType::float32;
      else
        throw NrrdError("unsupported type (uint8/int16/float supported): " + line);
      h.have_type = true;
    } else if (field == "encoding") {
      std::string e = lower(value);
      if (e == "raw")
        h.encoding = NrrdEncoding::raw;
      else if (e == "gzip" || e == "gz")
        h.encoding = NrrdEncoding::gzip;
      else
        throw NrrdError("unsupported encoding (raw/gzip supported): " + line);
      h.have_encoding = true;
    } else if (field == "endian") {
      h.big_endian = (lower(value) == "big");
      if (h.big_endian) throw NrrdError("unsupported endian (little only): " + line);
    } else if (field == "spacings") {
      std::istringstream iss(value);
      if (!(iss >> h.meta.spacing[0] >> h.meta.spacing[1] >> h.meta.spacing[2]))
        throw NrrdError("malformed spacings field: " + line);
      h.have_spacing = true;
    } else if (field == "space directions") {
      std::istringstream iss(value);
      std::string tok;
      int axis = 0;
      while (iss >> tok && axis < 3) {
        auto v = parse_vec3(tok, line);
        for (int c = 0; c < 3; ++c) {
          if (c == axis) continue;
          if (v[c] != 0.0)
            throw NrrdError("oblique space directions are not supported: " + line);
        }
        if (!(v[axis] > 0.0))
          throw NrrdError("space direction must be positive along its axis: " + line);
        h.meta.spacing[axis] = v[axis];
        ++axis;
      }
      if (axis != 3) throw NrrdError("space directions must have 3 vectors: " + line);
      h.have_spacing = true;
    } else if (field == "space origin") {
      h.meta.origin = parse_vec3(value, line);
      h.have_origin = true;
    } else if (field == "labels") {
      std::istringstream iss(value);
      std::string tok;
      int axis = 0;
      while (iss >> tok && axis < 3) {
        if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
          tok = tok.substr(1, tok.size() - 2);
        h.meta.axis_labels[axis++] = tok;
      }
    } else {
      h.meta.extra_header.push_back(line);
    }
  }
  throw NrrdError("header not terminated by a blank line");
}

}  // namespace

NrrdReadResult read_nrrd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NrrdError("cannot open file: " + path.string());
  Header h = parse_header(in);
  if (!h.have_sizes) throw NrrdError("missing required field: sizes");
  if (!h.have_type) throw NrrdError("missing required field: type");
  if (!h.have_encoding) throw NrrdError("missing required field: encoding");

  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
  const std::size_t n = h.meta.dims[0] * h.meta.dims[1] * h.meta.dims[2];
  const std::size_t want = n * type_size(h.type);
  if (h.encoding == NrrdEncoding::raw) {
    if (payload.size() != want)
      throw NrrdError("payload length mismatch: expected " + std::to_string(want) +
                      " bytes, got " + std::to_string(payload.size()));
  } else {
    payload = gzip_decompress(payload, want);
  }

  NrrdReadResult res;
  res.stored_type = h.type;
  res.encoding = h.encoding;
  res.spacing_defaulted = !h.have_spacing;

  if (h.type == NrrdType::uint8) {
    bool binary = true;
    for (unsigned char b : payload)
      if (b > 1) { binary = false; break; }
    if (binary) {
      res.image = LabelMap(h.meta, std::vector<std::uint8_t>(payload.begin(), payload.end()));
      return res;
    }
  }
  std::vector<float> data(n);
  switch (h.type) {
    case NrrdType::uint8:
      for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(payload[i]);
      break;
    case NrrdType::int16: {
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, payload.data() + 2 * i, 2);
        data[i] = static_cast<float>(v);
      }
      break;
    }
    case NrrdType::float32:
      std::memcpy(data.data(), payload.data(), n * 4);
      for (float v : data)
        if (!std::isfinite(v)) throw NrrdError("non-finite value in float payload");
      break;
  }
  res.image = Volume(h.meta, std::move(data));
  return res;
}

Volume read_volume(const std::filesystem::path& path) {
  NrrdReadResult r = read_nrrd(path);
  if (r.is_label()) {
    // promote binary data to a scalar field
    const LabelMap& m = std::get<LabelMap>(r.image);
    std::vector<float> d(m.data.begin(), m.data.end());
    return Volume(m.meta, std::move(d));
  }
  return std::get<Volume>(std::move(r.image));
}

LabelMap read_label(const std::filesystem::path& path) {
  NrrdReadResult r = read_nrrd(path);
  if (!r.is_label())
    throw NrrdError("expected a binary label map (uint8 with values in {0,1}): " +
                    path.string());
  return std::get<LabelMap>(std::move(r.image));
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const VolumeMeta& meta, const unsigned char* bytes, std::size_t nbytes,
                NrrdType type, NrrdEncoding encoding, const std::filesystem::path& path) {
  std::ostringstream head;
  head << "NRRD0004\n";
  head << "type: " << type_name(type) << "\n";
  head << "dimension: 3\n";
  head << "sizes: " << meta.dims[0] << " " << meta.dims[1] << " " << meta.dims[2] << "\n";
  head << "space directions: (" << fmt_double(meta.spacing[0]) << ",0,0) (0,"
       << fmt_double(meta.spacing[1]) << ",0) (0,0," << fmt_double(meta.spacing[2]) << ")\n";
  head << "space origin: (" << fmt_double(meta.origin[0]) << "," << fmt_double(meta.origin[1])
       << "," << fmt_double(meta.origin[2]) << ")\n";
  head << "labels: \"" << meta.axis_labels[0] << "\" \"" << meta.axis_labels[1] << "\" \""
       << meta.axis_labels[2] << "\"\n";
  if (type != NrrdType::uint8) head << "endian: little\n";
  head << "encoding: " << (encoding == NrrdEncoding::raw ? "raw" : "gzip") << "\n";
  for (const std::string& line : meta.extra_header) head << line << "\n";
  head << "\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NrrdError("cannot open file for writing: " + path.string());
  std::string hs = head.str();
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  if (encoding == NrrdEncoding::raw) {
    out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(nbytes));
  } else {
    auto z = gzip_compress(bytes, nbytes);
    out.write(reinterpret_cast<const char*>(z.data()), static_cast<std::streamsize>(z.size()));
  }
  if (!out) throw NrrdError("write failed: " + path.string());
}

}  // namespace

void write_nrrd(const Volume& v, const std::filesystem::path& path, NrrdEncoding encoding,
                NrrdType type) {
  v.validate();
  const std::size_t n = v.data.size();
  std::vector<unsigned char> bytes;
  switch (type) {
    case NrrdType::float32:
      bytes.resize(n * 4);
      std::memcpy(bytes.data(), v.data.data(), n * 4);
      break;
    case NrrdType::int16: {
      bytes.resize(n * 2);
      for (std::size_t i = 0; i < n; ++i) {
        float f = v.data[i];
        std::int16_t s = static_cast<std::int16_t>(f);
        if (static_cast<float>(s) != f)
          throw NrrdError("value " + std::to_string(f) + " is not representable as int16");
        std::memcpy(bytes.data() + 2 * i, &s, 2);
      }
      break;
    }
    case NrrdType::uint8: {
      bytes.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f = v.data[i];
        if (f < 0.f || f > 255.f || static_cast<float>(static_cast<unsigned>(f)) != f)
          throw NrrdError("value " + std::to_string(f) + " is not representable as uint8");
        bytes[i] = static_cast<unsigned char>(f);
      }
      break;
    }
  }
  write_file(v.meta, bytes.data(), bytes.size(), type, encoding, path);
}

void write_nrrd(const LabelMap& m, const std::filesystem::path& path, NrrdEncoding encoding) {
  m.validate();
  write_file(m.meta, m.data.data(), m.data.size(), NrrdType::uint8, encoding, path);
}

}  // namespace vtseg
