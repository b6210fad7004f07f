#include "vtseg/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace vtseg {

namespace {

std::string to_hex(const unsigned char* digest, unsigned int len) {
  static const char* kHex = "0123456789abcdef";
  std::string out(static_cast<std::size_t>(len) * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xf];
  }
  return out;
}

struct CtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;

CtxPtr make_sha256_ctx() {
  CtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: failed to initialize digest context");
  }
  return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1) {
    throw std::runtime_error("sha256: failed to finalize digest");
  }
  return to_hex(digest.data(), len);
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  auto ctx = make_sha256_ctx();
  if (size > 0 && EVP_DigestUpdate(ctx.get(), data, size) != 1) {
    throw std::runtime_error("sha256: digest update failed");
  }
  return finish(ctx.get());
}

std::string sha256_hex(const std::string& data) { return sha256_hex(data.data(), data.size()); }

std::string sha256_file_hex(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.string().c_str(), "rb"),
                                                       &std::fclose);
  if (!file) {
    throw std::runtime_error("sha256: cannot open file: " + path.string());
  }
  auto ctx = make_sha256_ctx();
  std::vector<unsigned char> buffer(1 << 16);
  for (;;) {
    std::size_t got = std::fread(buffer.data(), 1, buffer.size(), file.get());
    if (got > 0 && EVP_DigestUpdate(ctx.get(), buffer.data(), got) != 1) {
      throw std::runtime_error("sha256: digest update failed");
    }
    if (got < buffer.size()) {
      if (std::ferror(file.get())) {
        throw std::runtime_error("sha256: read error on file: " + path.string());
      }
      break;
    }
  }
  return finish(ctx.get());
}

}  // namespace vtseg
