#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet::cli {
namespace {

std::string hex(const unsigned char* data, unsigned int n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < n; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 0xf];
  }
  return out;
}

std::string sha256_bytes(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int n = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md.data(), &n, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  return hex(md.data(), n);
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || !EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr)) throw std::runtime_error("sha256 init failed");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int n = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &n);
  return hex(md.data(), n);
}

std::string sha256_path(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return sha256_file(path);
  std::vector<std::string> lines;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    lines.push_back(std::filesystem::relative(entry.path(), path).generic_string() + " " +
                    sha256_file(entry.path()));
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  return sha256_bytes(joined);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["subcommand"] = subcommand;
  doc["version"] = version;
  doc["config"] = config;
  doc["seeds"] = seeds;
  doc["inputs"] = inputs;
  doc["outputs"] = outputs;
  doc["wall_clock_seconds"] = wall_clock_seconds;
  doc["exit_code"] = exit_code;
  if (!error.empty()) doc["error"] = error;
  return doc.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest " + tmp.string());
    out << to_json();
    if (!out.flush()) throw DataError("cannot write manifest " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fet::cli
