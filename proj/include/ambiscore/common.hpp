#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

namespace ambiscore {

using json = nlohmann::json;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input bytes (JSON syntax, binary index corruption).
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t offset = 0)
      : Error(msg), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Contract violation on otherwise well-formed data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Request rejected before or by the endpoint (non-retryable).
class RequestError : public Error {
 public:
  using Error::Error;
};

// Exhausted retries; carries the per-attempt log.
class TransportError : public Error {
 public:
  TransportError(const std::string& msg, std::vector<std::string> attempts)
      : Error(msg), attempts_(std::move(attempts)) {}
  const std::vector<std::string>& attempts() const { return attempts_; }

 private:
  std::vector<std::string> attempts_;
};

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline bool contains_case_insensitive(std::string_view haystack,
                                      std::string_view needle) {
  if (needle.empty()) return false;
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

// Shared rounding convention for every score-producing path: half away
// from zero. Scores are positive, so this equals half-up.
inline int round_half_away(double x) {
  return static_cast<int>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

inline double clamp_score(double x) { return std::clamp(x, 1.0, 5.0); }

inline int round_score(double x) {
  return std::clamp(round_half_away(x), 1, 5);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("sha256: EVP_MD_CTX_new failed");
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// Canonical serialization: nlohmann's default json type keeps object keys
// sorted, and dump() emits no insignificant whitespace. Digest inputs and
// persisted artifacts both go through this.
inline std::string canonical_dump(const json& j) { return j.dump(); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-to-temp then rename, so concurrent readers never observe a
// partial file. Temp names are unique per process and call.
inline void atomic_write_file(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t process_tag = [] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }();
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(process_tag ^ counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string format_real(double x) {
  std::ostringstream ss;
  ss << x;
  return ss.str();
}

// One turn of a chat-format conversation; also the message unit of SFT
// exports.
struct ChatMessage {
  std::string role;
  std::string text;
};

}  // namespace ambiscore
