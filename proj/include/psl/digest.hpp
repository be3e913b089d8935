// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psl {

/// Incremental 64-bit FNV-1a.
class Fnv1a64 {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  void update(std::span<const double> values);
  void update_u64(std::uint64_t v);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Incremental SHA-256 (OpenSSL-backed). Hex digest is lowercase.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::byte> bytes);
  void update(std::span<const double> values);
  void update(std::string_view text);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string hex_u64(std::uint64_t v);

}  // namespace psl
