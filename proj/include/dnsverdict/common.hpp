// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dnsverdict {

// Thrown when an input file violates its documented schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a caller breaks a documented precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> data);
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

std::string hex_encode(std::span<const std::uint8_t> data);

std::string ascii_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Replaces invalid UTF-8 bytes with U+FFFD so arbitrary page bytes can be
// carried in JSON string fields.
std::string utf8_lossy(std::span<const std::uint8_t> data);
std::string utf8_lossy(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// splitmix64. Deterministic across platforms, unlike the std distributions;
// every consumer that must reproduce byte-identical output draws from this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n) by rejection, n > 0.
  std::uint64_t next_below(std::uint64_t n);

  void fill(std::span<std::uint8_t> out);

  // Child generator with an independent stream.
  Rng fork(std::uint64_t salt) { return Rng(next() ^ (salt * 0xda942042e4dd58b5ULL)); }

 private:
  std::uint64_t state_;
};

}  // namespace dnsverdict
