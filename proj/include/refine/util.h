// Copyright 2026 The Refine Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REFINE_UTIL_H_
#define REFINE_UTIL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace refine {

// Error hierarchy. The CLI maps each family onto a process exit code:
// validation/usage/format -> 1, provider -> 2, I/O -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record or argument violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A malformed line in a line-oriented input. `line` is 1-based.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Bad command-line or configuration usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind { kBadMagic, kVersion, kTruncated, kChecksum, kCorrupt };

// A binary file that cannot be decoded.
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

// SplitMix64 (Steele, Lea & Flood 2014). Every seeded decision in the
// pipeline (splits, k-means++ seeding, cluster sampling, retry jitter) draws
// from this generator so results are reproducible across platforms and
// standard library implementations. std::shuffle and the std distributions
// are implementation-defined and are not used for that reason.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t Next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound) by rejection of the biased tail.
  std::uint64_t Below(std::uint64_t bound);

  // Uniform double in [0, 1) built from the top 53 bits.
  double NextDouble() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates from the last index down, j = Below(i + 1).
template <typename T>
void SeededShuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.Below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// Lowercase hex SHA-256 of `data`.
std::string Sha256Hex(std::string_view data);

std::uint32_t Crc32(std::span<const std::uint8_t> bytes);

std::string Base64Encode(std::string_view bytes);
// Throws ValidationError on malformed input.
std::string Base64Decode(std::string_view text);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

std::string Trim(std::string_view s);
std::string ToUpper(std::string_view s);
std::string ToLower(std::string_view s);
// Number of UTF-8 code points; continuation bytes are not counted.
std::size_t Utf8Length(std::string_view s);
// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> SplitLines(std::string_view text);

// Diagnostics go to stderr; SetQuiet(true) silences info/warning lines.
void SetQuiet(bool quiet);
void LogInfo(const std::string& message);
void LogWarning(const std::string& message);

}  // namespace refine

#endif  // REFINE_UTIL_H_
