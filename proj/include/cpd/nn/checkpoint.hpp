#pragma once

#include "cpd/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

namespace cpd::nn {

// Versioned binary container; byte layout in docs/FORMATS.md. All integers and
// floats are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::uint64_t config_digest = 0;
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> stats;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Raises ErrorKind::MissingCheckpoint when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::map<std::string, Tensor> params_of(const ParamStore& store);
ParamStore store_of(const std::map<std::string, Tensor>& params);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
// Digest over tensor names, shapes and exact fp64 bit patterns.
std::uint64_t digest_tensors(const std::map<std::string, Tensor>& tensors);
std::string hex64(std::uint64_t v);

}  // namespace cpd::nn
