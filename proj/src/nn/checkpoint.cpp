#include "cpd/nn/checkpoint.hpp"

#include "cpd/error.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cpd::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'P', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(buf.data(), buf.size());
}

void put_f64(std::ostream& os, double d) { put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d)); }

void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensors(std::ostream& os, const std::map<std::string, Tensor>& ts) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ts.size()));
  for (const auto& [name, t] : ts) {
    put_string(os, name);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
    for (double v : t.values()) put_f64(os, v);
  }
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> buf;
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  require(static_cast<bool>(is), ErrorKind::MalformedFile, "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string get_string(std::istream& is) {
  const auto n = get_le<std::uint32_t>(is);
  require(n < (1u << 24), ErrorKind::MalformedFile, "checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  require(static_cast<bool>(is), ErrorKind::MalformedFile, "checkpoint: truncated string");
  return s;
}

std::map<std::string, Tensor> get_tensors(std::istream& is) {
  std::map<std::string, Tensor> out;
  const auto count = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    const auto ndim = get_le<std::uint32_t>(is);
    require(ndim <= 8, ErrorKind::MalformedFile, "checkpoint: too many dimensions for '" + name + "'");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    const std::size_t n = shape_product(shape);
    require(n < (1ull << 32), ErrorKind::MalformedFile, "checkpoint: implausible tensor size");
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, ck.format_version);
  put_le<std::uint64_t>(os, ck.config_digest);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.metadata.size()));
  for (const auto& [k, v] : ck.metadata) {
    put_string(os, k);
    put_string(os, v);
  }
  put_tensors(os, ck.params);
  put_tensors(os, ck.stats);
}

Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  require(static_cast<bool>(is) && magic == kMagic, ErrorKind::MalformedFile, "checkpoint: bad magic");
  Checkpoint ck;
  ck.format_version = get_le<std::uint32_t>(is);
  require(ck.format_version == Checkpoint::kFormatVersion, ErrorKind::MalformedFile,
          "checkpoint: unsupported format version " + std::to_string(ck.format_version));
  ck.config_digest = get_le<std::uint64_t>(is);
  const auto nmeta = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = get_string(is);
    ck.metadata[k] = get_string(is);
  }
  ck.params = get_tensors(is);
  ck.stats = get_tensors(is);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::InvalidArgument, "cannot write checkpoint " + path.string());
  write_checkpoint(os, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::MissingCheckpoint, "missing checkpoint: " + path.string());
  return read_checkpoint(is);
}

std::map<std::string, Tensor> params_of(const ParamStore& store) { return store.params(); }

ParamStore store_of(const std::map<std::string, Tensor>& params) {
  ParamStore s;
  for (const auto& [k, t] : params) s.add(k, t);
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t digest_tensors(const std::map<std::string, Tensor>& tensors) {
  std::uint64_t h = fnv1a64("tensors");
  for (const auto& [name, t] : tensors) {
    h = fnv1a64(name, h);
    for (auto d : t.shape()) {
      const auto dd = static_cast<std::uint64_t>(d);
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&dd), sizeof dd), h);
    }
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace cpd::nn
