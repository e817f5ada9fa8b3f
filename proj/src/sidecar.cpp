#include "mccl/sidecar.hpp"

#include "mccl/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mccl {
namespace {

constexpr char kMagic[8] = {'M', 'C', 'C', 'L', 'S', 'C', '0', '1'};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::i32: return 4;
    case DType::u8: return 1;
    case DType::f64: return 8;
  }
  throw DataError("sidecar: unknown dtype");
}

// Byte-swaps every element in place on big-endian hosts; no-op otherwise.
void to_little_endian(std::vector<std::uint8_t>& bytes, std::size_t elem) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k + elem <= bytes.size(); k += elem) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(k),
                   bytes.begin() + static_cast<std::ptrdiff_t>(k + elem));
    }
  } else {
    (void)bytes;
    (void)elem;
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::vector<std::uint8_t> b(sizeof(T));
  std::memcpy(b.data(), &value, sizeof(T));
  to_little_endian(b, sizeof(T));
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  std::vector<std::uint8_t> b(sizeof(T));
  if (!in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()))) {
    throw DataError("sidecar: truncated while reading " + what);
  }
  to_little_endian(b, sizeof(T));
  T value;
  std::memcpy(&value, b.data(), sizeof(T));
  return value;
}

template <typename T>
std::vector<T> decode(const SidecarEntry& e, DType expected, const std::string& name) {
  if (e.dtype != expected) throw DataError("sidecar: entry '" + name + "' has unexpected dtype");
  std::vector<std::uint8_t> bytes = e.bytes;
  to_little_endian(bytes, sizeof(T));
  std::vector<T> out(e.element_count());
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace

std::uint64_t SidecarEntry::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void Sidecar::put(const std::string& name, DType dtype, std::vector<std::uint64_t> dims,
                  const void* data, std::size_t elem_size) {
  SidecarEntry e;
  e.dtype = dtype;
  e.dims = std::move(dims);
  const std::size_t n = static_cast<std::size_t>(e.element_count());
  e.bytes.resize(n * elem_size);
  if (n > 0) std::memcpy(e.bytes.data(), data, n * elem_size);
  to_little_endian(e.bytes, elem_size);
  if (entries_.find(name) == entries_.end()) order_.push_back(name);
  entries_[name] = std::move(e);
}

void Sidecar::put_f32(const std::string& name, std::vector<std::uint64_t> dims, const float* data) {
  put(name, DType::f32, std::move(dims), data, 4);
}
void Sidecar::put_f64(const std::string& name, std::vector<std::uint64_t> dims, const double* data) {
  put(name, DType::f64, std::move(dims), data, 8);
}
void Sidecar::put_i32(const std::string& name, std::vector<std::uint64_t> dims,
                      const std::int32_t* data) {
  put(name, DType::i32, std::move(dims), data, 4);
}
void Sidecar::put_i32(const std::string& name, const std::vector<std::int32_t>& values) {
  put_i32(name, {values.size()}, values.data());
}
void Sidecar::put_f32(const std::string& name, const std::vector<float>& values) {
  put_f32(name, {values.size()}, values.data());
}
void Sidecar::put_scalar(const std::string& name, std::int32_t value) {
  put_i32(name, {}, &value);
}

bool Sidecar::contains(const std::string& name) const { return entries_.count(name) > 0; }

const SidecarEntry& Sidecar::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("sidecar: missing entry '" + name + "'");
  return it->second;
}

std::vector<float> Sidecar::get_f32(const std::string& name) const {
  return decode<float>(at(name), DType::f32, name);
}
std::vector<double> Sidecar::get_f64(const std::string& name) const {
  return decode<double>(at(name), DType::f64, name);
}
std::vector<std::int32_t> Sidecar::get_i32(const std::string& name) const {
  return decode<std::int32_t>(at(name), DType::i32, name);
}
std::int32_t Sidecar::get_scalar(const std::string& name) const {
  auto v = get_i32(name);
  if (v.size() != 1) throw DataError("sidecar: entry '" + name + "' is not a scalar");
  return v[0];
}

void Sidecar::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("sidecar: cannot open for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const auto& e = entries_.at(name);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) write_le<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
  }
  if (!out) throw DataError("sidecar: write failed: " + path.string());
}

Sidecar Sidecar::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingPathError(path.string());
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("sidecar: bad magic in " + path.string());
  }
  Sidecar sc;
  const auto count = read_le<std::uint32_t>(in, "entry count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = read_le<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("sidecar: truncated name");
    SidecarEntry e;
    const auto raw_dtype = read_le<std::uint8_t>(in, "dtype");
    if (raw_dtype > 3) throw DataError("sidecar: unknown dtype in entry '" + name + "'");
    e.dtype = static_cast<DType>(raw_dtype);
    const auto rank = read_le<std::uint32_t>(in, "rank");
    e.dims.resize(rank);
    for (auto& d : e.dims) d = read_le<std::uint64_t>(in, "dims");
    e.bytes.resize(static_cast<std::size_t>(e.element_count()) * dtype_size(e.dtype));
    if (!e.bytes.empty() &&
        !in.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()))) {
      throw DataError("sidecar: truncated payload in entry '" + name + "'");
    }
    sc.order_.push_back(name);
    sc.entries_[name] = std::move(e);
  }
  return sc;
}

}  // namespace mccl
