#pragma once

// Binary sidecar container shared by checkpoints, sampler maps and patch
// indices. Layout (all integers little-endian):
//
//   magic   8 bytes  "MCCLSC01"
//   count   u32      number of entries
//   entry*  count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     dtype    u8   (0 = f32, 1 = i32, 2 = u8, 3 = f64)
//     rank     u32
//     dims     u64 * rank
//     payload  product(dims) * sizeof(dtype) bytes
//
// Entries are written in insertion order; names are unique.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mccl {

enum class DType : std::uint8_t { f32 = 0, i32 = 1, u8 = 2, f64 = 3 };

struct SidecarEntry {
  DType dtype = DType::f32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;
};

class Sidecar {
public:
  void put_f32(const std::string& name, std::vector<std::uint64_t> dims, const float* data);
  void put_f64(const std::string& name, std::vector<std::uint64_t> dims, const double* data);
  void put_i32(const std::string& name, std::vector<std::uint64_t> dims, const std::int32_t* data);
  void put_i32(const std::string& name, const std::vector<std::int32_t>& values);
  void put_f32(const std::string& name, const std::vector<float>& values);
  void put_scalar(const std::string& name, std::int32_t value);

  bool contains(const std::string& name) const;
  const SidecarEntry& at(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::int32_t> get_i32(const std::string& name) const;
  std::int32_t get_scalar(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  void save(const std::filesystem::path& path) const;
  static Sidecar load(const std::filesystem::path& path);

private:
  void put(const std::string& name, DType dtype, std::vector<std::uint64_t> dims, const void* data,
           std::size_t elem_size);

  std::map<std::string, SidecarEntry> entries_;
  std::vector<std::string> order_;
};

}  // namespace mccl
