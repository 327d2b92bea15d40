#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusionloc/nn/tensor.hpp"

namespace fusionloc::nn {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
  DType dtype = DType::f64;
};

/// Flat binary archive of named arrays.
///
/// Layout (little endian): "FLARCHV1", u64 count, then per array
/// u32 name length, name bytes, u8 dtype, u32 rank, u64 dims[rank], payload.
class Archive {
 public:
  void put(std::string name, Shape shape, std::vector<double> values, DType dtype = DType::f64);
  void put(const std::string& name, const Tensor& tensor, DType dtype = DType::f64);

  const NamedArray* find(const std::string& name) const;
  /// Throws FormatError when absent.
  const NamedArray& at(const std::string& name) const;
  const std::vector<NamedArray>& arrays() const { return arrays_; }

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::vector<NamedArray> arrays_;
};

/// Copies `array` into `tensor` in place; shapes must match.
void assign(Tensor& tensor, const NamedArray& array);

}  // namespace fusionloc::nn
