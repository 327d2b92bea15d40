#include "fusionloc/nn/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "fusionloc/error.hpp"

namespace fusionloc::nn {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little endian");

namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'R', 'C', 'H', 'V', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("truncated archive " + path.string());
  }
  return value;
}

}  // namespace

void Archive::put(std::string name, Shape shape, std::vector<double> values, DType dtype) {
  if (numel(shape) != values.size()) {
    throw ArgumentError("archive entry " + name + ": shape does not match value count");
  }
  auto it = std::find_if(arrays_.begin(), arrays_.end(),
                         [&](const NamedArray& a) { return a.name == name; });
  NamedArray entry{std::move(name), std::move(shape), std::move(values), dtype};
  if (it != arrays_.end()) {
    *it = std::move(entry);
  } else {
    arrays_.push_back(std::move(entry));
  }
}

void Archive::put(const std::string& name, const Tensor& tensor, DType dtype) {
  put(name, tensor.shape(), {tensor.data().begin(), tensor.data().end()}, dtype);
}

const NamedArray* Archive::find(const std::string& name) const {
  auto it = std::find_if(arrays_.begin(), arrays_.end(),
                         [&](const NamedArray& a) { return a.name == name; });
  return it == arrays_.end() ? nullptr : &*it;
}

const NamedArray& Archive::at(const std::string& name) const {
  if (const auto* a = find(name)) return *a;
  throw FormatError("archive has no array named '" + name + "'");
}

void Archive::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write archive " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(os, arrays_.size());
  for (const auto& a : arrays_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) write_pod<std::uint64_t>(os, d);
    if (a.dtype == DType::f64) {
      os.write(reinterpret_cast<const char*>(a.values.data()),
               static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    } else {
      for (double v : a.values) write_pod<float>(os, static_cast<float>(v));
    }
  }
  if (!os) throw IoError("failed writing archive " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open archive " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not an archive: " + path.string());
  }
  Archive archive;
  const auto count = read_pod<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto name_len = read_pod<std::uint32_t>(is, path);
    a.name.resize(name_len);
    if (!is.read(a.name.data(), name_len)) throw FormatError("truncated archive " + path.string());
    const auto dtype = read_pod<std::uint8_t>(is, path);
    if (dtype > 1) throw FormatError("unknown dtype in archive " + path.string());
    a.dtype = static_cast<DType>(dtype);
    const auto rank = read_pod<std::uint32_t>(is, path);
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(is, path)));
    }
    a.values.resize(numel(a.shape));
    if (a.dtype == DType::f64) {
      if (!is.read(reinterpret_cast<char*>(a.values.data()),
                   static_cast<std::streamsize>(a.values.size() * sizeof(double)))) {
        throw FormatError("truncated archive " + path.string());
      }
    } else {
      for (auto& v : a.values) v = read_pod<float>(is, path);
    }
    archive.arrays_.push_back(std::move(a));
  }
  return archive;
}

void assign(Tensor& tensor, const NamedArray& array) {
  if (tensor.shape() != array.shape) {
    throw FormatError("array '" + array.name + "' has shape " + shape_str(array.shape) +
                      ", expected " + shape_str(tensor.shape()));
  }
  std::copy(array.values.begin(), array.values.end(), tensor.data().begin());
}

}  // namespace fusionloc::nn
