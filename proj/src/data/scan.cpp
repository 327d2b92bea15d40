#include "fusionloc/data/scan.hpp"

#include <algorithm>
#include <numeric>

#include "fusionloc/error.hpp"

namespace fusionloc::data {

std::vector<double> sample_scan(std::span<const core::Vec2> scan, std::size_t n_fixed, Mode mode,
                                Rng& rng) {
  if (scan.empty()) throw DegenerateInputError("sample_scan: empty scan");
  if (n_fixed == 0) throw ArgumentError("sample_scan: n_fixed must be positive");
  const std::size_t len = scan.size();
  std::vector<std::size_t> idx;
  idx.reserve(n_fixed);
  if (len >= n_fixed) {
    if (mode == Mode::eval) {
      for (std::size_t i = 0; i < n_fixed; ++i) idx.push_back(i * len / n_fixed);
    } else {
      std::vector<std::size_t> all(len);
      std::iota(all.begin(), all.end(), 0);
      std::sample(all.begin(), all.end(), std::back_inserter(idx), n_fixed, rng);
    }
  } else {
    idx.resize(len);
    std::iota(idx.begin(), idx.end(), 0);
    std::uniform_int_distribution<std::size_t> pick(0, len - 1);
    for (std::size_t i = len; i < n_fixed; ++i) idx.push_back(mode == Mode::eval ? i % len : pick(rng));
  }
  std::vector<double> out(2 * n_fixed);
  for (std::size_t i = 0; i < n_fixed; ++i) {
    out[2 * i] = scan[idx[i]][0];
    out[2 * i + 1] = scan[idx[i]][1];
  }
  return out;
}

}  // namespace fusionloc::data
