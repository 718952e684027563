#pragma once

// Binary spatial feature extraction over 0-1 vectors and matrices.
//
// The 1d extractor summarises a binary vector with five descriptors:
// element count, group count, longest run, and the largest and smallest
// distance between set positions. The 2d extractor combines them along two
// paths per axis:
//   reduction-then-aggregation  per-row descriptors, pooled column-wise
//   aggregation-then-reduction  column-wise max pool, then descriptors
// and concatenates the row-level and column-level results. Matrices are kept
// as coordinate sets so bank-sized shapes (1e5 x 1e3) stay cheap.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "m2mfp/common.hpp"

namespace m2mfp {

inline constexpr std::size_t kDescriptorCount = 5;

inline constexpr std::array<std::string_view, kDescriptorCount> kDescriptorNames = {
    "element", "group", "max_consecutive", "max_distance", "min_distance"};

struct Bsfe1d {
  std::int64_t element = 0;
  std::int64_t group = 0;
  std::int64_t max_consecutive = 0;
  std::int64_t max_distance = 0;  // 0 when fewer than two set bits
  std::int64_t min_distance = 0;  // 0 when fewer than two set bits

  std::array<double, kDescriptorCount> values() const {
    return {static_cast<double>(element), static_cast<double>(group),
            static_cast<double>(max_consecutive), static_cast<double>(max_distance),
            static_cast<double>(min_distance)};
  }

  auto operator<=>(const Bsfe1d&) const = default;
};

/// Descriptors of a length-n vector given its set positions, which must be
/// strictly increasing and inside [0, n).
inline Bsfe1d bsfe_1d_indices(std::span<const std::int64_t> set_positions, std::int64_t n) {
  if (n <= 0) fail(ErrorKind::Config, "bsfe_1d: vector length must be positive");
  Bsfe1d out;
  if (set_positions.empty()) return out;
  if (set_positions.front() < 0 || set_positions.back() >= n) {
    fail(ErrorKind::Config, "bsfe_1d: set position outside [0, n)");
  }
  out.element = static_cast<std::int64_t>(set_positions.size());
  out.group = 1;
  std::int64_t run = 1;
  out.max_consecutive = 1;
  out.min_distance = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 1; i < set_positions.size(); ++i) {
    const std::int64_t gap = set_positions[i] - set_positions[i - 1];
    if (gap <= 0) fail(ErrorKind::Config, "bsfe_1d: set positions must be strictly increasing");
    if (gap == 1) {
      ++run;
    } else {
      ++out.group;
      run = 1;
    }
    out.max_consecutive = std::max(out.max_consecutive, run);
    out.min_distance = std::min(out.min_distance, gap);
  }
  if (out.element < 2) {
    out.min_distance = 0;
  } else {
    out.max_distance = set_positions.back() - set_positions.front();
  }
  return out;
}

/// Dense overload; every entry must be 0 or 1.
inline Bsfe1d bsfe_1d(std::span<const std::uint8_t> bits) {
  std::vector<std::int64_t> positions;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) fail(ErrorKind::Config, "bsfe_1d: entries must be 0 or 1");
    if (bits[i]) positions.push_back(static_cast<std::int64_t>(i));
  }
  return bsfe_1d_indices(positions, static_cast<std::int64_t>(bits.size()));
}

enum class PoolMethod { Max, Mean };

inline constexpr std::array<PoolMethod, 2> kDefaultPooling = {PoolMethod::Max, PoolMethod::Mean};

inline std::string_view to_string(PoolMethod method) {
  return method == PoolMethod::Max ? "max" : "mean";
}

inline PoolMethod parse_pool_method(std::string_view name) {
  if (name == "max") return PoolMethod::Max;
  if (name == "mean" || name == "avg" || name == "average") return PoolMethod::Mean;
  fail(ErrorKind::Config, "unknown pooling method '" + std::string(name) + "'");
}

/// Element-wise max or mean over equal-length vectors.
inline std::vector<double> pool(std::span<const std::vector<double>> vectors, PoolMethod method) {
  if (vectors.empty()) fail(ErrorKind::Config, "pool: empty input");
  const std::size_t width = vectors.front().size();
  std::vector<double> out(vectors.front());
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != width) fail(ErrorKind::Config, "pool: vectors differ in length");
    for (std::size_t j = 0; j < width; ++j) {
      if (method == PoolMethod::Max) {
        out[j] = std::max(out[j], vectors[i][j]);
      } else {
        out[j] += vectors[i][j];
      }
    }
  }
  if (method == PoolMethod::Mean) {
    for (double& v : out) v /= static_cast<double>(vectors.size());
  }
  return out;
}

/// Coordinate-set binary matrix. Coordinates are kept sorted row-major and
/// unique.
class SparseBinaryMatrix {
 public:
  using Coord = std::pair<std::int64_t, std::int64_t>;

  SparseBinaryMatrix(std::int64_t rows, std::int64_t cols, std::vector<Coord> coords = {})
      : rows_(rows), cols_(cols), coords_(std::move(coords)) {
    if (rows <= 0 || cols <= 0) fail(ErrorKind::Config, "sparse matrix shape must be positive");
    std::sort(coords_.begin(), coords_.end());
    coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
    for (const auto& [r, c] : coords_) {
      if (r < 0 || r >= rows_ || c < 0 || c >= cols_) {
        fail(ErrorKind::Config, "sparse matrix coordinate out of range");
      }
    }
  }

  static SparseBinaryMatrix from_dense(const std::vector<std::vector<std::uint8_t>>& dense) {
    if (dense.empty() || dense.front().empty()) fail(ErrorKind::Config, "empty dense matrix");
    std::vector<Coord> coords;
    for (std::size_t r = 0; r < dense.size(); ++r) {
      for (std::size_t c = 0; c < dense[r].size(); ++c) {
        if (dense[r][c]) coords.emplace_back(r, c);
      }
    }
    return {static_cast<std::int64_t>(dense.size()), static_cast<std::int64_t>(dense.front().size()),
            std::move(coords)};
  }

  std::int64_t rows() const noexcept { return rows_; }
  std::int64_t cols() const noexcept { return cols_; }
  const std::vector<Coord>& coords() const noexcept { return coords_; }
  bool empty() const noexcept { return coords_.empty(); }

  SparseBinaryMatrix transposed() const {
    std::vector<Coord> swapped;
    swapped.reserve(coords_.size());
    for (const auto& [r, c] : coords_) swapped.emplace_back(c, r);
    return {cols_, rows_, std::move(swapped)};
  }

  bool operator==(const SparseBinaryMatrix&) const = default;

 private:
  std::int64_t rows_;
  std::int64_t cols_;
  std::vector<Coord> coords_;
};

struct Bsfe2d {
  std::vector<double> row_level;
  std::vector<double> col_level;

  std::vector<double> flatten() const {
    std::vector<double> out(row_level);
    out.insert(out.end(), col_level.begin(), col_level.end());
    return out;
  }
};

/// Length of the flattened 2d output: 2 * f * (k + 1).
inline std::size_t bsfe_2d_length(std::size_t pooling_count) {
  return 2 * kDescriptorCount * (pooling_count + 1);
}

namespace detail {

// One axis of the 2d extractor. `coords` must be sorted by (major, minor);
// `major_extent` rows of length `minor_extent` are described.
inline std::vector<double> bsfe_axis(std::span<const SparseBinaryMatrix::Coord> coords,
                                     std::int64_t major_extent, std::int64_t minor_extent,
                                     std::span<const PoolMethod> pooling, bool occupied_only) {
  std::array<double, kDescriptorCount> sum{};
  std::array<double, kDescriptorCount> max{};
  std::int64_t occupied = 0;
  std::vector<std::int64_t> positions;
  std::vector<std::int64_t> minor_set;
  for (std::size_t i = 0; i < coords.size();) {
    const std::int64_t major = coords[i].first;
    positions.clear();
    for (; i < coords.size() && coords[i].first == major; ++i) positions.push_back(coords[i].second);
    const auto values = bsfe_1d_indices(positions, minor_extent).values();
    for (std::size_t d = 0; d < kDescriptorCount; ++d) {
      sum[d] += values[d];
      max[d] = std::max(max[d], values[d]);
    }
    minor_set.insert(minor_set.end(), positions.begin(), positions.end());
    ++occupied;
  }

  std::vector<double> out;
  out.reserve(kDescriptorCount * (pooling.size() + 1));
  // Unoccupied rows contribute all-zero descriptor vectors, which never raise
  // a max and only enlarge the mean's denominator.
  const double denominator = static_cast<double>(occupied_only ? occupied : major_extent);
  for (PoolMethod method : pooling) {
    for (std::size_t d = 0; d < kDescriptorCount; ++d) {
      if (occupied == 0) {
        out.push_back(0.0);
      } else if (method == PoolMethod::Max) {
        out.push_back(max[d]);
      } else {
        out.push_back(sum[d] / denominator);
      }
    }
  }
  std::sort(minor_set.begin(), minor_set.end());
  minor_set.erase(std::unique(minor_set.begin(), minor_set.end()), minor_set.end());
  const auto collapsed = bsfe_1d_indices(minor_set, minor_extent).values();
  out.insert(out.end(), collapsed.begin(), collapsed.end());
  return out;
}

}  // namespace detail

inline Bsfe2d bsfe_2d(const SparseBinaryMatrix& x, std::span<const PoolMethod> pooling,
                      bool occupied_only) {
  if (pooling.empty()) fail(ErrorKind::Config, "bsfe_2d: at least one pooling method is required");
  Bsfe2d out;
  out.row_level = detail::bsfe_axis(x.coords(), x.rows(), x.cols(), pooling, occupied_only);
  std::vector<SparseBinaryMatrix::Coord> by_col;
  by_col.reserve(x.coords().size());
  for (const auto& [r, c] : x.coords()) by_col.emplace_back(c, r);
  std::sort(by_col.begin(), by_col.end());
  out.col_level = detail::bsfe_axis(by_col, x.cols(), x.rows(), pooling, occupied_only);
  return out;
}

inline Bsfe2d bsfe_2d(const SparseBinaryMatrix& x, bool occupied_only) {
  return bsfe_2d(x, kDefaultPooling, occupied_only);
}

/// Names for the flattened 2d output, `{prefix}bsfe.{axis}.{path}.{pool?}.{descriptor}`.
inline std::vector<std::string> bsfe_2d_feature_names(std::span<const PoolMethod> pooling,
                                                      std::string_view prefix = "") {
  std::vector<std::string> names;
  for (std::string_view axis : {"row", "col"}) {
    for (PoolMethod method : pooling) {
      for (auto d : kDescriptorNames) {
        names.push_back(std::string(prefix) + "bsfe." + std::string(axis) + ".rta." +
                        std::string(to_string(method)) + "." + std::string(d));
      }
    }
    for (auto d : kDescriptorNames) {
      names.push_back(std::string(prefix) + "bsfe." + std::string(axis) + ".atr." + std::string(d));
    }
  }
  return names;
}

inline std::vector<std::string> bsfe_1d_feature_names(std::string_view prefix) {
  std::vector<std::string> names;
  for (auto d : kDescriptorNames) names.push_back(std::string(prefix) + std::string(d));
  return names;
}

}  // namespace m2mfp
