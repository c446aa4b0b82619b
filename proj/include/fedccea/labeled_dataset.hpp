#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace fedccea {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Non-owning view over a contiguous run of samples. Rows of a row-major
// feature matrix are contiguous, so prefixes and slices are free.
struct DataView {
  const double* features = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const int> labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return rows; }
  bool empty() const noexcept { return rows == 0; }

  Eigen::Map<const RowMatrix> feature_map() const {
    return Eigen::Map<const RowMatrix>(features, static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(cols));
  }

  DataView slice(std::size_t offset, std::size_t count) const;
  DataView prefix(std::size_t count) const { return slice(0, count); }
};

// Feature matrix (samples x dim) plus integer labels in [0, num_classes).
// Sample order is fixed at construction.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(RowMatrix features, std::vector<int> labels, int num_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  int num_classes() const noexcept { return num_classes_; }

  const RowMatrix& features() const noexcept { return features_; }
  std::span<const int> labels() const noexcept { return labels_; }

  DataView view() const;

  // Copy of the listed samples, in the listed order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  // Per-class sample counts.
  std::vector<std::size_t> class_counts() const;

  // FNV-1a over shape, feature bytes and labels.
  std::uint64_t fingerprint() const;

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b);

 private:
  RowMatrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

}  // namespace fedccea
