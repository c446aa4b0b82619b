#include "fedccea/labeled_dataset.hpp"

#include <cstring>
#include <string>

#include "fedccea/errors.hpp"

namespace fedccea {

DataView DataView::slice(std::size_t offset, std::size_t count) const {
  if (offset + count > rows) {
    throw SizeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                    ") exceeds " + std::to_string(rows) + " samples");
  }
  DataView out = *this;
  out.features = features + offset * cols;
  out.rows = count;
  out.labels = labels.subspan(offset, count);
  return out;
}

LabeledDataset::LabeledDataset(RowMatrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw PreconditionError("num_classes must be positive");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw ShapeError("feature rows (" + std::to_string(features_.rows()) +
                     ") != label count (" + std::to_string(labels_.size()) + ")");
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw PreconditionError("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes_) + ")");
    }
  }
}

DataView LabeledDataset::view() const {
  return DataView{features_.data(), size(), dim(), std::span<const int>(labels_), num_classes_};
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  RowMatrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> y(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw SizeError("subset index " + std::to_string(i) + " out of range");
    f.row(static_cast<Eigen::Index>(k)) = features_.row(static_cast<Eigen::Index>(i));
    y[k] = labels_[i];
  }
  return LabeledDataset(std::move(f), std::move(y), num_classes_);
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

namespace {

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t LabeledDataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::uint64_t shape[3] = {size(), dim(), static_cast<std::uint64_t>(num_classes_)};
  fnv_bytes(h, shape, sizeof(shape));
  fnv_bytes(h, features_.data(), static_cast<std::size_t>(features_.size()) * sizeof(double));
  fnv_bytes(h, labels_.data(), labels_.size() * sizeof(int));
  return h;
}

bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
  return a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ &&
         a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_;
}

}  // namespace fedccea
