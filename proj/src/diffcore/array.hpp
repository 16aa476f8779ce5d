#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pbcnn::diffcore {

using Extents = std::vector<std::size_t>;

std::size_t element_count(const Extents& extents);
std::string describe(const Extents& extents);

/// Shape-tagged, row-major array of doubles.
class Array {
public:
  Array() = default;
  explicit Array(Extents extents, double fill = 0.0);
  Array(Extents extents, std::vector<double> data);

  static Array scalar(double value) { return Array({}, std::vector<double>{value}); }
  static Array vector(std::vector<double> values);

  const Extents& extents() const noexcept { return extents_; }
  std::size_t rank() const noexcept { return extents_.size(); }
  std::size_t extent(std::size_t axis) const { return extents_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Bounds-checked multi-index access.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  /// Scalar value of a single-element array.
  double item() const;

  Array reshaped(Extents extents) const;
  void fill(double value);

  bool operator==(const Array&) const = default;

private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Extents extents_;
  std::vector<double> data_;
};

/// Throws NumericError naming `what` if any element is NaN or infinite.
void require_finite(const Array& a, std::string_view what);
bool all_finite(const Array& a);

void require_same_extents(const Array& a, const Array& b, std::string_view what);

}  // namespace pbcnn::diffcore
