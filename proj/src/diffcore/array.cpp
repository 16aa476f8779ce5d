#include "diffcore/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "common/errors.hpp"

namespace pbcnn::diffcore {

std::size_t element_count(const Extents& extents) {
  return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
}

std::string describe(const Extents& extents) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (i) os << ',';
    os << extents[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Extents extents, double fill)
    : extents_(std::move(extents)), data_(element_count(extents_), fill) {}

Array::Array(Extents extents, std::vector<double> data)
    : extents_(std::move(extents)), data_(std::move(data)) {
  if (data_.size() != element_count(extents_)) {
    throw ShapeError("array data length " + std::to_string(data_.size()) +
                     " does not match extents " + describe(extents_));
  }
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

std::size_t Array::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != extents_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " on array " +
                     describe(extents_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= extents_[axis]) {
      throw ShapeError("index out of range on axis " + std::to_string(axis) + " of " +
                       describe(extents_));
    }
    flat = flat * extents_[axis] + i;
    ++axis;
  }
  return flat;
}

double& Array::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Array::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on array of extents " + describe(extents_));
  }
  return data_[0];
}

Array Array::reshaped(Extents extents) const {
  if (element_count(extents) != data_.size()) {
    throw ShapeError("cannot reshape " + describe(extents_) + " to " + describe(extents));
  }
  return Array(std::move(extents), data_);
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool all_finite(const Array& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

void require_finite(const Array& a, std::string_view what) {
  if (!all_finite(a)) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

void require_same_extents(const Array& a, const Array& b, std::string_view what) {
  if (a.extents() != b.extents()) {
    throw ShapeError(std::string(what) + ": extents " + describe(a.extents()) + " vs " +
                     describe(b.extents()));
  }
}

}  // namespace pbcnn::diffcore
