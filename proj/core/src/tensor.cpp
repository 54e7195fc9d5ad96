#include "gmix/tensor.hpp"

#include "gmix/error.hpp"

#include <algorithm>
#include <cmath>

namespace gmix {

Tensor3::Tensor3(Index slices, Index ages, double fill)
    : slices_(slices), ages_(ages), data_(static_cast<std::size_t>(slices * ages * ages), fill) {
  if (slices < 0 || ages < 0) throw DataError("Tensor3: negative dimension");
}

void Tensor3::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor3::max_abs_diff(const Tensor3& other) const {
  if (!same_shape(other)) throw DataError("Tensor3::max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) worst = std::max(worst, std::abs(data_[i] - other.data_[i]));
  return worst;
}

}  // namespace gmix
