#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace gmix {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

/// A stack of square age-by-age slices. Entry (i, a, b) lives at
/// (i * A + a) * A + b, so a fiber over i at fixed (a, b) is strided by A².
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index slices, Index ages, double fill = 0.0);

  Index slices() const { return slices_; }
  Index ages() const { return ages_; }
  Index size() const { return static_cast<Index>(data_.size()); }
  Index stride() const { return ages_ * ages_; }

  double& operator()(Index i, Index a, Index b) { return data_[static_cast<std::size_t>((i * ages_ + a) * ages_ + b)]; }
  double operator()(Index i, Index a, Index b) const {
    return data_[static_cast<std::size_t>((i * ages_ + a) * ages_ + b)];
  }

  RowMap slice(Index i) { return RowMap(data_.data() + i * stride(), ages_, ages_); }
  ConstRowMap slice(Index i) const { return ConstRowMap(data_.data() + i * stride(), ages_, ages_); }

  std::span<double> values() & { return data_; }
  std::span<const double> values() const& { return data_; }
  std::span<const double> values() && = delete;  // would dangle

  bool same_shape(const Tensor3& other) const { return slices_ == other.slices_ && ages_ == other.ages_; }
  void fill(double v);

  /// Largest absolute entrywise difference; shapes must agree.
  double max_abs_diff(const Tensor3& other) const;

 private:
  Index slices_ = 0;
  Index ages_ = 0;
  std::vector<double> data_;
};

}  // namespace gmix
