// Copyright 2026 The FaViT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace favit {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a handle: copies share the same node, which is what lets the
/// tape route gradients back to parameters. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data->size(); }

  std::span<double> data() { return *impl_->data; }
  std::span<const double> data() const { return *impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return (*impl_->data)[i]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  /// New node sharing this tensor's storage under a different shape.
  Tensor view(Shape shape) const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }
  const detail::TensorImpl* node() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

struct GridOffset {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const GridOffset&) const = default;
};

/// A set of (row, col) positions on a rows x cols map, strictly increasing in
/// row-major order. Realizes the sampled point set of one window.
class IndexGrid {
 public:
  IndexGrid(std::size_t rows, std::size_t cols, std::vector<GridOffset> offsets);

  /// Every position of a rows x cols map.
  static IndexGrid full(std::size_t rows, std::size_t cols);
  /// side x side samples with stride `dilation` starting at `origin`.
  static IndexGrid dilated(std::size_t rows, std::size_t cols, GridOffset origin,
                           std::size_t side, std::size_t dilation);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const GridOffset> offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<GridOffset> offsets_;
};

}  // namespace favit
