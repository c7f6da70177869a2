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

#include "favit/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "favit/error.hpp"

namespace favit {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ConfigError("tensor extents must be positive, got " + to_string(shape));
  }
}
}  // namespace

Tensor::Tensor() : Tensor(Shape{}) {}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_extents(shape);
  impl_->data = std::make_shared<std::vector<double>>(numel(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_extents(shape);
  if (values.size() != numel(shape)) {
    throw ConfigError("tensor of shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                      " values, got " + std::to_string(values.size()));
  }
  impl_->data = std::make_shared<std::vector<double>>(std::move(values));
  impl_->shape = std::move(shape);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::ranges::fill(t.data(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return (*impl_->data)[0];
}

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, *impl_->data);
}

Tensor Tensor::view(Shape shape) const {
  if (numel(shape) != size()) {
    throw ConfigError("cannot view " + to_string(this->shape()) + " as " + to_string(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = impl_->data;
  return t;
}

IndexGrid::IndexGrid(std::size_t rows, std::size_t cols, std::vector<GridOffset> offsets)
    : rows_(rows), cols_(cols), offsets_(std::move(offsets)) {
  for (std::size_t i = 0; i < offsets_.size(); ++i) {
    const auto& o = offsets_[i];
    if (o.row >= rows_ || o.col >= cols_) {
      throw IndexError("grid offset (" + std::to_string(o.row) + ", " + std::to_string(o.col) +
                       ") outside " + std::to_string(rows_) + "x" + std::to_string(cols_) + " map");
    }
    if (i > 0 && !(offsets_[i - 1] < o)) {
      throw ConfigError("grid offsets must be strictly increasing in row-major order");
    }
  }
}

IndexGrid IndexGrid::full(std::size_t rows, std::size_t cols) {
  std::vector<GridOffset> offsets;
  offsets.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) offsets.push_back({r, c});
  return IndexGrid(rows, cols, std::move(offsets));
}

IndexGrid IndexGrid::dilated(std::size_t rows, std::size_t cols, GridOffset origin, std::size_t side,
                             std::size_t dilation) {
  std::vector<GridOffset> offsets;
  offsets.reserve(side * side);
  for (std::size_t a = 0; a < side; ++a)
    for (std::size_t b = 0; b < side; ++b)
      offsets.push_back({origin.row + a * dilation, origin.col + b * dilation});
  return IndexGrid(rows, cols, std::move(offsets));
}

}  // namespace favit
