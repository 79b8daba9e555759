#include "corridor_twin/autodiff/tensor.hpp"

#include "corridor_twin/errors.hpp"

#include <algorithm>
#include <numeric>

namespace ctwin::ad {

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    for (auto d : shape_)
        if (d == 0)
            throw ContractError("tensor extents must be positive, got " + shape_string(shape_));
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    for (auto d : shape_)
        if (d == 0)
            throw ContractError("tensor extents must be positive, got " + shape_string(shape_));
    if (element_count(shape_) != data_.size())
        throw ContractError("tensor shape " + shape_string(shape_) + " does not match " +
                            std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
{
    return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size())
        throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    return shape_[axis];
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw ContractError("item() requires a single-element tensor, got " + shape_string(shape_));
    return data_[0];
}

void Tensor::reshape(Shape shape)
{
    if (element_count(shape) != data_.size())
        throw ContractError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
}

void Tensor::fill(double v)
{
    std::fill(data_.begin(), data_.end(), v);
}

void Parameter::zero_grad()
{
    if (grad.shape() != value.shape())
        grad = Tensor(value.shape());
    else
        grad.fill(0.0);
    has_grad = false;
}

}  // namespace ctwin::ad
