#include "lsconf/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "lsconf/errors.hpp"

namespace lsconf {

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_to_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill)
{
    for (auto e : shape_)
        if (e == 0) throw DimensionError("shape " + shape_to_string(shape_) + " has a zero extent");
}

NdArray::NdArray(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (numel(shape_) != data_.size())
        throw DimensionError("shape " + shape_to_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
}

std::size_t NdArray::offset(std::initializer_list<std::size_t> index) const
{
    if (index.size() != shape_.size())
        throw DimensionError("index rank " + std::to_string(index.size()) + " vs array rank " +
                             std::to_string(shape_.size()));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis])
            throw DimensionError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& NdArray::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double NdArray::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

NdArray NdArray::reshaped(Shape shape) const { return NdArray(std::move(shape), data_); }

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool NdArray::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lsconf
