#include "snd/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "snd/errors.hpp"

namespace snd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ContractError("tensor shape " + shape_string(shape_) + " does not match data length " +
                        std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) throw ContractError("row range out of bounds");
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t w = stride0();
  return BasicTensor(std::move(s), std::vector<T>(data_.begin() + begin * w, data_.begin() + end * w));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::gather(std::span<const std::size_t> index) const {
  Shape s = shape_;
  s[0] = index.size();
  BasicTensor out(std::move(s));
  const std::size_t w = stride0();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[0]) throw ContractError("gather index out of bounds");
    std::copy_n(data_.begin() + index[i] * w, w, out.data_.begin() + i * w);
  }
  return out;
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() == 0 || a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ContractError("concat_rows: incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
  }
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<T> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return BasicTensor<T>(std::move(s), std::move(data));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> concat_rows(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> concat_rows(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace snd
