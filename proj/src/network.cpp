#include "snd/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "snd/errors.hpp"

namespace snd {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t conv_extent(std::size_t in, const Conv2dSpec& c) {
  if (in + 2 * c.padding < c.kernel) throw ContractError("convolution kernel larger than padded input");
  return (in + 2 * c.padding - c.kernel) / c.stride + 1;
}

// cols is (C*k*k) x (N*P) row-major, P = Ho*Wo.
template <typename T>
void im2col(const T* in, std::size_t n_batch, const Shape& in_shape, const Conv2dSpec& c, std::size_t ho,
            std::size_t wo, std::vector<T>& cols) {
  const std::size_t ch = in_shape[0], h = in_shape[1], w = in_shape[2], k = c.kernel;
  const std::size_t p = ho * wo, np = n_batch * p;
  cols.assign(ch * k * k * np, T(0));
  for (std::size_t ci = 0; ci < ch; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols.data() + ((ci * k + ki) * k + kj) * np;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* plane = in + (n * ch + ci) * h * w;
          T* dst = row + n * p;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * c.stride + ki) - static_cast<long>(c.padding);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * c.stride + kj) - static_cast<long>(c.padding);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              dst[oy * wo + ox] = plane[iy * static_cast<long>(w) + ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t n_batch, const Shape& in_shape, const Conv2dSpec& c, std::size_t ho,
            std::size_t wo, T* out) {
  const std::size_t ch = in_shape[0], h = in_shape[1], w = in_shape[2], k = c.kernel;
  const std::size_t p = ho * wo, np = n_batch * p;
  for (std::size_t ci = 0; ci < ch; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((ci * k + ki) * k + kj) * np;
        for (std::size_t n = 0; n < n_batch; ++n) {
          T* plane = out + (n * ch + ci) * h * w;
          const T* src = row + n * p;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * c.stride + ki) - static_cast<long>(c.padding);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * c.stride + kj) - static_cast<long>(c.padding);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              plane[iy * static_cast<long>(w) + ix] += src[oy * wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::string layer_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const Conv2dSpec&) { return std::string("conv"); },
                        [](const DenseSpec&) { return std::string("dense"); },
                        [](const ActivationSpec& a) { return std::string(a.kind == Activation::elu ? "elu" : "relu"); },
                    },
                    spec);
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng) {
  if (rows == 0 || cols == 0) throw ContractError("orthogonal_init: zero-sized shape");
  if (!(gain > 0.0)) throw ContractError("orthogonal_init: gain must be positive");
  const bool transpose = rows < cols;
  const std::size_t tall = std::max(rows, cols), narrow = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(tall, narrow);
  for (std::size_t i = 0; i < tall; ++i) {
    for (std::size_t j = 0; j < narrow; ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
  const Eigen::MatrixXd r = qr.matrixQR();
  for (std::size_t j = 0; j < narrow; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = gain * (transpose ? q(j, i) : q(i, j));
  }
  return out;
}

template <typename T>
BasicNetwork<T>::BasicNetwork(NetworkSpec spec, double gain, std::uint64_t seed)
    : spec_(std::move(spec)), gain_(gain), seed_(seed) {
  if (spec_.input_shape.empty() || shape_size(spec_.input_shape) == 0) throw ContractError("network input shape is empty");
  if (spec_.layers.empty()) throw ContractError("network has no layers");
  std::mt19937_64 rng(seed);
  Shape shape = spec_.input_shape;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    Layer layer{spec_.layers[i], shape, {}, -1, -1};
    const std::string prefix = "layer" + std::to_string(i) + "." + layer_name(layer.spec);
    std::visit(Overloaded{
                   [&](const Conv2dSpec& c) {
                     if (shape.size() != 3) throw ContractError(prefix + ": convolution needs (C,H,W) input");
                     if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) throw ContractError(prefix + ": bad conv spec");
                     layer.out_shape = {c.out_channels, conv_extent(shape[1], c), conv_extent(shape[2], c)};
                     const std::size_t fan_in = shape[0] * c.kernel * c.kernel;
                     auto w = orthogonal_init(c.out_channels, fan_in, gain, rng);
                     layer.weight = static_cast<int>(params_.size());
                     params_.push_back({prefix + ".weight", BasicTensor<T>({c.out_channels, fan_in}, std::vector<T>(w.begin(), w.end()))});
                     layer.bias = static_cast<int>(params_.size());
                     params_.push_back({prefix + ".bias", BasicTensor<T>({c.out_channels})});
                   },
                   [&](const DenseSpec& d) {
                     if (d.out_features == 0) throw ContractError(prefix + ": zero output features");
                     const std::size_t fan_in = shape_size(shape);
                     layer.out_shape = {d.out_features};
                     auto w = orthogonal_init(d.out_features, fan_in, gain, rng);
                     layer.weight = static_cast<int>(params_.size());
                     params_.push_back({prefix + ".weight", BasicTensor<T>({d.out_features, fan_in}, std::vector<T>(w.begin(), w.end()))});
                     layer.bias = static_cast<int>(params_.size());
                     params_.push_back({prefix + ".bias", BasicTensor<T>({d.out_features})});
                   },
                   [&](const ActivationSpec&) { layer.out_shape = shape; },
               },
               layer.spec);
    shape = layer.out_shape;
    layers_.push_back(std::move(layer));
  }
  if (spec_.local_layer) {
    if (*spec_.local_layer >= layers_.size() || layers_[*spec_.local_layer].out_shape.size() != 3) {
      throw ContractError("local-feature layer must produce a (C,H,W) map");
    }
  }
}

template <typename T>
Shape BasicNetwork<T>::layer_output_shape(std::size_t i) const {
  return layers_.at(i).out_shape;
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
typename BasicNetwork<T>::Output BasicNetwork<T>::run(const BasicTensor<T>& batch, std::vector<Cache>* cache) const {
  if (batch.rank() != spec_.input_shape.size() + 1 ||
      !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), batch.shape().begin() + 1)) {
    throw ContractError("network input " + shape_string(batch.shape()) + " does not match per-sample shape " +
                        shape_string(spec_.input_shape));
  }
  const std::size_t n = batch.dim(0);
  if (cache) cache->assign(layers_.size(), Cache{});
  Output result;
  BasicTensor<T> x = batch;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    Shape out_shape{n};
    out_shape.insert(out_shape.end(), layer.out_shape.begin(), layer.out_shape.end());
    BasicTensor<T> y(out_shape);
    std::vector<T> cols;
    std::visit(Overloaded{
                   [&](const Conv2dSpec& c) {
                     const std::size_t ho = layer.out_shape[1], wo = layer.out_shape[2], p = ho * wo;
                     const std::size_t k = layer.in_shape[0] * c.kernel * c.kernel;
                     im2col(x.data(), n, layer.in_shape, c, ho, wo, cols);
                     const auto& w = params_[layer.weight].value;
                     const auto& b = params_[layer.bias].value;
                     RowMat<T> r = ConstMapMat<T>(w.data(), c.out_channels, k) * ConstMapMat<T>(cols.data(), k, n * p);
                     for (std::size_t s = 0; s < n; ++s) {
                       for (std::size_t o = 0; o < c.out_channels; ++o) {
                         const T* src = r.data() + o * n * p + s * p;
                         T* dst = y.data() + (s * c.out_channels + o) * p;
                         for (std::size_t q = 0; q < p; ++q) dst[q] = src[q] + b[o];
                       }
                     }
                   },
                   [&](const DenseSpec& d) {
                     const std::size_t in = shape_size(layer.in_shape);
                     const auto& w = params_[layer.weight].value;
                     const auto& b = params_[layer.bias].value;
                     MapMat<T> out(y.data(), n, d.out_features);
                     out.noalias() = ConstMapMat<T>(x.data(), n, in) * ConstMapMat<T>(w.data(), d.out_features, in).transpose();
                     for (std::size_t s = 0; s < n; ++s) {
                       for (std::size_t o = 0; o < d.out_features; ++o) out(s, o) += b[o];
                     }
                   },
                   [&](const ActivationSpec& a) {
                     const T* src = x.data();
                     T* dst = y.data();
                     if (a.kind == Activation::relu) {
                       for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
                     } else {
                       for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : std::expm1(src[i]);
                     }
                   },
               },
               layer.spec);
    if (!y.all_finite()) {
      throw NumericError("non-finite activation at layer " + std::to_string(li) + " (" + layer_name(layer.spec) + ")");
    }
    if (spec_.local_layer && *spec_.local_layer == li) result.locals = y;
    if (cache) {
      (*cache)[li].input = std::move(x);
      (*cache)[li].cols = std::move(cols);
      if (std::holds_alternative<ActivationSpec>(layer.spec)) (*cache)[li].output = y;
    }
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

template <typename T>
typename BasicNetwork<T>::Output BasicNetwork<T>::forward(const BasicTensor<T>& batch) {
  cached_batch_ = 0;
  Output out = run(batch, &cache_);
  cached_batch_ = batch.dim(0);
  return out;
}

template <typename T>
typename BasicNetwork<T>::Output BasicNetwork<T>::evaluate(const BasicTensor<T>& batch) const {
  return run(batch, nullptr);
}

template <typename T>
Gradients<T> BasicNetwork<T>::backward(const BasicTensor<T>& output_grad, const BasicTensor<T>* local_grad) {
  if (cached_batch_ == 0) throw StateError("backward called before forward");
  const std::size_t n = cached_batch_;
  if (output_grad.size() != n * output_features() || output_grad.dim(0) != n) {
    throw ContractError("output gradient shape " + shape_string(output_grad.shape()) + " does not match output");
  }
  if (local_grad && !spec_.local_layer) throw ContractError("local gradient given but no local-feature layer");

  Gradients<T> grads;
  for (const auto& p : params_) grads.params.emplace_back(p.value.shape());

  Shape last{n};
  last.insert(last.end(), layers_.back().out_shape.begin(), layers_.back().out_shape.end());
  BasicTensor<T> g = output_grad.reshaped(last);
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    Cache& c = cache_[li];
    if (spec_.local_layer && *spec_.local_layer == li && local_grad) {
      if (local_grad->size() != g.size()) throw ContractError("local gradient shape mismatch");
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*local_grad)[i];
    }
    BasicTensor<T> gin(c.input.shape());
    std::visit(Overloaded{
                   [&](const Conv2dSpec& cs) {
                     const std::size_t ho = layer.out_shape[1], wo = layer.out_shape[2], p = ho * wo;
                     const std::size_t k = layer.in_shape[0] * cs.kernel * cs.kernel;
                     RowMat<T> dr(cs.out_channels, n * p);
                     for (std::size_t s = 0; s < n; ++s) {
                       for (std::size_t o = 0; o < cs.out_channels; ++o) {
                         const T* src = g.data() + (s * cs.out_channels + o) * p;
                         std::copy(src, src + p, dr.data() + o * n * p + s * p);
                       }
                     }
                     ConstMapMat<T> cols(c.cols.data(), k, n * p);
                     MapMat<T>(grads.params[layer.weight].data(), cs.out_channels, k).noalias() = dr * cols.transpose();
                     auto& db = grads.params[layer.bias];
                     for (std::size_t o = 0; o < cs.out_channels; ++o) db[o] = dr.row(o).sum();
                     const auto& w = params_[layer.weight].value;
                     RowMat<T> dcols = ConstMapMat<T>(w.data(), cs.out_channels, k).transpose() * dr;
                     col2im(dcols.data(), n, layer.in_shape, cs, ho, wo, gin.data());
                   },
                   [&](const DenseSpec& d) {
                     const std::size_t in = shape_size(layer.in_shape);
                     ConstMapMat<T> dy(g.data(), n, d.out_features);
                     ConstMapMat<T> x(c.input.data(), n, in);
                     MapMat<T>(grads.params[layer.weight].data(), d.out_features, in).noalias() = dy.transpose() * x;
                     auto& db = grads.params[layer.bias];
                     for (std::size_t o = 0; o < d.out_features; ++o) db[o] = dy.col(o).sum();
                     const auto& w = params_[layer.weight].value;
                     MapMat<T>(gin.data(), n, in).noalias() = dy * ConstMapMat<T>(w.data(), d.out_features, in);
                   },
                   [&](const ActivationSpec& a) {
                     const T* y = c.output.data();
                     if (a.kind == Activation::relu) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[i] = y[i] > T(0) ? g[i] : T(0);
                     } else {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[i] = y[i] > T(0) ? g[i] : g[i] * (y[i] + T(1));
                     }
                   },
               },
               layer.spec);
    g = std::move(gin);
  }
  grads.input = std::move(g);
  return grads;
}

template <typename T>
void BasicNetwork<T>::copy_parameters_from(const BasicNetwork& other) {
  if (other.params_.size() != params_.size()) throw ContractError("copy_parameters_from: topology mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (other.params_[i].value.shape() != params_[i].value.shape()) throw ContractError("copy_parameters_from: shape mismatch");
    params_[i].value = other.params_[i].value;
  }
}

template <typename T>
std::vector<BasicTensor<T>> finite_diff_grad(const std::function<double(BasicNetwork<T>&)>& loss_fn,
                                             BasicNetwork<T>& net, double eps) {
  if (!(eps >= 1e-5 && eps <= 1e-2)) throw ContractError("finite_diff_grad: eps must lie in [1e-5, 1e-2]");
  std::vector<BasicTensor<T>> out;
  for (auto& p : net.parameters()) {
    BasicTensor<T> g(p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T saved = p.value[i];
      p.value[i] = static_cast<T>(saved + eps);
      const double up = loss_fn(net);
      p.value[i] = static_cast<T>(saved - eps);
      const double down = loss_fn(net);
      p.value[i] = saved;
      g[i] = static_cast<T>((up - down) / (2.0 * eps));
    }
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T>
std::vector<T> finite_diff_values(const std::function<double()>& loss_fn, std::span<T> values, double eps) {
  if (!(eps >= 1e-5 && eps <= 1e-2)) throw ContractError("finite_diff_values: eps must lie in [1e-5, 1e-2]");
  std::vector<T> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = static_cast<T>(saved + eps);
    const double up = loss_fn();
    values[i] = static_cast<T>(saved - eps);
    const double down = loss_fn();
    values[i] = saved;
    g[i] = static_cast<T>((up - down) / (2.0 * eps));
  }
  return g;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;
template std::vector<BasicTensor<float>> finite_diff_grad(const std::function<double(BasicNetwork<float>&)>&,
                                                          BasicNetwork<float>&, double);
template std::vector<BasicTensor<double>> finite_diff_grad(const std::function<double(BasicNetwork<double>&)>&,
                                                           BasicNetwork<double>&, double);
template std::vector<float> finite_diff_values(const std::function<double()>&, std::span<float>, double);
template std::vector<double> finite_diff_values(const std::function<double()>&, std::span<double>, double);

}  // namespace snd
