#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "snd/tensor.hpp"

namespace snd {

enum class Activation { elu, relu };

struct Conv2dSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct DenseSpec {
  std::size_t out_features = 0;
};

struct ActivationSpec {
  Activation kind = Activation::elu;
};

using LayerSpec = std::variant<Conv2dSpec, DenseSpec, ActivationSpec>;

/// Feed-forward topology. `input_shape` is per sample: (C, H, W) for image
/// input or (F) for vectors. Dense layers flatten whatever they receive.
struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  /// Layer whose output is exposed as spatial local features, shape (N, C, H, W).
  std::optional<std::size_t> local_layer;
};

std::string layer_name(const LayerSpec& spec);

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
};

template <typename T>
struct Gradients {
  /// One tensor per parameter, aligned with BasicNetwork::parameters().
  std::vector<BasicTensor<T>> params;
  BasicTensor<T> input;
};

/// Rows x cols matrix (row-major) whose rows (rows <= cols) or columns
/// (rows > cols) are orthogonal with norm `gain`.
std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng);

double elu(double x);

template <typename T>
class BasicNetwork {
 public:
  struct Output {
    BasicTensor<T> output;
    std::optional<BasicTensor<T>> locals;
  };

  /// Builds the layers and draws orthogonal weights (zero biases) from `seed`.
  BasicNetwork(NetworkSpec spec, double gain, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  double gain() const { return gain_; }
  std::uint64_t seed() const { return seed_; }

  /// Per-sample output shape of layer i (or of the whole net when i == npos).
  Shape layer_output_shape(std::size_t i) const;
  Shape output_shape() const { return layers_.back().out_shape; }
  std::size_t output_features() const { return shape_size(output_shape()); }

  std::vector<Param<T>>& parameters() { return params_; }
  const std::vector<Param<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Forward pass that records activations for a later backward().
  Output forward(const BasicTensor<T>& batch);
  /// Forward pass without touching the cache; safe to call concurrently.
  Output evaluate(const BasicTensor<T>& batch) const;

  /// Gradients of a scalar loss given dL/d(output) and optionally dL/d(locals).
  Gradients<T> backward(const BasicTensor<T>& output_grad, const BasicTensor<T>* local_grad = nullptr);

  void copy_parameters_from(const BasicNetwork& other);
  bool has_cache() const { return cached_batch_ > 0; }

  BasicTensor<T> zero_like_parameter(std::size_t i) const { return BasicTensor<T>(params_[i].value.shape()); }

 private:
  struct Layer {
    LayerSpec spec;
    Shape in_shape;
    Shape out_shape;
    int weight = -1;
    int bias = -1;
  };
  struct Cache {
    BasicTensor<T> input;
    std::vector<T> cols;
    BasicTensor<T> output;
  };

  Output run(const BasicTensor<T>& batch, std::vector<Cache>* cache) const;

  NetworkSpec spec_;
  double gain_;
  std::uint64_t seed_;
  std::vector<Layer> layers_;
  std::vector<Param<T>> params_;
  std::vector<Cache> cache_;
  std::size_t cached_batch_ = 0;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

/// Same topology and seed, parameters converted to another precision.
template <typename To, typename From>
BasicNetwork<To> network_cast(const BasicNetwork<From>& net) {
  BasicNetwork<To> out(net.spec(), net.gain(), net.seed());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    out.parameters()[i].value = tensor_cast<To>(net.parameters()[i].value);
  }
  return out;
}

/// Central-difference gradient of `loss_fn` with respect to every parameter of `net`.
template <typename T>
std::vector<BasicTensor<T>> finite_diff_grad(const std::function<double(BasicNetwork<T>&)>& loss_fn,
                                             BasicNetwork<T>& net, double eps);

/// Central-difference gradient over a raw value span.
template <typename T>
std::vector<T> finite_diff_values(const std::function<double()>& loss_fn, std::span<T> values, double eps);

}  // namespace snd
