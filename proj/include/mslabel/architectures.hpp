#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mslabel/layers.hpp"
#include "mslabel/superpixel.hpp"

namespace mslabel {

enum class LayerKind { conv, bn, relu, maxpool2, avgpool2, resblock };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int k = 1;
  int out = 0;
  Padding pad = Padding::same;
  bool pool = false;
  std::optional<int> in;  // optional consistency check against the incoming width

  static LayerSpec conv(int k, int out, Padding pad = Padding::same) {
    return {LayerKind::conv, k, out, pad, false, std::nullopt};
  }
  static LayerSpec bn() { return of(LayerKind::bn); }
  static LayerSpec relu() { return of(LayerKind::relu); }
  static LayerSpec maxpool2() { return of(LayerKind::maxpool2); }
  static LayerSpec avgpool2() { return of(LayerKind::avgpool2); }
  static LayerSpec of(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    return l;
  }
  static LayerSpec resblock(int out, bool pool) {
    return {LayerKind::resblock, 3, out, Padding::same, pool, std::nullopt};
  }
};

/// Layer stack description. The extractor runs once per scale with shared
/// weights; the classifier runs once on the channel-stacked features.
struct NetworkSpec {
  std::string name;
  int input_channels = 28;
  std::vector<int> scales{1};
  std::vector<LayerSpec> extractor;
  std::vector<LayerSpec> classifier;
  int output_classes = 8;

  /// Channel count leaving the extractor; throws shape errors naming the layer.
  int extractor_channels() const;
  void validate() const;
};

NetworkSpec preset(std::string_view name, int input_channels, int output_classes = 8);

std::string network_spec_to_json(const NetworkSpec& spec);
NetworkSpec parse_network_spec(const std::string& json_text);

template <typename Scalar>
struct ConvLayer {
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
  Padding pad = Padding::same;
};

template <typename Scalar>
struct ResidualBlock {
  ConvLayer<Scalar> conv1;
  BatchNormState<Scalar> bn1;
  ConvLayer<Scalar> conv2;
  BatchNormState<Scalar> bn2;
  std::optional<ConvLayer<Scalar>> shortcut;  // present iff in != out channels
  bool pool = false;
};

struct ReluLayer {};
struct MaxPoolLayer {};
struct AvgPoolLayer {};

template <typename Scalar>
using Layer = std::variant<ConvLayer<Scalar>, BatchNormState<Scalar>, ReluLayer, MaxPoolLayer,
                           AvgPoolLayer, ResidualBlock<Scalar>>;

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Parameter<Scalar>* param;
};

template <typename Scalar>
struct NamedBuffer {
  std::string name;
  Tensor<Scalar>* tensor;
};

template <typename Scalar>
class Network {
 public:
  Network() = default;

  const NetworkSpec& spec() const { return spec_; }

  /// Scores of shape (classes, H/4, W/4) for the presets. Recorded for
  /// backward when grad mode is on and any parameter is reached.
  Var<Scalar> forward(const Var<Scalar>& image);
  Tensor<Scalar> forward(const Tensor<Scalar>& image);

  void set_mode(BatchNormMode mode);
  BatchNormMode mode() const { return mode_; }

  std::vector<NamedParameter<Scalar>> parameters();
  std::vector<NamedBuffer<Scalar>> buffers();
  std::size_t parameter_count();

  template <typename S>
  friend Network<S> build_network(const NetworkSpec& spec, std::uint64_t seed);

 private:
  Var<Scalar> run(std::vector<Layer<Scalar>>& layers, Var<Scalar> x);

  NetworkSpec spec_;
  std::vector<Layer<Scalar>> extractor_;
  std::vector<Layer<Scalar>> classifier_;
  BatchNormMode mode_ = BatchNormMode::train;
};

/// He-uniform conv weights, zero biases, unit/zero batch-norm affine terms.
template <typename Scalar>
Network<Scalar> build_network(const NetworkSpec& spec, std::uint64_t seed);

template <typename Scalar>
LabelMap predict_labels(const Tensor<Scalar>& scores);

}  // namespace mslabel
