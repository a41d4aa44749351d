#include "mslabel/architectures.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

namespace mslabel {

namespace {

std::string layer_label(const char* section, std::size_t index) {
  return std::string(section) + "[" + std::to_string(index) + "]";
}

// Walks a layer list and returns the outgoing channel count.
int chain_channels(const std::vector<LayerSpec>& layers, int channels, const char* section) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto where = layer_label(section, i);
    if (l.in && *l.in != channels) {
      fail(ErrorCategory::shape, where + " expects " + std::to_string(*l.in) +
                                     " input channels but receives " + std::to_string(channels));
    }
    switch (l.kind) {
      case LayerKind::conv:
        require(l.k >= 1 && l.k % 2 == 1, ErrorCategory::shape, where + ": kernel must be odd");
        require(l.out >= 1, ErrorCategory::shape, where + ": out must be >= 1");
        channels = l.out;
        break;
      case LayerKind::resblock:
        require(l.out >= 1, ErrorCategory::shape, where + ": out must be >= 1");
        channels = l.out;
        break;
      default:
        break;
    }
  }
  return channels;
}

bool power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

}  // namespace

int NetworkSpec::extractor_channels() const {
  return chain_channels(extractor, input_channels, "extractor");
}

void NetworkSpec::validate() const {
  require(input_channels >= 1, ErrorCategory::invalid_input, "input_channels must be >= 1");
  require(!scales.empty(), ErrorCategory::invalid_input, "scales must be non-empty");
  for (int s : scales)
    require(power_of_two(s), ErrorCategory::invalid_input, "scales must be powers of two");
  require(output_classes >= 1 && output_classes <= 255, ErrorCategory::invalid_input,
          "output_classes must be in [1, 255]");
  const int features = extractor_channels() * static_cast<int>(scales.size());
  const int final_channels = chain_channels(classifier, features, "classifier");
  require(final_channels == output_classes, ErrorCategory::shape,
          "network ends with " + std::to_string(final_channels) + " channels, expected " +
              std::to_string(output_classes));
}

NetworkSpec preset(std::string_view name, int input_channels, int output_classes) {
  NetworkSpec spec;
  spec.name = std::string(name);
  spec.input_channels = input_channels;
  spec.output_classes = output_classes;
  using L = LayerSpec;
  const std::vector<LayerSpec> pixel_classifier = {L::conv(1, 64), L::bn(), L::relu(),
                                                   L::conv(1, output_classes)};
  if (name == "A") {
    spec.extractor = {L::avgpool2(), L::avgpool2()};
    spec.classifier = {L::conv(1, 32),  L::bn(), L::relu(), L::conv(1, 128), L::bn(),
                       L::relu(),       L::conv(1, 512), L::bn(), L::relu(), L::conv(1, 64),
                       L::bn(),         L::relu(), L::conv(1, output_classes)};
  } else if (name == "B") {
    spec.scales = {1, 2, 4};
    spec.extractor = {L::conv(7, 16), L::bn(),        L::relu(), L::maxpool2(),
                      L::conv(7, 64), L::bn(),        L::relu(), L::maxpool2(),
                      L::conv(7, 256), L::bn(),       L::relu()};
    spec.classifier = pixel_classifier;
  } else if (name == "C1") {
    spec.extractor = {L::conv(3, 16), L::bn(), L::relu()};
    const int widths[] = {16, 16, 32, 32, 64, 64, 64, 64};
    for (int i = 0; i < 8; ++i) spec.extractor.push_back(L::resblock(widths[i], i == 0 || i == 2));
    spec.classifier = pixel_classifier;
  } else if (name == "C2") {
    spec.extractor = {L::conv(3, 16), L::bn(), L::relu()};
    const int widths[] = {16, 32, 48, 64};
    for (int i = 0; i < 4; ++i) spec.extractor.push_back(L::resblock(widths[i], i < 2));
    spec.classifier = pixel_classifier;
  } else {
    fail(ErrorCategory::invalid_input, "unknown preset '" + std::string(name) + "'");
  }
  spec.validate();
  return spec;
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& l) {
  nlohmann::json j;
  switch (l.kind) {
    case LayerKind::conv:
      j = {{"type", "conv"}, {"k", l.k}, {"out", l.out},
           {"pad", l.pad == Padding::same ? "same" : "valid"}};
      break;
    case LayerKind::bn: j = {{"type", "bn"}}; break;
    case LayerKind::relu: j = {{"type", "relu"}}; break;
    case LayerKind::maxpool2: j = {{"type", "maxpool2"}}; break;
    case LayerKind::avgpool2: j = {{"type", "avgpool2"}}; break;
    case LayerKind::resblock: j = {{"type", "resblock"}, {"out", l.out}, {"pool", l.pool}}; break;
  }
  if (l.in) j["in"] = *l.in;
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  LayerSpec l;
  if (type == "conv") {
    l = LayerSpec::conv(j.at("k").get<int>(), j.at("out").get<int>());
    const auto pad = j.value("pad", std::string("same"));
    require(pad == "same" || pad == "valid", ErrorCategory::invalid_input,
            "conv pad must be 'same' or 'valid'");
    l.pad = pad == "same" ? Padding::same : Padding::valid;
  } else if (type == "bn") {
    l = LayerSpec::bn();
  } else if (type == "relu") {
    l = LayerSpec::relu();
  } else if (type == "maxpool2") {
    l = LayerSpec::maxpool2();
  } else if (type == "avgpool2") {
    l = LayerSpec::avgpool2();
  } else if (type == "resblock") {
    l = LayerSpec::resblock(j.at("out").get<int>(), j.value("pool", false));
  } else {
    fail(ErrorCategory::invalid_input, "unknown layer type '" + type + "'");
  }
  if (j.contains("in")) l.in = j.at("in").get<int>();
  return l;
}

}  // namespace

std::string network_spec_to_json(const NetworkSpec& spec) {
  nlohmann::json extractor = nlohmann::json::array();
  nlohmann::json classifier = nlohmann::json::array();
  for (const auto& l : spec.extractor) extractor.push_back(layer_to_json(l));
  for (const auto& l : spec.classifier) classifier.push_back(layer_to_json(l));
  nlohmann::ordered_json doc;
  doc["name"] = spec.name;
  doc["input_channels"] = spec.input_channels;
  doc["scales"] = spec.scales;
  doc["extractor"] = extractor;
  doc["classifier"] = classifier;
  doc["output_classes"] = spec.output_classes;
  return doc.dump(2);
}

NetworkSpec parse_network_spec(const std::string& json_text) {
  NetworkSpec spec;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    spec.name = doc.value("name", std::string("custom"));
    spec.input_channels = doc.at("input_channels").get<int>();
    spec.scales = doc.value("scales", std::vector<int>{1});
    spec.extractor.clear();
    for (const auto& l : doc.at("extractor")) spec.extractor.push_back(layer_from_json(l));
    for (const auto& l : doc.value("classifier", nlohmann::json::array()))
      spec.classifier.push_back(layer_from_json(l));
    spec.output_classes = doc.at("output_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_input, std::string("network spec: ") + e.what());
  }
  return spec;
}

namespace {

template <typename Scalar>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  ConvLayer<Scalar> conv(int cin, int cout, int k, Padding pad) {
    ConvLayer<Scalar> layer;
    Tensor<Scalar> w({cout, cin, k, k});
    const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng_));
    layer.weight = Parameter<Scalar>(std::move(w));
    layer.bias = Parameter<Scalar>(Tensor<Scalar>({cout}));
    layer.pad = pad;
    return layer;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename Scalar>
std::vector<Layer<Scalar>> instantiate(const std::vector<LayerSpec>& specs, int channels,
                                       Initializer<Scalar>& init) {
  std::vector<Layer<Scalar>> layers;
  for (const auto& l : specs) {
    switch (l.kind) {
      case LayerKind::conv:
        layers.emplace_back(init.conv(channels, l.out, l.k, l.pad));
        channels = l.out;
        break;
      case LayerKind::bn: layers.emplace_back(BatchNormState<Scalar>(channels)); break;
      case LayerKind::relu: layers.emplace_back(ReluLayer{}); break;
      case LayerKind::maxpool2: layers.emplace_back(MaxPoolLayer{}); break;
      case LayerKind::avgpool2: layers.emplace_back(AvgPoolLayer{}); break;
      case LayerKind::resblock: {
        ResidualBlock<Scalar> block;
        block.conv1 = init.conv(channels, l.out, 3, Padding::same);
        block.bn1 = BatchNormState<Scalar>(l.out);
        block.conv2 = init.conv(l.out, l.out, 3, Padding::same);
        block.bn2 = BatchNormState<Scalar>(l.out);
        if (channels != l.out) block.shortcut = init.conv(channels, l.out, 1, Padding::same);
        block.pool = l.pool;
        layers.emplace_back(std::move(block));
        channels = l.out;
        break;
      }
    }
  }
  return layers;
}

template <typename Scalar>
Var<Scalar> apply_conv(ConvLayer<Scalar>& c, const Var<Scalar>& x) {
  return conv2d(x, c.weight.var(), c.bias.var(), c.pad);
}

template <typename Scalar, typename Fn>
void for_each_layer_param(std::vector<Layer<Scalar>>& layers, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i);
    std::visit(
        [&](auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, ConvLayer<Scalar>>) {
            fn(base + ".weight", layer.weight);
            fn(base + ".bias", layer.bias);
          } else if constexpr (std::is_same_v<T, BatchNormState<Scalar>>) {
            fn(base + ".gamma", layer.gamma);
            fn(base + ".beta", layer.beta);
          } else if constexpr (std::is_same_v<T, ResidualBlock<Scalar>>) {
            fn(base + ".conv1.weight", layer.conv1.weight);
            fn(base + ".conv1.bias", layer.conv1.bias);
            fn(base + ".bn1.gamma", layer.bn1.gamma);
            fn(base + ".bn1.beta", layer.bn1.beta);
            fn(base + ".conv2.weight", layer.conv2.weight);
            fn(base + ".conv2.bias", layer.conv2.bias);
            fn(base + ".bn2.gamma", layer.bn2.gamma);
            fn(base + ".bn2.beta", layer.bn2.beta);
            if (layer.shortcut) {
              fn(base + ".shortcut.weight", layer.shortcut->weight);
              fn(base + ".shortcut.bias", layer.shortcut->bias);
            }
          }
        },
        layers[i]);
  }
}

template <typename Scalar, typename Fn>
void for_each_batchnorm(std::vector<Layer<Scalar>>& layers, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i);
    if (auto* bn = std::get_if<BatchNormState<Scalar>>(&layers[i])) fn(base, *bn);
    if (auto* block = std::get_if<ResidualBlock<Scalar>>(&layers[i])) {
      fn(base + ".bn1", block->bn1);
      fn(base + ".bn2", block->bn2);
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> Network<Scalar>::run(std::vector<Layer<Scalar>>& layers, Var<Scalar> x) {
  for (auto& layer : layers) {
    x = std::visit(
        [&](auto& l) -> Var<Scalar> {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer<Scalar>>) {
            return apply_conv(l, x);
          } else if constexpr (std::is_same_v<T, BatchNormState<Scalar>>) {
            return batchnorm(x, l);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            return relu(x);
          } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
            return maxpool2x2(x);
          } else if constexpr (std::is_same_v<T, AvgPoolLayer>) {
            return avgpool2x2(x);
          } else {
            auto main = batchnorm(apply_conv(l.conv1, x), l.bn1);
            main = batchnorm(apply_conv(l.conv2, relu(main)), l.bn2);
            auto skip = l.shortcut ? apply_conv(*l.shortcut, x) : x;
            auto y = relu(add(main, skip));
            return l.pool ? maxpool2x2(y) : y;
          }
        },
        layer);
  }
  return x;
}

template <typename Scalar>
Var<Scalar> Network<Scalar>::forward(const Var<Scalar>& image) {
  const auto& x = image.value();
  require(x.rank() == 3 && x.channels() == spec_.input_channels, ErrorCategory::shape,
          "network '" + spec_.name + "' expects " + std::to_string(spec_.input_channels) +
              " input channels, got " + shape_string(x.shape()));
  std::vector<Var<Scalar>> branches;
  std::size_t finest = 0;
  for (std::size_t i = 0; i < spec_.scales.size(); ++i) {
    const int s = spec_.scales[i];
    if (s < spec_.scales[finest]) finest = i;
    Var<Scalar> input = image;
    if (s != 1) {
      const Index h = x.height() / s;
      const Index w = x.width() / s;
      require(h >= 1 && w >= 1, ErrorCategory::shape, "input too small for scale " + std::to_string(s));
      input = bilinear_resize(image, h, w);
    }
    branches.push_back(run(extractor_, input));
  }
  Var<Scalar> features = branches.front();
  if (branches.size() > 1) {
    const Index h = branches[finest].value().height();
    const Index w = branches[finest].value().width();
    for (auto& b : branches) {
      if (b.value().height() != h || b.value().width() != w) b = bilinear_resize(b, h, w);
    }
    features = concat_channels(branches);
  }
  return run(classifier_, features);
}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::forward(const Tensor<Scalar>& image) {
  NoGradGuard guard;
  return forward(Var<Scalar>(image)).value();
}

template <typename Scalar>
void Network<Scalar>::set_mode(BatchNormMode mode) {
  mode_ = mode;
  for (auto* layers : {&extractor_, &classifier_}) {
    for_each_batchnorm(*layers, "", [&](const std::string&, BatchNormState<Scalar>& bn) {
      bn.mode = mode;
    });
  }
}

template <typename Scalar>
std::vector<NamedParameter<Scalar>> Network<Scalar>::parameters() {
  std::vector<NamedParameter<Scalar>> out;
  const auto collect = [&](const std::string& name, Parameter<Scalar>& p) {
    out.push_back({name, &p});
  };
  for_each_layer_param(extractor_, "extractor", collect);
  for_each_layer_param(classifier_, "classifier", collect);
  return out;
}

template <typename Scalar>
std::vector<NamedBuffer<Scalar>> Network<Scalar>::buffers() {
  std::vector<NamedBuffer<Scalar>> out;
  const auto collect = [&](const std::string& base, BatchNormState<Scalar>& bn) {
    out.push_back({base + ".running_mean", &bn.running_mean});
    out.push_back({base + ".running_var", &bn.running_var});
  };
  for_each_batchnorm(extractor_, "extractor", collect);
  for_each_batchnorm(classifier_, "classifier", collect);
  return out;
}

template <typename Scalar>
std::size_t Network<Scalar>::parameter_count() {
  std::size_t n = 0;
  for (auto& p : parameters()) n += static_cast<std::size_t>(p.param->value().size());
  return n;
}

template <typename Scalar>
Network<Scalar> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network<Scalar> net;
  net.spec_ = spec;
  Initializer<Scalar> init(seed);
  net.extractor_ = instantiate(spec.extractor, spec.input_channels, init);
  net.classifier_ = instantiate(
      spec.classifier, spec.extractor_channels() * static_cast<int>(spec.scales.size()), init);
  net.set_mode(BatchNormMode::train);
  return net;
}

template <typename Scalar>
LabelMap predict_labels(const Tensor<Scalar>& scores) {
  require(scores.rank() == 3, ErrorCategory::shape, "scores must be (C, H, W)");
  LabelMap labels;
  labels.width = static_cast<int>(scores.width());
  labels.height = static_cast<int>(scores.height());
  labels.classes = argmax_channels(scores);
  if (scores.channels() == static_cast<Index>(default_palette().size())) {
    labels.palette = default_palette();
  } else {
    for (Index c = 0; c < scores.channels(); ++c)
      labels.palette.push_back({"class" + std::to_string(c), "#000000"});
  }
  return labels;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_network(const NetworkSpec&, std::uint64_t);
template Network<double> build_network(const NetworkSpec&, std::uint64_t);
template LabelMap predict_labels(const Tensor<float>&);
template LabelMap predict_labels(const Tensor<double>&);

}  // namespace mslabel
