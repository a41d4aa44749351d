#include "mslabel/checkpoint.hpp"

#include <cstdio>
#include <map>

#include "binary_io.hpp"
#include "json.hpp"
#include "mslabel/spectral_io.hpp"

namespace mslabel {

namespace {

template <typename Scalar>
SpectralCube to_cube(const Tensor<Scalar>& t) {
  SpectralCube cube(static_cast<int>(t.size()), 1, 1);
  cube.data() = t.array().template cast<float>();
  return cube;
}

std::string tensor_file(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tensor_%03zu.msc", index);
  return buf;
}

}  // namespace

template <typename Scalar>
void save_network(const std::filesystem::path& dir, Network<Scalar>& net) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json index;
  index["format"] = "mslabel-checkpoint-1";
  index["spec"] = nlohmann::ordered_json::parse(network_spec_to_json(net.spec()));
  index["tensors"] = nlohmann::ordered_json::array();
  std::size_t n = 0;
  const auto store = [&](const std::string& name, const char* kind, const Tensor<Scalar>& t) {
    const auto file = tensor_file(n++);
    write_cube(dir / file, to_cube(t));
    index["tensors"].push_back(
        {{"name", name}, {"kind", kind}, {"shape", t.shape()}, {"file", file}});
  };
  for (auto& p : net.parameters()) store(p.name, "parameter", p.param->value());
  for (auto& b : net.buffers()) store(b.name, "buffer", *b.tensor);
  detail::write_text_atomic(dir / "index.json", index.dump(2) + "\n");
}

template <typename Scalar>
Network<Scalar> load_network(const std::filesystem::path& dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(detail::read_text(dir / "index.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, "checkpoint index: " + std::string(e.what()));
  }
  auto net = build_network<Scalar>(parse_network_spec(index.at("spec").dump()), 0);
  std::map<std::string, Tensor<Scalar>*> slots;
  for (auto& p : net.parameters()) slots[p.name] = &p.param->value();
  for (auto& b : net.buffers()) slots[b.name] = b.tensor;
  std::size_t loaded = 0;
  for (const auto& entry : index.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = slots.find(name);
    require(it != slots.end(), ErrorCategory::io, "checkpoint tensor '" + name + "' is unknown");
    const auto shape = entry.at("shape").get<Shape>();
    require(shape == it->second->shape(), ErrorCategory::io,
            "checkpoint tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                shape_string(it->second->shape()));
    const auto cube = read_cube(dir / entry.at("file").get<std::string>());
    require(static_cast<Index>(cube.data().size()) == it->second->size(), ErrorCategory::io,
            "checkpoint tensor '" + name + "' has the wrong element count");
    it->second->array() = cube.data().template cast<Scalar>();
    ++loaded;
  }
  require(loaded == slots.size(), ErrorCategory::io, "checkpoint is missing tensors");
  net.set_mode(BatchNormMode::eval);
  return net;
}

template void save_network(const std::filesystem::path&, Network<float>&);
template void save_network(const std::filesystem::path&, Network<double>&);
template Network<float> load_network(const std::filesystem::path&);
template Network<double> load_network(const std::filesystem::path&);

}  // namespace mslabel
