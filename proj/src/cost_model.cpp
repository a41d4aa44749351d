#include "mslabel/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace mslabel {

Dims3 parse_dims(const std::string& text) {
  Dims3 d{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto end = i < 2 ? text.find('x', pos) : text.size();
    require(end != std::string::npos && end > pos, ErrorCategory::invalid_input,
            "size '" + text + "' must look like CxHxW");
    const auto part = text.substr(pos, end - pos);
    for (char c : part)
      require(c >= '0' && c <= '9', ErrorCategory::invalid_input,
              "size '" + text + "' must look like CxHxW");
    require(part.size() <= 12, ErrorCategory::invalid_input, "size '" + text + "' is too large");
    d[i] = std::stoll(part);
    require(d[i] >= 1, ErrorCategory::invalid_input, "size '" + text + "' has a zero dimension");
    pos = end + 1;
  }
  return d;
}

std::string format_dims(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

namespace {

struct Counter {
  OpCostReport& report;

  void add(std::string name, const char* kind, const Dims3& out, long long ops) {
    const bool secondary = std::string_view(kind) != "conv";
    if (secondary)
      report.secondary_ops += ops;
    else
      report.conv_ops += ops;
    if (secondary && report.conv_only) return;
    report.total_ops += ops;
    report.entries.push_back({std::move(name), kind, out, ops, secondary});
  }
  static long long elements(const Dims3& d) { return d[0] * d[1] * d[2]; }

  Dims3 conv(const std::string& name, const Dims3& in, int k, int out, Padding pad) {
    Dims3 o{out, in[1], in[2]};
    if (pad == Padding::valid) {
      o[1] = in[1] - k + 1;
      o[2] = in[2] - k + 1;
      require(o[1] >= 1 && o[2] >= 1, ErrorCategory::shape,
              name + ": input " + format_dims(in) + " too small for a valid " +
                  std::to_string(k) + "x" + std::to_string(k) + " conv");
    }
    add(name, "conv", o, 2LL * k * k * in[0] * out * o[1] * o[2]);
    return o;
  }
  Dims3 pool(const std::string& name, const Dims3& in, bool max) {
    const Dims3 o{in[0], in[1] / 2, in[2] / 2};
    require(o[1] >= 1 && o[2] >= 1, ErrorCategory::shape,
            name + ": input " + format_dims(in) + " too small to pool");
    add(name, max ? "maxpool" : "avgpool", o,
        (max ? SecondaryCosts::maxpool : SecondaryCosts::avgpool) * elements(o));
    return o;
  }

  Dims3 chain(const std::vector<LayerSpec>& layers, Dims3 d, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const auto name = prefix + "." + std::to_string(i);
      switch (l.kind) {
        case LayerKind::conv: d = conv(name, d, l.k, l.out, l.pad); break;
        case LayerKind::bn: add(name, "bn", d, SecondaryCosts::bn * elements(d)); break;
        case LayerKind::relu: add(name, "relu", d, SecondaryCosts::relu * elements(d)); break;
        case LayerKind::maxpool2: d = pool(name, d, true); break;
        case LayerKind::avgpool2: d = pool(name, d, false); break;
        case LayerKind::resblock: {
          const Dims3 in = d;
          d = conv(name + ".conv1", d, 3, l.out, Padding::same);
          add(name + ".bn1", "bn", d, SecondaryCosts::bn * elements(d));
          add(name + ".relu1", "relu", d, SecondaryCosts::relu * elements(d));
          d = conv(name + ".conv2", d, 3, l.out, Padding::same);
          add(name + ".bn2", "bn", d, SecondaryCosts::bn * elements(d));
          if (in[0] != l.out) conv(name + ".shortcut", in, 1, l.out, Padding::same);
          add(name + ".add", "add", d, SecondaryCosts::add * elements(d));
          add(name + ".relu2", "relu", d, SecondaryCosts::relu * elements(d));
          if (l.pool) d = pool(name + ".pool", d, true);
          break;
        }
      }
    }
    return d;
  }
};

}  // namespace

OpCostReport count_ops(const NetworkSpec& spec, const Dims3& input, bool conv_only) {
  spec.validate();
  require(input[0] == spec.input_channels, ErrorCategory::shape,
          "network '" + spec.name + "' expects " + std::to_string(spec.input_channels) +
              " input channels, got " + format_dims(input));
  OpCostReport report;
  report.network = spec.name;
  report.input = input;
  report.conv_only = conv_only;
  Counter counter{report};

  std::vector<Dims3> branches;
  std::size_t finest = 0;
  for (std::size_t i = 0; i < spec.scales.size(); ++i) {
    const int s = spec.scales[i];
    if (s < spec.scales[finest]) finest = i;
    const auto tag = spec.scales.size() > 1 ? "extractor@" + std::to_string(s) : "extractor";
    Dims3 d = input;
    if (s != 1) {
      d = {input[0], input[1] / s, input[2] / s};
      require(d[1] >= 1 && d[2] >= 1, ErrorCategory::shape,
              "input too small for scale " + std::to_string(s));
      counter.add("downscale@" + std::to_string(s), "resize", d,
                  SecondaryCosts::bilinear * Counter::elements(d));
    }
    branches.push_back(counter.chain(spec.extractor, d, tag));
  }
  Dims3 features = branches.front();
  if (branches.size() > 1) {
    const auto target = branches[finest];
    features = {0, target[1], target[2]};
    for (std::size_t i = 0; i < branches.size(); ++i) {
      auto b = branches[i];
      if (b[1] != target[1] || b[2] != target[2]) {
        b = {b[0], target[1], target[2]};
        counter.add("upscale@" + std::to_string(spec.scales[i]), "resize", b,
                    SecondaryCosts::bilinear * Counter::elements(b));
      }
      features[0] += b[0];
    }
  }
  counter.chain(spec.classifier, features, "classifier");
  return report;
}

OpCostReport fixed_cost_report(double gop) {
  require(gop > 0, ErrorCategory::invalid_input, "cost must be positive");
  OpCostReport r;
  r.network = "fixed";
  const auto ops = static_cast<long long>(gop * 1e9 + 0.5);
  r.entries.push_back({"fixed", "conv", {}, ops, false});
  r.total_ops = r.conv_ops = ops;
  return r;
}

double frame_rate(const OpCostReport& report, const PlatformSpec& platform) {
  require(platform.throughput_gops > 0, ErrorCategory::invalid_input,
          "platform throughput must be positive");
  require(report.total_ops > 0, ErrorCategory::invalid_input, "cost report has zero operations");
  return platform.throughput_gops / report.total_gop();
}

std::string cost_report_json(const OpCostReport& report, const PlatformSpec* platform) {
  nlohmann::ordered_json j;
  j["network"] = report.network;
  j["input"] = report.input;
  j["conv_only"] = report.conv_only;
  j["total_gop"] = report.total_gop();
  j["conv_gop"] = report.conv_gop();
  j["secondary_gop"] = report.secondary_gop();
  j["total_ops"] = report.total_ops;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : report.entries)
    entries.push_back({{"name", e.name},
                       {"kind", e.kind},
                       {"output", e.output},
                       {"ops", e.ops},
                       {"gop", e.gop()}});
  j["entries"] = entries;
  if (platform) {
    j["platform"] = {{"throughput_gops", platform->throughput_gops},
                     {"power_w", platform->power_w}};
    j["frame_rate"] = frame_rate(report, *platform);
  }
  return j.dump(2) + "\n";
}

std::string cost_report_table(const OpCostReport& report, const PlatformSpec* platform) {
  std::size_t name_w = 5;
  for (const auto& e : report.entries) name_w = std::max(name_w, e.name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-8s  %-16s  %14s\n", static_cast<int>(name_w), "layer",
                "kind", "output", "GOP");
  os << buf;
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-*s  %-8s  %-16s  %14.6f\n", static_cast<int>(name_w),
                  e.name.c_str(), e.kind.c_str(), format_dims(e.output).c_str(), e.gop());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "network %s, input %s%s\n", report.network.c_str(),
                format_dims(report.input).c_str(), report.conv_only ? " (conv only)" : "");
  os << buf;
  std::snprintf(buf, sizeof buf, "total %.6f GOP (conv %.6f, secondary %.6f)\n", report.total_gop(),
                report.conv_gop(), report.secondary_gop());
  os << buf;
  if (platform) {
    std::snprintf(buf, sizeof buf, "%.6f frame/s at %.3f GOP/s (%.1f W)\n",
                  frame_rate(report, *platform), platform->throughput_gops, platform->power_w);
    os << buf;
  }
  return os.str();
}

}  // namespace mslabel
