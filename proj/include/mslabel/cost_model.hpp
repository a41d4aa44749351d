#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mslabel/architectures.hpp"

namespace mslabel {

/// (C, H, W)
using Dims3 = std::array<long long, 3>;

Dims3 parse_dims(const std::string& text);  // "CxHxW"
std::string format_dims(const Dims3& dims);

/// Ops charged per element or output by the non-convolution terms.
struct SecondaryCosts {
  static constexpr long long bn = 2;        // scale + shift per element
  static constexpr long long relu = 1;
  static constexpr long long maxpool = 3;   // three compares per output
  static constexpr long long avgpool = 4;   // three adds and a scale per output
  static constexpr long long bilinear = 8;  // per output element
  static constexpr long long add = 1;       // residual sum per element
};

struct OpCostEntry {
  std::string name;
  std::string kind;  // conv, bn, relu, maxpool, avgpool, resize, add
  Dims3 output{};
  long long ops = 0;
  bool secondary = false;

  double gop() const { return static_cast<double>(ops) / 1e9; }
};

struct OpCostReport {
  std::string network;
  Dims3 input{};
  bool conv_only = false;
  std::vector<OpCostEntry> entries;
  long long total_ops = 0;
  long long conv_ops = 0;
  long long secondary_ops = 0;

  double total_gop() const { return static_cast<double>(total_ops) / 1e9; }
  double conv_gop() const { return static_cast<double>(conv_ops) / 1e9; }
  double secondary_gop() const { return static_cast<double>(secondary_ops) / 1e9; }
};

/// Multiply and add are counted separately: a k x k conv costs
/// 2 k^2 Cin Cout Hout Wout. With `conv_only`, only conv entries are kept.
OpCostReport count_ops(const NetworkSpec& spec, const Dims3& input, bool conv_only = false);

/// Report whose only entry carries `gop` giga-ops, for projections.
OpCostReport fixed_cost_report(double gop);

struct PlatformSpec {
  double throughput_gops = 96.0;
  double power_w = 10.0;
};

double frame_rate(const OpCostReport& report, const PlatformSpec& platform);

std::string cost_report_json(const OpCostReport& report, const PlatformSpec* platform = nullptr);
/// Aligned per-layer table for terminals.
std::string cost_report_table(const OpCostReport& report, const PlatformSpec* platform = nullptr);

}  // namespace mslabel
