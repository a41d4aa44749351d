#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mslabel/adam.hpp"
#include "mslabel/architectures.hpp"
#include "mslabel/spectral_io.hpp"
#include "mslabel/superpixel.hpp"

namespace mslabel {

enum class Split { train, test };

struct FrameEntry {
  std::string id;
  std::filesystem::path cube;
  std::filesystem::path labels;
  Split split = Split::train;

  bool operator==(const FrameEntry&) const = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<FrameEntry> frames;

  std::size_t count(Split split) const;
  std::vector<FrameEntry> subset(Split split) const;
  /// Unique ids; does not touch the files.
  void validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Seeded uniform partition. Frames beyond n_train + n_test are dropped.
DatasetManifest split_dataset(std::vector<FrameEntry> frames, std::size_t n_train,
                              std::size_t n_test, std::uint64_t seed);

/// Paths inside `dir` are stored relative to the manifest's directory.
std::string manifest_to_json(const DatasetManifest& manifest,
                             const std::filesystem::path& base = {});
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base = {});
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Block majority vote that ignores unlabeled pixels; ties go to the lower
/// class and an all-unlabeled block stays unlabeled.
LabelMap downsample_labels(const LabelMap& labels, int factor);

/// Ratio between input and score resolution (product of the 2x poolings).
int output_stride(const NetworkSpec& spec);

struct TrainConfig {
  int epochs = 100;
  AdamConfig adam;
  int batch_size = 1;  // frames whose gradients are averaged per step
  std::uint64_t seed = 0;
  bool rgb_only = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_err = 0;
  std::optional<double> test_err;  // absent when the manifest has no test frames

  bool operator==(const EpochRecord&) const = default;
};

struct History {
  std::vector<EpochRecord> epochs;

  std::string to_jsonl() const;
  bool operator==(const History&) const = default;
};

struct Frame {
  std::string id;
  SpectralCube cube;
  LabelMap labels;
};

enum class FramePurpose { optimize, evaluate };

/// Where training gets its pixels. The purpose tag lets tests account for
/// which frames feed the optimizer.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual Frame load(const FrameEntry& entry, FramePurpose purpose) = 0;
};

class DiskFrameSource final : public FrameSource {
 public:
  Frame load(const FrameEntry& entry, FramePurpose purpose) override;
};

/// Image tensor for a cube, optionally cut down to channels 0..2.
template <typename Scalar>
Tensor<Scalar> cube_to_tensor(const SpectralCube& cube, bool rgb_only = false);

template <typename Scalar>
struct TrainResult {
  Network<Scalar> network;
  History history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename Scalar>
TrainResult<Scalar> train(const DatasetManifest& manifest, const NetworkSpec& spec,
                          const TrainConfig& config, FrameSource* source = nullptr,
                          const EpochCallback& on_epoch = {});

}  // namespace mslabel
