#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mslabel/spectral_io.hpp"
#include "mslabel/superpixel.hpp"

namespace mslabel {

/// 64-bit FNV-1a, used as a content fingerprint in responses.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);
std::string hex64(std::uint64_t value);

/// Canonical cache key for a superpixel request.
std::string slic_params_key(const SlicParams& params);

/// Binary PPM (P6) of three cube channels, each min-max stretched to 0..255.
std::vector<std::uint8_t> render_display(const SpectralCube& cube, std::array<int, 3> bands);
/// Same image with boundary pixels painted black.
std::vector<std::uint8_t> render_overlay(const SpectralCube& cube, std::array<int, 3> bands,
                                         const BinaryMask& boundary);

struct FrameSummary {
  std::string id;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::size_t labeled_pixels = 0;
  std::string labels_hash;  // FNV-1a of the LBL1 bytes
};

struct SuperpixelView {
  std::string params_key;
  std::shared_ptr<const SegmentationMap> segmentation;
  BinaryMask boundary;
};

struct Assignment {
  std::uint32_t superpixel_id = 0;
  int class_id = 0;
};

/// Frames are the *.msc cubes of one directory (id = file stem). Labels
/// live in `<state>/labels/<id>.lbl` and every acknowledged write also
/// appends a line to `<state>/journal.jsonl`.
class LabelStore {
 public:
  LabelStore(std::filesystem::path frames_dir, std::filesystem::path state_dir,
             std::vector<ClassInfo> palette = default_palette());
  ~LabelStore();
  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  std::vector<FrameSummary> list_frames();
  const std::vector<ClassInfo>& classes() const { return palette_; }

  std::vector<std::uint8_t> display(const std::string& id, std::array<int, 3> bands);
  SuperpixelView superpixels(const std::string& id, const SlicParams& params);
  std::vector<std::uint8_t> overlay(const std::string& id, const SuperpixelView& view,
                                    std::array<int, 3> bands);

  /// Applies the assignments in request order (last wins) against the
  /// segmentation fetched under `params_key`. Nothing is written when any
  /// entry is invalid.
  FrameSummary put_labels(const std::string& id, const std::string& params_key,
                          const std::vector<Assignment>& assignments);
  FrameSummary propagate(const std::string& id, const std::string& source_id,
                         const SlicParams& params);
  LabelMap labels(const std::string& id);

 private:
  struct Record;
  Record& record(const std::string& id);
  const SpectralCube& cube_locked(Record& r);
  FrameSummary summary_locked(Record& r);
  void commit_locked(Record& r, LabelMap labels, const std::string& op);

  std::filesystem::path frames_dir_;
  std::filesystem::path state_dir_;
  std::vector<ClassInfo> palette_;
  std::map<std::string, std::unique_ptr<Record>> records_;
  std::mutex journal_mutex_;
  std::uint64_t journal_seq_ = 0;
};

/// HTTP front end for a LabelStore; routes live under /api/.
class LabelServer {
 public:
  explicit LabelServer(LabelStore& store);
  ~LabelServer();

  /// Binds to `port`, or to a free port when `port` is 0. Returns the port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool run();
  void stop();
  bool is_running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mslabel
