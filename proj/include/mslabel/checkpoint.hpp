#pragma once

#include <filesystem>

#include "mslabel/architectures.hpp"

namespace mslabel {

/// Writes `index.json` (spec plus tensor names/shapes) and one MSC1 file per
/// parameter and batch-norm buffer. Values are stored as 32-bit floats.
template <typename Scalar>
void save_network(const std::filesystem::path& dir, Network<Scalar>& net);

template <typename Scalar>
Network<Scalar> load_network(const std::filesystem::path& dir);

}  // namespace mslabel
