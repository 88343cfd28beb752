#pragma once

// Binary checkpoint: magic "CWPN", little-endian u32 format version, a
// named-tensor table (u32 name length, UTF-8 name, u32 rank, u32 dims,
// little-endian float32 payload), the K-Means centroids, and a config echo.
// Loading a checkpoint reproduces every parameter bitwise; a version
// mismatch is rejected.

#include <string>

#include "cwp/config.hpp"
#include "cwp/model.hpp"

namespace cwp {

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, CwpNet& net, const RunConfig& cfg);

struct LoadedCheckpoint {
    CwpNet net;
    RunConfig cfg;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cwp
