#pragma once

// Synthetic degradation generators for the five patterns (Gaussian noise,
// rain streaks, haze, low light, motion blur) and manifest-driven dataset
// assembly. Images live on [0,1]; the noise level sigma is given on the
// 0-255 convention and divided by 255 at use. Every generator is a pure
// function of (image, params, seed).

#include <string>
#include <variant>
#include <vector>

#include "cwp/tensor.hpp"

namespace cwp {

struct NoiseParams {
    float sigma = 25.0f;  // gray levels on the 0-255 scale
};

struct RainParams {
    float density = 2.0f;   // streaks per kilopixel
    float angle = 80.0f;    // degrees, 90 = vertical
    float length = 15.0f;   // px
    float intensity = 0.5f; // 0-1 streak brightness
};

struct HazeParams {
    float t = 0.5f;  // transmission
    float a = 0.9f;  // airlight
};

struct LowLightParams {
    float gamma = 3.0f;  // >= 1
};

struct BlurParams {
    int kernel_id = 0;  // selects an angle from the bundled bank
    int size = 0;       // odd; 0 = the bank's default for this id
};

using DegradationKind = std::variant<NoiseParams, RainParams, HazeParams, LowLightParams, BlurParams>;

std::string kind_name(const DegradationKind& kind);

struct DegradationRecord {
    Tensor clean;     // 1 x 3 x H x W, values in [0,1]
    Tensor degraded;  // same dims, clamped to [0,1]
    DegradationKind kind;
    std::string source_id;
};

Tensor apply_noise(const Tensor& img, float sigma, uint32_t seed);
Tensor apply_rain(const Tensor& img, const RainParams& p, uint32_t seed);
Tensor apply_haze(const Tensor& img, float t, float a);
Tensor apply_lowlight(const Tensor& img, float gamma);
// kernel must be a square odd-sized tensor whose entries sum to 1.
Tensor apply_blur(const Tensor& img, const Tensor& kernel);

Tensor apply_kind(const Tensor& img, const DegradationKind& kind, uint32_t seed);

inline constexpr int kBlurBankSize = 8;
// Linear-motion kernel from the bundled bank: angle picked by kernel_id,
// length = size (odd, defaulted per id to 5..15 px).
Tensor motion_blur_kernel(int kernel_id, int size = 0);

// ---- manifests ----------------------------------------------------------------

struct ManifestEntry {
    std::string clean_path;
    DegradationKind kind;
    uint32_t seed = 0;
};

enum class Regime { Balanced, Imbalanced };

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Regime regime = Regime::Balanced;
};

// One record per line: <clean_path> <kind> <key=value ...> <seed>
DatasetManifest parse_manifest(const std::string& path);
DegradationKind parse_kind_spec(const std::vector<std::string>& tokens);  // kind + key=value...
std::string kind_spec_string(const DegradationKind& kind);

// Balanced: every kind applied to every clean image. Imbalanced: each kind
// gets its own disjoint pool of clean images.
DatasetManifest make_balanced_manifest(const std::vector<std::string>& clean_paths,
                                       const std::vector<DegradationKind>& kinds, uint32_t seed);
DatasetManifest make_imbalanced_manifest(
    const std::vector<std::vector<std::string>>& pools_per_kind,
    const std::vector<DegradationKind>& kinds, uint32_t seed);

std::vector<DegradationRecord> build_dataset(const DatasetManifest& manifest);

// Degradation presets used by the analysis suite.
std::vector<std::pair<std::string, DegradationKind>> standard_presets();

}  // namespace cwp
