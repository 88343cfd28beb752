#pragma once

// Channel and spatial attention gates applied per wavelet coefficient.
// Channel attention: squeeze/excite over the pooled channel vector.
// Spatial attention: k x k conv over stacked channel mean/max maps.
// Gates are sigmoid outputs; returned alongside the gated features so the
// LL spatial gate can be tapped as the degradation representation.

#include <utility>

#include "cwp/tensor.hpp"

namespace cwp {

struct ChannelAttentionParams {
    Tensor squeeze_w, squeeze_b;  // (C/r) x C x 1 x 1
    Tensor excite_w, excite_b;    // C x (C/r) x 1 x 1
    int channels = 0;
    int reduction = 4;
};

struct SpatialAttentionParams {
    Tensor w, b;  // 1 x 2 x k x k
    int kernel = 7;
};

ChannelAttentionParams make_channel_attention(int channels, int reduction, Rng& rng);
SpatialAttentionParams make_spatial_attention(int kernel, Rng& rng);

struct Gated {
    Tensor features;  // input modulated by the gate
    Tensor gate;
};

Gated channel_attention(Tape* tape, const Tensor& f, const ChannelAttentionParams& p);
Gated spatial_attention(Tape* tape, const Tensor& f, const SpatialAttentionParams& p);

}  // namespace cwp
