#pragma once

// Wavelet attention blocks. The encoder block (WAE) decomposes features into
// four Haar subbands, gates each with channel+spatial attention, and fuses
// them with a 1x1 conv; it halves the spatial dims and replaces strided
// downsampling. The decoder block (WAD) mirrors it: a 3x3 conv produces four
// channel groups treated as subbands, attention refines them, and the
// inverse transform doubles the spatial dims. The LL spatial-attention gate
// of the encoder block is tapped as the degradation representation.

#include <array>
#include <vector>

#include "cwp/attention.hpp"
#include "cwp/frequency.hpp"
#include "cwp/tensor.hpp"

namespace cwp {

struct CnnBlockParams {
    Tensor w1, b1, w2, b2;  // two 3x3 convs, residual around the pair
};

CnnBlockParams make_cnn_block(int channels, Rng& rng);
Tensor cnn_block(Tape* tape, const Tensor& x, const CnnBlockParams& p);

struct WaeParams {
    std::array<ChannelAttentionParams, 4> ca;  // indexed LL,LH,HL,HH
    std::array<SpatialAttentionParams, 4> sa;
    Tensor reduce_w, reduce_b;  // 1x1, 4*C_in -> C_out
    int in_channels = 0;
    int out_channels = 0;
};

WaeParams make_wae(int in_channels, int out_channels, int reduction, int sa_kernel, Rng& rng);

struct WaeOut {
    Tensor features;  // N x C_out x H/2 x W/2
    Tensor ll_gate;   // N x 1 x H/2 x W/2
};

WaeOut wae_forward(Tape* tape, const Tensor& f, const WaeParams& p);

struct WadParams {
    Tensor extract_w, extract_b;  // 3x3, C_in -> 2*C_in (split into 4 groups)
    std::array<ChannelAttentionParams, 4> ca;
    std::array<SpatialAttentionParams, 4> sa;
    Tensor expand_w, expand_b;  // 1x1 on the recombined C_in/2 channels
    int in_channels = 0;
};

WadParams make_wad(int in_channels, int reduction, int sa_kernel, Rng& rng);
Tensor wad_forward(Tape* tape, const Tensor& f, const WadParams& p);

// Pooled, flattened LL attention gate: one length-64 vector per batch item,
// entries in (0,1).
inline constexpr int kDegradationRepDim = 64;

struct DegradationRep {
    std::vector<float> v;
};

std::vector<DegradationRep> extract_degradation_rep(const Tensor& ll_gate);

}  // namespace cwp
