#pragma once

// CWP-Net assembly: shallow embedding, per-scale CNNBlock + WAE encoder,
// bottleneck, WAD + CNNBlock decoder, a wavelet prompt block on every skip
// connection, and multi-input multi-output heads. Downsampled copies of the
// input are injected into the encoder and a restored image is produced at
// every resolution level.

#include <string>
#include <utility>
#include <vector>

#include "cwp/prompt.hpp"
#include "cwp/tensor.hpp"
#include "cwp/wavelet_blocks.hpp"

namespace cwp {

struct ModelConfig {
    int scales = 3;         // resolution levels (full, 1/2, ..., 1/2^(scales-1))
    int base_channels = 8;  // width at full resolution; doubles per scale
    int prompt_count = 5;   // M prompt components per subband
    int clusters = 5;       // K
    int conv_depth = 4;     // N plain convs on the LL branch of each WPB
    int in_channels = 3;
    int prompt_base = 16;   // Hp = Wp of the stored prompt components
    int reduction = 4;      // channel-attention squeeze ratio
    int sa_kernel = 7;      // spatial-attention kernel

    void validate() const;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct CwpNet {
    ModelConfig cfg;
    Tensor embed_w, embed_b;                  // 3x3, in_channels -> C0
    std::vector<Tensor> inject_w, inject_b;   // per scale 2..S, 3x3 on pooled input
    std::vector<CnnBlockParams> enc_blocks;   // scales-1 of them
    std::vector<WaeParams> waes;              // scales-1
    CnnBlockParams bottleneck;
    std::vector<WpbParams> wpbs;              // scales-1, index 0 = full resolution skip
    std::vector<WadParams> wads;              // scales-1, applied deepest first
    std::vector<CnnBlockParams> dec_blocks;   // scales-1
    std::vector<Tensor> head_w, head_b;       // per level 1..S, 3x3 C_level -> 3
    ClusterModel cluster;                     // shared across skip levels

    std::vector<NamedParam> parameters();
    size_t parameter_count();
    void zero_grads();
    int channels_at(int level) const;  // level 0 = full resolution
    int rep_wae_index() const;         // which WAE feeds the degradation tap
};

CwpNet make_cwp_net(const ModelConfig& cfg, uint32_t seed);

struct ForwardResult {
    std::vector<Tensor> outputs;      // [Y1 full res, Y2 half, ...]
    std::vector<DegradationRep> reps;
    Tensor ll_gate;                   // the tapped gate, for visualization
};

// x must be N x in_channels x H x W with H,W multiples of 2^scales.
ForwardResult forward(Tape* tape, CwpNet& net, const Tensor& x, bool warmup);

// Pad -> forward -> full-resolution output -> crop -> clamp to [0,1].
Tensor restore(CwpNet& net, const Tensor& x);

// Reflective (edge-excluding) padding on the bottom/right to the next
// multiple of `multiple`.
Tensor pad_to_multiple(const Tensor& x, int multiple);

}  // namespace cwp
