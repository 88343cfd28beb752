#include "cwp/wavelet_blocks.hpp"

#include <cmath>

namespace cwp {

static Tensor he_init(std::vector<int> dims, Rng& rng) {
    const int fan_in = dims[1] * dims[2] * dims[3];
    return Tensor::randn(std::move(dims), rng, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

CnnBlockParams make_cnn_block(int channels, Rng& rng) {
    CnnBlockParams p;
    p.w1 = he_init({channels, channels, 3, 3}, rng).set_trainable(true);
    p.b1 = Tensor({channels}).set_trainable(true);
    p.w2 = he_init({channels, channels, 3, 3}, rng).set_trainable(true);
    p.b2 = Tensor({channels}).set_trainable(true);
    return p;
}

Tensor cnn_block(Tape* tape, const Tensor& x, const CnnBlockParams& p) {
    Tensor h = relu(tape, conv2d(tape, x, p.w1, p.b1, 1, 1));
    Tensor y = conv2d(tape, h, p.w2, p.b2, 1, 1);
    return add(tape, x, y);
}

WaeParams make_wae(int in_channels, int out_channels, int reduction, int sa_kernel, Rng& rng) {
    WaeParams p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    for (int j = 0; j < 4; ++j) {
        p.ca[static_cast<size_t>(j)] = make_channel_attention(in_channels, reduction, rng);
        p.sa[static_cast<size_t>(j)] = make_spatial_attention(sa_kernel, rng);
    }
    p.reduce_w = he_init({out_channels, 4 * in_channels, 1, 1}, rng).set_trainable(true);
    p.reduce_b = Tensor({out_channels}).set_trainable(true);
    return p;
}

WaeOut wae_forward(Tape* tape, const Tensor& f, const WaeParams& p) {
    if (f.rank() != 4 || f.dim(1) != p.in_channels)
        throw ShapeError("wae_forward: expected " + std::to_string(p.in_channels) +
                         " channels, got " + dims_to_string(f.dims()));
    SubbandSet s = dwt2(tape, f);
    std::vector<Tensor> refined;
    refined.reserve(4);
    Tensor ll_gate;
    for (int j = 0; j < 4; ++j) {
        Gated ca = channel_attention(tape, s.band(j), p.ca[static_cast<size_t>(j)]);
        Gated sa = spatial_attention(tape, ca.features, p.sa[static_cast<size_t>(j)]);
        if (j == 0) ll_gate = sa.gate;
        refined.push_back(sa.features);
    }
    Tensor fused = conv2d(tape, concat_channels(tape, refined), p.reduce_w, p.reduce_b);
    return {fused, ll_gate};
}

WadParams make_wad(int in_channels, int reduction, int sa_kernel, Rng& rng) {
    if (in_channels % 2 != 0)
        throw ConfigError("wad: input channels must be even, got " + std::to_string(in_channels));
    WadParams p;
    p.in_channels = in_channels;
    p.extract_w = he_init({2 * in_channels, in_channels, 3, 3}, rng).set_trainable(true);
    p.extract_b = Tensor({2 * in_channels}).set_trainable(true);
    const int cg = in_channels / 2;
    for (int j = 0; j < 4; ++j) {
        p.ca[static_cast<size_t>(j)] = make_channel_attention(cg, reduction, rng);
        p.sa[static_cast<size_t>(j)] = make_spatial_attention(sa_kernel, rng);
    }
    p.expand_w = he_init({cg, cg, 1, 1}, rng).set_trainable(true);
    p.expand_b = Tensor({cg}).set_trainable(true);
    return p;
}

Tensor wad_forward(Tape* tape, const Tensor& f, const WadParams& p) {
    if (f.rank() != 4 || f.dim(1) != p.in_channels)
        throw ShapeError("wad_forward: expected " + std::to_string(p.in_channels) +
                         " channels, got " + dims_to_string(f.dims()));
    Tensor freq = conv2d(tape, f, p.extract_w, p.extract_b, 1, 1);
    std::vector<Tensor> groups = split_channels(tape, freq, 4);
    SubbandSet s;
    for (int j = 0; j < 4; ++j) {
        Gated ca = channel_attention(tape, groups[static_cast<size_t>(j)], p.ca[static_cast<size_t>(j)]);
        Gated sa = spatial_attention(tape, ca.features, p.sa[static_cast<size_t>(j)]);
        (j == 0 ? s.ll : j == 1 ? s.lh : j == 2 ? s.hl : s.hh) = sa.features;
    }
    Tensor spatial = idwt2(tape, s);
    return conv2d(tape, spatial, p.expand_w, p.expand_b);
}

std::vector<DegradationRep> extract_degradation_rep(const Tensor& ll_gate) {
    if (ll_gate.rank() != 4)
        throw ShapeError("extract_degradation_rep: expected a 4-D gate, got " +
                         dims_to_string(ll_gate.dims()));
    const int side = 8;
    if (ll_gate.dim(2) < side || ll_gate.dim(3) < side)
        throw ShapeError("extract_degradation_rep: gate " + dims_to_string(ll_gate.dims()) +
                         " smaller than the " + std::to_string(side) + "x" + std::to_string(side) +
                         " pooling grid (inputs must be at least 32x32)");
    Tensor pooled = adaptive_avg_pool(nullptr, ll_gate, side, side);
    const int N = pooled.dim(0), C = pooled.dim(1);
    std::vector<DegradationRep> reps(static_cast<size_t>(N));
    const size_t per = static_cast<size_t>(C) * side * side;
    for (int n = 0; n < N; ++n) {
        reps[static_cast<size_t>(n)].v.assign(pooled.data() + static_cast<size_t>(n) * per,
                                              pooled.data() + static_cast<size_t>(n + 1) * per);
    }
    return reps;
}

}  // namespace cwp
