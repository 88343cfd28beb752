#include "cwp/attention.hpp"

#include <cmath>

namespace cwp {

static Tensor he_init(std::vector<int> dims, Rng& rng) {
    const int fan_in = dims[1] * dims[2] * dims[3];
    return Tensor::randn(std::move(dims), rng, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

ChannelAttentionParams make_channel_attention(int channels, int reduction, Rng& rng) {
    if (reduction <= 0 || channels % reduction != 0)
        throw ConfigError("channel attention: reduction " + std::to_string(reduction) +
                          " must divide channel count " + std::to_string(channels));
    const int mid = channels / reduction;
    ChannelAttentionParams p;
    p.channels = channels;
    p.reduction = reduction;
    p.squeeze_w = he_init({mid, channels, 1, 1}, rng).set_trainable(true);
    p.squeeze_b = Tensor({mid}).set_trainable(true);
    p.excite_w = he_init({channels, mid, 1, 1}, rng).set_trainable(true);
    p.excite_b = Tensor({channels}).set_trainable(true);
    return p;
}

SpatialAttentionParams make_spatial_attention(int kernel, Rng& rng) {
    if (kernel % 2 == 0)
        throw ConfigError("spatial attention: kernel must be odd, got " + std::to_string(kernel));
    SpatialAttentionParams p;
    p.kernel = kernel;
    p.w = he_init({1, 2, kernel, kernel}, rng).set_trainable(true);
    p.b = Tensor({1}).set_trainable(true);
    return p;
}

Gated channel_attention(Tape* tape, const Tensor& f, const ChannelAttentionParams& p) {
    if (f.rank() != 4 || f.dim(1) != p.channels)
        throw ShapeError("channel_attention: expected channel count " + std::to_string(p.channels) +
                         ", got " + dims_to_string(f.dims()));
    Tensor pooled = global_avg_pool(tape, f);
    Tensor mid = relu(tape, conv2d(tape, pooled, p.squeeze_w, p.squeeze_b));
    Tensor gate = sigmoid(tape, conv2d(tape, mid, p.excite_w, p.excite_b));
    return {mul(tape, f, gate), gate};
}

Gated spatial_attention(Tape* tape, const Tensor& f, const SpatialAttentionParams& p) {
    if (p.kernel % 2 == 0)
        throw ConfigError("spatial_attention: kernel must be odd, got " + std::to_string(p.kernel));
    Tensor stacked = concat_channels(tape, {channel_mean(tape, f), channel_max(tape, f)});
    Tensor gate = sigmoid(tape, conv2d(tape, stacked, p.w, p.b, 1, p.kernel / 2));
    return {mul(tape, f, gate), gate};
}

}  // namespace cwp
