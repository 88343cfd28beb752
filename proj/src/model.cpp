#include "cwp/model.hpp"

#include <algorithm>
#include <cmath>

namespace cwp {

void ModelConfig::validate() const {
    if (scales < 2) throw ConfigError("model: scales must be >= 2 (the degradation tap needs a second scale)");
    if (base_channels < reduction)
        throw ConfigError("model: base_channels must be >= the attention reduction ratio");
    if (base_channels % 2 != 0) throw ConfigError("model: base_channels must be even");
    if (prompt_count < 1) throw ConfigError("model: prompt_count must be >= 1");
    if (clusters < 1) throw ConfigError("model: clusters must be >= 1");
    if (conv_depth < 1) throw ConfigError("model: conv_depth must be >= 1");
    if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
    if (sa_kernel % 2 == 0) throw ConfigError("model: sa_kernel must be odd");
}

int CwpNet::channels_at(int level) const { return cfg.base_channels << level; }

int CwpNet::rep_wae_index() const {
    // The tap sits on the WAE consuming second-scale features; with only two
    // resolution levels that block does not exist and the single WAE serves.
    return std::min(1, cfg.scales - 2);
}

static Tensor he_init(std::vector<int> dims, Rng& rng) {
    const int fan_in = dims[1] * dims[2] * dims[3];
    return Tensor::randn(std::move(dims), rng, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

CwpNet make_cwp_net(const ModelConfig& cfg, uint32_t seed) {
    cfg.validate();
    CwpNet net;
    net.cfg = cfg;
    Rng rng(seed);
    const int S = cfg.scales;

    net.embed_w = he_init({cfg.base_channels, cfg.in_channels, 3, 3}, rng).set_trainable(true);
    net.embed_b = Tensor({cfg.base_channels}).set_trainable(true);

    for (int s = 0; s < S - 1; ++s) {
        const int c = net.channels_at(s);
        net.enc_blocks.push_back(make_cnn_block(c, rng));
        net.waes.push_back(make_wae(c, 2 * c, cfg.reduction, cfg.sa_kernel, rng));
        net.inject_w.push_back(he_init({2 * c, cfg.in_channels, 3, 3}, rng).set_trainable(true));
        net.inject_b.push_back(Tensor({2 * c}).set_trainable(true));
    }
    net.bottleneck = make_cnn_block(net.channels_at(S - 1), rng);
    for (int s = 0; s < S - 1; ++s) {
        const int c = net.channels_at(s);
        net.wpbs.push_back(make_wpb(c, cfg.prompt_count, cfg.prompt_base, cfg.conv_depth,
                                    cfg.clusters, rng));
        net.wads.push_back(make_wad(2 * c, cfg.reduction, cfg.sa_kernel, rng));
        net.dec_blocks.push_back(make_cnn_block(c, rng));
    }
    for (int s = 0; s < S; ++s) {
        const int c = net.channels_at(s);
        net.head_w.push_back(he_init({cfg.in_channels, c, 3, 3}, rng).set_trainable(true));
        net.head_b.push_back(Tensor({cfg.in_channels}).set_trainable(true));
    }
    return net;
}

static void push_ca(std::vector<NamedParam>& out, const std::string& prefix,
                    const ChannelAttentionParams& p) {
    out.push_back({prefix + ".squeeze_w", p.squeeze_w});
    out.push_back({prefix + ".squeeze_b", p.squeeze_b});
    out.push_back({prefix + ".excite_w", p.excite_w});
    out.push_back({prefix + ".excite_b", p.excite_b});
}

static void push_sa(std::vector<NamedParam>& out, const std::string& prefix,
                    const SpatialAttentionParams& p) {
    out.push_back({prefix + ".w", p.w});
    out.push_back({prefix + ".b", p.b});
}

static void push_cnn(std::vector<NamedParam>& out, const std::string& prefix,
                     const CnnBlockParams& p) {
    out.push_back({prefix + ".w1", p.w1});
    out.push_back({prefix + ".b1", p.b1});
    out.push_back({prefix + ".w2", p.w2});
    out.push_back({prefix + ".b2", p.b2});
}

std::vector<NamedParam> CwpNet::parameters() {
    std::vector<NamedParam> out;
    out.push_back({"embed.w", embed_w});
    out.push_back({"embed.b", embed_b});
    const char* bands[4] = {"ll", "lh", "hl", "hh"};
    for (size_t s = 0; s < waes.size(); ++s) {
        const std::string es = "enc" + std::to_string(s);
        push_cnn(out, es + ".block", enc_blocks[s]);
        for (int j = 0; j < 4; ++j) {
            push_ca(out, es + ".wae." + bands[j] + ".ca", waes[s].ca[static_cast<size_t>(j)]);
            push_sa(out, es + ".wae." + bands[j] + ".sa", waes[s].sa[static_cast<size_t>(j)]);
        }
        out.push_back({es + ".wae.reduce_w", waes[s].reduce_w});
        out.push_back({es + ".wae.reduce_b", waes[s].reduce_b});
        out.push_back({es + ".inject_w", inject_w[s]});
        out.push_back({es + ".inject_b", inject_b[s]});
    }
    push_cnn(out, "bottleneck", bottleneck);
    const char* hi[3] = {"lh", "hl", "hh"};
    for (size_t s = 0; s < wpbs.size(); ++s) {
        const std::string ps = "wpb" + std::to_string(s);
        for (size_t i = 0; i < wpbs[s].refine_w.size(); ++i) {
            out.push_back({ps + ".refine" + std::to_string(i) + ".w", wpbs[s].refine_w[i]});
            out.push_back({ps + ".refine" + std::to_string(i) + ".b", wpbs[s].refine_b[i]});
        }
        for (int j = 0; j < 3; ++j) {
            const std::string bs = ps + "." + hi[j];
            const PromptBank& bank = wpbs[s].banks[static_cast<size_t>(j)];
            out.push_back({bs + ".components", bank.components});
            out.push_back({bs + ".alpha_w", bank.alpha_w});
            out.push_back({bs + ".alpha_b", bank.alpha_b});
            out.push_back({bs + ".refine_w", bank.refine_w});
            out.push_back({bs + ".refine_b", bank.refine_b});
            const SftParams& sft = wpbs[s].sft[static_cast<size_t>(j)];
            out.push_back({bs + ".sft.gamma_w1", sft.gamma_w1});
            out.push_back({bs + ".sft.gamma_b1", sft.gamma_b1});
            out.push_back({bs + ".sft.gamma_w2", sft.gamma_w2});
            out.push_back({bs + ".sft.gamma_b2", sft.gamma_b2});
            out.push_back({bs + ".sft.beta_w1", sft.beta_w1});
            out.push_back({bs + ".sft.beta_b1", sft.beta_b1});
            out.push_back({bs + ".sft.beta_w2", sft.beta_w2});
            out.push_back({bs + ".sft.beta_b2", sft.beta_b2});
        }
        out.push_back({ps + ".dwe.w", wpbs[s].weights.w});
    }
    for (size_t s = 0; s < wads.size(); ++s) {
        const std::string ds = "dec" + std::to_string(s);
        out.push_back({ds + ".wad.extract_w", wads[s].extract_w});
        out.push_back({ds + ".wad.extract_b", wads[s].extract_b});
        for (int j = 0; j < 4; ++j) {
            push_ca(out, ds + ".wad." + bands[j] + ".ca", wads[s].ca[static_cast<size_t>(j)]);
            push_sa(out, ds + ".wad." + bands[j] + ".sa", wads[s].sa[static_cast<size_t>(j)]);
        }
        out.push_back({ds + ".wad.expand_w", wads[s].expand_w});
        out.push_back({ds + ".wad.expand_b", wads[s].expand_b});
        push_cnn(out, ds + ".block", dec_blocks[s]);
    }
    for (size_t s = 0; s < head_w.size(); ++s) {
        out.push_back({"head" + std::to_string(s) + ".w", head_w[s]});
        out.push_back({"head" + std::to_string(s) + ".b", head_b[s]});
    }
    return out;
}

size_t CwpNet::parameter_count() {
    size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
}

void CwpNet::zero_grads() {
    for (auto& p : parameters()) p.tensor.zero_grad();
}

ForwardResult forward(Tape* tape, CwpNet& net, const Tensor& x, bool warmup) {
    const int S = net.cfg.scales;
    if (x.rank() != 4 || x.dim(1) != net.cfg.in_channels)
        throw ShapeError("forward: expected N x " + std::to_string(net.cfg.in_channels) +
                         " x H x W input, got " + dims_to_string(x.dims()));
    const int mult = 1 << S;
    if (x.dim(2) % mult != 0 || x.dim(3) % mult != 0)
        throw ShapeError("forward: spatial dims " + dims_to_string(x.dims()) +
                         " must be multiples of " + std::to_string(mult) +
                         " (pad the input, e.g. with pad_to_multiple)");

    // input pyramid for multi-input injection and the output heads
    std::vector<Tensor> xs(static_cast<size_t>(S));
    xs[0] = x;
    for (int s = 1; s < S; ++s) xs[static_cast<size_t>(s)] = avg_pool2(tape, xs[static_cast<size_t>(s - 1)]);

    ForwardResult res;

    // encoder
    std::vector<Tensor> enc_feats;  // features after each scale's CNNBlock
    Tensor f = conv2d(tape, x, net.embed_w, net.embed_b, 1, 1);
    const int tap = net.rep_wae_index();
    for (int s = 0; s < S - 1; ++s) {
        f = cnn_block(tape, f, net.enc_blocks[static_cast<size_t>(s)]);
        enc_feats.push_back(f);
        WaeOut wo = wae_forward(tape, f, net.waes[static_cast<size_t>(s)]);
        if (s == tap) {
            res.ll_gate = wo.ll_gate;
            res.reps = extract_degradation_rep(wo.ll_gate);
        }
        Tensor injected = conv2d(tape, xs[static_cast<size_t>(s + 1)],
                                 net.inject_w[static_cast<size_t>(s)],
                                 net.inject_b[static_cast<size_t>(s)], 1, 1);
        f = add(tape, wo.features, injected);
    }
    f = cnn_block(tape, f, net.bottleneck);

    // decoder with prompted skips; heads emit one output per level
    std::vector<Tensor> outputs(static_cast<size_t>(S));
    outputs[static_cast<size_t>(S - 1)] =
        add(tape, conv2d(tape, f, net.head_w[static_cast<size_t>(S - 1)],
                         net.head_b[static_cast<size_t>(S - 1)], 1, 1),
            xs[static_cast<size_t>(S - 1)]);
    for (int s = S - 2; s >= 0; --s) {
        Tensor up = wad_forward(tape, f, net.wads[static_cast<size_t>(s)]);
        Tensor skip = wpb_forward(tape, enc_feats[static_cast<size_t>(s)], res.reps,
                                  net.wpbs[static_cast<size_t>(s)], net.cluster, warmup);
        f = cnn_block(tape, add(tape, up, skip), net.dec_blocks[static_cast<size_t>(s)]);
        outputs[static_cast<size_t>(s)] =
            add(tape, conv2d(tape, f, net.head_w[static_cast<size_t>(s)],
                             net.head_b[static_cast<size_t>(s)], 1, 1),
                xs[static_cast<size_t>(s)]);
    }
    res.outputs = std::move(outputs);
    return res;
}

Tensor pad_to_multiple(const Tensor& x, int multiple) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ht = ((H + multiple - 1) / multiple) * multiple;
    const int Wt = ((W + multiple - 1) / multiple) * multiple;
    if (Ht == H && Wt == W) return x;
    if (Ht - H >= H || Wt - W >= W)
        throw ShapeError("pad_to_multiple: input " + dims_to_string(x.dims()) +
                         " too small to reflect-pad to a multiple of " + std::to_string(multiple));
    Tensor out({N, C, Ht, Wt});
    auto reflect = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ht; ++i) {
                const int si = reflect(i, H);
                for (int j = 0; j < Wt; ++j)
                    out.at(n, c, i, j) = x.at(n, c, si, reflect(j, W));
            }
    return out;
}

Tensor restore(CwpNet& net, const Tensor& x) {
    const int H = x.dim(2), W = x.dim(3);
    Tensor padded = pad_to_multiple(x, 1 << net.cfg.scales);
    const bool warm = !net.cluster.fitted;
    ForwardResult res = forward(nullptr, net, padded, warm);
    const Tensor& y = res.outputs[0];
    Tensor out({x.dim(0), x.dim(1), H, W});
    for (int n = 0; n < x.dim(0); ++n)
        for (int c = 0; c < x.dim(1); ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    out.at(n, c, i, j) = std::clamp(y.at(n, c, i, j), 0.0f, 1.0f);
    return out;
}

}  // namespace cwp
