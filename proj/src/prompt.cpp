#include "cwp/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cwp {

static Tensor he_init(std::vector<int> dims, Rng& rng) {
    const int fan_in = dims[1] * dims[2] * dims[3];
    return Tensor::randn(std::move(dims), rng, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

PromptBank make_prompt_bank(int channels, int count, int base_size, Rng& rng) {
    if (count < 1) throw ConfigError("prompt bank: component count must be >= 1");
    PromptBank b;
    b.count = count;
    b.components = Tensor::randn({count, channels, base_size, base_size}, rng, 0.02f)
                       .set_trainable(true);
    b.alpha_w = he_init({count, channels, 1, 1}, rng).set_trainable(true);
    b.alpha_b = Tensor({count}).set_trainable(true);
    b.refine_w = he_init({channels, channels, 3, 3}, rng).set_trainable(true);
    b.refine_b = Tensor({channels}).set_trainable(true);
    return b;
}

// Weighted mix of the M resized components: out[n] = sum_m alpha[n,m] * comp[m].
static Tensor mix_components(Tape* tape, const Tensor& alpha, const Tensor& comps) {
    const int N = alpha.dim(0), M = alpha.dim(1);
    const int C = comps.dim(1), H = comps.dim(2), W = comps.dim(3);
    if (comps.dim(0) != M)
        throw ShapeError("prompt mix: component count " + std::to_string(comps.dim(0)) +
                         " does not match weight count " + std::to_string(M));
    Tensor out({N, C, H, W});
    const size_t chw = static_cast<size_t>(C) * H * W;
    const float* pa = alpha.data();
    const float* pc = comps.data();
    float* po = out.data();
    for (int n = 0; n < N; ++n) {
        float* dst = po + static_cast<size_t>(n) * chw;
        std::fill(dst, dst + chw, 0.0f);
        for (int m = 0; m < M; ++m) {
            const float a = pa[static_cast<size_t>(n) * M + m];
            const float* src = pc + static_cast<size_t>(m) * chw;
            for (size_t i = 0; i < chw; ++i) dst[i] += a * src[i];
        }
    }
    if (tape) {
        auto ad = alpha.ptr();
        auto cd = comps.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            ad->ensure_grad();
            cd->ensure_grad();
            const float* g = od->grad.data();
            for (int n = 0; n < N; ++n) {
                const float* gn = g + static_cast<size_t>(n) * chw;
                for (int m = 0; m < M; ++m) {
                    const float a = ad->values[static_cast<size_t>(n) * M + m];
                    const float* cm = cd->values.data() + static_cast<size_t>(m) * chw;
                    float* gc = cd->grad.data() + static_cast<size_t>(m) * chw;
                    double dot = 0.0;
                    for (size_t i = 0; i < chw; ++i) {
                        gc[i] += a * gn[i];
                        dot += static_cast<double>(gn[i]) * cm[i];
                    }
                    ad->grad[static_cast<size_t>(n) * M + m] += static_cast<float>(dot);
                }
            }
        });
    }
    return out;
}

Tensor prompt_generate(Tape* tape, const Tensor& z, const PromptBank& bank) {
    Tensor logits = conv2d(tape, global_avg_pool(tape, z), bank.alpha_w, bank.alpha_b);
    Tensor alpha = softmax(tape, logits, 1);  // N x M x 1 x 1
    Tensor resized = bilinear_resize(tape, bank.components, z.dim(2), z.dim(3));
    Tensor mixed = mix_components(tape, alpha, resized);
    return conv2d(tape, mixed, bank.refine_w, bank.refine_b, 1, 1);
}

SftParams make_sft(int channels, Rng& rng) {
    SftParams p;
    p.gamma_w1 = he_init({channels, channels, 1, 1}, rng).set_trainable(true);
    p.gamma_b1 = Tensor({channels}).set_trainable(true);
    p.gamma_w2 = he_init({channels, channels, 1, 1}, rng).set_trainable(true);
    p.gamma_b2 = Tensor({channels}).set_trainable(true);
    p.beta_w1 = he_init({channels, channels, 1, 1}, rng).set_trainable(true);
    p.beta_b1 = Tensor({channels}).set_trainable(true);
    p.beta_w2 = he_init({channels, channels, 1, 1}, rng).set_trainable(true);
    p.beta_b2 = Tensor({channels}).set_trainable(true);
    return p;
}

Tensor sft_interact(Tape* tape, const Tensor& z, const Tensor& l, const SftParams& p) {
    if (z.dims() != l.dims())
        throw ShapeError("sft_interact: prompt dims " + dims_to_string(l.dims()) +
                         " do not match feature dims " + dims_to_string(z.dims()));
    Tensor gamma = conv2d(tape, conv2d(tape, l, p.gamma_w1, p.gamma_b1), p.gamma_w2, p.gamma_b2);
    Tensor beta = conv2d(tape, conv2d(tape, l, p.beta_w1, p.beta_b1), p.beta_w2, p.beta_b2);
    return add(tape, add(tape, mul(tape, gamma, z), beta), z);
}

// ---- K-Means ----------------------------------------------------------------

static double sq_dist(const float* a, const float* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double t = static_cast<double>(a[i]) - b[i];
        acc += t * t;
    }
    return acc;
}

ClusterModel kmeans_fit(const std::vector<std::vector<float>>& points, int k, uint32_t seed) {
    if (k < 1) throw ConfigError("kmeans_fit: k must be >= 1");
    const size_t n = points.size();
    if (n < static_cast<size_t>(k))
        throw DataError("kmeans_fit: " + std::to_string(n) + " points cannot form " +
                        std::to_string(k) + " clusters");
    const int d = static_cast<int>(points[0].size());
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != d)
            throw ShapeError("kmeans_fit: inconsistent point dimension");

    ClusterModel m;
    m.k = k;
    m.dim = d;
    m.seed = seed;
    m.centroids.assign(static_cast<size_t>(k) * d, 0.0f);

    // farthest-point seeding, first pick from the seed
    Rng rng(seed);
    std::vector<size_t> chosen;
    chosen.push_back(rng.below(static_cast<uint32_t>(n)));
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
        const float* last = points[chosen.back()].data();
        size_t far_i = 0;
        double far_d = -1.0;
        for (size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], sq_dist(points[i].data(), last, d));
            if (best[i] > far_d) {
                far_d = best[i];
                far_i = i;
            }
        }
        chosen.push_back(far_i);
    }
    for (int c = 0; c < k; ++c)
        std::copy(points[chosen[static_cast<size_t>(c)]].begin(),
                  points[chosen[static_cast<size_t>(c)]].end(),
                  m.centroids.begin() + static_cast<size_t>(c) * d);

    std::vector<int> assign(n, -1);
    std::vector<double> sums(static_cast<size_t>(k) * d);
    std::vector<int> counts(static_cast<size_t>(k));
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            int bi = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dist = sq_dist(points[i].data(), m.centroids.data() + static_cast<size_t>(c) * d, d);
                if (dist < bd) {
                    bd = dist;
                    bi = c;
                }
            }
            if (assign[i] != bi) {
                assign[i] = bi;
                changed = true;
            }
        }
        if (!changed) break;
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (size_t i = 0; i < n; ++i) {
            double* s = sums.data() + static_cast<size_t>(assign[i]) * d;
            for (int j = 0; j < d; ++j) s[j] += points[i][static_cast<size_t>(j)];
            ++counts[static_cast<size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // relocate an empty cluster to the point farthest from its
                // current centroid (lowest index on ties)
                size_t far_i = 0;
                double far_d = -1.0;
                for (size_t i = 0; i < n; ++i) {
                    const double dist = sq_dist(
                        points[i].data(), m.centroids.data() + static_cast<size_t>(assign[i]) * d, d);
                    if (dist > far_d) {
                        far_d = dist;
                        far_i = i;
                    }
                }
                std::copy(points[far_i].begin(), points[far_i].end(),
                          m.centroids.begin() + static_cast<size_t>(c) * d);
                continue;
            }
            float* cm = m.centroids.data() + static_cast<size_t>(c) * d;
            const double* s = sums.data() + static_cast<size_t>(c) * d;
            for (int j = 0; j < d; ++j)
                cm[j] = static_cast<float>(s[j] / counts[static_cast<size_t>(c)]);
        }
    }
    m.fitted = true;
    return m;
}

int kmeans_assign(const ClusterModel& model, const std::vector<float>& point) {
    if (!model.fitted) throw DataError("kmeans_assign: model has not been fitted");
    if (static_cast<int>(point.size()) != model.dim)
        throw ShapeError("kmeans_assign: point dimension " + std::to_string(point.size()) +
                         " does not match model dimension " + std::to_string(model.dim));
    int bi = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < model.k; ++c) {
        const double dist =
            sq_dist(point.data(), model.centroids.data() + static_cast<size_t>(c) * model.dim,
                    model.dim);
        if (dist < bd) {  // strict: ties keep the lowest index
            bd = dist;
            bi = c;
        }
    }
    return bi;
}

// ---- weight estimation --------------------------------------------------------

WeightMatrix make_weight_matrix(int clusters) {
    if (clusters < 1) throw ConfigError("weight matrix: cluster count must be >= 1");
    WeightMatrix wm;
    wm.clusters = clusters;
    wm.w = Tensor({3, clusters}, 1.0f);
    wm.w.set_trainable(true).set_clamp_unit(true);
    return wm;
}

std::array<float, 3> dwe_select(const DegradationRep& rep, const ClusterModel& model,
                                const WeightMatrix& w, bool warmup) {
    if (warmup) return {1.0f, 1.0f, 1.0f};
    const int k = kmeans_assign(model, rep.v);
    const int K = w.clusters;
    return {w.w.data()[0 * K + k], w.w.data()[1 * K + k], w.w.data()[2 * K + k]};
}

std::array<Tensor, 3> dwe_select_batch(Tape* tape, const std::vector<DegradationRep>& reps,
                                       const ClusterModel& model, const WeightMatrix& w,
                                       bool warmup) {
    const int B = static_cast<int>(reps.size());
    std::array<Tensor, 3> out;
    if (warmup) {
        for (int j = 0; j < 3; ++j) out[static_cast<size_t>(j)] = Tensor({B, 1, 1, 1}, 1.0f);
        return out;
    }
    auto idx = std::make_shared<std::vector<int>>();
    idx->reserve(static_cast<size_t>(B));
    for (const auto& r : reps) idx->push_back(kmeans_assign(model, r.v));
    const int K = w.clusters;
    for (int j = 0; j < 3; ++j) {
        Tensor t({B, 1, 1, 1});
        for (int b = 0; b < B; ++b)
            t.data()[b] = w.w.data()[static_cast<size_t>(j) * K + (*idx)[static_cast<size_t>(b)]];
        out[static_cast<size_t>(j)] = t;
        if (tape) {
            auto wd = w.w.ptr();
            auto od = t.ptr();
            tape->push([=]() {
                if (od->grad.empty()) return;
                wd->ensure_grad();
                for (int b = 0; b < B; ++b)
                    wd->grad[static_cast<size_t>(j) * K + (*idx)[static_cast<size_t>(b)]] +=
                        od->grad[static_cast<size_t>(b)];
            });
        }
    }
    return out;
}

// ---- block forward ------------------------------------------------------------

WpbParams make_wpb(int channels, int prompt_count, int prompt_base, int conv_depth, int clusters,
                   Rng& rng) {
    WpbParams p;
    p.channels = channels;
    p.refine_w.reserve(static_cast<size_t>(conv_depth));
    for (int i = 0; i < conv_depth; ++i) {
        p.refine_w.push_back(he_init({channels, channels, 3, 3}, rng).set_trainable(true));
        p.refine_b.push_back(Tensor({channels}).set_trainable(true));
    }
    for (int j = 0; j < 3; ++j) {
        p.banks[static_cast<size_t>(j)] = make_prompt_bank(channels, prompt_count, prompt_base, rng);
        p.sft[static_cast<size_t>(j)] = make_sft(channels, rng);
    }
    p.weights = make_weight_matrix(clusters);
    return p;
}

Tensor wpb_forward(Tape* tape, const Tensor& z, const std::vector<DegradationRep>& reps,
                   const WpbParams& p, const ClusterModel& model, bool warmup) {
    if (z.rank() != 4 || z.dim(1) != p.channels)
        throw ShapeError("wpb_forward: expected " + std::to_string(p.channels) + " channels, got " +
                         dims_to_string(z.dims()));
    if (static_cast<int>(reps.size()) != z.dim(0))
        throw ShapeError("wpb_forward: " + std::to_string(reps.size()) +
                         " degradation representations for batch of " + std::to_string(z.dim(0)));
    SubbandSet s = dwt2(tape, z);

    // low-frequency branch: plain conv stack, never prompted
    Tensor ll = s.ll;
    for (size_t i = 0; i < p.refine_w.size(); ++i)
        ll = relu(tape, conv2d(tape, ll, p.refine_w[i], p.refine_b[i], 1, 1));

    std::array<Tensor, 3> omega = dwe_select_batch(tape, reps, model, p.weights, warmup);
    SubbandSet out;
    out.ll = ll;
    for (int j = 0; j < 3; ++j) {
        const Tensor& zj = s.band(j + 1);
        Tensor prompt = prompt_generate(tape, zj, p.banks[static_cast<size_t>(j)]);
        Tensor pj = sft_interact(tape, zj, prompt, p.sft[static_cast<size_t>(j)]);
        Tensor weighted = mul(tape, pj, omega[static_cast<size_t>(j)]);
        (j == 0 ? out.lh : j == 1 ? out.hl : out.hh) = weighted;
    }
    return idwt2(tape, out);
}

std::vector<PromptDistRow> estimate_prompt_distribution(const std::vector<DegradationRep>& reps,
                                                        const ClusterModel& model,
                                                        const WeightMatrix& w) {
    if (reps.empty()) throw DataError("estimate_prompt_distribution: no representations given");
    if (!model.fitted) throw DataError("estimate_prompt_distribution: cluster model not fitted");
    std::vector<size_t> counts(static_cast<size_t>(model.k), 0);
    for (const auto& r : reps) ++counts[static_cast<size_t>(kmeans_assign(model, r.v))];
    std::vector<PromptDistRow> rows;
    rows.reserve(counts.size());
    const int K = w.clusters;
    for (int c = 0; c < model.k; ++c) {
        PromptDistRow row;
        row.cluster = c;
        row.frequency = static_cast<double>(counts[static_cast<size_t>(c)]) /
                        static_cast<double>(reps.size());
        row.w_lh = w.w.data()[0 * K + c];
        row.w_hl = w.w.data()[1 * K + c];
        row.w_hh = w.w.data()[2 * K + c];
        rows.push_back(row);
    }
    return rows;
}

}  // namespace cwp
