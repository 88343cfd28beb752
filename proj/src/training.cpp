#include "cwp/training.hpp"

#include <algorithm>
#include <cmath>

#include "cwp/frequency.hpp"

namespace cwp {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (warmup_epochs <= 0 || warmup_epochs >= epochs)
        throw ConfigError("train: warmup_epochs must satisfy 0 < warmup_epochs < epochs");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr1 < lr0)) throw ConfigError("train: lr1 must be < lr0");
    if (lambda < 0.0f) throw ConfigError("train: lambda must be >= 0");
    if (crop < 0) throw ConfigError("train: crop must be >= 0");
}

std::vector<Tensor> truth_pyramid(Tape* tape, const Tensor& truth, int levels) {
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(levels));
    out.push_back(truth);
    for (int s = 1; s < levels; ++s) out.push_back(avg_pool2(tape, out.back()));
    return out;
}

static void check_scale_match(const std::vector<Tensor>& outputs,
                              const std::vector<Tensor>& truths, const char* op) {
    if (outputs.size() != truths.size())
        throw ShapeError(std::string(op) + ": " + std::to_string(outputs.size()) +
                         " outputs vs " + std::to_string(truths.size()) + " ground-truth scales");
    for (size_t k = 0; k < outputs.size(); ++k)
        if (outputs[k].dims() != truths[k].dims())
            throw ShapeError(std::string(op) + ": scale " + std::to_string(k + 1) + " dims " +
                             dims_to_string(outputs[k].dims()) + " vs " +
                             dims_to_string(truths[k].dims()));
}

Tensor loss_rec(Tape* tape, const std::vector<Tensor>& outputs, const std::vector<Tensor>& truths) {
    check_scale_match(outputs, truths, "loss_rec");
    Tensor total = l1_mean(tape, outputs[0], truths[0]);
    for (size_t k = 1; k < outputs.size(); ++k)
        total = add_scaled(tape, total, l1_mean(tape, outputs[k], truths[k]), 1.0f);
    return total;
}

Tensor loss_fre(Tape* tape, const std::vector<Tensor>& outputs, const std::vector<Tensor>& truths) {
    check_scale_match(outputs, truths, "loss_fre");
    Tensor total;
    for (size_t k = 0; k < outputs.size(); ++k) {
        Spectrum sy = fft2(tape, outputs[k]);
        Spectrum st = fft2(tape, truths[k]);
        Tensor term = add_scaled(tape, l1_mean(tape, sy.real, st.real),
                                 l1_mean(tape, sy.imag, st.imag), 1.0f);
        total = (k == 0) ? term : add_scaled(tape, total, term, 1.0f);
    }
    return total;
}

Tensor loss_total(Tape* tape, const std::vector<Tensor>& outputs,
                  const std::vector<Tensor>& truths, float lambda) {
    if (lambda < 0.0f) throw ConfigError("loss_total: lambda must be >= 0");
    Tensor rec = loss_rec(tape, outputs, truths);
    if (lambda == 0.0f) return rec;
    return add_scaled(tape, rec, loss_fre(tape, outputs, truths), lambda);
}

double cosine_lr(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs)
        throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(cfg.epochs) + ")");
    if (cfg.epochs == 1) return cfg.lr0;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return cfg.lr1 + 0.5 * (static_cast<double>(cfg.lr0) - cfg.lr1) * (1.0 + std::cos(M_PI * t));
}

void init_adam(AdamState& state, const std::vector<NamedParam>& params) {
    state.m.clear();
    state.v.clear();
    state.step = 0;
    for (const auto& p : params) {
        state.m.emplace_back(p.tensor.size(), 0.0f);
        state.v.emplace_back(p.tensor.size(), 0.0f);
    }
}

void adam_step(std::vector<NamedParam>& params, AdamState& state, float lr) {
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step);
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].tensor;
        if (!t.trainable()) continue;
        const std::vector<float> g = t.grad();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        float* w = t.data();
        for (size_t j = 0; j < g.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g[j] * g[j];
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            w[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + state.eps));
        }
        if (t.clamp_unit())
            for (size_t j = 0; j < g.size(); ++j) w[j] = std::clamp(w[j], 0.0f, 1.0f);
    }
}

// Stack selected records into one batch pair, optionally random-cropped.
static void make_batch(const std::vector<DegradationRecord>& data, const std::vector<size_t>& idx,
                       size_t begin, size_t count, int crop, Rng& rng, Tensor& x, Tensor& y) {
    const Tensor& first = data[idx[begin]].clean;
    const int C = first.dim(1);
    int H = first.dim(2), W = first.dim(3);
    if (crop > 0) {
        H = std::min(H, crop);
        W = std::min(W, crop);
    }
    x = Tensor({static_cast<int>(count), C, H, W});
    y = Tensor({static_cast<int>(count), C, H, W});
    for (size_t b = 0; b < count; ++b) {
        const DegradationRecord& rec = data[idx[begin + b]];
        if (rec.clean.dim(1) != C)
            throw DataError("train: mixed channel counts in the training set");
        const int rh = rec.clean.dim(2), rw = rec.clean.dim(3);
        if (rh < H || rw < W)
            throw DataError("train: record " + rec.source_id + " smaller than batch size " +
                            std::to_string(H) + "x" + std::to_string(W));
        const int oy = (rh > H) ? static_cast<int>(rng.below(static_cast<uint32_t>(rh - H + 1))) : 0;
        const int ox = (rw > W) ? static_cast<int>(rng.below(static_cast<uint32_t>(rw - W + 1))) : 0;
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    x.at(static_cast<int>(b), c, i, j) = rec.degraded.at(0, c, oy + i, ox + j);
                    y.at(static_cast<int>(b), c, i, j) = rec.clean.at(0, c, oy + i, ox + j);
                }
    }
}

static void flip_horizontal(Tensor& t) {
    const int N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W / 2; ++j)
                    std::swap(t.at(n, c, i, j), t.at(n, c, i, W - 1 - j));
}

TrainResult train(CwpNet& net, const std::vector<DegradationRecord>& data, const TrainConfig& cfg,
                  const std::function<void(const CwpNet&, int)>& on_epoch_end) {
    cfg.validate();
    if (data.empty()) throw DataError("train: empty training set");
    if (!net.cluster.fitted && data.size() < static_cast<size_t>(net.cfg.clusters))
        throw DataError("train: " + std::to_string(data.size()) +
                        " records cannot support " + std::to_string(net.cfg.clusters) +
                        " degradation clusters (reduce the `clusters` key)");

    Rng rng(cfg.seed);
    std::vector<NamedParam> params = net.parameters();
    AdamState adam;
    init_adam(adam, params);

    TrainResult result;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<std::vector<float>> rep_buffer;  // refreshed every epoch until the fit

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch == cfg.warmup_epochs && !net.cluster.fitted) {
            // delayed update: fit once on the representations buffered during
            // the preceding epoch, then let the weight tables learn
            net.cluster = kmeans_fit(rep_buffer, net.cfg.clusters, cfg.seed);
        }
        const bool warmup = !net.cluster.fitted;
        if (warmup) rep_buffer.clear();

        const double lr = cosine_lr(epoch, cfg);
        rng.shuffle(order);

        double sum_total = 0.0, sum_rec = 0.0, sum_fre = 0.0, sum_psnr = 0.0;
        size_t steps = 0, psnr_count = 0;

        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - begin);
            Tensor x, y;
            make_batch(data, order, begin, count, cfg.crop, rng, x, y);
            if (cfg.augment && rng.uniform() < 0.5f) {
                flip_horizontal(x);
                flip_horizontal(y);
            }

            Tape tape;
            ForwardResult fwd = forward(&tape, net, x, warmup);
            if (warmup)
                for (const auto& r : fwd.reps) rep_buffer.push_back(r.v);

            std::vector<Tensor> truths = truth_pyramid(&tape, y, net.cfg.scales);
            Tensor rec = loss_rec(&tape, fwd.outputs, truths);
            Tensor fre = loss_fre(&tape, fwd.outputs, truths);
            Tensor total = add_scaled(&tape, rec, fre, cfg.lambda);

            net.zero_grads();
            tape.backward(total);
            adam_step(params, adam, static_cast<float>(lr));

            sum_total += total.item();
            sum_rec += rec.item();
            sum_fre += fre.item();
            ++steps;
            for (int n = 0; n < x.dim(0); ++n) {
                double mse = 0.0;
                const size_t per = x.size() / static_cast<size_t>(x.dim(0));
                const float* py = fwd.outputs[0].data() + static_cast<size_t>(n) * per;
                const float* pt = y.data() + static_cast<size_t>(n) * per;
                for (size_t i = 0; i < per; ++i) {
                    const double dv = std::clamp(py[i], 0.0f, 1.0f) - static_cast<double>(pt[i]);
                    mse += dv * dv;
                }
                mse /= static_cast<double>(per);
                sum_psnr += (mse <= 0.0) ? 99.0 : 10.0 * std::log10(1.0 / mse);
                ++psnr_count;
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.loss_total = sum_total / static_cast<double>(steps);
        st.loss_rec = sum_rec / static_cast<double>(steps);
        st.loss_fre = sum_fre / static_cast<double>(steps);
        st.mean_psnr = sum_psnr / static_cast<double>(psnr_count);
        result.history.push_back(st);
        if (on_epoch_end) on_epoch_end(net, epoch);
    }
    return result;
}

}  // namespace cwp
