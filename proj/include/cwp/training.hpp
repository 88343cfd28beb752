#pragma once

// Losses (multi-scale L1 + frequency-domain L1), Adam with a cosine
// learning-rate schedule, and the epoch loop with the delayed weight-table
// update: the first warmup_epochs run with unit subband weights while
// degradation representations are buffered; K-Means is then fitted once and
// the weight table starts learning, clamped to [0,1] after every step.

#include <vector>

#include "cwp/degrade.hpp"
#include "cwp/model.hpp"
#include "cwp/tensor.hpp"

namespace cwp {

struct TrainConfig {
    int epochs = 30;
    int warmup_epochs = 20;  // N_w
    int batch_size = 4;
    float lr0 = 2e-4f;
    float lr1 = 1e-6f;
    float lambda = 0.1f;  // frequency-loss weight
    uint32_t seed = 0;
    int crop = 64;         // random square crop per sample; 0 = use full images
    bool augment = false;  // horizontal flips (off by default at desk scale)

    void validate() const;
};

// Ground-truth pyramid: repeated 2x2 average pooling, one entry per level.
std::vector<Tensor> truth_pyramid(Tape* tape, const Tensor& truth, int levels);

Tensor loss_rec(Tape* tape, const std::vector<Tensor>& outputs, const std::vector<Tensor>& truths);
Tensor loss_fre(Tape* tape, const std::vector<Tensor>& outputs, const std::vector<Tensor>& truths);
Tensor loss_total(Tape* tape, const std::vector<Tensor>& outputs,
                  const std::vector<Tensor>& truths, float lambda);

// lr1 + 0.5*(lr0-lr1)*(1+cos(pi*epoch/(epochs-1))); epoch in [0, epochs).
double cosine_lr(int epoch, const TrainConfig& cfg);

struct AdamState {
    std::vector<std::vector<float>> m, v;
    long step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

void init_adam(AdamState& state, const std::vector<NamedParam>& params);
// Standard bias-corrected update; tensors flagged clamp_unit are projected
// back to [0,1] afterwards.
void adam_step(std::vector<NamedParam>& params, AdamState& state, float lr);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_rec = 0.0;
    double loss_fre = 0.0;
    double mean_psnr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
};

// on_epoch_end, when given, observes the net after each epoch's updates.
TrainResult train(CwpNet& net, const std::vector<DegradationRecord>& data, const TrainConfig& cfg,
                  const std::function<void(const CwpNet&, int)>& on_epoch_end = {});

}  // namespace cwp
