#pragma once

// Wavelet prompt block: input-conditioned prompt generation for the three
// high-frequency subbands, prompt-feature interaction via spatial feature
// transform, and the degradation-based weight estimator that picks a
// column of the 3xK subband-weight table W from the K-Means cluster of the
// degradation representation. The LL subband is never prompted; it goes
// through a stack of plain convolutions instead.

#include <array>
#include <vector>

#include "cwp/frequency.hpp"
#include "cwp/tensor.hpp"
#include "cwp/wavelet_blocks.hpp"

namespace cwp {

struct PromptBank {
    Tensor components;        // M x C x Hp x Wp, learnable
    Tensor alpha_w, alpha_b;  // 1x1 conv, C -> M
    Tensor refine_w, refine_b;  // 3x3 conv, C -> C
    int count = 0;              // M
};

PromptBank make_prompt_bank(int channels, int count, int base_size, Rng& rng);

// alpha = softmax(conv1(GAP(z))); prompt = conv3(sum_c alpha_c * resize(L_c)).
Tensor prompt_generate(Tape* tape, const Tensor& z, const PromptBank& bank);

struct SftParams {
    Tensor gamma_w1, gamma_b1, gamma_w2, gamma_b2;  // two stacked 1x1 convs
    Tensor beta_w1, beta_b1, beta_w2, beta_b2;
};

SftParams make_sft(int channels, Rng& rng);

// gamma(l) * z + beta(l) + z; all-zero params reduce to the identity on z.
Tensor sft_interact(Tape* tape, const Tensor& z, const Tensor& l, const SftParams& p);

// ---- K-Means over degradation representations ------------------------------

struct ClusterModel {
    int k = 0;
    int dim = 0;
    std::vector<float> centroids;  // k x dim, row-major
    bool fitted = false;
    uint32_t seed = 0;
};

// Lloyd's algorithm, farthest-point seeding from the seeded pick of the
// first centroid. Deterministic given (seed, point order); stops when
// assignments are stable or after 100 iterations.
ClusterModel kmeans_fit(const std::vector<std::vector<float>>& points, int k, uint32_t seed);
int kmeans_assign(const ClusterModel& model, const std::vector<float>& point);

// ---- degradation-based weight estimation ------------------------------------

// 3 x K learnable subband weights; rows index {LH, HL, HH}. Initialized to
// all ones and clamped to [0,1] after every optimizer step.
struct WeightMatrix {
    Tensor w;
    int clusters = 0;
};

WeightMatrix make_weight_matrix(int clusters);

// Per-sample weights read from W without touching the tape; warmup returns
// (1,1,1) per the delayed-update schedule.
std::array<float, 3> dwe_select(const DegradationRep& rep, const ClusterModel& model,
                                const WeightMatrix& w, bool warmup);

// Batched, tape-connected form used by the block forward: each returned
// tensor is B x 1 x 1 x 1 and gradients flow only into the selected W
// columns (hard assignment, no straight-through estimator).
std::array<Tensor, 3> dwe_select_batch(Tape* tape, const std::vector<DegradationRep>& reps,
                                       const ClusterModel& model, const WeightMatrix& w,
                                       bool warmup);

// ---- the block ---------------------------------------------------------------

struct WpbParams {
    std::vector<Tensor> refine_w, refine_b;  // N plain 3x3 convs on the LL subband
    std::array<PromptBank, 3> banks;         // LH, HL, HH
    std::array<SftParams, 3> sft;
    WeightMatrix weights;
    int channels = 0;
};

WpbParams make_wpb(int channels, int prompt_count, int prompt_base, int conv_depth, int clusters,
                   Rng& rng);

Tensor wpb_forward(Tape* tape, const Tensor& z, const std::vector<DegradationRep>& reps,
                   const WpbParams& p, const ClusterModel& model, bool warmup);

// ---- empirical distribution of the adjustment variable ----------------------

struct PromptDistRow {
    int cluster = 0;
    double frequency = 0.0;
    float w_lh = 0.0f, w_hl = 0.0f, w_hh = 0.0f;
};

// Cluster-assignment frequencies over a set of representations; each row
// carries the subband-weight column realized by that cluster.
std::vector<PromptDistRow> estimate_prompt_distribution(const std::vector<DegradationRep>& reps,
                                                        const ClusterModel& model,
                                                        const WeightMatrix& w);

}  // namespace cwp
