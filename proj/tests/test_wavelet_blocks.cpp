#include <doctest.h>

#include <cmath>

#include "cwp/wavelet_blocks.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cwp;
using namespace cwp::testutil;

TEST_CASE("wae halves the spatial dims and emits the configured channels") {
    Rng rng(11);
    WaeParams p = make_wae(8, 16, 4, 7, rng);
    Tensor f = make_random_tensor({1, 8, 16, 16}, 12);
    WaeOut out = wae_forward(nullptr, f, p);
    CHECK(out.features.dims() == std::vector<int>{1, 16, 8, 8});
    CHECK(out.ll_gate.dims() == std::vector<int>{1, 1, 8, 8});
    for (size_t i = 0; i < out.ll_gate.size(); ++i) {
        CHECK(out.ll_gate.data()[i] > 0.0f);
        CHECK(out.ll_gate.data()[i] < 1.0f);
    }
}

TEST_CASE("wae on zero input yields zero output") {
    Rng rng(21);
    WaeParams p = make_wae(8, 16, 4, 7, rng);
    Tensor f({1, 8, 8, 8}, 0.0f);
    WaeOut out = wae_forward(nullptr, f, p);
    for (size_t i = 0; i < out.features.size(); ++i) CHECK(out.features.data()[i] == 0.0f);
}

TEST_CASE("wae rejects odd spatial dims") {
    Rng rng(31);
    WaeParams p = make_wae(4, 8, 4, 7, rng);
    Tensor f({1, 4, 6, 7});
    CHECK_THROWS_AS(wae_forward(nullptr, f, p), ShapeError);
}

TEST_CASE("wad doubles the spatial dims under the channel bookkeeping") {
    Rng rng(41);
    WadParams p = make_wad(16, 4, 7, rng);
    Tensor f = make_random_tensor({1, 16, 8, 8}, 42);
    Tensor out = wad_forward(nullptr, f, p);
    CHECK(out.dims() == std::vector<int>{1, 8, 16, 16});
}

TEST_CASE("wad with zero input and zero biases yields zero output") {
    Rng rng(51);
    WadParams p = make_wad(8, 4, 7, rng);
    Tensor f({1, 8, 4, 4}, 0.0f);
    Tensor out = wad_forward(nullptr, f, p);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("encoder/decoder symmetry restores the spatial dims") {
    Rng rng(61);
    WaeParams enc = make_wae(8, 16, 4, 7, rng);
    WadParams dec = make_wad(16, 4, 7, rng);
    Tensor f = make_random_tensor({2, 8, 16, 16}, 62);
    WaeOut down = wae_forward(nullptr, f, enc);
    Tensor up = wad_forward(nullptr, down.features, dec);
    CHECK(up.dim(2) == f.dim(2));
    CHECK(up.dim(3) == f.dim(3));
    CHECK(up.dim(1) == 8);
}

TEST_CASE("cnn block preserves shape and is the identity plus a residual") {
    Rng rng(71);
    CnnBlockParams p = make_cnn_block(8, rng);
    Tensor f = make_random_tensor({1, 8, 6, 6}, 72);
    Tensor out = cnn_block(nullptr, f, p);
    CHECK(out.dims() == f.dims());
    // zero both convs: the block collapses to the identity
    std::fill(p.w1.values().begin(), p.w1.values().end(), 0.0f);
    std::fill(p.w2.values().begin(), p.w2.values().end(), 0.0f);
    Tensor id = cnn_block(nullptr, f, p);
    CHECK(id.values() == f.values());
}

// Bias the squeeze relu away from its kink so central differences stay
// well-posed at the evaluation point.
template <typename Params>
static void relu_margin(Params& p) {
    for (auto& ca : p.ca)
        for (float& b : ca.squeeze_b.values()) b = 0.3f;
}

TEST_CASE("wae/wad block gradients pass finite differences") {
    Rng rng(81);
    WaeParams enc = make_wae(4, 8, 4, 3, rng);
    relu_margin(enc);
    Tensor f = make_random_tensor({1, 4, 4, 4}, 82, 0.8f);
    ProbeLoss probe({1, 8, 2, 2}, 83);
    {
        Tape tape;
        WaeOut out = wae_forward(&tape, f, enc);
        Tensor loss = probe.apply(&tape, out.features);
        tape.backward(loss);
        auto loss_val = [&]() { return probe.eval(wae_forward(nullptr, f, enc).features); };
        CHECK(fd_check(loss_val, f, f.grad(), 1e-3f).max_err < 1e-3);
        CHECK(fd_check(loss_val, enc.reduce_w, enc.reduce_w.grad(), 1e-3f).max_err < 1e-3);
        CHECK(fd_check(loss_val, enc.ca[0].excite_w, enc.ca[0].excite_w.grad(), 1e-3f).max_err <
              1e-3);
        CHECK(fd_check(loss_val, enc.sa[2].w, enc.sa[2].w.grad(), 1e-3f).max_err < 1e-3);
    }
    {
        WadParams dec = make_wad(8, 4, 3, rng);
        relu_margin(dec);
        Tensor g = make_random_tensor({1, 8, 4, 4}, 84, 0.8f);
        ProbeLoss probe2({1, 4, 8, 8}, 85);
        Tape tape;
        Tensor out = wad_forward(&tape, g, dec);
        Tensor loss = probe2.apply(&tape, out);
        tape.backward(loss);
        auto loss_val = [&]() { return probe2.eval(wad_forward(nullptr, g, dec)); };
        CHECK(fd_check(loss_val, g, g.grad(), 1e-3f).max_err < 1e-3);
        CHECK(fd_check(loss_val, dec.extract_w, dec.extract_w.grad(), 1e-3f).max_err < 1e-3);
        CHECK(fd_check(loss_val, dec.expand_w, dec.expand_w.grad(), 1e-3f).max_err < 1e-3);
    }
}

TEST_CASE("degradation representation: constant gate, halves, block-mean oracle") {
    Tensor gate({1, 1, 16, 16}, 0.5f);
    auto reps = extract_degradation_rep(gate);
    REQUIRE(reps.size() == 1);
    REQUIRE(reps[0].v.size() == static_cast<size_t>(kDegradationRepDim));
    for (float v : reps[0].v) CHECK(v == doctest::Approx(0.5f));

    const float eps = 1e-3f;
    Tensor half({1, 1, 16, 16});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) half.at(0, 0, i, j) = j < 8 ? 1.0f - eps : eps;
    auto hrep = extract_degradation_rep(half)[0];
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const float v = hrep.v[static_cast<size_t>(i) * 8 + j];
            if (j < 4)
                CHECK(v == doctest::Approx(1.0f - eps));
            else
                CHECK(v == doctest::Approx(eps));
        }

    Tensor rnd = make_random_tensor({2, 1, 24, 24}, 91);
    for (float& v : rnd.values()) v = 1.0f / (1.0f + std::exp(-v));
    auto rrep = extract_degradation_rep(rnd);
    for (int n = 0; n < 2; ++n) {
        std::vector<double> plane(24 * 24);
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j) plane[static_cast<size_t>(i) * 24 + j] = rnd.at(n, 0, i, j);
        const auto want = oracle::block_means(plane, 24, 24, 8, 8);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(rrep[static_cast<size_t>(n)].v[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
}

TEST_CASE("degradation representation rejects gates smaller than the pooling grid") {
    Tensor tiny({1, 1, 4, 4}, 0.5f);
    CHECK_THROWS_AS(extract_degradation_rep(tiny), ShapeError);
}
