#include <doctest.h>

#include <cmath>

#include "cwp/training.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cwp;
using namespace cwp::testutil;

static std::vector<Tensor> pyramid_of(const Tensor& t, int levels) {
    return truth_pyramid(nullptr, t, levels);
}

TEST_CASE("loss_rec: identity, constant offset, explicit-loop oracle") {
    Tensor y = make_random_tensor({1, 3, 8, 8}, 11);
    auto py = pyramid_of(y, 3);
    CHECK(loss_rec(nullptr, py, py).item() == doctest::Approx(0.0f));

    // a single scale differing by a constant 0.1 contributes exactly 0.1
    auto shifted = py;
    Tensor s2(py[1].dims());
    for (size_t i = 0; i < s2.size(); ++i) s2.data()[i] = py[1].data()[i] + 0.1f;
    shifted[1] = s2;
    CHECK(loss_rec(nullptr, shifted, py).item() == doctest::Approx(0.1f).epsilon(1e-5));

    Tensor t = make_random_tensor({1, 3, 8, 8}, 12);
    auto pt = pyramid_of(t, 3);
    double want = 0.0;
    for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (size_t i = 0; i < py[static_cast<size_t>(k)].size(); ++i)
            acc += std::abs(static_cast<double>(py[static_cast<size_t>(k)].data()[i]) -
                            pt[static_cast<size_t>(k)].data()[i]);
        want += acc / static_cast<double>(py[static_cast<size_t>(k)].size());
    }
    CHECK(loss_rec(nullptr, py, pt).item() == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("loss_rec rejects mismatched scales") {
    Tensor y = make_random_tensor({1, 3, 8, 8}, 13);
    auto p3 = pyramid_of(y, 3);
    auto p2 = pyramid_of(y, 2);
    CHECK_THROWS_AS(loss_rec(nullptr, p3, p2), ShapeError);
}

TEST_CASE("loss_fre: identity, constant offset moves only the DC bin, naive DFT oracle") {
    Tensor y = make_random_tensor({1, 1, 6, 6}, 21);
    auto py = pyramid_of(y, 1);
    CHECK(loss_fre(nullptr, py, py).item() == doctest::Approx(0.0f));

    // constant offset c: spectra agree except DC, which differs by c*H*W
    const float c = 0.25f;
    Tensor shifted(y.dims());
    for (size_t i = 0; i < y.size(); ++i) shifted.data()[i] = y.data()[i] + c;
    Spectrum sy = fft2(nullptr, y);
    Spectrum ss = fft2(nullptr, shifted);
    CHECK(ss.real.data()[0] - sy.real.data()[0] == doctest::Approx(c * 36.0f).epsilon(1e-4));
    for (size_t i = 1; i < sy.real.size(); ++i)
        CHECK(std::abs(ss.real.data()[i] - sy.real.data()[i]) < 1e-3f);
    // so the loss is c*H*W / numel = c
    CHECK(loss_fre(nullptr, pyramid_of(shifted, 1), py).item() ==
          doctest::Approx(c).epsilon(1e-4));

    Tensor t = make_random_tensor({1, 1, 6, 6}, 22);
    std::vector<double> plane_y(y.size()), plane_t(t.size());
    for (size_t i = 0; i < y.size(); ++i) {
        plane_y[i] = y.data()[i];
        plane_t[i] = t.data()[i];
    }
    std::vector<double> re_y, im_y, re_t, im_t;
    oracle::dft2_naive(plane_y, 6, 6, re_y, im_y);
    oracle::dft2_naive(plane_t, 6, 6, re_t, im_t);
    double want = 0.0;
    for (size_t i = 0; i < re_y.size(); ++i)
        want += std::abs(re_y[i] - re_t[i]) + std::abs(im_y[i] - im_t[i]);
    want /= static_cast<double>(re_y.size());
    CHECK(loss_fre(nullptr, py, pyramid_of(t, 1)).item() == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("loss_total combines the two terms per the weighting rule") {
    Tensor y = make_random_tensor({1, 3, 8, 8}, 31);
    Tensor t = make_random_tensor({1, 3, 8, 8}, 32);
    auto py = pyramid_of(y, 2), pt = pyramid_of(t, 2);
    const double rec = loss_rec(nullptr, py, pt).item();
    const double fre = loss_fre(nullptr, py, pt).item();
    CHECK(loss_total(nullptr, py, pt, 0.0f).item() == doctest::Approx(rec));
    CHECK(loss_total(nullptr, py, pt, 0.1f).item() == doctest::Approx(rec + 0.1 * fre).epsilon(1e-5));
    CHECK(loss_total(nullptr, py, py, 0.1f).item() == doctest::Approx(0.0));
}

TEST_CASE("losses are non-negative and vanish only on equal pyramids") {
    Tensor y = make_random_tensor({1, 3, 8, 8}, 41);
    Tensor t = make_random_tensor({1, 3, 8, 8}, 42);
    auto py = pyramid_of(y, 3), pt = pyramid_of(t, 3);
    CHECK(loss_rec(nullptr, py, pt).item() > 0.0f);
    CHECK(loss_fre(nullptr, py, pt).item() > 0.0f);
    CHECK(loss_rec(nullptr, py, py).item() <= 1e-7f);
}

TEST_CASE("cosine schedule hits the pinned endpoints and the midpoint") {
    TrainConfig cfg;
    cfg.epochs = 151;
    cfg.warmup_epochs = 100;
    cfg.lr0 = 2e-4f;
    cfg.lr1 = 1e-6f;
    CHECK(cosine_lr(0, cfg) == doctest::Approx(2e-4));
    CHECK(cosine_lr(150, cfg) == doctest::Approx(1e-6));
    CHECK(cosine_lr(75, cfg) == doctest::Approx(1.005e-4).epsilon(1e-9));
    CHECK_THROWS_AS(cosine_lr(151, cfg), ConfigError);
    CHECK_THROWS_AS(cosine_lr(-1, cfg), ConfigError);
}

TEST_CASE("cosine schedule is non-increasing") {
    TrainConfig cfg;
    cfg.epochs = 37;
    cfg.warmup_epochs = 10;
    double prev = cosine_lr(0, cfg);
    for (int e = 1; e < cfg.epochs; ++e) {
        const double lr = cosine_lr(e, cfg);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
}

TEST_CASE("adam: zero grad is a fixed point") {
    Tensor w = Tensor::scalar(0.7f);
    w.set_trainable(true);
    std::vector<NamedParam> params = {{"w", w}};
    AdamState st;
    init_adam(st, params);
    adam_step(params, st, 0.1f);  // no grad buffer: grads read as zero
    CHECK(w.item() == 0.7f);
    adam_step(params, st, 0.1f);
    CHECK(w.item() == 0.7f);
}

TEST_CASE("adam first step with unit gradient matches the hand-rolled oracle") {
    Tensor w = Tensor::scalar(0.7f);
    w.set_trainable(true);
    std::vector<NamedParam> params = {{"w", w}};
    AdamState st;
    init_adam(st, params);
    w.grad_data()[0] = 1.0f;
    adam_step(params, st, 0.1f);

    oracle::AdamScalarOracle ref;
    const float want = ref.step(0.7f, 1.0f, 0.1f);
    CHECK(std::abs(static_cast<double>(w.item()) - want) < 1e-8);
    // bias correction makes the first step the full learning rate
    CHECK(w.item() == doctest::Approx(0.7 - 0.1).epsilon(1e-6));

    // a few more steps with varying gradients stay on the oracle
    oracle::AdamScalarOracle ref2;
    Tensor w2 = Tensor::scalar(-0.2f);
    w2.set_trainable(true);
    std::vector<NamedParam> params2 = {{"w", w2}};
    AdamState st2;
    init_adam(st2, params2);
    float wf = -0.2f;
    for (int i = 1; i <= 5; ++i) {
        const float g = 0.3f * static_cast<float>(i) - 0.8f;
        w2.zero_grad();
        w2.grad_data()[0] = g;
        adam_step(params2, st2, 0.05f);
        wf = ref2.step(wf, g, 0.05f);
        CHECK(std::abs(static_cast<double>(w2.item()) - wf) < 1e-7);
    }
}

TEST_CASE("adam projects clamp-flagged tensors back into [0,1]") {
    Tensor w({3, 2}, 1.0f);
    w.set_trainable(true).set_clamp_unit(true);
    std::vector<NamedParam> params = {{"w", w}};
    AdamState st;
    init_adam(st, params);
    float* g = w.grad_data();
    for (int i = 0; i < 6; ++i) g[i] = (i % 2) ? 1.0f : -1.0f;  // negative grads push above 1
    adam_step(params, st, 0.3f);
    for (size_t i = 0; i < w.size(); ++i) {
        CHECK(w.data()[i] >= 0.0f);
        CHECK(w.data()[i] <= 1.0f);
    }
    CHECK(w.data()[0] == 1.0f);  // 1.0 + 0.3 clamps back to 1.0 exactly
}

TEST_CASE("loss gradient w.r.t. the network input passes finite differences on a toy") {
    Tensor y = make_random_tensor({1, 3, 8, 8}, 51, 0.4f);
    Tensor t = make_random_tensor({1, 3, 8, 8}, 52, 0.4f);
    auto loss_on = [&](Tape* tape) {
        auto py = truth_pyramid(tape, y, 2);
        auto pt = truth_pyramid(tape, t, 2);
        return loss_total(tape, py, pt, 0.1f);
    };
    Tape tape;
    Tensor loss = loss_on(&tape);
    tape.backward(loss);
    // double-precision readout of the same loss for the closure
    auto loss_val = [&]() {
        auto py = truth_pyramid(nullptr, y, 2);
        auto pt = truth_pyramid(nullptr, t, 2);
        return loss_total_value(py, pt, 0.1);
    };
    CHECK(fd_check(loss_val, y, y.grad(), 1e-3f).max_err < 2e-3);
}

static std::vector<DegradationRecord> tiny_records(int count, int side, uint32_t seed) {
    std::vector<DegradationRecord> out;
    for (int i = 0; i < count; ++i) {
        DegradationRecord rec;
        rec.clean = make_test_image(side, side, seed + static_cast<uint32_t>(i));
        rec.degraded = apply_lowlight(rec.clean, 2.5f);
        rec.kind = LowLightParams{2.5f};
        rec.source_id = "synthetic-" + std::to_string(i);
        out.push_back(std::move(rec));
    }
    return out;
}

TEST_CASE("training contract: warmup keeps W at exactly one, then the fit happens once") {
    ModelConfig mc;
    mc.scales = 2;
    mc.base_channels = 4;
    mc.prompt_count = 2;
    mc.prompt_base = 8;
    mc.conv_depth = 2;
    mc.clusters = 2;
    mc.sa_kernel = 3;
    CwpNet net = make_cwp_net(mc, 21);

    TrainConfig tc;
    tc.epochs = 4;
    tc.warmup_epochs = 2;
    tc.batch_size = 2;
    tc.lr0 = 1e-3f;
    tc.lr1 = 1e-5f;
    tc.seed = 5;

    auto data = tiny_records(4, 32, 100);

    bool fitted_at_warmup_end = true;
    TrainResult res = train(net, data, tc, [&](const CwpNet& n, int epoch) {
        if (epoch < tc.warmup_epochs) {
            if (n.cluster.fitted) fitted_at_warmup_end = false;
            for (const auto& wpb : n.wpbs)
                for (float v : wpb.weights.w.values())
                    if (v != 1.0f) fitted_at_warmup_end = false;
        }
    });
    CHECK(fitted_at_warmup_end);  // W untouched and no fit during warmup epochs
    CHECK(net.cluster.fitted);
    CHECK(res.history.size() == 4);
    for (const auto& st : res.history) {
        CHECK(std::isfinite(st.loss_total));
        CHECK(st.loss_total >= 0.0);
    }
    for (const auto& wpb : net.wpbs)
        for (float v : wpb.weights.w.values()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
}

TEST_CASE("training is deterministic given the seed") {
    ModelConfig mc;
    mc.scales = 2;
    mc.base_channels = 4;
    mc.prompt_count = 2;
    mc.prompt_base = 8;
    mc.conv_depth = 2;
    mc.clusters = 2;
    mc.sa_kernel = 3;
    TrainConfig tc;
    tc.epochs = 2;
    tc.warmup_epochs = 1;
    tc.batch_size = 2;
    tc.seed = 9;

    auto data = tiny_records(2, 32, 200);
    CwpNet a = make_cwp_net(mc, 3);
    CwpNet b = make_cwp_net(mc, 3);
    train(a, data, tc);
    train(b, data, tc);
    auto pa = a.parameters();
    auto pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor.values() == pb[i].tensor.values());
    CHECK(a.cluster.centroids == b.cluster.centroids);
}

TEST_CASE("training rejects empty data and bad configs") {
    ModelConfig mc;
    mc.scales = 2;
    mc.base_channels = 4;
    CwpNet net = make_cwp_net(mc, 1);
    TrainConfig tc;
    tc.epochs = 2;
    tc.warmup_epochs = 1;
    CHECK_THROWS_AS(train(net, {}, tc), DataError);
    // fewer records than clusters can never feed the delayed fit
    CHECK_THROWS_WITH_AS(train(net, tiny_records(2, 32, 400), tc),
                         doctest::Contains("clusters"), DataError);

    TrainConfig bad;
    bad.epochs = 5;
    bad.warmup_epochs = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    TrainConfig bad_lr;
    bad_lr.lr1 = bad_lr.lr0;
    CHECK_THROWS_AS(bad_lr.validate(), ConfigError);
}
