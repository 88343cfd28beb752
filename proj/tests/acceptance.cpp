// Acceptance suite: runs every criterion at its pinned tolerance and prints
// one pass/fail line each. Exits nonzero if any criterion fails.
//
// usage: cwp_acceptance <path-to-cwp-cli> <data-dir>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cwp/analysis.hpp"
#include "cwp/attention.hpp"
#include "cwp/checkpoint.hpp"
#include "cwp/degrade.hpp"
#include "cwp/frequency.hpp"
#include "cwp/image_io.hpp"
#include "cwp/model.hpp"
#include "cwp/prompt.hpp"
#include "cwp/training.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cwp;
using namespace cwp::testutil;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;
fs::path g_data_dir;
fs::path g_work_dir;

struct Criterion {
    int id;
    std::string name;
    std::function<void()> run;  // throws on failure
    double time_limit_s;
};

struct Failure : std::runtime_error {
    explicit Failure(const std::string& msg) : std::runtime_error(msg) {}
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

// ---- criterion 1: wavelet round trip ----------------------------------------

void criterion_wavelet() {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(2));
        const int c = 1 + static_cast<int>(rng.below(8));
        const int h = 2 * (1 + static_cast<int>(rng.below(16)));
        const int w = 2 * (1 + static_cast<int>(rng.below(16)));
        Tensor x = Tensor::randn({n, c, h, w}, rng, 1.0f);
        SubbandSet s = dwt2(nullptr, x);
        Tensor back = idwt2(nullptr, s);
        double max_err = 0.0, ex = 0.0, es = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            max_err = std::max(max_err,
                               std::abs(static_cast<double>(back.data()[i]) - x.data()[i]));
            ex += static_cast<double>(x.data()[i]) * x.data()[i];
        }
        for (int j = 0; j < 4; ++j)
            for (size_t i = 0; i < s.ll.size(); ++i)
                es += static_cast<double>(s.band(j).data()[i]) * s.band(j).data()[i];
        require(max_err < 1e-5, "round-trip error " + std::to_string(max_err) + " at trial " +
                                    std::to_string(trial));
        require(std::abs(es - ex) <= 1e-5 * std::max(ex, 1.0),
                "energy drift " + std::to_string(std::abs(es - ex) / std::max(ex, 1e-30)));
    }
}

// ---- criterion 2: gradient suite ---------------------------------------------

template <typename MakeLoss>
void grad_gate(const std::string& label, MakeLoss&& make_loss, std::vector<Tensor> tensors,
               double tol, float eps = 1e-3f, double floor = 1e-3) {
    Tape tape;
    Tensor loss = make_loss(&tape);
    for (auto& t : tensors) t.zero_grad();
    tape.backward(loss);
    auto loss_val = [&]() { return static_cast<double>(make_loss(nullptr).item()); };
    for (auto& t : tensors) {
        const auto res = fd_check(loss_val, t, t.grad(), eps, floor);
        require(res.max_err < tol,
                label + ": max relative gradient error " + std::to_string(res.max_err));
    }
}

// Shift the squeeze relus off their kinks so the central differences are
// taken at a differentiable point.
void bias_relu_margin(ChannelAttentionParams& ca) {
    for (float& b : ca.squeeze_b.values()) b = 0.3f;
}

void criterion_gradients() {
    Rng rng(202);
    // channel + spatial attention
    {
        ChannelAttentionParams ca = make_channel_attention(4, 4, rng);
        bias_relu_margin(ca);
        Tensor f = make_random_tensor({1, 4, 4, 4}, 1, 0.8f);
        ProbeLoss probe({1, 4, 4, 4}, 2);
        grad_gate("channel attention",
                  [&](Tape* t) { return probe.apply(t, channel_attention(t, f, ca).features); },
                  {f, ca.squeeze_w, ca.squeeze_b, ca.excite_w, ca.excite_b}, 1e-3);
        SpatialAttentionParams sa = make_spatial_attention(3, rng);
        grad_gate("spatial attention",
                  [&](Tape* t) { return probe.apply(t, spatial_attention(t, f, sa).features); },
                  {f, sa.w, sa.b}, 1e-3);
    }
    // encoder and decoder wavelet blocks
    {
        WaeParams wae = make_wae(4, 8, 4, 3, rng);
        for (auto& ca : wae.ca) bias_relu_margin(ca);
        Tensor f = make_random_tensor({1, 4, 4, 4}, 3, 0.8f);
        ProbeLoss probe({1, 8, 2, 2}, 4);
        grad_gate("wavelet encoder block",
                  [&](Tape* t) { return probe.apply(t, wae_forward(t, f, wae).features); },
                  {f, wae.reduce_w, wae.ca[0].excite_w, wae.sa[3].w}, 1e-3);
        WadParams wad = make_wad(8, 4, 3, rng);
        for (auto& ca : wad.ca) bias_relu_margin(ca);
        Tensor g = make_random_tensor({1, 8, 4, 4}, 5, 0.8f);
        ProbeLoss probe2({1, 4, 8, 8}, 6);
        grad_gate("wavelet decoder block",
                  [&](Tape* t) { return probe2.apply(t, wad_forward(t, g, wad)); },
                  {g, wad.extract_w, wad.expand_w, wad.ca[1].squeeze_w}, 1e-3);
    }
    // prompt generation and interaction
    {
        PromptBank bank = make_prompt_bank(3, 2, 8, rng);
        Tensor z = make_random_tensor({1, 3, 4, 4}, 7, 0.8f);
        ProbeLoss probe({1, 3, 4, 4}, 8);
        grad_gate("prompt generation",
                  [&](Tape* t) { return probe.apply(t, prompt_generate(t, z, bank)); },
                  {z, bank.components, bank.alpha_w, bank.refine_w}, 1e-3);
        SftParams sft = make_sft(3, rng);
        Tensor l = make_random_tensor({1, 3, 4, 4}, 9, 0.8f);
        grad_gate("spatial feature transform",
                  [&](Tape* t) { return probe.apply(t, sft_interact(t, z, l, sft)); },
                  {z, l, sft.gamma_w1, sft.gamma_b2, sft.beta_w2}, 1e-3);
    }
    // full prompt block with a live weight table
    {
        WpbParams wpb = make_wpb(4, 2, 8, 2, 2, rng);
        for (float& v : wpb.weights.w.values()) v = rng.uniform(0.2f, 0.9f);
        ClusterModel m;
        m.k = 2;
        m.dim = 64;
        m.fitted = true;
        m.centroids.assign(128, 0.0f);
        for (int i = 64; i < 128; ++i) m.centroids[static_cast<size_t>(i)] = 1.0f;
        Tensor z = make_random_tensor({2, 4, 8, 8}, 10, 0.8f);
        std::vector<DegradationRep> reps = {{std::vector<float>(64, 0.0f)},
                                            {std::vector<float>(64, 1.0f)}};
        ProbeLoss probe({2, 4, 8, 8}, 11);
        grad_gate("wavelet prompt block",
                  [&](Tape* t) { return probe.apply(t, wpb_forward(t, z, reps, wpb, m, false)); },
                  {z, wpb.weights.w, wpb.banks[0].components, wpb.sft[2].gamma_w2,
                   wpb.refine_w[0]},
                  1e-3, 1e-3f, 2e-3);
    }
    // tiny full model, every parameter
    {
        ModelConfig cfg;
        cfg.scales = 2;
        cfg.base_channels = 4;
        cfg.prompt_count = 2;
        cfg.prompt_base = 8;
        cfg.conv_depth = 2;
        cfg.clusters = 2;
        cfg.sa_kernel = 3;
        CwpNet net = make_cwp_net(cfg, 13);
        net.cluster.k = 2;
        net.cluster.dim = 64;
        net.cluster.fitted = true;
        net.cluster.centroids.assign(128, 0.0f);
        for (int i = 64; i < 128; ++i) net.cluster.centroids[static_cast<size_t>(i)] = 1.0f;
        Rng wr(14);
        for (auto& wpb : net.wpbs)
            for (float& v : wpb.weights.w.values()) v = wr.uniform(0.2f, 0.9f);
        for (auto& p : net.parameters())
            if (p.name.find("squeeze_b") != std::string::npos)
                for (float& v : p.tensor.values()) v = 0.3f;
        Tensor x = make_test_image(16, 16, 15);
        Tensor truth = make_test_image(16, 16, 16);
        auto loss_on = [&](Tape* tape) {
            ForwardResult res = forward(tape, net, x, false);
            auto truths = truth_pyramid(tape, truth, cfg.scales);
            return loss_total(tape, res.outputs, truths, 0.1f);
        };
        Tape tape;
        Tensor loss = loss_on(&tape);
        net.zero_grads();
        tape.backward(loss);
        auto loss_val = [&]() {
            ForwardResult res = forward(nullptr, net, x, false);
            auto truths = truth_pyramid(nullptr, truth, cfg.scales);
            return loss_total_value(res.outputs, truths, 0.1);
        };
        for (auto& p : net.parameters()) {
            const auto res = fd_check(loss_val, p.tensor, p.tensor.grad(), 2e-3f, 1e-2);
            require(res.max_err < 1e-2, "full model, parameter " + p.name +
                                            ": max relative gradient error " +
                                            std::to_string(res.max_err));
        }
    }
}

// ---- criterion 3: backdoor reproduction ---------------------------------------

void criterion_backdoor() {
    CountTable rounded = read_count_table((g_data_dir / "drug_study_rounded.csv").string());
    const double eff_rounded = backdoor_adjust(rounded, 1, 1) - backdoor_adjust(rounded, 0, 1);
    require(std::abs(eff_rounded - 0.0502) <= 5e-5,
            "rounded-rate effect " + std::to_string(eff_rounded) + " not within 5e-5 of 0.0502");

    CountTable exact = read_count_table((g_data_dir / "drug_study_exact.csv").string());
    const double eff_exact = backdoor_adjust(exact, 1, 1) - backdoor_adjust(exact, 0, 1);
    require(std::abs(eff_exact - 0.05367) <= 1e-4,
            "exact-count effect " + std::to_string(eff_exact) + " not within 1e-4 of 0.05367");
}

// ---- criterion 4: identifiability by enumeration ------------------------------

DiscreteScm random_prompt_scm(uint32_t seed, int card_p) {
    Rng rng(seed);
    auto row = [&](int n) {
        std::vector<double> r(static_cast<size_t>(n));
        double total = 0.0;
        for (auto& v : r) {
            v = 0.05 + static_cast<double>(rng.uniform());
            total += v;
        }
        for (auto& v : r) v /= total;
        return r;
    };
    auto cpt = [&](int rows, int n) {
        std::vector<double> out;
        for (int i = 0; i < rows; ++i) {
            const auto r = row(n);
            out.insert(out.end(), r.begin(), r.end());
        }
        return out;
    };
    DiscreteScm scm;
    scm.add_variable("c", 2, {}, row(2));
    scm.add_variable("t", 3, {}, row(3));
    scm.add_variable("d", 2, {1}, cpt(3, 2));
    scm.add_variable("x", 2, {0, 2}, cpt(4, 2));
    scm.add_variable("p", card_p, {1}, cpt(3, card_p));
    scm.add_variable("y", 2, {3, 4}, cpt(2 * card_p, 2));
    return scm;
}

void criterion_identifiability() {
    for (uint32_t trial = 0; trial < 100; ++trial) {
        DiscreteScm scm = random_prompt_scm(4000 + trial, 4);
        for (int xv = 0; xv < 2; ++xv) {
            const auto truth = interventional_by_surgery(scm, 3, xv, 5);
            const auto adj = backdoor_adjust_scm(scm, 3, xv, 4, 5);
            for (size_t q = 0; q < truth.size(); ++q)
                require(std::abs(truth[q] - adj[q]) < 1e-10,
                        "trial " + std::to_string(trial) + ": |surgery - adjustment| = " +
                            std::to_string(std::abs(truth[q] - adj[q])));
        }
    }
}

// ---- criteria 5 + 7: overfit smoke run with the delayed-update contract -------

void criterion_overfit_and_delayed_update() {
    ModelConfig mc;  // the desk-scale defaults: S=3, C0=8, M=5, K=5, N=4
    CwpNet net = make_cwp_net(mc, 7);

    std::vector<DegradationRecord> data;
    for (int i = 0; i < 8; ++i) {
        DegradationRecord rec;
        rec.clean = make_test_image(64, 64, 700 + static_cast<uint32_t>(i));
        if (i % 2 == 0) {
            rec.kind = NoiseParams{25.0f};
            rec.degraded = apply_noise(rec.clean, 25.0f, 800 + static_cast<uint32_t>(i));
        } else {
            rec.kind = LowLightParams{3.0f};
            rec.degraded = apply_lowlight(rec.clean, 3.0f);
        }
        rec.source_id = "overfit-" + std::to_string(i);
        data.push_back(std::move(rec));
    }

    TrainConfig tc;
    tc.epochs = 250;        // 8 records / batch 4 = 2 steps per epoch -> 500 steps
    tc.warmup_epochs = 225; // leaves 25 epochs = 50 steps of weight-table learning
    tc.batch_size = 4;
    tc.lr0 = 1e-3f;
    tc.lr1 = 1e-5f;
    tc.lambda = 0.1f;
    tc.seed = 11;

    bool warmup_clean = true;
    TrainResult result = train(net, data, tc, [&](const CwpNet& n, int epoch) {
        if (epoch < tc.warmup_epochs) {
            if (n.cluster.fitted) warmup_clean = false;
            for (const auto& wpb : n.wpbs)
                for (float v : wpb.weights.w.values())
                    if (v != 1.0f) warmup_clean = false;
        }
    });

    // criterion 7: delayed update honored, then the table actually moves
    require(warmup_clean, "a weight-table entry deviated from 1.0 during warmup");
    require(net.cluster.fitted, "clusters were never fitted");
    bool departed = false;
    for (const auto& wpb : net.wpbs)
        for (float v : wpb.weights.w.values())
            if (v != 1.0f) departed = true;
    require(departed, "no weight-table entry departed from 1.0 after the delayed update");

    // criterion 5: the overfit targets
    const double initial = result.history.front().loss_total;
    const double final_loss = result.history.back().loss_total;
    require(final_loss < 0.2 * initial, "final loss " + std::to_string(final_loss) +
                                            " not below 20% of initial " +
                                            std::to_string(initial));
    double degraded_psnr = 0.0, restored_psnr = 0.0;
    for (const auto& rec : data) {
        degraded_psnr += psnr(rec.degraded, rec.clean);
        restored_psnr += psnr(restore(net, rec.degraded), rec.clean);
    }
    degraded_psnr /= static_cast<double>(data.size());
    restored_psnr /= static_cast<double>(data.size());
    require(restored_psnr >= degraded_psnr + 3.0,
            "restored " + std::to_string(restored_psnr) + " dB vs degraded " +
                std::to_string(degraded_psnr) + " dB: gain below 3 dB");
    std::cout << "    (overfit: degraded " << degraded_psnr << " dB -> restored " << restored_psnr
              << " dB; loss " << initial << " -> " << final_loss << ")\n";
}

// ---- criterion 6: per-subband distortion signatures ----------------------------

void criterion_subband_signatures() {
    Tensor img = make_test_image(64, 64, 61);

    SubbandReport noise = subband_distortion(img, apply_noise(img, 25.0f, 62));
    double lo = noise.psnr_db[0], hi = noise.psnr_db[0];
    for (int j = 1; j < 4; ++j) {
        lo = std::min(lo, noise.psnr_db[j]);
        hi = std::max(hi, noise.psnr_db[j]);
    }
    require(hi - lo < 1.5, "noise subband spread " + std::to_string(hi - lo) + " dB exceeds 1.5");

    SubbandReport haze = subband_distortion(img, apply_haze(img, 0.5f, 0.9f));
    SubbandReport low = subband_distortion(img, apply_lowlight(img, 3.0f));
    for (int j = 1; j < 4; ++j) {
        require(haze.psnr_db[0] < haze.psnr_db[j], "haze: LL not the strict minimum");
        require(low.psnr_db[0] < low.psnr_db[j], "low light: LL not the strict minimum");
    }

    require(noise.mild_set() != haze.mild_set() || noise.mild_set() != low.mild_set(),
            "all degradation kinds share one mild-subband set");
}

// ---- criterion 8: clustering -----------------------------------------------------

void criterion_clustering() {
    Rng rng(81);
    std::vector<std::vector<float>> pts;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const int lbl = i % 2;
        const float cx = lbl == 0 ? 0.0f : 10.0f;
        pts.push_back({cx + rng.normal(0.0f, 1.0f), rng.normal(0.0f, 1.0f)});
        labels.push_back(lbl);
    }
    ClusterModel m = kmeans_fit(pts, 2, 5);
    int remap[2];
    remap[kmeans_assign(m, pts[0])] = labels[0];
    remap[1 - kmeans_assign(m, pts[0])] = 1 - labels[0];
    for (size_t i = 0; i < pts.size(); ++i)
        require(remap[kmeans_assign(m, pts[i])] == labels[i],
                "blob purity broken at point " + std::to_string(i));
    require(ModelConfig{}.clusters == 5, "default cluster count is not 5");
}

// ---- criterion 9: metric sanity ---------------------------------------------------

void criterion_metrics() {
    Tensor x = make_test_image(32, 32, 91);
    Tensor y = make_test_image(32, 32, 92);
    require(std::abs(ssim(x, x) - 1.0) < 1e-12, "ssim(x,x) != 1");
    require(std::isinf(psnr(x, x)), "psnr identity is not the inf sentinel");
    require(std::abs(psnr(x, y) - oracle::psnr_naive(x, y, 1.0)) < 1e-6,
            "psnr disagrees with the direct-formula oracle");
    auto luma = [](const Tensor& img) {
        std::vector<double> out(static_cast<size_t>(img.dim(2)) * img.dim(3));
        const size_t hw = out.size();
        for (size_t i = 0; i < hw; ++i)
            out[i] = 0.299 * img.data()[i] + 0.587 * img.data()[hw + i] +
                     0.114 * img.data()[2 * hw + i];
        return out;
    };
    const double want = oracle::ssim_naive_luma(luma(x), luma(y), 32, 32);
    require(std::abs(ssim(x, y) - want) < 1e-4, "ssim disagrees with the windowed oracle");
}

// ---- criterion 10: determinism ------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = g_cli_path + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_determinism() {
    const fs::path dir = g_work_dir / "determinism";
    fs::create_directories(dir);
    std::string manifest_text;
    for (int i = 0; i < 4; ++i) {
        const fs::path img = dir / ("clean" + std::to_string(i) + ".ppm");
        write_ppm(make_test_image(32, 32, 900 + static_cast<uint32_t>(i)), img.string());
        manifest_text += img.string() + (i % 2 ? " lowlight gamma=3 " : " noise sigma=25 ") +
                         std::to_string(50 + i) + "\n";
    }
    const fs::path manifest = dir / "train.manifest";
    write_text_file(manifest.string(), manifest_text);
    const fs::path cfg = dir / "run.cfg";
    write_text_file(cfg.string(), "manifest=" + manifest.string() +
                                      "\nepochs=6\nwarmup_epochs=3\nbatch_size=4\nclusters=2\n"
                                      "lr0=1e-3\nlr1=1e-5\nseed=21\n");

    require(run_cli("train --config " + cfg.string() + " --out " + (dir / "runA").string()) == 0,
            "first training run failed");
    require(run_cli("train --config " + cfg.string() + " --out " + (dir / "runB").string()) == 0,
            "second training run failed");
    const std::string a = file_bytes(dir / "runA" / "checkpoint.cwpn");
    const std::string b = file_bytes(dir / "runB" / "checkpoint.cwpn");
    require(!a.empty() && a == b, "checkpoints from identical runs differ");
    require(file_bytes(dir / "runA" / "history.csv") == file_bytes(dir / "runB" / "history.csv"),
            "history CSVs from identical runs differ");

    // checkpoint round trip is bitwise-faithful
    LoadedCheckpoint lc = load_checkpoint((dir / "runA" / "checkpoint.cwpn").string());
    save_checkpoint((dir / "resaved.cwpn").string(), lc.net, lc.cfg);
    require(file_bytes(dir / "resaved.cwpn") == a, "checkpoint round trip altered bytes");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: cwp_acceptance <path-to-cwp-cli> <data-dir>\n";
        return 2;
    }
    g_cli_path = argv[1];
    g_data_dir = argv[2];
    g_work_dir = fs::temp_directory_path() / "cwp_acceptance";
    fs::remove_all(g_work_dir);
    fs::create_directories(g_work_dir);

    std::vector<Criterion> criteria = {
        {1, "wavelet round trip and energy conservation", criterion_wavelet, 5.0},
        {2, "gradient suite (blocks and tiny full model)", criterion_gradients, 120.0},
        {3, "backdoor adjustment on the drug-study tables", criterion_backdoor, 1.0},
        {4, "identifiability: surgery equals prompt adjustment", criterion_identifiability, 10.0},
        {5, "overfit smoke training (with criterion 7 inline)", criterion_overfit_and_delayed_update,
         900.0},
        {6, "per-subband distortion signatures", criterion_subband_signatures, 30.0},
        {7, "delayed-update contract (verified during criterion 5)", [] {}, 900.0},
        {8, "k-means blob recovery and default cluster count", criterion_clustering, 5.0},
        {9, "metric sanity against independent oracles", criterion_metrics, 5.0},
        {10, "bitwise determinism of training and checkpoints", criterion_determinism, 900.0},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            c.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty() && secs > c.time_limit_s)
            error = "exceeded the " + std::to_string(c.time_limit_s) + "s budget";
        char timing[32];
        std::snprintf(timing, sizeof(timing), "%.1fs", secs);
        if (error.empty()) {
            std::cout << "criterion " << c.id << " PASS " << c.name << " (" << timing << ")\n";
        } else {
            ++failures;
            std::cout << "criterion " << c.id << " FAIL " << c.name << " (" << timing
                      << "): " << error << "\n";
        }
    }
    std::cout << "acceptance: " << (criteria.size() - static_cast<size_t>(failures)) << "/"
              << criteria.size() << " criteria passed\n";
    fs::remove_all(g_work_dir);
    return failures == 0 ? 0 : 1;
}
