// Command-line entry point: train / eval / degrade / analyze / backdoor /
// dump-attn. Exit codes: 0 success, 2 usage or config error, 3 data error,
// 4 internal invariant violation.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>

#include "cwp/analysis.hpp"
#include "cwp/checkpoint.hpp"
#include "cwp/config.hpp"
#include "cwp/degrade.hpp"
#include "cwp/image_io.hpp"
#include "cwp/model.hpp"
#include "cwp/training.hpp"

namespace fs = std::filesystem;
using namespace cwp;

namespace {

std::string fmt(double v, int digits = 6) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int seed_override) {
    RunConfig cfg = parse_run_config(config_path);
    if (seed_override >= 0) cfg.train.seed = static_cast<uint32_t>(seed_override);
    cfg.out_dir = out_dir;
    fs::create_directories(out_dir);

    DatasetManifest manifest = parse_manifest(cfg.manifest);
    if (manifest.entries.empty()) throw DataError("train: manifest '" + cfg.manifest + "' is empty");
    std::vector<DegradationRecord> data = build_dataset(manifest);

    CwpNet net = make_cwp_net(cfg.model, cfg.train.seed);
    TrainResult result = train(net, data, cfg.train);

    std::string history = csv_join({"epoch", "lr", "loss_total", "loss_rec", "loss_fre",
                                    "mean_train_psnr"});
    for (const auto& st : result.history)
        history += csv_join({std::to_string(st.epoch), format_double(st.lr),
                             format_double(st.loss_total), format_double(st.loss_rec),
                             format_double(st.loss_fre), format_double(st.mean_psnr)});
    write_text_file((fs::path(out_dir) / "history.csv").string(), history);

    // empirical distribution of the adjustment variable over the training set
    std::vector<DegradationRep> reps;
    for (const auto& rec : data) {
        Tensor padded = pad_to_multiple(rec.degraded, 1 << net.cfg.scales);
        ForwardResult fwd = forward(nullptr, net, padded, !net.cluster.fitted);
        reps.insert(reps.end(), fwd.reps.begin(), fwd.reps.end());
    }
    std::string dist = csv_join({"cluster_index", "frequency", "omega_lh", "omega_hl", "omega_hh"});
    if (net.cluster.fitted) {
        for (const auto& row :
             estimate_prompt_distribution(reps, net.cluster, net.wpbs[0].weights))
            dist += csv_join({std::to_string(row.cluster), format_double(row.frequency),
                              format_double(row.w_lh), format_double(row.w_hl),
                              format_double(row.w_hh)});
    }
    write_text_file((fs::path(out_dir) / "prompt_dist.csv").string(), dist);

    save_checkpoint((fs::path(out_dir) / "checkpoint.cwpn").string(), net, cfg);
    std::cout << "trained " << cfg.train.epochs << " epochs on " << data.size()
              << " records; final loss " << fmt(result.history.back().loss_total) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& report_path) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    DatasetManifest manifest = parse_manifest(manifest_path);
    if (manifest.entries.empty())
        throw DataError("eval: manifest '" + manifest_path + "' is empty");
    std::vector<DegradationRecord> data = build_dataset(manifest);

    std::string report = csv_join({"index", "source", "kind", "psnr_degraded", "ssim_degraded",
                                   "psnr_restored", "ssim_restored"});
    double sum_pd = 0.0, sum_sd = 0.0, sum_pr = 0.0, sum_sr = 0.0;
    size_t finite_pd = 0, finite_pr = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const DegradationRecord& rec = data[i];
        Tensor restored = restore(lc.net, rec.degraded);
        const double pd = psnr(rec.degraded, rec.clean);
        const double sd = ssim(rec.degraded, rec.clean);
        const double pr = psnr(restored, rec.clean);
        const double sr = ssim(restored, rec.clean);
        report += csv_join({std::to_string(i), rec.source_id, kind_name(rec.kind),
                            format_double(pd), format_double(sd), format_double(pr),
                            format_double(sr)});
        if (std::isfinite(pd)) {
            sum_pd += pd;
            ++finite_pd;
        }
        if (std::isfinite(pr)) {
            sum_pr += pr;
            ++finite_pr;
        }
        sum_sd += sd;
        sum_sr += sr;
    }
    const double n = static_cast<double>(data.size());
    const double mean_pd = finite_pd ? sum_pd / static_cast<double>(finite_pd)
                                     : std::numeric_limits<double>::infinity();
    const double mean_pr = finite_pr ? sum_pr / static_cast<double>(finite_pr)
                                     : std::numeric_limits<double>::infinity();
    report += csv_join({"mean", "", "", format_double(mean_pd), format_double(sum_sd / n),
                        format_double(mean_pr), format_double(sum_sr / n)});
    write_text_file(report_path, report);
    std::cout << "mean degraded psnr " << fmt(mean_pd, 3) << " db, mean restored psnr "
              << fmt(mean_pr, 3) << " db over " << data.size() << " records\n";
    return 0;
}

int cmd_degrade(const std::string& manifest_path, const std::string& out_dir) {
    DatasetManifest manifest = parse_manifest(manifest_path);
    if (manifest.entries.empty())
        throw DataError("degrade: manifest '" + manifest_path + "' is empty");
    fs::create_directories(out_dir);
    std::vector<DegradationRecord> data = build_dataset(manifest);
    for (size_t i = 0; i < data.size(); ++i) {
        const std::string stem =
            fs::path(data[i].source_id).stem().string() + "_" + kind_name(data[i].kind) + "_" +
            std::to_string(i);
        write_ppm(data[i].clean, (fs::path(out_dir) / (stem + "_clean.ppm")).string());
        write_ppm(data[i].degraded, (fs::path(out_dir) / (stem + "_degraded.ppm")).string());
    }
    std::cout << "wrote " << data.size() << " image pairs to " << out_dir << "\n";
    return 0;
}

int cmd_analyze(const std::string& clean_path, const std::string& degraded_path) {
    Tensor clean = read_ppm(clean_path);
    Tensor degraded = read_ppm(degraded_path);
    if (clean.dims() != degraded.dims())
        throw DataError("analyze: image dims differ: " + dims_to_string(clean.dims()) + " vs " +
                        dims_to_string(degraded.dims()));
    if (clean.dim(2) % 2 != 0 || clean.dim(3) % 2 != 0)
        throw DataError("analyze: image dims must be even for the wavelet split, got " +
                        dims_to_string(clean.dims()));
    SubbandReport rep = subband_distortion(clean, degraded);
    std::cout << "subband,psnr_db,classification\n";
    for (int j = 0; j < 4; ++j)
        std::cout << subband_name(j) << "," << format_double(rep.psnr_db[j]) << ","
                  << (rep.mild[j] ? "mild" : "severe") << "\n";
    return 0;
}

int cmd_backdoor(const std::string& table_path) {
    CountTable table = read_count_table(table_path);
    const double do1 = backdoor_adjust(table, 1, 1);
    const double do0 = backdoor_adjust(table, 0, 1);
    const double n1 = naive_conditional(table, 1, 1);
    const double n0 = naive_conditional(table, 0, 1);
    std::cout << "adjusted P(Y=1|do(X=1)) = " << fmt(do1) << "\n";
    std::cout << "adjusted P(Y=1|do(X=0)) = " << fmt(do0) << "\n";
    std::cout << "adjusted effect = " << fmt(do1 - do0) << "\n";
    std::cout << "naive P(Y=1|X=1) = " << fmt(n1) << "\n";
    std::cout << "naive P(Y=1|X=0) = " << fmt(n0) << "\n";
    std::cout << "naive effect = " << fmt(n1 - n0) << "\n";
    return 0;
}

int cmd_dump_attn(const std::string& ckpt_path, const std::string& image_path,
                  const std::string& out_path) {
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    Tensor img = read_ppm(image_path);
    Tensor padded = pad_to_multiple(img, 1 << lc.net.cfg.scales);
    ForwardResult fwd = forward(nullptr, lc.net, padded, !lc.net.cluster.fitted);
    Tensor gate = fwd.ll_gate;  // 1 x 1 x h x w
    float lo = gate.data()[0], hi = gate.data()[0];
    for (size_t i = 0; i < gate.size(); ++i) {
        lo = std::min(lo, gate.data()[i]);
        hi = std::max(hi, gate.data()[i]);
    }
    Tensor scaled(gate.dims());
    const float range = hi - lo;
    for (size_t i = 0; i < gate.size(); ++i)
        scaled.data()[i] = range > 0.0f ? (gate.data()[i] - lo) / range : 0.0f;
    write_ppm(scaled, out_path);
    std::cout << "wrote attention gate (" << gate.dim(2) << "x" << gate.dim(3) << ", range "
              << fmt(lo, 4) << ".." << fmt(hi, 4) << ") to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CWP-Net: wavelet-disentangled prompt network for all-in-one image restoration"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt_path, manifest_path, report_path;
    std::string clean_path, degraded_path, table_path, image_path, out_path;
    int seed_override = -1;

    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", config_path, "key=value config file")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_option("--seed", seed_override, "override the config seed");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
    eval_cmd->add_option("--report", report_path, "output CSV path")->required();

    auto* degrade_cmd = app.add_subcommand("degrade", "synthesize degraded image pairs");
    degrade_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
    degrade_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* analyze_cmd = app.add_subcommand("analyze", "per-subband distortion report");
    analyze_cmd->add_option("--clean", clean_path, "clean image (PPM)")->required();
    analyze_cmd->add_option("--degraded", degraded_path, "degraded image (PPM)")->required();

    auto* backdoor_cmd = app.add_subcommand("backdoor", "backdoor-adjusted vs naive effect");
    backdoor_cmd->add_option("--table", table_path, "z,x,y,count CSV")->required();

    auto* attn_cmd = app.add_subcommand("dump-attn", "write the tapped attention gate as PGM");
    attn_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    attn_cmd->add_option("--image", image_path, "input image (PPM)")->required();
    attn_cmd->add_option("--out", out_path, "output PGM path")->required();

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir, seed_override);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_path, manifest_path, report_path);
        if (degrade_cmd->parsed()) return cmd_degrade(manifest_path, out_dir);
        if (analyze_cmd->parsed()) return cmd_analyze(clean_path, degraded_path);
        if (backdoor_cmd->parsed()) return cmd_backdoor(table_path);
        if (attn_cmd->parsed()) return cmd_dump_attn(ckpt_path, image_path, out_path);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}
