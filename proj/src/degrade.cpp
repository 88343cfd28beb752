#include "cwp/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cwp/image_io.hpp"

namespace cwp {

std::string kind_name(const DegradationKind& kind) {
    struct Visitor {
        std::string operator()(const NoiseParams&) const { return "noise"; }
        std::string operator()(const RainParams&) const { return "rain"; }
        std::string operator()(const HazeParams&) const { return "haze"; }
        std::string operator()(const LowLightParams&) const { return "lowlight"; }
        std::string operator()(const BlurParams&) const { return "blur"; }
    };
    return std::visit(Visitor{}, kind);
}

static void check_image(const Tensor& img, const char* op) {
    if (img.rank() != 4 || img.dim(0) != 1)
        throw ShapeError(std::string(op) + ": expected a 1 x C x H x W image, got " +
                         dims_to_string(img.dims()));
}

Tensor apply_noise(const Tensor& img, float sigma, uint32_t seed) {
    check_image(img, "apply_noise");
    if (sigma <= 0.0f) throw ConfigError("apply_noise: sigma must be > 0");
    Rng rng(seed);
    Tensor out(img.dims());
    const float s = sigma / 255.0f;
    const float* pi = img.data();
    float* po = out.data();
    for (size_t i = 0; i < img.size(); ++i)
        po[i] = std::clamp(pi[i] + rng.normal(0.0f, s), 0.0f, 1.0f);
    return out;
}

Tensor apply_rain(const Tensor& img, const RainParams& p, uint32_t seed) {
    check_image(img, "apply_rain");
    if (p.density < 0.0f) throw ConfigError("apply_rain: density must be >= 0");
    const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
    Tensor out(img.dims(), img.values());
    if (p.density == 0.0f) return out;

    // additive streak field, shared across channels (white rain)
    std::vector<float> field(static_cast<size_t>(H) * W, 0.0f);
    Rng rng(seed);
    const int n_streaks =
        static_cast<int>(std::lround(p.density * static_cast<double>(H) * W / 1000.0));
    const float rad = p.angle * 3.14159265358979323846f / 180.0f;
    // angle is measured from the horizontal axis; 90 degrees falls straight down
    const float dx = std::cos(rad), dy = std::sin(rad);
    const float cross_sigma = 1.2f;
    const int halo = static_cast<int>(std::ceil(3.0f * cross_sigma));
    for (int s = 0; s < n_streaks; ++s) {
        const float cx = rng.uniform(0.0f, static_cast<float>(W));
        const float cy = rng.uniform(0.0f, static_cast<float>(H));
        const float gain = p.intensity * rng.uniform(0.6f, 1.0f);
        const int steps = std::max(1, static_cast<int>(std::ceil(p.length * 2.0f)));
        for (int t = 0; t <= steps; ++t) {
            const float u = (static_cast<float>(t) / static_cast<float>(steps) - 0.5f) * p.length;
            const float px = cx + u * dx;
            const float py = cy + u * dy;
            const int x0 = static_cast<int>(std::floor(px)) - halo;
            const int y0 = static_cast<int>(std::floor(py)) - halo;
            for (int yy = y0; yy <= y0 + 2 * halo; ++yy) {
                if (yy < 0 || yy >= H) continue;
                for (int xx = x0; xx <= x0 + 2 * halo; ++xx) {
                    if (xx < 0 || xx >= W) continue;
                    // perpendicular distance to the streak axis
                    const float rx = static_cast<float>(xx) - px;
                    const float ry = static_cast<float>(yy) - py;
                    const float perp = rx * dy - ry * dx;
                    const float w = std::exp(-perp * perp / (2.0f * cross_sigma * cross_sigma));
                    float& cell = field[static_cast<size_t>(yy) * W + xx];
                    cell = std::max(cell, gain * w);
                }
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        float* plane = out.data() + static_cast<size_t>(c) * H * W;
        for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i)
            plane[i] = std::clamp(plane[i] + field[i], 0.0f, 1.0f);
    }
    return out;
}

Tensor apply_haze(const Tensor& img, float t, float a) {
    check_image(img, "apply_haze");
    if (t < 0.0f || t > 1.0f) throw ConfigError("apply_haze: transmission must lie in [0,1]");
    if (a < 0.0f || a > 1.0f) throw ConfigError("apply_haze: airlight must lie in [0,1]");
    Tensor out(img.dims());
    const float* pi = img.data();
    float* po = out.data();
    const float air = a * (1.0f - t);
    for (size_t i = 0; i < img.size(); ++i) po[i] = std::clamp(pi[i] * t + air, 0.0f, 1.0f);
    return out;
}

Tensor apply_lowlight(const Tensor& img, float gamma) {
    check_image(img, "apply_lowlight");
    if (gamma < 1.0f) throw ConfigError("apply_lowlight: gamma must be >= 1");
    Tensor out(img.dims());
    const float* pi = img.data();
    float* po = out.data();
    for (size_t i = 0; i < img.size(); ++i)
        po[i] = std::clamp(std::pow(std::max(pi[i], 0.0f), gamma), 0.0f, 1.0f);
    return out;
}

Tensor apply_blur(const Tensor& img, const Tensor& kernel) {
    check_image(img, "apply_blur");
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
        throw ConfigError("apply_blur: kernel must be square with odd size, got " +
                          dims_to_string(kernel.dims()));
    double total = 0.0;
    for (size_t i = 0; i < kernel.size(); ++i) total += kernel.data()[i];
    if (std::abs(total - 1.0) > 1e-4)
        throw ConfigError("apply_blur: kernel entries must sum to 1, got " + std::to_string(total));
    const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
    const int ks = kernel.dim(0), r = ks / 2;
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return std::clamp(i, 0, n - 1);
    };
    Tensor out(img.dims());
    for (int c = 0; c < C; ++c) {
        const float* plane = img.data() + static_cast<size_t>(c) * H * W;
        float* oplane = out.data() + static_cast<size_t>(c) * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                double acc = 0.0;
                for (int ki = 0; ki < ks; ++ki)
                    for (int kj = 0; kj < ks; ++kj)
                        acc += kernel.data()[static_cast<size_t>(ki) * ks + kj] *
                               plane[static_cast<size_t>(reflect(i + ki - r, H)) * W +
                                     reflect(j + kj - r, W)];
                oplane[static_cast<size_t>(i) * W + j] =
                    std::clamp(static_cast<float>(acc), 0.0f, 1.0f);
            }
    }
    return out;
}

Tensor motion_blur_kernel(int kernel_id, int size) {
    if (kernel_id < 0 || kernel_id >= kBlurBankSize)
        throw ConfigError("motion_blur_kernel: kernel_id must lie in [0," +
                          std::to_string(kBlurBankSize) + ")");
    static const int default_sizes[kBlurBankSize] = {5, 7, 9, 11, 13, 15, 9, 13};
    if (size == 0) size = default_sizes[kernel_id];
    if (size < 3 || size % 2 == 0)
        throw ConfigError("motion_blur_kernel: size must be odd and >= 3, got " +
                          std::to_string(size));
    const float angle = 22.5f * static_cast<float>(kernel_id);
    const float rad = angle * 3.14159265358979323846f / 180.0f;
    const float dx = std::cos(rad), dy = std::sin(rad);
    Tensor k({size, size});
    const float c = static_cast<float>(size - 1) / 2.0f;
    const float cross = 0.5f;
    const int steps = size * 4;
    for (int t = 0; t <= steps; ++t) {
        const float u = (static_cast<float>(t) / steps - 0.5f) * static_cast<float>(size - 1);
        const float px = c + u * dx;
        const float py = c + u * dy;
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                const float ry = static_cast<float>(i) - py;
                const float rx = static_cast<float>(j) - px;
                const float d2 = rx * rx + ry * ry;
                if (d2 < 2.25f) {
                    const float perp = rx * dy - ry * dx;
                    k.data()[static_cast<size_t>(i) * size + j] = std::max(
                        k.data()[static_cast<size_t>(i) * size + j],
                        std::exp(-perp * perp / (2.0f * cross * cross)));
                }
            }
    }
    double total = 0.0;
    for (size_t i = 0; i < k.size(); ++i) total += k.data()[i];
    for (size_t i = 0; i < k.size(); ++i)
        k.data()[i] = static_cast<float>(k.data()[i] / total);
    return k;
}

Tensor apply_kind(const Tensor& img, const DegradationKind& kind, uint32_t seed) {
    struct Visitor {
        const Tensor& img;
        uint32_t seed;
        Tensor operator()(const NoiseParams& p) const { return apply_noise(img, p.sigma, seed); }
        Tensor operator()(const RainParams& p) const { return apply_rain(img, p, seed); }
        Tensor operator()(const HazeParams& p) const { return apply_haze(img, p.t, p.a); }
        Tensor operator()(const LowLightParams& p) const { return apply_lowlight(img, p.gamma); }
        Tensor operator()(const BlurParams& p) const {
            return apply_blur(img, motion_blur_kernel(p.kernel_id, p.size));
        }
    };
    return std::visit(Visitor{img, seed}, kind);
}

// ---- manifests ----------------------------------------------------------------

static float parse_float_value(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const float v = std::stof(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw DataError("manifest: bad numeric value '" + value + "' for key '" + key + "'");
    }
}

DegradationKind parse_kind_spec(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw DataError("manifest: missing degradation kind");
    const std::string& name = tokens[0];
    std::vector<std::pair<std::string, std::string>> kv;
    for (size_t i = 1; i < tokens.size(); ++i) {
        const auto eq = tokens[i].find('=');
        if (eq == std::string::npos)
            throw DataError("manifest: expected key=value, got '" + tokens[i] + "'");
        kv.emplace_back(tokens[i].substr(0, eq), tokens[i].substr(eq + 1));
    }
    auto get = [&](const std::string& key, float fallback) {
        for (const auto& [k, v] : kv)
            if (k == key) return parse_float_value(key, v);
        return fallback;
    };
    auto known = [&](std::initializer_list<const char*> keys) {
        for (const auto& [k, v] : kv) {
            bool ok = false;
            for (const char* key : keys) ok |= (k == key);
            if (!ok) throw DataError("manifest: unknown key '" + k + "' for kind '" + name + "'");
        }
    };
    if (name == "noise") {
        known({"sigma"});
        return NoiseParams{get("sigma", 25.0f)};
    }
    if (name == "rain") {
        known({"density", "angle", "length", "intensity"});
        return RainParams{get("density", 2.0f), get("angle", 80.0f), get("length", 15.0f),
                          get("intensity", 0.5f)};
    }
    if (name == "haze") {
        known({"t", "A"});
        return HazeParams{get("t", 0.5f), get("A", 0.9f)};
    }
    if (name == "lowlight") {
        known({"gamma"});
        return LowLightParams{get("gamma", 3.0f)};
    }
    if (name == "blur") {
        known({"kernel", "size"});
        return BlurParams{static_cast<int>(get("kernel", 0.0f)), static_cast<int>(get("size", 0.0f))};
    }
    throw DataError("manifest: unknown degradation kind '" + name + "'");
}

std::string kind_spec_string(const DegradationKind& kind) {
    std::ostringstream os;
    struct Visitor {
        std::ostringstream& os;
        void operator()(const NoiseParams& p) const { os << "noise sigma=" << p.sigma; }
        void operator()(const RainParams& p) const {
            os << "rain density=" << p.density << " angle=" << p.angle << " length=" << p.length
               << " intensity=" << p.intensity;
        }
        void operator()(const HazeParams& p) const { os << "haze t=" << p.t << " A=" << p.a; }
        void operator()(const LowLightParams& p) const { os << "lowlight gamma=" << p.gamma; }
        void operator()(const BlurParams& p) const {
            os << "blur kernel=" << p.kernel_id;
            if (p.size) os << " size=" << p.size;
        }
    };
    std::visit(Visitor{os}, kind);
    return os.str();
}

DatasetManifest parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest: cannot open '" + path + "'");
    DatasetManifest m;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) tokens.push_back(tok);
        if (tokens.empty()) continue;
        if (tokens.size() < 3)
            throw DataError("manifest: line " + std::to_string(line_no) +
                            " needs <clean_path> <kind> [key=value ...] <seed>");
        ManifestEntry e;
        e.clean_path = tokens.front();
        const std::string& seed_tok = tokens.back();
        try {
            size_t pos = 0;
            e.seed = static_cast<uint32_t>(std::stoul(seed_tok, &pos));
            if (pos != seed_tok.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw DataError("manifest: line " + std::to_string(line_no) + " bad seed '" +
                            seed_tok + "'");
        }
        e.kind = parse_kind_spec(std::vector<std::string>(tokens.begin() + 1, tokens.end() - 1));
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest make_balanced_manifest(const std::vector<std::string>& clean_paths,
                                       const std::vector<DegradationKind>& kinds, uint32_t seed) {
    DatasetManifest m;
    m.regime = Regime::Balanced;
    uint32_t counter = 0;
    for (const auto& kind : kinds)
        for (const auto& path : clean_paths)
            m.entries.push_back({path, kind, seed + counter++});
    return m;
}

DatasetManifest make_imbalanced_manifest(
    const std::vector<std::vector<std::string>>& pools_per_kind,
    const std::vector<DegradationKind>& kinds, uint32_t seed) {
    if (pools_per_kind.size() != kinds.size())
        throw ConfigError("imbalanced manifest: one clean pool required per kind");
    DatasetManifest m;
    m.regime = Regime::Imbalanced;
    uint32_t counter = 0;
    for (size_t k = 0; k < kinds.size(); ++k)
        for (const auto& path : pools_per_kind[k])
            m.entries.push_back({path, kinds[k], seed + counter++});
    return m;
}

std::vector<DegradationRecord> build_dataset(const DatasetManifest& manifest) {
    std::vector<DegradationRecord> records;
    records.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        DegradationRecord rec;
        rec.clean = read_ppm(e.clean_path);
        rec.degraded = apply_kind(rec.clean, e.kind, e.seed);
        rec.kind = e.kind;
        rec.source_id = e.clean_path;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<std::pair<std::string, DegradationKind>> standard_presets() {
    return {
        {"noise15", NoiseParams{15.0f}},
        {"noise25", NoiseParams{25.0f}},
        {"noise50", NoiseParams{50.0f}},
        {"rain", RainParams{2.0f, 80.0f, 15.0f, 0.5f}},
        {"rain_heavy", RainParams{6.0f, 75.0f, 21.0f, 0.8f}},
        {"haze", HazeParams{0.5f, 0.9f}},
        {"lowlight", LowLightParams{3.0f}},
        {"blur", BlurParams{2, 0}},
    };
}

}  // namespace cwp
