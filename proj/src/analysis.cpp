#include "cwp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cwp/frequency.hpp"

namespace cwp {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (a.dims() != b.dims())
        throw ShapeError("psnr: dims mismatch " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    const float* pa = a.data();
    const float* pb = b.data();
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - pb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// BT.601 luminance of a 1 x C x H x W image; single-channel input passes through.
static std::vector<double> to_luma(const Tensor& img) {
    const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<double> luma(hw);
    if (C == 1) {
        for (size_t i = 0; i < hw; ++i) luma[i] = img.data()[i];
    } else if (C == 3) {
        const float* r = img.data();
        const float* g = r + hw;
        const float* b = g + hw;
        for (size_t i = 0; i < hw; ++i) luma[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    } else {
        throw ShapeError("ssim: expected 1 or 3 channels, got " + dims_to_string(img.dims()));
    }
    return luma;
}

double ssim(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims())
        throw ShapeError("ssim: dims mismatch " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    if (a.rank() != 4 || a.dim(0) != 1)
        throw ShapeError("ssim: expected a 1 x C x H x W image, got " + dims_to_string(a.dims()));
    const int H = a.dim(2), W = a.dim(3);
    const int win = 11, r = win / 2;
    if (H < win || W < win)
        throw ShapeError("ssim: image " + dims_to_string(a.dims()) + " smaller than the " +
                         std::to_string(win) + "x" + std::to_string(win) + " window");

    const std::vector<double> x = to_luma(a);
    const std::vector<double> y = to_luma(b);

    double g[win];
    {
        const double sigma = 1.5;
        double total = 0.0;
        for (int i = 0; i < win; ++i) {
            g[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
            total += g[i];
        }
        for (int i = 0; i < win; ++i) g[i] /= total;
    }

    const double c1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    const double c2 = 0.03 * 0.03;

    double acc = 0.0;
    size_t count = 0;
    for (int i = r; i < H - r; ++i) {
        for (int j = r; j < W - r; ++j) {
            double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int u = -r; u <= r; ++u)
                for (int v = -r; v <= r; ++v) {
                    const double w = g[u + r] * g[v + r];
                    const double xv = x[static_cast<size_t>(i + u) * W + (j + v)];
                    const double yv = y[static_cast<size_t>(i + u) * W + (j + v)];
                    mx += w * xv;
                    my += w * yv;
                    sxx += w * xv * xv;
                    syy += w * yv * yv;
                    sxy += w * xv * yv;
                }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
            const double den = (mx * mx + my * my + c1) * (sxx + syy + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

std::vector<int> SubbandReport::mild_set() const {
    std::vector<int> out;
    for (int j = 0; j < 4; ++j)
        if (mild[j]) out.push_back(j);
    return out;
}

SubbandReport subband_distortion(const Tensor& clean, const Tensor& degraded) {
    if (clean.dims() != degraded.dims())
        throw ShapeError("subband_distortion: dims mismatch " + dims_to_string(clean.dims()) +
                         " vs " + dims_to_string(degraded.dims()));
    SubbandSet sc = dwt2(nullptr, clean);
    SubbandSet sd = dwt2(nullptr, degraded);
    SubbandReport rep{};
    for (int j = 0; j < 4; ++j) {
        rep.psnr_db[j] = psnr(sc.band(j), sd.band(j), 2.0);
        rep.mild[j] = rep.psnr_db[j] > kMildThresholdDb;
    }
    return rep;
}

// ---- discrete causal toolkit -----------------------------------------------------

int DiscreteScm::add_variable(const std::string& name, int cardinality, std::vector<int> parents,
                              std::vector<double> cpt) {
    if (cardinality < 1) throw ConfigError("scm: cardinality must be >= 1 for '" + name + "'");
    size_t rows = 1;
    for (int p : parents) {
        if (p < 0 || p >= size())
            throw ConfigError("scm: '" + name + "' references unknown parent index " +
                              std::to_string(p) + " (add variables parents-first)");
        rows *= static_cast<size_t>(vars_[static_cast<size_t>(p)].cardinality);
    }
    if (cpt.size() != rows * static_cast<size_t>(cardinality))
        throw ConfigError("scm: '" + name + "' CPT needs " +
                          std::to_string(rows * static_cast<size_t>(cardinality)) +
                          " entries, got " + std::to_string(cpt.size()));
    for (size_t row = 0; row < rows; ++row) {
        double total = 0.0;
        for (int v = 0; v < cardinality; ++v) total += cpt[row * static_cast<size_t>(cardinality) + v];
        if (std::abs(total - 1.0) > 1e-9)
            throw ConfigError("scm: '" + name + "' CPT row " + std::to_string(row) +
                              " sums to " + std::to_string(total));
    }
    vars_.push_back({name, cardinality, std::move(parents), std::move(cpt)});
    return size() - 1;
}

int DiscreteScm::index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (vars_[static_cast<size_t>(i)].name == name) return i;
    throw DataError("scm: unknown variable '" + name + "'");
}

void DiscreteScm::validate() const {
    // parents-first insertion already guarantees acyclicity; re-check anyway
    for (int i = 0; i < size(); ++i)
        for (int p : vars_[static_cast<size_t>(i)].parents)
            if (p >= i) throw ConfigError("scm: variable order is not topological");
}

std::vector<double> DiscreteScm::joint() const {
    size_t total = 1;
    for (const auto& v : vars_) total *= static_cast<size_t>(v.cardinality);
    std::vector<double> joint(total);
    std::vector<int> value(vars_.size(), 0);
    for (size_t flat = 0; flat < total; ++flat) {
        size_t rem = flat;
        for (int i = size() - 1; i >= 0; --i) {
            value[static_cast<size_t>(i)] =
                static_cast<int>(rem % static_cast<size_t>(vars_[static_cast<size_t>(i)].cardinality));
            rem /= static_cast<size_t>(vars_[static_cast<size_t>(i)].cardinality);
        }
        double p = 1.0;
        for (int i = 0; i < size(); ++i) {
            const ScmVariable& var = vars_[static_cast<size_t>(i)];
            size_t row = 0;
            for (int par : var.parents)
                row = row * static_cast<size_t>(vars_[static_cast<size_t>(par)].cardinality) +
                      static_cast<size_t>(value[static_cast<size_t>(par)]);
            p *= var.cpt[row * static_cast<size_t>(var.cardinality) +
                         static_cast<size_t>(value[static_cast<size_t>(i)])];
        }
        joint[flat] = p;
    }
    return joint;
}

// Iterates the full joint, handing each assignment and its probability to fn.
template <typename F>
static void enumerate_joint(const DiscreteScm& scm, const std::vector<double>& joint, F&& fn) {
    std::vector<int> value(static_cast<size_t>(scm.size()), 0);
    const size_t total = joint.size();
    for (size_t flat = 0; flat < total; ++flat) {
        size_t rem = flat;
        for (int i = scm.size() - 1; i >= 0; --i) {
            value[static_cast<size_t>(i)] = static_cast<int>(
                rem % static_cast<size_t>(scm.variable(i).cardinality));
            rem /= static_cast<size_t>(scm.variable(i).cardinality);
        }
        fn(value, joint[flat]);
    }
}

std::vector<double> DiscreteScm::marginal(int var) const {
    if (var < 0 || var >= size()) throw DataError("scm: variable index out of range");
    std::vector<double> out(static_cast<size_t>(vars_[static_cast<size_t>(var)].cardinality), 0.0);
    enumerate_joint(*this, joint(), [&](const std::vector<int>& value, double p) {
        out[static_cast<size_t>(value[static_cast<size_t>(var)])] += p;
    });
    return out;
}

std::vector<double> DiscreteScm::conditional(int query, const std::map<int, int>& evidence) const {
    if (query < 0 || query >= size()) throw DataError("scm: variable index out of range");
    std::vector<double> out(static_cast<size_t>(vars_[static_cast<size_t>(query)].cardinality), 0.0);
    double norm = 0.0;
    enumerate_joint(*this, joint(), [&](const std::vector<int>& value, double p) {
        for (const auto& [v, val] : evidence)
            if (value[static_cast<size_t>(v)] != val) return;
        out[static_cast<size_t>(value[static_cast<size_t>(query)])] += p;
        norm += p;
    });
    if (norm <= 0.0) throw DataError("scm: conditioning event has probability zero");
    for (double& v : out) v /= norm;
    return out;
}

std::vector<double> interventional_by_surgery(const DiscreteScm& scm, int do_var, int do_val,
                                              int query_var) {
    if (do_var < 0 || do_var >= scm.size()) throw DataError("surgery: unknown do-variable index");
    if (query_var < 0 || query_var >= scm.size()) throw DataError("surgery: unknown query index");
    const ScmVariable& dv = scm.variable(do_var);
    if (do_val < 0 || do_val >= dv.cardinality)
        throw DataError("surgery: do-value out of range for '" + dv.name + "'");
    // rebuild with the intervened mechanism replaced by a point mass
    DiscreteScm cut;
    for (int i = 0; i < scm.size(); ++i) {
        const ScmVariable& v = scm.variable(i);
        if (i == do_var) {
            std::vector<double> point(static_cast<size_t>(v.cardinality), 0.0);
            point[static_cast<size_t>(do_val)] = 1.0;
            cut.add_variable(v.name, v.cardinality, {}, point);
        } else {
            cut.add_variable(v.name, v.cardinality, v.parents, v.cpt);
        }
    }
    return cut.marginal(query_var);
}

std::vector<double> backdoor_adjust_scm(const DiscreteScm& scm, int do_var, int do_val,
                                        int adjust_var, int query_var) {
    const std::vector<double> pz = scm.marginal(adjust_var);
    std::vector<double> out(static_cast<size_t>(scm.variable(query_var).cardinality), 0.0);
    for (int z = 0; z < scm.variable(adjust_var).cardinality; ++z) {
        if (pz[static_cast<size_t>(z)] <= 0.0) continue;
        const std::vector<double> cond =
            scm.conditional(query_var, {{do_var, do_val}, {adjust_var, z}});
        for (size_t q = 0; q < out.size(); ++q) out[q] += cond[q] * pz[static_cast<size_t>(z)];
    }
    return out;
}

// ---- count-table backdoor --------------------------------------------------------

void CountTable::add(const std::string& z, int x, int y, double count) {
    if (count < 0.0) throw DataError("count table: negative count");
    counts[z][x][y] += count;
}

double CountTable::total() const {
    double t = 0.0;
    for (const auto& [z, xs] : counts)
        for (const auto& [x, ys] : xs)
            for (const auto& [y, c] : ys) t += c;
    return t;
}

double backdoor_adjust(const CountTable& table, int x, int y) {
    const double total = table.total();
    if (total <= 0.0) throw DataError("backdoor_adjust: empty count table");
    double result = 0.0;
    for (const auto& [z, xs] : table.counts) {
        double nz = 0.0;
        for (const auto& [xv, ys] : xs)
            for (const auto& [yv, c] : ys) nz += c;
        double nzx = 0.0, nzxy = 0.0;
        const auto xit = xs.find(x);
        if (xit != xs.end())
            for (const auto& [yv, c] : xit->second) {
                nzx += c;
                if (yv == y) nzxy += c;
            }
        if (nzx <= 0.0)
            throw DataError("backdoor_adjust: no observations with X=" + std::to_string(x) +
                            " in stratum Z='" + z + "' (cannot condition)");
        result += (nzxy / nzx) * (nz / total);
    }
    return result;
}

double naive_conditional(const CountTable& table, int x, int y) {
    double nx = 0.0, nxy = 0.0;
    for (const auto& [z, xs] : table.counts) {
        const auto xit = xs.find(x);
        if (xit == xs.end()) continue;
        for (const auto& [yv, c] : xit->second) {
            nx += c;
            if (yv == y) nxy += c;
        }
    }
    if (nx <= 0.0)
        throw DataError("naive_conditional: no observations with X=" + std::to_string(x));
    return nxy / nx;
}

CountTable read_count_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("count table: cannot open '" + path + "'");
    CountTable table;
    std::string line;
    size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string z, xs, ys, cs;
        if (!std::getline(ls, z, ',') || !std::getline(ls, xs, ',') ||
            !std::getline(ls, ys, ',') || !std::getline(ls, cs))
            throw DataError("count table: line " + std::to_string(line_no) +
                            " needs z,x,y,count");
        if (!header_seen) {
            header_seen = true;
            if (z == "z") continue;  // header row
        }
        try {
            table.add(z, std::stoi(xs), std::stoi(ys), std::stod(cs));
        } catch (const DataError&) {
            throw;
        } catch (const std::exception&) {
            throw DataError("count table: line " + std::to_string(line_no) + " bad numeric field");
        }
    }
    if (table.counts.empty()) throw DataError("count table: no data rows in '" + path + "'");
    return table;
}

}  // namespace cwp
