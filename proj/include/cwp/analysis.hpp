#pragma once

// Quality metrics (PSNR, SSIM), per-subband distortion analysis at the
// 30 dB mild/severe threshold, and a discrete causal toolkit: conditional
// probability tables over finite variables, interventional distributions by
// graph surgery, and backdoor adjustment from count tables.

#include <map>
#include <string>
#include <vector>

#include "cwp/tensor.hpp"

namespace cwp {

// 10*log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Single-scale SSIM on luminance (BT.601), 11x11 Gaussian window with
// sigma 1.5, K1=0.01, K2=0.03, averaged over valid window positions.
double ssim(const Tensor& a, const Tensor& b);

struct SubbandReport {
    double psnr_db[4];  // LL, LH, HL, HH
    bool mild[4];       // psnr > 30 dB

    std::vector<int> mild_set() const;
};

inline constexpr double kMildThresholdDb = 30.0;

// Per-subband PSNR of the one-level wavelet coefficients. The orthonormal
// transform doubles a constant signal's amplitude, so the peak is doubled.
SubbandReport subband_distortion(const Tensor& clean, const Tensor& degraded);

// ---- discrete causal toolkit ---------------------------------------------------

struct ScmVariable {
    std::string name;
    int cardinality = 0;
    std::vector<int> parents;  // indices into the variable list
    // cpt[row * cardinality + v] = P(var = v | parent combination `row`);
    // rows enumerate parent values with the LAST parent varying fastest.
    std::vector<double> cpt;
};

class DiscreteScm {
  public:
    int add_variable(const std::string& name, int cardinality, std::vector<int> parents,
                     std::vector<double> cpt);
    int index_of(const std::string& name) const;
    const ScmVariable& variable(int i) const { return vars_[static_cast<size_t>(i)]; }
    int size() const { return static_cast<int>(vars_.size()); }

    // Full joint by enumeration (variables must be added parents-first).
    // joint[flat index with the last variable varying fastest].
    std::vector<double> joint() const;

    std::vector<double> marginal(int var) const;
    // P(query | evidence) where evidence maps var index -> value.
    std::vector<double> conditional(int query, const std::map<int, int>& evidence) const;

    void validate() const;  // CPT rows sum to 1, graph acyclic

  private:
    std::vector<ScmVariable> vars_;
};

// Replace do_var's mechanism with a point mass and marginalize query_var.
std::vector<double> interventional_by_surgery(const DiscreteScm& scm, int do_var, int do_val,
                                              int query_var);

// sum_p P(query=q | p, do_var=do_val) * P(p) computed from the observational
// joint of the unmodified model.
std::vector<double> backdoor_adjust_scm(const DiscreteScm& scm, int do_var, int do_val,
                                        int adjust_var, int query_var);

// ---- backdoor adjustment from a z,x,y count table -------------------------------

struct CountTable {
    // key: (z, x, y) labels
    std::map<std::string, std::map<int, std::map<int, double>>> counts;

    void add(const std::string& z, int x, int y, double count);
    double total() const;
};

// P(Y=y | do(X=x)) = sum_z P(y|x,z) P(z). Throws on zero-count conditionals
// rather than smoothing silently.
double backdoor_adjust(const CountTable& table, int x, int y);
// P(Y=y | X=x), the unadjusted conditional.
double naive_conditional(const CountTable& table, int x, int y);

// CSV with header z,x,y,count.
CountTable read_count_table(const std::string& path);

}  // namespace cwp
