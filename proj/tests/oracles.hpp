#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is deliberately naive (nested loops, double precision)
// and shares no code with the library paths it checks.

#include <complex>
#include <vector>

#include "cwp/tensor.hpp"

namespace cwp::oracle {

// Plain nested-loop cross-correlation, NCHW / OIKhKw.
Tensor conv2d_naive(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                    int pad);

// exp/sum softmax of a flat vector.
std::vector<double> softmax_naive(const std::vector<double>& x);

// Quadratic 2-D DFT of one plane (row-major h x w).
void dft2_naive(const std::vector<double>& plane, int h, int w, std::vector<double>& re,
                std::vector<double>& im);

// Direct formula PSNR in double precision.
double psnr_naive(const Tensor& a, const Tensor& b, double peak);

// Windowed-statistics SSIM on a precomputed luminance plane pair.
double ssim_naive_luma(const std::vector<double>& x, const std::vector<double>& y, int h, int w);

// Single-parameter Adam step at the library's storage precision (float32
// moments and weight, double bias correction).
struct AdamScalarOracle {
    float m = 0.0f, v = 0.0f;
    long t = 0;
    float step(float w, float g, float lr, float b1 = 0.9f, float b2 = 0.999f,
               float eps = 1e-8f);
};

// Block means of an h x w plane onto an oh x ow grid (floor-partitioned bins).
std::vector<double> block_means(const std::vector<double>& plane, int h, int w, int oh, int ow);

// Exhaustive nearest-centroid lookup.
int nearest_centroid(const std::vector<float>& point, const std::vector<float>& centroids, int k,
                     int dim);

}  // namespace cwp::oracle
