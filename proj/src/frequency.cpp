#include "cwp/frequency.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace cwp {

const char* subband_name(int j) {
    static const char* names[4] = {"LL", "LH", "HL", "HH"};
    return names[j & 3];
}

// ---- Haar analysis/synthesis kernels on a single plane ---------------------

static void haar_analyze_plane(const float* x, int H, int W, float* ll, float* lh, float* hl,
                               float* hh) {
    const int Ho = H / 2, Wo = W / 2;
    for (int i = 0; i < Ho; ++i) {
        const float* r0 = x + static_cast<size_t>(2 * i) * W;
        const float* r1 = r0 + W;
        for (int j = 0; j < Wo; ++j) {
            const float a = r0[2 * j], b = r0[2 * j + 1];
            const float c = r1[2 * j], d = r1[2 * j + 1];
            const size_t o = static_cast<size_t>(i) * Wo + j;
            ll[o] = 0.5f * (a + b + c + d);
            lh[o] = 0.5f * (a + b - c - d);
            hl[o] = 0.5f * (a - b + c - d);
            hh[o] = 0.5f * (a - b - c + d);
        }
    }
}

static void haar_synthesize_plane(const float* ll, const float* lh, const float* hl,
                                  const float* hh, int Ho, int Wo, float* x) {
    const int W = 2 * Wo;
    for (int i = 0; i < Ho; ++i) {
        float* r0 = x + static_cast<size_t>(2 * i) * W;
        float* r1 = r0 + W;
        for (int j = 0; j < Wo; ++j) {
            const size_t o = static_cast<size_t>(i) * Wo + j;
            const float s = ll[o], v = lh[o], h = hl[o], d = hh[o];
            r0[2 * j] = 0.5f * (s + v + h + d);
            r0[2 * j + 1] = 0.5f * (s + v - h - d);
            r1[2 * j] = 0.5f * (s - v + h - d);
            r1[2 * j + 1] = 0.5f * (s - v - h + d);
        }
    }
}

SubbandSet dwt2(Tape* tape, const Tensor& x) {
    if (x.rank() != 4)
        throw ShapeError("dwt2: expected a 4-D tensor, got " + dims_to_string(x.dims()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("dwt2: spatial dims must be even, got " + dims_to_string(x.dims()) +
                         " (pad the input first)");
    const int Ho = H / 2, Wo = W / 2;
    SubbandSet s{Tensor({N, C, Ho, Wo}), Tensor({N, C, Ho, Wo}), Tensor({N, C, Ho, Wo}),
                 Tensor({N, C, Ho, Wo})};
    const size_t hw = static_cast<size_t>(H) * W;
    const size_t ohw = static_cast<size_t>(Ho) * Wo;
    for (int nc = 0; nc < N * C; ++nc)
        haar_analyze_plane(x.data() + static_cast<size_t>(nc) * hw, H, W,
                           s.ll.data() + static_cast<size_t>(nc) * ohw,
                           s.lh.data() + static_cast<size_t>(nc) * ohw,
                           s.hl.data() + static_cast<size_t>(nc) * ohw,
                           s.hh.data() + static_cast<size_t>(nc) * ohw);
    if (tape) {
        auto xd = x.ptr();
        auto lld = s.ll.ptr(), lhd = s.lh.ptr(), hld = s.hl.ptr(), hhd = s.hh.ptr();
        tape->push([=]() {
            const bool any = !lld->grad.empty() || !lhd->grad.empty() || !hld->grad.empty() ||
                             !hhd->grad.empty();
            if (!any) return;
            xd->ensure_grad();
            lld->ensure_grad();
            lhd->ensure_grad();
            hld->ensure_grad();
            hhd->ensure_grad();
            // orthogonal transform: the adjoint is the inverse
            std::vector<float> tmp(hw);
            for (int nc = 0; nc < N * C; ++nc) {
                haar_synthesize_plane(lld->grad.data() + static_cast<size_t>(nc) * ohw,
                                      lhd->grad.data() + static_cast<size_t>(nc) * ohw,
                                      hld->grad.data() + static_cast<size_t>(nc) * ohw,
                                      hhd->grad.data() + static_cast<size_t>(nc) * ohw, Ho, Wo,
                                      tmp.data());
                float* gx = xd->grad.data() + static_cast<size_t>(nc) * hw;
                for (size_t i = 0; i < hw; ++i) gx[i] += tmp[i];
            }
        });
    }
    return s;
}

Tensor idwt2(Tape* tape, const SubbandSet& s) {
    const Tensor& ll = s.ll;
    if (ll.rank() != 4)
        throw ShapeError("idwt2: expected 4-D subbands, got " + dims_to_string(ll.dims()));
    for (int j = 1; j < 4; ++j)
        if (s.band(j).dims() != ll.dims())
            throw ShapeError(std::string("idwt2: subband ") + subband_name(j) + " dims " +
                             dims_to_string(s.band(j).dims()) + " do not match LL dims " +
                             dims_to_string(ll.dims()));
    const int N = ll.dim(0), C = ll.dim(1), Ho = ll.dim(2), Wo = ll.dim(3);
    Tensor out({N, C, 2 * Ho, 2 * Wo});
    const size_t ohw = static_cast<size_t>(Ho) * Wo;
    const size_t hw = ohw * 4;
    for (int nc = 0; nc < N * C; ++nc)
        haar_synthesize_plane(s.ll.data() + static_cast<size_t>(nc) * ohw,
                              s.lh.data() + static_cast<size_t>(nc) * ohw,
                              s.hl.data() + static_cast<size_t>(nc) * ohw,
                              s.hh.data() + static_cast<size_t>(nc) * ohw, Ho, Wo,
                              out.data() + static_cast<size_t>(nc) * hw);
    if (tape) {
        auto lld = s.ll.ptr(), lhd = s.lh.ptr(), hld = s.hl.ptr(), hhd = s.hh.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            lld->ensure_grad();
            lhd->ensure_grad();
            hld->ensure_grad();
            hhd->ensure_grad();
            std::vector<float> gll(ohw), glh(ohw), ghl(ohw), ghh(ohw);
            for (int nc = 0; nc < N * C; ++nc) {
                haar_analyze_plane(od->grad.data() + static_cast<size_t>(nc) * hw, 2 * Ho, 2 * Wo,
                                   gll.data(), glh.data(), ghl.data(), ghh.data());
                float* a = lld->grad.data() + static_cast<size_t>(nc) * ohw;
                float* b = lhd->grad.data() + static_cast<size_t>(nc) * ohw;
                float* c = hld->grad.data() + static_cast<size_t>(nc) * ohw;
                float* d = hhd->grad.data() + static_cast<size_t>(nc) * ohw;
                for (size_t i = 0; i < ohw; ++i) {
                    a[i] += gll[i];
                    b[i] += glh[i];
                    c[i] += ghl[i];
                    d[i] += ghh[i];
                }
            }
        });
    }
    return out;
}

// ---- DFT --------------------------------------------------------------------

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT; sign = -1 forward, +1 adjoint.
void fft_pow2(std::complex<double>* a, int n, int sign) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / len;
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void dft_naive(const std::complex<double>* in, std::complex<double>* out, int n, int sign) {
    for (int u = 0; u < n; ++u) {
        std::complex<double> acc(0.0, 0.0);
        for (int k = 0; k < n; ++k) {
            const double ang = sign * 2.0 * M_PI * u * k / n;
            acc += in[k] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[u] = acc;
    }
}

void transform_1d(std::complex<double>* a, int n, int sign, std::vector<std::complex<double>>& scratch) {
    if (is_pow2(n)) {
        fft_pow2(a, n, sign);
    } else {
        scratch.resize(static_cast<size_t>(n));
        dft_naive(a, scratch.data(), n, sign);
        std::copy(scratch.begin(), scratch.end(), a);
    }
}

// 2-D transform of one H x W plane held in row-major complex buffer.
void transform_plane(std::complex<double>* buf, int H, int W, int sign) {
    std::vector<std::complex<double>> scratch;
    for (int h = 0; h < H; ++h) transform_1d(buf + static_cast<size_t>(h) * W, W, sign, scratch);
    std::vector<std::complex<double>> col(static_cast<size_t>(H));
    for (int w = 0; w < W; ++w) {
        for (int h = 0; h < H; ++h) col[static_cast<size_t>(h)] = buf[static_cast<size_t>(h) * W + w];
        transform_1d(col.data(), H, sign, scratch);
        for (int h = 0; h < H; ++h) buf[static_cast<size_t>(h) * W + w] = col[static_cast<size_t>(h)];
    }
}

}  // namespace

Spectrum fft2(Tape* tape, const Tensor& x) {
    if (x.rank() != 4)
        throw ShapeError("fft2: expected a 4-D tensor, got " + dims_to_string(x.dims()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Spectrum sp{Tensor(x.dims()), Tensor(x.dims())};
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<std::complex<double>> buf(hw);
    for (int nc = 0; nc < N * C; ++nc) {
        const float* plane = x.data() + static_cast<size_t>(nc) * hw;
        for (size_t i = 0; i < hw; ++i) buf[i] = std::complex<double>(plane[i], 0.0);
        transform_plane(buf.data(), H, W, -1);
        float* pre = sp.real.data() + static_cast<size_t>(nc) * hw;
        float* pim = sp.imag.data() + static_cast<size_t>(nc) * hw;
        for (size_t i = 0; i < hw; ++i) {
            pre[i] = static_cast<float>(buf[i].real());
            pim[i] = static_cast<float>(buf[i].imag());
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto red = sp.real.ptr(), imd = sp.imag.ptr();
        tape->push([=]() {
            if (red->grad.empty() && imd->grad.empty()) return;
            xd->ensure_grad();
            red->ensure_grad();
            imd->ensure_grad();
            std::vector<std::complex<double>> gbuf(hw);
            for (int nc = 0; nc < N * C; ++nc) {
                const float* gre = red->grad.data() + static_cast<size_t>(nc) * hw;
                const float* gim = imd->grad.data() + static_cast<size_t>(nc) * hw;
                for (size_t i = 0; i < hw; ++i) gbuf[i] = std::complex<double>(gre[i], gim[i]);
                // adjoint of the real-to-complex DFT: conjugate-phase transform,
                // real part only
                transform_plane(gbuf.data(), H, W, +1);
                float* gx = xd->grad.data() + static_cast<size_t>(nc) * hw;
                for (size_t i = 0; i < hw; ++i) gx[i] += static_cast<float>(gbuf[i].real());
            }
        });
    }
    return sp;
}

}  // namespace cwp
