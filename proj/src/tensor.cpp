#include "cwp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace cwp {

size_t numel(const std::vector<int>& dims) {
    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    return n;
}

std::string dims_to_string(const std::vector<int>& dims) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << "]";
    return os.str();
}

static void check_dims_positive(const std::vector<int>& dims) {
    if (dims.empty()) throw ShapeError("tensor rank must be >= 1");
    for (size_t i = 0; i < dims.size(); ++i)
        if (dims[i] <= 0)
            throw ShapeError("tensor axis " + std::to_string(i) + " must be positive, got " +
                             std::to_string(dims[i]));
}

Tensor::Tensor(std::vector<int> dims, float fill) : d_(std::make_shared<TensorData>()) {
    check_dims_positive(dims);
    d_->dims = std::move(dims);
    d_->values.assign(numel(d_->dims), fill);
}

Tensor::Tensor(std::vector<int> dims, std::vector<float> values)
    : d_(std::make_shared<TensorData>()) {
    check_dims_positive(dims);
    if (values.size() != numel(dims))
        throw ShapeError("tensor " + dims_to_string(dims) + " expects " +
                         std::to_string(numel(dims)) + " values, got " +
                         std::to_string(values.size()));
    d_->dims = std::move(dims);
    d_->values = std::move(values);
}

Tensor Tensor::randn(std::vector<int> dims, Rng& rng, float stddev) {
    Tensor t(std::move(dims));
    for (float& v : t.d_->values) v = rng.normal(0.0f, stddev);
    return t;
}

float& Tensor::at(int n, int c, int h, int w) {
    const auto& dm = d_->dims;
    if (dm.size() != 4) throw ShapeError("at(n,c,h,w) requires a 4-D tensor, got " + dims_to_string(dm));
    return d_->values[((static_cast<size_t>(n) * dm[1] + c) * dm[2] + h) * dm[3] + w];
}

float Tensor::at(int n, int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(n, c, h, w);
}

float Tensor::item() const {
    if (size() != 1) throw ShapeError("item() requires a 1-element tensor, got " + dims_to_string(dims()));
    return d_->values[0];
}

std::vector<float> Tensor::grad() const {
    if (d_->grad.empty()) return std::vector<float>(d_->values.size(), 0.0f);
    return d_->grad;
}

bool Tensor::all_finite() const {
    for (float v : d_->values)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar tensor");
    auto data = loss.ptr();
    data->ensure_grad();
    data->grad[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

// ---- small GEMM kernels (row-major) ---------------------------------------

// C[M x N] += A[M x K] * B[K x N]
static void gemm_acc(int M, int N, int K, const float* A, const float* B, float* C) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<size_t>(i) * K;
        float* c = C + static_cast<size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const float av = a[k];
            const float* b = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M x N] += A[M x P] * B[N x P]^T
static void gemm_abT(int M, int N, int P, const float* A, const float* B, float* C) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<size_t>(i) * P;
        float* c = C + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const float* b = B + static_cast<size_t>(j) * P;
            float acc = 0.0f;
            for (int p = 0; p < P; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C[M x N] += A[O x M]^T * B[O x N]
static void gemm_aTb(int M, int N, int O, const float* A, const float* B, float* C) {
    for (int o = 0; o < O; ++o) {
        const float* a = A + static_cast<size_t>(o) * M;
        const float* b = B + static_cast<size_t>(o) * N;
        for (int m = 0; m < M; ++m) {
            const float av = a[m];
            float* c = C + static_cast<size_t>(m) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// ---- conv2d ----------------------------------------------------------------

static void im2col(const float* x, int Ci, int H, int W, int Kh, int Kw, int stride, int pad,
                   int Ho, int Wo, float* cols) {
    const int P = Ho * Wo;
    for (int ci = 0; ci < Ci; ++ci) {
        const float* plane = x + static_cast<size_t>(ci) * H * W;
        for (int kh = 0; kh < Kh; ++kh) {
            for (int kw = 0; kw < Kw; ++kw) {
                float* row = cols + (static_cast<size_t>(ci) * Kh * Kw + kh * Kw + kw) * P;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int ih = ho * stride - pad + kh;
                    float* dst = row + static_cast<size_t>(ho) * Wo;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst, dst + Wo, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<size_t>(ih) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int iw = wo * stride - pad + kw;
                        dst[wo] = (iw >= 0 && iw < W) ? src[iw] : 0.0f;
                    }
                }
            }
        }
    }
}

static void col2im_acc(const float* cols, int Ci, int H, int W, int Kh, int Kw, int stride,
                       int pad, int Ho, int Wo, float* dx) {
    const int P = Ho * Wo;
    for (int ci = 0; ci < Ci; ++ci) {
        float* plane = dx + static_cast<size_t>(ci) * H * W;
        for (int kh = 0; kh < Kh; ++kh) {
            for (int kw = 0; kw < Kw; ++kw) {
                const float* row = cols + (static_cast<size_t>(ci) * Kh * Kw + kh * Kw + kw) * P;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int ih = ho * stride - pad + kh;
                    if (ih < 0 || ih >= H) continue;
                    float* dst = plane + static_cast<size_t>(ih) * W;
                    const float* src = row + static_cast<size_t>(ho) * Wo;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int iw = wo * stride - pad + kw;
                        if (iw >= 0 && iw < W) dst[iw] += src[wo];
                    }
                }
            }
        }
    }
}

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
    if (input.rank() != 4)
        throw ShapeError("conv2d: input must be N x C x H x W, got " + dims_to_string(input.dims()));
    if (weight.rank() != 4)
        throw ShapeError("conv2d: weight must be O x I x Kh x Kw, got " + dims_to_string(weight.dims()));
    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int O = weight.dim(0), I = weight.dim(1), Kh = weight.dim(2), Kw = weight.dim(3);
    if (Ci != I)
        throw ShapeError("conv2d: input channel axis (C=" + std::to_string(Ci) +
                         ") does not match weight input axis (I=" + std::to_string(I) + ")");
    if (bias.rank() != 1 || bias.dim(0) != O)
        throw ShapeError("conv2d: bias must have dims [O=" + std::to_string(O) + "], got " +
                         dims_to_string(bias.dims()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    const int Ho = (H + 2 * pad - Kh) / stride + 1;
    const int Wo = (W + 2 * pad - Kw) / stride + 1;
    if (H + 2 * pad < Kh)
        throw ShapeError("conv2d: padded height " + std::to_string(H + 2 * pad) +
                         " smaller than kernel height " + std::to_string(Kh));
    if (W + 2 * pad < Kw)
        throw ShapeError("conv2d: padded width " + std::to_string(W + 2 * pad) +
                         " smaller than kernel width " + std::to_string(Kw));

    const bool pointwise = (Kh == 1 && Kw == 1 && stride == 1 && pad == 0);
    const int K = Ci * Kh * Kw;
    const int P = Ho * Wo;

    Tensor out({N, O, Ho, Wo});
    std::vector<float> cols;
    if (!pointwise) cols.resize(static_cast<size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        const float* xptr = input.data() + static_cast<size_t>(n) * Ci * H * W;
        const float* cptr = xptr;
        if (!pointwise) {
            im2col(xptr, Ci, H, W, Kh, Kw, stride, pad, Ho, Wo, cols.data());
            cptr = cols.data();
        }
        float* optr = out.data() + static_cast<size_t>(n) * O * P;
        for (int o = 0; o < O; ++o)
            std::fill(optr + static_cast<size_t>(o) * P, optr + static_cast<size_t>(o + 1) * P,
                      bias.data()[o]);
        gemm_acc(O, P, K, weight.data(), cptr, optr);
    }

    if (tape) {
        auto xd = input.ptr();
        auto wd = weight.ptr();
        auto bd = bias.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            wd->ensure_grad();
            bd->ensure_grad();
            std::vector<float> cols2, dcols;
            if (!pointwise) {
                cols2.resize(static_cast<size_t>(K) * P);
                dcols.resize(static_cast<size_t>(K) * P);
            }
            for (int n = 0; n < N; ++n) {
                const float* go = od->grad.data() + static_cast<size_t>(n) * O * P;
                const float* xptr = xd->values.data() + static_cast<size_t>(n) * Ci * H * W;
                // db
                for (int o = 0; o < O; ++o) {
                    const float* g = go + static_cast<size_t>(o) * P;
                    float acc = 0.0f;
                    for (int p = 0; p < P; ++p) acc += g[p];
                    bd->grad[o] += acc;
                }
                // dW = go . cols^T
                const float* cptr = xptr;
                if (!pointwise) {
                    im2col(xptr, Ci, H, W, Kh, Kw, stride, pad, Ho, Wo, cols2.data());
                    cptr = cols2.data();
                }
                gemm_abT(O, K, P, go, cptr, wd->grad.data());
                // dx = W^T . go, scattered back through im2col
                if (pointwise) {
                    gemm_aTb(K, P, O, wd->values.data(), go,
                             xd->grad.data() + static_cast<size_t>(n) * Ci * H * W);
                } else {
                    std::fill(dcols.begin(), dcols.end(), 0.0f);
                    gemm_aTb(K, P, O, wd->values.data(), go, dcols.data());
                    col2im_acc(dcols.data(), Ci, H, W, Kh, Kw, stride, pad, Ho, Wo,
                               xd->grad.data() + static_cast<size_t>(n) * Ci * H * W);
                }
            }
        });
    }
    return out;
}

// ---- broadcasting elementwise ops ------------------------------------------

namespace {

struct Broadcast {
    std::vector<int> out_dims;
    std::vector<size_t> stride_a, stride_b;  // 0 on broadcast axes
    bool same = false;                       // identical dims fast path
};

Broadcast make_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rank() != b.rank())
        throw ShapeError(std::string(op) + ": rank mismatch " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    Broadcast bc;
    const int r = a.rank();
    bc.out_dims.resize(r);
    bool same = true;
    for (int i = 0; i < r; ++i) {
        const int da = a.dim(i), db = b.dim(i);
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": axis " + std::to_string(i) +
                             " not broadcastable: " + dims_to_string(a.dims()) + " vs " +
                             dims_to_string(b.dims()));
        bc.out_dims[i] = std::max(da, db);
        same &= (da == db);
    }
    bc.same = same;
    bc.stride_a.assign(r, 0);
    bc.stride_b.assign(r, 0);
    size_t sa = 1, sb = 1;
    for (int i = r - 1; i >= 0; --i) {
        bc.stride_a[i] = (a.dim(i) == 1) ? 0 : sa;
        bc.stride_b[i] = (b.dim(i) == 1) ? 0 : sb;
        sa *= static_cast<size_t>(a.dim(i));
        sb *= static_cast<size_t>(b.dim(i));
    }
    return bc;
}

// Calls fn(out_index, a_index, b_index) over the full broadcast output.
template <typename F>
void broadcast_iterate(const Broadcast& bc, F&& fn) {
    const size_t n = numel(bc.out_dims);
    const int r = static_cast<int>(bc.out_dims.size());
    std::vector<int> coord(r, 0);
    size_t ia = 0, ib = 0;
    for (size_t i = 0; i < n; ++i) {
        fn(i, ia, ib);
        for (int ax = r - 1; ax >= 0; --ax) {
            ++coord[ax];
            ia += bc.stride_a[ax];
            ib += bc.stride_b[ax];
            if (coord[ax] < bc.out_dims[ax]) break;
            ia -= bc.stride_a[ax] * static_cast<size_t>(bc.out_dims[ax]);
            ib -= bc.stride_b[ax] * static_cast<size_t>(bc.out_dims[ax]);
            coord[ax] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(Tape* tape, const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    Broadcast bc = make_broadcast(a, b, name);
    Tensor out(bc.out_dims);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    if (bc.same) {
        const size_t n = out.size();
        switch (op) {
            case BinOp::Add:
                for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
                break;
            case BinOp::Sub:
                for (size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
                break;
            case BinOp::Mul:
                for (size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
                break;
        }
    } else {
        broadcast_iterate(bc, [&](size_t i, size_t ia, size_t ib) {
            switch (op) {
                case BinOp::Add: po[i] = pa[ia] + pb[ib]; break;
                case BinOp::Sub: po[i] = pa[ia] - pb[ib]; break;
                case BinOp::Mul: po[i] = pa[ia] * pb[ib]; break;
            }
        });
    }
    if (tape) {
        auto ad = a.ptr();
        auto bd = b.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            ad->ensure_grad();
            bd->ensure_grad();
            const float* g = od->grad.data();
            float* ga = ad->grad.data();
            float* gb = bd->grad.data();
            const float* va = ad->values.data();
            const float* vb = bd->values.data();
            if (bc.same) {
                const size_t n = od->values.size();
                switch (op) {
                    case BinOp::Add:
                        for (size_t i = 0; i < n; ++i) {
                            ga[i] += g[i];
                            gb[i] += g[i];
                        }
                        break;
                    case BinOp::Sub:
                        for (size_t i = 0; i < n; ++i) {
                            ga[i] += g[i];
                            gb[i] -= g[i];
                        }
                        break;
                    case BinOp::Mul:
                        for (size_t i = 0; i < n; ++i) {
                            ga[i] += g[i] * vb[i];
                            gb[i] += g[i] * va[i];
                        }
                        break;
                }
            } else {
                broadcast_iterate(bc, [&](size_t i, size_t ia, size_t ib) {
                    switch (op) {
                        case BinOp::Add:
                            ga[ia] += g[i];
                            gb[ib] += g[i];
                            break;
                        case BinOp::Sub:
                            ga[ia] += g[i];
                            gb[ib] -= g[i];
                            break;
                        case BinOp::Mul:
                            ga[ia] += g[i] * vb[ib];
                            gb[ib] += g[i] * va[ia];
                            break;
                    }
                });
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return binary_op(tape, a, b, BinOp::Add, "add"); }
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return binary_op(tape, a, b, BinOp::Sub, "sub"); }
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) { return binary_op(tape, a, b, BinOp::Mul, "mul"); }

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor out(x.dims());
    const float* px = x.data();
    float* po = out.data();
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0f ? px[i] : 0.0f;
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            const float* v = xd->values.data();
            float* gx = xd->grad.data();
            for (size_t i = 0; i < od->values.size(); ++i)
                if (v[i] > 0.0f) gx[i] += g[i];  // subgradient 0 at the kink
        });
    }
    return out;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    Tensor out(x.dims());
    const float* px = x.data();
    float* po = out.data();
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) po[i] = 1.0f / (1.0f + std::exp(-px[i]));
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            const float* y = od->values.data();
            float* gx = xd->grad.data();
            for (size_t i = 0; i < od->values.size(); ++i) gx[i] += g[i] * y[i] * (1.0f - y[i]);
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& x, float s) {
    Tensor out(x.dims());
    const float* px = x.data();
    float* po = out.data();
    for (size_t i = 0; i < x.size(); ++i) po[i] = s * px[i];
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            for (size_t i = 0; i < od->values.size(); ++i) gx[i] += s * g[i];
        });
    }
    return out;
}

Tensor softmax(Tape* tape, const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         dims_to_string(x.dims()));
    const int an = x.dim(axis);
    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(x.dim(i));
    for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<size_t>(x.dim(i));

    Tensor out(x.dims());
    const float* px = x.data();
    float* po = out.data();
    for (size_t ot = 0; ot < outer; ++ot) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = ot * static_cast<size_t>(an) * inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (int k = 0; k < an; ++k) mx = std::max(mx, px[base + k * inner]);
            double total = 0.0;
            for (int k = 0; k < an; ++k) {
                const double e = std::exp(static_cast<double>(px[base + k * inner]) - mx);
                po[base + k * inner] = static_cast<float>(e);
                total += e;
            }
            const double invt = 1.0 / total;
            for (int k = 0; k < an; ++k)
                po[base + k * inner] = static_cast<float>(po[base + k * inner] * invt);
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            const float* y = od->values.data();
            float* gx = xd->grad.data();
            for (size_t ot = 0; ot < outer; ++ot) {
                for (size_t in = 0; in < inner; ++in) {
                    const size_t base = ot * static_cast<size_t>(an) * inner + in;
                    double dot = 0.0;
                    for (int k = 0; k < an; ++k)
                        dot += static_cast<double>(g[base + k * inner]) * y[base + k * inner];
                    for (int k = 0; k < an; ++k) {
                        const size_t idx = base + k * inner;
                        gx[idx] += y[idx] * (g[idx] - static_cast<float>(dot));
                    }
                }
            }
        });
    }
    return out;
}

static void require_4d(const Tensor& x, const char* op) {
    if (x.rank() != 4)
        throw ShapeError(std::string(op) + ": expected a 4-D tensor, got " + dims_to_string(x.dims()));
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
    require_4d(x, "global_avg_pool");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({N, C, 1, 1});
    const float* px = x.data();
    float* po = out.data();
    const size_t hw = static_cast<size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* plane = px + (static_cast<size_t>(n) * C + c) * hw;
            double acc = 0.0;
            for (size_t i = 0; i < hw; ++i) acc += plane[i];
            po[static_cast<size_t>(n) * C + c] = static_cast<float>(acc / static_cast<double>(hw));
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float inv = 1.0f / static_cast<float>(hw);
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const float gv = g[static_cast<size_t>(n) * C + c] * inv;
                    float* plane = gx + (static_cast<size_t>(n) * C + c) * hw;
                    for (size_t i = 0; i < hw; ++i) plane[i] += gv;
                }
        });
    }
    return out;
}

Tensor avg_pool2(Tape* tape, const Tensor& x) {
    require_4d(x, "avg_pool2");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("avg_pool2: spatial dims must be even, got " + dims_to_string(x.dims()));
    const int Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    const float* px = x.data();
    float* po = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const float* plane = px + static_cast<size_t>(nc) * H * W;
        float* oplane = po + static_cast<size_t>(nc) * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
                const float* p = plane + static_cast<size_t>(2 * i) * W + 2 * j;
                oplane[static_cast<size_t>(i) * Wo + j] = 0.25f * (p[0] + p[1] + p[W] + p[W + 1]);
            }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            for (int nc = 0; nc < N * C; ++nc) {
                const float* gplane = g + static_cast<size_t>(nc) * Ho * Wo;
                float* xplane = gx + static_cast<size_t>(nc) * H * W;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const float gv = 0.25f * gplane[static_cast<size_t>(i) * Wo + j];
                        float* p = xplane + static_cast<size_t>(2 * i) * W + 2 * j;
                        p[0] += gv;
                        p[1] += gv;
                        p[W] += gv;
                        p[W + 1] += gv;
                    }
            }
        });
    }
    return out;
}

Tensor adaptive_avg_pool(Tape* tape, const Tensor& x, int out_h, int out_w) {
    require_4d(x, "adaptive_avg_pool");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < out_h || W < out_w)
        throw ShapeError("adaptive_avg_pool: input " + dims_to_string(x.dims()) +
                         " smaller than pool grid " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    Tensor out({N, C, out_h, out_w});
    const float* px = x.data();
    float* po = out.data();
    auto bin = [](int i, int n, int m) { return (i * n) / m; };
    for (int nc = 0; nc < N * C; ++nc) {
        const float* plane = px + static_cast<size_t>(nc) * H * W;
        float* oplane = po + static_cast<size_t>(nc) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const int h0 = bin(i, H, out_h), h1 = bin(i + 1, H, out_h);
            for (int j = 0; j < out_w; ++j) {
                const int w0 = bin(j, W, out_w), w1 = bin(j + 1, W, out_w);
                double acc = 0.0;
                for (int h = h0; h < h1; ++h)
                    for (int w = w0; w < w1; ++w) acc += plane[static_cast<size_t>(h) * W + w];
                oplane[static_cast<size_t>(i) * out_w + j] =
                    static_cast<float>(acc / ((h1 - h0) * (w1 - w0)));
            }
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            auto bin2 = [](int i, int n, int m) { return (i * n) / m; };
            for (int nc = 0; nc < N * C; ++nc) {
                const float* gplane = g + static_cast<size_t>(nc) * out_h * out_w;
                float* xplane = gx + static_cast<size_t>(nc) * H * W;
                for (int i = 0; i < out_h; ++i) {
                    const int h0 = bin2(i, H, out_h), h1 = bin2(i + 1, H, out_h);
                    for (int j = 0; j < out_w; ++j) {
                        const int w0 = bin2(j, W, out_w), w1 = bin2(j + 1, W, out_w);
                        const float gv = gplane[static_cast<size_t>(i) * out_w + j] /
                                         static_cast<float>((h1 - h0) * (w1 - w0));
                        for (int h = h0; h < h1; ++h)
                            for (int w = w0; w < w1; ++w) xplane[static_cast<size_t>(h) * W + w] += gv;
                    }
                }
            }
        });
    }
    return out;
}

Tensor channel_mean(Tape* tape, const Tensor& x) {
    require_4d(x, "channel_mean");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({N, 1, H, W});
    const size_t hw = static_cast<size_t>(H) * W;
    const float* px = x.data();
    float* po = out.data();
    const float inv = 1.0f / static_cast<float>(C);
    for (int n = 0; n < N; ++n) {
        float* oplane = po + static_cast<size_t>(n) * hw;
        std::fill(oplane, oplane + hw, 0.0f);
        for (int c = 0; c < C; ++c) {
            const float* plane = px + (static_cast<size_t>(n) * C + c) * hw;
            for (size_t i = 0; i < hw; ++i) oplane[i] += plane[i];
        }
        for (size_t i = 0; i < hw; ++i) oplane[i] *= inv;
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            const float invc = 1.0f / static_cast<float>(C);
            for (int n = 0; n < N; ++n) {
                const float* gplane = g + static_cast<size_t>(n) * hw;
                for (int c = 0; c < C; ++c) {
                    float* xplane = gx + (static_cast<size_t>(n) * C + c) * hw;
                    for (size_t i = 0; i < hw; ++i) xplane[i] += gplane[i] * invc;
                }
            }
        });
    }
    return out;
}

Tensor channel_max(Tape* tape, const Tensor& x) {
    require_4d(x, "channel_max");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({N, 1, H, W});
    const size_t hw = static_cast<size_t>(H) * W;
    const float* px = x.data();
    float* po = out.data();
    // argmax kept for the backward pass; first maximum wins on ties
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(N) * hw, 0);
    for (int n = 0; n < N; ++n) {
        float* oplane = po + static_cast<size_t>(n) * hw;
        int* aplane = arg->data() + static_cast<size_t>(n) * hw;
        for (size_t i = 0; i < hw; ++i) {
            float best = px[(static_cast<size_t>(n) * C) * hw + i];
            int bc = 0;
            for (int c = 1; c < C; ++c) {
                const float v = px[(static_cast<size_t>(n) * C + c) * hw + i];
                if (v > best) {
                    best = v;
                    bc = c;
                }
            }
            oplane[i] = best;
            aplane[i] = bc;
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            for (int n = 0; n < N; ++n) {
                const float* gplane = g + static_cast<size_t>(n) * hw;
                const int* aplane = arg->data() + static_cast<size_t>(n) * hw;
                for (size_t i = 0; i < hw; ++i)
                    gx[(static_cast<size_t>(n) * C + aplane[i]) * hw + i] += gplane[i];
            }
        });
    }
    return out;
}

Tensor concat_channels(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    require_4d(parts[0], "concat_channels");
    const int N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
    int Ct = 0;
    for (const auto& p : parts) {
        require_4d(p, "concat_channels");
        if (p.dim(0) != N || p.dim(2) != H || p.dim(3) != W)
            throw ShapeError("concat_channels: mismatched dims " + dims_to_string(p.dims()) +
                             " vs " + dims_to_string(parts[0].dims()));
        Ct += p.dim(1);
    }
    Tensor out({N, Ct, H, W});
    const size_t hw = static_cast<size_t>(H) * W;
    float* po = out.data();
    for (int n = 0; n < N; ++n) {
        size_t coff = 0;
        for (const auto& p : parts) {
            const int C = p.dim(1);
            std::memcpy(po + (static_cast<size_t>(n) * Ct + coff) * hw,
                        p.data() + static_cast<size_t>(n) * C * hw,
                        static_cast<size_t>(C) * hw * sizeof(float));
            coff += static_cast<size_t>(C);
        }
    }
    if (tape) {
        std::vector<std::shared_ptr<TensorData>> pds;
        pds.reserve(parts.size());
        for (const auto& p : parts) pds.push_back(p.ptr());
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            const float* g = od->grad.data();
            for (int n = 0; n < N; ++n) {
                size_t coff = 0;
                for (const auto& pd : pds) {
                    pd->ensure_grad();
                    const int C = pd->dims[1];
                    float* gp = pd->grad.data() + static_cast<size_t>(n) * C * hw;
                    const float* gsrc = g + (static_cast<size_t>(n) * Ct + coff) * hw;
                    for (size_t i = 0; i < static_cast<size_t>(C) * hw; ++i) gp[i] += gsrc[i];
                    coff += static_cast<size_t>(C);
                }
            }
        });
    }
    return out;
}

std::vector<Tensor> split_channels(Tape* tape, const Tensor& x, int groups) {
    require_4d(x, "split_channels");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (groups <= 0 || C % groups != 0)
        throw ShapeError("split_channels: channel count " + std::to_string(C) +
                         " not divisible into " + std::to_string(groups) + " groups");
    const int Cg = C / groups;
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(groups));
    for (int g = 0; g < groups; ++g) {
        Tensor o({N, Cg, H, W});
        for (int n = 0; n < N; ++n)
            std::memcpy(o.data() + static_cast<size_t>(n) * Cg * hw,
                        x.data() + (static_cast<size_t>(n) * C + static_cast<size_t>(g) * Cg) * hw,
                        static_cast<size_t>(Cg) * hw * sizeof(float));
        outs.push_back(o);
    }
    if (tape) {
        auto xd = x.ptr();
        std::vector<std::shared_ptr<TensorData>> ods;
        for (const auto& o : outs) ods.push_back(o.ptr());
        tape->push([=]() {
            bool any = false;
            for (const auto& od : ods) any |= !od->grad.empty();
            if (!any) return;
            xd->ensure_grad();
            for (int g = 0; g < groups; ++g) {
                const auto& od = ods[static_cast<size_t>(g)];
                if (od->grad.empty()) continue;
                for (int n = 0; n < N; ++n) {
                    float* gx = xd->grad.data() +
                                (static_cast<size_t>(n) * C + static_cast<size_t>(g) * Cg) * hw;
                    const float* go = od->grad.data() + static_cast<size_t>(n) * Cg * hw;
                    for (size_t i = 0; i < static_cast<size_t>(Cg) * hw; ++i) gx[i] += go[i];
                }
            }
        });
    }
    return outs;
}

Tensor bilinear_resize(Tape* tape, const Tensor& x, int out_h, int out_w) {
    require_4d(x, "bilinear_resize");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (out_h <= 0 || out_w <= 0) throw ShapeError("bilinear_resize: output dims must be positive");
    Tensor out({N, C, out_h, out_w});
    const float sy = static_cast<float>(H) / static_cast<float>(out_h);
    const float sx = static_cast<float>(W) / static_cast<float>(out_w);

    struct Tap {
        int i0, i1;
        float w1;  // weight of i1; i0 gets 1-w1
    };
    auto make_taps = [](int n_in, int n_out, float s) {
        std::vector<Tap> taps(static_cast<size_t>(n_out));
        for (int o = 0; o < n_out; ++o) {
            float src = (static_cast<float>(o) + 0.5f) * s - 0.5f;
            src = std::max(0.0f, std::min(src, static_cast<float>(n_in - 1)));
            const int i0 = static_cast<int>(src);
            const int i1 = std::min(i0 + 1, n_in - 1);
            taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<float>(i0)};
        }
        return taps;
    };
    auto ytaps = std::make_shared<std::vector<Tap>>(make_taps(H, out_h, sy));
    auto xtaps = std::make_shared<std::vector<Tap>>(make_taps(W, out_w, sx));

    const float* px = x.data();
    float* po = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const float* plane = px + static_cast<size_t>(nc) * H * W;
        float* oplane = po + static_cast<size_t>(nc) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const Tap& ty = (*ytaps)[static_cast<size_t>(i)];
            for (int j = 0; j < out_w; ++j) {
                const Tap& tx = (*xtaps)[static_cast<size_t>(j)];
                const float v00 = plane[static_cast<size_t>(ty.i0) * W + tx.i0];
                const float v01 = plane[static_cast<size_t>(ty.i0) * W + tx.i1];
                const float v10 = plane[static_cast<size_t>(ty.i1) * W + tx.i0];
                const float v11 = plane[static_cast<size_t>(ty.i1) * W + tx.i1];
                const float top = v00 + (v01 - v00) * tx.w1;
                const float bot = v10 + (v11 - v10) * tx.w1;
                oplane[static_cast<size_t>(i) * out_w + j] = top + (bot - top) * ty.w1;
            }
        }
    }
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float* g = od->grad.data();
            float* gx = xd->grad.data();
            for (int nc = 0; nc < N * C; ++nc) {
                float* xplane = gx + static_cast<size_t>(nc) * H * W;
                const float* gplane = g + static_cast<size_t>(nc) * out_h * out_w;
                for (int i = 0; i < out_h; ++i) {
                    const Tap& ty = (*ytaps)[static_cast<size_t>(i)];
                    for (int j = 0; j < out_w; ++j) {
                        const Tap& tx = (*xtaps)[static_cast<size_t>(j)];
                        const float gv = gplane[static_cast<size_t>(i) * out_w + j];
                        const float wy1 = ty.w1, wy0 = 1.0f - ty.w1;
                        const float wx1 = tx.w1, wx0 = 1.0f - tx.w1;
                        xplane[static_cast<size_t>(ty.i0) * W + tx.i0] += gv * wy0 * wx0;
                        xplane[static_cast<size_t>(ty.i0) * W + tx.i1] += gv * wy0 * wx1;
                        xplane[static_cast<size_t>(ty.i1) * W + tx.i0] += gv * wy1 * wx0;
                        xplane[static_cast<size_t>(ty.i1) * W + tx.i1] += gv * wy1 * wx1;
                    }
                }
            }
        });
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    const float* px = x.data();
    for (size_t i = 0; i < x.size(); ++i) acc += px[i];
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    if (tape) {
        auto xd = x.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            xd->ensure_grad();
            const float g = od->grad[0];
            for (float& v : xd->grad) v += g;
        });
    }
    return out;
}

Tensor l1_mean(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims())
        throw ShapeError("l1_mean: dims mismatch " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    const size_t n = a.size();
    const float* pa = a.data();
    const float* pb = b.data();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    if (tape) {
        auto ad = a.ptr();
        auto bd = b.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            ad->ensure_grad();
            bd->ensure_grad();
            const float g = od->grad[0] / static_cast<float>(n);
            const float* va = ad->values.data();
            const float* vb = bd->values.data();
            for (size_t i = 0; i < n; ++i) {
                const float d = va[i] - vb[i];
                const float s = (d > 0.0f) ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
                ad->grad[i] += g * s;
                bd->grad[i] -= g * s;
            }
        });
    }
    return out;
}

Tensor add_scaled(Tape* tape, const Tensor& a, const Tensor& b, float s) {
    if (a.dims() != b.dims())
        throw ShapeError("add_scaled: dims mismatch " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
    Tensor out(a.dims());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] + s * pb[i];
    if (tape) {
        auto ad = a.ptr();
        auto bd = b.ptr();
        auto od = out.ptr();
        tape->push([=]() {
            if (od->grad.empty()) return;
            ad->ensure_grad();
            bd->ensure_grad();
            for (size_t i = 0; i < od->values.size(); ++i) {
                ad->grad[i] += od->grad[i];
                bd->grad[i] += s * od->grad[i];
            }
        });
    }
    return out;
}

}  // namespace cwp
