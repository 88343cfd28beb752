#pragma once

// Dense float32 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operators are free
// functions taking an optional Tape*; passing nullptr runs the forward
// computation without recording (inference mode). backward() replays the
// tape in reverse, accumulating gradients into every recorded input whose
// output contributed to the loss. Tensors that are not ancestors of the
// loss never get a gradient buffer and report zero gradients.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cwp/error.hpp"
#include "cwp/rng.hpp"

namespace cwp {

struct TensorData {
    std::vector<int> dims;
    std::vector<float> values;
    std::vector<float> grad;  // empty until touched by backward()
    bool trainable = false;
    bool clamp_unit = false;  // project to [0,1] after each optimizer step

    size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0f);
    }
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims, float fill = 0.0f);
    Tensor(std::vector<int> dims, std::vector<float> values);

    static Tensor scalar(float v) { return Tensor(std::vector<int>{1}, std::vector<float>{v}); }
    static Tensor randn(std::vector<int> dims, Rng& rng, float stddev);

    bool defined() const { return d_ != nullptr; }
    const std::vector<int>& dims() const { return d_->dims; }
    int dim(int i) const { return d_->dims[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(d_->dims.size()); }
    size_t size() const { return d_->values.size(); }

    float* data() { return d_->values.data(); }
    const float* data() const { return d_->values.data(); }
    std::vector<float>& values() { return d_->values; }
    const std::vector<float>& values() const { return d_->values; }

    // NCHW element access, for tests and small bookkeeping code.
    float& at(int n, int c, int h, int w);
    float at(int n, int c, int h, int w) const;

    float item() const;  // value of a 1-element tensor

    bool trainable() const { return d_->trainable; }
    Tensor& set_trainable(bool t) {
        d_->trainable = t;
        return *this;
    }
    bool clamp_unit() const { return d_->clamp_unit; }
    Tensor& set_clamp_unit(bool c) {
        d_->clamp_unit = c;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    // Zero gradient view for tensors backward() never reached.
    std::vector<float> grad() const;
    float* grad_data() {
        d_->ensure_grad();
        return d_->grad.data();
    }
    void zero_grad() { d_->grad.clear(); }

    bool all_finite() const;

    std::shared_ptr<TensorData> ptr() const { return d_; }

  private:
    std::shared_ptr<TensorData> d_;
};

size_t numel(const std::vector<int>& dims);
std::string dims_to_string(const std::vector<int>& dims);

// Reverse-mode tape. Nodes are closures pushed in execution order; replaying
// them back-to-front visits the graph in reverse topological order.
class Tape {
  public:
    void push(std::function<void()> node) { nodes_.push_back(std::move(node)); }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss)=1 and replays the tape. loss must be a scalar
    // recorded on this tape.
    void backward(const Tensor& loss);

  private:
    std::vector<std::function<void()>> nodes_;
};

void backward(const Tensor& loss, Tape& tape);

// ---- operators -----------------------------------------------------------

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int pad = 0);

// Broadcasting elementwise ops: dims must match exactly or be 1 per axis.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor relu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor scale(Tape* tape, const Tensor& x, float s);

Tensor softmax(Tape* tape, const Tensor& x, int axis);
Tensor global_avg_pool(Tape* tape, const Tensor& x);

// 2x2 stride-2 average pooling (H,W must be even).
Tensor avg_pool2(Tape* tape, const Tensor& x);
// Average pooling onto a fixed out_h x out_w grid (torch-style bins).
Tensor adaptive_avg_pool(Tape* tape, const Tensor& x, int out_h, int out_w);

Tensor channel_mean(Tape* tape, const Tensor& x);  // N x 1 x H x W
Tensor channel_max(Tape* tape, const Tensor& x);   // N x 1 x H x W

Tensor concat_channels(Tape* tape, const std::vector<Tensor>& parts);
std::vector<Tensor> split_channels(Tape* tape, const Tensor& x, int groups);

Tensor bilinear_resize(Tape* tape, const Tensor& x, int out_h, int out_w);

// Scalar reductions (double accumulation; result is a 1-element tensor).
Tensor sum_all(Tape* tape, const Tensor& x);
Tensor l1_mean(Tape* tape, const Tensor& a, const Tensor& b);  // mean |a-b|

// a + s*b, used to combine loss terms.
Tensor add_scaled(Tape* tape, const Tensor& a, const Tensor& b, float s);

}  // namespace cwp
