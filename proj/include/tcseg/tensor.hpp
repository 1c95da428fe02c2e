#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace tcseg {

/// Dense 2-D sequence tensor, shape (rows = frames T, cols = channels C),
/// row-major. The shape is fixed at construction. All network values --
/// feature sequences, weight matrices, attention matrices, scalars (1x1) --
/// are carried by this one type.
class SeqTensor {
public:
    SeqTensor() = default;  // empty placeholder (0x0), not a valid op input
    SeqTensor(int rows, int cols, double fill = 0.0);

    static SeqTensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    /// Single-row tensor (1 x n), convenient for biases and per-channel vectors.
    static SeqTensor row(std::initializer_list<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool empty() const { return rows_ == 0; }

    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }

    double operator[](size_t i) const { return data_[i]; }
    double& operator[](size_t i) { return data_[i]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const SeqTensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;
    void fill(double v);

    std::string shape_str() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Temporal convolution geometry. Always acausal: (kernel_size-1)/2 * dilation
/// zero frames are implied on each temporal side so output length equals
/// input length.
struct ConvSpec {
    int kernel_size = 3;
    int dilation = 1;
    int in_channels = 0;
    int out_channels = 0;

    int pad() const { return (kernel_size - 1) / 2 * dilation; }
};

/// Weight layout used by conv1d: w has out_channels rows, kernel_size*in_channels
/// columns, tap-major -- w(o, j*in_channels + c) is the weight connecting input
/// channel c at tap j to output channel o.
inline int conv_weight_index(const ConvSpec& spec, int c, int j) {
    return j * spec.in_channels + c;
}

/// out(t,o) = b(o) + sum_{c,j} w(o, j*Cin+c) * x(t + j*dilation - pad, c),
/// zero outside [0,T). Output has the input's length.
SeqTensor conv1d(const SeqTensor& x, const SeqTensor& w, const SeqTensor& b, const ConvSpec& spec);

SeqTensor relu(const SeqTensor& x);
SeqTensor add(const SeqTensor& a, const SeqTensor& b);
SeqTensor scale(const SeqTensor& x, double a);

struct PoolResult {
    SeqTensor out;                // ceil(T/window) x C
    std::vector<std::int32_t> argmax;  // source frame per output element, row-major
};

/// Temporal max pooling. A final partial window is padded by replicating the
/// last frame. Ties break to the earliest frame so gradients are deterministic.
PoolResult maxpool_time(const SeqTensor& x, int window);

/// Nearest-neighbor temporal upsampling: each input frame is repeated `factor`
/// times, then the result is truncated to target_len. Requires
/// target_len <= factor * x.rows().
SeqTensor upsample_time(const SeqTensor& x, int factor, int target_len);

/// Row-wise softmax with max subtraction; every output row sums to 1.
SeqTensor softmax_rows(const SeqTensor& x);

/// Per-frame normalization over channels: gain * (x - mean) / sqrt(var + eps) + bias.
/// gain and bias are 1 x C.
SeqTensor layernorm(const SeqTensor& x, const SeqTensor& gain, const SeqTensor& bias, double eps);

/// a (T x d) times b^T (b is S x d) -> T x S. The QK^T product.
SeqTensor matmul_nt(const SeqTensor& a, const SeqTensor& b);

/// Plain matrix product a (T x S) times b (S x d) -> T x d.
SeqTensor matmul(const SeqTensor& a, const SeqTensor& b);

}  // namespace tcseg
