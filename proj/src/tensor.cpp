#include "tcseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcseg {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

}  // namespace

SeqTensor::SeqTensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 1 || cols < 1) {
        shape_error("SeqTensor", "shape must be at least 1x1, got " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
    }
}

SeqTensor SeqTensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    int r = static_cast<int>(rows.size());
    int c = static_cast<int>(rows.begin()->size());
    SeqTensor t(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) shape_error("SeqTensor::from_rows", "ragged rows");
        int j = 0;
        for (double v : row) t.at(i, j++) = v;
        ++i;
    }
    return t;
}

SeqTensor SeqTensor::row(std::initializer_list<double> values) {
    SeqTensor t(1, static_cast<int>(values.size()));
    int j = 0;
    for (double v : values) t.at(0, j++) = v;
    return t;
}

bool SeqTensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void SeqTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string SeqTensor::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

SeqTensor conv1d(const SeqTensor& x, const SeqTensor& w, const SeqTensor& b, const ConvSpec& spec) {
    if (spec.kernel_size < 1 || spec.dilation < 1)
        shape_error("conv1d", "kernel_size and dilation must be positive");
    if (x.cols() != spec.in_channels)
        shape_error("conv1d", "input has " + std::to_string(x.cols()) + " channels, spec expects " +
                                  std::to_string(spec.in_channels));
    if (w.rows() != spec.out_channels || w.cols() != spec.kernel_size * spec.in_channels)
        shape_error("conv1d", "weights are " + w.shape_str() + ", spec expects " +
                                  std::to_string(spec.out_channels) + "x" +
                                  std::to_string(spec.kernel_size * spec.in_channels));
    if (b.rows() != 1 || b.cols() != spec.out_channels)
        shape_error("conv1d", "bias is " + b.shape_str() + ", expected 1x" +
                                  std::to_string(spec.out_channels));

    const int T = x.rows();
    const int cin = spec.in_channels;
    const int cout = spec.out_channels;
    const int pad = spec.pad();
    SeqTensor out(T, cout);
    for (int t = 0; t < T; ++t) {
        for (int o = 0; o < cout; ++o) {
            double acc = b.at(0, o);
            for (int j = 0; j < spec.kernel_size; ++j) {
                const int ti = t + j * spec.dilation - pad;
                if (ti < 0 || ti >= T) continue;  // zero padding
                const double* xr = &x.data()[static_cast<size_t>(ti) * cin];
                const double* wr = &w.data()[static_cast<size_t>(o) * w.cols() + j * cin];
                for (int c = 0; c < cin; ++c) acc += wr[c] * xr[c];
            }
            out.at(t, o) = acc;
        }
    }
    return out;
}

SeqTensor relu(const SeqTensor& x) {
    SeqTensor out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

SeqTensor add(const SeqTensor& a, const SeqTensor& b) {
    if (!a.same_shape(b))
        shape_error("add", "shapes differ: " + a.shape_str() + " vs " + b.shape_str());
    SeqTensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

SeqTensor scale(const SeqTensor& x, double a) {
    SeqTensor out = x;
    for (double& v : out.data()) v *= a;
    return out;
}

PoolResult maxpool_time(const SeqTensor& x, int window) {
    if (window < 1) shape_error("maxpool_time", "window must be positive");
    const int T = x.rows();
    const int C = x.cols();
    const int out_T = (T + window - 1) / window;
    PoolResult res{SeqTensor(out_T, C), std::vector<std::int32_t>(static_cast<size_t>(out_T) * C)};
    for (int tp = 0; tp < out_T; ++tp) {
        for (int c = 0; c < C; ++c) {
            // partial tail windows replicate the last frame, so the running
            // max can be seeded from the window start and ties keep the
            // earliest source frame
            int best_t = std::min(tp * window, T - 1);
            double best = x.at(best_t, c);
            for (int k = 1; k < window; ++k) {
                const int t = std::min(tp * window + k, T - 1);
                if (x.at(t, c) > best) {
                    best = x.at(t, c);
                    best_t = t;
                }
            }
            res.out.at(tp, c) = best;
            res.argmax[static_cast<size_t>(tp) * C + c] = best_t;
        }
    }
    return res;
}

SeqTensor upsample_time(const SeqTensor& x, int factor, int target_len) {
    if (factor < 1) shape_error("upsample_time", "factor must be positive");
    if (target_len < 1 || target_len > factor * x.rows())
        shape_error("upsample_time", "target length " + std::to_string(target_len) +
                                         " outside (0, " + std::to_string(factor * x.rows()) + "]");
    SeqTensor out(target_len, x.cols());
    for (int t = 0; t < target_len; ++t)
        for (int c = 0; c < x.cols(); ++c) out.at(t, c) = x.at(t / factor, c);
    return out;
}

SeqTensor softmax_rows(const SeqTensor& x) {
    SeqTensor out(x.rows(), x.cols());
    for (int t = 0; t < x.rows(); ++t) {
        double mx = x.at(t, 0);
        for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x.at(t, c));
        double sum = 0.0;
        for (int c = 0; c < x.cols(); ++c) {
            const double e = std::exp(x.at(t, c) - mx);
            out.at(t, c) = e;
            sum += e;
        }
        for (int c = 0; c < x.cols(); ++c) out.at(t, c) /= sum;
    }
    return out;
}

SeqTensor layernorm(const SeqTensor& x, const SeqTensor& gain, const SeqTensor& bias, double eps) {
    const int C = x.cols();
    if (gain.rows() != 1 || gain.cols() != C || bias.rows() != 1 || bias.cols() != C)
        shape_error("layernorm", "gain/bias must be 1x" + std::to_string(C) + ", got " +
                                     gain.shape_str() + " and " + bias.shape_str());
    SeqTensor out(x.rows(), C);
    for (int t = 0; t < x.rows(); ++t) {
        double mean = 0.0;
        for (int c = 0; c < C; ++c) mean += x.at(t, c);
        mean /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = x.at(t, c) - mean;
            var += d * d;
        }
        var /= C;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < C; ++c)
            out.at(t, c) = gain.at(0, c) * (x.at(t, c) - mean) * inv + bias.at(0, c);
    }
    return out;
}

SeqTensor matmul_nt(const SeqTensor& a, const SeqTensor& b) {
    if (a.cols() != b.cols())
        shape_error("matmul_nt", "inner dims differ: " + a.shape_str() + " vs " + b.shape_str());
    SeqTensor out(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double* ar = &a.data()[static_cast<size_t>(i) * a.cols()];
        for (int j = 0; j < b.rows(); ++j) {
            const double* br = &b.data()[static_cast<size_t>(j) * b.cols()];
            double acc = 0.0;
            for (int m = 0; m < a.cols(); ++m) acc += ar[m] * br[m];
            out.at(i, j) = acc;
        }
    }
    return out;
}

SeqTensor matmul(const SeqTensor& a, const SeqTensor& b) {
    if (a.cols() != b.rows())
        shape_error("matmul", "inner dims differ: " + a.shape_str() + " vs " + b.shape_str());
    SeqTensor out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        double* orow = &out.data()[static_cast<size_t>(i) * out.cols()];
        for (int s = 0; s < a.cols(); ++s) {
            const double av = a.at(i, s);
            if (av == 0.0) continue;
            const double* brow = &b.data()[static_cast<size_t>(s) * b.cols()];
            for (int m = 0; m < b.cols(); ++m) orow[m] += av * brow[m];
        }
    }
    return out;
}

}  // namespace tcseg
