#include "tcseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tcseg {

namespace {
constexpr double kLogClamp = 1e-12;
}

const TapeNode& Tape::node(NodeId id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("tape: invalid node id");
    return nodes_[static_cast<size_t>(id)];
}

NodeId Tape::push(TapeNode n) {
    for (int i = 0; i < n.arity; ++i) {
        if (n.in[i] < 0 || n.in[i] >= size())
            throw std::out_of_range("tape: input id not on tape");
    }
    nodes_.push_back(std::move(n));
    return size() - 1;
}

NodeId Tape::leaf(SeqTensor v) {
    TapeNode n;
    n.kind = OpKind::Leaf;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Tape::conv1d(NodeId x, NodeId w, NodeId b, const ConvSpec& spec) {
    TapeNode n;
    n.kind = OpKind::Conv1d;
    n.in = {x, w, b};
    n.arity = 3;
    n.spec = spec;
    n.value = tcseg::conv1d(value(x), value(w), value(b), spec);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    TapeNode n;
    n.kind = OpKind::Relu;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.value = tcseg::relu(value(x));
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    TapeNode n;
    n.kind = OpKind::Add;
    n.in = {a, b, -1};
    n.arity = 2;
    n.value = tcseg::add(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double a) {
    TapeNode n;
    n.kind = OpKind::Scale;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.scalar = a;
    n.value = tcseg::scale(value(x), a);
    return push(std::move(n));
}

NodeId Tape::maxpool_time(NodeId x, int window) {
    PoolResult res = tcseg::maxpool_time(value(x), window);
    TapeNode n;
    n.kind = OpKind::MaxPoolTime;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.window = window;
    n.value = std::move(res.out);
    n.argmax = std::move(res.argmax);
    return push(std::move(n));
}

NodeId Tape::upsample_time(NodeId x, int factor, int target_len) {
    TapeNode n;
    n.kind = OpKind::UpsampleTime;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.window = factor;
    n.value = tcseg::upsample_time(value(x), factor, target_len);
    return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId x) {
    TapeNode n;
    n.kind = OpKind::SoftmaxRows;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.value = tcseg::softmax_rows(value(x));
    return push(std::move(n));
}

NodeId Tape::layernorm(NodeId x, NodeId gain, NodeId bias, double eps) {
    TapeNode n;
    n.kind = OpKind::LayerNorm;
    n.in = {x, gain, bias};
    n.arity = 3;
    n.scalar = eps;
    n.value = tcseg::layernorm(value(x), value(gain), value(bias), eps);
    return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    TapeNode n;
    n.kind = OpKind::MatmulNT;
    n.in = {a, b, -1};
    n.arity = 2;
    n.value = tcseg::matmul_nt(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    TapeNode n;
    n.kind = OpKind::Matmul;
    n.in = {a, b, -1};
    n.arity = 2;
    n.value = tcseg::matmul(value(a), value(b));
    return push(std::move(n));
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    const SeqTensor& v = value(x);
    TapeNode n;
    n.kind = OpKind::Dropout;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.mask.resize(static_cast<size_t>(v.size()));
    const double keep_scale = 1.0 / (1.0 - rate);
    n.value = v;
    for (int i = 0; i < v.size(); ++i) {
        n.mask[static_cast<size_t>(i)] = rng.uniform() < rate ? 0.0 : keep_scale;
        n.value[static_cast<size_t>(i)] = v[static_cast<size_t>(i)] * n.mask[static_cast<size_t>(i)];
    }
    return push(std::move(n));
}

NodeId Tape::cross_entropy(NodeId probs, std::vector<int> labels) {
    const SeqTensor& p = value(probs);
    if (static_cast<int>(labels.size()) != p.rows())
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(p.rows()) + " frames");
    for (int lab : labels) {
        if (lab < 0 || lab >= p.cols())
            throw std::invalid_argument("cross_entropy: label " + std::to_string(lab) +
                                        " outside [0, " + std::to_string(p.cols()) + ")");
    }
    double loss = 0.0;
    for (int t = 0; t < p.rows(); ++t)
        loss -= std::log(std::max(p.at(t, labels[static_cast<size_t>(t)]), kLogClamp));
    loss /= p.rows();

    TapeNode n;
    n.kind = OpKind::CrossEntropy;
    n.in = {probs, -1, -1};
    n.arity = 1;
    n.labels = std::move(labels);
    n.value = SeqTensor(1, 1, loss);
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    const SeqTensor& v = value(x);
    TapeNode n;
    n.kind = OpKind::Sum;
    n.in = {x, -1, -1};
    n.arity = 1;
    n.value = SeqTensor(1, 1, std::accumulate(v.data().begin(), v.data().end(), 0.0));
    return push(std::move(n));
}

const SeqTensor& Tape::grad(NodeId id) const {
    const TapeNode& n = node(id);
    if (n.grad.empty()) throw std::logic_error("tape: gradient not computed, call backward first");
    return n.grad;
}

SeqTensor& Tape::grad_buf(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }

void Tape::backward(NodeId loss, double seed) {
    const TapeNode& ln = node(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
        throw std::invalid_argument("backward: loss node must be 1x1, got " +
                                    ln.value.shape_str());

    for (TapeNode& n : nodes_) {
        n.grad = SeqTensor(n.value.rows(), n.value.cols());
    }
    grad_buf(loss).at(0, 0) = seed;

    for (NodeId id = loss; id >= 0; --id) {
        const TapeNode& n = node(id);
        const SeqTensor& g = n.grad;
        switch (n.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::Conv1d: {
                const SeqTensor& x = value(n.in[0]);
                const SeqTensor& w = value(n.in[1]);
                SeqTensor& dx = grad_buf(n.in[0]);
                SeqTensor& dw = grad_buf(n.in[1]);
                SeqTensor& db = grad_buf(n.in[2]);
                const ConvSpec& spec = n.spec;
                const int T = x.rows();
                const int cin = spec.in_channels;
                const int pad = spec.pad();
                for (int t = 0; t < T; ++t) {
                    for (int o = 0; o < spec.out_channels; ++o) {
                        const double go = g.at(t, o);
                        if (go == 0.0) continue;
                        db.at(0, o) += go;
                        for (int j = 0; j < spec.kernel_size; ++j) {
                            const int ti = t + j * spec.dilation - pad;
                            if (ti < 0 || ti >= T) continue;
                            const double* xr = &x.data()[static_cast<size_t>(ti) * cin];
                            const double* wr = &w.data()[static_cast<size_t>(o) * w.cols() + j * cin];
                            double* dxr = &dx.data()[static_cast<size_t>(ti) * cin];
                            double* dwr = &dw.data()[static_cast<size_t>(o) * w.cols() + j * cin];
                            for (int c = 0; c < cin; ++c) {
                                dxr[c] += go * wr[c];
                                dwr[c] += go * xr[c];
                            }
                        }
                    }
                }
                break;
            }
            case OpKind::Relu: {
                const SeqTensor& x = value(n.in[0]);
                SeqTensor& dx = grad_buf(n.in[0]);
                for (int i = 0; i < x.size(); ++i)
                    if (x[static_cast<size_t>(i)] > 0.0)
                        dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                break;
            }
            case OpKind::Add: {
                SeqTensor& da = grad_buf(n.in[0]);
                SeqTensor& db = grad_buf(n.in[1]);
                for (int i = 0; i < g.size(); ++i) {
                    da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                    db[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                }
                break;
            }
            case OpKind::Scale: {
                SeqTensor& dx = grad_buf(n.in[0]);
                for (int i = 0; i < g.size(); ++i)
                    dx[static_cast<size_t>(i)] += n.scalar * g[static_cast<size_t>(i)];
                break;
            }
            case OpKind::MaxPoolTime: {
                SeqTensor& dx = grad_buf(n.in[0]);
                const int C = n.value.cols();
                for (int tp = 0; tp < n.value.rows(); ++tp)
                    for (int c = 0; c < C; ++c)
                        dx.at(n.argmax[static_cast<size_t>(tp) * C + c], c) += g.at(tp, c);
                break;
            }
            case OpKind::UpsampleTime: {
                SeqTensor& dx = grad_buf(n.in[0]);
                for (int t = 0; t < n.value.rows(); ++t)
                    for (int c = 0; c < n.value.cols(); ++c)
                        dx.at(t / n.window, c) += g.at(t, c);
                break;
            }
            case OpKind::SoftmaxRows: {
                const SeqTensor& y = n.value;
                SeqTensor& dx = grad_buf(n.in[0]);
                for (int t = 0; t < y.rows(); ++t) {
                    double dot = 0.0;
                    for (int c = 0; c < y.cols(); ++c) dot += g.at(t, c) * y.at(t, c);
                    for (int c = 0; c < y.cols(); ++c)
                        dx.at(t, c) += y.at(t, c) * (g.at(t, c) - dot);
                }
                break;
            }
            case OpKind::LayerNorm: {
                const SeqTensor& x = value(n.in[0]);
                const SeqTensor& gain = value(n.in[1]);
                SeqTensor& dx = grad_buf(n.in[0]);
                SeqTensor& dgain = grad_buf(n.in[1]);
                SeqTensor& dbias = grad_buf(n.in[2]);
                const int C = x.cols();
                const double eps = n.scalar;
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
                    // dxh is the gradient w.r.t. the normalized activations
                    double mean_dxh = 0.0;
                    double mean_dxh_xh = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double xh = (x.at(t, c) - mean) * inv;
                        const double dxh = g.at(t, c) * gain.at(0, c);
                        dgain.at(0, c) += g.at(t, c) * xh;
                        dbias.at(0, c) += g.at(t, c);
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                    }
                    mean_dxh /= C;
                    mean_dxh_xh /= C;
                    for (int c = 0; c < C; ++c) {
                        const double xh = (x.at(t, c) - mean) * inv;
                        const double dxh = g.at(t, c) * gain.at(0, c);
                        dx.at(t, c) += inv * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
                break;
            }
            case OpKind::MatmulNT: {
                // out = A B^T; dA = g B, dB = g^T A
                const SeqTensor& a = value(n.in[0]);
                const SeqTensor& b = value(n.in[1]);
                SeqTensor& da = grad_buf(n.in[0]);
                SeqTensor& db = grad_buf(n.in[1]);
                for (int i = 0; i < a.rows(); ++i)
                    for (int j = 0; j < b.rows(); ++j) {
                        const double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (int m = 0; m < a.cols(); ++m) {
                            da.at(i, m) += gij * b.at(j, m);
                            db.at(j, m) += gij * a.at(i, m);
                        }
                    }
                break;
            }
            case OpKind::Matmul: {
                // out = A B; dA = g B^T, dB = A^T g
                const SeqTensor& a = value(n.in[0]);
                const SeqTensor& b = value(n.in[1]);
                SeqTensor& da = grad_buf(n.in[0]);
                SeqTensor& db = grad_buf(n.in[1]);
                for (int i = 0; i < a.rows(); ++i)
                    for (int s = 0; s < a.cols(); ++s) {
                        double acc = 0.0;
                        for (int m = 0; m < b.cols(); ++m) {
                            const double gim = g.at(i, m);
                            acc += gim * b.at(s, m);
                            db.at(s, m) += a.at(i, s) * gim;
                        }
                        da.at(i, s) += acc;
                    }
                break;
            }
            case OpKind::Dropout: {
                SeqTensor& dx = grad_buf(n.in[0]);
                for (int i = 0; i < g.size(); ++i)
                    dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * n.mask[static_cast<size_t>(i)];
                break;
            }
            case OpKind::CrossEntropy: {
                const SeqTensor& p = value(n.in[0]);
                SeqTensor& dp = grad_buf(n.in[0]);
                const double go = g.at(0, 0);
                const int T = p.rows();
                for (int t = 0; t < T; ++t) {
                    const double pt = p.at(t, n.labels[static_cast<size_t>(t)]);
                    if (pt > kLogClamp)  // clamped region is locally constant
                        dp.at(t, n.labels[static_cast<size_t>(t)]) -= go / (T * pt);
                }
                break;
            }
            case OpKind::Sum: {
                SeqTensor& dx = grad_buf(n.in[0]);
                const double go = g.at(0, 0);
                for (double& v : dx.data()) v += go;
                break;
            }
            default:
                throw std::logic_error("backward: unknown op kind");
        }
    }
}

std::string GradCheckReport::to_text() const {
    std::ostringstream os;
    for (const auto& e : per_param) {
        os << "param " << e.name << ": max_rel_err=" << e.max_rel_err
           << " coords=" << e.coords_checked << "\n";
    }
    os << "overall max_rel_err=" << max_rel_err << " worst=" << worst << " "
       << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

namespace {

double eval_scalar(const TapeFn& f, const std::vector<SeqTensor>& params) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const SeqTensor& p : params) ids.push_back(tape.leaf(p));
    NodeId loss = f(tape, ids);
    const double v = tape.value(loss).at(0, 0);
    if (!std::isfinite(v)) throw std::runtime_error("gradcheck: non-finite function value");
    return v;
}

}  // namespace

GradCheckReport gradcheck(const TapeFn& f, const std::vector<SeqTensor>& params,
                          const std::vector<std::string>& names, double step, double tol,
                          std::uint64_t seed, int sample_budget) {
    if (step <= 0.0) throw std::invalid_argument("gradcheck: step must be positive");
    if (!names.empty() && names.size() != params.size())
        throw std::invalid_argument("gradcheck: name count mismatch");

    // analytic gradient at the base point
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const SeqTensor& p : params) ids.push_back(tape.leaf(p));
    NodeId loss = f(tape, ids);
    if (!std::isfinite(tape.value(loss).at(0, 0)))
        throw std::runtime_error("gradcheck: non-finite function value");
    tape.backward(loss);

    long total = 0;
    for (const SeqTensor& p : params) total += p.size();

    Rng rng(seed);
    GradCheckReport report;
    report.max_rel_err = 0.0;

    std::vector<SeqTensor> work = params;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const SeqTensor& analytic = tape.grad(ids[pi]);
        const int n = params[pi].size();

        std::vector<int> coords(static_cast<size_t>(n));
        std::iota(coords.begin(), coords.end(), 0);
        int take = n;
        if (total > sample_budget) {
            // spread the budget proportionally, at least one coordinate each
            take = std::max<int>(1, static_cast<int>(
                static_cast<long>(sample_budget) * n / std::max<long>(total, 1)));
            take = std::min(take, n);
            for (int k = 0; k < take; ++k) {  // partial Fisher-Yates
                int j = rng.uniform_int(k, n - 1);
                std::swap(coords[static_cast<size_t>(k)], coords[static_cast<size_t>(j)]);
            }
        }

        GradCheckEntry entry;
        entry.name = names.empty() ? "p" + std::to_string(pi) : names[pi];
        entry.coords_checked = take;
        for (int k = 0; k < take; ++k) {
            const int i = coords[static_cast<size_t>(k)];
            const double saved = work[pi][static_cast<size_t>(i)];
            work[pi][static_cast<size_t>(i)] = saved + step;
            const double fp = eval_scalar(f, work);
            work[pi][static_cast<size_t>(i)] = saved - step;
            const double fm = eval_scalar(f, work);
            work[pi][static_cast<size_t>(i)] = saved;

            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[static_cast<size_t>(i)];
            const double rel =
                std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = entry.name + "[" + std::to_string(i) + "]";
            }
        }
        report.per_param.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace tcseg
