#pragma once

#include <array>
#include <deque>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcseg/rng.hpp"
#include "tcseg/tensor.hpp"

namespace tcseg {

using NodeId = int;

enum class OpKind {
    Leaf,
    Conv1d,
    Relu,
    Add,
    Scale,
    MaxPoolTime,
    UpsampleTime,
    SoftmaxRows,
    LayerNorm,
    MatmulNT,
    Matmul,
    Dropout,
    CrossEntropy,
    Sum,
};

/// One recorded operation. Inputs are node ids strictly smaller than the
/// node's own id, so a single reverse sweep visits every node once.
struct TapeNode {
    OpKind kind = OpKind::Leaf;
    std::array<NodeId, 3> in{-1, -1, -1};
    int arity = 0;
    SeqTensor value;
    SeqTensor grad;  // allocated lazily by backward()

    // saved forward context, fields used depend on kind
    ConvSpec spec;
    double scalar = 0.0;              // Scale factor / LayerNorm eps
    int window = 0;                   // MaxPoolTime / UpsampleTime factor
    std::vector<std::int32_t> argmax; // MaxPoolTime routing
    std::vector<int> labels;          // CrossEntropy targets
    std::vector<double> mask;         // Dropout keep mask (already 1/(1-rate) scaled)
};

/// Append-only reverse-mode differentiation record over the tensor ops.
/// Forward values are computed eagerly as nodes are recorded; backward()
/// fills per-node gradients in one reverse sweep.
class Tape {
public:
    NodeId leaf(SeqTensor v);
    NodeId conv1d(NodeId x, NodeId w, NodeId b, const ConvSpec& spec);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId x, double a);
    NodeId maxpool_time(NodeId x, int window);
    NodeId upsample_time(NodeId x, int factor, int target_len);
    NodeId softmax_rows(NodeId x);
    NodeId layernorm(NodeId x, NodeId gain, NodeId bias, double eps);
    NodeId matmul_nt(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    /// Inverted dropout: kept elements are scaled by 1/(1-rate). Consumes
    /// one uniform draw per element in row-major order.
    NodeId dropout(NodeId x, double rate, Rng& rng);
    /// Mean negative log-likelihood over frames: -(1/T) sum_t log probs(t, labels[t]),
    /// log clamped at log(1e-12). Output is a 1x1 scalar.
    NodeId cross_entropy(NodeId probs, std::vector<int> labels);
    NodeId sum(NodeId x);

    /// References stay valid as the tape grows (node storage is stable).
    const SeqTensor& value(NodeId id) const { return node(id).value; }
    /// Gradient accumulated by the last backward(); zeros if unreachable.
    const SeqTensor& grad(NodeId id) const;

    /// Reverse sweep from a scalar (1x1) loss node. `seed` is the upstream
    /// gradient of the loss with respect to itself, normally 1.
    void backward(NodeId loss, double seed = 1.0);

    int size() const { return static_cast<int>(nodes_.size()); }
    const TapeNode& node(NodeId id) const;

private:
    NodeId push(TapeNode n);
    SeqTensor& grad_buf(NodeId id);

    std::deque<TapeNode> nodes_;
};

/// A differentiable scalar function: records its computation on the tape,
/// reading parameters from the given leaf nodes, and returns the loss node.
using TapeFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst; // "param[flat_index]"
    std::vector<GradCheckEntry> per_param;

    std::string to_text() const;
};

/// Central-difference check of the tape gradient of `f` at `params`.
/// Relative error per coordinate is |a-n| / max(1e-8, |a|+|n|). Checks all
/// coordinates when there are at most `sample_budget`, otherwise a seeded
/// random subset spread across parameters (at least one per parameter).
GradCheckReport gradcheck(const TapeFn& f, const std::vector<SeqTensor>& params,
                          const std::vector<std::string>& names, double step, double tol,
                          std::uint64_t seed, int sample_budget = 200);

}  // namespace tcseg
