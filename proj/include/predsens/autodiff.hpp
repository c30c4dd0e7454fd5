#pragma once

// Minimal reverse-mode automatic differentiation over a define-by-run tape.
//
// The op set is exactly what the audited model families need: matmul, add,
// elementwise multiply, sigmoid, softmax, log, sum, mean, abs. Everything is
// double precision and single-threaded per tape, so repeated runs on the same
// inputs are bitwise identical. Any op that produces a non-finite value
// aborts immediately with a diagnostic naming the op instead of letting NaNs
// propagate into a report.

#include <cstddef>
#include <string>
#include <vector>

#include "predsens/tensor.hpp"

namespace predsens {

// API misuse that is neither bad data nor bad config (e.g. asking for a
// gradient before any backward pass has run).
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

using NodeId = std::size_t;

enum class OpKind { Leaf, MatMul, Add, Mul, Sigmoid, Softmax, Log, Sum, Mean, Abs };

const char* op_name(OpKind op);

struct TapeNode {
    OpKind op = OpKind::Leaf;
    NodeId a = 0;
    NodeId b = 0;
    Tensor value;
    Tensor grad;  // same shape as value; valid after backward()
};

class Tape {
public:
    // Records an input tensor (model weight, constant, or data). Rejects
    // non-finite entries so downstream ops can trust their operands.
    NodeId leaf(Tensor t);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId sigmoid(NodeId a);
    NodeId softmax(NodeId a);  // rank-1: whole vector; rank-2: row-wise
    NodeId log(NodeId a);
    NodeId sum(NodeId a);   // all entries -> {1}
    NodeId mean(NodeId a);  // all entries -> {1}
    NodeId abs(NodeId a);

    const Tensor& value(NodeId id) const;

    // Reverse pass seeding d(output[component]) = 1. May be called repeatedly
    // on the same tape (gradients are reset each call), which is how the K
    // rows of a Jacobian are extracted.
    void backward(NodeId output, std::size_t component = 0);

    // Gradient of the last backward() seed with respect to node `id`.
    const Tensor& grad(NodeId id) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    std::vector<TapeNode> nodes_;
    bool ran_backward_ = false;

    NodeId push(TapeNode node, OpKind op);
    const TapeNode& node(NodeId id) const;
    void check_id(NodeId id) const;
};

// K x M matrix of absolute partial derivatives |d f_k / d x_i|, k over output
// components, i over the flattened entries of one input tensor.
struct AbsJacobian {
    std::size_t rows = 0;  // output components (classes)
    std::size_t cols = 0;  // flattened input entries
    std::vector<double> entries;  // row-major, all >= 0

    double at(std::size_t k, std::size_t i) const { return entries[k * cols + i]; }
    double& at(std::size_t k, std::size_t i) { return entries[k * cols + i]; }
};

// Runs one backward pass per output component and collects |grad(wrt)| rows.
AbsJacobian abs_jacobian_of(Tape& tape, NodeId output, NodeId wrt);

}  // namespace predsens
