#include "predsens/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace predsens {

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Softmax: return "softmax";
        case OpKind::Log: return "log";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Abs: return "abs";
    }
    return "?";
}

namespace {

void require_finite(const Tensor& t, OpKind op, const char* phase) {
    if (!t.all_finite()) {
        throw NumericError(std::string("op '") + op_name(op) + "' produced a non-finite value during " +
                           phase + "; aborting");
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Canonical rank-2 view: rank-1 operands are promoted to a row (left operand)
// or a column (right operand) so one kernel serves all matmul arities.
struct MatView {
    std::size_t rows, cols;
    const std::vector<double>* data;
    double at(std::size_t r, std::size_t c) const { return (*data)[r * cols + c]; }
};

}  // namespace

NodeId Tape::push(TapeNode node, OpKind op) {
    require_finite(node.value, op, "forward");
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

const TapeNode& Tape::node(NodeId id) const {
    check_id(id);
    return nodes_[id];
}

void Tape::check_id(NodeId id) const {
    if (id >= nodes_.size()) {
        throw StateError("tape node id " + std::to_string(id) + " out of range (tape has " +
                         std::to_string(nodes_.size()) + " nodes)");
    }
}

NodeId Tape::leaf(Tensor t) {
    TapeNode n;
    n.op = OpKind::Leaf;
    n.value = std::move(t);
    return push(std::move(n), OpKind::Leaf);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (A.rank() < 1 || A.rank() > 2 || B.rank() < 1 || B.rank() > 2) {
        throw DimensionError("op 'matmul' requires rank-1 or rank-2 operands");
    }
    MatView va{A.rank() == 2 ? A.shape[0] : 1, A.rank() == 2 ? A.shape[1] : A.shape[0], &A.data};
    MatView vb{B.rank() == 2 ? B.shape[0] : B.shape[0], B.rank() == 2 ? B.shape[1] : 1, &B.data};
    if (va.cols != vb.rows) {
        throw DimensionError(std::string("op 'matmul' inner dimensions disagree: ") + A.shape_str() +
                             " x " + B.shape_str());
    }
    std::vector<double> out(va.rows * vb.cols, 0.0);
    for (std::size_t i = 0; i < va.rows; ++i) {
        for (std::size_t k = 0; k < va.cols; ++k) {
            double aik = va.at(i, k);
            for (std::size_t j = 0; j < vb.cols; ++j) {
                out[i * vb.cols + j] += aik * vb.at(k, j);
            }
        }
    }
    std::vector<std::size_t> shape;
    if (A.rank() == 2 && B.rank() == 2) {
        shape = {va.rows, vb.cols};
    } else if (A.rank() == 2) {
        shape = {va.rows};
    } else if (B.rank() == 2) {
        shape = {vb.cols};
    } else {
        shape = {1};  // dot product
    }
    TapeNode n;
    n.op = OpKind::MatMul;
    n.a = a;
    n.b = b;
    n.value = Tensor(std::move(shape), std::move(out));
    return push(std::move(n), OpKind::MatMul);
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (!A.same_shape(B)) {
        throw DimensionError(std::string("op 'add' requires equal shapes, got ") + A.shape_str() +
                             " and " + B.shape_str());
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    TapeNode n;
    n.op = OpKind::Add;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Add);
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (!A.same_shape(B)) {
        throw DimensionError(std::string("op 'mul' requires equal shapes, got ") + A.shape_str() +
                             " and " + B.shape_str());
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    TapeNode n;
    n.op = OpKind::Mul;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Mul);
}

NodeId Tape::sigmoid(NodeId a) {
    Tensor out = node(a).value;
    for (double& d : out.data) d = stable_sigmoid(d);
    TapeNode n;
    n.op = OpKind::Sigmoid;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Sigmoid);
}

NodeId Tape::softmax(NodeId a) {
    const Tensor& A = node(a).value;
    if (A.rank() < 1 || A.rank() > 2) {
        throw DimensionError("op 'softmax' requires rank-1 or rank-2 input");
    }
    Tensor out = A;
    std::size_t nrows = A.rank() == 2 ? A.shape[0] : 1;
    std::size_t ncols = A.rank() == 2 ? A.shape[1] : A.shape[0];
    if (ncols == 0) {
        throw DimensionError("op 'softmax' requires at least one entry per row");
    }
    for (std::size_t r = 0; r < nrows; ++r) {
        double* row = out.data.data() + r * ncols;
        double mx = *std::max_element(row, row + ncols);
        double denom = 0.0;
        for (std::size_t c = 0; c < ncols; ++c) {
            row[c] = std::exp(row[c] - mx);
            denom += row[c];
        }
        for (std::size_t c = 0; c < ncols; ++c) row[c] /= denom;
    }
    TapeNode n;
    n.op = OpKind::Softmax;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Softmax);
}

NodeId Tape::log(NodeId a) {
    Tensor out = node(a).value;
    for (double& d : out.data) d = std::log(d);
    TapeNode n;
    n.op = OpKind::Log;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Log);
}

NodeId Tape::sum(NodeId a) {
    const Tensor& A = node(a).value;
    double s = 0.0;
    for (double d : A.data) s += d;
    TapeNode n;
    n.op = OpKind::Sum;
    n.a = a;
    n.value = Tensor::scalar(s);
    return push(std::move(n), OpKind::Sum);
}

NodeId Tape::mean(NodeId a) {
    const Tensor& A = node(a).value;
    if (A.size() == 0) {
        throw DimensionError("op 'mean' requires a non-empty tensor");
    }
    double s = 0.0;
    for (double d : A.data) s += d;
    TapeNode n;
    n.op = OpKind::Mean;
    n.a = a;
    n.value = Tensor::scalar(s / static_cast<double>(A.size()));
    return push(std::move(n), OpKind::Mean);
}

NodeId Tape::abs(NodeId a) {
    Tensor out = node(a).value;
    for (double& d : out.data) d = std::fabs(d);
    TapeNode n;
    n.op = OpKind::Abs;
    n.a = a;
    n.value = std::move(out);
    return push(std::move(n), OpKind::Abs);
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

const Tensor& Tape::grad(NodeId id) const {
    check_id(id);
    if (!ran_backward_) {
        throw StateError("gradient requested before any backward pass has run");
    }
    return nodes_[id].grad;
}

void Tape::backward(NodeId output, std::size_t component) {
    check_id(output);
    const Tensor& out = nodes_[output].value;
    if (component >= out.size()) {
        throw DimensionError("backward component " + std::to_string(component) +
                             " out of range for output of size " + std::to_string(out.size()));
    }
    for (TapeNode& n : nodes_) {
        n.grad = Tensor::zeros(n.value.shape);
    }
    nodes_[output].grad.data[component] = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        TapeNode& n = nodes_[idx];
        const Tensor& g = n.grad;
        bool any = false;
        for (double d : g.data) {
            if (d != 0.0) { any = true; break; }
        }
        if (!any || n.op == OpKind::Leaf) continue;

        TapeNode& na = nodes_[n.a];
        switch (n.op) {
            case OpKind::MatMul: {
                TapeNode& nb = nodes_[n.b];
                const Tensor& A = na.value;
                const Tensor& B = nb.value;
                std::size_t m = A.rank() == 2 ? A.shape[0] : 1;
                std::size_t k = A.rank() == 2 ? A.shape[1] : A.shape[0];
                std::size_t p = B.rank() == 2 ? B.shape[1] : 1;
                // dA[i,k] += g[i,j] * B[k,j];  dB[k,j] += A[i,k] * g[i,j]
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < p; ++j) {
                        double gij = g.data[i * p + j];
                        if (gij == 0.0) continue;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            na.grad.data[i * k + kk] += gij * B.data[kk * p + j];
                            nb.grad.data[kk * p + j] += A.data[i * k + kk] * gij;
                        }
                    }
                }
                require_finite(nb.grad, n.op, "backward");
                break;
            }
            case OpKind::Add: {
                TapeNode& nb = nodes_[n.b];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    na.grad.data[i] += g.data[i];
                    nb.grad.data[i] += g.data[i];
                }
                break;
            }
            case OpKind::Mul: {
                TapeNode& nb = nodes_[n.b];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    na.grad.data[i] += g.data[i] * nb.value.data[i];
                    nb.grad.data[i] += g.data[i] * na.value.data[i];
                }
                require_finite(nb.grad, n.op, "backward");
                break;
            }
            case OpKind::Sigmoid: {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double s = n.value.data[i];
                    na.grad.data[i] += g.data[i] * s * (1.0 - s);
                }
                break;
            }
            case OpKind::Softmax: {
                // Row-wise: dA_row = p ∘ (g − <g, p>)
                std::size_t nrows = n.value.rank() == 2 ? n.value.shape[0] : 1;
                std::size_t ncols = n.value.rank() == 2 ? n.value.shape[1] : n.value.shape[0];
                for (std::size_t r = 0; r < nrows; ++r) {
                    const double* p_row = n.value.data.data() + r * ncols;
                    const double* g_row = g.data.data() + r * ncols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < ncols; ++c) dot += g_row[c] * p_row[c];
                    for (std::size_t c = 0; c < ncols; ++c) {
                        na.grad.data[r * ncols + c] += p_row[c] * (g_row[c] - dot);
                    }
                }
                break;
            }
            case OpKind::Log: {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    na.grad.data[i] += g.data[i] / na.value.data[i];
                }
                break;
            }
            case OpKind::Sum: {
                double gs = g.data[0];
                for (double& d : na.grad.data) d += gs;
                break;
            }
            case OpKind::Mean: {
                double gs = g.data[0] / static_cast<double>(na.value.size());
                for (double& d : na.grad.data) d += gs;
                break;
            }
            case OpKind::Abs: {
                // Subgradient 0 at the kink.
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double x = na.value.data[i];
                    double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                    na.grad.data[i] += g.data[i] * sign;
                }
                break;
            }
            case OpKind::Leaf:
                break;
        }
        require_finite(na.grad, n.op, "backward");
    }
    ran_backward_ = true;
}

AbsJacobian abs_jacobian_of(Tape& tape, NodeId output, NodeId wrt) {
    AbsJacobian jac;
    jac.rows = tape.value(output).size();
    jac.cols = tape.value(wrt).size();
    jac.entries.resize(jac.rows * jac.cols);
    for (std::size_t k = 0; k < jac.rows; ++k) {
        tape.backward(output, k);
        const Tensor& g = tape.grad(wrt);
        for (std::size_t i = 0; i < jac.cols; ++i) {
            jac.entries[k * jac.cols + i] = std::fabs(g.data[i]);
        }
    }
    return jac;
}

}  // namespace predsens
