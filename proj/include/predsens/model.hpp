#pragma once

// Differentiable classifier families that the sensitivity audit understands.
//
// Text models embed each token, mean-pool the embedding stack, and pass the
// result through a small MLP. Tabular models consume a raw feature vector.
// Heads: softmax over K classes, a [f, 1-f] sigmoid pair for binary scores,
// or a bare linear output for the constrained regression model. All of them
// build their forward pass on the autodiff tape, so prediction and Jacobian
// extraction share one code path.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "predsens/autodiff.hpp"
#include "predsens/tensor.hpp"

namespace predsens {

enum class ModelKind { TextSoftmax, TabularSoftmax, TabularSigmoidPair, LinearScalar };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct ModelArch {
    ModelKind kind = ModelKind::TextSoftmax;
    std::size_t embed_dim = 8;           // text kinds
    std::vector<std::string> vocab;      // text kinds; index = embedding row
    std::size_t feature_dim = 0;         // tabular / linear kinds
    std::vector<std::size_t> hidden;     // widths of sigmoid hidden layers
    std::size_t classes = 2;             // K output components
    // Tabular kinds: feature columns the network is wired to. Empty = all.
    // Columns not listed have their first-layer weights pinned at zero, which
    // structurally severs every path from those inputs to the output.
    std::vector<std::size_t> active_features;

    bool is_text() const { return kind == ModelKind::TextSoftmax; }
    std::size_t input_dim() const { return is_text() ? embed_dim : feature_dim; }
};

struct TrainSummary {
    double train_accuracy = -1.0;
    double val_accuracy = -1.0;
    std::vector<double> per_class_accuracy;  // indexed by label
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    double lipschitz_bound = 0.0;            // 0 = unconstrained
    int norm_order = 0;
    double max_constraint_violation = 0.0;
    std::vector<std::string> warnings;
};

struct DiffModel {
    ModelArch arch;
    Tensor embedding;             // {V, D}; empty for non-text kinds
    std::vector<Tensor> weights;  // alternating W {in,out}, b {1,out}; LinearScalar: single W, no bias
    TrainSummary summary;

    std::size_t num_classes() const;
    std::optional<std::size_t> vocab_row(const std::string& token) const;
    void rebuild_vocab_index();

private:
    std::unordered_map<std::string, std::size_t> vocab_index_;
};

// One example's embedding stack plus bookkeeping about unknown tokens
// (mapped to an all-zero row and flagged rather than rejected).
struct EmbeddedInput {
    std::vector<std::string> tokens;
    std::size_t n_tokens = 0;
    std::size_t dim = 0;
    Tensor stack;                // {N, D}, row t = embedding of token t
    std::vector<bool> unknown;   // per token
    bool any_unknown() const;
};

EmbeddedInput embed_input(const DiffModel& model, const std::vector<std::string>& tokens);

// Forward graph wiring. `input` is the {N,D} stack for text models or the
// {1,F} feature row for tabular/linear models.
struct GraphBindings {
    NodeId input = 0;
    NodeId output = 0;                  // shape {1,K}
    std::vector<NodeId> weight_nodes;   // aligned with DiffModel::weights
};

GraphBindings build_graph(Tape& tape, const DiffModel& model, const Tensor& input);

// Same wiring, but reusing weight leaves already on the tape; gradients of a
// loss that touches several forward passes then accumulate in one place.
GraphBindings build_graph(Tape& tape, const DiffModel& model, const Tensor& input,
                          const std::vector<NodeId>& reuse_weights);

// Model output as a flat K-vector. Softmax / sigmoid-pair heads return a
// probability vector on the K-simplex; the linear head returns a raw score.
Tensor predict(const DiffModel& model, const EmbeddedInput& input);
Tensor predict(const DiffModel& model, const std::vector<std::string>& tokens);
Tensor predict(const DiffModel& model, const std::vector<double>& features);

// K x (N*D) matrix of |d f_k / d e_i| over the flattened embedding stack
// (token-major: token t occupies columns [t*D, (t+1)*D)).
AbsJacobian abs_jacobian(const DiffModel& model, const EmbeddedInput& input);
// K x F over raw feature columns.
AbsJacobian abs_jacobian(const DiffModel& model, const std::vector<double>& features);

// Versioned text serialization with base-16 encoded IEEE-754 weights, so a
// save/load round trip reproduces predictions bit for bit.
std::string serialize_model(const DiffModel& model);
DiffModel deserialize_model(const std::string& text);
void save_model(const DiffModel& model, const std::string& path);
DiffModel load_model(const std::string& path);

// FNV-1a fingerprint of the canonical serialized form.
std::string model_fingerprint(const DiffModel& model);

}  // namespace predsens
