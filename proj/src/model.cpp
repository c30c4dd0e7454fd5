#include "predsens/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace predsens {

using ordered_json = nlohmann::ordered_json;

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::TextSoftmax: return "text_softmax";
        case ModelKind::TabularSoftmax: return "tabular_softmax";
        case ModelKind::TabularSigmoidPair: return "tabular_sigmoid_pair";
        case ModelKind::LinearScalar: return "linear_scalar";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "text_softmax") return ModelKind::TextSoftmax;
    if (name == "tabular_softmax") return ModelKind::TabularSoftmax;
    if (name == "tabular_sigmoid_pair") return ModelKind::TabularSigmoidPair;
    if (name == "linear_scalar") return ModelKind::LinearScalar;
    throw DataError("unknown model kind '" + name + "'");
}

std::size_t DiffModel::num_classes() const {
    switch (arch.kind) {
        case ModelKind::TabularSigmoidPair: return 2;
        case ModelKind::LinearScalar: return 1;
        default: return arch.classes;
    }
}

void DiffModel::rebuild_vocab_index() {
    vocab_index_.clear();
    for (std::size_t i = 0; i < arch.vocab.size(); ++i) {
        vocab_index_[arch.vocab[i]] = i;
    }
}

std::optional<std::size_t> DiffModel::vocab_row(const std::string& token) const {
    auto it = vocab_index_.find(token);
    if (it == vocab_index_.end()) return std::nullopt;
    return it->second;
}

bool EmbeddedInput::any_unknown() const {
    return std::any_of(unknown.begin(), unknown.end(), [](bool b) { return b; });
}

EmbeddedInput embed_input(const DiffModel& model, const std::vector<std::string>& tokens) {
    if (!model.arch.is_text()) {
        throw DataError("embed_input requires a text model");
    }
    if (tokens.empty()) {
        throw DataError("cannot embed an example with zero tokens");
    }
    EmbeddedInput in;
    in.tokens = tokens;
    in.n_tokens = tokens.size();
    in.dim = model.arch.embed_dim;
    in.stack = Tensor::zeros({in.n_tokens, in.dim});
    in.unknown.assign(in.n_tokens, false);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        auto row = model.vocab_row(tokens[t]);
        if (!row) {
            in.unknown[t] = true;  // stays the all-zero row
            continue;
        }
        for (std::size_t d = 0; d < in.dim; ++d) {
            in.stack.at(t, d) = model.embedding.at(*row, d);
        }
    }
    return in;
}

GraphBindings build_graph(Tape& tape, const DiffModel& model, const Tensor& input) {
    return build_graph(tape, model, input, {});
}

GraphBindings build_graph(Tape& tape, const DiffModel& model, const Tensor& input,
                          const std::vector<NodeId>& reuse_weights) {
    GraphBindings gb;
    gb.input = tape.leaf(input);

    NodeId h;
    if (model.arch.is_text()) {
        // Mean pooling as a matmul with a constant 1/N row keeps the op set minimal.
        std::size_t n = input.shape.at(0);
        h = tape.matmul(tape.leaf(Tensor({1, n}, std::vector<double>(n, 1.0 / static_cast<double>(n)))),
                        gb.input);
    } else {
        h = gb.input;  // {1, F}
    }

    if (model.weights.empty()) {
        throw StateError("model has no weights; was it trained or loaded?");
    }
    if (!reuse_weights.empty() && reuse_weights.size() != model.weights.size()) {
        throw StateError("reused weight node list does not match the model's weight count");
    }
    auto weight_leaf = [&](std::size_t i) {
        return reuse_weights.empty() ? tape.leaf(model.weights[i]) : reuse_weights[i];
    };

    if (model.arch.kind == ModelKind::LinearScalar) {
        NodeId w = weight_leaf(0);
        gb.weight_nodes.push_back(w);
        gb.output = tape.matmul(h, w);  // {1,1}
        return gb;
    }

    std::size_t n_layers = model.weights.size() / 2;
    for (std::size_t l = 0; l < n_layers; ++l) {
        NodeId w = weight_leaf(2 * l);
        NodeId b = weight_leaf(2 * l + 1);
        gb.weight_nodes.push_back(w);
        gb.weight_nodes.push_back(b);
        h = tape.add(tape.matmul(h, w), b);
        if (l + 1 < n_layers) {
            h = tape.sigmoid(h);
        }
    }

    switch (model.arch.kind) {
        case ModelKind::TextSoftmax:
        case ModelKind::TabularSoftmax:
            gb.output = tape.softmax(h);
            break;
        case ModelKind::TabularSigmoidPair: {
            // [f, 1-f] realized as f * [1,-1] + [0,1] within the primitive op set.
            NodeId f = tape.sigmoid(h);  // {1,1}
            NodeId expand = tape.matmul(f, tape.leaf(Tensor({1, 2}, {1.0, -1.0})));
            gb.output = tape.add(expand, tape.leaf(Tensor({1, 2}, {0.0, 1.0})));
            break;
        }
        default:
            throw StateError("unhandled model kind in build_graph");
    }
    return gb;
}

static Tensor feature_row(const DiffModel& model, const std::vector<double>& features) {
    if (model.arch.is_text()) {
        throw DataError("feature-vector input given to a text model");
    }
    if (features.size() != model.arch.feature_dim) {
        throw DimensionError("feature vector has " + std::to_string(features.size()) +
                             " entries, model expects " + std::to_string(model.arch.feature_dim));
    }
    return Tensor::row(features);
}

Tensor predict(const DiffModel& model, const EmbeddedInput& input) {
    Tape tape;
    GraphBindings gb = build_graph(tape, model, input.stack);
    return Tensor::vec(tape.value(gb.output).data);
}

Tensor predict(const DiffModel& model, const std::vector<std::string>& tokens) {
    return predict(model, embed_input(model, tokens));
}

Tensor predict(const DiffModel& model, const std::vector<double>& features) {
    Tape tape;
    GraphBindings gb = build_graph(tape, model, feature_row(model, features));
    return Tensor::vec(tape.value(gb.output).data);
}

AbsJacobian abs_jacobian(const DiffModel& model, const EmbeddedInput& input) {
    Tape tape;
    GraphBindings gb = build_graph(tape, model, input.stack);
    return abs_jacobian_of(tape, gb.output, gb.input);
}

AbsJacobian abs_jacobian(const DiffModel& model, const std::vector<double>& features) {
    Tape tape;
    GraphBindings gb = build_graph(tape, model, feature_row(model, features));
    return abs_jacobian_of(tape, gb.output, gb.input);
}

// --- serialization ---------------------------------------------------------

static ordered_json tensor_to_json(const std::string& name, const Tensor& t) {
    ordered_json j;
    j["name"] = name;
    j["shape"] = t.shape;
    j["hex"] = encode_doubles_hex(t.data);
    return j;
}

static Tensor tensor_from_json(const ordered_json& j) {
    std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> data = decode_doubles_hex(j.at("hex").get<std::string>());
    if (Tensor::numel(shape) != data.size()) {
        throw DataError("model weight '" + j.value("name", std::string("?")) +
                        "' has inconsistent shape and data length");
    }
    return Tensor(std::move(shape), std::move(data));
}

std::string serialize_model(const DiffModel& model) {
    ordered_json j;
    j["format"] = "predsens-model";
    j["version"] = 1;
    ordered_json arch;
    arch["kind"] = model_kind_name(model.arch.kind);
    arch["embed_dim"] = model.arch.embed_dim;
    arch["feature_dim"] = model.arch.feature_dim;
    arch["classes"] = model.arch.classes;
    arch["hidden"] = model.arch.hidden;
    arch["active_features"] = model.arch.active_features;
    arch["vocab"] = model.arch.vocab;
    j["arch"] = arch;

    ordered_json weights = ordered_json::array();
    if (model.arch.is_text()) {
        weights.push_back(tensor_to_json("embedding", model.embedding));
    }
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        std::string name = (i % 2 == 0 ? "layer" + std::to_string(i / 2) + ".weight"
                                       : "layer" + std::to_string(i / 2) + ".bias");
        if (model.arch.kind == ModelKind::LinearScalar) name = "theta";
        weights.push_back(tensor_to_json(name, model.weights[i]));
    }
    j["weights"] = weights;

    ordered_json s;
    s["train_accuracy"] = model.summary.train_accuracy;
    s["val_accuracy"] = model.summary.val_accuracy;
    s["per_class_accuracy"] = model.summary.per_class_accuracy;
    s["epochs"] = model.summary.epochs;
    s["seed"] = model.summary.seed;
    s["lipschitz_bound"] = model.summary.lipschitz_bound;
    s["norm_order"] = model.summary.norm_order;
    s["max_constraint_violation"] = model.summary.max_constraint_violation;
    s["warnings"] = model.summary.warnings;
    j["summary"] = s;

    return j.dump(2) + "\n";
}

DiffModel deserialize_model(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("model file is not valid structured text: ") + e.what());
    }
    if (j.value("format", std::string()) != "predsens-model") {
        throw DataError("model file is missing the 'predsens-model' format marker");
    }
    if (j.value("version", 0) != 1) {
        throw DataError("unsupported model file version " + std::to_string(j.value("version", 0)));
    }
    DiffModel m;
    const auto& arch = j.at("arch");
    m.arch.kind = model_kind_from_name(arch.at("kind").get<std::string>());
    m.arch.embed_dim = arch.at("embed_dim").get<std::size_t>();
    m.arch.feature_dim = arch.at("feature_dim").get<std::size_t>();
    m.arch.classes = arch.at("classes").get<std::size_t>();
    m.arch.hidden = arch.at("hidden").get<std::vector<std::size_t>>();
    m.arch.active_features = arch.at("active_features").get<std::vector<std::size_t>>();
    m.arch.vocab = arch.at("vocab").get<std::vector<std::string>>();

    const auto& weights = j.at("weights");
    std::size_t idx = 0;
    if (m.arch.is_text()) {
        if (weights.empty()) throw DataError("text model file has no embedding tensor");
        m.embedding = tensor_from_json(weights[idx++]);
        if (m.embedding.rank() != 2 || m.embedding.shape[0] != m.arch.vocab.size() ||
            m.embedding.shape[1] != m.arch.embed_dim) {
            throw DataError("embedding tensor shape does not match vocabulary/dimension");
        }
    }
    for (; idx < weights.size(); ++idx) {
        m.weights.push_back(tensor_from_json(weights[idx]));
    }

    const auto& s = j.at("summary");
    m.summary.train_accuracy = s.at("train_accuracy").get<double>();
    m.summary.val_accuracy = s.at("val_accuracy").get<double>();
    m.summary.per_class_accuracy = s.at("per_class_accuracy").get<std::vector<double>>();
    m.summary.epochs = s.at("epochs").get<std::size_t>();
    m.summary.seed = s.at("seed").get<std::uint64_t>();
    m.summary.lipschitz_bound = s.at("lipschitz_bound").get<double>();
    m.summary.norm_order = s.at("norm_order").get<int>();
    m.summary.max_constraint_violation = s.at("max_constraint_violation").get<double>();
    m.summary.warnings = s.at("warnings").get<std::vector<std::string>>();

    m.rebuild_vocab_index();
    return m;
}

void save_model(const DiffModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open model file for writing: " + path);
    }
    out << serialize_model(model);
    if (!out) {
        throw DataError("failed while writing model file: " + path);
    }
}

DiffModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open model file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

std::string model_fingerprint(const DiffModel& model) {
    return to_hex64(fnv1a64(serialize_model(model)));
}

}  // namespace predsens
