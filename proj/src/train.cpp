#include "predsens/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace predsens {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("training config field 'epochs' must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("training config field 'lr' must be > 0");
    if (batch < 1) throw ConfigError("training config field 'batch' must be >= 1");
    if (optimizer != "sgd") {
        throw ConfigError("training config field 'optimizer' must be 'sgd' (got '" + optimizer + "')");
    }
    if (lipschitz_bound < 0.0) {
        throw ConfigError("training config field 'lipschitz_bound' must be positive when set");
    }
    if (norm_order != 1 && norm_order != 2) {
        throw ConfigError("training config field 'norm_order' must be 1 or 2");
    }
    if (val_fraction < 0.0 || val_fraction > 0.9) {
        throw ConfigError("training config field 'val_fraction' must lie in [0, 0.9]");
    }
}

namespace {

int label_of(const LabeledExample& ex, bool against_protected) {
    if (!against_protected) return ex.label;
    if (!ex.protected_label) {
        throw DataError("example lacks a protected label required for PSM training/evaluation");
    }
    return *ex.protected_label;
}

std::size_t argmax(const Tensor& t) {
    return static_cast<std::size_t>(
        std::max_element(t.data.begin(), t.data.end()) - t.data.begin());
}

Tensor predict_example(const DiffModel& model, const LabeledExample& ex) {
    if (model.arch.is_text()) return predict(model, ex.tokens);
    return predict(model, ex.features);
}

// Feature columns outside arch.active_features (when the list is non-empty)
// are structurally severed: their first-layer rows start at zero and any
// gradient flowing into them is discarded before the update step.
std::vector<bool> masked_rows(const ModelArch& arch) {
    std::vector<bool> masked(arch.feature_dim, false);
    if (arch.is_text() || arch.active_features.empty()) return masked;
    masked.assign(arch.feature_dim, true);
    for (std::size_t f : arch.active_features) {
        if (f >= arch.feature_dim) {
            throw ConfigError("active feature index " + std::to_string(f) +
                              " out of range for feature_dim " + std::to_string(arch.feature_dim));
        }
        masked[f] = false;
    }
    return masked;
}

DiffModel init_model(ModelArch arch, std::uint64_t seed) {
    DiffModel m;
    std::mt19937_64 rng(derive_seed(seed, 0x11217));
    std::normal_distribution<double> unit(0.0, 1.0);

    if (arch.kind == ModelKind::LinearScalar) {
        if (arch.feature_dim == 0) arch.feature_dim = 1;
        m.arch = std::move(arch);
        m.weights.push_back(Tensor::zeros({m.arch.feature_dim, 1}));
        return m;
    }

    std::vector<std::size_t> dims;
    dims.push_back(arch.is_text() ? arch.embed_dim : arch.feature_dim);
    for (std::size_t h : arch.hidden) dims.push_back(h);
    dims.push_back(arch.kind == ModelKind::TabularSigmoidPair ? 1 : arch.classes);
    for (std::size_t d : dims) {
        if (d == 0) throw ConfigError("model architecture contains a zero-width layer");
    }

    m.arch = std::move(arch);
    if (m.arch.is_text()) {
        m.embedding = Tensor::zeros({m.arch.vocab.size(), m.arch.embed_dim});
        for (double& v : m.embedding.data) v = 0.5 * unit(rng);
        m.rebuild_vocab_index();
    }

    std::vector<bool> masked = masked_rows(m.arch);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Tensor w = Tensor::zeros({dims[l], dims[l + 1]});
        double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (double& v : w.data) v = scale * unit(rng);
        if (l == 0 && !m.arch.is_text()) {
            for (std::size_t r = 0; r < dims[0]; ++r) {
                if (masked[r]) {
                    for (std::size_t c = 0; c < dims[1]; ++c) w.at(r, c) = 0.0;
                }
            }
        }
        m.weights.push_back(std::move(w));
        m.weights.push_back(Tensor::zeros({1, dims[l + 1]}));  // bias
    }
    return m;
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0x5917));
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
    Split s;
    s.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
    s.val.assign(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
    return s;
}

Tensor input_tensor(const DiffModel& model, const LabeledExample& ex) {
    if (model.arch.is_text()) {
        return embed_input(model, ex.tokens).stack;
    }
    if (ex.features.size() != model.arch.feature_dim) {
        throw DimensionError("example feature vector has " + std::to_string(ex.features.size()) +
                             " entries, model expects " + std::to_string(model.arch.feature_dim));
    }
    return Tensor::row(ex.features);
}

// Cross-entropy -log p[label] assembled from primitive ops.
NodeId cross_entropy(Tape& tape, NodeId output, std::size_t k, int label) {
    Tensor onehot = Tensor::zeros({1, k});
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw DataError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(k) + " classes");
    }
    onehot.data[static_cast<std::size_t>(label)] = 1.0;
    NodeId picked = tape.sum(tape.mul(output, tape.leaf(onehot)));
    return tape.mul(tape.log(picked), tape.leaf(Tensor::scalar(-1.0)));
}

struct GradAccum {
    std::vector<Tensor> weights;
    Tensor embedding;
    std::size_t count = 0;

    explicit GradAccum(const DiffModel& m) {
        for (const Tensor& w : m.weights) weights.push_back(Tensor::zeros(w.shape));
        if (m.arch.is_text()) embedding = Tensor::zeros(m.embedding.shape);
    }
    void reset() {
        for (Tensor& w : weights) std::fill(w.data.begin(), w.data.end(), 0.0);
        std::fill(embedding.data.begin(), embedding.data.end(), 0.0);
        count = 0;
    }
};

void accumulate_example(const DiffModel& model, GradAccum& acc, Tape& tape,
                        const GraphBindings& gb, const LabeledExample& ex) {
    for (std::size_t i = 0; i < gb.weight_nodes.size(); ++i) {
        const Tensor& g = tape.grad(gb.weight_nodes[i]);
        for (std::size_t j = 0; j < g.size(); ++j) acc.weights[i].data[j] += g.data[j];
    }
    if (model.arch.is_text()) {
        const Tensor& gs = tape.grad(gb.input);  // {N, D}
        for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
            auto row = model.vocab_row(ex.tokens[t]);
            if (!row) continue;  // unknown token: no embedding row to update
            for (std::size_t d = 0; d < model.arch.embed_dim; ++d) {
                acc.embedding.at(*row, d) += gs.at(t, d);
            }
        }
    }
    acc.count += 1;
}

void apply_step(DiffModel& model, GradAccum& acc, double lr, const std::vector<bool>& masked) {
    if (acc.count == 0) return;
    double scale = lr / static_cast<double>(acc.count);
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        if (i == 0 && !model.arch.is_text() && model.arch.kind != ModelKind::LinearScalar) {
            std::size_t c = model.weights[0].cols();
            for (std::size_t r = 0; r < model.weights[0].rows(); ++r) {
                if (masked[r]) {
                    for (std::size_t j = 0; j < c; ++j) acc.weights[0].at(r, j) = 0.0;
                }
            }
        }
        for (std::size_t j = 0; j < model.weights[i].size(); ++j) {
            model.weights[i].data[j] -= scale * acc.weights[i].data[j];
        }
    }
    if (model.arch.is_text()) {
        for (std::size_t j = 0; j < model.embedding.size(); ++j) {
            model.embedding.data[j] -= scale * acc.embedding.data[j];
        }
    }
}

void check_classifier_data(const std::vector<LabeledExample>& data, bool against_protected,
                           std::size_t k) {
    if (data.empty()) throw DataError("training data is empty");
    std::set<int> labels;
    for (const auto& ex : data) labels.insert(label_of(ex, against_protected));
    if (labels.size() < 2) {
        throw DataError(against_protected
                            ? "protected label is constant; cannot train a protected-status model"
                            : "training data contains fewer than 2 distinct labels");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= k) {
            throw DataError("label " + std::to_string(l) + " out of range for " +
                            std::to_string(k) + " classes");
        }
    }
}

DiffModel train_softmax_family(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                               ModelArch arch, bool against_protected) {
    cfg.validate();
    if (arch.is_text()) {
        if (arch.vocab.empty()) {
            std::set<std::string> vocab;
            for (const auto& ex : data) {
                if (ex.tokens.empty()) throw DataError("text example has zero tokens");
                vocab.insert(ex.tokens.begin(), ex.tokens.end());
            }
            arch.vocab.assign(vocab.begin(), vocab.end());  // sorted and deduplicated
        }
    } else if (arch.feature_dim == 0) {
        arch.feature_dim = data.front().features.size();
    }
    std::size_t k = arch.kind == ModelKind::TabularSigmoidPair ? 2 : arch.classes;
    check_classifier_data(data, against_protected, k);

    DiffModel model = init_model(arch, cfg.seed);
    std::vector<bool> masked = masked_rows(model.arch);
    Split split = split_indices(data.size(), cfg.val_fraction, cfg.seed);
    if (split.train.empty()) throw DataError("validation split leaves no training examples");

    GradAccum acc(model);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x40c7));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = split.train;
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            acc.reset();
            std::size_t stop = std::min(order.size(), start + cfg.batch);
            for (std::size_t i = start; i < stop; ++i) {
                const LabeledExample& ex = data[order[i]];
                Tape tape;
                GraphBindings gb = build_graph(tape, model, input_tensor(model, ex));
                NodeId loss = cross_entropy(tape, gb.output, k, label_of(ex, against_protected));
                tape.backward(loss, 0);
                accumulate_example(model, acc, tape, gb, ex);
            }
            apply_step(model, acc, cfg.lr, masked);
        }
    }

    auto subset_accuracy = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return -1.0;
        std::size_t hits = 0;
        for (std::size_t i : idx) {
            if (argmax(predict_example(model, data[i])) ==
                static_cast<std::size_t>(label_of(data[i], against_protected))) {
                ++hits;
            }
        }
        return static_cast<double>(hits) / static_cast<double>(idx.size());
    };
    model.summary.train_accuracy = subset_accuracy(split.train);
    model.summary.val_accuracy = subset_accuracy(split.val);
    model.summary.epochs = cfg.epochs;
    model.summary.seed = cfg.seed;

    const std::vector<std::size_t>& eval_idx = split.val.empty() ? split.train : split.val;
    std::vector<std::size_t> hits(k, 0), totals(k, 0);
    for (std::size_t i : eval_idx) {
        auto cls = static_cast<std::size_t>(label_of(data[i], against_protected));
        totals[cls] += 1;
        if (argmax(predict_example(model, data[i])) == cls) hits[cls] += 1;
    }
    model.summary.per_class_accuracy.assign(k, -1.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (totals[c] > 0) {
            model.summary.per_class_accuracy[c] =
                static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
        }
    }
    return model;
}

double lp_distance(const std::vector<double>& a, const std::vector<double>& b, int p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a[i] - b[i]);
        acc += (p == 1) ? d : d * d;
    }
    return p == 1 ? acc : std::sqrt(acc);
}

void project_linear(Tensor& theta, double bound, int p) {
    if (p == 1) {
        // Scalar output, L1 input metric: |theta_i| <= bound componentwise.
        for (double& v : theta.data) v = std::clamp(v, -bound, bound);
    } else {
        double norm = 0.0;
        for (double v : theta.data) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > bound && norm > 0.0) {
            double s = bound / norm;
            for (double& v : theta.data) v *= s;
        }
    }
}

DiffModel train_linear_lipschitz(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                                 ModelArch arch) {
    if (arch.feature_dim == 0) arch.feature_dim = data.front().features.size();
    std::size_t n = data.size();
    std::size_t f = arch.feature_dim;

    Tensor x = Tensor::zeros({n, f});
    Tensor neg_y = Tensor::zeros({n, 1});
    double curvature = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (data[i].features.size() != f) {
            throw DimensionError("inconsistent feature dimension in training data");
        }
        for (std::size_t j = 0; j < f; ++j) {
            x.at(i, j) = data[i].features[j];
            curvature += data[i].features[j] * data[i].features[j];
        }
        neg_y.at(i, 0) = -data[i].target;
    }
    curvature *= 2.0 / static_cast<double>(n);
    if (curvature <= 0.0) {
        throw DataError("all feature vectors are zero; the linear fit is unconstrained by data");
    }

    DiffModel model = init_model(arch, cfg.seed);
    // Full-batch gradient descent on mean squared error. The step is the
    // configured rate scaled by the quadratic's curvature bound, so the fixed
    // default contracts geometrically; each step is followed by projection
    // onto the constraint set.
    double step = cfg.lr / curvature;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tape tape;
        GraphBindings gb = build_graph(tape, model, x);  // {n,1}
        NodeId diff = tape.add(gb.output, tape.leaf(neg_y));
        NodeId loss = tape.mean(tape.mul(diff, diff));
        tape.backward(loss, 0);
        const Tensor& g = tape.grad(gb.weight_nodes[0]);
        for (std::size_t j = 0; j < model.weights[0].size(); ++j) {
            model.weights[0].data[j] -= step * g.data[j];
        }
        project_linear(model.weights[0], cfg.lipschitz_bound, cfg.norm_order);
    }
    model.summary.epochs = cfg.epochs;
    model.summary.seed = cfg.seed;
    return model;
}

}  // namespace

DiffModel train_classifier(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                           ModelArch arch) {
    if (arch.kind == ModelKind::LinearScalar) {
        throw ConfigError("train_classifier expects a classifier head; use train_lipschitz for "
                          "the linear scalar model");
    }
    return train_softmax_family(data, cfg, std::move(arch), /*against_protected=*/false);
}

DiffModel train_psm(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                    ModelArch arch) {
    if (arch.kind == ModelKind::LinearScalar) {
        throw ConfigError("a protected-status model must be a classifier");
    }
    return train_softmax_family(data, cfg, std::move(arch), /*against_protected=*/true);
}

double max_lipschitz_ratio(const DiffModel& model, const std::vector<LabeledExample>& data,
                           int norm_order, std::uint64_t seed) {
    std::size_t n = data.size();
    if (n < 2) return 0.0;
    std::vector<Tensor> outputs(n);
    for (std::size_t i = 0; i < n; ++i) outputs[i] = predict_example(model, data[i]);

    auto pair_ratio = [&](std::size_t i, std::size_t j) {
        double d = lp_distance(data[i].features, data[j].features, norm_order);
        if (d == 0.0) return 0.0;  // identical inputs map to identical outputs
        double dd = lp_distance(outputs[i].data, outputs[j].data, norm_order);
        return dd / d;
    };

    double worst = 0.0;
    if (n <= 200) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                worst = std::max(worst, pair_ratio(i, j));
            }
        }
    } else {
        std::mt19937_64 rng(derive_seed(seed, 0x11b5));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t s = 0; s < 20000; ++s) {
            std::size_t i = pick(rng), j = pick(rng);
            if (i == j) continue;
            worst = std::max(worst, pair_ratio(i, j));
        }
    }
    return worst;
}

DiffModel train_lipschitz(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                          ModelArch arch) {
    cfg.validate();
    if (!(cfg.lipschitz_bound > 0.0)) {
        throw ConfigError("training config field 'lipschitz_bound' must be > 0 for constrained "
                          "training");
    }
    if (data.empty()) throw DataError("training data is empty");
    for (const auto& ex : data) {
        if (!ex.tokens.empty()) {
            throw DataError("Lipschitz-constrained training operates on feature-vector data");
        }
    }

    if (arch.kind == ModelKind::LinearScalar) {
        DiffModel model = train_linear_lipschitz(data, cfg, std::move(arch));
        model.summary.lipschitz_bound = cfg.lipschitz_bound;
        model.summary.norm_order = cfg.norm_order;
        model.summary.max_constraint_violation = std::max(
            0.0, max_lipschitz_ratio(model, data, cfg.norm_order) - cfg.lipschitz_bound);
        return model;
    }

    // Multi-parameter model: cross-entropy plus an escalating hinge penalty on
    // sampled pair constraints, verified after training.
    if (arch.feature_dim == 0) arch.feature_dim = data.front().features.size();
    std::size_t k = arch.kind == ModelKind::TabularSigmoidPair ? 2 : arch.classes;
    check_classifier_data(data, false, k);

    DiffModel model = init_model(arch, cfg.seed);
    std::vector<bool> masked = masked_rows(model.arch);
    double l_bound = cfg.lipschitz_bound;
    int p = cfg.norm_order;
    double lambda = 10.0;

    GradAccum acc(model);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x40c7));
    for (int round = 0; round < 3; ++round) {
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::vector<std::size_t> order(data.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
                acc.reset();
                std::size_t stop = std::min(order.size(), start + cfg.batch);
                for (std::size_t i = start; i < stop; i += 2) {
                    const LabeledExample& ea = data[order[i]];
                    Tape tape;
                    GraphBindings ga = build_graph(tape, model, input_tensor(model, ea));
                    NodeId loss = cross_entropy(tape, ga.output, k, ea.label);
                    if (i + 1 < stop) {
                        const LabeledExample& eb = data[order[i + 1]];
                        GraphBindings gbb =
                            build_graph(tape, model, input_tensor(model, eb), ga.weight_nodes);
                        loss = tape.add(loss, cross_entropy(tape, gbb.output, k, eb.label));
                        // diff = f(a) - f(b); hinge on the Lp constraint margin.
                        NodeId neg =
                            tape.mul(gbb.output, tape.leaf(Tensor({1, k}, std::vector<double>(k, -1.0))));
                        NodeId diff = tape.add(ga.output, neg);
                        double d_in = lp_distance(ea.features, eb.features, p);
                        NodeId z;
                        if (p == 1) {
                            NodeId dist = tape.sum(tape.abs(diff));
                            z = tape.add(dist, tape.leaf(Tensor::scalar(-l_bound * d_in)));
                        } else {
                            NodeId dist_sq = tape.sum(tape.mul(diff, diff));
                            z = tape.add(dist_sq,
                                         tape.leaf(Tensor::scalar(-l_bound * l_bound * d_in * d_in)));
                        }
                        // relu(z) = (z + |z|)/2, squared for a smooth-ish penalty
                        NodeId relu = tape.mul(tape.add(z, tape.abs(z)), tape.leaf(Tensor::scalar(0.5)));
                        NodeId pen = tape.mul(tape.mul(relu, relu), tape.leaf(Tensor::scalar(lambda)));
                        loss = tape.add(loss, pen);
                        tape.backward(loss, 0);
                        accumulate_example(model, acc, tape, ga, ea);
                        // Second graph's weight grads landed on the shared leaves;
                        // only per-example input scatter remains.
                        acc.count += 1;
                    } else {
                        tape.backward(loss, 0);
                        accumulate_example(model, acc, tape, ga, ea);
                    }
                }
                apply_step(model, acc, cfg.lr, masked);
            }
        }
        double violation =
            std::max(0.0, max_lipschitz_ratio(model, data, p) - l_bound);
        model.summary.max_constraint_violation = violation;
        if (violation <= 1e-6) break;
        lambda *= 10.0;
        if (round == 2) {
            model.summary.warnings.push_back(
                "constraint not satisfied to 1e-6 after penalty escalation; largest violation " +
                std::to_string(violation));
        }
    }

    model.summary.train_accuracy = accuracy(model, data);
    model.summary.epochs = cfg.epochs;
    model.summary.seed = cfg.seed;
    model.summary.lipschitz_bound = l_bound;
    model.summary.norm_order = p;
    return model;
}

double accuracy(const DiffModel& model, const std::vector<LabeledExample>& data,
                bool against_protected) {
    if (data.empty()) throw DataError("cannot evaluate accuracy on empty data");
    std::size_t hits = 0;
    for (const auto& ex : data) {
        if (argmax(predict_example(model, ex)) ==
            static_cast<std::size_t>(label_of(ex, against_protected))) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> per_class_accuracy(const DiffModel& model,
                                       const std::vector<LabeledExample>& data,
                                       bool against_protected) {
    if (data.empty()) throw DataError("cannot evaluate accuracy on empty data");
    std::size_t k = model.num_classes();
    std::vector<std::size_t> hits(k, 0), totals(k, 0);
    for (const auto& ex : data) {
        auto cls = static_cast<std::size_t>(label_of(ex, against_protected));
        if (cls >= k) throw DataError("label out of range during evaluation");
        totals[cls] += 1;
        if (argmax(predict_example(model, ex)) == cls) hits[cls] += 1;
    }
    std::vector<double> acc(k, -1.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (totals[c] > 0) acc[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    }
    return acc;
}

std::vector<LabeledExample> downsample_class(const std::vector<LabeledExample>& data,
                                             int protected_class, double keep_fraction,
                                             std::uint64_t seed) {
    if (keep_fraction < 0.0 || keep_fraction > 1.0) {
        throw ConfigError("keep_fraction must lie in [0, 1]");
    }
    std::mt19937_64 rng(derive_seed(seed, 0xd0c5));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<LabeledExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
        bool in_class = ex.protected_label && *ex.protected_label == protected_class;
        double draw = unit(rng);  // drawn for every row to keep selection stable
        if (!in_class || draw < keep_fraction) {
            out.push_back(ex);
        }
    }
    return out;
}

}  // namespace predsens
