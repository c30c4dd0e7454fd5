#include "predsens/sensitivity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace predsens {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::P1: return "P1";
        case Variant::P2: return "P2";
        case Variant::P3: return "P3";
        case Variant::P4: return "P4";
        case Variant::P5: return "P5";
        case Variant::CF: return "CF";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "P1") return Variant::P1;
    if (name == "P2") return Variant::P2;
    if (name == "P3") return Variant::P3;
    if (name == "P4") return Variant::P4;
    if (name == "P5") return Variant::P5;
    if (name == "CF") return Variant::CF;
    throw ConfigError("unknown metric variant '" + name + "' (expected P1..P5 or CF)");
}

const char* v_status_name(VStatus s) {
    switch (s) {
        case VStatus::Ok: return "ok";
        case VStatus::NoGenderedTokens: return "no_gendered_tokens";
        case VStatus::DegenerateWeights: return "degenerate_weights";
    }
    return "?";
}

StochasticVector::StochasticVector(std::vector<double> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) {
        throw DataError("a stochastic vector cannot be empty");
    }
    double sum = 0.0;
    for (double e : entries_) {
        if (!(e >= 0.0)) {  // also rejects NaN
            throw DataError("stochastic vector entry is negative or non-finite");
        }
        sum += e;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw DataError("stochastic vector entries sum to " + std::to_string(sum) +
                        ", expected 1 within 1e-9");
    }
}

StochasticVector build_w_uniform(std::size_t k) {
    if (k == 0) throw DataError("cannot build a class-weight vector for 0 classes");
    return StochasticVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

StochasticVector build_v_uniform(std::size_t n_tokens, std::size_t dim) {
    std::size_t m = n_tokens * dim;
    if (m == 0) throw DataError("cannot build a column-weight vector over 0 columns");
    return StochasticVector(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

static std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

VBuild build_v_lexicon(const std::vector<std::string>& tokens,
                       const std::set<std::string>& lexicon, std::size_t dim) {
    if (tokens.empty() || dim == 0) {
        throw DataError("lexicon v requires at least one token and a positive embedding dim");
    }
    std::vector<std::size_t> matched;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (lexicon.count(lowercase(tokens[t]))) matched.push_back(t);
    }
    VBuild out;
    if (matched.empty()) {
        out.status = VStatus::NoGenderedTokens;
        return out;
    }
    std::vector<double> v(tokens.size() * dim, 0.0);
    double mass = 1.0 / (static_cast<double>(matched.size()) * static_cast<double>(dim));
    for (std::size_t t : matched) {
        for (std::size_t d = 0; d < dim; ++d) v[t * dim + d] = mass;
    }
    out.v.emplace(std::move(v));
    return out;
}

VBuild build_v_psm(const DiffModel& psm, const std::vector<std::string>& tokens,
                   std::size_t protected_class) {
    if (protected_class >= psm.num_classes()) {
        throw ConfigError("protected class index " + std::to_string(protected_class) +
                          " out of range for a PSM with " + std::to_string(psm.num_classes()) +
                          " outputs");
    }
    EmbeddedInput x = embed_input(psm, tokens);
    AbsJacobian jac = abs_jacobian(psm, x);
    // Sum over all protected-class output rows; for a binary PSM the two rows
    // of the absolute Jacobian coincide, so the normalization below makes the
    // result independent of which row carries the protected class.
    std::vector<double> raw(jac.cols, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < jac.rows; ++k) {
        for (std::size_t i = 0; i < jac.cols; ++i) {
            raw[i] += jac.at(k, i);
            total += jac.at(k, i);
        }
    }
    VBuild out;
    if (total == 0.0) {
        out.status = VStatus::DegenerateWeights;
        return out;
    }
    for (double& r : raw) r /= total;
    out.v.emplace(std::move(raw));
    return out;
}

VBuild apply_embedding_weights(const StochasticVector& v, const Tensor& stack) {
    if (v.size() != stack.size()) {
        throw DimensionError("embedding reweighting: v has " + std::to_string(v.size()) +
                             " entries but the embedding stack has " +
                             std::to_string(stack.size()));
    }
    std::vector<double> raw(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        raw[i] = std::fabs(stack.data[i]) * v[i];
        total += raw[i];
    }
    VBuild out;
    if (total == 0.0) {
        out.status = VStatus::DegenerateWeights;
        return out;
    }
    for (double& r : raw) r /= total;
    out.v.emplace(std::move(raw));
    return out;
}

std::vector<double> weighted_row(const StochasticVector& w, const AbsJacobian& jac) {
    if (w.size() != jac.rows) {
        throw DimensionError("class weights have " + std::to_string(w.size()) +
                             " entries but the Jacobian has " + std::to_string(jac.rows) +
                             " rows");
    }
    std::vector<double> row(jac.cols, 0.0);
    for (std::size_t k = 0; k < jac.rows; ++k) {
        for (std::size_t i = 0; i < jac.cols; ++i) {
            row[i] += w[k] * jac.at(k, i);
        }
    }
    return row;
}

double accumulated_sensitivity(const StochasticVector& w, const AbsJacobian& jac,
                               const StochasticVector& v) {
    if (w.size() != jac.rows) {
        throw DimensionError("class weights have " + std::to_string(w.size()) +
                             " entries but the Jacobian has " + std::to_string(jac.rows) +
                             " rows");
    }
    if (v.size() != jac.cols) {
        throw DimensionError("column weights have " + std::to_string(v.size()) +
                             " entries but the Jacobian has " + std::to_string(jac.cols) +
                             " columns");
    }
    double p = 0.0;
    for (std::size_t k = 0; k < jac.rows; ++k) {
        double row = 0.0;
        for (std::size_t i = 0; i < jac.cols; ++i) {
            row += jac.at(k, i) * v[i];
        }
        p += w[k] * row;
    }
    return p;
}

SubstitutionMap substitution_map_from_pairs(
    const std::vector<std::pair<std::string, std::string>>& entries) {
    SubstitutionMap m;
    for (const auto& [a_raw, b_raw] : entries) {
        std::string a = lowercase(a_raw), b = lowercase(b_raw);
        if (a == b) {
            throw DataError("substitution pair maps '" + a +
                            "' to itself; the counterfactual would equal the original");
        }
        auto insert = [&](const std::string& from, const std::string& to) {
            auto it = m.pairs.find(from);
            if (it != m.pairs.end() && it->second != to) {
                throw DataError("substitution map is not an involution: '" + from +
                                "' maps to both '" + it->second + "' and '" + to + "'");
            }
            m.pairs[from] = to;
        };
        insert(a, b);
        insert(b, a);
    }
    return m;
}

SubstitutionMap load_substitution_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open substitution map: " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
            line.find('\t', tab + 1) != std::string::npos) {
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected exactly two tab-separated tokens");
        }
        entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return substitution_map_from_pairs(entries);
}

std::vector<std::string> apply_substitutions(const std::vector<std::string>& tokens,
                                             const SubstitutionMap& map) {
    std::vector<std::string> out = tokens;
    for (std::string& t : out) {
        auto it = map.pairs.find(lowercase(t));
        if (it != map.pairs.end()) t = it->second;
    }
    return out;
}

CounterfactualOutcome counterfactual_score(const DiffModel& model,
                                           const std::vector<std::string>& tokens,
                                           const SubstitutionMap& map) {
    CounterfactualOutcome out;
    std::vector<std::string> swapped = apply_substitutions(tokens, map);
    out.substituted = swapped != tokens;
    if (!out.substituted) {
        return out;  // counterfactual equals the original; score stays 0
    }
    Tensor fa = predict(model, tokens);
    Tensor fb = predict(model, swapped);
    double s = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        s += std::fabs(fa.data[i] - fb.data[i]);
    }
    out.score = s;
    return out;
}

std::set<std::string> load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon: " + path);
    std::set<std::string> lex;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // trim surrounding whitespace
        auto b = line.find_first_not_of(" \t");
        auto e = line.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        lex.insert(lowercase(line.substr(b, e - b + 1)));
    }
    return lex;
}

SensitivityResult evaluate_variant(const VariantSpec& spec, const VariantInputs& inputs,
                                   const std::vector<std::string>& tokens) {
    if (inputs.task == nullptr) {
        throw ConfigError("variant evaluation requires a task model");
    }
    SensitivityResult res;
    res.variant = spec.variant;

    if (spec.variant == Variant::CF) {
        if (inputs.subst == nullptr) {
            throw ConfigError("variant CF requires a token substitution map");
        }
        CounterfactualOutcome cf = counterfactual_score(*inputs.task, tokens, *inputs.subst);
        res.score = cf.score;
        res.cf_no_substitution = !cf.substituted;
        return res;
    }

    const DiffModel& task = *inputs.task;
    EmbeddedInput x = embed_input(task, tokens);
    res.unknown_tokens = x.unknown;

    VBuild vb;
    switch (spec.variant) {
        case Variant::P1:
            vb.v.emplace(build_v_uniform(x.n_tokens, x.dim));
            break;
        case Variant::P2:
        case Variant::P3: {
            if (inputs.psm == nullptr) {
                throw ConfigError(std::string("variant ") + variant_name(spec.variant) +
                                  " requires a protected-status model");
            }
            if (inputs.psm->arch.embed_dim != task.arch.embed_dim) {
                throw DimensionError(std::string("variant ") + variant_name(spec.variant) +
                                     ": PSM embedding dim " +
                                     std::to_string(inputs.psm->arch.embed_dim) +
                                     " does not match task model dim " +
                                     std::to_string(task.arch.embed_dim));
            }
            vb = build_v_psm(*inputs.psm, tokens, spec.protected_class);
            if (spec.variant == Variant::P3 && vb.status == VStatus::Ok) {
                vb = apply_embedding_weights(*vb.v, x.stack);
            }
            break;
        }
        case Variant::P4:
        case Variant::P5: {
            if (inputs.lexicon == nullptr) {
                throw ConfigError(std::string("variant ") + variant_name(spec.variant) +
                                  " requires a gendered-token lexicon");
            }
            vb = build_v_lexicon(tokens, *inputs.lexicon, x.dim);
            if (spec.variant == Variant::P5 && vb.status == VStatus::Ok) {
                vb = apply_embedding_weights(*vb.v, x.stack);
            }
            break;
        }
        case Variant::CF:
            break;  // handled above
    }

    res.v_status = vb.status;
    if (vb.status != VStatus::Ok) {
        res.skipped = (inputs.policy == MissingGenderPolicy::Exclude);
        res.score = 0.0;
        return res;
    }

    AbsJacobian jac = abs_jacobian(task, x);
    StochasticVector w = build_w_uniform(jac.rows);
    res.score = accumulated_sensitivity(w, jac, *vb.v);
    res.contribution = weighted_row(w, jac);
    res.v = vb.v->entries();
    return res;
}

}  // namespace predsens
