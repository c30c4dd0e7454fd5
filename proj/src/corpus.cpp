#include "predsens/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

namespace predsens {

using ordered_json = nlohmann::ordered_json;

namespace {

TextRecord record_from_json(const ordered_json& j, const std::string& origin, std::size_t lineno) {
    auto fail = [&](const std::string& what) -> DataError {
        return DataError(origin + ":" + std::to_string(lineno) + ": " + what);
    };
    TextRecord r;
    if (!j.is_object()) throw fail("record line is not an object");
    if (!j.contains("id") || !j["id"].is_string()) throw fail("missing or non-string field 'id'");
    r.id = j["id"].get<std::string>();
    if (!j.contains("tokens") || !j["tokens"].is_array()) {
        throw fail("missing or non-array field 'tokens'");
    }
    for (const auto& t : j["tokens"]) {
        if (!t.is_string()) throw fail("field 'tokens' contains a non-string entry");
        r.tokens.push_back(t.get<std::string>());
    }
    if (!j.contains("label") || !j["label"].is_number_integer()) {
        throw fail("missing or non-integer field 'label'");
    }
    r.label = j["label"].get<int>();
    if (j.contains("protected") && !j["protected"].is_null()) {
        if (!j["protected"].is_number_integer()) throw fail("field 'protected' must be an integer");
        r.protected_label = j["protected"].get<int>();
    }
    if (j.contains("annotations") && !j["annotations"].is_null()) {
        if (!j["annotations"].is_array()) throw fail("field 'annotations' must be an array");
        for (const auto& a : j["annotations"]) {
            if (!a.is_number_integer()) throw fail("field 'annotations' contains a non-integer");
            r.annotations.push_back(a.get<int>());
        }
    }
    return r;
}

ordered_json record_to_json(const TextRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens;
    j["label"] = r.label;
    if (r.protected_label) {
        j["protected"] = *r.protected_label;
    } else {
        j["protected"] = nullptr;
    }
    j["annotations"] = r.annotations;
    return j;
}

}  // namespace

std::vector<TextRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file: " + path);
    std::vector<TextRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": line is not valid structured text: " + e.what());
        }
        out.push_back(record_from_json(j, path, lineno));
    }
    return out;
}

void save_records(const std::vector<TextRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open data file for writing: " + path);
    for (const auto& r : records) {
        out << record_to_json(r).dump() << "\n";
    }
    if (!out) throw DataError("failed while writing data file: " + path);
}

void ToyCorpusSpec::validate() const {
    if (n < 1) throw ConfigError("toy corpus field 'n' must be >= 1");
    if (classes < 2) throw ConfigError("toy corpus field 'classes' must be >= 2");
    if (filler_vocab < 1) throw ConfigError("toy corpus field 'filler_vocab' must be >= 1");
    if (topic_vocab_per_class < 1) {
        throw ConfigError("toy corpus field 'topic_vocab_per_class' must be >= 1");
    }
    if (topic_tokens_per_example < 1) {
        throw ConfigError("toy corpus field 'topic_tokens_per_example' must be >= 1");
    }
    if (tokens_per_example < topic_tokens_per_example + planted.size() + 1) {
        throw ConfigError("toy corpus field 'tokens_per_example' too small to hold topic copy, "
                          "planted tokens, and filler");
    }
    if (bias_rate < 0.0 || bias_rate > 1.0) {
        throw ConfigError("toy corpus field 'bias_rate' must lie in [0, 1]");
    }
    if (topic_noise_rate < 0.0 || topic_noise_rate > 1.0) {
        throw ConfigError("toy corpus field 'topic_noise_rate' must lie in [0, 1]");
    }
    for (const auto& p : planted) {
        if (p.token.empty()) throw ConfigError("planted token name is empty");
        if (p.protected_class != 0 && p.protected_class != 1) {
            throw ConfigError("planted token '" + p.token + "' has a non-binary protected class");
        }
        if (p.strength < 0.0 || p.strength > 1.0) {
            throw ConfigError("planted token '" + p.token + "' has strength outside [0, 1]");
        }
    }
}

std::vector<TextRecord> gen_toy_corpus(const ToyCorpusSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(derive_seed(spec.seed, 0xc0a9));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_filler(0, spec.filler_vocab - 1);
    std::uniform_int_distribution<std::size_t> pick_topic(0, spec.topic_vocab_per_class - 1);
    std::uniform_int_distribution<int> pick_class(0, static_cast<int>(spec.classes) - 1);

    std::vector<TextRecord> out;
    out.reserve(spec.n);
    int width = 1;
    for (std::size_t v = spec.n; v >= 10; v /= 10) ++width;

    for (std::size_t i = 0; i < spec.n; ++i) {
        TextRecord r;
        std::string num = std::to_string(i);
        r.id = "ex" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;

        int g = unit(rng) < 0.5 ? 0 : 1;
        int y = pick_class(rng);
        r.protected_label = g;
        bool noisy = unit(rng) < spec.topic_noise_rate;

        std::vector<std::string> tokens;
        bool own_class_token = false;
        if (noisy) {
            // Topic evidence straddles several classes and the label is a
            // fresh coin among them, so the record is irreducibly hard; it
            // stays free of planted tokens, making the difficulty unrelated
            // to the protected attribute. Stereotype flips only ever target
            // classes 0 and 1, so once at least two other classes exist the
            // straddle is confined to the never-stereotyped ones.
            std::size_t base = spec.classes >= 4 ? 2 : 0;
            std::size_t span = spec.classes - base;
            for (std::size_t t = 0; t < spec.topic_tokens_per_example; ++t) {
                std::string cls = std::to_string(base + t % span);
                tokens.push_back("topic_" + cls + "_" + std::to_string(pick_topic(rng)));
            }
            y = static_cast<int>(base) + pick_class(rng) % static_cast<int>(span);
        } else {
            for (std::size_t t = 0; t < spec.topic_tokens_per_example; ++t) {
                tokens.push_back("topic_" + std::to_string(y) + "_" +
                                 std::to_string(pick_topic(rng)));
            }
            for (const auto& p : spec.planted) {
                double prob = (g == p.protected_class) ? p.strength : 1.0 - p.strength;
                if (unit(rng) < prob) {
                    tokens.push_back(p.token);
                    if (g == p.protected_class) own_class_token = true;
                }
            }
        }
        while (tokens.size() < spec.tokens_per_example) {
            tokens.push_back("filler_" + std::to_string(pick_filler(rng)));
        }
        std::shuffle(tokens.begin(), tokens.end(), rng);
        r.tokens = std::move(tokens);

        // Stereotype flip: protected class g is stereotyped toward task class
        // g; a draw below bias_rate rewrites the label when an own-class
        // planted token is present and the label disagrees.
        int flag = 0;
        int stereo = g % static_cast<int>(spec.classes);
        double flip_draw = unit(rng);  // drawn unconditionally to keep the stream aligned
        if (own_class_token && spec.bias_rate > 0.0 && flip_draw < spec.bias_rate && y != stereo) {
            y = stereo;
            flag = 1;
        }
        r.label = y;
        r.annotations = {flag};
        out.push_back(std::move(r));
    }
    return out;
}

ToyCorpusSpec default_toy_spec() {
    ToyCorpusSpec spec;
    spec.n = 2000;
    spec.seed = 7;
    spec.classes = 2;
    spec.filler_vocab = 20;
    spec.topic_vocab_per_class = 6;
    spec.topic_tokens_per_example = 4;
    spec.tokens_per_example = 12;
    spec.planted = {
        {"pronoun_f", 1, 0.97},
        {"pronoun_m", 0, 0.97},
        {"marker_f", 1, 0.90},
        {"marker_m", 0, 0.90},
    };
    // Half the corpus is flip-eligible (own-class token present, label on the
    // non-stereotype side), so the noise ceiling on task accuracy is roughly
    // 1 - bias_rate / 2; 0.10 keeps a trained classifier above 0.9 validation
    // accuracy with margin while still flagging ~120 of 2000 records.
    spec.bias_rate = 0.10;
    return spec;
}

std::vector<std::string> default_lexicon_tokens() { return {"pronoun_f", "pronoun_m"}; }

std::vector<std::pair<std::string, std::string>> default_substitution_pairs() {
    return {{"pronoun_f", "pronoun_m"}};
}

std::vector<LabeledExample> to_examples(const std::vector<TextRecord>& records) {
    std::vector<LabeledExample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        LabeledExample ex;
        ex.tokens = r.tokens;
        ex.label = r.label;
        ex.protected_label = r.protected_label;
        out.push_back(std::move(ex));
    }
    return out;
}

AnnotationSet annotations_from_records(const std::vector<TextRecord>& records) {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> labels;
    for (const auto& r : records) {
        if (r.annotations.empty()) {
            throw DataError("record '" + r.id + "' carries no annotations");
        }
        ids.push_back(r.id);
        labels.push_back(r.annotations);
    }
    return make_annotation_set(std::move(ids), std::move(labels));
}

SaliencyRow export_saliency(const TextRecord& record, const SensitivityResult& result,
                            std::size_t embed_dim) {
    if (embed_dim == 0) throw ConfigError("saliency export needs a positive embedding dim");
    if (result.contribution.empty() || result.v.empty()) {
        throw DataError("saliency export requires a P-variant result with a constructed v");
    }
    std::size_t n = record.tokens.size();
    if (result.contribution.size() != n * embed_dim || result.v.size() != n * embed_dim) {
        throw DimensionError("sensitivity result does not align with the record's tokens");
    }

    auto reduce = [&](const std::vector<double>& flat) {
        std::vector<double> per_token(n, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t d = 0; d < embed_dim; ++d) {
                per_token[t] += flat[t * embed_dim + d];
            }
        }
        return per_token;
    };
    auto normalize = [](std::vector<double>& row) {
        double mx = 0.0;
        for (double x : row) mx = std::max(mx, x);
        if (mx == 0.0) return true;  // degenerate: all-zero row stays zero
        for (double& x : row) x /= mx;
        return false;
    };

    SaliencyRow s;
    s.id = record.id;
    s.variant = variant_name(result.variant);
    s.tokens = record.tokens;
    s.contribution = reduce(result.contribution);
    s.v_weights = reduce(result.v);
    s.contribution_degenerate = normalize(s.contribution);
    s.v_degenerate = normalize(s.v_weights);
    return s;
}

}  // namespace predsens
