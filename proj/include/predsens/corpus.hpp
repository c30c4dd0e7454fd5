#pragma once

// Text corpus I/O and the synthetic stereotype corpus.
//
// Records live in a line-delimited structured-text file (one JSON object per
// line) with pre-split tokens. The toy generator plants tokens that co-occur
// with a protected class at a configurable strength and flips a configurable
// fraction of labels toward the stereotyped class whenever such a token is
// present; the flip flags are recorded per example and act as ground-truth
// bias annotations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "predsens/sensitivity.hpp"
#include "predsens/stats.hpp"
#include "predsens/train.hpp"

namespace predsens {

struct TextRecord {
    std::string id;
    std::vector<std::string> tokens;
    int label = 0;
    std::optional<int> protected_label;
    std::vector<int> annotations;  // empty = unannotated
};

std::vector<TextRecord> load_records(const std::string& path);
void save_records(const std::vector<TextRecord>& records, const std::string& path);

struct PlantedToken {
    std::string token;
    int protected_class = 0;   // 0 or 1
    double strength = 1.0;     // P(token present | protected class); the
                               // complement class draws it with 1 - strength
};

struct ToyCorpusSpec {
    std::size_t n = 2000;
    std::uint64_t seed = 7;
    std::size_t classes = 2;
    std::size_t filler_vocab = 20;
    std::size_t topic_vocab_per_class = 6;
    std::size_t topic_tokens_per_example = 4;
    std::size_t tokens_per_example = 12;  // fixed record length after padding
    std::vector<PlantedToken> planted;
    double bias_rate = 0.0;  // P(label flipped to the stereotype | own-class planted token present)
    // Fraction of records that are hard for reasons unrelated to the protected
    // attribute: their topic tokens straddle every class, their label is an
    // even coin, and they carry no planted tokens. They are never flagged.
    double topic_noise_rate = 0.0;

    void validate() const;
};

// Deterministic given its argument's fields. Every record carries annotations = {flag}
// where flag = 1 iff the label was stereotype-flipped.
std::vector<TextRecord> gen_toy_corpus(const ToyCorpusSpec& spec);

// The demo corpus the CLI and tests audit: two planted pronouns (strength
// 0.97, lexicon/substitution material) and two planted stereotype markers
// (strength 0.9) that no lexicon lists.
ToyCorpusSpec default_toy_spec();
std::vector<std::string> default_lexicon_tokens();
std::vector<std::pair<std::string, std::string>> default_substitution_pairs();

std::vector<LabeledExample> to_examples(const std::vector<TextRecord>& records);

// Ground-truth annotations embedded in the records (requires every record to
// carry the same number of annotation labels).
AnnotationSet annotations_from_records(const std::vector<TextRecord>& records);

// Per-token view of one sensitivity result: the D slots of each token are
// summed, and each row is scaled into [0,1] by its maximum. A zero row stays
// zero and is flagged.
struct SaliencyRow {
    std::string id;
    std::string variant;
    std::vector<std::string> tokens;
    std::vector<double> contribution;  // from wᵀJ
    std::vector<double> v_weights;     // from v
    bool contribution_degenerate = false;
    bool v_degenerate = false;
};

SaliencyRow export_saliency(const TextRecord& record, const SensitivityResult& result,
                            std::size_t embed_dim);

}  // namespace predsens
