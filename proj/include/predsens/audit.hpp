#pragma once

// End-to-end audit: evaluate the requested metric variants on every record of
// a dataset, correlate each variant's scores with bias annotations, and emit
// a deterministic report (human-diffable text plus a machine-readable JSON
// document). Identical config and inputs produce byte-identical reports; a
// verifier recomputes a report from its recorded inputs and compares bytes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "predsens/corpus.hpp"
#include "predsens/sensitivity.hpp"
#include "predsens/stats.hpp"

namespace predsens {

struct RunConfig {
    std::string data_path;
    std::string model_path;
    std::string psm_path;          // required iff P2/P3 requested
    std::string lexicon_path;      // required iff P4/P5 requested
    std::string subst_path;        // required iff CF requested
    std::string annotations_path;  // optional; falls back to record annotations
    std::vector<Variant> variants = {Variant::P1};
    std::uint64_t seed = 1;
    std::size_t mi_bins = 8;
    std::size_t resamples = 1000;
    MissingGenderPolicy policy = MissingGenderPolicy::ScoreZero;
    std::size_t protected_class = 1;
    std::size_t saliency_examples = 0;  // per-token export for the first k records

    void validate() const;
};

struct AuditRow {
    std::string id;
    // Aligned with RunConfig::variants; disengaged = excluded by policy.
    std::vector<std::optional<double>> scores;
    std::vector<std::string> flags;  // "" when clean
};

struct VariantSummary {
    Variant variant = Variant::P1;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;
    std::size_t degenerate = 0;       // v collapsed; scored by policy
    std::size_t no_gendered = 0;      // lexicon found nothing; scored by policy
    std::size_t no_substitution = 0;  // CF had nothing to swap
    double mean_score = 0.0;
    std::optional<double> r;          // point-biserial vs majority annotation
    std::optional<double> mi;
    std::optional<double> p_vs_cf;    // one-sided bootstrap against the CF baseline
    std::string stat_note;            // reason when a statistic is undefined
};

struct AuditReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t mi_bins = 8;
    std::size_t resamples = 1000;
    std::string policy_name;
    std::string data_path, model_path, psm_path, lexicon_path, subst_path, annotations_path;
    std::string data_fingerprint, model_fingerprint, psm_fingerprint;
    std::size_t protected_class = 1;
    std::size_t saliency_examples = 0;
    std::size_t n_records = 0;
    bool has_annotations = false;
    std::optional<double> annotation_kappa;  // rater agreement when R >= 2
    std::vector<Variant> variants;
    std::vector<AuditRow> rows;
    std::vector<VariantSummary> summaries;
    std::vector<SaliencyRow> saliency;
    std::vector<std::string> notes;
};

// Loads every input (validating before any output is produced) and runs the
// full evaluation. Throws ConfigError / DataError / NumericError.
AuditReport run_audit(const RunConfig& cfg);

std::string report_to_json(const AuditReport& report);
std::string report_to_text(const AuditReport& report);

// Recomputes the report named by `report_json_path` from the inputs recorded
// inside it and byte-compares the JSON serializations.
struct VerifyOutcome {
    bool ok = false;
    std::string message;
};
VerifyOutcome verify_report(const std::string& report_json_path);

// Content hash of a file on disk (FNV-1a over raw bytes).
std::string file_fingerprint(const std::string& path);

}  // namespace predsens
