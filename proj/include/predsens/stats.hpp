#pragma once

// Statistical validation layer: point-biserial correlation between metric
// scores and binary bias annotations, plug-in mutual information over
// equal-frequency score bins, a one-sided bootstrap comparison of two
// metrics, and Fleiss' kappa for annotator agreement.

#include <cstdint>
#include <string>
#include <vector>

#include "predsens/common.hpp"

namespace predsens {

// Pearson correlation between 0/1 labels and real scores, computed in the
// group-means form. Throws DataError when undefined (single-class labels or
// constant scores).
double point_biserial(const std::vector<int>& labels, const std::vector<double>& scores);

// Plug-in mutual information (nats) between labels and scores after
// equal-frequency binning of the scores (rank-based with stable index
// tie-breaks, so any strictly monotone score transform leaves it unchanged).
double mutual_information(const std::vector<int>& labels, const std::vector<double>& scores,
                          std::size_t bins = 8);

struct BootstrapResult {
    double p = 1.0;           // fraction of resamples where r_a <= r_b
    std::size_t completed = 0;
    std::size_t skipped = 0;  // resamples that stayed degenerate after redraws
};

// One-sided test that metric a correlates better with the labels than metric
// b. Each resample draws n indices with replacement using an independently
// derived seed, so resamples may be evaluated in any order (or in parallel)
// with identical results. Resamples with undefined correlations are redrawn
// a bounded number of times, then counted as skipped.
BootstrapResult bootstrap_significance(const std::vector<int>& labels,
                                       const std::vector<double>& scores_a,
                                       const std::vector<double>& scores_b,
                                       std::size_t resamples, std::uint64_t seed);

// Fleiss' kappa over an examples x categories count matrix where every row
// sums to the rater count.
double fleiss_kappa(const std::vector<std::vector<std::size_t>>& counts, std::size_t raters);

// R annotators' binary labels per example. Majority ties resolve to 1
// ("biased") and are flagged.
struct AnnotationSet {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> labels;  // per example, R entries of 0/1
    std::vector<int> majority;
    std::vector<bool> tie;

    std::size_t raters() const { return labels.empty() ? 0 : labels.front().size(); }
    std::size_t size() const { return ids.size(); }

    // Count matrix for fleiss_kappa (categories: 0, 1).
    std::vector<std::vector<std::size_t>> count_matrix() const;
};

AnnotationSet make_annotation_set(std::vector<std::string> ids,
                                  std::vector<std::vector<int>> labels);

// Tab-separated file: example id, then R labels in {0,1}, one example per line.
AnnotationSet load_annotations(const std::string& path);

}  // namespace predsens
