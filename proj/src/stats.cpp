#include "predsens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace predsens {

namespace {

void check_binary_labels(const std::vector<int>& labels) {
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw DataError("labels must be binary 0/1 (got " + std::to_string(l) + ")");
        }
    }
}

}  // namespace

double point_biserial(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) {
        throw DimensionError("labels and scores differ in length");
    }
    std::size_t n = labels.size();
    if (n < 2) throw DataError("correlation needs at least 2 observations");
    check_binary_labels(labels);

    double n1 = 0.0, m1 = 0.0, m0 = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean += scores[i];
        if (labels[i] == 1) {
            n1 += 1.0;
            m1 += scores[i];
        } else {
            m0 += scores[i];
        }
    }
    double n0 = static_cast<double>(n) - n1;
    if (n1 == 0.0 || n0 == 0.0) {
        throw DataError("undefined correlation: labels contain a single class");
    }
    mean /= static_cast<double>(n);
    m1 /= n1;
    m0 /= n0;

    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) {
        throw DataError("undefined correlation: scores are constant");
    }
    // Group-means form of Pearson for a dichotomous variable.
    return (m1 - m0) / std::sqrt(var) *
           std::sqrt(n1 * n0 / (static_cast<double>(n) * static_cast<double>(n)));
}

double mutual_information(const std::vector<int>& labels, const std::vector<double>& scores,
                          std::size_t bins) {
    if (labels.size() != scores.size()) {
        throw DimensionError("labels and scores differ in length");
    }
    if (bins < 2) throw ConfigError("mutual information needs at least 2 bins");
    std::size_t n = labels.size();
    if (n < bins) {
        throw DataError("mutual information: fewer samples (" + std::to_string(n) +
                        ") than bins (" + std::to_string(bins) + ")");
    }

    // Equal-frequency bins via ranks; stable index tie-break keeps the
    // assignment a function of the score ordering only.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::size_t> bin_of(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
        bin_of[order[rank]] = rank * bins / n;
    }

    // Remap labels to a dense alphabet.
    std::vector<int> alphabet;
    for (int l : labels) {
        if (std::find(alphabet.begin(), alphabet.end(), l) == alphabet.end()) {
            alphabet.push_back(l);
        }
    }
    std::size_t k = alphabet.size();

    std::vector<double> joint(k * bins, 0.0), pl(k, 0.0), pb(bins, 0.0);
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t li = static_cast<std::size_t>(
            std::find(alphabet.begin(), alphabet.end(), labels[i]) - alphabet.begin());
        joint[li * bins + bin_of[i]] += inv_n;
        pl[li] += inv_n;
        pb[bin_of[i]] += inv_n;
    }

    // Entropy route H(L) + H(B) - H(L,B); the direct-summation form is the
    // independent oracle in the test suite.
    auto entropy = [](const std::vector<double>& p) {
        double h = 0.0;
        for (double q : p) {
            if (q > 0.0) h -= q * std::log(q);
        }
        return h;
    };
    double mi = entropy(pl) + entropy(pb) - entropy(joint);
    return mi < 0.0 ? 0.0 : mi;  // clip the tiny negative round-off case
}

BootstrapResult bootstrap_significance(const std::vector<int>& labels,
                                       const std::vector<double>& scores_a,
                                       const std::vector<double>& scores_b,
                                       std::size_t resamples, std::uint64_t seed) {
    std::size_t n = labels.size();
    if (scores_a.size() != n || scores_b.size() != n) {
        throw DimensionError("bootstrap inputs differ in length");
    }
    if (n < 2) throw DataError("bootstrap needs at least 2 observations");
    if (resamples < 100) {
        throw ConfigError("bootstrap needs at least 100 resamples for a stable p-value");
    }
    check_binary_labels(labels);

    BootstrapResult out;
    std::size_t hits = 0;
    std::vector<int> rl(n);
    std::vector<double> ra(n), rb(n);
    for (std::size_t r = 0; r < resamples; ++r) {
        // Independent generator per resample: parallel evaluation would
        // produce the identical p-value.
        std::mt19937_64 rng(derive_seed(seed, r));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        bool done = false;
        for (int attempt = 0; attempt < 100 && !done; ++attempt) {
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t j = pick(rng);
                rl[i] = labels[j];
                ra[i] = scores_a[j];
                rb[i] = scores_b[j];
            }
            try {
                double corr_a = point_biserial(rl, ra);
                double corr_b = point_biserial(rl, rb);
                if (corr_a <= corr_b) ++hits;
                done = true;
            } catch (const DataError&) {
                // single-class or constant resample: redraw
            }
        }
        if (done) {
            out.completed += 1;
        } else {
            out.skipped += 1;
        }
    }
    if (out.completed == 0) {
        throw DataError("every bootstrap resample was degenerate; cannot form a p-value");
    }
    out.p = static_cast<double>(hits) / static_cast<double>(out.completed);
    return out;
}

double fleiss_kappa(const std::vector<std::vector<std::size_t>>& counts, std::size_t raters) {
    if (raters < 2) throw ConfigError("Fleiss' kappa needs at least 2 raters");
    if (counts.empty()) throw DataError("Fleiss' kappa needs at least one example row");
    std::size_t categories = counts.front().size();
    if (categories < 2) throw DataError("Fleiss' kappa needs at least 2 categories");

    double r = static_cast<double>(raters);
    double n = static_cast<double>(counts.size());
    std::vector<double> pj(categories, 0.0);
    double p_bar = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& row = counts[i];
        if (row.size() != categories) {
            throw DataError("Fleiss' kappa row " + std::to_string(i) +
                            " has inconsistent category count");
        }
        std::size_t row_sum = 0;
        double sq = 0.0;
        for (std::size_t j = 0; j < categories; ++j) {
            row_sum += row[j];
            sq += static_cast<double>(row[j]) * static_cast<double>(row[j]);
            pj[j] += static_cast<double>(row[j]);
        }
        if (row_sum != raters) {
            throw DataError("Fleiss' kappa row " + std::to_string(i) + " sums to " +
                            std::to_string(row_sum) + ", expected rater count " +
                            std::to_string(raters));
        }
        p_bar += (sq - r) / (r * (r - 1.0));
    }
    p_bar /= n;
    double pe = 0.0;
    for (double& q : pj) {
        q /= n * r;
        pe += q * q;
    }
    if (1.0 - pe <= 1e-15) {
        // Every rating in one category: observed agreement is perfect too.
        return 1.0;
    }
    return (p_bar - pe) / (1.0 - pe);
}

std::vector<std::vector<std::size_t>> AnnotationSet::count_matrix() const {
    std::vector<std::vector<std::size_t>> m(labels.size(), std::vector<std::size_t>(2, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (int l : labels[i]) m[i][static_cast<std::size_t>(l)] += 1;
    }
    return m;
}

AnnotationSet make_annotation_set(std::vector<std::string> ids,
                                  std::vector<std::vector<int>> labels) {
    if (ids.size() != labels.size()) {
        throw DimensionError("annotation ids and label rows differ in length");
    }
    if (ids.empty()) throw DataError("annotation set is empty");
    std::size_t r = labels.front().size();
    if (r == 0) throw DataError("annotation rows must contain at least one label");

    AnnotationSet s;
    s.ids = std::move(ids);
    s.labels = std::move(labels);
    s.majority.reserve(s.labels.size());
    s.tie.reserve(s.labels.size());
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        const auto& row = s.labels[i];
        if (row.size() != r) {
            throw DataError("annotation row for id '" + s.ids[i] +
                            "' has inconsistent rater count");
        }
        std::size_t ones = 0;
        for (int l : row) {
            if (l != 0 && l != 1) {
                throw DataError("annotation for id '" + s.ids[i] + "' is not binary");
            }
            ones += static_cast<std::size_t>(l);
        }
        bool tie = (2 * ones == row.size());
        // Ties break toward "biased": a metric should not get credit for
        // examples annotators could not agree on being clean.
        s.majority.push_back((2 * ones >= row.size()) ? 1 : 0);
        s.tie.push_back(tie);
    }
    return s;
}

AnnotationSet load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file: " + path);
    std::vector<std::string> ids;
    std::vector<std::vector<int>> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2) {
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected an id and at least one label");
        }
        std::vector<int> row;
        for (std::size_t f = 1; f < fields.size(); ++f) {
            if (fields[f] == "0") {
                row.push_back(0);
            } else if (fields[f] == "1") {
                row.push_back(1);
            } else {
                throw DataError(path + ":" + std::to_string(lineno) + ": label field '" +
                                fields[f] + "' is not 0 or 1");
            }
        }
        ids.push_back(fields[0]);
        labels.push_back(std::move(row));
    }
    return make_annotation_set(std::move(ids), std::move(labels));
}

}  // namespace predsens
