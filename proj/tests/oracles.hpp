#pragma once

// Independent reference implementations used only by the tests. Each one was
// written against the textbook definition, not against the library code, so a
// test that compares the two catches implementation drift in either.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracles {

inline double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(std::fabs(want), 1e-6);
}

// Central-difference gradient of a scalar function of a flat vector.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double eps = 1e-5) {
    std::vector<double> g(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + eps;
        double hi = f(x);
        x[i] = keep - eps;
        double lo = f(x);
        x[i] = keep;
        g[i] = (hi - lo) / (2.0 * eps);
    }
    return g;
}

// Plain Pearson correlation, population variances.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::runtime_error("pearson: bad input");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::runtime_error("pearson: undefined");
    return sxy / std::sqrt(sxx * syy);
}

// Equal-frequency rank binning: sort indices by (score, index) and assign
// rank * bins / n. Matches the estimator's stated binning rule but is
// recomputed here from that rule alone.
inline std::vector<std::size_t> rank_bins(const std::vector<double>& scores, std::size_t bins) {
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::size_t> bin(n, 0);
    for (std::size_t rank = 0; rank < n; ++rank) {
        bin[order[rank]] = rank * bins / n;
    }
    return bin;
}

// Mutual information (nats) by direct summation over the joint distribution:
// sum_{l,b} p(l,b) * ln( p(l,b) / (p(l) p(b)) ).
inline double mi_direct(const std::vector<int>& labels, const std::vector<double>& scores,
                        std::size_t bins) {
    std::size_t n = labels.size();
    std::vector<std::size_t> bin = rank_bins(scores, bins);
    int max_label = *std::max_element(labels.begin(), labels.end());
    std::size_t L = static_cast<std::size_t>(max_label) + 1;
    std::vector<double> joint(L * bins, 0.0), pl(L, 0.0), pb(bins, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        joint[static_cast<std::size_t>(labels[i]) * bins + bin[i]] += 1.0;
        pl[static_cast<std::size_t>(labels[i])] += 1.0;
        pb[bin[i]] += 1.0;
    }
    double mi = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t b = 0; b < bins; ++b) {
            double pj = joint[l * bins + b] / static_cast<double>(n);
            if (pj <= 0.0) continue;
            mi += pj * std::log(pj / ((pl[l] / n) * (pb[b] / n)));
        }
    }
    return mi;
}

}  // namespace oracles
