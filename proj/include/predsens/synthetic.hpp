#pragma once

// Controlled experiments on synthetic data.
//
// Hiring data: x1 ~ U(0,10) independent of group; x3 ~ Bernoulli(1/2) is the
// protected group; x2 ~ N(2, var 10) for x3 = 0 and N(10, var 10) for x3 = 1.
// Cross-feature derivatives are estimated by difference quotients
// mean_n (a_m - a_n)/(b_m - b_n), excluding pairs with equal b. Two
// statistical-parity cases compare a classifier that reads the group-linked
// feature against one that provably ignores it.
//
// Threshold data: x ~ U(0,10), y = [x >= 5]. A linear score f = theta * x is
// fitted under |theta| <= L for a sweep of bounds; the accumulated
// sensitivity at a probe input then equals |theta|, which the bound caps.

#include <cstdint>
#include <vector>

#include "predsens/model.hpp"

namespace predsens {

struct HiringRecord {
    double x1 = 0.0;  // merit feature, group-independent
    double x2 = 0.0;  // group-linked feature
    int x3 = 0;       // protected group
};

std::vector<HiringRecord> gen_hiring(std::size_t n, std::uint64_t seed);

// Difference-quotient derivative estimate of a with respect to b at index m:
// mean over n != m with b_n != b_m of (a_m - a_n)/(b_m - b_n).
// Throws when b never differs from b[m] (derivative undefined).
double diff_quotient(const std::vector<double>& a, const std::vector<double>& b, std::size_t m);

// diff_quotient averaged over every valid anchor m; the estimator the parity
// cases use (a single anchor inherits the variance of one sample draw).
double mean_diff_quotient(const std::vector<double>& a, const std::vector<double>& b);

struct ParityCaseResult {
    double p_case1 = 0.0;   // classifier reads x1 and x2; v on the x3 column
    double p_case2 = 0.0;   // classifier reads x1 only; v on the x2/x3 columns
    double q_x2_x3 = 0.0;   // difference-quotient estimates entering the Jacobians
    double q_x1_x3 = 0.0;
    double q_x1_x2 = 0.0;
};

// Case 1: f = sigmoid((x1-5)+(x2-6)), w = [1/2,1/2] over [f,1-f], v = [0,0,1];
// the x3 column chains |df/dx2 * dx2/dx3|. Case 2: f = sigmoid(x1-5),
// v = [0,1/2,1/2] with both columns chained through x1. Model partials are
// evaluated at the dataset feature means (the decision-boundary point both
// classifiers are centered on).
ParityCaseResult run_parity_cases(const std::vector<HiringRecord>& data);

struct ThresholdRecord {
    double x = 0.0;
    double y = 0.0;  // 0/1 threshold label used as regression target
};

std::vector<ThresholdRecord> gen_threshold(std::size_t n, std::uint64_t seed);

// Unconstrained least-squares optimum sum(x*y)/sum(x*x) of the drawn sample.
double analytic_theta(const std::vector<ThresholdRecord>& data);

struct SweepPoint {
    double bound = 0.0;  // L
    double theta = 0.0;  // fitted coefficient after constrained training
    double p = 0.0;      // accumulated sensitivity at the probe; p <= bound
};

// Constrained fit per bound (norm order 1), sensitivity evaluated at probe_x
// with w = v = [1].
std::vector<SweepPoint> lipschitz_sweep(const std::vector<ThresholdRecord>& data,
                                        const std::vector<double>& bounds, double probe_x,
                                        std::uint64_t seed = 1);

}  // namespace predsens
