#include "predsens/synthetic.hpp"

#include <cmath>
#include <random>

#include "predsens/sensitivity.hpp"
#include "predsens/train.hpp"

namespace predsens {

std::vector<HiringRecord> gen_hiring(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("hiring data needs at least 2 records");
    std::mt19937_64 rng(derive_seed(seed, 0x41a1));
    std::uniform_real_distribution<double> u10(0.0, 10.0);
    std::bernoulli_distribution group(0.5);
    std::normal_distribution<double> noise(0.0, std::sqrt(10.0));  // variance 10
    std::vector<HiringRecord> out(n);
    for (auto& r : out) {
        r.x1 = u10(rng);
        r.x3 = group(rng) ? 1 : 0;
        r.x2 = (r.x3 == 1 ? 10.0 : 2.0) + noise(rng);
    }
    return out;
}

double diff_quotient(const std::vector<double>& a, const std::vector<double>& b, std::size_t m) {
    if (a.size() != b.size()) {
        throw DimensionError("difference quotient requires equally long feature vectors");
    }
    if (m >= a.size()) {
        throw DataError("difference-quotient anchor index out of range");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        if (n == m || b[n] == b[m]) continue;  // equal-b pairs have no quotient
        sum += (a[m] - a[n]) / (b[m] - b[n]);
        ++count;
    }
    if (count == 0) {
        throw DataError("derivative undefined: feature b never differs from its value at the "
                        "anchor index");
    }
    return sum / static_cast<double>(count);
}

double mean_diff_quotient(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("difference quotient requires equally long feature vectors");
    }
    double sum = 0.0;
    std::size_t anchors = 0;
    for (std::size_t m = 0; m < a.size(); ++m) {
        double inner = 0.0;
        std::size_t count = 0;
        for (std::size_t n = 0; n < a.size(); ++n) {
            if (n == m || b[n] == b[m]) continue;
            inner += (a[m] - a[n]) / (b[m] - b[n]);
            ++count;
        }
        if (count == 0) continue;
        sum += inner / static_cast<double>(count);
        ++anchors;
    }
    if (anchors == 0) {
        throw DataError("derivative undefined: feature b is constant");
    }
    return sum / static_cast<double>(anchors);
}

namespace {

double sigmoid_deriv(double z) {
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 - s);
}

AbsJacobian pair_jacobian(const std::vector<double>& row) {
    // [f, 1-f] heads share absolute partials: |d(1-f)/dx| = |df/dx|.
    AbsJacobian jac;
    jac.rows = 2;
    jac.cols = row.size();
    jac.entries = row;
    jac.entries.insert(jac.entries.end(), row.begin(), row.end());
    return jac;
}

}  // namespace

ParityCaseResult run_parity_cases(const std::vector<HiringRecord>& data) {
    if (data.size() < 2) throw DataError("parity cases need at least 2 records");
    std::size_t n = data.size();
    std::vector<double> x1(n), x2(n), x3(n);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = data[i].x1;
        x2[i] = data[i].x2;
        x3[i] = static_cast<double>(data[i].x3);
        m1 += x1[i];
        m2 += x2[i];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);

    ParityCaseResult res;
    res.q_x2_x3 = mean_diff_quotient(x2, x3);
    res.q_x1_x3 = mean_diff_quotient(x1, x3);
    res.q_x1_x2 = mean_diff_quotient(x1, x2);

    StochasticVector w = build_w_uniform(2);

    // Case 1: f = sigmoid((x1-5)+(x2-6)) reads the group-linked feature. The
    // x3 column of the Jacobian is |df/dx2 * dx2/dx3| by the chain rule; the
    // model partials are taken at the feature-mean point.
    {
        double sp = sigmoid_deriv((m1 - 5.0) + (m2 - 6.0));
        std::vector<double> row = {std::fabs(sp), std::fabs(sp), std::fabs(sp * res.q_x2_x3)};
        StochasticVector v(std::vector<double>{0.0, 0.0, 1.0});
        res.p_case1 = accumulated_sensitivity(w, pair_jacobian(row), v);
    }

    // Case 2: f = sigmoid(x1-5) has no path from x2 or x3 except through the
    // (empirically near-zero) dependence of x1 on them.
    {
        double sp = sigmoid_deriv(m1 - 5.0);
        std::vector<double> row = {std::fabs(sp), std::fabs(sp * res.q_x1_x2),
                                   std::fabs(sp * res.q_x1_x3)};
        StochasticVector v(std::vector<double>{0.0, 0.5, 0.5});
        res.p_case2 = accumulated_sensitivity(w, pair_jacobian(row), v);
    }
    return res;
}

std::vector<ThresholdRecord> gen_threshold(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("threshold data needs at least 2 records");
    std::mt19937_64 rng(derive_seed(seed, 0x7d31));
    std::uniform_real_distribution<double> u10(0.0, 10.0);
    std::vector<ThresholdRecord> out(n);
    for (auto& r : out) {
        r.x = u10(rng);
        r.y = r.x >= 5.0 ? 1.0 : 0.0;
    }
    return out;
}

double analytic_theta(const std::vector<ThresholdRecord>& data) {
    double sxy = 0.0, sxx = 0.0;
    for (const auto& r : data) {
        sxy += r.x * r.y;
        sxx += r.x * r.x;
    }
    if (sxx == 0.0) throw DataError("threshold data has all-zero inputs");
    return sxy / sxx;
}

std::vector<SweepPoint> lipschitz_sweep(const std::vector<ThresholdRecord>& data,
                                        const std::vector<double>& bounds, double probe_x,
                                        std::uint64_t seed) {
    if (bounds.empty()) throw ConfigError("the Lipschitz sweep needs at least one bound");
    std::vector<LabeledExample> examples(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        examples[i].features = {data[i].x};
        examples[i].target = data[i].y;
    }

    ModelArch arch;
    arch.kind = ModelKind::LinearScalar;
    arch.feature_dim = 1;

    std::vector<SweepPoint> sweep;
    sweep.reserve(bounds.size());
    for (double bound : bounds) {
        TrainConfig cfg;
        cfg.epochs = 120;  // geometric convergence leaves this at machine precision
        cfg.lr = 0.5;
        cfg.batch = data.size();
        cfg.seed = seed;
        cfg.lipschitz_bound = bound;
        cfg.norm_order = 1;
        cfg.val_fraction = 0.0;
        DiffModel model = train_lipschitz(examples, cfg, arch);

        SweepPoint pt;
        pt.bound = bound;
        pt.theta = model.weights[0].data[0];
        AbsJacobian jac = abs_jacobian(model, std::vector<double>{probe_x});
        StochasticVector one(std::vector<double>{1.0});
        pt.p = accumulated_sensitivity(one, jac, one);
        sweep.push_back(pt);
    }
    return sweep;
}

}  // namespace predsens
