#pragma once

// Deterministic training for the model families in model.hpp: plain SGD with
// a fixed learning rate, seeded shuffling, and cross-entropy loss for the
// classifier heads. The Lipschitz-constrained fit enforces its bound by
// projection for the single-parameter linear model and by an escalating hinge
// penalty with post-hoc verification for multi-parameter models.

#include <cstdint>
#include <optional>
#include <vector>

#include "predsens/model.hpp"

namespace predsens {

struct TrainConfig {
    std::size_t epochs = 10;
    double lr = 0.5;
    std::size_t batch = 16;
    std::uint64_t seed = 1;
    std::string optimizer = "sgd";
    double lipschitz_bound = 0.0;  // train_lipschitz requires > 0
    int norm_order = 1;            // p in {1,2}, used with the bound
    double val_fraction = 0.2;

    void validate() const;  // throws ConfigError naming the offending field
};

struct LabeledExample {
    std::vector<std::string> tokens;   // text models
    std::vector<double> features;      // tabular / linear models
    int label = 0;                     // class index for classifier heads
    double target = 0.0;               // regression target for the linear head
    std::optional<int> protected_label;
};

// Task classifier. For text architectures an empty arch.vocab is filled with
// the sorted unique tokens of the training data.
DiffModel train_classifier(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                           ModelArch arch);

// Protected-status model: same architectures, trained against
// protected_label. Reports per-class accuracy in the summary. Rejects data
// whose protected label is missing or constant.
DiffModel train_psm(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                    ModelArch arch);

// Lipschitz-constrained training (cfg.lipschitz_bound > 0, cfg.norm_order the
// Lp order for both the output distance and the input metric). The returned
// summary records the largest constraint violation found when re-checking
// training pairs (exhaustive when n <= 200, sampled otherwise); failure to
// reach tolerance 1e-6 is reported as a warning, not an error.
DiffModel train_lipschitz(const std::vector<LabeledExample>& data, const TrainConfig& cfg,
                          ModelArch arch);

// Fraction of examples whose argmax prediction matches the label.
double accuracy(const DiffModel& model, const std::vector<LabeledExample>& data,
                bool against_protected = false);

// Accuracy restricted to each label class, indexed by class.
std::vector<double> per_class_accuracy(const DiffModel& model,
                                       const std::vector<LabeledExample>& data,
                                       bool against_protected = false);

// Keeps every example outside `protected_class` and a seeded random fraction
// of those inside it (the biased-PSM study design).
std::vector<LabeledExample> downsample_class(const std::vector<LabeledExample>& data,
                                             int protected_class, double keep_fraction,
                                             std::uint64_t seed);

// Largest ratio D_p(f(x), f(x')) / d_p(x, x') over training pairs, exhaustive
// for n <= 200, sampled deterministically otherwise. Pairs with d = 0 are
// skipped (a function cannot differ on identical inputs).
double max_lipschitz_ratio(const DiffModel& model, const std::vector<LabeledExample>& data,
                           int norm_order, std::uint64_t seed = 9);

}  // namespace predsens
