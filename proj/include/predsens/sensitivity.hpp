#pragma once

// Accumulated prediction sensitivity P = wᵀ J v.
//
// J is the K x (D*N) matrix of absolute partials of the model's K output
// probabilities with respect to every entry of the token embedding stack
// (token-major flattening). w and v are stochastic vectors: w distributes
// attention over output classes (always uniform here), v over input columns.
// The variants differ only in how v is built:
//   P1  uniform over all D*N entries
//   P2  protected-status-model gradients
//   P3  P2 reweighted by |embedding| entries
//   P4  uniform over the D-slots of lexicon-matched tokens
//   P5  P4 reweighted by |embedding| entries
//   CF  counterfactual baseline: L1 gap between predictions on the original
//       and the token-substituted input (not a wᵀJv form)

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "predsens/model.hpp"

namespace predsens {

enum class Variant { P1, P2, P3, P4, P5, CF };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Non-negative entries summing to 1 within 1e-9; construction validates.
class StochasticVector {
public:
    explicit StochasticVector(std::vector<double> entries);
    const std::vector<double>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    double operator[](std::size_t i) const { return entries_[i]; }

private:
    std::vector<double> entries_;
};

// Outcomes of v construction that are data conditions, not errors: the
// caller decides (exclude the example or score it zero).
enum class VStatus { Ok, NoGenderedTokens, DegenerateWeights };

const char* v_status_name(VStatus s);

struct VBuild {
    VStatus status = VStatus::Ok;
    std::optional<StochasticVector> v;  // engaged iff status == Ok
};

struct VariantSpec {
    Variant variant = Variant::P1;
    // PSM output row of interest. The PSM aggregation sums |grad| over all
    // protected-class rows, which for a binary PSM makes the normalized v
    // independent of this index; it is validated and recorded regardless.
    std::size_t protected_class = 1;
};

StochasticVector build_w_uniform(std::size_t k);
StochasticVector build_v_uniform(std::size_t n_tokens, std::size_t dim);

// Lexicon-matched tokens share the mass: each matched token's dim slots get
// 1/(n_matched * dim). No matches is a typed signal, not an error.
VBuild build_v_lexicon(const std::vector<std::string>& tokens,
                       const std::set<std::string>& lexicon, std::size_t dim);

// v_i proportional to the column sums of the PSM's absolute Jacobian at this
// input. An all-zero Jacobian yields DegenerateWeights.
VBuild build_v_psm(const DiffModel& psm, const std::vector<std::string>& tokens,
                   std::size_t protected_class);

// Elementwise |stack_i| * v_i, renormalized; a zero total is DegenerateWeights.
VBuild apply_embedding_weights(const StochasticVector& v, const Tensor& stack);

// wᵀJ as a dense row over input columns.
std::vector<double> weighted_row(const StochasticVector& w, const AbsJacobian& jac);

// The triple product wᵀ J v, computed directly.
double accumulated_sensitivity(const StochasticVector& w, const AbsJacobian& jac,
                               const StochasticVector& v);

// Symmetric token substitution map (an involution: applying it twice returns
// the original token list).
struct SubstitutionMap {
    std::unordered_map<std::string, std::string> pairs;
    bool empty() const { return pairs.empty(); }
};

SubstitutionMap substitution_map_from_pairs(
    const std::vector<std::pair<std::string, std::string>>& entries);
SubstitutionMap load_substitution_map(const std::string& path);

std::vector<std::string> apply_substitutions(const std::vector<std::string>& tokens,
                                             const SubstitutionMap& map);

struct CounterfactualOutcome {
    double score = 0.0;
    bool substituted = false;  // false: no token matched the map; score is 0
};

// L1 norm of f(x) - f(x̂) where x̂ substitutes every mapped token.
CounterfactualOutcome counterfactual_score(const DiffModel& model,
                                           const std::vector<std::string>& tokens,
                                           const SubstitutionMap& map);

// One token per line, lowercase-normalized on load.
std::set<std::string> load_lexicon(const std::string& path);

enum class MissingGenderPolicy { Exclude, ScoreZero };

struct VariantInputs {
    const DiffModel* task = nullptr;
    const DiffModel* psm = nullptr;                 // P2 / P3
    const std::set<std::string>* lexicon = nullptr; // P4 / P5
    const SubstitutionMap* subst = nullptr;         // CF
    MissingGenderPolicy policy = MissingGenderPolicy::ScoreZero;
};

struct SensitivityResult {
    Variant variant = Variant::P1;
    double score = 0.0;
    std::vector<double> contribution;  // wᵀJ (empty for CF)
    std::vector<double> v;             // stochastic v used (empty for CF / non-Ok)
    std::vector<bool> unknown_tokens;  // per token, embedding lookup missed
    VStatus v_status = VStatus::Ok;
    bool skipped = false;              // Exclude policy applied
    bool cf_no_substitution = false;
};

// Dispatches one variant on one tokenized example. w is always uniform.
SensitivityResult evaluate_variant(const VariantSpec& spec, const VariantInputs& inputs,
                                   const std::vector<std::string>& tokens);

}  // namespace predsens
