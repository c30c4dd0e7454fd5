#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "predsens/model.hpp"
#include "predsens/sensitivity.hpp"

using namespace predsens;

namespace {

DiffModel make_text_model(std::mt19937_64& rng, std::size_t vocab, std::size_t dim,
                          std::size_t classes = 2) {
    std::normal_distribution<double> w(0.0, 0.8);
    DiffModel m;
    m.arch.kind = ModelKind::TextSoftmax;
    m.arch.embed_dim = dim;
    for (std::size_t i = 0; i < vocab; ++i) m.arch.vocab.push_back("tok" + std::to_string(i));
    m.arch.classes = classes;
    m.embedding = Tensor::zeros({vocab, dim});
    for (double& d : m.embedding.data) d = w(rng);
    m.weights = {Tensor::zeros({dim, classes}), Tensor::zeros({1, classes})};
    for (double& d : m.weights[0].data) d = w(rng);
    for (double& d : m.weights[1].data) d = w(rng);
    m.rebuild_vocab_index();
    return m;
}

DiffModel constant_output_model(std::size_t vocab, std::size_t dim) {
    std::mt19937_64 rng(555);
    DiffModel m = make_text_model(rng, vocab, dim);
    for (double& d : m.weights[0].data) d = 0.0;  // logits reduce to the bias
    return m;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace

TEST_CASE("variant names round trip and unknown names are config errors") {
    for (Variant v : {Variant::P1, Variant::P2, Variant::P3, Variant::P4, Variant::P5,
                      Variant::CF}) {
        CHECK(variant_from_name(variant_name(v)) == v);
    }
    CHECK_THROWS_AS(variant_from_name("P9"), ConfigError);
}

TEST_CASE("stochastic vectors enforce their contract at construction") {
    CHECK_NOTHROW(StochasticVector({0.25, 0.75}));
    CHECK_NOTHROW(StochasticVector({1.0}));
    CHECK_THROWS_AS(StochasticVector({}), DataError);
    CHECK_THROWS_AS(StochasticVector({0.5, -0.1, 0.6}), DataError);
    CHECK_THROWS_AS(StochasticVector({0.5, 0.4}), DataError);          // sums to 0.9
    CHECK_THROWS_AS(StochasticVector({0.5, std::nan("")}), DataError);
    // 1e-9 slack admits accumulated rounding but nothing visible.
    CHECK_NOTHROW(StochasticVector({0.5, 0.5 + 5e-10}));
}

TEST_CASE("uniform builders spread mass evenly") {
    StochasticVector w = build_w_uniform(4);
    REQUIRE(w.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == 0.25);
    StochasticVector v = build_v_uniform(3, 5);
    REQUIRE(v.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) CHECK(v[i] == doctest::Approx(1.0 / 15).epsilon(1e-15));
}

TEST_CASE("the lexicon builder concentrates mass on matched tokens") {
    std::set<std::string> lexicon = {"she", "he"};
    std::vector<std::string> tokens = {"the", "SHE", "ran", "he"};
    VBuild b = build_v_lexicon(tokens, lexicon, 2);
    REQUIRE(b.status == VStatus::Ok);
    const StochasticVector& v = *b.v;
    REQUIRE(v.size() == 8);
    // Two matches, dim 2: each matched slot holds 1/4; case-insensitive.
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 0.25);
    CHECK(v[3] == 0.25);
    CHECK(v[4] == 0.0);
    CHECK(v[5] == 0.0);
    CHECK(v[6] == 0.25);
    CHECK(v[7] == 0.25);

    VBuild none = build_v_lexicon({"nothing", "matches"}, lexicon, 2);
    CHECK(none.status == VStatus::NoGenderedTokens);
    CHECK_FALSE(none.v.has_value());
}

TEST_CASE("the PSM builder yields a stochastic vector tied to gradient mass") {
    std::mt19937_64 rng(21);
    DiffModel psm = make_text_model(rng, 6, 3);
    std::vector<std::string> tokens = {"tok0", "tok2", "tok5"};
    VBuild b = build_v_psm(psm, tokens, 1);
    REQUIRE(b.status == VStatus::Ok);
    double s = 0.0;
    for (std::size_t i = 0; i < b.v->size(); ++i) {
        CHECK((*b.v)[i] >= 0.0);
        s += (*b.v)[i];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(b.v->size() == 9);

    CHECK_THROWS_AS(build_v_psm(psm, tokens, 7), ConfigError);  // class out of range
}

TEST_CASE("a constant-output PSM is reported as degenerate, not an error") {
    DiffModel psm = constant_output_model(5, 3);
    VBuild b = build_v_psm(psm, {"tok0", "tok1"}, 1);
    CHECK(b.status == VStatus::DegenerateWeights);
    CHECK_FALSE(b.v.has_value());
}

TEST_CASE("embedding reweighting multiplies, renormalizes, and flags zero mass") {
    StochasticVector v({0.5, 0.5, 0.0, 0.0});
    Tensor stack({2, 2}, {2.0, -1.0, 9.0, 9.0});
    VBuild b = apply_embedding_weights(v, stack);
    REQUIRE(b.status == VStatus::Ok);
    // |2|*0.5 : |-1|*0.5 : 0 : 0  ->  2/3, 1/3, 0, 0
    CHECK((*b.v)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK((*b.v)[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK((*b.v)[2] == 0.0);
    CHECK((*b.v)[3] == 0.0);

    Tensor zeros({2, 2}, {0.0, 0.0, 9.0, 9.0});
    VBuild z = apply_embedding_weights(v, zeros);  // all v-mass sits on zero entries
    CHECK(z.status == VStatus::DegenerateWeights);

    Tensor bad({1, 2}, {1.0, 2.0});
    CHECK_THROWS_AS(apply_embedding_weights(v, bad), DimensionError);
}

TEST_CASE("accumulated sensitivity equals the independent two-step contraction") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        AbsJacobian jac;
        jac.rows = 2 + trial % 3;
        jac.cols = 4 + trial % 5;
        jac.entries.resize(jac.rows * jac.cols);
        for (double& e : jac.entries) e = u(rng);

        std::vector<double> we(jac.rows, 1.0 / static_cast<double>(jac.rows));
        std::vector<double> ve(jac.cols, 0.0);
        double s = 0.0;
        for (double& x : ve) s += (x = u(rng));
        for (double& x : ve) x /= s;
        StochasticVector w(we), v(ve);

        double direct = accumulated_sensitivity(w, jac, v);
        std::vector<double> row = weighted_row(w, jac);
        double via_row = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) via_row += row[i] * v[i];
        CHECK(std::fabs(direct - via_row) <= 1e-12);
        CHECK(direct >= 0.0);
    }

    AbsJacobian jac;
    jac.rows = 2;
    jac.cols = 3;
    jac.entries = {1, 2, 3, 4, 5, 6};
    CHECK_THROWS_AS(
        accumulated_sensitivity(build_w_uniform(2), jac, StochasticVector({0.5, 0.5})),
        DimensionError);
    CHECK_THROWS_AS(
        accumulated_sensitivity(build_w_uniform(3), jac, StochasticVector({0.5, 0.25, 0.25})),
        DimensionError);
}

TEST_CASE("a structurally severed column yields exactly zero sensitivity") {
    // No graph path from feature 2 to the outputs; v concentrated there.
    DiffModel m;
    m.arch.kind = ModelKind::TabularSoftmax;
    m.arch.feature_dim = 3;
    m.arch.classes = 2;
    m.arch.hidden = {4};
    m.arch.active_features = {0, 1};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> wdist(0.0, 1.0);
    m.weights = {Tensor::zeros({3, 4}), Tensor::zeros({1, 4}), Tensor::zeros({4, 2}),
                 Tensor::zeros({1, 2})};
    for (Tensor& t : m.weights) {
        for (double& d : t.data) d = wdist(rng);
    }
    for (std::size_t c = 0; c < 4; ++c) m.weights[0].at(2, c) = 0.0;  // sever feature 2

    AbsJacobian jac = abs_jacobian(m, std::vector<double>{1.3, -0.4, 100.0});
    StochasticVector v({0.0, 0.0, 1.0});
    double p = accumulated_sensitivity(build_w_uniform(2), jac, v);
    CHECK(p == 0.0);  // exact, not approximate

    StochasticVector v_active({0.5, 0.5, 0.0});
    CHECK(accumulated_sensitivity(build_w_uniform(2), jac, v_active) > 0.0);
}

TEST_CASE("substitution maps are involutions and reject conflicts") {
    SubstitutionMap map = substitution_map_from_pairs({{"she", "he"}, {"her", "him"}});
    std::vector<std::string> tokens = {"she", "ran", "him"};
    std::vector<std::string> once = apply_substitutions(tokens, map);
    CHECK(once == std::vector<std::string>{"he", "ran", "her"});
    CHECK(apply_substitutions(once, map) == tokens);

    CHECK_THROWS_AS(substitution_map_from_pairs({{"a", "b"}, {"b", "c"}}), DataError);
    CHECK_THROWS_AS(substitution_map_from_pairs({{"a", "a"}}), DataError);
}

TEST_CASE("the counterfactual score is a symmetric L1 gap with a no-match signal") {
    std::mt19937_64 rng(14);
    DiffModel m = make_text_model(rng, 6, 3);
    SubstitutionMap map = substitution_map_from_pairs({{"tok0", "tok1"}});

    std::vector<std::string> a = {"tok0", "tok3"};
    std::vector<std::string> b = {"tok1", "tok3"};
    CounterfactualOutcome ca = counterfactual_score(m, a, map);
    CounterfactualOutcome cb = counterfactual_score(m, b, map);
    REQUIRE(ca.substituted);
    REQUIRE(cb.substituted);
    CHECK(ca.score == doctest::Approx(cb.score).epsilon(1e-12));

    Tensor pa = predict(m, a), pb = predict(m, b);
    double want = std::fabs(pa.data[0] - pb.data[0]) + std::fabs(pa.data[1] - pb.data[1]);
    CHECK(ca.score == doctest::Approx(want).epsilon(1e-12));

    CounterfactualOutcome none = counterfactual_score(m, {"tok3", "tok4"}, map);
    CHECK_FALSE(none.substituted);
    CHECK(none.score == 0.0);
}

TEST_CASE("lexicon and substitution files load with normalization and line errors") {
    write_file("tmp_lex_ok.txt", "  She \nHE\n\nthem\n");
    std::set<std::string> lex = load_lexicon("tmp_lex_ok.txt");
    CHECK(lex == std::set<std::string>{"she", "he", "them"});

    write_file("tmp_subst_ok.tsv", "she\the\nher\thim\n");
    SubstitutionMap map = load_substitution_map("tmp_subst_ok.tsv");
    CHECK(map.pairs.at("she") == "he");
    CHECK(map.pairs.at("him") == "her");

    write_file("tmp_subst_bad.tsv", "she\the\nonly_one_field\n");
    try {
        load_substitution_map("tmp_subst_bad.tsv");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);  // line number
    }
    CHECK_THROWS_AS(load_lexicon("/does/not/exist.txt"), DataError);
}

TEST_CASE("evaluate_variant wires every variant and applies the missing-gender policy") {
    std::mt19937_64 rng(33);
    DiffModel task = make_text_model(rng, 8, 4);
    DiffModel psm = make_text_model(rng, 8, 4);
    std::set<std::string> lexicon = {"tok1"};
    SubstitutionMap subst = substitution_map_from_pairs({{"tok1", "tok2"}});

    VariantInputs inputs;
    inputs.task = &task;
    inputs.psm = &psm;
    inputs.lexicon = &lexicon;
    inputs.subst = &subst;
    inputs.policy = MissingGenderPolicy::ScoreZero;

    std::vector<std::string> gendered = {"tok1", "tok4", "tok5"};
    for (Variant var : {Variant::P1, Variant::P2, Variant::P3, Variant::P4, Variant::P5}) {
        VariantSpec spec;
        spec.variant = var;
        SensitivityResult r = evaluate_variant(spec, inputs, gendered);
        CAPTURE(variant_name(var));
        REQUIRE(r.v_status == VStatus::Ok);
        CHECK(r.score > 0.0);
        REQUIRE(r.v.size() == 12);
        REQUIRE(r.contribution.size() == 12);
        double via_row = 0.0;
        for (std::size_t i = 0; i < 12; ++i) via_row += r.contribution[i] * r.v[i];
        CHECK(std::fabs(r.score - via_row) <= 1e-12);
    }

    VariantSpec cf_spec;
    cf_spec.variant = Variant::CF;
    SensitivityResult cf = evaluate_variant(cf_spec, inputs, gendered);
    CHECK(cf.score > 0.0);
    CHECK(cf.contribution.empty());

    // Ungendered input: P4 honors the policy.
    std::vector<std::string> plain = {"tok4", "tok5"};
    VariantSpec p4;
    p4.variant = Variant::P4;
    SensitivityResult zero = evaluate_variant(p4, inputs, plain);
    CHECK(zero.v_status == VStatus::NoGenderedTokens);
    CHECK(zero.score == 0.0);
    CHECK_FALSE(zero.skipped);

    inputs.policy = MissingGenderPolicy::Exclude;
    SensitivityResult skipped = evaluate_variant(p4, inputs, plain);
    CHECK(skipped.v_status == VStatus::NoGenderedTokens);
    CHECK(skipped.skipped);

    // CF with no matched token signals rather than scoring.
    SensitivityResult cf_none = evaluate_variant(cf_spec, inputs, plain);
    CHECK(cf_none.cf_no_substitution);
    CHECK(cf_none.score == 0.0);
}

TEST_CASE("variant preconditions are typed errors") {
    std::mt19937_64 rng(44);
    DiffModel task = make_text_model(rng, 5, 3);
    VariantInputs inputs;
    inputs.task = &task;

    VariantSpec p2;
    p2.variant = Variant::P2;
    CHECK_THROWS_AS(evaluate_variant(p2, inputs, {"tok0"}), ConfigError);  // no PSM

    DiffModel wide_psm = make_text_model(rng, 5, 4);  // embed_dim mismatch
    inputs.psm = &wide_psm;
    CHECK_THROWS_AS(evaluate_variant(p2, inputs, {"tok0"}), DimensionError);

    VariantSpec p4;
    p4.variant = Variant::P4;
    CHECK_THROWS_AS(evaluate_variant(p4, inputs, {"tok0"}), ConfigError);  // no lexicon

    VariantSpec cf;
    cf.variant = Variant::CF;
    CHECK_THROWS_AS(evaluate_variant(cf, inputs, {"tok0"}), ConfigError);  // no map
}

TEST_CASE("unknown tokens are carried through as per-token flags") {
    std::mt19937_64 rng(3);
    DiffModel task = make_text_model(rng, 4, 2);
    VariantInputs inputs;
    inputs.task = &task;
    VariantSpec p1;
    SensitivityResult r = evaluate_variant(p1, inputs, {"tok0", "not_in_vocab"});
    REQUIRE(r.unknown_tokens.size() == 2);
    CHECK_FALSE(r.unknown_tokens[0]);
    CHECK(r.unknown_tokens[1]);
}

TEST_CASE("P5 on an all-unknown gendered token degenerates instead of dividing by zero") {
    std::mt19937_64 rng(6);
    DiffModel task = make_text_model(rng, 4, 2);
    std::set<std::string> lexicon = {"ghost"};
    VariantInputs inputs;
    inputs.task = &task;
    inputs.lexicon = &lexicon;
    VariantSpec p5;
    p5.variant = Variant::P5;
    // "ghost" matches the lexicon but embeds to the zero row, so the
    // embedding-weighted v has no mass left.
    SensitivityResult r = evaluate_variant(p5, inputs, {"ghost", "tok0"});
    CHECK(r.v_status == VStatus::DegenerateWeights);
    CHECK(r.score == 0.0);
}
