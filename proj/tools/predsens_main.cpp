// predsens: command-line front end for the prediction-sensitivity library.
//
// Subcommands: gen-corpus (synthetic token corpus with a planted group signal),
// train (task classifier or protected-status model), audit (per-record
// sensitivity scores plus association statistics), synth parity / synth
// lipschitz (controlled experiments), verify (recompute a report from its
// recorded inputs and compare bytes).
//
// Exit codes: 0 success, 1 configuration or usage error, 2 data error,
// 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "predsens/audit.hpp"
#include "predsens/corpus.hpp"
#include "predsens/model.hpp"
#include "predsens/sensitivity.hpp"
#include "predsens/stats.hpp"
#include "predsens/synthetic.hpp"
#include "predsens/train.hpp"

namespace {

using predsens::ConfigError;
using predsens::DataError;
using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file: " + path);
    out << content;
    if (!out) throw DataError("failed writing output file: " + path);
}

std::string summary_text(const predsens::DiffModel& model) {
    const predsens::TrainSummary& s = model.summary;
    std::ostringstream out;
    out << "epochs: " << s.epochs << "\n";
    out << "seed: " << s.seed << "\n";
    out << "train_accuracy: " << fmt_double(s.train_accuracy) << "\n";
    if (s.val_accuracy >= 0.0) out << "val_accuracy: " << fmt_double(s.val_accuracy) << "\n";
    if (!s.per_class_accuracy.empty()) {
        out << "per_class_accuracy:";
        for (double a : s.per_class_accuracy) out << " " << fmt_double(a);
        out << "\n";
    }
    if (s.lipschitz_bound > 0.0) {
        out << "lipschitz_bound: " << fmt_double(s.lipschitz_bound) << "\n";
        out << "norm_order: " << s.norm_order << "\n";
        out << "max_constraint_violation: " << fmt_double(s.max_constraint_violation) << "\n";
    }
    for (const std::string& w : s.warnings) out << "warning: " << w << "\n";
    return out.str();
}

int run_gen_corpus(const std::string& out_path, std::size_t n, std::uint64_t seed,
                   double bias_rate, double noise_rate, std::size_t classes,
                   const std::string& lexicon_out, const std::string& subst_out) {
    predsens::ToyCorpusSpec spec = predsens::default_toy_spec();
    spec.n = n;
    spec.seed = seed;
    spec.bias_rate = bias_rate;
    spec.topic_noise_rate = noise_rate;
    spec.classes = classes;
    std::vector<predsens::TextRecord> records = predsens::gen_toy_corpus(spec);
    predsens::save_records(records, out_path);
    std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
    if (!lexicon_out.empty()) {
        std::string text;
        for (const std::string& t : predsens::default_lexicon_tokens()) text += t + "\n";
        write_text_file(lexicon_out, text);
        std::cout << "wrote lexicon to " << lexicon_out << "\n";
    }
    if (!subst_out.empty()) {
        std::string text;
        for (const auto& [a, b] : predsens::default_substitution_pairs()) {
            text += a + "\t" + b + "\n";
        }
        write_text_file(subst_out, text);
        std::cout << "wrote substitution map to " << subst_out << "\n";
    }
    return 0;
}

int run_train(const std::string& data_path, const std::string& out_path,
              const std::string& target, const predsens::TrainConfig& cfg,
              std::size_t embed_dim, const std::vector<std::size_t>& hidden,
              int downsample_class, double keep_fraction, const std::string& summary_out) {
    std::vector<predsens::TextRecord> records = predsens::load_records(data_path);
    std::vector<predsens::LabeledExample> examples = predsens::to_examples(records);
    if (downsample_class >= 0) {
        examples = predsens::downsample_class(examples, downsample_class, keep_fraction, cfg.seed);
    }

    // Size the output head from the label space the model actually predicts.
    int max_label = 1;
    for (const auto& ex : examples) {
        if (target == "psm") {
            if (ex.protected_label) max_label = std::max(max_label, *ex.protected_label);
        } else {
            max_label = std::max(max_label, ex.label);
        }
    }
    predsens::ModelArch arch;
    arch.kind = predsens::ModelKind::TextSoftmax;
    arch.embed_dim = embed_dim;
    arch.hidden = hidden;
    arch.classes = static_cast<std::size_t>(max_label) + 1;

    predsens::DiffModel model = (target == "psm") ? predsens::train_psm(examples, cfg, arch)
                                                  : predsens::train_classifier(examples, cfg, arch);
    predsens::save_model(model, out_path);
    std::string summary = summary_text(model);
    std::cout << "trained " << target << " model -> " << out_path << "\n" << summary;
    if (!summary_out.empty()) write_text_file(summary_out, summary);
    return 0;
}

int run_audit_cmd(const predsens::RunConfig& cfg, const std::string& out_prefix) {
    predsens::AuditReport rep = predsens::run_audit(cfg);
    write_text_file(out_prefix + ".json", predsens::report_to_json(rep));
    write_text_file(out_prefix + ".txt", predsens::report_to_text(rep));
    std::cout << "audited " << rep.n_records << " records (config " << rep.config_hash << ")\n";
    std::cout << "variant\tevaluated\texcluded\tmean\tr\tmi\tp_vs_cf\n";
    for (const predsens::VariantSummary& s : rep.summaries) {
        std::cout << predsens::variant_name(s.variant) << "\t" << s.evaluated << "\t" << s.excluded
                  << "\t" << fmt_double(s.mean_score) << "\t" << (s.r ? fmt_double(*s.r) : "-")
                  << "\t" << (s.mi ? fmt_double(*s.mi) : "-") << "\t"
                  << (s.p_vs_cf ? fmt_double(*s.p_vs_cf) : "-") << "\n";
    }
    std::cout << "wrote " << out_prefix << ".json and " << out_prefix << ".txt\n";
    return 0;
}

int run_synth_parity(const std::string& out_prefix, std::size_t n, std::uint64_t seed) {
    std::vector<predsens::HiringRecord> data = predsens::gen_hiring(n, seed);
    predsens::ParityCaseResult res = predsens::run_parity_cases(data);

    std::ostringstream text;
    text << "# statistical-parity cases on synthetic hiring data\n";
    text << "n: " << n << "\nseed: " << seed << "\n";
    text << "q_x2_x3: " << fmt_double(res.q_x2_x3) << "\n";
    text << "q_x1_x3: " << fmt_double(res.q_x1_x3) << "\n";
    text << "q_x1_x2: " << fmt_double(res.q_x1_x2) << "\n";
    text << "p_case1: " << fmt_double(res.p_case1) << "\n";
    text << "p_case2: " << fmt_double(res.p_case2) << "\n";
    write_text_file(out_prefix + ".txt", text.str());

    ordered_json j;
    j["format"] = "predsens-parity";
    j["version"] = 1;
    j["n"] = n;
    j["seed"] = seed;
    j["q_x2_x3"] = res.q_x2_x3;
    j["q_x1_x3"] = res.q_x1_x3;
    j["q_x1_x2"] = res.q_x1_x2;
    j["p_case1"] = res.p_case1;
    j["p_case2"] = res.p_case2;
    write_text_file(out_prefix + ".json", j.dump(2) + "\n");

    std::cout << text.str();
    std::cout << "wrote " << out_prefix << ".json and " << out_prefix << ".txt\n";
    return 0;
}

int run_synth_lipschitz(const std::string& out_prefix, std::size_t n, std::uint64_t seed,
                        std::size_t points, double max_bound, double probe) {
    if (points == 0) throw ConfigError("--points must be >= 1");
    if (max_bound <= 0.0) throw ConfigError("--max-bound must be > 0");
    std::vector<predsens::ThresholdRecord> data = predsens::gen_threshold(n, seed);
    std::vector<double> bounds;
    for (std::size_t i = 1; i <= points; ++i) {
        bounds.push_back(max_bound * static_cast<double>(i) / static_cast<double>(points));
    }
    std::vector<predsens::SweepPoint> sweep = predsens::lipschitz_sweep(data, bounds, probe, seed);
    double theta_star = predsens::analytic_theta(data);

    std::ostringstream tsv;
    tsv << "bound\ttheta\tp\n";
    for (const predsens::SweepPoint& pt : sweep) {
        tsv << fmt_double(pt.bound) << "\t" << fmt_double(pt.theta) << "\t" << fmt_double(pt.p)
            << "\n";
    }
    write_text_file(out_prefix + ".tsv", tsv.str());

    ordered_json j;
    j["format"] = "predsens-lipschitz";
    j["version"] = 1;
    j["n"] = n;
    j["seed"] = seed;
    j["probe"] = probe;
    j["unconstrained_theta"] = theta_star;
    ordered_json arr = ordered_json::array();
    for (const predsens::SweepPoint& pt : sweep) {
        ordered_json e;
        e["bound"] = pt.bound;
        e["theta"] = pt.theta;
        e["p"] = pt.p;
        arr.push_back(e);
    }
    j["sweep"] = arr;
    write_text_file(out_prefix + ".json", j.dump(2) + "\n");

    std::cout << "unconstrained_theta: " << fmt_double(theta_star) << "\n";
    std::cout << "wrote " << out_prefix << ".tsv and " << out_prefix << ".json\n";
    return 0;
}

int run_verify(const std::string& report_path) {
    predsens::VerifyOutcome out = predsens::verify_report(report_path);
    std::cout << out.message << "\n";
    return out.ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"accumulated prediction sensitivity toolkit"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic token corpus");
    std::string gen_out, gen_lexicon_out, gen_subst_out;
    std::size_t gen_n = 2000;
    std::uint64_t gen_seed = 7;
    double gen_bias = predsens::default_toy_spec().bias_rate;
    double gen_noise = predsens::default_toy_spec().topic_noise_rate;
    std::size_t gen_classes = predsens::default_toy_spec().classes;
    gen->add_option("--out", gen_out, "output records file (JSON lines)")->required();
    gen->add_option("--n", gen_n, "number of records");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--bias-rate", gen_bias, "label-flip rate toward the group stereotype");
    gen->add_option("--noise-rate", gen_noise,
                    "fraction of records with mixed topics, a coin label, and no group tokens");
    gen->add_option("--classes", gen_classes, "number of task classes");
    gen->add_option("--lexicon-out", gen_lexicon_out, "also write the gendered-token lexicon");
    gen->add_option("--subst-out", gen_subst_out, "also write the token substitution map");

    // train
    auto* train = app.add_subcommand("train", "train a task classifier or protected-status model");
    std::string train_data, train_out, train_target = "task", train_summary_out;
    predsens::TrainConfig tcfg;
    std::size_t train_embed = 8;
    std::vector<std::size_t> train_hidden = {16};
    int train_downsample = -1;
    double train_keep = 1.0;
    train->add_option("--data", train_data, "training records (JSON lines)")->required();
    train->add_option("--out", train_out, "output model file")->required();
    train->add_option("--target", train_target, "what the model predicts")
        ->check(CLI::IsMember({"task", "psm"}));
    train->add_option("--epochs", tcfg.epochs, "training epochs");
    train->add_option("--lr", tcfg.lr, "learning rate");
    train->add_option("--batch", tcfg.batch, "minibatch size");
    train->add_option("--seed", tcfg.seed, "training seed");
    train->add_option("--val-fraction", tcfg.val_fraction, "held-out validation fraction");
    train->add_option("--embed-dim", train_embed, "embedding dimension");
    train->add_option("--hidden", train_hidden, "hidden layer widths")->delimiter(',');
    train->add_option("--downsample-class", train_downsample,
                      "drop a fraction of one protected class before training");
    train->add_option("--keep-fraction", train_keep,
                      "fraction of the downsampled class to keep");
    train->add_option("--summary-out", train_summary_out, "write the training summary here");

    // audit
    auto* audit = app.add_subcommand("audit", "score records and summarize per variant");
    predsens::RunConfig acfg;
    std::string audit_out, audit_policy = "zero";
    std::vector<std::string> audit_variants = {"P1"};
    audit->add_option("--data", acfg.data_path, "records to score (JSON lines)")->required();
    audit->add_option("--model", acfg.model_path, "task model file")->required();
    audit->add_option("--out", audit_out, "output prefix (.json and .txt are written)")
        ->required();
    audit->add_option("--psm", acfg.psm_path, "protected-status model (variants P2/P3)");
    audit->add_option("--lexicon", acfg.lexicon_path, "gendered-token lexicon (variants P4/P5)");
    audit->add_option("--subst", acfg.subst_path, "token substitution map (variant CF)");
    audit->add_option("--annotations", acfg.annotations_path,
                      "bias annotations (id<TAB>label per rater)");
    audit->add_option("--variants", audit_variants, "metric variants: P1 P2 P3 P4 P5 CF")
        ->delimiter(',');
    audit->add_option("--seed", acfg.seed, "statistics seed");
    audit->add_option("--mi-bins", acfg.mi_bins, "quantile bins for mutual information");
    audit->add_option("--resamples", acfg.resamples, "bootstrap resamples");
    audit->add_option("--on-missing-gender", audit_policy,
                      "records without gendered tokens: exclude or zero")
        ->check(CLI::IsMember({"exclude", "zero"}));
    audit->add_option("--protected-class", acfg.protected_class,
                      "protected class index for the gradient-weighted variants");
    audit->add_option("--saliency", acfg.saliency_examples,
                      "export per-token contributions for the first N records");

    // synth parity / lipschitz
    auto* synth = app.add_subcommand("synth", "controlled experiments on synthetic data");
    synth->require_subcommand(1);
    auto* parity = synth->add_subcommand("parity", "statistical-parity cases on hiring data");
    std::string parity_out;
    std::size_t parity_n = 10000;
    std::uint64_t parity_seed = 11;
    parity->add_option("--out", parity_out, "output prefix (.json and .txt)")->required();
    parity->add_option("--n", parity_n, "sample size");
    parity->add_option("--seed", parity_seed, "generator seed");

    auto* lip = synth->add_subcommand("lipschitz", "sensitivity under a Lipschitz bound sweep");
    std::string lip_out;
    std::size_t lip_n = 500, lip_points = 20;
    std::uint64_t lip_seed = 13;
    double lip_max = 0.2, lip_probe = 1.0;
    lip->add_option("--out", lip_out, "output prefix (.tsv and .json)")->required();
    lip->add_option("--n", lip_n, "sample size");
    lip->add_option("--seed", lip_seed, "generator seed");
    lip->add_option("--points", lip_points, "number of bounds in the sweep");
    lip->add_option("--max-bound", lip_max, "largest bound; the sweep covers (0, max]");
    lip->add_option("--probe", lip_probe, "input at which sensitivity is evaluated");

    // verify
    auto* verify = app.add_subcommand("verify", "recompute a report and compare bytes");
    std::string verify_path;
    verify->add_option("--report", verify_path, "audit report (.json)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);   // prints the usage message or help text
        return rc == 0 ? 0 : 1; // usage errors map to the config exit code
    }

    try {
        if (gen->parsed()) {
            return run_gen_corpus(gen_out, gen_n, gen_seed, gen_bias, gen_noise, gen_classes,
                                  gen_lexicon_out, gen_subst_out);
        }
        if (train->parsed()) {
            return run_train(train_data, train_out, train_target, tcfg, train_embed, train_hidden,
                             train_downsample, train_keep, train_summary_out);
        }
        if (audit->parsed()) {
            acfg.variants.clear();
            for (const std::string& name : audit_variants) {
                acfg.variants.push_back(predsens::variant_from_name(name));
            }
            acfg.policy = (audit_policy == "exclude") ? predsens::MissingGenderPolicy::Exclude
                                                      : predsens::MissingGenderPolicy::ScoreZero;
            return run_audit_cmd(acfg, audit_out);
        }
        if (parity->parsed()) return run_synth_parity(parity_out, parity_n, parity_seed);
        if (lip->parsed()) {
            return run_synth_lipschitz(lip_out, lip_n, lip_seed, lip_points, lip_max, lip_probe);
        }
        if (verify->parsed()) return run_verify(verify_path);
    } catch (const predsens::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const predsens::StateError& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return 1;
    } catch (const predsens::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const predsens::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
