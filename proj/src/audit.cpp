#include "predsens/audit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace predsens {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* policy_to_name(MissingGenderPolicy p) {
    return p == MissingGenderPolicy::Exclude ? "exclude" : "zero";
}

MissingGenderPolicy policy_from_name(const std::string& name) {
    if (name == "exclude") return MissingGenderPolicy::Exclude;
    if (name == "zero") return MissingGenderPolicy::ScoreZero;
    throw ConfigError("on_missing_gender must be 'exclude' or 'zero' (got '" + name + "')");
}

bool wants(const std::vector<Variant>& vs, Variant v) {
    return std::find(vs.begin(), vs.end(), v) != vs.end();
}

ordered_json config_to_json(const RunConfig& cfg) {
    ordered_json c;
    c["data"] = cfg.data_path;
    c["model"] = cfg.model_path;
    c["psm"] = cfg.psm_path;
    c["lexicon"] = cfg.lexicon_path;
    c["subst"] = cfg.subst_path;
    c["annotations"] = cfg.annotations_path;
    ordered_json vars = ordered_json::array();
    for (Variant v : cfg.variants) vars.push_back(variant_name(v));
    c["variants"] = vars;
    c["seed"] = cfg.seed;
    c["mi_bins"] = cfg.mi_bins;
    c["resamples"] = cfg.resamples;
    c["on_missing_gender"] = policy_to_name(cfg.policy);
    c["protected_class"] = cfg.protected_class;
    c["saliency_examples"] = cfg.saliency_examples;
    return c;
}

}  // namespace

std::string file_fingerprint(const std::string& path) {
    return to_hex64(fnv1a64(read_file(path)));
}

void RunConfig::validate() const {
    if (variants.empty()) throw ConfigError("at least one metric variant must be requested");
    std::set<std::string> seen;
    for (Variant v : variants) {
        if (!seen.insert(variant_name(v)).second) {
            throw ConfigError(std::string("variant ") + variant_name(v) + " requested twice");
        }
    }
    if (data_path.empty()) throw ConfigError("an audit requires a data file");
    if (model_path.empty()) throw ConfigError("an audit requires a task model file");
    if ((wants(variants, Variant::P2) || wants(variants, Variant::P3)) && psm_path.empty()) {
        throw ConfigError("variants P2/P3 require a protected-status model (--psm)");
    }
    if ((wants(variants, Variant::P4) || wants(variants, Variant::P5)) && lexicon_path.empty()) {
        throw ConfigError("variants P4/P5 require a gendered-token lexicon (--lexicon)");
    }
    if (wants(variants, Variant::CF) && subst_path.empty()) {
        throw ConfigError("variant CF requires a token substitution map (--subst)");
    }
    if (mi_bins < 2) throw ConfigError("--mi-bins must be >= 2");
    if (resamples < 100) throw ConfigError("--resamples must be >= 100");
}

AuditReport run_audit(const RunConfig& cfg) {
    cfg.validate();

    // Load and validate every input before any evaluation work begins.
    std::vector<TextRecord> records = load_records(cfg.data_path);
    if (records.empty()) throw DataError("data file contains no records: " + cfg.data_path);
    DiffModel task = load_model(cfg.model_path);
    if (!task.arch.is_text()) {
        throw DataError("the audit requires a text task model (token input)");
    }

    std::optional<DiffModel> psm;
    if (!cfg.psm_path.empty()) psm = load_model(cfg.psm_path);
    std::optional<std::set<std::string>> lexicon;
    if (!cfg.lexicon_path.empty()) lexicon = load_lexicon(cfg.lexicon_path);
    std::optional<SubstitutionMap> subst;
    if (!cfg.subst_path.empty()) subst = load_substitution_map(cfg.subst_path);

    std::optional<AnnotationSet> annotations;
    if (!cfg.annotations_path.empty()) {
        annotations = load_annotations(cfg.annotations_path);
    } else if (std::all_of(records.begin(), records.end(),
                           [](const TextRecord& r) { return !r.annotations.empty(); })) {
        annotations = annotations_from_records(records);
    }

    AuditReport rep;
    rep.seed = cfg.seed;
    rep.mi_bins = cfg.mi_bins;
    rep.resamples = cfg.resamples;
    rep.policy_name = policy_to_name(cfg.policy);
    rep.data_path = cfg.data_path;
    rep.model_path = cfg.model_path;
    rep.psm_path = cfg.psm_path;
    rep.lexicon_path = cfg.lexicon_path;
    rep.subst_path = cfg.subst_path;
    rep.annotations_path = cfg.annotations_path;
    rep.protected_class = cfg.protected_class;
    rep.saliency_examples = cfg.saliency_examples;
    rep.variants = cfg.variants;
    rep.n_records = records.size();
    rep.config_hash = to_hex64(fnv1a64(config_to_json(cfg).dump()));
    rep.data_fingerprint = file_fingerprint(cfg.data_path);
    rep.model_fingerprint = file_fingerprint(cfg.model_path);
    rep.psm_fingerprint = cfg.psm_path.empty() ? "" : file_fingerprint(cfg.psm_path);

    VariantInputs inputs;
    inputs.task = &task;
    inputs.psm = psm ? &*psm : nullptr;
    inputs.lexicon = lexicon ? &*lexicon : nullptr;
    inputs.subst = subst ? &*subst : nullptr;
    inputs.policy = cfg.policy;

    rep.rows.reserve(records.size());
    for (std::size_t ri = 0; ri < records.size(); ++ri) {
        const TextRecord& rec = records[ri];
        AuditRow row;
        row.id = rec.id;
        for (Variant v : cfg.variants) {
            VariantSpec spec;
            spec.variant = v;
            spec.protected_class = cfg.protected_class;
            SensitivityResult res;
            try {
                res = evaluate_variant(spec, inputs, rec.tokens);
            } catch (const NumericError& e) {
                throw NumericError("record '" + rec.id + "', variant " + variant_name(v) + ": " +
                                   e.what());
            }
            std::vector<std::string> flags;
            if (res.v_status == VStatus::NoGenderedTokens) flags.push_back("no_gendered_tokens");
            if (res.v_status == VStatus::DegenerateWeights) flags.push_back("degenerate_weights");
            if (res.cf_no_substitution) flags.push_back("no_substitution");
            bool excluded = false;
            if (res.skipped ||
                (res.cf_no_substitution && cfg.policy == MissingGenderPolicy::Exclude)) {
                flags.push_back("excluded");
                excluded = true;
            }
            if (std::any_of(res.unknown_tokens.begin(), res.unknown_tokens.end(),
                            [](bool b) { return b; })) {
                flags.push_back("unknown_tokens");
            }
            row.scores.push_back(excluded ? std::nullopt : std::make_optional(res.score));
            std::string flag;
            for (const auto& f : flags) {
                if (!flag.empty()) flag += ";";
                flag += f;
            }
            row.flags.push_back(flag);

            if (ri < cfg.saliency_examples && v != Variant::CF && !res.contribution.empty()) {
                rep.saliency.push_back(export_saliency(rec, res, task.arch.embed_dim));
            }
        }
        rep.rows.push_back(std::move(row));
    }

    // Annotation alignment for the statistics block.
    std::unordered_map<std::string, int> majority_of;
    if (annotations) {
        rep.has_annotations = true;
        for (std::size_t i = 0; i < annotations->size(); ++i) {
            majority_of[annotations->ids[i]] = annotations->majority[i];
        }
        if (annotations->raters() >= 2) {
            rep.annotation_kappa = fleiss_kappa(annotations->count_matrix(),
                                                annotations->raters());
        }
    }

    std::optional<std::size_t> cf_index;
    for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
        if (cfg.variants[vi] == Variant::CF) cf_index = vi;
    }

    for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
        VariantSummary s;
        s.variant = cfg.variants[vi];
        double total = 0.0;
        std::vector<int> labels;
        std::vector<double> scores;
        std::vector<int> labels_vs_cf;
        std::vector<double> scores_vs_cf, cf_scores;
        for (const AuditRow& row : rep.rows) {
            const auto& sc = row.scores[vi];
            if (!sc) {
                s.excluded += 1;
            } else {
                s.evaluated += 1;
                total += *sc;
            }
            const std::string& flag = row.flags[vi];
            if (flag.find("degenerate_weights") != std::string::npos) s.degenerate += 1;
            if (flag.find("no_gendered_tokens") != std::string::npos) s.no_gendered += 1;
            if (flag.find("no_substitution") != std::string::npos) s.no_substitution += 1;

            auto it = majority_of.find(row.id);
            if (sc && it != majority_of.end()) {
                labels.push_back(it->second);
                scores.push_back(*sc);
                if (cf_index && *cf_index != vi && row.scores[*cf_index]) {
                    labels_vs_cf.push_back(it->second);
                    scores_vs_cf.push_back(*sc);
                    cf_scores.push_back(*row.scores[*cf_index]);
                }
            }
        }
        if (s.evaluated > 0) s.mean_score = total / static_cast<double>(s.evaluated);

        if (rep.has_annotations && !labels.empty()) {
            try {
                s.r = point_biserial(labels, scores);
                s.mi = mutual_information(labels, scores, cfg.mi_bins);
            } catch (const Error& e) {
                s.stat_note = e.what();
            }
            if (cf_index && *cf_index != vi && s.stat_note.empty() && !labels_vs_cf.empty()) {
                try {
                    BootstrapResult br = bootstrap_significance(labels_vs_cf, scores_vs_cf,
                                                                cf_scores, cfg.resamples, cfg.seed);
                    s.p_vs_cf = br.p;
                } catch (const Error& e) {
                    s.stat_note = e.what();
                }
            }
        }
        rep.summaries.push_back(std::move(s));
    }
    return rep;
}

std::string report_to_json(const AuditReport& rep) {
    ordered_json j;
    j["format"] = "predsens-audit";
    j["version"] = 1;

    ordered_json c;
    c["data"] = rep.data_path;
    c["model"] = rep.model_path;
    c["psm"] = rep.psm_path;
    c["lexicon"] = rep.lexicon_path;
    c["subst"] = rep.subst_path;
    c["annotations"] = rep.annotations_path;
    ordered_json vars = ordered_json::array();
    for (Variant v : rep.variants) vars.push_back(variant_name(v));
    c["variants"] = vars;
    c["seed"] = rep.seed;
    c["mi_bins"] = rep.mi_bins;
    c["resamples"] = rep.resamples;
    c["on_missing_gender"] = rep.policy_name;
    c["protected_class"] = rep.protected_class;
    c["saliency_examples"] = rep.saliency_examples;
    j["config"] = c;
    j["config_hash"] = rep.config_hash;

    ordered_json inputs;
    inputs["data_fingerprint"] = rep.data_fingerprint;
    inputs["model_fingerprint"] = rep.model_fingerprint;
    inputs["psm_fingerprint"] = rep.psm_fingerprint;
    j["inputs"] = inputs;

    j["n_records"] = rep.n_records;
    ordered_json ann;
    ann["present"] = rep.has_annotations;
    if (rep.annotation_kappa) {
        ann["kappa"] = *rep.annotation_kappa;
    } else {
        ann["kappa"] = nullptr;
    }
    j["annotations"] = ann;

    ordered_json rows = ordered_json::array();
    for (const AuditRow& row : rep.rows) {
        ordered_json r;
        r["id"] = row.id;
        ordered_json scores, flags;
        for (std::size_t vi = 0; vi < rep.variants.size(); ++vi) {
            const char* name = variant_name(rep.variants[vi]);
            if (row.scores[vi]) {
                scores[name] = *row.scores[vi];
            } else {
                scores[name] = nullptr;
            }
            flags[name] = row.flags[vi];
        }
        r["scores"] = scores;
        r["flags"] = flags;
        rows.push_back(r);
    }
    j["rows"] = rows;

    ordered_json summary = ordered_json::array();
    for (const VariantSummary& s : rep.summaries) {
        ordered_json e;
        e["variant"] = variant_name(s.variant);
        e["evaluated"] = s.evaluated;
        e["excluded"] = s.excluded;
        e["degenerate"] = s.degenerate;
        e["no_gendered_tokens"] = s.no_gendered;
        e["no_substitution"] = s.no_substitution;
        e["mean_score"] = s.mean_score;
        e["point_biserial"] = s.r ? ordered_json(*s.r) : ordered_json(nullptr);
        e["mutual_information"] = s.mi ? ordered_json(*s.mi) : ordered_json(nullptr);
        e["p_vs_cf"] = s.p_vs_cf ? ordered_json(*s.p_vs_cf) : ordered_json(nullptr);
        e["note"] = s.stat_note;
        summary.push_back(e);
    }
    j["summary"] = summary;

    ordered_json saliency = ordered_json::array();
    for (const SaliencyRow& s : rep.saliency) {
        ordered_json e;
        e["id"] = s.id;
        e["variant"] = s.variant;
        e["tokens"] = s.tokens;
        e["contribution"] = s.contribution;
        e["v"] = s.v_weights;
        e["contribution_degenerate"] = s.contribution_degenerate;
        e["v_degenerate"] = s.v_degenerate;
        saliency.push_back(e);
    }
    j["saliency"] = saliency;
    j["notes"] = rep.notes;

    return j.dump(2) + "\n";
}

std::string report_to_text(const AuditReport& rep) {
    std::ostringstream out;
    out << "# accumulated prediction sensitivity audit\n";
    out << "config_hash: " << rep.config_hash << "\n";
    out << "seed: " << rep.seed << "\n";
    out << "data: " << rep.data_path << " (" << rep.data_fingerprint << ")\n";
    out << "model: " << rep.model_path << " (" << rep.model_fingerprint << ")\n";
    if (!rep.psm_path.empty()) {
        out << "psm: " << rep.psm_path << " (" << rep.psm_fingerprint << ")\n";
    }
    if (!rep.lexicon_path.empty()) out << "lexicon: " << rep.lexicon_path << "\n";
    if (!rep.subst_path.empty()) out << "subst: " << rep.subst_path << "\n";
    out << "records: " << rep.n_records << "\n";
    out << "on_missing_gender: " << rep.policy_name << "\n";
    out << "annotations: " << (rep.has_annotations ? "present" : "absent");
    if (rep.annotation_kappa) out << " (fleiss_kappa " << fmt_double(*rep.annotation_kappa) << ")";
    out << "\n\n";

    out << "id";
    for (Variant v : rep.variants) out << "\t" << variant_name(v);
    out << "\tflags\n";
    for (const AuditRow& row : rep.rows) {
        out << row.id;
        std::string flags;
        for (std::size_t vi = 0; vi < rep.variants.size(); ++vi) {
            out << "\t" << (row.scores[vi] ? fmt_double(*row.scores[vi]) : "-");
            if (!row.flags[vi].empty()) {
                if (!flags.empty()) flags += " ";
                flags += std::string(variant_name(rep.variants[vi])) + ":" + row.flags[vi];
            }
        }
        out << "\t" << flags << "\n";
    }

    out << "\n# summary\n";
    out << "variant\tevaluated\texcluded\tdegenerate\tno_gendered\tno_subst\tmean\tr\tmi\tp_vs_cf\tnote\n";
    for (const VariantSummary& s : rep.summaries) {
        out << variant_name(s.variant) << "\t" << s.evaluated << "\t" << s.excluded << "\t"
            << s.degenerate << "\t" << s.no_gendered << "\t" << s.no_substitution << "\t"
            << fmt_double(s.mean_score) << "\t" << (s.r ? fmt_double(*s.r) : "-") << "\t"
            << (s.mi ? fmt_double(*s.mi) : "-") << "\t"
            << (s.p_vs_cf ? fmt_double(*s.p_vs_cf) : "-") << "\t" << s.stat_note << "\n";
    }

    for (const std::string& n : rep.notes) out << "note: " << n << "\n";
    return out.str();
}

VerifyOutcome verify_report(const std::string& report_json_path) {
    VerifyOutcome out;
    std::string stored = read_file(report_json_path);
    ordered_json j;
    try {
        j = ordered_json::parse(stored);
    } catch (const std::exception& e) {
        out.message = std::string("report is not valid structured text: ") + e.what();
        return out;
    }
    if (j.value("format", std::string()) != "predsens-audit") {
        out.message = "file is not an audit report";
        return out;
    }

    RunConfig cfg;
    const auto& c = j.at("config");
    cfg.data_path = c.at("data").get<std::string>();
    cfg.model_path = c.at("model").get<std::string>();
    cfg.psm_path = c.at("psm").get<std::string>();
    cfg.lexicon_path = c.at("lexicon").get<std::string>();
    cfg.subst_path = c.at("subst").get<std::string>();
    cfg.annotations_path = c.at("annotations").get<std::string>();
    cfg.variants.clear();
    for (const auto& v : c.at("variants")) {
        cfg.variants.push_back(variant_from_name(v.get<std::string>()));
    }
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.mi_bins = c.at("mi_bins").get<std::size_t>();
    cfg.resamples = c.at("resamples").get<std::size_t>();
    cfg.policy = policy_from_name(c.at("on_missing_gender").get<std::string>());
    cfg.protected_class = c.at("protected_class").get<std::size_t>();
    cfg.saliency_examples = c.at("saliency_examples").get<std::size_t>();

    AuditReport recomputed = run_audit(cfg);
    std::string fresh = report_to_json(recomputed);
    if (fresh == stored) {
        out.ok = true;
        out.message = "report matches a recomputation from its inputs";
    } else {
        out.message = "report does not match a recomputation from its inputs";
    }
    return out;
}

}  // namespace predsens
