#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnli/common.hpp"
#include "qnli/data.hpp"
#include "qnli/metrics.hpp"
#include "qnli/models.hpp"
#include "qnli/pregroup.hpp"
#include "qnli/training.hpp"

namespace qnli {

// One configuration object serves every subcommand; JSON config files carry
// the same field names and command-line flags override them.
struct ExperimentConfig {
    std::string sick, lexicon, embeddings, data_dir, out_dir;
    std::string data_file;  // a single JSONL file (eval)
    std::string pairs, model_file;
    int n = 100;
    int max_words = 11;
    int split_train = 70, split_dev = 15, split_test = 15;
    std::string model = "kl";
    std::string task = "inference";
    int epochs = 60;
    double lr_angles = 0.05;
    double lr_dense = 1e-3;
    double fd_step = 1e-3;
    int cluster_k = 4;
    int ansatz_layers = 1;
    int qubit_cap = 16;
    int threads = 1;
    std::uint64_t seed = 7;

    nlohmann::json to_json() const {
        return {{"sick", sick},
                {"lexicon", lexicon},
                {"embeddings", embeddings},
                {"data_dir", data_dir},
                {"out_dir", out_dir},
                {"data_file", data_file},
                {"pairs", pairs},
                {"model_file", model_file},
                {"n", n},
                {"max_words", max_words},
                {"split_train", split_train},
                {"split_dev", split_dev},
                {"split_test", split_test},
                {"model", model},
                {"task", task},
                {"epochs", epochs},
                {"lr_angles", lr_angles},
                {"lr_dense", lr_dense},
                {"fd_step", fd_step},
                {"cluster_k", cluster_k},
                {"ansatz_layers", ansatz_layers},
                {"qubit_cap", qubit_cap},
                {"threads", threads},
                {"seed", seed}};
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("sick", c.sick);
        get("lexicon", c.lexicon);
        get("embeddings", c.embeddings);
        get("data_dir", c.data_dir);
        get("out_dir", c.out_dir);
        get("data_file", c.data_file);
        get("pairs", c.pairs);
        get("model_file", c.model_file);
        get("n", c.n);
        get("max_words", c.max_words);
        get("split_train", c.split_train);
        get("split_dev", c.split_dev);
        get("split_test", c.split_test);
        get("model", c.model);
        get("task", c.task);
        get("epochs", c.epochs);
        get("lr_angles", c.lr_angles);
        get("lr_dense", c.lr_dense);
        get("fd_step", c.fd_step);
        get("cluster_k", c.cluster_k);
        get("ansatz_layers", c.ansatz_layers);
        get("qubit_cap", c.qubit_cap);
        get("threads", c.threads);
        get("seed", c.seed);
        return c;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.model = model_from_string(model);
        t.task = task_from_string(task);
        t.epochs = epochs;
        t.lr_angles = lr_angles;
        t.lr_dense = lr_dense;
        t.seed = seed;
        t.fd_step = fd_step;
        t.cluster_k = cluster_k;
        t.ansatz.layers = ansatz_layers;
        t.qubit_cap = qubit_cap;
        t.threads = threads;
        return t;
    }
};

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw malformed_input("invalid JSON config: " + path);
    return ExperimentConfig::from_json(j);
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << text;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw malformed_input("invalid JSON in " + path);
    return j;
}

/// Wires a sentence would need, without compiling.
inline int wire_count(const Diagram& d) { return d.n_wires(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest

struct IngestReport {
    int qualifying = 0;   // rows passing the word-count filter
    int parseable = 0;    // rows whose both sentences compile
    int sampled = 0;
    int train = 0, dev = 0, test = 0;
    std::vector<std::pair<std::string, std::string>> excluded;  // id, reason
};

/// load -> lexicon/qubit filter -> seeded draw -> bidirectional expansion ->
/// tied 70:15:15 split. Writes train/dev/test.jsonl, excluded.txt and
/// meta.json under out_dir.
inline IngestReport run_ingest(const ExperimentConfig& cfg) {
    const Lexicon lexicon = load_lexicon(cfg.lexicon);
    ExampleSet all = load_sick(cfg.sick, cfg.max_words, -1, 0);
    IngestReport report;
    report.qualifying = int(all.examples.size());

    ExampleSet pool;
    pool.provenance = {cfg.sick, cfg.max_words, cfg.n, cfg.seed};
    for (const auto& e : all.examples) {
        std::string reason;
        for (const auto* side : {&e.premise, &e.hypothesis}) {
            try {
                Diagram d = parse(*side, lexicon, 's');
                if (d.n_wires() > cfg.qubit_cap) {
                    reason = "needs " + std::to_string(d.n_wires()) +
                             " qubits, cap is " + std::to_string(cfg.qubit_cap) +
                             ": \"" + join_tokens(*side) + "\"";
                    break;
                }
            } catch (const parse_failure& pf) {
                reason = pf.what();
                break;
            }
        }
        if (reason.empty())
            pool.examples.push_back(e);
        else
            report.excluded.push_back({e.id, reason});
    }
    report.parseable = int(pool.examples.size());

    if (cfg.n <= 0 || int(pool.examples.size()) < cfg.n)
        throw insufficient_data("need " + std::to_string(cfg.n) +
                                " parseable pairs, found " +
                                std::to_string(pool.examples.size()));
    {
        std::vector<std::size_t> idx(pool.examples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng(derive_seed(cfg.seed, "draw"));
        shuffle(idx, rng);
        idx.resize(std::size_t(cfg.n));
        std::sort(idx.begin(), idx.end());
        std::vector<Example> picked;
        for (std::size_t i : idx) picked.push_back(std::move(pool.examples[i]));
        pool.examples = std::move(picked);
    }
    report.sampled = int(pool.examples.size());

    ExampleSet expanded = expand_bidirectional(pool);
    Splits splits = split(expanded, cfg.split_train, cfg.split_dev, cfg.split_test,
                          derive_seed(cfg.seed, "split"));
    report.train = int(splits.train.examples.size());
    report.dev = int(splits.dev.examples.size());
    report.test = int(splits.test.examples.size());

    std::filesystem::create_directories(cfg.out_dir);
    write_jsonl(cfg.out_dir + "/train.jsonl", splits.train);
    write_jsonl(cfg.out_dir + "/dev.jsonl", splits.dev);
    write_jsonl(cfg.out_dir + "/test.jsonl", splits.test);
    std::string exc;
    for (const auto& [id, reason] : report.excluded)
        exc += id + "\t" + reason + "\n";
    detail::write_text(cfg.out_dir + "/excluded.txt", exc);
    nlohmann::json meta = cfg.to_json();
    meta["qualifying"] = report.qualifying;
    meta["parseable"] = report.parseable;
    detail::write_text(cfg.out_dir + "/meta.json", meta.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// train

inline std::unique_ptr<Model> make_model(const TrainConfig& cfg,
                                         const ParamStore& store,
                                         const Embeddings* embeddings) {
    switch (cfg.model) {
        case ModelKind::kl:
            return std::make_unique<KlModel>(cfg.task, store);
        case ModelKind::xornet:
            return std::make_unique<XorModel>(cfg.task, store);
        default:
            if (!embeddings)
                throw malformed_input("cluster model requires --embeddings");
            return std::make_unique<ClusterModel>(cfg.task, store, *embeddings,
                                                  cfg.cluster_k, cfg.seed);
    }
}

inline TrainContext compile_context(const Splits& splits, const Lexicon& lexicon,
                                    const TrainConfig& cfg) {
    TrainContext ctx;
    ctx.qubit_cap = cfg.qubit_cap;
    ctx.train = compile_split(splits.train, ctx.bank, lexicon, cfg.ansatz, ctx.store);
    ctx.dev = compile_split(splits.dev, ctx.bank, lexicon, cfg.ansatz, ctx.store);
    ctx.test = compile_split(splits.test, ctx.bank, lexicon, cfg.ansatz, ctx.store);
    ctx.build_indices();
    audit_param_count(ctx);
    return ctx;
}

struct TrainOutcome {
    RunLog log;
    nlohmann::json summary;
    nlohmann::json model_file;
};

inline TrainOutcome run_train_in_memory(const Splits& splits,
                                        const Lexicon& lexicon,
                                        const ExperimentConfig& cfg) {
    const TrainConfig tc = cfg.train_config();
    TrainContext ctx = compile_context(splits, lexicon, tc);

    Embeddings emb;
    const Embeddings* emb_ptr = nullptr;
    if (tc.model == ModelKind::cluster) {
        if (cfg.embeddings.empty())
            throw malformed_input("cluster model requires --embeddings");
        emb = load_embeddings(cfg.embeddings);
        emb_ptr = &emb;
    }
    auto model = make_model(tc, ctx.store, emb_ptr);

    TrainOutcome out;
    out.log = train_model(*model, ctx, tc);

    Rng jitter(derive_seed(tc.seed, "test-jitter"));
    EvalResult test = evaluate_split(*model, ctx, ctx.test, jitter, tc);
    const long long P = out.log.n_params;
    const long long n_test = (long long)ctx.test.size();

    nlohmann::json s;
    s["model"] = cfg.model;
    s["task"] = cfg.task;
    s["seed"] = cfg.seed;
    s["P"] = P;
    s["best_epoch"] = out.log.best_epoch;
    s["epochs"] = cfg.epochs;
    s["n_train"] = ctx.train.size();
    s["n_dev"] = ctx.dev.size();
    s["n_test"] = ctx.test.size();
    double logl = 0.0;
    if (tc.task == Task::relatedness) {
        s["test_mse"] = test.loss;
        logl = log_likelihood_regression(test.loss, n_test);
    } else {
        s["test_macro_f1"] = macro_f1(test.joint);
        s["test_ce"] = test.loss;
        logl = log_likelihood_classification(test.loss, n_test);
    }
    s["peak_igpp"] = out.log.peak_igpp();
    s["logl"] = logl;
    s["aic"] = aic(P, logl);
    s["bic"] = bic(P, n_test, logl);
    std::vector<double> i_dev;
    for (const auto& r : out.log.records) i_dev.push_back(r.info_dev);
    s["i_dev"] = i_dev;
    s["config"] = cfg.to_json();
    out.summary = std::move(s);

    nlohmann::json m;
    m["model"] = cfg.model;
    m["task"] = cfg.task;
    m["seed"] = cfg.seed;
    m["ansatz_layers"] = cfg.ansatz_layers;
    m["qubit_cap"] = cfg.qubit_cap;
    m["slot_names"] = ctx.store.names;
    m["params"] = model->params_json();
    out.model_file = std::move(m);
    return out;
}

inline TrainOutcome run_train(const ExperimentConfig& cfg) {
    Splits splits;
    splits.train = read_jsonl(cfg.data_dir + "/train.jsonl");
    splits.dev = read_jsonl(cfg.data_dir + "/dev.jsonl");
    splits.test = read_jsonl(cfg.data_dir + "/test.jsonl");
    const Lexicon lexicon = load_lexicon(cfg.lexicon);
    TrainOutcome out = run_train_in_memory(splits, lexicon, cfg);
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text(cfg.out_dir + "/runlog.csv", out.log.to_csv());
    detail::write_text(cfg.out_dir + "/model.json", out.model_file.dump(2) + "\n");
    detail::write_text(cfg.out_dir + "/summary.json", out.summary.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// model reload (eval / probe)

// The store lives behind a unique_ptr so its address stays stable when a
// LoadedModel moves; the model keeps a pointer to it.
struct LoadedModel {
    std::unique_ptr<ParamStore> store = std::make_unique<ParamStore>();
    std::unique_ptr<Model> model;
    Embeddings embeddings;
    bool has_embeddings = false;
    AnsatzConfig ansatz;
    int qubit_cap = 16;
    std::uint64_t seed = 0;
    Rng extend_rng{0};

    Task task() const { return model->task(); }

    /// Compile a sentence against the stored symbol table, extending the
    /// model deterministically for new vocabulary.
    int compile_sentence(const std::vector<std::string>& tokens, char target,
                         const Lexicon& lexicon, SentenceBank& bank) {
        int id = bank.add(tokens, lexicon, target, ansatz, *store);
        model->sync_with_store(extend_rng, has_embeddings ? &embeddings : nullptr);
        return id;
    }
};

inline LoadedModel load_model(const std::string& model_path,
                              const std::string& embeddings_path) {
    nlohmann::json m = detail::read_json_file(model_path);
    LoadedModel lm;
    lm.ansatz.layers = m.at("ansatz_layers").get<int>();
    lm.qubit_cap = m.at("qubit_cap").get<int>();
    lm.seed = m.at("seed").get<std::uint64_t>();
    lm.extend_rng = Rng(derive_seed(lm.seed, "extend"));
    for (const auto& name : m.at("slot_names"))
        lm.store->lookup_or_add(name.get<std::string>());
    if (!embeddings_path.empty()) {
        lm.embeddings = load_embeddings(embeddings_path);
        lm.has_embeddings = true;
    }
    const ModelKind kind = model_from_string(m.at("model").get<std::string>());
    const Task task = task_from_string(m.at("task").get<std::string>());
    if (kind == ModelKind::cluster) {
        lm.model = std::make_unique<ClusterModel>(task, *lm.store,
                                                  ClusterModel::from_file_t{});
    } else if (kind == ModelKind::kl) {
        lm.model = std::make_unique<KlModel>(task, *lm.store);
    } else {
        lm.model = std::make_unique<XorModel>(task, *lm.store);
    }
    lm.model->load_params_json(m.at("params"));
    return lm;
}

// ---------------------------------------------------------------------------
// eval

inline nlohmann::json run_eval(const ExperimentConfig& cfg) {
    LoadedModel lm = load_model(cfg.model_file, cfg.embeddings);
    const Lexicon lexicon = load_lexicon(cfg.lexicon);
    ExampleSet data = read_jsonl(cfg.data_file);

    TrainContext ctx;
    ctx.qubit_cap = lm.qubit_cap;
    for (const auto& e : data.examples) {
        CompiledPair p;
        p.prem = lm.compile_sentence(e.premise, 's', lexicon, ctx.bank);
        p.hyp = lm.compile_sentence(e.hypothesis, 's', lexicon, ctx.bank);
        p.label = int(e.label);
        p.relatedness = e.relatedness;
        p.id = e.id;
        ctx.test.push_back(std::move(p));
    }

    TrainConfig tc;
    tc.threads = cfg.threads;
    Rng jitter(derive_seed(lm.seed, "eval-jitter"));
    EvalResult r = evaluate_split(*lm.model, ctx, ctx.test, jitter, tc);

    nlohmann::json out;
    out["n"] = ctx.test.size();
    out["task"] = to_string(lm.task());
    if (lm.task() == Task::relatedness) {
        out["mse"] = r.loss;
    } else {
        out["ce"] = r.loss;
        out["macro_f1"] = macro_f1(r.joint);
    }
    out["mutual_information"] = r.info;
    return out;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeRow {
    std::string a, b;
    std::string gold;
    std::string pred;  // "0"/"1"/"2" or "ERR"
};

inline std::vector<ProbeRow> run_probe(const ExperimentConfig& cfg) {
    LoadedModel lm = load_model(cfg.model_file, cfg.embeddings);
    if (lm.task() != Task::inference)
        throw malformed_input("probe needs an inference-task model");
    const Lexicon lexicon = load_lexicon(cfg.lexicon);

    std::ifstream in(cfg.pairs);
    if (!in) throw malformed_input("cannot open pairs file: " + cfg.pairs);

    SentenceBank bank;
    std::vector<ProbeRow> rows;
    std::string line;
    int lineno = 0;
    TrainConfig tc;
    tc.threads = cfg.threads;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = qnli::detail::split_tsv(line);
        if (cells.size() != 3)
            throw malformed_input(cfg.pairs + ":" + std::to_string(lineno) +
                                  ": expected 3 tab-separated columns");
        ProbeRow row{cells[0], cells[1], cells[2], "ERR"};
        try {
            auto compile_phrase = [&](const std::string& text) {
                auto toks = tokenize(text);
                try {
                    return lm.compile_sentence(toks, 's', lexicon, bank);
                } catch (const parse_failure&) {
                    return lm.compile_sentence(toks, 'n', lexicon, bank);
                }
            };
            int a = compile_phrase(cells[0]);
            int b = compile_phrase(cells[1]);
            auto theta = lm.model->slot_theta(0, false);
            auto oa = simulate(qnli::bind(bank.circuits[std::size_t(a)], theta), lm.qubit_cap);
            auto ob = simulate(qnli::bind(bank.circuits[std::size_t(b)], theta), lm.qubit_cap);
            row.pred = std::to_string(
                argmax_label(lm.model->predict(oa, ob).logits));
        } catch (const parse_failure&) {
            row.pred = "ERR";
        } catch (const numeric_failure&) {
            row.pred = "ERR";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string probe_csv(const std::vector<ProbeRow>& rows) {
    std::string out = "A,B,Gold,Pred\n";
    for (const auto& r : rows)
        out += r.a + "," + r.b + "," + r.gold + "," + r.pred + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// report

inline std::string fmt_cell(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

struct ReportRow {
    std::string model;
    std::map<std::string, std::string> cells;
};

inline std::vector<ReportRow> build_report(const std::vector<nlohmann::json>& summaries) {
    // one row per model; inference summaries win the shared fit columns
    std::map<std::string, std::map<std::string, std::pair<int, std::string>>> rows;
    for (const auto& s : summaries) {
        const std::string model = s.at("model").get<std::string>();
        const bool inference = s.at("task").get<std::string>() == "inference";
        const int rank = inference ? 2 : 1;
        auto put = [&](const std::string& col, const std::string& val, int r) {
            auto& cell = rows[model][col];
            if (r >= cell.first) cell = {r, val};
        };
        put("dof", std::to_string(s.at("P").get<long long>()), rank);
        if (s.contains("test_mse"))
            put("relatedness_mse", fmt_cell(s.at("test_mse").get<double>()), rank);
        if (s.contains("test_macro_f1"))
            put("inference_f1", fmt_cell(s.at("test_macro_f1").get<double>()), rank);
        if (s.contains("test_ce"))
            put("inference_ce", fmt_cell(s.at("test_ce").get<double>()), rank);
        if (s.contains("peak_igpp"))
            put("peak_igpp", fmt_cell(s.at("peak_igpp").get<double>(), "%.3g"), rank);
        if (s.contains("logl") && !s.at("logl").is_null()) {
            put("logl", fmt_cell(s.at("logl").get<double>()), rank);
            put("aic", fmt_cell(s.at("aic").get<double>(), "%.3g"), rank);
            put("bic", fmt_cell(s.at("bic").get<double>(), "%.3g"), rank);
        }
    }
    std::vector<ReportRow> out;
    for (const auto& [model, cells] : rows) {
        ReportRow r;
        r.model = model;
        for (const auto& [col, cell] : cells) r.cells[col] = cell.second;
        out.push_back(std::move(r));
    }
    return out;
}

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "model",        "dof",          "relatedness_mse", "inference_f1",
        "inference_ce", "peak_igpp",    "logl",            "aic",
        "bic"};
    return cols;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    const auto& cols = report_columns();
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i)
        out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& r : rows) {
        out += r.model;
        for (std::size_t i = 1; i < cols.size(); ++i) {
            auto it = r.cells.find(cols[i]);
            out += ",";
            out += it == r.cells.end() ? "–" : it->second;
        }
        out += "\n";
    }
    return out;
}

inline std::string report_text(const std::vector<ReportRow>& rows) {
    const auto& cols = report_columns();
    std::vector<std::size_t> width(cols.size());
    auto cell_of = [&](const ReportRow& r, std::size_t i) -> std::string {
        if (i == 0) return r.model;
        auto it = r.cells.find(cols[i]);
        return it == r.cells.end() ? "–" : it->second;
    };
    for (std::size_t i = 0; i < cols.size(); ++i) {
        width[i] = cols[i].size();
        for (const auto& r : rows) width[i] = std::max(width[i], cell_of(r, i).size());
    }
    std::string out;
    auto emit_row = [&](auto&& get) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            std::string c = get(i);
            out += c + std::string(width[i] - std::min(width[i], c.size()) + 2, ' ');
        }
        out += "\n";
    };
    emit_row([&](std::size_t i) { return cols[i]; });
    for (const auto& r : rows) emit_row([&](std::size_t i) { return cell_of(r, i); });
    return out;
}

}  // namespace qnli
