#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnli/experiment.hpp"

namespace {

// flags override config-file values, so every option funnels through this
struct Flag {
    CLI::Option* opt = nullptr;
    std::function<void(qnli::ExperimentConfig&)> apply;
};

struct ConfigBinder {
    std::vector<Flag> flags;
    std::string config_path;

    template <typename T>
    void add(CLI::App* cmd, const std::string& name, T& staging,
             T qnli::ExperimentConfig::* field, const std::string& help) {
        auto* opt = cmd->add_option(name, staging, help);
        flags.push_back({opt, [opt, &staging, field](qnli::ExperimentConfig& c) {
                             if (opt->count() > 0) c.*field = staging;
                         }});
    }

    qnli::ExperimentConfig resolve() const {
        qnli::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = qnli::load_config_file(config_path);
        for (const auto& f : flags) f.apply(cfg);
        return cfg;
    }
};

struct Staging {
    qnli::ExperimentConfig s;
};

void bind_common(CLI::App* cmd, ConfigBinder& b, Staging& st) {
    cmd->add_option("--config", b.config_path, "JSON config file; flags override");
    b.add(cmd, "--seed", st.s.seed, &qnli::ExperimentConfig::seed, "root seed");
    b.add(cmd, "--threads", st.s.threads, &qnli::ExperimentConfig::threads,
          "worker threads (results are schedule-independent)");
}

int run(int argc, char** argv) {
    CLI::App app{"few-shot quantum NLI experiment kit"};
    app.require_subcommand(1);

    // ingest ----------------------------------------------------------------
    auto* ingest = app.add_subcommand(
        "ingest", "sample a SICK-format TSV into train/dev/test JSONL");
    ConfigBinder bi;
    Staging si;
    bind_common(ingest, bi, si);
    bi.add(ingest, "--sick", si.s.sick, &qnli::ExperimentConfig::sick, "SICK TSV path");
    bi.add(ingest, "--lexicon", si.s.lexicon, &qnli::ExperimentConfig::lexicon,
           "pregroup lexicon path");
    bi.add(ingest, "--out", si.s.out_dir, &qnli::ExperimentConfig::out_dir,
           "output directory");
    bi.add(ingest, "--n", si.s.n, &qnli::ExperimentConfig::n, "pairs to sample");
    bi.add(ingest, "--max-words", si.s.max_words, &qnli::ExperimentConfig::max_words,
           "sentence length cap");
    bi.add(ingest, "--qubit-cap", si.s.qubit_cap, &qnli::ExperimentConfig::qubit_cap,
           "exclude sentences needing more qubits");

    // train -----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train a model, log per-epoch metrics");
    ConfigBinder bt;
    Staging st;
    bind_common(train, bt, st);
    bt.add(train, "--data", st.s.data_dir, &qnli::ExperimentConfig::data_dir,
           "directory with train/dev/test.jsonl");
    bt.add(train, "--lexicon", st.s.lexicon, &qnli::ExperimentConfig::lexicon,
           "pregroup lexicon path");
    bt.add(train, "--embeddings", st.s.embeddings, &qnli::ExperimentConfig::embeddings,
           "word embedding table (cluster model)");
    bt.add(train, "--out", st.s.out_dir, &qnli::ExperimentConfig::out_dir,
           "output directory");
    bt.add(train, "--model", st.s.model, &qnli::ExperimentConfig::model,
           "kl | xor | cluster");
    bt.add(train, "--task", st.s.task, &qnli::ExperimentConfig::task,
           "relatedness | inference");
    bt.add(train, "--epochs", st.s.epochs, &qnli::ExperimentConfig::epochs, "epochs");
    bt.add(train, "--lr-angles", st.s.lr_angles, &qnli::ExperimentConfig::lr_angles,
           "Adam lr for circuit angles / cluster mu,rho");
    bt.add(train, "--lr-dense", st.s.lr_dense, &qnli::ExperimentConfig::lr_dense,
           "Adam lr for dense and readout weights");
    bt.add(train, "--fd-step", st.s.fd_step, &qnli::ExperimentConfig::fd_step,
           "finite-difference step (radians)");
    bt.add(train, "--k", st.s.cluster_k, &qnli::ExperimentConfig::cluster_k,
           "clusters per syntactic type group");
    bt.add(train, "--layers", st.s.ansatz_layers, &qnli::ExperimentConfig::ansatz_layers,
           "entangling layers per multi-qubit word");
    bt.add(train, "--qubit-cap", st.s.qubit_cap, &qnli::ExperimentConfig::qubit_cap,
           "simulator qubit cap");

    // eval ------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "evaluate a trained model on a JSONL file");
    ConfigBinder be;
    Staging se;
    bind_common(eval, be, se);
    be.add(eval, "--model-file", se.s.model_file, &qnli::ExperimentConfig::model_file,
           "model.json from train");
    be.add(eval, "--data", se.s.data_file, &qnli::ExperimentConfig::data_file,
           "JSONL examples");
    be.add(eval, "--lexicon", se.s.lexicon, &qnli::ExperimentConfig::lexicon,
           "pregroup lexicon path");
    be.add(eval, "--embeddings", se.s.embeddings, &qnli::ExperimentConfig::embeddings,
           "word embedding table (cluster model)");
    be.add(eval, "--out", se.s.out_dir, &qnli::ExperimentConfig::out_dir,
           "write metrics JSON here instead of stdout");

    // probe -----------------------------------------------------------------
    auto* probe = app.add_subcommand(
        "probe", "predict labels for word/sentence pairs from a TSV");
    ConfigBinder bp;
    Staging sp;
    bind_common(probe, bp, sp);
    bp.add(probe, "--model-file", sp.s.model_file, &qnli::ExperimentConfig::model_file,
           "model.json from an inference run");
    bp.add(probe, "--pairs", sp.s.pairs, &qnli::ExperimentConfig::pairs,
           "TSV: phrase A <TAB> phrase B <TAB> gold");
    bp.add(probe, "--lexicon", sp.s.lexicon, &qnli::ExperimentConfig::lexicon,
           "pregroup lexicon path");
    bp.add(probe, "--embeddings", sp.s.embeddings, &qnli::ExperimentConfig::embeddings,
           "word embedding table (cluster model)");
    bp.add(probe, "--out", sp.s.out_dir, &qnli::ExperimentConfig::out_dir,
           "write CSV here instead of stdout");

    // report ----------------------------------------------------------------
    auto* report = app.add_subcommand(
        "report", "comparison table from one or more summary.json files");
    std::vector<std::string> summary_paths;
    std::string report_out_csv, report_out_text;
    report->add_option("summaries", summary_paths, "summary.json paths")->required();
    report->add_option("--out-csv", report_out_csv, "CSV output path");
    report->add_option("--out-text", report_out_text, "plain-text output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    if (ingest->parsed()) {
        auto cfg = bi.resolve();
        auto rep = qnli::run_ingest(cfg);
        std::printf("qualifying %d, parseable %d, sampled %d -> train %d dev %d test %d, excluded %zu\n",
                    rep.qualifying, rep.parseable, rep.sampled, rep.train, rep.dev,
                    rep.test, rep.excluded.size());
    } else if (train->parsed()) {
        auto cfg = bt.resolve();
        auto out = qnli::run_train(cfg);
        std::printf("P=%lld best_epoch=%d summary=%s\n", out.log.n_params,
                    out.log.best_epoch, (cfg.out_dir + "/summary.json").c_str());
    } else if (eval->parsed()) {
        auto cfg = be.resolve();
        auto metrics = qnli::run_eval(cfg);
        if (cfg.out_dir.empty())
            std::cout << metrics.dump(2) << "\n";
        else
            qnli::detail::write_text(cfg.out_dir, metrics.dump(2) + "\n");
    } else if (probe->parsed()) {
        auto cfg = bp.resolve();
        auto rows = qnli::run_probe(cfg);
        std::string csv = qnli::probe_csv(rows);
        if (cfg.out_dir.empty())
            std::cout << csv;
        else
            qnli::detail::write_text(cfg.out_dir, csv);
    } else if (report->parsed()) {
        std::vector<nlohmann::json> summaries;
        for (const auto& p : summary_paths)
            summaries.push_back(qnli::detail::read_json_file(p));
        auto rows = qnli::build_report(summaries);
        if (!report_out_csv.empty())
            qnli::detail::write_text(report_out_csv, qnli::report_csv(rows));
        if (!report_out_text.empty())
            qnli::detail::write_text(report_out_text, qnli::report_text(rows));
        std::cout << qnli::report_text(rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const qnli::malformed_input& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const qnli::parse_failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const qnli::insufficient_data& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const qnli::numeric_failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
