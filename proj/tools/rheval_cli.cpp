// Command-line front end: corpus checks, steering-direction extraction,
// sweeps, scoring, curve math, attention reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "rheval/common.hpp"
#include "rheval/harness.hpp"

using namespace rheval;

static std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int main(int argc, char** argv) {
    CLI::App app{"reasoning-length evaluation toolkit"};
    app.require_subcommand(1);

    // corpus validate
    auto* corpus_cmd = app.add_subcommand("corpus", "corpus utilities");
    corpus_cmd->require_subcommand(1);
    auto* corpus_validate = corpus_cmd->add_subcommand("validate", "validate a corpus file");
    std::string corpus_path;
    corpus_validate->add_option("--corpus", corpus_path, "corpus JSONL path")->required();

    // steer extract
    auto* steer_cmd = app.add_subcommand("steer", "steering utilities");
    steer_cmd->require_subcommand(1);
    auto* steer_extract = steer_cmd->add_subcommand("extract", "extract steering directions");
    std::string se_corpus, se_records, se_rule = "median", se_out, se_backend = "toy";
    steer_extract->add_option("--corpus", se_corpus, "corpus JSONL path")->required();
    steer_extract->add_option("--records", se_records, "generation records JSONL")->required();
    steer_extract->add_option("--rule", se_rule, "partition rule: median|quartile");
    steer_extract->add_option("--out", se_out, "output directions file")->required();
    steer_extract->add_option("--backend", se_backend, "backend name");

    // run
    auto* run_cmd = app.add_subcommand("run", "run a length-control sweep");
    std::string run_config_path;
    RunConfig inline_cfg;
    std::vector<std::string> run_grid;
    run_cmd->add_option("--config", run_config_path, "run config JSON file");
    run_cmd->add_option("--corpus", inline_cfg.corpus_path, "corpus JSONL path");
    run_cmd->add_option("--grid", run_grid, "control tags, e.g. budget:0 budget:16");
    run_cmd->add_option("--out", inline_cfg.out_dir, "run store directory");
    run_cmd->add_option("--seed", inline_cfg.seed, "run seed");
    run_cmd->add_option("--judge", inline_cfg.judge, "judge: mock|live");
    run_cmd->add_option("--workers", inline_cfg.workers, "worker pool size per grid point");
    run_cmd->add_option("--max-tokens", inline_cfg.max_tokens, "generation cap per sample");
    run_cmd->add_option("--directions", inline_cfg.directions_path, "steering directions file");
    run_cmd->add_option("--backend", inline_cfg.backend, "backend name");

    // score
    auto* score_cmd = app.add_subcommand("score", "score a record file");
    std::string sc_records, sc_corpus, sc_judge = "mock", sc_verdicts;
    score_cmd->add_option("--records", sc_records, "generation records JSONL")->required();
    score_cmd->add_option("--corpus", sc_corpus, "corpus JSONL path")->required();
    score_cmd->add_option("--judge", sc_judge, "judge: mock|live");
    score_cmd->add_option("--verdicts", sc_verdicts, "append verdicts to this JSONL file");

    // auc
    auto* auc_cmd = app.add_subcommand("auc", "compute the balance area from a curve CSV");
    std::string auc_curve;
    auc_cmd->add_option("--curve", auc_curve, "CSV with T,R,H rows")->required();

    // attn report
    auto* attn_cmd = app.add_subcommand("attn", "attention analysis");
    attn_cmd->require_subcommand(1);
    auto* attn_report = attn_cmd->add_subcommand("report", "segment attention shares");
    std::string at_records, at_corpus, at_out, at_backend = "toy";
    attn_report->add_option("--records", at_records, "generation records JSONL")->required();
    attn_report->add_option("--corpus", at_corpus, "corpus JSONL path")->required();
    attn_report->add_option("--out", at_out, "output CSV path")->required();
    attn_report->add_option("--backend", at_backend, "backend name");

    // report
    auto* report_cmd = app.add_subcommand("report", "render the report bundle for a run store");
    std::string rp_store;
    report_cmd->add_option("--store", rp_store, "run store directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (corpus_validate->parsed()) {
            Corpus corpus = load_corpus(corpus_path);
            std::printf("ok: %zu samples (%zu reasoning, %zu perception), fingerprint %s\n",
                        corpus.size(), corpus.count(Task::reasoning),
                        corpus.count(Task::perception), hex64(corpus.fingerprint()).c_str());
            return 0;
        }

        if (steer_extract->parsed()) {
            Corpus corpus = load_corpus(se_corpus);
            auto records = read_records(se_records);
            TracePartition part = partition_traces(records, partition_rule_from_string(se_rule));
            auto backend = make_backend(se_backend, 0);
            SteeringDirections dirs = extract_directions(part, records, corpus, *backend);
            save_directions(se_out, dirs);
            std::printf("extracted %s-rule directions from %zu long / %zu short records -> %s\n",
                        to_string(dirs.rule), dirs.count_long, dirs.count_short, se_out.c_str());
            return 0;
        }

        if (run_cmd->parsed()) {
            RunConfig cfg;
            if (!run_config_path.empty()) {
                cfg = load_run_config(run_config_path);
            } else {
                cfg = inline_cfg;
                for (const auto& tag : run_grid) cfg.grid.push_back(LengthControl::parse(tag));
            }
            SweepResult res = run_sweep(cfg);
            for (const auto& oc : res.outcomes) {
                if (oc.complete) {
                    std::printf("%-16s T=%-8.2f R=%.4f H=%.4f\n", oc.control_tag.c_str(),
                                oc.point->T, oc.point->R, oc.point->H);
                } else if (oc.withheld) {
                    std::printf("%-16s withheld (pending verdicts)\n", oc.control_tag.c_str());
                } else if (!oc.error.empty()) {
                    std::printf("%-16s failed: %s\n", oc.control_tag.c_str(), oc.error.c_str());
                } else {
                    std::printf("%-16s skipped\n", oc.control_tag.c_str());
                }
            }
            if (res.aborted) {
                std::printf("sweep aborted before completion\n");
                return 2;
            }
            std::printf("store: %s\n", res.store_root.c_str());
            return 0;
        }

        if (score_cmd->parsed()) {
            Corpus corpus = load_corpus(sc_corpus);
            auto records = read_records(sc_records);
            auto judge = make_judge(sc_judge);
            ScoreOutput out = score_records(corpus, records, *judge);
            if (!sc_verdicts.empty()) append_verdicts(sc_verdicts, out.verdicts);
            for (Task task : {Task::reasoning, Task::perception}) {
                try {
                    AccuracyResult acc = accuracy(out.items, task);
                    std::printf("%-10s accuracy %.4f over %zu scored (%zu pending)\n",
                                to_string(task), acc.value, acc.scored, acc.pending);
                } catch (const ScoringError& e) {
                    std::printf("%-10s %s\n", to_string(task), e.what());
                }
            }
            return 0;
        }

        if (auc_cmd->parsed()) {
            BalanceCurve raw = curve_from_csv(slurp(auc_curve));
            const double area = rh_auc(normalize_curve(raw));
            std::printf("%.6f\n", area);
            return 0;
        }

        if (attn_report->parsed()) {
            Corpus corpus = load_corpus(at_corpus);
            auto records = read_records(at_records);
            if (records.empty()) throw std::runtime_error("no records to analyze");
            std::vector<AttentionProfile> profiles;
            for (const auto& rec : records) {
                auto backend = make_backend(at_backend, rec.seed);
                GenerationResult rep =
                    backend->replay(corpus.at(rec.sample_id), rec.thinking_text, rec.answer_text);
                profiles.push_back(attention_shares(rep.traces, rep.segmap));
            }
            AttentionProfile mean = mean_profile(profiles);
            std::ofstream out(at_out, std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + at_out);
            out << profile_to_csv(mean);
            std::printf("wrote layer x segment shares for %zu records -> %s\n", profiles.size(),
                        at_out.c_str());
            return 0;
        }

        if (report_cmd->parsed()) {
            RunStore store(rp_store);
            ReportBundle bundle = emit_report(store);
            for (const auto& f : bundle.files) std::printf("wrote %s\n", f.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
