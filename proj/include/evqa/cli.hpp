#pragma once

// Command-line front end: synth / train / eval / sweep / project / check.
// Kept in a header-only entry function so tests can drive it in-process.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evqa/checkpoint.hpp"
#include "evqa/harness.hpp"

namespace evqa::cli {

namespace detail {

inline RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return RunConfig::from_json(j);
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool no_prefix = false, no_tc = false, no_cl = false, no_transm = false;
    std::string setting, tagging;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "random seed")->each([this](const std::string&) {
            seed_set = true;
        });
        cmd->add_flag("--no-prefix", no_prefix, "drop the event type label prefix");
        cmd->add_flag("--no-tc", no_tc, "disable event relation type classification");
        cmd->add_flag("--no-cl", no_cl, "disable contrastive learning");
        cmd->add_flag("--no-transm", no_transm, "replace the event transformation with identity");
        cmd->add_option("--setting", setting, "generative|extractive");
        cmd->add_option("--tagging", tagging, "io|bio");
    }

    RunConfig resolve() const {
        RunConfig cfg = load_config(config_path);
        if (seed_set) cfg.seed = seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.flags.no_prefix = cfg.flags.no_prefix || no_prefix;
        cfg.flags.no_tc = cfg.flags.no_tc || no_tc;
        cfg.flags.no_cl = cfg.flags.no_cl || no_cl;
        cfg.flags.no_transm = cfg.flags.no_transm || no_transm;
        if (!setting.empty()) {
            auto s = parse_setting(setting);
            if (!s) throw ConfigError("unknown setting '" + setting + "'");
            cfg.model.setting = *s;
        }
        if (!tagging.empty()) {
            auto t = parse_tagging(tagging);
            if (!t) throw ConfigError("unknown tagging scheme '" + tagging + "'");
            cfg.model.tagging = *t;
        }
        cfg.validate();
        return cfg;
    }
};

}  // namespace detail

inline int run(int argc, const char* const* argv) {
    CLI::App app{"event-centric QA workbench"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    int synth_n = 1000;
    std::uint64_t synth_seed = 13;
    int distractors = 4;
    std::string synth_out = ".";
    std::string synth_name = "synth.json";
    synth_cmd->add_option("--n", synth_n, "instance count");
    synth_cmd->add_option("--seed", synth_seed, "random seed");
    synth_cmd->add_option("--distractors", distractors, "other-role triggers per paragraph");
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->add_option("--name", synth_name, "output file name");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    detail::CommonFlags train_flags;
    train_flags.attach(train_cmd);
    std::string train_data;
    train_cmd->add_option("--train", train_data, "training dataset (JSON)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_out = ".";
    bool eval_no_prefix = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "evaluation dataset (JSON)")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_flag("--no-prefix", eval_no_prefix, "evaluate without any type prefix");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "zero/few-shot sweep");
    detail::CommonFlags sweep_flags;
    sweep_flags.attach(sweep_cmd);
    std::string sweep_train, sweep_eval;
    std::vector<int> sweep_sizes = {0, 100, 500, 2000};
    sweep_cmd->add_option("--train", sweep_train, "training dataset (JSON)");
    sweep_cmd->add_option("--eval-data", sweep_eval, "held-out dataset (JSON)");
    sweep_cmd->add_option("--sizes", sweep_sizes, "subset sizes, ascending");

    // project
    auto* project_cmd = app.add_subcommand("project", "dump 2-D event embedding projection");
    std::string proj_ckpt, proj_data, proj_out = ".", proj_tag = "final";
    int proj_sample = 12;
    project_cmd->add_option("--checkpoint", proj_ckpt, "checkpoint file")->required();
    project_cmd->add_option("--data", proj_data, "dataset to sample (JSON)")->required();
    project_cmd->add_option("--sample", proj_sample, "instances to project");
    project_cmd->add_option("--out", proj_out, "output directory");
    project_cmd->add_option("--tag", proj_tag, "tag in the output file name");

    // check
    auto* check_cmd = app.add_subcommand("check", "run the property suites");
    int check_draws = 100;
    check_cmd->add_option("--draws", check_draws, "random draws per property");

    try {
        app.parse(argc, argv);

        if (*synth_cmd) {
            SynthOptions opts;
            opts.distractor_rate = distractors;
            const auto data = synth_generate(synth_n, kDefaultTypeProportions, synth_seed, opts);
            std::filesystem::create_directories(synth_out);
            const std::string path = synth_out + "/" + synth_name;
            save_dataset(data, path);
            std::cout << "wrote " << data.size() << " instances to " << path << "\n";
            return 0;
        }
        if (*train_cmd) {
            RunConfig cfg = train_flags.resolve();
            if (!train_data.empty()) cfg.train_path = train_data;
            if (cfg.train_path.empty()) throw ConfigError("train: no training data given");
            const auto data = load_dataset(cfg.train_path);
            auto result = train<float>(cfg, data, &std::cout);
            std::cout << "checkpoint: " << result.summary.checkpoint_path << "\n";
            return 0;
        }
        if (*eval_cmd) {
            Pipeline<float> p = load_checkpoint<float>(eval_ckpt);
            if (eval_no_prefix) p.cfg.flags.no_prefix = true;
            const auto data = load_dataset(eval_data);
            EvalResult result = evaluate(p, data, &std::cout);
            std::filesystem::create_directories(eval_out);
            const std::string path = eval_out + "/metrics.json";
            std::ofstream out(path);
            out << result.report.to_json().dump(1) << "\n";
            std::cout << "f1t=" << result.report.overall.f1t
                      << " hit1=" << result.report.overall.hit1
                      << " em=" << result.report.overall.em;
            if (result.report.type_accuracy)
                std::cout << " type_acc=" << *result.report.type_accuracy;
            std::cout << "\nreport: " << path << "\n";
            return 0;
        }
        if (*sweep_cmd) {
            RunConfig cfg = sweep_flags.resolve();
            if (!sweep_train.empty()) cfg.train_path = sweep_train;
            if (!sweep_eval.empty()) cfg.eval_path = sweep_eval;
            if (cfg.train_path.empty() || cfg.eval_path.empty())
                throw ConfigError("sweep: need --train and --eval-data");
            const auto train_set = load_dataset(cfg.train_path);
            const auto eval_set = load_dataset(cfg.eval_path);
            const auto points = fewshot_sweep<float>(cfg, sweep_sizes, train_set, eval_set,
                                                     &std::cout);
            std::cout << "size\tf1t\thit1\tem\n";
            for (const auto& pt : points)
                std::cout << pt.size << '\t' << pt.report.overall.f1t << '\t'
                          << pt.report.overall.hit1 << '\t' << pt.report.overall.em << "\n";
            return 0;
        }
        if (*project_cmd) {
            Pipeline<float> p = load_checkpoint<float>(proj_ckpt);
            const auto data = load_dataset(proj_data);
            std::filesystem::create_directories(proj_out);
            const std::string path = proj_out + "/projection_" + proj_tag + ".tsv";
            const long rows = project_embeddings(p, data, proj_sample, path);
            std::cout << "wrote " << rows << " rows to " << path << "\n";
            return 0;
        }
        if (*check_cmd) {
            bool ok = run_property_checks(std::cout, check_draws);
            for (const auto& c : grad_check_losses(2, 20240606)) {
                std::cout << "gradcheck." << c.name << " expected=0 observed="
                          << c.report.max_rel_err << " tolerance=" << c.report.tolerance
                          << (c.report.pass ? " PASS" : " FAIL") << "\n";
                ok = ok && c.report.pass;
            }
            std::cout << (ok ? "all property checks passed\n"
                             : "property check FAILURES detected\n");
            return ok ? 0 : 1;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

inline int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(int(argv.size()), argv.data());
}

}  // namespace evqa::cli
