// caal: command-line front end for the active-labeling workbench.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "caal/errors.hpp"
#include "caal/hrv_features.hpp"
#include "caal/workflow.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

struct Overrides {
    std::optional<int> repeats;
    std::optional<int> parallel;
    std::optional<std::string> policy;
    std::optional<long long> label_budget;
};

void add_common(CLI::App* cmd, CommonOptions& c) {
    cmd->add_option("-c,--config", c.config, "JSON config or a manifest.json from an earlier run")
        ->check(CLI::ExistingFile);
    cmd->add_option("-s,--seed", c.seed, "master seed; seeds not set in the config derive from it");
    cmd->add_option("-o,--out", c.out, "output directory")->capture_default_str();
}

/// Reads the config document, applies flag overrides to it and validates the result.
caal::AppConfig resolve(const CommonOptions& c, const Overrides& o) {
    json doc = json::object();
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        if (!in) throw caal::ConfigError("cannot open config file " + c.config);
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw caal::ConfigError(c.config + " is not valid JSON: " + e.what());
        }
        if (doc.is_object() && doc.contains("manifest_version")) doc = doc.value("config", json::object());
    }
    if (!doc.is_object()) throw caal::ConfigError("config must be a JSON object");
    if (c.seed) doc["master_seed"] = *c.seed;
    if (o.repeats) doc["experiment"]["repeats"] = *o.repeats;
    if (o.parallel) doc["experiment"]["parallel"] = *o.parallel;
    if (o.policy) doc["experiment"]["policy"] = *o.policy;
    if (o.label_budget) doc["experiment"]["label_budget"] = *o.label_budget;
    return caal::parse_config(doc.dump());
}

caal::Checkpoints checkpoints(const std::string& model, const std::string& ctx, const std::string& non) {
    caal::Checkpoints ck;
    if (!model.empty()) ck.model = model;
    if (!ctx.empty()) ck.agent_context = ctx;
    if (!non.empty()) ck.agent_noncontext = non;
    return ck;
}

void report(const fs::path& dir, const std::vector<std::string>& files) {
    for (const auto& f : files) std::cout << (dir / f).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-aware active labeling workbench"};
    app.set_version_flag("--version", caal::build_stamp());
    app.require_subcommand(1);

    CommonOptions common;
    Overrides over;
    std::string model_path, ctx_path, non_path, agent_path, kind = "context";
    std::string features_in, features_out;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic population and target streams");
    add_common(gen, common);

    auto* feat = app.add_subcommand("features", "compute HRV features from a batch CSV");
    feat->add_option("-i,--input", features_in, "CSV with subject_id,timestamp,interval_ms[,br]")
        ->required()
        ->check(CLI::ExistingFile);
    feat->add_option("-o,--out", features_out, "feature table CSV (stdout when omitted)");

    auto* pre = app.add_subcommand("pretrain", "train the population model, leaving the target out");
    add_common(pre, common);

    auto* train = app.add_subcommand("train-agent", "train a query agent offline");
    add_common(train, common);
    train->add_option("--model", model_path, "pretrained model checkpoint (trained in-process when omitted)");
    train->add_option("--kind", kind, "context or noncontext")
        ->check(CLI::IsMember({"context", "noncontext"}))
        ->capture_default_str();

    auto* run = app.add_subcommand("run", "run one policy over the target stream");
    add_common(run, common);
    run->add_option("--model", model_path, "pretrained model checkpoint");
    run->add_option("--agent", agent_path, "agent checkpoint for the chosen policy");
    run->add_option("--policy", over.policy, "random, al_noncontext or al_context")
        ->check(CLI::IsMember({"random", "al_noncontext", "al_context"}));

    auto* cmp = app.add_subcommand("compare", "run all three policies with matched query budgets");
    add_common(cmp, common);
    cmp->add_option("--model", model_path, "pretrained model checkpoint");
    cmp->add_option("--agent-context", ctx_path, "contextual agent checkpoint");
    cmp->add_option("--agent-noncontext", non_path, "non-contextual agent checkpoint");

    for (auto* cmd : {run, cmp}) {
        cmd->add_option("--repeats", over.repeats, "number of repeats")->check(CLI::PositiveNumber);
        cmd->add_option("--parallel", over.parallel, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
        cmd->add_option("--label-budget", over.label_budget, "stop each run after this many labels")
            ->check(CLI::NonNegativeNumber);
    }

    auto* pipe = app.add_subcommand("pipeline-sim", "latency sweep of the backend pipeline");
    add_common(pipe, common);

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path dir = common.out;
        if (feat->parsed()) {
            std::ifstream in(features_in);
            const auto rows = caal::compute_batch(in);
            if (features_out.empty()) {
                caal::write_feature_table(std::cout, rows);
            } else {
                std::ofstream out(features_out, std::ios::binary | std::ios::trunc);
                caal::write_feature_table(out, rows);
                out.flush();
                if (!out) throw caal::Error("failed writing " + features_out);
                std::cout << features_out << "\n";
            }
            return 0;
        }
        const caal::AppConfig cfg = resolve(common, over);
        if (gen->parsed()) {
            report(dir, caal::gen_data_to_directory(cfg, dir));
        } else if (pre->parsed()) {
            report(dir, caal::pretrain_to_directory(cfg, dir));
        } else if (train->parsed()) {
            report(dir, caal::train_agent_to_directory(cfg, dir, kind == "context", checkpoints(model_path, "", "")));
        } else if (run->parsed()) {
            const bool ctx = cfg.experiment.policy == caal::Policy::AlContext;
            report(dir, caal::run_to_directory(cfg, dir,
                                               checkpoints(model_path, ctx ? agent_path : "", ctx ? "" : agent_path)));
        } else if (cmp->parsed()) {
            report(dir, caal::compare_to_directory(cfg, dir, checkpoints(model_path, ctx_path, non_path)));
        } else if (pipe->parsed()) {
            report(dir, caal::pipeline_to_directory(cfg, dir));
        }
    } catch (const caal::ConfigError& e) {
        std::cerr << "caal: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "caal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
