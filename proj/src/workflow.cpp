#include "caal/workflow.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "caal/errors.hpp"

namespace caal {

namespace {

using nlohmann::json;

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw Error("failed writing " + path.string());
}

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

void require_file(const fs::path& path, const char* what, const char* producer) {
    if (!fs::is_regular_file(path))
        throw ConfigError(std::string(what) + " checkpoint not found: " + path.string() + " (produce it with `caal " +
                          producer + "`)");
}

/// Writes config.json and manifest.json next to `outputs`, which must already exist.
std::vector<std::string> finish_dir(const AppConfig& cfg, const fs::path& dir, const std::string& subcommand,
                                    std::vector<std::string> outputs, const Checkpoints& ck = {}) {
    const std::string resolved = config_to_json(cfg);
    write_file(dir / "config.json", [&](std::ostream& o) { o << resolved; });
    outputs.insert(outputs.begin(), "config.json");

    json files = json::array();
    for (const auto& name : outputs)
        files.push_back({{"file", name}, {"bytes", fs::file_size(dir / name)}, {"fnv1a64", file_checksum(dir / name)}});
    json inputs = json::object();
    auto add_input = [&](const char* key, const std::optional<fs::path>& p) {
        if (p) inputs[key] = {{"path", p->string()}, {"fnv1a64", file_checksum(*p)}};
    };
    add_input("model", ck.model);
    add_input("agent_context", ck.agent_context);
    add_input("agent_noncontext", ck.agent_noncontext);

    json manifest = {{"manifest_version", 1},
                     {"build", build_stamp()},
                     {"subcommand", subcommand},
                     {"master_seed", cfg.master_seed},
                     {"config", json::parse(resolved)},
                     {"inputs", inputs},
                     {"outputs", files}};
    write_file(dir / "manifest.json", [&](std::ostream& o) { o << manifest.dump(2) << "\n"; });
    outputs.push_back("manifest.json");
    return outputs;
}

ForestModel model_for(const AppConfig& cfg, const Checkpoints& ck) {
    return ck.model ? load_model_checkpoint(*ck.model) : pretrain_model(cfg);
}

QNetwork agent_for(const AppConfig& cfg, const ForestModel& pretrained, const std::optional<fs::path>& path,
                   bool contextual) {
    return path ? load_agent_checkpoint(*path) : train_agent_model(cfg, pretrained, contextual).network;
}

std::vector<std::string> write_run_outputs(const AppConfig& cfg, const fs::path& dir,
                                           const std::vector<RunResult>& results, double target) {
    const auto& ec = cfg.experiment;
    const int w = ec.recall_smoothing_window;
    write_file(dir / "results.csv", [&](std::ostream& o) { write_results_csv(o, results, target, w, cfg.master_seed); });
    write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, results, target, w, cfg.master_seed); });
    write_file(dir / "trajectories.csv", [&](std::ostream& o) { write_trajectories_csv(o, results, cfg.master_seed); });
    write_file(dir / "response_rates.csv",
               [&](std::ostream& o) { write_response_rates_csv(o, results, cfg.master_seed); });
    return {"results.csv", "summary.csv", "trajectories.csv", "response_rates.csv"};
}

double recall_target(const std::vector<RunResult>& results, const ExperimentConfig& ec) {
    return results.front().pretrained_recall() + ec.target_recall_gain;
}

}  // namespace

std::string file_checksum(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

ForestModel load_model_checkpoint(const fs::path& path) {
    require_file(path, "model", "pretrain");
    return ForestModel::load(path);
}

QNetwork load_agent_checkpoint(const fs::path& path) {
    require_file(path, "agent", "train-agent");
    return QNetwork::load(path);
}

ForestModel pretrain_model(const AppConfig& cfg) {
    const Scenario s = prepare_scenario(cfg.scenario, cfg.experiment);
    return pretrain(s.population, s.target, cfg.scenario, cfg.models.forest);
}

TrainingResult train_agent_model(const AppConfig& cfg, const ForestModel& pretrained, bool contextual) {
    const auto episode = agent_episode(cfg.scenario, pretrained);
    return train_agent(episode, contextual, cfg.models);
}

std::vector<std::string> gen_data_to_directory(const AppConfig& cfg, const fs::path& dir) {
    cfg.validate();
    prepare_dir(dir);
    const Scenario s = prepare_scenario(cfg.scenario, cfg.experiment);

    write_file(dir / "subjects.json", [&](std::ostream& o) {
        json j = json::array();
        for (const auto& p : s.population) j.push_back(json::parse(profile_to_json(p)));
        json out = {{"population", j}, {"target", json::parse(profile_to_json(s.target))}};
        o << out.dump(2) << "\n";
    });
    write_file(dir / "population_stream.csv", [&](std::ostream& o) {
        bool first = true;
        for (const auto& p : s.population) {
            const auto stream = step_stream(p, static_cast<std::size_t>(cfg.scenario.pretrain_slots_per_subject));
            std::ostringstream part;
            write_stream_csv(part, stream);
            std::string text = part.str();
            if (!first) text = text.substr(text.find('\n') + 1);  // one header only
            o << text;
            first = false;
        }
    });
    write_file(dir / "target_stream.csv", [&](std::ostream& o) { write_stream_csv(o, s.stream); });
    write_file(dir / "target_truth.csv", [&](std::ostream& o) { write_truth_csv(o, s.target, s.stream); });
    return finish_dir(cfg, dir, "gen-data", {"subjects.json", "population_stream.csv", "target_stream.csv",
                                             "target_truth.csv"});
}

std::vector<std::string> pretrain_to_directory(const AppConfig& cfg, const fs::path& dir) {
    cfg.validate();
    prepare_dir(dir);
    const ForestModel model = pretrain_model(cfg);
    model.save(dir / "model.json");
    return finish_dir(cfg, dir, "pretrain", {"model.json"});
}

std::vector<std::string> train_agent_to_directory(const AppConfig& cfg, const fs::path& dir, bool contextual,
                                                  const Checkpoints& ck) {
    cfg.validate();
    prepare_dir(dir);
    const ForestModel model = model_for(cfg, ck);
    const TrainingResult r = train_agent_model(cfg, model, contextual);
    const std::string stem = contextual ? "agent_context" : "agent_noncontext";
    r.network.save(dir / (stem + ".json"));
    write_file(dir / (stem + "_training_log.csv"), [&](std::ostream& o) { write_training_log(o, r.log); });
    Checkpoints used;
    used.model = ck.model;
    return finish_dir(cfg, dir, "train-agent", {stem + ".json", stem + "_training_log.csv"}, used);
}

std::vector<std::string> run_to_directory(const AppConfig& cfg, const fs::path& dir, const Checkpoints& ck) {
    cfg.validate();
    prepare_dir(dir);
    const Scenario scenario = prepare_scenario(cfg.scenario, cfg.experiment);
    const ForestModel model = model_for(cfg, ck);
    std::optional<QNetwork> agent;
    Checkpoints used;
    used.model = ck.model;
    if (cfg.experiment.policy == Policy::AlContext) {
        agent = agent_for(cfg, model, ck.agent_context, true);
        used.agent_context = ck.agent_context;
    } else if (cfg.experiment.policy == Policy::AlNonContext) {
        agent = agent_for(cfg, model, ck.agent_noncontext, false);
        used.agent_noncontext = ck.agent_noncontext;
    }
    const auto results = run_repeats(cfg.experiment, scenario, model, agent ? &*agent : nullptr, cfg.models);
    auto files = write_run_outputs(cfg, dir, results, recall_target(results, cfg.experiment));
    return finish_dir(cfg, dir, "run", std::move(files), used);
}

std::vector<std::string> compare_to_directory(const AppConfig& cfg, const fs::path& dir, const Checkpoints& ck) {
    cfg.validate();
    prepare_dir(dir);
    const Scenario scenario = prepare_scenario(cfg.scenario, cfg.experiment);
    const ForestModel model = model_for(cfg, ck);
    const QNetwork ctx = agent_for(cfg, model, ck.agent_context, true);
    const QNetwork non = agent_for(cfg, model, ck.agent_noncontext, false);
    const auto results = compare_policies(cfg.experiment, scenario, model, ctx, non, cfg.models);
    auto files = write_run_outputs(cfg, dir, results, recall_target(results, cfg.experiment));
    return finish_dir(cfg, dir, "compare", std::move(files), ck);
}

std::vector<std::string> pipeline_to_directory(const AppConfig& cfg, const fs::path& dir) {
    cfg.validate();
    prepare_dir(dir);
    const LatencyCurve curve = latency_sweep(cfg.pipeline, cfg.sweep_users, cfg.pipeline_seed);
    write_file(dir / "latency_sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, curve); });
    return finish_dir(cfg, dir, "pipeline-sim", {"latency_sweep.csv"});
}

}  // namespace caal
