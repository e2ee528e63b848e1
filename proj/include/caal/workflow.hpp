#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "caal/config.hpp"

namespace caal {

namespace fs = std::filesystem;

/// Checkpoints a run may reuse. Absent entries are computed in-process.
struct Checkpoints {
    std::optional<fs::path> model;
    std::optional<fs::path> agent_context;
    std::optional<fs::path> agent_noncontext;
};

/// Loaders that name the producing subcommand when the file is missing.
ForestModel load_model_checkpoint(const fs::path& path);
QNetwork load_agent_checkpoint(const fs::path& path);

/// Leave-target-out pretrained model for the configured scenario.
ForestModel pretrain_model(const AppConfig& cfg);
TrainingResult train_agent_model(const AppConfig& cfg, const ForestModel& pretrained, bool contextual);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const fs::path& path);

/// Subcommand bodies. Each writes config.json, manifest.json and its own
/// outputs into `dir` and returns the output file names. Throws on any failure.
std::vector<std::string> gen_data_to_directory(const AppConfig& cfg, const fs::path& dir);
std::vector<std::string> pretrain_to_directory(const AppConfig& cfg, const fs::path& dir);
std::vector<std::string> train_agent_to_directory(const AppConfig& cfg, const fs::path& dir, bool contextual,
                                                  const Checkpoints& ck);
std::vector<std::string> run_to_directory(const AppConfig& cfg, const fs::path& dir, const Checkpoints& ck);
std::vector<std::string> compare_to_directory(const AppConfig& cfg, const fs::path& dir, const Checkpoints& ck);
std::vector<std::string> pipeline_to_directory(const AppConfig& cfg, const fs::path& dir);

}  // namespace caal
