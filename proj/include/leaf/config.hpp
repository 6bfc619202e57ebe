#pragma once

#include "leaf/network.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace leaf {

struct TrainConfig {
    Real lr = Real(1e-3);
    Index lr_decay_epochs = 60;
    Real lr_decay_factor = Real(0.1);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real adam_eps = Real(1e-8);
    Index iterations = 500;
    Index batch_size = 4;
    bool augment = true;
    /// The last val_count samples of the training directory are held out.
    Index val_count = 0;
    std::string data_dir;
    std::string val_dir;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

using ConfigMap = std::map<std::string, std::string>;

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// `key = value` lines; '#' starts a comment; blank lines ignored.
ConfigMap parse_config_text(const std::string& text);
RunConfig run_config_from_map(const ConfigMap& map);
ConfigMap run_config_to_map(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// Model keys only; used for checkpoints.
ConfigMap model_config_to_map(const ModelConfig& cfg);
ModelConfig model_config_from_map(const ConfigMap& map);

std::string format_config(const ConfigMap& map);

}  // namespace leaf
