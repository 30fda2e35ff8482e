#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskden/dataset.hpp"
#include "taskden/networks.hpp"
#include "taskden/training.hpp"

namespace taskden {

/// Parse or validation failure; the message names the line and key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a pipeline run depends on.
///
/// Text form: `[section]` headers followed by `key = value` lines; `#`
/// starts a comment. Unknown sections or keys are errors. Relative paths
/// are resolved against the directory of the config file.
struct Config {
    DatasetConfig data;
    SegTrainConfig segmenter_training;
    TrainConfig training;
    std::vector<SegmenterKind> segmenters{std::begin(kAllSegmenters), std::end(kAllSegmenters)};
    SegmenterKind representative = SegmenterKind::unet_small;
    std::vector<std::string> eval_variants{"none", "tod", "mse_only"};
    std::size_t gradmap_cases = 0;  // 0 = every test case
    std::filesystem::path run_dir = "runs/default";

    /// Canonical text of every setting (paths as resolved).
    std::string to_text() const;
    /// SHA-256 of to_text().
    std::string hash() const;
};

Config parse_config(const std::string& text, const std::filesystem::path& base_dir = ".",
                    const std::string& source = "<config>");
Config load_config(const std::filesystem::path& path);

}  // namespace taskden
