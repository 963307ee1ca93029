#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "greenup/data.hpp"
#include "greenup/models.hpp"
#include "greenup/train.hpp"

#include <json.hpp>

namespace greenup {

// Parsed run configuration. Sections: data, model, train, eval. Absent
// fields keep their defaults; train fields left unset fall back to the
// per-variant defaults of TrainConfig::defaults_for.
struct RunConfig {
    SyntheticConfig synthetic;
    std::uint64_t data_seed = kDefaultSeed;
    double test_fraction = 0.2;

    ModelConfig model;

    std::optional<double> learning_rate;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> train_seed;

    std::size_t cv_folds = 5;
    std::uint64_t eval_seed = kDefaultSeed;
    bool parallel_folds = true;

    TrainConfig train_config(Variant variant) const;
    ModelConfig model_config(Variant variant) const;
};

// Throws ValidationError naming the offending JSON path, e.g. "model.lstm_hiden".
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace greenup
