#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "greenup/data.hpp"
#include "greenup/models.hpp"

#include <json.hpp>

namespace greenup {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 4;
    std::size_t epochs = 500;
    std::uint64_t seed = kDefaultSeed;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;

    // LSTM: lr 1e-4, batch 4, 500 epochs. ViT: 1e-5, 2, 10. Fusion: 1e-5, 4, 100.
    static TrainConfig defaults_for(Variant variant);

    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);

// Population statistics per (day, feature); std floored at 1e-8.
Standardizer fit_standardizer(std::span<const Sample> samples);

inline constexpr double kStdFloor = 1e-8;

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    std::vector<float> first;
    std::vector<float> second;
};

// One bias-corrected Adam update of `param` in place; `step` is the 1-based
// update count after incrementing.
void adam_step(std::span<float> param, std::span<const float> grad, AdamMoments& moments, std::uint64_t step,
               const AdamHyper& hyper);

class Adam {
public:
    explicit Adam(AdamHyper hyper) : hyper_(hyper) {}

    // Applies one update to every parameter that has a gradient.
    void step(Parameters& params);

    std::uint64_t steps() const { return steps_; }
    const std::map<std::string, AdamMoments>& state() const { return state_; }

private:
    AdamHyper hyper_;
    std::uint64_t steps_ = 0;
    std::map<std::string, AdamMoments> state_;
};

struct TrainResult {
    TrainedModel model;
    // Mean training loss per epoch.
    std::vector<double> loss_history;
};

// Deterministic given train_config.seed: initialization, per-epoch shuffles
// and batching all draw from one Rng. The AP variant returns immediately with
// only the standardizer fit (its sensitivity means) and no loss history.
TrainResult train_model(Variant variant, std::span<const Sample> train_samples, const ModelConfig& model_config,
                        const TrainConfig& train_config);

// "PHCK", u32 version, u32-length-prefixed JSON config, u32 tensor count, then
// per tensor: u32-length-prefixed name, u32 rank, u32 dims, f32 values. All
// integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const TrainedModel& model);
TrainedModel deserialize_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace greenup
