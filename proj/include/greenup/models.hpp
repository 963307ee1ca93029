#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "greenup/data.hpp"
#include "greenup/rng.hpp"
#include "greenup/tensor.hpp"

#include <json.hpp>

namespace greenup {

enum class Variant { Ap, LstmSingle, LstmMulti, Vit, Fusion };

// "ap", "lstm-single", "lstm-multi", "vit", "fusion"
std::string_view variant_name(Variant variant);
Variant parse_variant(std::string_view name);
bool variant_needs_image(Variant variant);
bool variant_is_neural(Variant variant);

inline constexpr double kMetersPerInch = 0.0254;
inline constexpr double kApThresholdInches = 1.7;
inline constexpr double kApThresholdMeters = kApThresholdInches * kMetersPerInch;

struct ModelConfig {
    Variant variant = Variant::LstmMulti;
    double ap_threshold_m = kApThresholdMeters;
    std::size_t lstm_hidden = 128;
    std::size_t lstm_layers = 2;
    std::size_t vit_image_size = 32;
    std::size_t vit_patch_size = 8;
    std::size_t vit_embed_dim = 32;
    std::size_t vit_heads = 4;
    std::size_t vit_blocks = 2;
    double decision_threshold = 0.5;

    void validate() const;

    std::size_t lstm_input_dim() const { return variant == Variant::LstmSingle ? 1 : kFeatureCount; }
    std::size_t vit_patch_count() const {
        const std::size_t side = vit_image_size / vit_patch_size;
        return side * side;
    }
    std::size_t vit_patch_dim() const { return vit_patch_size * vit_patch_size * 3; }
    std::size_t vit_mlp_dim() const { return 4 * vit_embed_dim; }
    // Width of the vector fed to the prediction head.
    std::size_t embedding_dim() const;

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Per (day, feature) z-score statistics fit on training data, plus the
// pooled per-feature mean over all days.
struct Standardizer {
    std::array<double, kWindowDays * kFeatureCount> mean{};
    std::array<double, kWindowDays * kFeatureCount> stddev{};
    std::array<double, kFeatureCount> pooled_mean{};

    Standardizer() { stddev.fill(1.0); }

    double mean_at(std::size_t day, std::size_t feature) const { return mean[day * kFeatureCount + feature]; }
    double std_at(std::size_t day, std::size_t feature) const { return stddev[day * kFeatureCount + feature]; }
    double apply(std::size_t day, std::size_t feature, double value) const {
        return (value - mean_at(day, feature)) / std_at(day, feature);
    }
    // Stable digest of the statistics; identical fingerprints mean identical transforms.
    std::string fingerprint() const;

    bool operator==(const Standardizer&) const = default;
};

nlohmann::json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::json& j);

template <typename T>
using BasicParameters = std::map<std::string, BasicTensor<T>>;
using Parameters = BasicParameters<float>;

struct TrainedModel {
    ModelConfig config;
    Parameters parameters;
    Standardizer standardizer;
    std::string feature_schema_hash = greenup::feature_schema_hash();
    // Free-form provenance (run configuration) carried through checkpoints.
    nlohmann::json run_info = nlohmann::json::object();
};

// Parameter names and shapes, in initialization order. With H = lstm_hidden,
// D = vit_embed_dim, E = embedding_dim():
//   lstm.l{i}.w_input   [in_i, 4H]   in_0 = lstm_input_dim(), in_i = H after
//   lstm.l{i}.w_hidden  [H, 4H]      gate column blocks ordered i, f, g, o
//   lstm.l{i}.bias      [4H]
//   vit.patch.weight    [P*P*3, D],  vit.patch.bias [D]
//   vit.cls             [1, D],      vit.pos [1 + N, D]
//   vit.b{j}.ln1.gamma/beta [D], vit.b{j}.attn.{q,k,v,o}.weight [D, D] / .bias [D]
//   vit.b{j}.ln2.gamma/beta [D], vit.b{j}.mlp.fc1.weight [D, 4D] / .bias [4D]
//   vit.b{j}.mlp.fc2.weight [4D, D] / .bias [D]
//   vit.ln.gamma/beta   [D]
//   head.weight         [E, 1],      head.bias [1]
// AP has no parameters. Fusion carries the LSTM (all 16 features) and ViT sets.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

// Weights uniform(+-1/sqrt(fan_in)), biases and layer-norm beta 0, gamma 1,
// CLS and position embeddings normal(0, 0.02). Draws follow layout order.
TrainedModel init_model(const ModelConfig& config, Rng& rng);

struct Prediction {
    double score = 0.0;
    int label = 0;
};

// score = window precipitation (m); label = score > threshold_m.
Prediction ap_predict(const ClimateSequence& climate, double threshold_m);

enum class FeatureSubset { PrecipOnly, All };

double lstm_forward(const TrainedModel& model, const ClimateSequence& climate, FeatureSubset subset);
// Requires image side == vit_image_size.
double vit_forward(const TrainedModel& model, const ImagePatch& image);
// Resizes the image to vit_image_size when needed.
double fusion_forward(const TrainedModel& model, const ClimateSequence& climate, const ImagePatch& image);

// Bilinear, half-pixel centers, edge-clamped.
ImagePatch image_resize(const ImagePatch& image, std::size_t target);

Prediction predict(const TrainedModel& model, const Sample& sample);
std::vector<Prediction> predict_all(const TrainedModel& model, std::span<const Sample> samples);

// Throws MissingImageError / ValidationError if a sample cannot feed the variant.
void check_samples_compatible(Variant variant, std::span<const Sample> samples);

// ---------------------------------------------------------------------------
// Graph builders shared by inference, training and gradient checks.

template <typename T>
struct BatchInputs {
    std::size_t batch = 0;
    // kWindowDays tensors of [B, in], standardized; empty for ViT.
    std::vector<BasicTensor<T>> steps;
    // [B, N, P*P*3] pixels shifted to [-0.5, 0.5]; undefined unless image variant.
    BasicTensor<T> patches;
};

template <typename T>
BatchInputs<T> encode_batch(const TrainedModel& model, std::span<const Sample* const> samples);

template <typename T>
BasicTensor<T> patchify(const ImagePatch& image, std::size_t patch_size);

// Final top-layer hidden state, [B, H].
template <typename T>
BasicTensor<T> lstm_embedding(const BasicParameters<T>& params, const ModelConfig& config,
                              std::span<const BasicTensor<T>> steps);

// Final CLS state after the last layer norm, [B, D]. When `attention` is
// non-null, every head's attention matrix [B, L, L] is appended to it.
template <typename T>
BasicTensor<T> vit_embedding(const BasicParameters<T>& params, const ModelConfig& config,
                             const BasicTensor<T>& patches, std::vector<BasicTensor<T>>* attention = nullptr);

template <typename T>
BasicTensor<T> linear_head(const BasicParameters<T>& params, const BasicTensor<T>& embedding);

// Logits [B, 1] for any neural variant.
template <typename T>
BasicTensor<T> forward_logits(const BasicParameters<T>& params, const ModelConfig& config,
                              const BatchInputs<T>& inputs);

template <typename T>
BasicParameters<T> cast_parameters(const Parameters& params) {
    BasicParameters<T> out;
    for (const auto& [name, t] : params) out.emplace(name, t.template cast<T>());
    return out;
}

}  // namespace greenup
