#include "greenup/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "greenup/errors.hpp"

namespace greenup {

using nlohmann::json;

std::string_view variant_name(Variant variant) {
    switch (variant) {
        case Variant::Ap: return "ap";
        case Variant::LstmSingle: return "lstm-single";
        case Variant::LstmMulti: return "lstm-multi";
        case Variant::Vit: return "vit";
        case Variant::Fusion: return "fusion";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::Ap, Variant::LstmSingle, Variant::LstmMulti, Variant::Vit, Variant::Fusion}) {
        if (variant_name(v) == name) return v;
    }
    throw ValidationError("unknown model variant '" + std::string(name) +
                          "' (expected ap, lstm-single, lstm-multi, vit or fusion)");
}

bool variant_needs_image(Variant variant) { return variant == Variant::Vit || variant == Variant::Fusion; }
bool variant_is_neural(Variant variant) { return variant != Variant::Ap; }

namespace {
bool uses_lstm(Variant v) { return v == Variant::LstmSingle || v == Variant::LstmMulti || v == Variant::Fusion; }
bool uses_vit(Variant v) { return v == Variant::Vit || v == Variant::Fusion; }
}  // namespace

void ModelConfig::validate() const {
    if (!(ap_threshold_m > 0.0)) throw ValidationError("ap_threshold must be positive");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
        throw ValidationError("decision_threshold must be in (0, 1)");
    }
    if (lstm_hidden < 1 || lstm_layers < 1) throw ValidationError("lstm_hidden and lstm_layers must be >= 1");
    if (vit_image_size < 1 || vit_patch_size < 1 || vit_embed_dim < 1 || vit_heads < 1 || vit_blocks < 1) {
        throw ValidationError("ViT dimensions must be >= 1");
    }
    if (vit_image_size % vit_patch_size != 0) {
        throw ValidationError("vit_image_size " + std::to_string(vit_image_size) + " is not divisible by patch size " +
                              std::to_string(vit_patch_size));
    }
    if (vit_embed_dim % vit_heads != 0) {
        throw ValidationError("vit_embed_dim " + std::to_string(vit_embed_dim) + " is not divisible by " +
                              std::to_string(vit_heads) + " heads");
    }
}

std::size_t ModelConfig::embedding_dim() const {
    switch (variant) {
        case Variant::Ap: return 0;
        case Variant::LstmSingle:
        case Variant::LstmMulti: return lstm_hidden;
        case Variant::Vit: return vit_embed_dim;
        case Variant::Fusion: return lstm_hidden + vit_embed_dim;
    }
    return 0;
}

json to_json(const ModelConfig& c) {
    return json{{"variant", std::string(variant_name(c.variant))},
                {"ap_threshold_m", c.ap_threshold_m},
                {"lstm_hidden", c.lstm_hidden},
                {"lstm_layers", c.lstm_layers},
                {"vit_image_size", c.vit_image_size},
                {"vit_patch_size", c.vit_patch_size},
                {"vit_embed_dim", c.vit_embed_dim},
                {"vit_heads", c.vit_heads},
                {"vit_blocks", c.vit_blocks},
                {"decision_threshold", c.decision_threshold}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.ap_threshold_m = j.at("ap_threshold_m").get<double>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.vit_image_size = j.at("vit_image_size").get<std::size_t>();
    c.vit_patch_size = j.at("vit_patch_size").get<std::size_t>();
    c.vit_embed_dim = j.at("vit_embed_dim").get<std::size_t>();
    c.vit_heads = j.at("vit_heads").get<std::size_t>();
    c.vit_blocks = j.at("vit_blocks").get<std::size_t>();
    c.decision_threshold = j.at("decision_threshold").get<double>();
    c.validate();
    return c;
}

std::string Standardizer::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const auto& arr) {
        for (double v : arr) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof v);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    };
    feed(mean);
    feed(stddev);
    feed(pooled_mean);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json to_json(const Standardizer& s) {
    return json{{"mean", s.mean}, {"stddev", s.stddev}, {"pooled_mean", s.pooled_mean}};
}

Standardizer standardizer_from_json(const json& j) {
    Standardizer s;
    auto load = [&j](const char* key, auto& arr) {
        const auto& v = j.at(key);
        if (!v.is_array() || v.size() != arr.size()) {
            throw ValidationError(std::string("standardizer.") + key + " must have " + std::to_string(arr.size()) +
                                  " entries");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = v[i].get<double>();
    };
    load("mean", s.mean);
    load("stddev", s.stddev);
    load("pooled_mean", s.pooled_mean);
    return s;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
    std::vector<std::pair<std::string, Shape>> layout;
    if (c.variant == Variant::Ap) return layout;
    if (uses_lstm(c.variant)) {
        const std::size_t h = c.lstm_hidden;
        for (std::size_t l = 0; l < c.lstm_layers; ++l) {
            const std::string p = "lstm.l" + std::to_string(l) + ".";
            layout.push_back({p + "w_input", {l == 0 ? c.lstm_input_dim() : h, 4 * h}});
            layout.push_back({p + "w_hidden", {h, 4 * h}});
            layout.push_back({p + "bias", {4 * h}});
        }
    }
    if (uses_vit(c.variant)) {
        const std::size_t d = c.vit_embed_dim;
        layout.push_back({"vit.patch.weight", {c.vit_patch_dim(), d}});
        layout.push_back({"vit.patch.bias", {d}});
        layout.push_back({"vit.cls", {1, d}});
        layout.push_back({"vit.pos", {1 + c.vit_patch_count(), d}});
        for (std::size_t b = 0; b < c.vit_blocks; ++b) {
            const std::string p = "vit.b" + std::to_string(b) + ".";
            layout.push_back({p + "ln1.gamma", {d}});
            layout.push_back({p + "ln1.beta", {d}});
            for (const char* m : {"q", "k", "v", "o"}) {
                layout.push_back({p + "attn." + m + ".weight", {d, d}});
                layout.push_back({p + "attn." + m + ".bias", {d}});
            }
            layout.push_back({p + "ln2.gamma", {d}});
            layout.push_back({p + "ln2.beta", {d}});
            layout.push_back({p + "mlp.fc1.weight", {d, c.vit_mlp_dim()}});
            layout.push_back({p + "mlp.fc1.bias", {c.vit_mlp_dim()}});
            layout.push_back({p + "mlp.fc2.weight", {c.vit_mlp_dim(), d}});
            layout.push_back({p + "mlp.fc2.bias", {d}});
        }
        layout.push_back({"vit.ln.gamma", {d}});
        layout.push_back({"vit.ln.beta", {d}});
    }
    layout.push_back({"head.weight", {c.embedding_dim(), 1}});
    layout.push_back({"head.bias", {1}});
    return layout;
}

namespace {
bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

TrainedModel init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    TrainedModel model;
    model.config = config;
    for (const auto& [name, shape] : parameter_layout(config)) {
        Tensor t;
        if (name == "vit.cls" || name == "vit.pos") {
            t = Tensor::normal(shape, rng, 0.0, 0.02, true);
        } else if (ends_with(name, ".gamma")) {
            t = Tensor::constant(shape, 1.0f, true);
        } else if (shape.size() == 1) {
            t = Tensor::zeros(shape, true);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
            t = Tensor::uniform(shape, rng, -bound, bound, true);
        }
        model.parameters.emplace(name, std::move(t));
    }
    return model;
}

// ---------------------------------------------------------------------------
// AP baseline

Prediction ap_predict(const ClimateSequence& climate, double threshold_m) {
    if (!(threshold_m > 0.0)) throw ContractError("ap_predict: threshold must be positive");
    const double total = precipitation_sum(climate);
    return {total, total > threshold_m ? 1 : 0};
}

// ---------------------------------------------------------------------------
// Images

ImagePatch image_resize(const ImagePatch& image, std::size_t target) {
    if (target < 1) throw ContractError("image_resize: target must be >= 1");
    if (image.height == target && image.width == target) return image;
    ImagePatch out;
    out.height = target;
    out.width = target;
    out.channels = image.channels;
    out.pixels.resize(target * target * image.channels);
    const double sy = static_cast<double>(image.height) / static_cast<double>(target);
    const double sx = static_cast<double>(image.width) / static_cast<double>(target);
    auto source_coord = [](std::size_t dst, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1,
                           double& frac) {
        double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<std::size_t>(std::floor(s));
        i1 = std::min(i0 + 1, extent - 1);
        frac = s - static_cast<double>(i0);
    };
    for (std::size_t y = 0; y < target; ++y) {
        std::size_t y0, y1;
        double fy;
        source_coord(y, sy, image.height, y0, y1, fy);
        for (std::size_t x = 0; x < target; ++x) {
            std::size_t x0, x1;
            double fx;
            source_coord(x, sx, image.width, x0, x1, fx);
            for (std::size_t c = 0; c < image.channels; ++c) {
                const double top = (1.0 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c);
                const double bottom = (1.0 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c);
                const double v = (1.0 - fy) * top + fy * bottom;
                out.pixels[(y * target + x) * image.channels + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> patchify(const ImagePatch& image, std::size_t patch_size) {
    if (image.height % patch_size != 0 || image.width % patch_size != 0) {
        throw ContractError("patchify: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                            " is not divisible by patch size " + std::to_string(patch_size));
    }
    const std::size_t rows = image.height / patch_size;
    const std::size_t cols = image.width / patch_size;
    const std::size_t dim = patch_size * patch_size * image.channels;
    std::vector<T> values(rows * cols * dim);
    std::size_t idx = 0;
    for (std::size_t pr = 0; pr < rows; ++pr) {
        for (std::size_t pc = 0; pc < cols; ++pc) {
            for (std::size_t y = 0; y < patch_size; ++y) {
                for (std::size_t x = 0; x < patch_size; ++x) {
                    for (std::size_t c = 0; c < image.channels; ++c) {
                        values[idx++] =
                            static_cast<T>(image.at(pr * patch_size + y, pc * patch_size + x, c)) - T(0.5);
                    }
                }
            }
        }
    }
    return BasicTensor<T>::from_values({1, rows * cols, dim}, std::move(values));
}

// ---------------------------------------------------------------------------
// Inputs

void check_samples_compatible(Variant variant, std::span<const Sample> samples) {
    if (!variant_needs_image(variant)) return;
    for (const auto& s : samples) {
        if (!s.image) {
            throw MissingImageError("sample '" + s.id() + "' has no image patch, required by the " +
                                    std::string(variant_name(variant)) + " model");
        }
    }
}

template <typename T>
BatchInputs<T> encode_batch(const TrainedModel& model, std::span<const Sample* const> samples) {
    const ModelConfig& cfg = model.config;
    BatchInputs<T> in;
    in.batch = samples.size();
    if (samples.empty()) throw ContractError("encode_batch: empty batch");
    if (uses_lstm(cfg.variant)) {
        const std::size_t dim = cfg.lstm_input_dim();
        in.steps.reserve(kWindowDays);
        for (std::size_t t = 0; t < kWindowDays; ++t) {
            std::vector<T> v(in.batch * dim);
            for (std::size_t b = 0; b < in.batch; ++b) {
                for (std::size_t k = 0; k < dim; ++k) {
                    v[b * dim + k] = static_cast<T>(model.standardizer.apply(t, k, samples[b]->climate.at(t, k)));
                }
            }
            in.steps.push_back(BasicTensor<T>::from_values({in.batch, dim}, std::move(v)));
        }
    }
    if (uses_vit(cfg.variant)) {
        std::vector<T> v;
        for (const Sample* s : samples) {
            if (!s->image) {
                throw MissingImageError("sample '" + s->id() + "' has no image patch, required by the " +
                                        std::string(variant_name(cfg.variant)) + " model");
            }
            const ImagePatch resized = image_resize(*s->image, cfg.vit_image_size);
            auto p = patchify<T>(resized, cfg.vit_patch_size);
            v.insert(v.end(), p.values().begin(), p.values().end());
        }
        in.patches = BasicTensor<T>::from_values({in.batch, cfg.vit_patch_count(), cfg.vit_patch_dim()}, std::move(v));
    }
    return in;
}

// ---------------------------------------------------------------------------
// Graphs

namespace {

template <typename T>
const BasicTensor<T>& param(const BasicParameters<T>& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("missing parameter '" + name + "'");
    return it->second;
}

template <typename T>
BasicTensor<T> affine(const BasicParameters<T>& params, const std::string& prefix, const BasicTensor<T>& x) {
    return add(matmul(x, param(params, prefix + ".weight")), param(params, prefix + ".bias"));
}

template <typename T>
BasicTensor<T> norm(const BasicParameters<T>& params, const std::string& prefix, const BasicTensor<T>& x) {
    return add(mul(layer_norm(x, T(1e-5)), param(params, prefix + ".gamma")), param(params, prefix + ".beta"));
}

}  // namespace

template <typename T>
BasicTensor<T> lstm_embedding(const BasicParameters<T>& params, const ModelConfig& config,
                              std::span<const BasicTensor<T>> steps) {
    if (steps.empty()) throw ContractError("lstm_embedding: empty sequence");
    const std::size_t h = config.lstm_hidden;
    const std::size_t batch = steps[0].dim(0);
    std::vector<BasicTensor<T>> sequence(steps.begin(), steps.end());
    for (std::size_t l = 0; l < config.lstm_layers; ++l) {
        const std::string p = "lstm.l" + std::to_string(l) + ".";
        const auto& w_input = param(params, p + "w_input");
        const auto& w_hidden = param(params, p + "w_hidden");
        const auto& bias = param(params, p + "bias");
        if (sequence[0].dim(1) != w_input.dim(0)) {
            throw ContractError("lstm layer " + std::to_string(l) + " expects " + std::to_string(w_input.dim(0)) +
                                " input features, got " + std::to_string(sequence[0].dim(1)));
        }
        BasicTensor<T> hidden;
        auto cell = BasicTensor<T>::zeros({batch, h});
        for (auto& x : sequence) {
            auto gates = matmul(x, w_input);
            if (hidden.defined()) gates = add(gates, matmul(hidden, w_hidden));
            gates = add(gates, bias);
            auto in_gate = sigmoid(slice_last(gates, 0, h));
            auto forget_gate = sigmoid(slice_last(gates, h, 2 * h));
            auto candidate = tanh(slice_last(gates, 2 * h, 3 * h));
            auto out_gate = sigmoid(slice_last(gates, 3 * h, 4 * h));
            cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
            hidden = mul(out_gate, tanh(cell));
            x = hidden;
        }
    }
    return sequence.back();
}

template <typename T>
BasicTensor<T> vit_embedding(const BasicParameters<T>& params, const ModelConfig& config,
                             const BasicTensor<T>& patches, std::vector<BasicTensor<T>>* attention) {
    const std::size_t batch = patches.dim(0);
    const std::size_t d = config.vit_embed_dim;
    const std::size_t heads = config.vit_heads;
    const std::size_t dh = d / heads;
    if (patches.rank() != 3 || patches.dim(1) != config.vit_patch_count() || patches.dim(2) != config.vit_patch_dim()) {
        throw ContractError("vit_embedding: expected patches [B, " + std::to_string(config.vit_patch_count()) + ", " +
                            std::to_string(config.vit_patch_dim()) + "], got " + shape_to_string(patches.shape()));
    }

    auto tokens = affine(params, "vit.patch", patches);
    auto cls = reshape(param(params, "vit.cls"), {1, 1, d});
    std::vector<BasicTensor<T>> cls_rows(batch, cls);
    auto x = concat({concat(std::span<const BasicTensor<T>>(cls_rows), 0), tokens}, 1);
    x = add(x, param(params, "vit.pos"));

    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    for (std::size_t b = 0; b < config.vit_blocks; ++b) {
        const std::string p = "vit.b" + std::to_string(b) + ".";
        auto hn = norm(params, p + "ln1", x);
        auto q = affine(params, p + "attn.q", hn);
        auto k = affine(params, p + "attn.k", hn);
        auto v = affine(params, p + "attn.v", hn);
        std::vector<BasicTensor<T>> head_out;
        head_out.reserve(heads);
        for (std::size_t j = 0; j < heads; ++j) {
            auto qh = slice_last(q, j * dh, (j + 1) * dh);
            auto kh = slice_last(k, j * dh, (j + 1) * dh);
            auto vh = slice_last(v, j * dh, (j + 1) * dh);
            auto weights = softmax(scale(matmul(qh, transpose_last_two(kh)), inv_sqrt));
            if (attention) attention->push_back(weights);
            head_out.push_back(matmul(weights, vh));
        }
        x = add(x, affine(params, p + "attn.o", concat(std::span<const BasicTensor<T>>(head_out), -1)));
        auto mlp = affine(params, p + "mlp.fc2", relu(affine(params, p + "mlp.fc1", norm(params, p + "ln2", x))));
        x = add(x, mlp);
    }
    x = norm(params, "vit.ln", x);
    return reshape(slice(x, 1, 0, 1), {batch, d});
}

template <typename T>
BasicTensor<T> linear_head(const BasicParameters<T>& params, const BasicTensor<T>& embedding) {
    return affine(params, "head", embedding);
}

template <typename T>
BasicTensor<T> forward_logits(const BasicParameters<T>& params, const ModelConfig& config,
                              const BatchInputs<T>& inputs) {
    switch (config.variant) {
        case Variant::LstmSingle:
        case Variant::LstmMulti:
            return linear_head(params, lstm_embedding<T>(params, config, inputs.steps));
        case Variant::Vit:
            return linear_head(params, vit_embedding<T>(params, config, inputs.patches));
        case Variant::Fusion: {
            auto seq = lstm_embedding<T>(params, config, inputs.steps);
            auto img = vit_embedding<T>(params, config, inputs.patches);
            return linear_head(params, concat({seq, img}, -1));
        }
        case Variant::Ap: break;
    }
    throw ContractError("forward_logits: the AP model has no neural forward pass");
}

// ---------------------------------------------------------------------------
// Single-sample entry points

namespace {

double single_logit(const TrainedModel& model, const Sample& sample) {
    const Sample* ptr = &sample;
    auto inputs = encode_batch<float>(model, std::span<const Sample* const>(&ptr, 1));
    return forward_logits<float>(model.parameters, model.config, inputs).item();
}

double sigmoid_score(double logit) {
    return logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

}  // namespace

double lstm_forward(const TrainedModel& model, const ClimateSequence& climate, FeatureSubset subset) {
    const Variant v = model.config.variant;
    const bool ok = (v == Variant::LstmSingle && subset == FeatureSubset::PrecipOnly) ||
                    (v == Variant::LstmMulti && subset == FeatureSubset::All);
    if (!ok) {
        throw ContractError("lstm_forward: feature subset does not match model variant " +
                            std::string(variant_name(v)));
    }
    Sample s;
    s.climate = climate;
    return single_logit(model, s);
}

double vit_forward(const TrainedModel& model, const ImagePatch& image) {
    if (model.config.variant != Variant::Vit) throw ContractError("vit_forward: model is not a ViT");
    const std::size_t want = model.config.vit_image_size;
    if (image.height != want || image.width != want) {
        throw ContractError("vit_forward: expected a " + std::to_string(want) + "x" + std::to_string(want) +
                            " image, got " + std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    Sample s;
    s.image = image;
    return single_logit(model, s);
}

double fusion_forward(const TrainedModel& model, const ClimateSequence& climate, const ImagePatch& image) {
    if (model.config.variant != Variant::Fusion) throw ContractError("fusion_forward: model is not a fusion model");
    Sample s;
    s.climate = climate;
    s.image = image;
    return single_logit(model, s);
}

Prediction predict(const TrainedModel& model, const Sample& sample) {
    return predict_all(model, std::span<const Sample>(&sample, 1)).front();
}

std::vector<Prediction> predict_all(const TrainedModel& model, std::span<const Sample> samples) {
    std::vector<Prediction> out;
    out.reserve(samples.size());
    if (model.config.variant == Variant::Ap) {
        for (const auto& s : samples) out.push_back(ap_predict(s.climate, model.config.ap_threshold_m));
        return out;
    }
    check_samples_compatible(model.config.variant, samples);
    constexpr std::size_t kChunk = 64;
    NoGradGuard no_grad;
    std::vector<const Sample*> ptrs;
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        ptrs.clear();
        for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) ptrs.push_back(&samples[i]);
        auto inputs = encode_batch<float>(model, ptrs);
        auto logits = forward_logits<float>(model.parameters, model.config, inputs);
        for (float z : logits.values()) {
            const double score = sigmoid_score(z);
            out.push_back({score, score > model.config.decision_threshold ? 1 : 0});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

#define GREENUP_INSTANTIATE_MODELS(T)                                                                         \
    template BatchInputs<T> encode_batch<T>(const TrainedModel&, std::span<const Sample* const>);            \
    template BasicTensor<T> patchify<T>(const ImagePatch&, std::size_t);                                      \
    template BasicTensor<T> lstm_embedding<T>(const BasicParameters<T>&, const ModelConfig&,                  \
                                              std::span<const BasicTensor<T>>);                               \
    template BasicTensor<T> vit_embedding<T>(const BasicParameters<T>&, const ModelConfig&,                   \
                                             const BasicTensor<T>&, std::vector<BasicTensor<T>>*);            \
    template BasicTensor<T> linear_head<T>(const BasicParameters<T>&, const BasicTensor<T>&);                \
    template BasicTensor<T> forward_logits<T>(const BasicParameters<T>&, const ModelConfig&,                  \
                                              const BatchInputs<T>&);

GREENUP_INSTANTIATE_MODELS(float)
GREENUP_INSTANTIATE_MODELS(double)

#undef GREENUP_INSTANTIATE_MODELS

}  // namespace greenup
