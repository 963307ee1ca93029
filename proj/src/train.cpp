#include "greenup/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "greenup/errors.hpp"

namespace greenup {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("adam betas must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ValidationError("adam eps must be positive");
}

TrainConfig TrainConfig::defaults_for(Variant variant) {
    TrainConfig c;
    switch (variant) {
        case Variant::Vit:
            c.learning_rate = 1e-5;
            c.batch_size = 2;
            c.epochs = 10;
            break;
        case Variant::Fusion:
            c.learning_rate = 1e-5;
            c.batch_size = 4;
            c.epochs = 100;
            break;
        default: break;
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
                {"seed", c.seed},                   {"beta1", c.beta1},           {"beta2", c.beta2},
                {"eps", c.eps}};
}

Standardizer fit_standardizer(std::span<const Sample> samples) {
    if (samples.empty()) throw ValidationError("fit_standardizer: no training samples");
    Standardizer s;
    const double n = static_cast<double>(samples.size());
    for (std::size_t t = 0; t < kWindowDays; ++t) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            double sum = 0.0;
            for (const auto& sample : samples) sum += sample.climate.at(t, k);
            const double mean = sum / n;
            double sq = 0.0;
            for (const auto& sample : samples) {
                const double d = sample.climate.at(t, k) - mean;
                sq += d * d;
            }
            const std::size_t i = t * kFeatureCount + k;
            s.mean[i] = mean;
            s.stddev[i] = std::max(std::sqrt(sq / n), kStdFloor);
        }
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        double sum = 0.0;
        for (std::size_t t = 0; t < kWindowDays; ++t) sum += s.mean_at(t, k);
        s.pooled_mean[k] = sum / static_cast<double>(kWindowDays);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<float> param, std::span<const float> grad, AdamMoments& moments, std::uint64_t step,
               const AdamHyper& hyper) {
    if (grad.size() != param.size()) {
        throw ShapeError("adam_step: " + std::to_string(grad.size()) + " gradients for " +
                         std::to_string(param.size()) + " parameters");
    }
    if (step < 1) throw ContractError("adam_step: step counter starts at 1");
    if (moments.first.empty()) {
        moments.first.assign(param.size(), 0.0f);
        moments.second.assign(param.size(), 0.0f);
    }
    if (moments.first.size() != param.size() || moments.second.size() != param.size()) {
        throw ShapeError("adam_step: optimizer state does not match parameter size");
    }
    const double t = static_cast<double>(step);
    const double correction1 = 1.0 - std::pow(hyper.beta1, t);
    const double correction2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double m = hyper.beta1 * moments.first[i] + (1.0 - hyper.beta1) * g;
        const double v = hyper.beta2 * moments.second[i] + (1.0 - hyper.beta2) * g * g;
        moments.first[i] = static_cast<float>(m);
        moments.second[i] = static_cast<float>(v);
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        param[i] = static_cast<float>(param[i] - hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps));
    }
}

void Adam::step(Parameters& params) {
    ++steps_;
    for (auto& [name, tensor] : params) {
        if (!tensor.has_grad()) continue;
        adam_step(tensor.mutable_values(), tensor.grad(), state_[name], steps_, hyper_);
    }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Joins single-sample encodings into one batch.
BatchInputs<float> stack(const std::vector<BatchInputs<float>>& cache, std::span<const std::size_t> rows) {
    BatchInputs<float> out;
    out.batch = rows.size();
    const auto& first = cache[rows[0]];
    for (std::size_t t = 0; t < first.steps.size(); ++t) {
        const std::size_t dim = first.steps[t].dim(1);
        std::vector<float> v;
        v.reserve(rows.size() * dim);
        for (std::size_t r : rows) {
            auto src = cache[r].steps[t].values();
            v.insert(v.end(), src.begin(), src.end());
        }
        out.steps.push_back(Tensor::from_values({rows.size(), dim}, std::move(v)));
    }
    if (first.patches.defined()) {
        Shape shape = first.patches.shape();
        shape[0] = rows.size();
        std::vector<float> v;
        v.reserve(shape_numel(shape));
        for (std::size_t r : rows) {
            auto src = cache[r].patches.values();
            v.insert(v.end(), src.begin(), src.end());
        }
        out.patches = Tensor::from_values(shape, std::move(v));
    }
    return out;
}

}  // namespace

TrainResult train_model(Variant variant, std::span<const Sample> train_samples, const ModelConfig& model_config,
                        const TrainConfig& train_config) {
    ModelConfig config = model_config;
    config.variant = variant;
    config.validate();
    train_config.validate();
    if (train_samples.empty()) throw ValidationError("train_model: no training samples");
    for (const auto& s : train_samples) {
        if (!s.observation.has_label()) throw ValidationError("training sample '" + s.id() + "' is unlabeled");
    }
    check_samples_compatible(variant, train_samples);

    TrainResult result;
    Rng rng(train_config.seed);
    result.model = init_model(config, rng);
    result.model.standardizer = fit_standardizer(train_samples);
    if (variant == Variant::Ap) return result;

    auto& model = result.model;
    std::vector<BatchInputs<float>> cache;
    std::vector<float> labels;
    cache.reserve(train_samples.size());
    for (const auto& s : train_samples) {
        const Sample* ptr = &s;
        cache.push_back(encode_batch<float>(model, std::span<const Sample* const>(&ptr, 1)));
        labels.push_back(static_cast<float>(s.observation.label()));
    }

    Adam optimizer(AdamHyper{train_config.learning_rate, train_config.beta1, train_config.beta2, train_config.eps});
    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<float> batch_labels;

    for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_config.batch_size);
            std::span<const std::size_t> rows(order.data() + start, end - start);
            batch_labels.clear();
            for (std::size_t r : rows) batch_labels.push_back(labels[r]);

            for (auto& [name, p] : model.parameters) p.zero_grad();
            auto inputs = stack(cache, rows);
            auto logits = forward_logits<float>(model.parameters, model.config, inputs);
            auto loss = bce_with_logits(logits, std::span<const float>(batch_labels));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw Error("training loss became non-finite at epoch " + std::to_string(epoch + 1));
            }
            loss.backward();
            optimizer.step(model.parameters);
            loss_sum += value * static_cast<double>(rows.size());
        }
        result.loss_history.push_back(loss_sum / static_cast<double>(order.size()));
    }
    for (auto& [name, p] : model.parameters) p.zero_grad();
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_bytes(std::vector<unsigned char>& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string text() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: truncated");
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const TrainedModel& model) {
    std::vector<unsigned char> out{'P', 'H', 'C', 'K'};
    put_u32(out, kCheckpointVersion);
    const json header{{"model", to_json(model.config)},
                      {"standardizer", to_json(model.standardizer)},
                      {"feature_schema_hash", model.feature_schema_hash},
                      {"run", model.run_info}};
    put_bytes(out, header.dump());
    put_u32(out, static_cast<std::uint32_t>(model.parameters.size()));
    for (const auto& [name, tensor] : model.parameters) {
        put_bytes(out, name);
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

TrainedModel deserialize_checkpoint(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PHCK", 4) != 0) {
        throw CheckpointError("not a checkpoint: bad magic (expected PHCK)");
    }
    ByteReader in(bytes.subspan(4));
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    TrainedModel model;
    try {
        const json header = json::parse(in.text());
        model.feature_schema_hash = header.at("feature_schema_hash").get<std::string>();
        if (model.feature_schema_hash != feature_schema_hash()) {
            throw CheckpointError("feature schema hash mismatch: checkpoint has " + model.feature_schema_hash +
                                  ", this build expects " + feature_schema_hash() +
                                  "; the model was trained with a different feature order");
        }
        model.config = model_config_from_json(header.at("model"));
        model.standardizer = standardizer_from_json(header.at("standardizer"));
        model.run_info = header.at("run");
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint: bad config: ") + e.what());
    }

    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = in.text();
        const std::uint32_t rank = in.u32();
        if (rank == 0 || rank > 8) throw CheckpointError("corrupt checkpoint: bad rank for '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) {
            d = in.u32();
            if (d == 0) throw CheckpointError("corrupt checkpoint: zero dimension in '" + name + "'");
        }
        const std::size_t n = shape_numel(shape);
        if (n > bytes.size()) throw CheckpointError("corrupt checkpoint: truncated");
        std::vector<float> values(n);
        for (auto& v : values) v = std::bit_cast<float>(in.u32());
        model.parameters.emplace(std::move(name), Tensor::from_values(shape, std::move(values), true));
    }
    if (!in.at_end()) throw CheckpointError("corrupt checkpoint: trailing bytes");

    const auto layout = parameter_layout(model.config);
    if (layout.size() != model.parameters.size()) {
        throw CheckpointError("corrupt checkpoint: expected " + std::to_string(layout.size()) + " tensors, found " +
                              std::to_string(model.parameters.size()));
    }
    for (const auto& [name, shape] : layout) {
        auto it = model.parameters.find(name);
        if (it == model.parameters.end() || it->second.shape() != shape) {
            throw CheckpointError("corrupt checkpoint: parameter '" + name + "' missing or misshaped");
        }
    }
    return model;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace greenup
