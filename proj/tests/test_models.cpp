#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "greenup/errors.hpp"
#include "greenup/gradcheck.hpp"
#include "greenup/models.hpp"

using namespace greenup;

namespace {

ClimateSequence random_climate(Rng& rng) {
    ClimateSequence c;
    for (std::size_t t = 0; t < kWindowDays; ++t) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) c.at(t, k) = rng.uniform(-1.0, 1.0);
    }
    return c;
}

ImagePatch random_image(Rng& rng, std::size_t side) {
    ImagePatch img;
    img.height = img.width = side;
    img.pixels.resize(side * side * 3);
    for (auto& p : img.pixels) p = static_cast<float>(rng.next_double());
    return img;
}

ModelConfig toy_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.lstm_hidden = 4;
    c.lstm_layers = 2;
    c.vit_image_size = 8;
    c.vit_patch_size = 4;
    c.vit_embed_dim = 16;
    c.vit_heads = 2;
    c.vit_blocks = 2;
    return c;
}

template <typename T>
void zero_all(BasicParameters<T>& params) {
    for (auto& [name, t] : params) {
        for (auto& v : t.mutable_values()) v = T(0);
    }
}

long double sig(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

// Hand evaluation of a 1-input, 1-hidden, 1-layer LSTM in long double.
long double hand_lstm(const std::vector<long double>& xs, const long double wi[4], const long double wh[4],
                      const long double b[4], long double head_w, long double head_b) {
    long double h = 0.0L, c = 0.0L;
    for (long double x : xs) {
        const long double i = sig(wi[0] * x + wh[0] * h + b[0]);
        const long double f = sig(wi[1] * x + wh[1] * h + b[1]);
        const long double g = std::tanh(wi[2] * x + wh[2] * h + b[2]);
        const long double o = sig(wi[3] * x + wh[3] * h + b[3]);
        c = f * c + i * g;
        h = o * std::tanh(c);
    }
    return head_w * h + head_b;
}

}  // namespace

TEST_CASE("AP threshold and prediction") {
    CHECK(kApThresholdMeters == 1.7 * 0.0254);
    CHECK(kApThresholdMeters == doctest::Approx(0.04318).epsilon(1e-12));

    ClimateSequence c;
    auto p = ap_predict(c, kApThresholdMeters);
    CHECK(p.score == 0.0);
    CHECK(p.label == 0);

    for (std::size_t t = 0; t < kWindowDays; ++t) c.at(t, feature::kPrecipitation) = 0.002;
    p = ap_predict(c, kApThresholdMeters);
    CHECK(p.score == doctest::Approx(0.048));
    CHECK(p.label == 1);

    ClimateSequence edge;
    edge.at(23, feature::kPrecipitation) = kApThresholdMeters;
    CHECK(ap_predict(edge, kApThresholdMeters).label == 0);
    edge.at(23, feature::kPrecipitation) = std::nextafter(kApThresholdMeters, 1.0);
    CHECK(ap_predict(edge, kApThresholdMeters).label == 1);
}

TEST_CASE("parameter layout") {
    auto cfg = toy_config(Variant::Fusion);
    cfg.lstm_hidden = 128;
    cfg.vit_embed_dim = 32;
    CHECK(cfg.embedding_dim() == 160);
    const auto layout = parameter_layout(cfg);
    std::map<std::string, Shape> shapes(layout.begin(), layout.end());
    CHECK(shapes.at("head.weight") == Shape{160, 1});
    CHECK(shapes.at("lstm.l0.w_input") == Shape{16, 512});
    CHECK(shapes.at("lstm.l1.w_input") == Shape{128, 512});

    ModelConfig vit;
    vit.variant = Variant::Vit;
    CHECK(vit.vit_patch_count() == 16);
    CHECK(vit.vit_patch_dim() == 192);
    std::map<std::string, Shape> vs;
    for (const auto& [n, s] : parameter_layout(vit)) vs.emplace(n, s);
    CHECK(vs.at("vit.pos") == Shape{17, 32});
    CHECK(parameter_layout(ModelConfig{.variant = Variant::Ap}).empty());

    ModelConfig bad = vit;
    bad.vit_heads = 5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = vit;
    bad.vit_patch_size = 5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("init is deterministic and follows the documented scheme") {
    const auto cfg = toy_config(Variant::Fusion);
    Rng a(816), b(816);
    const auto m1 = init_model(cfg, a);
    const auto m2 = init_model(cfg, b);
    for (const auto& [name, t] : m1.parameters) {
        const auto& u = m2.parameters.at(name);
        CHECK(std::equal(t.values().begin(), t.values().end(), u.values().begin()));
    }
    const auto& w = m1.parameters.at("lstm.l0.w_input");
    const float bound = 1.0f / std::sqrt(16.0f);
    for (float v : w.values()) CHECK(std::abs(v) <= bound);
    for (float v : m1.parameters.at("lstm.l0.bias").values()) CHECK(v == 0.0f);
    for (float v : m1.parameters.at("vit.b0.ln1.gamma").values()) CHECK(v == 1.0f);
}

TEST_CASE("LSTM with zero weights yields logit 0") {
    Rng rng(1);
    auto model = init_model(toy_config(Variant::LstmMulti), rng);
    zero_all(model.parameters);
    CHECK(lstm_forward(model, random_climate(rng), FeatureSubset::All) == 0.0);
    CHECK_THROWS_AS(lstm_forward(model, random_climate(rng), FeatureSubset::PrecipOnly), ContractError);
}

TEST_CASE("LSTM matches a high-precision hand evaluation") {
    ModelConfig cfg;
    cfg.variant = Variant::LstmSingle;
    cfg.lstm_hidden = 1;
    cfg.lstm_layers = 1;
    Rng rng(2);
    auto model = init_model(cfg, rng);
    const long double wi[4] = {0.7L, -0.4L, 1.3L, 0.2L};
    const long double wh[4] = {-0.5L, 0.9L, 0.6L, -1.1L};
    const long double b[4] = {0.1L, 0.8L, -0.3L, 0.05L};
    auto set = [&](const char* name, const long double* vals, std::size_t n) {
        auto t = model.parameters.at(name);
        for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i] = static_cast<float>(vals[i]);
    };
    set("lstm.l0.w_input", wi, 4);
    set("lstm.l0.w_hidden", wh, 4);
    set("lstm.l0.bias", b, 4);
    const long double hw[1] = {1.7L}, hb[1] = {-0.2L};
    set("head.weight", hw, 1);
    set("head.bias", hb, 1);

    ClimateSequence c;
    std::vector<long double> xs;
    for (std::size_t t = 0; t < kWindowDays; ++t) {
        const float v = static_cast<float>(std::sin(0.7 * t));
        c.at(t, feature::kPrecipitation) = v;
        xs.push_back(v);
    }
    // Parameters are stored in float; evaluate the hand recurrence on the
    // same rounded values.
    long double wi_f[4], wh_f[4], b_f[4];
    for (int i = 0; i < 4; ++i) {
        wi_f[i] = static_cast<float>(wi[i]);
        wh_f[i] = static_cast<float>(wh[i]);
        b_f[i] = static_cast<float>(b[i]);
    }
    const long double expected = hand_lstm(xs, wi_f, wh_f, b_f, static_cast<float>(1.7L), static_cast<float>(-0.2L));
    CHECK(std::abs(lstm_forward(model, c, FeatureSubset::PrecipOnly) - static_cast<double>(expected)) < 1e-5);

    // The same weights apply at every step: one 2-step unroll equals two
    // chained 1-step unrolls done by hand.
    auto p64 = cast_parameters<double>(model.parameters);
    auto x0 = Tensor64::from_values({1, 1}, {0.3});
    auto x1 = Tensor64::from_values({1, 1}, {-0.8});
    std::vector<Tensor64> two{x0, x1};
    const double h2 = lstm_embedding<double>(p64, cfg, two).item();
    const long double h_manual = [&] {
        long double h = 0.0L, cell = 0.0L;
        for (long double x : {0.3L, -0.8L}) {
            const long double i = sig(wi_f[0] * x + wh_f[0] * h + b_f[0]);
            const long double f = sig(wi_f[1] * x + wh_f[1] * h + b_f[1]);
            const long double g = std::tanh(wi_f[2] * x + wh_f[2] * h + b_f[2]);
            const long double o = sig(wi_f[3] * x + wh_f[3] * h + b_f[3]);
            cell = f * cell + i * g;
            h = o * std::tanh(cell);
        }
        return h;
    }();
    CHECK(std::abs(h2 - static_cast<double>(h_manual)) < 1e-12);
}

TEST_CASE("LSTM hidden states are bounded and sized") {
    ModelConfig cfg;
    cfg.variant = Variant::LstmMulti;
    Rng rng(3);
    auto model = init_model(cfg, rng);
    auto params = cast_parameters<double>(model.parameters);
    for (auto& [n, t] : params) {
        for (auto& v : t.mutable_values()) v *= 3.0;
    }
    std::vector<Tensor64> steps;
    for (std::size_t t = 0; t < kWindowDays; ++t) steps.push_back(Tensor64::normal({2, 16}, rng, 0.0, 2.0));
    const auto h = lstm_embedding<double>(params, cfg, steps);
    CHECK(h.shape() == Shape{2, 128});
    for (double v : h.values()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("ViT geometry, attention and position sensitivity") {
    ModelConfig cfg;
    cfg.variant = Variant::Vit;
    Rng rng(4);
    const auto model = init_model(cfg, rng);
    const auto img = random_image(rng, 32);
    const auto patches = patchify<float>(img, 8);
    CHECK(patches.shape() == Shape{1, 16, 192});

    std::vector<Tensor> attention;
    vit_embedding<float>(model.parameters, cfg, patches, &attention);
    REQUIRE(attention.size() == cfg.vit_blocks * cfg.vit_heads);
    for (const auto& a : attention) {
        REQUIRE(a.shape() == Shape{1, 17, 17});
        for (std::size_t r = 0; r < 17; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 17; ++c) s += a.values()[r * 17 + c];
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }

    // Reverse the patch order: position embeddings make the logit change.
    std::vector<float> reversed(patches.numel());
    for (std::size_t p = 0; p < 16; ++p) {
        std::copy_n(patches.values().begin() + (15 - p) * 192, 192, reversed.begin() + p * 192);
    }
    const auto swapped = Tensor::from_values({1, 16, 192}, reversed);
    const float l1 = linear_head(model.parameters, vit_embedding<float>(model.parameters, cfg, patches)).item();
    const float l2 = linear_head(model.parameters, vit_embedding<float>(model.parameters, cfg, swapped)).item();
    CHECK(l1 != l2);

    CHECK(vit_forward(model, img) == doctest::Approx(l1).epsilon(1e-6));
    CHECK_THROWS_AS(vit_forward(model, random_image(rng, 16)), ContractError);
}

TEST_CASE("bilinear resize") {
    Rng rng(5);
    const auto img = random_image(rng, 6);
    CHECK(image_resize(img, 6) == img);

    ImagePatch flat;
    flat.height = flat.width = 3;
    flat.pixels.assign(27, 0.25f);
    for (std::size_t side : {1u, 2u, 7u, 16u}) {
        const auto r = image_resize(flat, side);
        for (float p : r.pixels) CHECK(p == doctest::Approx(0.25f));
    }

    ImagePatch checker;
    checker.height = checker.width = 2;
    checker.pixels = {0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    const auto r = image_resize(checker, 3);
    // Half-pixel centers: output (1, 1) maps to source (0.5, 0.5), the mean of all four.
    for (std::size_t c = 0; c < 3; ++c) CHECK(r.at(1, 1, c) == doctest::Approx(0.5f));
    CHECK(r.at(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(r.at(0, 2, 0) == doctest::Approx(1.0f));
}

TEST_CASE("fusion decomposes into its two embeddings plus the head") {
    const auto cfg = toy_config(Variant::Fusion);
    Rng rng(6);
    auto model = init_model(cfg, rng);
    Sample s;
    s.climate = random_climate(rng);
    s.image = random_image(rng, 8);
    const double fused = fusion_forward(model, s.climate, *s.image);

    const auto p = cast_parameters<double>(model.parameters);
    const Sample* ptr = &s;
    const auto in = encode_batch<double>(model, std::span<const Sample* const>(&ptr, 1));
    const auto seq = lstm_embedding<double>(p, cfg, in.steps);
    const auto img = vit_embedding<double>(p, cfg, in.patches);
    CHECK(seq.shape() == Shape{1, 4});
    CHECK(img.shape() == Shape{1, 16});
    double manual = p.at("head.bias").item();
    for (std::size_t i = 0; i < 4; ++i) manual += seq.values()[i] * p.at("head.weight").values()[i];
    for (std::size_t i = 0; i < 16; ++i) manual += img.values()[i] * p.at("head.weight").values()[4 + i];
    CHECK(std::abs(fused - manual) < 1e-6);

    for (auto& v : model.parameters.at("head.weight").mutable_values()) v = 0.0f;
    model.parameters.at("head.bias").mutable_values()[0] = 0.375f;
    CHECK(fusion_forward(model, s.climate, *s.image) == 0.375);
    CHECK(fusion_forward(model, random_climate(rng), random_image(rng, 8)) == 0.375);

    Sample no_image;
    no_image.climate = s.climate;
    CHECK_THROWS_AS(predict(model, no_image), MissingImageError);
}

TEST_CASE("predict thresholds strictly") {
    Rng rng(7);
    auto model = init_model(toy_config(Variant::LstmMulti), rng);
    for (auto& v : model.parameters.at("head.weight").mutable_values()) v = 0.0f;
    Sample s;
    s.climate = random_climate(rng);
    model.parameters.at("head.bias").mutable_values()[0] = 0.0f;
    auto p = predict(model, s);
    CHECK(p.score == 0.5);
    CHECK(p.label == 0);
    model.parameters.at("head.bias").mutable_values()[0] = 50.0f;
    p = predict(model, s);
    CHECK(p.score == doctest::Approx(1.0));
    CHECK(p.label == 1);

    TrainedModel ap;
    ap.config.variant = Variant::Ap;
    const auto direct = ap_predict(s.climate, ap.config.ap_threshold_m);
    CHECK(predict(ap, s).score == direct.score);
    CHECK(predict(ap, s).label == direct.label);
}

TEST_CASE("predict_all agrees with single predictions across chunk boundaries") {
    Rng rng(8);
    const auto model = init_model(toy_config(Variant::LstmMulti), rng);
    std::vector<Sample> samples(70);
    for (auto& s : samples) s.climate = random_climate(rng);
    const auto all = predict_all(model, samples);
    for (std::size_t i : {0u, 63u, 64u, 69u}) CHECK(all[i].score == predict(model, samples[i]).score);
}

TEST_CASE("full-model gradient checks") {
    Rng rng(816);
    SUBCASE("LSTM, 1 and 3 steps") {
        ModelConfig cfg;
        cfg.variant = Variant::LstmMulti;
        cfg.lstm_hidden = 4;
        cfg.lstm_layers = 2;
        for (std::size_t steps : {1u, 3u}) {
            auto params = cast_parameters<double>(init_model(cfg, rng).parameters);
            std::vector<Tensor64> leaves;
            for (auto& [n, t] : params) {
                t.set_requires_grad(true);
                leaves.push_back(t);
            }
            std::vector<Tensor64> xs;
            for (std::size_t t = 0; t < steps; ++t) xs.push_back(Tensor64::uniform({3, 16}, rng, -1.0, 1.0));
            const double labels[] = {1, 0, 1};
            auto loss = [&] {
                return bce_with_logits(linear_head(params, lstm_embedding<double>(params, cfg, xs)),
                                       std::span<const double>(labels));
            };
            CAPTURE(steps);
            CHECK(finite_difference_check(loss, leaves).max_error < 1e-4);
        }
    }
    SUBCASE("ViT, 2 blocks, dim 16") {
        auto cfg = toy_config(Variant::Vit);
        auto params = cast_parameters<double>(init_model(cfg, rng).parameters);
        std::vector<Tensor64> leaves;
        for (auto& [n, t] : params) {
            t.set_requires_grad(true);
            leaves.push_back(t);
        }
        auto patches = Tensor64::uniform({2, cfg.vit_patch_count(), cfg.vit_patch_dim()}, rng, -0.5, 0.5);
        const double labels[] = {1, 0};
        auto loss = [&] {
            return bce_with_logits(linear_head(params, vit_embedding<double>(params, cfg, patches)),
                                   std::span<const double>(labels));
        };
        const auto r = finite_difference_check(loss, leaves);
        CHECK(r.max_error < 1e-4);
        CHECK(r.checked > 1000);
    }
    SUBCASE("fusion") {
        auto cfg = toy_config(Variant::Fusion);
        auto params = cast_parameters<double>(init_model(cfg, rng).parameters);
        std::vector<Tensor64> leaves;
        for (auto& [n, t] : params) {
            t.set_requires_grad(true);
            leaves.push_back(t);
        }
        std::vector<Tensor64> xs;
        for (std::size_t t = 0; t < 3; ++t) xs.push_back(Tensor64::uniform({2, 16}, rng, -1.0, 1.0));
        auto patches = Tensor64::uniform({2, cfg.vit_patch_count(), cfg.vit_patch_dim()}, rng, -0.5, 0.5);
        BatchInputs<double> in{2, xs, patches};
        const double labels[] = {0, 1};
        auto loss = [&] {
            return bce_with_logits(forward_logits<double>(params, cfg, in), std::span<const double>(labels));
        };
        CHECK(finite_difference_check(loss, leaves).max_error < 1e-4);
    }
}
