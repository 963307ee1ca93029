#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "greenup/cli.hpp"
#include "greenup/errors.hpp"
#include "test_util.hpp"

using namespace greenup;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli_dispatch(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string config_error(const json& j) {
    try {
        parse_run_config(j);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

// Noise-free data whose labels follow the AP rule exactly.
fs::path write_ap_config(const fs::path& dir) {
    const json cfg = {{"data",
                       {{"n", 80},
                        {"noise_rate", 0.0},
                        {"precip_threshold_in", 1.7},
                        {"temp_coupling_m_per_k", 0.0},
                        {"image_fraction", 0.0}}},
                      {"model", {{"lstm_hidden", 4}, {"lstm_layers", 1}}},
                      {"train", {{"epochs", 2}, {"batch_size", 8}, {"learning_rate", 1e-3}}},
                      {"eval", {{"k", 3}, {"parallel", false}}}};
    const auto path = dir / "run.json";
    spit(path, cfg.dump(2));
    return path;
}

}  // namespace

TEST_CASE("run config parsing") {
    const auto rc = parse_run_config(json::parse(R"({
        "data": {"seed": 3, "n": 50, "precip_threshold_in": 2.0, "window": 24, "test_fraction": 0.25},
        "model": {"ap_threshold_in": 1.0, "lstm_hidden": 16},
        "train": {"epochs": 7, "learning_rate": 0.001},
        "eval": {"k": 4, "seed": 9, "parallel": false}
    })"));
    CHECK(rc.data_seed == 3);
    CHECK(rc.synthetic.n == 50);
    CHECK(rc.synthetic.precip_threshold_m == doctest::Approx(0.0508));
    CHECK(rc.test_fraction == 0.25);
    CHECK(rc.model.ap_threshold_m == doctest::Approx(0.0254));
    CHECK(rc.cv_folds == 4);
    CHECK_FALSE(rc.parallel_folds);

    const auto tc = rc.train_config(Variant::LstmMulti);
    CHECK(tc.epochs == 7);
    CHECK(tc.learning_rate == 0.001);
    CHECK(tc.batch_size == 4);
    CHECK(rc.model_config(Variant::Vit).variant == Variant::Vit);

    const auto defaults = parse_run_config(json::object());
    CHECK(defaults.data_seed == 816);
    CHECK(defaults.model.ap_threshold_m == kApThresholdMeters);
    CHECK(defaults.train_config(Variant::Fusion) == TrainConfig::defaults_for(Variant::Fusion));
}

TEST_CASE("run config errors name the offending key") {
    CHECK(config_error({{"data", {{"nn", 3}}}}).find("data.nn: unknown key") != std::string::npos);
    CHECK(config_error({{"extra", 1}}).find("extra: unknown key") != std::string::npos);
    CHECK(config_error({{"train", {{"epochs", -2}}}}).find("train.epochs") != std::string::npos);
    CHECK(config_error({{"train", {{"epochs", 0}}}}).find("train.epochs: must be >= 1") != std::string::npos);
    CHECK(config_error({{"data", {{"window", 12}}}}).find("data.window") != std::string::npos);
    CHECK(config_error({{"model", {{"lstm_hidden", "big"}}}}).find("model.lstm_hidden") != std::string::npos);
    CHECK(config_error({{"eval", {{"parallel", 1}}}}).find("eval.parallel") != std::string::npos);
    CHECK(config_error({{"data", {{"precip_threshold_m", 0.1}, {"precip_threshold_in", 2}}}}).find("not both") !=
          std::string::npos);
    CHECK(config_error({{"model", {{"vit_heads", 5}}}}).find("model:") != std::string::npos);
    CHECK(config_error(json::array()).find("<root>") != std::string::npos);

    const auto dir = test::scratch_dir("cli_badjson");
    spit(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_run_config((dir / "bad.json").string()), ValidationError);
    CHECK_THROWS_AS(load_run_config((dir / "missing.json").string()), IoError);
}

TEST_CASE("end-to-end pipeline") {
    const auto dir = test::scratch_dir("cli_pipeline");
    const auto cfg = write_ap_config(dir).string();
    const auto data = (dir / "data").string();

    REQUIRE(run({"synth", "--config", cfg, "--out", data}).code == 0);
    CHECK(fs::exists(fs::path(data) / "observations.csv"));
    CHECK(fs::exists(fs::path(data) / "climate.csv"));

    // AP on noise-free data generated by the AP rule is perfect.
    const auto ap = (dir / "ap.phck").string();
    REQUIRE(run({"train", "--model", "ap", "--data", data, "--config", cfg, "--out", ap}).code == 0);
    const auto holdout = (dir / "ap_holdout.json").string();
    REQUIRE(run({"eval", "--model-file", ap, "--data", data, "--mode", "holdout", "--out", holdout}).code == 0);
    const auto report = json::parse(slurp(holdout));
    CHECK(report["metrics"]["accuracy"]["mean"] == 1.0);
    CHECK(report["metrics"]["accuracy"]["std"] == 0.0);
    CHECK(report["samples"] == 16);
    CHECK(slurp(dir / "ap_holdout.csv").rfind("metric,fold,value\n", 0) == 0);

    // Training is deterministic to the byte.
    const auto m1 = (dir / "lstm1.phck").string();
    const auto m2 = (dir / "lstm2.phck").string();
    REQUIRE(run({"train", "--model", "lstm-multi", "--data", data, "--config", cfg, "--out", m1}).code == 0);
    REQUIRE(run({"train", "--model", "lstm-multi", "--data", data, "--config", cfg, "--out", m2}).code == 0);
    CHECK(slurp(m1) == slurp(m2));

    const auto cv = run({"eval", "--model-file", m1, "--data", data, "--mode", "cv", "--config", cfg});
    REQUIRE(cv.code == 0);
    const auto cvj = json::parse(cv.out);
    CHECK(cvj["folds"].size() == 3);
    CHECK(cvj["samples"] == 64);
    CHECK(cvj["standardizer_fingerprints"].size() == 3);
    for (const char* key : {"accuracy", "f1", "fp_rate", "fn_rate"}) {
        CHECK(cvj["metrics"][key].contains("mean"));
        CHECK(cvj["metrics"][key].contains("std"));
    }

    const auto pred = run({"predict", "--model-file", m1, "--data", data});
    REQUIRE(pred.code == 0);
    CHECK(pred.out.rfind("id,score,label\n", 0) == 0);
    CHECK(std::count(pred.out.begin(), pred.out.end(), '\n') == 81);

    const auto sens_dir = dir / "sens";
    REQUIRE(run({"sensitivity", "--model-file", m1, "--data", data, "--out-dir", sens_dir.string()}).code == 0);
    const auto sj = json::parse(slurp(sens_dir / "sensitivity.json"));
    CHECK(sj["split"] == "train");
    CHECK(sj["perturbation"] == "per-timestep");
    CHECK(sj["records"] == 64 * 16);
    CHECK(fs::exists(sens_dir / "sensitivity_agg.csv"));

    const auto venn = run({"agreement", "--model-a", ap, "--model-b", m1, "--data", data});
    REQUIRE(venn.code == 0);
    const auto vj = json::parse(venn.out);
    CHECK(vj["model_a"] == "ap");
    CHECK(vj["samples"] == 16);
    std::size_t total = 0;
    for (const char* c : {"TP", "FP", "TN", "FN"}) {
        total += vj["classes"][c]["both"]["count"].get<std::size_t>();
        total += vj["classes"][c]["only_a"]["count"].get<std::size_t>();
    }
    CHECK(total == 16);
}

TEST_CASE("exit codes") {
    CHECK(run({}).code == 1);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"frobnicate"}).code == 1);
    const auto missing = run({"train", "--model", "ap"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") != std::string::npos);

    const auto dir = test::scratch_dir("cli_codes");
    const auto io = run({"predict", "--model-file", (dir / "nope.phck").string(), "--data", dir.string()});
    CHECK(io.code == 2);
    spit(dir / "junk.phck", "not a checkpoint");
    const auto bad = run({"predict", "--model-file", (dir / "junk.phck").string(), "--data", dir.string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("bad magic") != std::string::npos);

    spit(dir / "cfg.json", R"({"train": {"epoch": 3}})");
    const auto cfg = run({"synth", "--config", (dir / "cfg.json").string(), "--out", (dir / "d").string()});
    CHECK(cfg.code == 1);
    CHECK(cfg.err.find("train.epoch") != std::string::npos);
    CHECK(run({"train", "--model", "gru", "--data", dir.string(), "--out", "x"}).code == 1);
}
