#include "greenup/cli.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>

#include "greenup/errors.hpp"
#include "greenup/eval.hpp"
#include "greenup/sensitivity.hpp"

namespace greenup {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& what) {
    throw ValidationError("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) config_fail(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || a == key;
        if (!known) config_fail(path.empty() ? key : path + "." + key, "unknown key");
    }
}

std::string join(const std::string& path, const char* key) { return path + "." + key; }

std::optional<double> number_at(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj.at(key);
    if (!v.is_number()) config_fail(join(path, key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) config_fail(join(path, key), "expected a finite number");
    return d;
}

std::optional<std::uint64_t> unsigned_at(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        config_fail(join(path, key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::optional<std::size_t> positive_at(const json& obj, const std::string& path, const char* key) {
    const auto v = unsigned_at(obj, path, key);
    if (v && *v == 0) config_fail(join(path, key), "must be >= 1");
    return v ? std::optional<std::size_t>(static_cast<std::size_t>(*v)) : std::nullopt;
}

std::optional<bool> bool_at(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    if (!obj.at(key).is_boolean()) config_fail(join(path, key), "expected true or false");
    return obj.at(key).get<bool>();
}

template <typename T, typename U>
void assign(T& target, const std::optional<U>& value) {
    if (value) target = static_cast<T>(*value);
}

void parse_data(const json& d, RunConfig& rc) {
    const std::string p = "data";
    check_keys(d, p,
               {"seed", "n", "noise_rate", "precip_threshold_m", "precip_threshold_in", "temp_coupling_m_per_k",
                "reference_temp_k", "image_fraction", "image_size", "test_fraction", "window"});
    auto& s = rc.synthetic;
    assign(rc.data_seed, unsigned_at(d, p, "seed"));
    assign(s.n, positive_at(d, p, "n"));
    assign(s.noise_rate, number_at(d, p, "noise_rate"));
    const auto th_m = number_at(d, p, "precip_threshold_m");
    const auto th_in = number_at(d, p, "precip_threshold_in");
    if (th_m && th_in) config_fail(p, "give precip_threshold_m or precip_threshold_in, not both");
    assign(s.precip_threshold_m, th_m);
    if (th_in) s.precip_threshold_m = *th_in * kMetersPerInch;
    assign(s.temp_coupling_m_per_k, number_at(d, p, "temp_coupling_m_per_k"));
    assign(s.reference_temp_k, number_at(d, p, "reference_temp_k"));
    assign(s.image_fraction, number_at(d, p, "image_fraction"));
    assign(s.image_size, positive_at(d, p, "image_size"));
    assign(rc.test_fraction, number_at(d, p, "test_fraction"));
    if (!(rc.test_fraction > 0.0 && rc.test_fraction < 1.0)) config_fail("data.test_fraction", "must be in (0, 1)");
    if (const auto w = unsigned_at(d, p, "window"); w && *w != kWindowDays) {
        config_fail("data.window", "only a " + std::to_string(kWindowDays) + "-day window is supported");
    }
    try {
        s.validate();
    } catch (const ValidationError& e) {
        config_fail(p, e.what());
    }
}

void parse_model(const json& m, RunConfig& rc) {
    const std::string p = "model";
    check_keys(m, p,
               {"ap_threshold_in", "threshold", "lstm_hidden", "lstm_layers", "vit_image_size", "vit_patch_size",
                "vit_embed_dim", "vit_heads", "vit_blocks"});
    auto& c = rc.model;
    if (const auto in = number_at(m, p, "ap_threshold_in")) c.ap_threshold_m = *in * kMetersPerInch;
    assign(c.decision_threshold, number_at(m, p, "threshold"));
    assign(c.lstm_hidden, positive_at(m, p, "lstm_hidden"));
    assign(c.lstm_layers, positive_at(m, p, "lstm_layers"));
    assign(c.vit_image_size, positive_at(m, p, "vit_image_size"));
    assign(c.vit_patch_size, positive_at(m, p, "vit_patch_size"));
    assign(c.vit_embed_dim, positive_at(m, p, "vit_embed_dim"));
    assign(c.vit_heads, positive_at(m, p, "vit_heads"));
    assign(c.vit_blocks, positive_at(m, p, "vit_blocks"));
    try {
        c.validate();
    } catch (const ValidationError& e) {
        config_fail(p, e.what());
    }
}

void parse_train(const json& t, RunConfig& rc) {
    const std::string p = "train";
    check_keys(t, p, {"learning_rate", "batch_size", "epochs", "seed"});
    rc.learning_rate = number_at(t, p, "learning_rate");
    if (rc.learning_rate && !(*rc.learning_rate > 0.0)) config_fail("train.learning_rate", "must be positive");
    rc.batch_size = positive_at(t, p, "batch_size");
    rc.epochs = positive_at(t, p, "epochs");
    rc.train_seed = unsigned_at(t, p, "seed");
}

void parse_eval(const json& e, RunConfig& rc) {
    const std::string p = "eval";
    check_keys(e, p, {"k", "seed", "parallel"});
    assign(rc.cv_folds, unsigned_at(e, p, "k"));
    if (rc.cv_folds < 2) config_fail("eval.k", "must be >= 2");
    assign(rc.eval_seed, unsigned_at(e, p, "seed"));
    assign(rc.parallel_folds, bool_at(e, p, "parallel"));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json run_info_for(Variant variant, const RunConfig& rc, const TrainConfig& tc, std::size_t n_train) {
    return json{{"variant", variant_name(variant)},
                {"data", {{"seed", rc.data_seed}, {"test_fraction", rc.test_fraction}}},
                {"train", to_json(tc)},
                {"train_samples", n_train}};
}

struct SplitInfo {
    std::uint64_t seed = kDefaultSeed;
    double test_fraction = 0.2;

    bool operator==(const SplitInfo&) const = default;
};

SplitInfo split_info(const TrainedModel& model) {
    const auto& info = model.run_info;
    if (!info.contains("data")) throw ValidationError("checkpoint records no data split");
    try {
        return {info.at("data").at("seed").get<std::uint64_t>(), info.at("data").at("test_fraction").get<double>()};
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed run info in checkpoint: ") + e.what());
    }
}

TrainTestSplit split_for(const TrainedModel& model, std::span<const Sample> samples) {
    const auto info = split_info(model);
    Rng rng(info.seed);
    return train_test_split(samples, info.test_fraction, rng);
}

TrainConfig train_config_from_run_info(const TrainedModel& model) {
    TrainConfig c = TrainConfig::defaults_for(model.config.variant);
    if (!model.run_info.contains("train")) return c;
    try {
        const auto& t = model.run_info.at("train");
        c.learning_rate = t.at("learning_rate").get<double>();
        c.batch_size = t.at("batch_size").get<std::size_t>();
        c.epochs = t.at("epochs").get<std::size_t>();
        c.seed = t.at("seed").get<std::uint64_t>();
        c.beta1 = t.at("beta1").get<double>();
        c.beta2 = t.at("beta2").get<double>();
        c.eps = t.at("eps").get<double>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed training config in checkpoint: ") + e.what());
    }
    return c;
}

std::vector<Sample> select_split(const TrainedModel& model, std::vector<Sample> samples, const std::string& which) {
    if (which == "all") return samples;
    auto split = split_for(model, samples);
    if (which == "train") return std::move(split.train);
    if (which == "test") return std::move(split.test);
    throw ValidationError("unknown split '" + which + "' (expected train, test or all)");
}

json summary_json(const MetricsReport& m) {
    auto entry = [](double v) { return json{{"mean", v}, {"std", 0.0}}; };
    return json{{"accuracy", entry(m.accuracy)},
                {"f1", entry(m.f1)},
                {"fp_rate", entry(m.fp_rate)},
                {"fn_rate", entry(m.fn_rate)}};
}

fs::path sibling_csv(const fs::path& report) {
    fs::path p = report;
    p.replace_extension(".csv");
    if (p == report) p += ".metrics.csv";
    return p;
}

// ---------------------------------------------------------------------------

struct Options {
    std::string config;
    std::string out;
    std::string data;
    std::string model_name;
    std::string model_file;
    std::string model_a;
    std::string model_b;
    std::string mode;
    std::string sens_split;
    std::string agree_split;
    std::optional<std::size_t> n;
    std::optional<double> noise;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> hidden;
    std::optional<std::size_t> folds;
    bool serial = false;
};

RunConfig config_from(const Options& o) {
    return o.config.empty() ? RunConfig{} : load_run_config(o.config);
}

int run_synth(const Options& o, std::ostream& err) {
    RunConfig rc = config_from(o);
    assign(rc.synthetic.n, o.n);
    assign(rc.synthetic.noise_rate, o.noise);
    assign(rc.data_seed, o.seed);
    rc.synthetic.validate();
    Rng rng(rc.data_seed);
    const auto samples = generate_synthetic(rc.synthetic, rng);
    save_dataset(o.out, samples);
    err << "wrote " << samples.size() << " samples to " << o.out << "\n";
    return 0;
}

int run_train(const Options& o, std::ostream& err) {
    RunConfig rc = config_from(o);
    const Variant variant = parse_variant(o.model_name);
    if (o.epochs) rc.epochs = o.epochs;
    if (o.lr) rc.learning_rate = o.lr;
    if (o.batch_size) rc.batch_size = o.batch_size;
    if (o.seed) rc.train_seed = o.seed;
    assign(rc.model.lstm_hidden, o.hidden);

    const auto samples = load_dataset(o.data);
    Rng split_rng(rc.data_seed);
    const auto split = train_test_split(samples, rc.test_fraction, split_rng);
    const auto mc = rc.model_config(variant);
    const auto tc = rc.train_config(variant);
    auto result = train_model(variant, split.train, mc, tc);
    result.model.run_info = run_info_for(variant, rc, tc, split.train.size());
    save_checkpoint(result.model, o.out);
    err << "trained " << variant_name(variant) << " on " << split.train.size() << " samples";
    if (!result.loss_history.empty()) err << ", final loss " << result.loss_history.back();
    err << "\n";
    return 0;
}

int run_eval(const Options& o, std::ostream& out, std::ostream& err) {
    const auto model = load_checkpoint(o.model_file);
    const auto samples = load_dataset(o.data);
    const auto split = split_for(model, samples);
    const std::string variant(variant_name(model.config.variant));
    json report;
    std::string csv;
    if (o.mode == "holdout") {
        const auto [counts, m] = evaluate(model, split.test);
        report = json{{"mode", "holdout"},
                      {"model", variant},
                      {"samples", split.test.size()},
                      {"confusion", to_json(counts)},
                      {"metrics", summary_json(m)}};
        csv = metrics_csv(summarize_folds({m}));
    } else if (o.mode == "cv") {
        RunConfig rc = config_from(o);
        assign(rc.cv_folds, o.folds);
        assign(rc.eval_seed, o.seed);
        if (rc.cv_folds < 2) throw ValidationError("--folds must be >= 2");
        if (o.serial) rc.parallel_folds = false;
        Rng fold_rng(rc.eval_seed);
        const auto plan = make_folds(split.train, rc.cv_folds, fold_rng);
        const auto cv = cross_validate(model.config.variant, split.train, plan, model.config,
                                       train_config_from_run_info(model), rc.parallel_folds);
        report = to_json(cv);
        report["mode"] = "cv";
        report["model"] = variant;
        report["k"] = rc.cv_folds;
        report["seed"] = rc.eval_seed;
        report["samples"] = split.train.size();
        report["standardizer_fingerprints"] = cv.standardizer_fingerprints;
        csv = metrics_csv(cv);
    } else {
        throw ValidationError("unknown eval mode '" + o.mode + "' (expected cv or holdout)");
    }
    if (o.out.empty()) {
        out << report.dump(2) << "\n";
    } else {
        write_json(o.out, report);
        write_text(sibling_csv(o.out), csv);
    }
    err << variant << " " << o.mode << " accuracy " << report["metrics"]["accuracy"]["mean"].get<double>() << "\n";
    return 0;
}

int run_predict(const Options& o, std::ostream& out) {
    const auto model = load_checkpoint(o.model_file);
    const auto samples = load_dataset(o.data);
    const auto preds = predict_all(model, samples);
    std::ostringstream csv;
    csv << "id,score,label\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        csv << samples[i].id() << ',' << format_real(preds[i].score) << ',' << preds[i].label << '\n';
    }
    if (o.out.empty()) {
        out << csv.str();
    } else {
        write_text(o.out, csv.str());
    }
    return 0;
}

int run_sensitivity(const Options& o, std::ostream& err) {
    const auto model = load_checkpoint(o.model_file);
    const auto mode = parse_perturbation_mode(o.mode);
    const auto samples = select_split(model, load_dataset(o.data), o.sens_split);
    const auto records = sensitivity_scan(model, samples, mode);
    const auto agg = aggregate_z(records);
    const fs::path dir = o.out;
    write_text(dir / "sensitivity.csv", sensitivity_csv(records));
    write_text(dir / "sensitivity_agg.csv", sensitivity_aggregate_csv(agg));
    write_json(dir / "sensitivity.json", json{{"model", variant_name(model.config.variant)},
                                              {"perturbation", perturbation_mode_name(mode)},
                                              {"split", o.sens_split},
                                              {"samples", samples.size()},
                                              {"records", records.size()}});
    err << "wrote " << records.size() << " sensitivity records to " << dir.string() << "\n";
    return 0;
}

int run_agreement(const Options& o, std::ostream& out, std::ostream& err) {
    const auto a = load_checkpoint(o.model_a);
    const auto b = load_checkpoint(o.model_b);
    if (o.agree_split != "all" && !(split_info(a) == split_info(b))) {
        throw ValidationError("models were trained on different data splits; use --split all");
    }
    const auto samples = select_split(a, load_dataset(o.data), o.agree_split);
    const auto pa = predict_all(a, samples);
    const auto pb = predict_all(b, samples);
    std::vector<std::string> ids;
    std::vector<int> la, lb, truth;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ids.push_back(samples[i].id());
        la.push_back(pa[i].label);
        lb.push_back(pb[i].label);
        truth.push_back(samples[i].observation.label());
    }
    std::string name_a(variant_name(a.config.variant));
    std::string name_b(variant_name(b.config.variant));
    if (name_a == name_b) {
        name_a += " (a)";
        name_b += " (b)";
    }
    json report = to_json(agreement(ids, la, lb, truth), name_a, name_b);
    report["split"] = o.agree_split;
    report["samples"] = samples.size();
    if (o.out.empty()) {
        out << report.dump(2) << "\n";
    } else {
        write_json(o.out, report);
    }
    err << "agreement over " << samples.size() << " samples\n";
    return 0;
}

}  // namespace

TrainConfig RunConfig::train_config(Variant variant) const {
    TrainConfig c = TrainConfig::defaults_for(variant);
    assign(c.learning_rate, learning_rate);
    assign(c.batch_size, batch_size);
    assign(c.epochs, epochs);
    assign(c.seed, train_seed);
    c.validate();
    return c;
}

ModelConfig RunConfig::model_config(Variant variant) const {
    ModelConfig c = model;
    c.variant = variant;
    c.validate();
    return c;
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, "", {"data", "model", "train", "eval"});
    RunConfig rc;
    if (j.contains("data")) parse_data(j.at("data"), rc);
    if (j.contains("model")) parse_model(j.at("model"), rc);
    if (j.contains("train")) parse_train(j.at("train"), rc);
    if (j.contains("eval")) parse_eval(j.at("eval"), rc);
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Buffelgrass green-up prediction toolkit", "greenup"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
    synth->add_option("--config", o.config, "Run configuration JSON");
    synth->add_option("--out", o.out, "Output dataset directory")->required();
    synth->add_option("--n", o.n, "Number of samples");
    synth->add_option("--noise", o.noise, "Label flip probability");
    synth->add_option("--seed", o.seed, "Generator seed");

    auto* train = app.add_subcommand("train", "Train a model on the training split");
    train->add_option("--model", o.model_name, "ap | lstm-single | lstm-multi | vit | fusion")->required();
    train->add_option("--data", o.data, "Dataset directory")->required();
    train->add_option("--config", o.config, "Run configuration JSON");
    train->add_option("--out", o.out, "Checkpoint path")->required();
    train->add_option("--epochs", o.epochs);
    train->add_option("--lr", o.lr);
    train->add_option("--batch-size", o.batch_size);
    train->add_option("--seed", o.seed, "Training seed");
    train->add_option("--hidden", o.hidden, "LSTM hidden size");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (holdout) or its training recipe (cv)");
    eval->add_option("--model-file", o.model_file)->required();
    eval->add_option("--data", o.data)->required();
    eval->add_option("--mode", o.mode, "cv | holdout")->required();
    eval->add_option("--config", o.config, "Run configuration JSON (eval section)");
    eval->add_option("--out", o.out, "Report JSON; a metrics CSV is written beside it");
    eval->add_option("--folds", o.folds);
    eval->add_option("--seed", o.seed, "Fold assignment seed");
    eval->add_flag("--serial", o.serial, "Run folds one after another");

    auto* predict = app.add_subcommand("predict", "Score every sample in a dataset");
    predict->add_option("--model-file", o.model_file)->required();
    predict->add_option("--data", o.data)->required();
    predict->add_option("--out", o.out, "predictions.csv (default: standard output)");

    auto* sens = app.add_subcommand("sensitivity", "Mean-perturbation feature sensitivity");
    sens->add_option("--model-file", o.model_file)->required();
    sens->add_option("--data", o.data)->required();
    sens->add_option("--out-dir", o.out)->required();
    sens->add_option("--mode", o.mode, "per-timestep | pooled")->default_val("per-timestep");
    sens->add_option("--split", o.sens_split, "train | test | all")->default_val("train");

    auto* agree = app.add_subcommand("agreement", "Confusion-class agreement between two models");
    agree->add_option("--model-a", o.model_a)->required();
    agree->add_option("--model-b", o.model_b)->required();
    agree->add_option("--data", o.data)->required();
    agree->add_option("--out", o.out, "venn.json (default: standard output)");
    agree->add_option("--split", o.agree_split, "train | test | all")->default_val("test");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (synth->parsed()) return run_synth(o, err);
        if (train->parsed()) return run_train(o, err);
        if (eval->parsed()) return run_eval(o, out, err);
        if (predict->parsed()) return run_predict(o, out);
        if (sens->parsed()) return run_sensitivity(o, err);
        if (agree->parsed()) return run_agreement(o, out, err);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 1;
}

}  // namespace greenup
