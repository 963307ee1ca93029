#include "greenup/eval.hpp"

#include <cmath>
#include <future>
#include <sstream>

#include "greenup/errors.hpp"

namespace greenup {

using nlohmann::json;

std::string_view confusion_name(ConfusionClass c) {
    switch (c) {
        case ConfusionClass::TP: return "TP";
        case ConfusionClass::FP: return "FP";
        case ConfusionClass::TN: return "TN";
        case ConfusionClass::FN: return "FN";
    }
    return "?";
}

ConfusionClass classify(int prediction, int truth) {
    if (prediction == 1) return truth == 1 ? ConfusionClass::TP : ConfusionClass::FP;
    return truth == 1 ? ConfusionClass::FN : ConfusionClass::TN;
}

ConfusionResult confusion(std::span<const int> predictions, std::span<const int> truths) {
    if (predictions.size() != truths.size()) {
        throw ValidationError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                              std::to_string(truths.size()) + " labels");
    }
    if (predictions.empty()) throw ValidationError("confusion: no samples");
    ConfusionResult r;
    r.classes.reserve(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto c = classify(predictions[i], truths[i]);
        r.classes.push_back(c);
        switch (c) {
            case ConfusionClass::TP: ++r.counts.tp; break;
            case ConfusionClass::FP: ++r.counts.fp; break;
            case ConfusionClass::TN: ++r.counts.tn; break;
            case ConfusionClass::FN: ++r.counts.fn; break;
        }
    }
    return r;
}

MetricsReport metrics(const ConfusionCounts& c) {
    const std::size_t n = c.total();
    if (n == 0) throw ValidationError("metrics: no samples");
    const double total = static_cast<double>(n);
    MetricsReport m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / total;
    m.fp_rate = static_cast<double>(c.fp) / total;
    m.fn_rate = static_cast<double>(c.fn) / total;
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    m.f1 = denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
    return m;
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return s;
}

CvReport summarize_folds(std::vector<MetricsReport> folds) {
    CvReport r;
    r.folds = std::move(folds);
    auto column = [&r](double MetricsReport::*field) {
        std::vector<double> v;
        for (const auto& f : r.folds) v.push_back(f.*field);
        return summarize(v);
    };
    r.accuracy = column(&MetricsReport::accuracy);
    r.f1 = column(&MetricsReport::f1);
    r.fp_rate = column(&MetricsReport::fp_rate);
    r.fn_rate = column(&MetricsReport::fn_rate);
    return r;
}

std::pair<ConfusionCounts, MetricsReport> evaluate(const TrainedModel& model, std::span<const Sample> samples) {
    const auto preds = predict_all(model, samples);
    std::vector<int> labels;
    std::vector<int> truths;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        labels.push_back(preds[i].label);
        truths.push_back(samples[i].observation.label());
    }
    const auto counts = confusion(labels, truths).counts;
    return {counts, metrics(counts)};
}

namespace {

struct FoldOutcome {
    ConfusionCounts counts;
    MetricsReport metrics;
    std::string fingerprint;
};

FoldOutcome run_fold(Variant variant, std::span<const Sample> samples, const FoldPlan& plan, std::size_t fold,
                     const ModelConfig& model_config, TrainConfig train_config) {
    std::vector<Sample> train;
    std::vector<Sample> held_out;
    for (const auto& s : samples) (plan.fold_of(s.id()) == fold ? held_out : train).push_back(s);
    if (train.empty() || held_out.empty()) {
        throw ValidationError("fold " + std::to_string(fold) + " leaves an empty train or validation set");
    }
    train_config.seed += fold;
    const auto trained = train_model(variant, train, model_config, train_config);
    const auto [counts, m] = evaluate(trained.model, held_out);
    return {counts, m, trained.model.standardizer.fingerprint()};
}

}  // namespace

CvReport cross_validate(Variant variant, std::span<const Sample> train_samples, const FoldPlan& plan,
                        const ModelConfig& model_config, const TrainConfig& train_config, bool parallel) {
    if (plan.k < 2) throw ValidationError("cross_validate: fold plan needs k >= 2");
    if (plan.assignment.size() != train_samples.size()) {
        throw ValidationError("cross_validate: fold plan covers " + std::to_string(plan.assignment.size()) +
                              " samples, got " + std::to_string(train_samples.size()));
    }
    std::vector<FoldOutcome> outcomes(plan.k);
    if (parallel) {
        std::vector<std::future<FoldOutcome>> jobs;
        for (std::size_t i = 0; i < plan.k; ++i) {
            jobs.push_back(std::async(std::launch::async, run_fold, variant, train_samples, std::cref(plan), i,
                                      std::cref(model_config), train_config));
        }
        for (std::size_t i = 0; i < plan.k; ++i) outcomes[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < plan.k; ++i) {
            outcomes[i] = run_fold(variant, train_samples, plan, i, model_config, train_config);
        }
    }
    std::vector<MetricsReport> folds;
    for (const auto& o : outcomes) folds.push_back(o.metrics);
    CvReport report = summarize_folds(std::move(folds));
    for (const auto& o : outcomes) {
        report.fold_counts.push_back(o.counts);
        report.standardizer_fingerprints.push_back(o.fingerprint);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Agreement

const AgreementCell& AgreementReport::cell(ConfusionClass c) const {
    return cells[static_cast<std::size_t>(c)];
}

AgreementReport agreement(std::span<const std::string> ids, std::span<const int> preds_a,
                          std::span<const int> preds_b, std::span<const int> truths) {
    if (ids.size() != truths.size() || preds_a.size() != truths.size() || preds_b.size() != truths.size()) {
        throw ValidationError("agreement: ids, predictions and labels must have equal lengths");
    }
    AgreementReport report;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto ca = classify(preds_a[i], truths[i]);
        const auto cb = classify(preds_b[i], truths[i]);
        if (ca == cb) {
            report.cells[static_cast<std::size_t>(ca)].both.push_back(ids[i]);
        } else {
            report.cells[static_cast<std::size_t>(ca)].only_a.push_back(ids[i]);
            report.cells[static_cast<std::size_t>(cb)].only_b.push_back(ids[i]);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const MetricsReport& m) {
    return json{{"accuracy", m.accuracy}, {"f1", m.f1}, {"fp_rate", m.fp_rate}, {"fn_rate", m.fn_rate}};
}

json to_json(const ConfusionCounts& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

json to_json(const CvReport& r) {
    json folds = json::array();
    for (std::size_t i = 0; i < r.folds.size(); ++i) {
        json f = to_json(r.folds[i]);
        f["fold"] = i;
        if (i < r.fold_counts.size()) f["confusion"] = to_json(r.fold_counts[i]);
        folds.push_back(std::move(f));
    }
    auto summary = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
    return json{{"folds", std::move(folds)},
                {"metrics",
                 {{"accuracy", summary(r.accuracy)},
                  {"f1", summary(r.f1)},
                  {"fp_rate", summary(r.fp_rate)},
                  {"fn_rate", summary(r.fn_rate)}}}};
}

json to_json(const AgreementReport& r, std::string_view name_a, std::string_view name_b) {
    json classes = json::object();
    for (auto c : kConfusionClasses) {
        const auto& cell = r.cell(c);
        classes[std::string(confusion_name(c))] = json{
            {"both", {{"count", cell.both.size()}, {"ids", cell.both}}},
            {"only_a", {{"count", cell.only_a.size()}, {"ids", cell.only_a}}},
            {"only_b", {{"count", cell.only_b.size()}, {"ids", cell.only_b}}},
        };
    }
    const std::string a(name_a);
    const std::string b(name_b);
    auto panel = [](const std::string& title, const std::vector<std::string>& ids) {
        return json{{"title", title}, {"count", ids.size()}, {"ids", ids}};
    };
    json panels = json::array({
        panel(a + " unique true positives (" + b + " false negatives)", r.unique_tp_a()),
        panel(b + " unique true positives (" + a + " false negatives)", r.unique_tp_b()),
        panel(a + " unique true negatives (" + b + " false positives)", r.unique_tn_a()),
        panel(b + " unique true negatives (" + a + " false positives)", r.unique_tn_b()),
    });
    return json{{"model_a", a}, {"model_b", b}, {"classes", std::move(classes)}, {"panels", std::move(panels)}};
}

std::string metrics_csv(const CvReport& r) {
    std::ostringstream out;
    out << "metric,fold,value\n";
    const std::pair<const char*, double MetricsReport::*> fields[] = {{"accuracy", &MetricsReport::accuracy},
                                                                      {"f1", &MetricsReport::f1},
                                                                      {"fp_rate", &MetricsReport::fp_rate},
                                                                      {"fn_rate", &MetricsReport::fn_rate}};
    const MetricSummary* summaries[] = {&r.accuracy, &r.f1, &r.fp_rate, &r.fn_rate};
    for (std::size_t m = 0; m < 4; ++m) {
        for (std::size_t i = 0; i < r.folds.size(); ++i) {
            out << fields[m].first << ',' << i << ',' << format_real(r.folds[i].*fields[m].second) << '\n';
        }
        out << fields[m].first << ",mean," << format_real(summaries[m]->mean) << '\n';
        out << fields[m].first << ",std," << format_real(summaries[m]->std) << '\n';
    }
    return out.str();
}

}  // namespace greenup
