#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "greenup/data.hpp"
#include "greenup/models.hpp"
#include "greenup/train.hpp"

#include <json.hpp>

namespace greenup {

enum class ConfusionClass { TP, FP, TN, FN };

inline constexpr std::array<ConfusionClass, 4> kConfusionClasses{ConfusionClass::TP, ConfusionClass::FP,
                                                                 ConfusionClass::TN, ConfusionClass::FN};

std::string_view confusion_name(ConfusionClass c);
// Positive class is green (label 1).
ConfusionClass classify(int prediction, int truth);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct ConfusionResult {
    ConfusionCounts counts;
    std::vector<ConfusionClass> classes;
};

ConfusionResult confusion(std::span<const int> predictions, std::span<const int> truths);

// FP and FN rates are fractions of all evaluated samples, so
// accuracy + fp_rate + fn_rate == 1.
struct MetricsReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    double fp_rate = 0.0;
    double fn_rate = 0.0;
};

// f1 = 2tp / (2tp + fp + fn), 0 when the denominator is 0.
MetricsReport metrics(const ConfusionCounts& counts);

struct MetricSummary {
    double mean = 0.0;
    // Sample standard deviation (divisor k - 1); 0 for a single fold.
    double std = 0.0;
};

struct CvReport {
    std::vector<MetricsReport> folds;
    std::vector<ConfusionCounts> fold_counts;
    MetricSummary accuracy;
    MetricSummary f1;
    MetricSummary fp_rate;
    MetricSummary fn_rate;
    // Fingerprint of each fold's standardizer, as used for its evaluation.
    std::vector<std::string> standardizer_fingerprints;
};

MetricSummary summarize(std::span<const double> values);
CvReport summarize_folds(std::vector<MetricsReport> folds);

// Trains on folds != i and evaluates on fold i for every i. Fold i uses seed
// train_config.seed + i. Folds run concurrently when `parallel` is set.
CvReport cross_validate(Variant variant, std::span<const Sample> train_samples, const FoldPlan& plan,
                        const ModelConfig& model_config, const TrainConfig& train_config, bool parallel = true);

// Metrics of `model` on labeled samples.
std::pair<ConfusionCounts, MetricsReport> evaluate(const TrainedModel& model, std::span<const Sample> samples);

// For one confusion class c: samples A assigned to c and B assigned to c.
struct AgreementCell {
    std::vector<std::string> both;
    std::vector<std::string> only_a;
    std::vector<std::string> only_b;
};

struct AgreementReport {
    // Indexed like kConfusionClasses.
    std::array<AgreementCell, 4> cells;

    const AgreementCell& cell(ConfusionClass c) const;
    // "A unique true positives (B false negatives)" and the like.
    const std::vector<std::string>& unique_tp_a() const { return cell(ConfusionClass::TP).only_a; }
    const std::vector<std::string>& unique_tp_b() const { return cell(ConfusionClass::TP).only_b; }
    const std::vector<std::string>& unique_tn_a() const { return cell(ConfusionClass::TN).only_a; }
    const std::vector<std::string>& unique_tn_b() const { return cell(ConfusionClass::TN).only_b; }
};

AgreementReport agreement(std::span<const std::string> ids, std::span<const int> preds_a,
                          std::span<const int> preds_b, std::span<const int> truths);

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const ConfusionCounts& c);
nlohmann::json to_json(const CvReport& report);
nlohmann::json to_json(const AgreementReport& report, std::string_view name_a, std::string_view name_b);
// Rows "metric,fold,value"; fold is the index, "mean" or "std".
std::string metrics_csv(const CvReport& report);

}  // namespace greenup
