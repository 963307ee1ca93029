#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "greenup/data.hpp"
#include "greenup/eval.hpp"
#include "greenup/models.hpp"

namespace greenup {

// per-timestep: column k takes the training mean of each day.
// pooled: every day of column k takes the single per-feature mean.
enum class PerturbationMode { PerTimestep, Pooled };

std::string_view perturbation_mode_name(PerturbationMode mode);
PerturbationMode parse_perturbation_mode(std::string_view name);

// Copy of `sample` with climate column `feature` replaced by training means.
Sample perturb(const Sample& sample, std::size_t feature, const Standardizer& means, PerturbationMode mode);

struct SensitivityRecord {
    std::string sample_id;
    std::size_t feature = 0;
    double base_score = 0.0;
    double perturbed_score = 0.0;
    // |base_score - perturbed_score|
    double sensitivity = 0.0;
    ConfusionClass confusion_class = ConfusionClass::TN;
};

// Scores a batch of samples; lets tests substitute simple scoring functions.
using ScoreFunction = std::function<std::vector<Prediction>(std::span<const Sample>)>;

// One record per (sample, feature), sample-major. The confusion class comes
// from the base prediction against the sample's label.
std::vector<SensitivityRecord> sensitivity_scan(const ScoreFunction& score, std::span<const Sample> samples,
                                                const Standardizer& means, PerturbationMode mode);
std::vector<SensitivityRecord> sensitivity_scan(const TrainedModel& model, std::span<const Sample> samples,
                                                PerturbationMode mode);

struct SensitivityAggregate {
    // Absent rows are classes with no records.
    std::array<std::optional<std::array<double, kFeatureCount>>, 4> raw;
    std::array<std::optional<std::array<double, kFeatureCount>>, 4> z;

    const std::optional<std::array<double, kFeatureCount>>& raw_row(ConfusionClass c) const {
        return raw[static_cast<std::size_t>(c)];
    }
    const std::optional<std::array<double, kFeatureCount>>& z_row(ConfusionClass c) const {
        return z[static_cast<std::size_t>(c)];
    }
};

// raw(c, k) = mean sensitivity; z(c, .) is the z-score of raw(c, .) across the
// 16 features with population std, all zero when that std < 1e-12.
SensitivityAggregate aggregate_z(std::span<const SensitivityRecord> records);

// Plot-ready CSV bodies.
std::string sensitivity_csv(std::span<const SensitivityRecord> records);
std::string sensitivity_aggregate_csv(const SensitivityAggregate& aggregate);

}  // namespace greenup
