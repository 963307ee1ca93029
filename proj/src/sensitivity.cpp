#include "greenup/sensitivity.hpp"

#include <cmath>
#include <sstream>

#include "greenup/errors.hpp"

namespace greenup {

std::string_view perturbation_mode_name(PerturbationMode mode) {
    return mode == PerturbationMode::PerTimestep ? "per-timestep" : "pooled";
}

PerturbationMode parse_perturbation_mode(std::string_view name) {
    if (name == "per-timestep") return PerturbationMode::PerTimestep;
    if (name == "pooled") return PerturbationMode::Pooled;
    throw ValidationError("unknown perturbation mode '" + std::string(name) + "' (expected per-timestep or pooled)");
}

Sample perturb(const Sample& sample, std::size_t feature, const Standardizer& means, PerturbationMode mode) {
    if (feature >= kFeatureCount) {
        throw ValidationError("perturb: feature index " + std::to_string(feature) + " out of range");
    }
    Sample out = sample;
    for (std::size_t t = 0; t < kWindowDays; ++t) {
        out.climate.at(t, feature) =
            mode == PerturbationMode::PerTimestep ? means.mean_at(t, feature) : means.pooled_mean[feature];
    }
    return out;
}

std::vector<SensitivityRecord> sensitivity_scan(const ScoreFunction& score, std::span<const Sample> samples,
                                                const Standardizer& means, PerturbationMode mode) {
    const auto base = score(samples);
    if (base.size() != samples.size()) throw ContractError("sensitivity_scan: score returned wrong count");
    std::vector<SensitivityRecord> records(samples.size() * kFeatureCount);
    std::vector<Sample> perturbed;
    perturbed.reserve(samples.size());
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        perturbed.clear();
        for (const auto& s : samples) perturbed.push_back(perturb(s, k, means, mode));
        const auto moved = score(perturbed);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto& r = records[i * kFeatureCount + k];
            r.sample_id = samples[i].id();
            r.feature = k;
            r.base_score = base[i].score;
            r.perturbed_score = moved[i].score;
            r.sensitivity = std::abs(r.base_score - r.perturbed_score);
            r.confusion_class = classify(base[i].label, samples[i].observation.label());
        }
    }
    return records;
}

std::vector<SensitivityRecord> sensitivity_scan(const TrainedModel& model, std::span<const Sample> samples,
                                                PerturbationMode mode) {
    return sensitivity_scan([&model](std::span<const Sample> batch) { return predict_all(model, batch); }, samples,
                            model.standardizer, mode);
}

SensitivityAggregate aggregate_z(std::span<const SensitivityRecord> records) {
    if (records.empty()) throw ValidationError("aggregate_z: no sensitivity records");
    std::array<std::array<double, kFeatureCount>, 4> sums{};
    std::array<std::array<std::size_t, kFeatureCount>, 4> counts{};
    for (const auto& r : records) {
        const auto c = static_cast<std::size_t>(r.confusion_class);
        sums[c][r.feature] += r.sensitivity;
        ++counts[c][r.feature];
    }
    SensitivityAggregate agg;
    for (std::size_t c = 0; c < 4; ++c) {
        std::size_t present = 0;
        for (auto n : counts[c]) present += n > 0;
        if (present == 0) continue;
        if (present != kFeatureCount) {
            throw ValidationError("aggregate_z: class " + std::string(confusion_name(kConfusionClasses[c])) +
                                  " lacks records for some features");
        }
        std::array<double, kFeatureCount> raw{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) raw[k] = sums[c][k] / static_cast<double>(counts[c][k]);
        double mean = 0.0;
        for (double v : raw) mean += v;
        mean /= static_cast<double>(kFeatureCount);
        double var = 0.0;
        for (double v : raw) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(kFeatureCount));
        std::array<double, kFeatureCount> z{};
        if (sd >= 1e-12) {
            for (std::size_t k = 0; k < kFeatureCount; ++k) z[k] = (raw[k] - mean) / sd;
        }
        agg.raw[c] = raw;
        agg.z[c] = z;
    }
    return agg;
}

std::string sensitivity_csv(std::span<const SensitivityRecord> records) {
    std::ostringstream out;
    out << "sample_id,feature_abbrev,base_score,perturbed_score,sensitivity,confusion_class\n";
    for (const auto& r : records) {
        out << r.sample_id << ',' << feature_schema()[r.feature].abbreviation << ',' << format_real(r.base_score)
            << ',' << format_real(r.perturbed_score) << ',' << format_real(r.sensitivity) << ','
            << confusion_name(r.confusion_class) << '\n';
    }
    return out.str();
}

std::string sensitivity_aggregate_csv(const SensitivityAggregate& agg) {
    std::ostringstream out;
    out << "class,feature_abbrev,raw_mean,z_value\n";
    for (auto c : kConfusionClasses) {
        const auto& raw = agg.raw_row(c);
        if (!raw) continue;
        const auto& z = *agg.z_row(c);
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            out << confusion_name(c) << ',' << feature_schema()[k].abbreviation << ',' << format_real((*raw)[k])
                << ',' << format_real(z[k]) << '\n';
        }
    }
    return out.str();
}

}  // namespace greenup
