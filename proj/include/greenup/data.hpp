#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "greenup/rng.hpp"

namespace greenup {

// Climate window length in days; the last row is the observation date.
inline constexpr std::size_t kWindowDays = 24;
inline constexpr std::size_t kFeatureCount = 16;

struct FeatureDescriptor {
    std::string_view name;
    std::string_view abbreviation;
    std::string_view unit;
};

// Fixed column order used by every file, checkpoint and report.
const std::array<FeatureDescriptor, kFeatureCount>& feature_schema();

namespace feature {
inline constexpr std::size_t kPrecipitation = 0;  // TP_Sum
inline constexpr std::size_t kTemp2m = 1;
inline constexpr std::size_t kTemp2mMin = 2;
inline constexpr std::size_t kTemp2mMax = 3;
inline constexpr std::size_t kSoilTemp = 4;
inline constexpr std::size_t kSoilTempMin = 5;
inline constexpr std::size_t kSoilTempMax = 6;
inline constexpr std::size_t kSoilWater = 7;
inline constexpr std::size_t kSoilWaterMin = 8;
inline constexpr std::size_t kSoilWaterMax = 9;
inline constexpr std::size_t kSolarSum = 10;
inline constexpr std::size_t kSolarMin = 11;
inline constexpr std::size_t kSolarMax = 12;
inline constexpr std::size_t kPressure = 13;
inline constexpr std::size_t kPressureMin = 14;
inline constexpr std::size_t kPressureMax = 15;
}  // namespace feature

// Throws ValidationError for unknown abbreviations.
std::size_t feature_index(std::string_view abbreviation);

// FNV-1a over the ordered abbreviations, as 16 lowercase hex digits.
std::string feature_schema_hash();

// 1 iff percent > 50. Throws ValidationError outside [0, 100].
int binarize_greenness(double percent);

struct ObservationRecord {
    std::string id;
    std::chrono::year_month_day date{};
    double latitude = 0.0;
    double longitude = 0.0;
    double elevation_m = 0.0;
    std::optional<double> greenness_percent;

    bool has_label() const { return greenness_percent.has_value(); }
    // Throws ValidationError when greenness is absent.
    int label() const;

    bool operator==(const ObservationRecord&) const = default;
};

// 24 x 16 matrix, row 0 oldest, row 23 the observation date.
class ClimateSequence {
public:
    static constexpr std::size_t kRows = kWindowDays;
    static constexpr std::size_t kCols = kFeatureCount;

    double at(std::size_t day, std::size_t feature) const { return values_[day * kCols + feature]; }
    double& at(std::size_t day, std::size_t feature) { return values_[day * kCols + feature]; }
    std::span<const double> values() const { return values_; }

    // Throws ValidationError describing the first violated invariant.
    void validate() const;

    bool operator==(const ClimateSequence&) const = default;

private:
    std::array<double, kRows * kCols> values_{};
};

// Total precipitation over the window in meters, summed oldest to newest.
double precipitation_sum(const ClimateSequence& climate);

struct ImagePatch {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    // Row-major, channel-last, values in [0, 1].
    std::vector<float> pixels;

    float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
    void validate() const;

    bool operator==(const ImagePatch&) const = default;
};

struct Sample {
    ObservationRecord observation;
    ClimateSequence climate;
    std::optional<ImagePatch> image;

    const std::string& id() const { return observation.id; }
    bool operator==(const Sample&) const = default;
};

// Dataset directory layout: observations.csv, climate.csv, patches/<id>.pgp.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, std::span<const Sample> samples);

// Binary patch format "PHPX": u32 height, u32 width, u32 channels, then
// little-endian f32 pixels.
ImagePatch read_patch(const std::filesystem::path& path);
void write_patch(const std::filesystem::path& path, const ImagePatch& patch);

struct TrainTestSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Shuffles with `rng`, then takes ceil(test_fraction * n) samples (clamped to
// [1, n-1]) as the test set.
TrainTestSplit train_test_split(std::span<const Sample> samples, double test_fraction, Rng& rng);
std::size_t test_count_for(std::size_t n, double test_fraction);

struct FoldPlan {
    std::size_t k = 0;
    std::map<std::string, std::size_t> assignment;

    std::size_t fold_of(const std::string& id) const;
    std::size_t fold_size(std::size_t fold) const;
};

// Shuffled round-robin assignment; fold sizes differ by at most one.
FoldPlan make_folds(std::span<const Sample> samples, std::size_t k, Rng& rng);

struct SyntheticConfig {
    std::size_t n = 1000;
    double noise_rate = 0.1;
    // Rule: label = 1 iff window precipitation > precip_threshold_m
    //   + temp_coupling_m_per_k * (mean Temp2m - reference_temp_k).
    double precip_threshold_m = 0.10;
    double temp_coupling_m_per_k = 0.0035;
    double reference_temp_k = 295.0;
    double image_fraction = 1.0;
    std::size_t image_size = 32;

    void validate() const;
};

// Noise-free label rule used by the generator.
int synthetic_label_rule(const ClimateSequence& climate, const SyntheticConfig& config);

std::vector<Sample> generate_synthetic(const SyntheticConfig& config, Rng& rng);

// ISO-8601 helpers shared by the CSV readers and writers.
std::optional<std::chrono::year_month_day> parse_iso_date(std::string_view text);
std::string format_iso_date(std::chrono::year_month_day date);

// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

}  // namespace greenup
