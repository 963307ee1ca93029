#include "greenup/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "greenup/errors.hpp"

namespace greenup {

namespace fs = std::filesystem;

const std::array<FeatureDescriptor, kFeatureCount>& feature_schema() {
    static const std::array<FeatureDescriptor, kFeatureCount> schema{{
        {"total_precipitation_sum", "TP_Sum", "m"},
        {"temperature_2m", "Temp2m", "K"},
        {"temperature_2m_min", "Temp2m_Min", "K"},
        {"temperature_2m_max", "Temp2m_Max", "K"},
        {"soil_temperature_level_1", "SoilTemp_L1", "K"},
        {"soil_temperature_level_1_min", "SoilTemp_L1_Min", "K"},
        {"soil_temperature_level_1_max", "SoilTemp_L1_Max", "K"},
        {"volumetric_soil_water_layer_1", "VolSoilWater_L1", "m3 m-3"},
        {"volumetric_soil_water_layer_1_min", "VolSoilWater_L1_Min", "m3 m-3"},
        {"volumetric_soil_water_layer_1_max", "VolSoilWater_L1_Max", "m3 m-3"},
        {"surface_solar_radiation_downwards_sum", "SSR_Down_Sum", "J m-2"},
        {"surface_solar_radiation_downwards_min", "SSR_Down_Min", "J m-2"},
        {"surface_solar_radiation_downwards_max", "SSR_Down_Max", "J m-2"},
        {"surface_pressure", "Surf_Press", "Pa"},
        {"surface_pressure_min", "Surf_Press_Min", "Pa"},
        {"surface_pressure_max", "Surf_Press_Max", "Pa"},
    }};
    return schema;
}

std::size_t feature_index(std::string_view abbreviation) {
    const auto& schema = feature_schema();
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].abbreviation == abbreviation) return i;
    }
    throw ValidationError("unknown feature '" + std::string(abbreviation) + "'");
}

std::string feature_schema_hash() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (const auto& f : feature_schema()) {
        for (char c : f.abbreviation) feed(static_cast<unsigned char>(c));
        feed(',');
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int binarize_greenness(double percent) {
    if (!(percent >= 0.0 && percent <= 100.0)) {
        throw ValidationError("greenness percent " + format_real(percent) + " outside [0, 100]");
    }
    return percent > 50.0 ? 1 : 0;
}

int ObservationRecord::label() const {
    if (!greenness_percent) throw ValidationError("observation '" + id + "' has no greenness value (unlabeled)");
    return binarize_greenness(*greenness_percent);
}

// ---------------------------------------------------------------------------
// Validation

void ClimateSequence::validate() const {
    const auto& schema = feature_schema();
    for (std::size_t t = 0; t < kRows; ++t) {
        for (std::size_t k = 0; k < kCols; ++k) {
            if (!std::isfinite(at(t, k))) {
                throw ValidationError("non-finite value for " + std::string(schema[k].abbreviation) + " on day " +
                                      std::to_string(t));
            }
        }
        for (std::size_t k : {feature::kSoilWater, feature::kSoilWaterMin, feature::kSoilWaterMax}) {
            if (at(t, k) < 0.0 || at(t, k) > 1.0) {
                throw ValidationError(std::string(schema[k].abbreviation) + " outside [0, 1] on day " +
                                      std::to_string(t));
            }
        }
        // Solar radiation is excluded: its "sum" is a daily accumulation, not a mean.
        constexpr std::array<std::array<std::size_t, 3>, 4> triples{{
            {feature::kTemp2mMin, feature::kTemp2m, feature::kTemp2mMax},
            {feature::kSoilTempMin, feature::kSoilTemp, feature::kSoilTempMax},
            {feature::kSoilWaterMin, feature::kSoilWater, feature::kSoilWaterMax},
            {feature::kPressureMin, feature::kPressure, feature::kPressureMax},
        }};
        for (const auto& [lo, mid, hi] : triples) {
            if (!(at(t, lo) <= at(t, mid) && at(t, mid) <= at(t, hi))) {
                throw ValidationError("min <= mean <= max violated for " + std::string(schema[mid].abbreviation) +
                                      " on day " + std::to_string(t));
            }
        }
    }
}

double precipitation_sum(const ClimateSequence& climate) {
    double sum = 0.0;
    for (std::size_t t = 0; t < kWindowDays; ++t) sum += climate.at(t, feature::kPrecipitation);
    return sum;
}

void ImagePatch::validate() const {
    if (height == 0 || width == 0) throw ValidationError("image patch has zero size");
    if (height != width) {
        throw ValidationError("image patch must be square, got " + std::to_string(height) + "x" +
                              std::to_string(width));
    }
    if (channels != 3) throw ValidationError("image patch must have 3 channels, got " + std::to_string(channels));
    if (pixels.size() != height * width * channels) throw ValidationError("image patch pixel count mismatch");
    for (float p : pixels) {
        if (!(p >= 0.0f && p <= 1.0f)) throw ValidationError("image pixel outside [0, 1]");
    }
}

// ---------------------------------------------------------------------------
// Text helpers

std::optional<std::chrono::year_month_day> parse_iso_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto num = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc() && p == text.data() + pos + len;
    };
    if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

std::string format_iso_date(std::chrono::year_month_day date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::string format_real(double value) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, p);
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

class CsvReader {
public:
    explicit CsvReader(const fs::path& path) : name_(path.filename().string()), in_(path) {
        if (!in_) throw IoError("cannot open " + path.string());
    }

    // Returns false at end of file; skips blank lines.
    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (!line_.empty() && line_.back() == '\r') line_.pop_back();
            if (line_.empty()) continue;
            fields = split_csv(line_);
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw LoadError(name_, line_no_, what); }

    double real(std::string_view field, const char* what) const {
        double v = 0.0;
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || p != field.data() + field.size()) {
            fail(std::string("malformed ") + what + " '" + std::string(field) + "'");
        }
        if (!std::isfinite(v)) fail(std::string("non-finite ") + what + " '" + std::string(field) + "'");
        return v;
    }

    std::size_t line() const { return line_no_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::ifstream in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

constexpr std::string_view kObservationHeader = "id,date,lat,lon,elevation_m,greenness_percent";

std::string climate_header() {
    std::string h = "observation_id,day_offset";
    for (const auto& f : feature_schema()) {
        h += ',';
        h += f.abbreviation;
    }
    return h;
}

std::string join(const std::vector<std::string_view>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    return out;
}

void check_id(const CsvReader& reader, std::string_view id) {
    if (id.empty()) reader.fail("empty observation id");
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Patches

ImagePatch read_patch(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string name = path.filename().string();
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PHPX", 4) != 0) {
        throw ValidationError(name + ": bad magic (expected PHPX patch)");
    }
    std::uint32_t h = 0, w = 0, c = 0;
    if (!read_u32(in, h) || !read_u32(in, w) || !read_u32(in, c)) throw ValidationError(name + ": truncated header");
    ImagePatch patch;
    patch.height = h;
    patch.width = w;
    patch.channels = c;
    const std::size_t count = static_cast<std::size_t>(h) * w * c;
    if (count == 0 || count > (std::size_t{1} << 28)) throw ValidationError(name + ": implausible patch dimensions");
    patch.pixels.resize(count);
    for (auto& p : patch.pixels) {
        std::uint32_t bits = 0;
        if (!read_u32(in, bits)) throw ValidationError(name + ": truncated pixel data");
        p = std::bit_cast<float>(bits);
    }
    try {
        patch.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(name + ": " + e.what());
    }
    return patch;
}

void write_patch(const fs::path& path, const ImagePatch& patch) {
    patch.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("PHPX", 4);
    write_u32(out, static_cast<std::uint32_t>(patch.height));
    write_u32(out, static_cast<std::uint32_t>(patch.width));
    write_u32(out, static_cast<std::uint32_t>(patch.channels));
    for (float p : patch.pixels) write_u32(out, std::bit_cast<std::uint32_t>(p));
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset files

std::vector<Sample> load_dataset(const fs::path& dir) {
    const fs::path obs_path = dir / "observations.csv";
    const fs::path climate_path = dir / "climate.csv";
    if (!fs::exists(obs_path)) throw IoError("missing file " + obs_path.string());
    if (!fs::exists(climate_path)) throw IoError("missing file " + climate_path.string());

    std::vector<Sample> samples;
    std::vector<std::size_t> obs_lines;
    std::unordered_map<std::string, std::size_t> index_of;
    {
        CsvReader reader(obs_path);
        std::vector<std::string_view> f;
        if (!reader.next(f) || join(f) != kObservationHeader) {
            reader.fail("expected header '" + std::string(kObservationHeader) + "'");
        }
        while (reader.next(f)) {
            if (f.size() != 6) reader.fail("expected 6 fields, got " + std::to_string(f.size()));
            Sample s;
            auto& o = s.observation;
            check_id(reader, f[0]);
            o.id = std::string(f[0]);
            auto date = parse_iso_date(f[1]);
            if (!date) reader.fail("malformed date '" + std::string(f[1]) + "'");
            o.date = *date;
            o.latitude = reader.real(f[2], "latitude");
            o.longitude = reader.real(f[3], "longitude");
            o.elevation_m = reader.real(f[4], "elevation");
            if (std::abs(o.latitude) > 90.0) reader.fail("latitude out of range");
            if (std::abs(o.longitude) > 180.0) reader.fail("longitude out of range");
            if (!f[5].empty()) {
                const double g = reader.real(f[5], "greenness_percent");
                if (g < 0.0 || g > 100.0) reader.fail("greenness_percent outside [0, 100]");
                o.greenness_percent = g;
            }
            if (!index_of.emplace(o.id, samples.size()).second) reader.fail("duplicate observation id '" + o.id + "'");
            samples.push_back(std::move(s));
            obs_lines.push_back(reader.line());
        }
    }

    std::vector<std::array<bool, kWindowDays>> seen(samples.size());
    for (auto& row : seen) row.fill(false);
    {
        CsvReader reader(climate_path);
        std::vector<std::string_view> f;
        const std::string header = climate_header();
        if (!reader.next(f) || join(f) != header) reader.fail("expected header '" + header + "'");
        while (reader.next(f)) {
            if (f.size() != 2 + kFeatureCount) {
                reader.fail("expected " + std::to_string(2 + kFeatureCount) + " fields, got " +
                            std::to_string(f.size()));
            }
            auto it = index_of.find(std::string(f[0]));
            if (it == index_of.end()) reader.fail("climate row for unknown observation '" + std::string(f[0]) + "'");
            std::size_t offset = 0;
            auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), offset);
            if (ec != std::errc() || p != f[1].data() + f[1].size() || offset >= kWindowDays) {
                reader.fail("day_offset must be in 0.." + std::to_string(kWindowDays - 1));
            }
            const std::size_t day = kWindowDays - 1 - offset;
            if (seen[it->second][day]) reader.fail("duplicate day_offset for '" + std::string(f[0]) + "'");
            seen[it->second][day] = true;
            for (std::size_t k = 0; k < kFeatureCount; ++k) {
                samples[it->second].climate.at(day, k) =
                    reader.real(f[2 + k], std::string(feature_schema()[k].abbreviation).c_str());
            }
        }
    }

    const fs::path patch_dir = dir / "patches";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto present = std::count(seen[i].begin(), seen[i].end(), true);
        if (present != static_cast<long>(kWindowDays)) {
            throw LoadError("observations.csv", obs_lines[i],
                            "incomplete window for '" + samples[i].id() + "': " + std::to_string(present) + " of " +
                                std::to_string(kWindowDays) + " climate rows");
        }
        try {
            samples[i].climate.validate();
        } catch (const ValidationError& e) {
            throw LoadError("climate.csv", 0, "observation '" + samples[i].id() + "': " + e.what());
        }
        const fs::path patch = patch_dir / (samples[i].id() + ".pgp");
        if (fs::exists(patch)) samples[i].image = read_patch(patch);
    }
    return samples;
}

void save_dataset(const fs::path& dir, std::span<const Sample> samples) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream obs(dir / "observations.csv");
    std::ofstream climate(dir / "climate.csv");
    if (!obs || !climate) throw IoError("cannot write dataset files in " + dir.string());
    obs << kObservationHeader << '\n';
    climate << climate_header() << '\n';
    bool any_image = false;
    for (const auto& s : samples) {
        const auto& o = s.observation;
        obs << o.id << ',' << format_iso_date(o.date) << ',' << format_real(o.latitude) << ','
            << format_real(o.longitude) << ',' << format_real(o.elevation_m) << ','
            << (o.greenness_percent ? format_real(*o.greenness_percent) : "") << '\n';
        for (std::size_t offset = 0; offset < kWindowDays; ++offset) {
            const std::size_t day = kWindowDays - 1 - offset;
            climate << o.id << ',' << offset;
            for (std::size_t k = 0; k < kFeatureCount; ++k) climate << ',' << format_real(s.climate.at(day, k));
            climate << '\n';
        }
        any_image = any_image || s.image.has_value();
    }
    if (!obs || !climate) throw IoError("write failed in " + dir.string());
    if (any_image) {
        fs::create_directories(dir / "patches", ec);
        if (ec) throw IoError("cannot create patches directory: " + ec.message());
        for (const auto& s : samples) {
            if (s.image) write_patch(dir / "patches" / (s.id() + ".pgp"), *s.image);
        }
    }
}

// ---------------------------------------------------------------------------
// Splits and folds

std::size_t test_count_for(std::size_t n, double test_fraction) {
    const auto raw = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(raw, 1, n - 1);
}

TrainTestSplit train_test_split(std::span<const Sample> samples, double test_fraction, Rng& rng) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ValidationError("test_fraction must be in (0, 1), got " + format_real(test_fraction));
    }
    if (samples.size() < 2) throw ValidationError("train_test_split needs at least 2 samples");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t n_test = test_count_for(samples.size(), test_fraction);
    TrainTestSplit split;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_test ? split.test : split.train).push_back(samples[order[i]]);
    }
    return split;
}

std::size_t FoldPlan::fold_of(const std::string& id) const {
    auto it = assignment.find(id);
    if (it == assignment.end()) throw ContractError("sample '" + id + "' is not in the fold plan");
    return it->second;
}

std::size_t FoldPlan::fold_size(std::size_t fold) const {
    return static_cast<std::size_t>(
        std::count_if(assignment.begin(), assignment.end(), [fold](const auto& kv) { return kv.second == fold; }));
}

FoldPlan make_folds(std::span<const Sample> samples, std::size_t k, Rng& rng) {
    if (k < 2) throw ValidationError("fold count must be at least 2");
    if (k > samples.size()) {
        throw ValidationError("fold count " + std::to_string(k) + " exceeds sample count " +
                              std::to_string(samples.size()));
    }
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    FoldPlan plan;
    plan.k = k;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto& id = samples[order[pos]].id();
        if (!plan.assignment.emplace(id, pos % k).second) throw ValidationError("duplicate sample id '" + id + "'");
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticConfig::validate() const {
    if (n < 1) throw ValidationError("synthetic n must be >= 1");
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ValidationError("noise_rate must be in [0, 0.5)");
    if (!(precip_threshold_m > 0.0)) throw ValidationError("precip_threshold_m must be positive");
    if (!std::isfinite(temp_coupling_m_per_k)) throw ValidationError("temp_coupling_m_per_k must be finite");
    if (!std::isfinite(reference_temp_k)) throw ValidationError("reference_temp_k must be finite");
    if (!(image_fraction >= 0.0 && image_fraction <= 1.0)) throw ValidationError("image_fraction must be in [0, 1]");
    if (image_size < 1) throw ValidationError("image_size must be >= 1");
}

int synthetic_label_rule(const ClimateSequence& climate, const SyntheticConfig& config) {
    double temp = 0.0;
    for (std::size_t t = 0; t < kWindowDays; ++t) temp += climate.at(t, feature::kTemp2m);
    temp /= static_cast<double>(kWindowDays);
    const double threshold = config.precip_threshold_m + config.temp_coupling_m_per_k * (temp - config.reference_temp_k);
    return precipitation_sum(climate) > threshold ? 1 : 0;
}

namespace {

double exponential(Rng& rng, double mean) { return -mean * std::log(1.0 - rng.next_double()); }

// Erlang(shape) with the given mean.
double erlang(Rng& rng, int shape, double mean) {
    double x = 0.0;
    for (int i = 0; i < shape; ++i) x += exponential(rng, mean / shape);
    return x;
}

ClimateSequence synth_climate(Rng& rng, int day_of_year, double elevation) {
    ClimateSequence c;
    const double wetness = rng.next_double();
    const double rain_prob = 0.04 + 0.36 * wetness;
    const double temp_anomaly = rng.normal(0.0, 3.5);
    const double pressure_base = 101325.0 * std::exp(-elevation / 8434.0) + rng.normal(0.0, 250.0);
    const double soil_base = rng.uniform(0.05, 0.25);
    double soil_store = rng.uniform(0.0, 0.01);
    for (std::size_t t = 0; t < kWindowDays; ++t) {
        const int doy = day_of_year - static_cast<int>(kWindowDays - 1 - t);
        const double season = std::sin(2.0 * std::numbers::pi * (doy - 105) / 365.0);

        const bool rains = rng.bernoulli(rain_prob);
        const double precip = rains ? erlang(rng, 8, 0.009) : 0.0;
        c.at(t, feature::kPrecipitation) = precip;

        const double temp = 293.0 + 9.0 * season - 0.0065 * (elevation - 700.0) + temp_anomaly + rng.normal(0.0, 0.5) -
                            (rains ? 2.0 : 0.0);
        c.at(t, feature::kTemp2m) = temp;
        c.at(t, feature::kTemp2mMin) = temp - 7.0 - rng.normal(0.0, 0.3);
        c.at(t, feature::kTemp2mMax) = temp + 7.0 + rng.normal(0.0, 0.3);

        const double soil_temp = temp + 3.0 + 2.0 * season + rng.normal(0.0, 0.5);
        c.at(t, feature::kSoilTemp) = soil_temp;
        c.at(t, feature::kSoilTempMin) = soil_temp - 9.0 - rng.normal(0.0, 0.3);
        c.at(t, feature::kSoilTempMax) = soil_temp + 9.0 + rng.normal(0.0, 0.3);

        soil_store = 0.6 * soil_store + 0.4 * precip;
        const double water = std::clamp(soil_base + soil_store + rng.normal(0.0, 0.005), 0.02, 0.6);
        c.at(t, feature::kSoilWater) = water;
        c.at(t, feature::kSoilWaterMin) = 0.85 * water;
        c.at(t, feature::kSoilWaterMax) = std::min(1.0, 1.15 * water);

        const double solar =
            std::max(1.0e6, 2.2e7 + 6.0e6 * season - (rains ? 1.0e7 : 0.0) + rng.normal(0.0, 1.5e6));
        c.at(t, feature::kSolarSum) = solar;
        c.at(t, feature::kSolarMin) = solar * 2.0e-4;
        c.at(t, feature::kSolarMax) = solar * 0.105;

        const double pressure = pressure_base + rng.normal(0.0, 300.0);
        c.at(t, feature::kPressure) = pressure;
        c.at(t, feature::kPressureMin) = pressure - 250.0;
        c.at(t, feature::kPressureMax) = pressure + 250.0;
    }
    return c;
}

ImagePatch synth_image(Rng& rng, std::size_t size, double greenness_percent) {
    ImagePatch img;
    img.height = size;
    img.width = size;
    img.channels = 3;
    img.pixels.resize(size * size * 3);
    const double cover = std::clamp(0.1 + 0.6 * greenness_percent / 100.0 + rng.normal(0.0, 0.08), 0.0, 1.0);
    const double brightness = rng.uniform(0.85, 1.15);
    for (std::size_t i = 0; i < size * size; ++i) {
        const bool green = rng.bernoulli(cover);
        const double base[3] = {green ? 0.25 : 0.58, green ? 0.55 : 0.47, green ? 0.20 : 0.36};
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = base[ch] * brightness + rng.normal(0.0, 0.05);
            img.pixels[i * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

}  // namespace

std::vector<Sample> generate_synthetic(const SyntheticConfig& config, Rng& rng) {
    config.validate();
    using namespace std::chrono;
    std::vector<Sample> samples;
    samples.reserve(config.n);
    const sys_days epoch = sys_days{year{2017} / January / 1};
    for (std::size_t i = 0; i < config.n; ++i) {
        Sample s;
        auto& o = s.observation;
        char id[32];
        std::snprintf(id, sizeof id, "S%06zu", i + 1);
        o.id = id;
        const sys_days day = epoch + days{static_cast<int>(rng.index(7 * 365))};
        o.date = year_month_day{day};
        const int doy = (day - sys_days{o.date.year() / January / 1}).count() + 1;
        o.latitude = rng.uniform(31.5, 33.5);
        o.longitude = rng.uniform(-112.5, -110.0);
        o.elevation_m = rng.uniform(300.0, 1500.0);
        s.climate = synth_climate(rng, doy, o.elevation_m);

        int label = synthetic_label_rule(s.climate, config);
        if (rng.bernoulli(config.noise_rate)) label = 1 - label;
        o.greenness_percent = label ? rng.uniform(51.0, 100.0) : rng.uniform(0.0, 50.0);

        const bool with_image = rng.bernoulli(config.image_fraction);
        if (with_image) s.image = synth_image(rng, config.image_size, *o.greenness_percent);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace greenup
