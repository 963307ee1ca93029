#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "greenup/errors.hpp"
#include "greenup/eval.hpp"

using namespace greenup;

namespace {

ConfusionCounts counts_from(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    ConfusionCounts c;
    c.tp = tp;
    c.fp = fp;
    c.tn = tn;
    c.fn = fn;
    return c;
}

}  // namespace

TEST_CASE("classify and confusion") {
    CHECK(classify(1, 1) == ConfusionClass::TP);
    CHECK(classify(1, 0) == ConfusionClass::FP);
    CHECK(classify(0, 0) == ConfusionClass::TN);
    CHECK(classify(0, 1) == ConfusionClass::FN);
    CHECK(confusion_name(ConfusionClass::FN) == "FN");

    const std::vector<int> pred{1, 1, 0, 0, 1};
    const std::vector<int> truth{1, 0, 0, 1, 1};
    const auto r = confusion(pred, truth);
    CHECK(r.counts == counts_from(2, 1, 1, 1));
    CHECK(r.classes[3] == ConfusionClass::FN);
    CHECK_THROWS_AS(confusion(pred, std::vector<int>{1}), ValidationError);
    CHECK_THROWS_AS(confusion(std::vector<int>{}, std::vector<int>{}), ValidationError);
}

TEST_CASE("metrics from counts") {
    const auto m = metrics(counts_from(5, 1, 3, 1));
    CHECK(m.accuracy == doctest::Approx(0.8));
    CHECK(m.fp_rate == doctest::Approx(0.1));
    CHECK(m.fn_rate == doctest::Approx(0.1));
    CHECK(m.f1 == doctest::Approx(10.0 / 12.0));

    CHECK(metrics(counts_from(0, 0, 4, 0)).f1 == 0.0);
    CHECK(metrics(counts_from(0, 0, 4, 0)).accuracy == 1.0);
}

TEST_CASE("metrics agree with a brute-force oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.index(40);
        std::vector<int> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.index(2));
            truth[i] = static_cast<int>(rng.index(2));
        }
        const auto m = metrics(confusion(pred, truth).counts);
        double correct = 0, fp = 0, fn = 0, tp = 0, pred_pos = 0, true_pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            correct += pred[i] == truth[i];
            fp += pred[i] == 1 && truth[i] == 0;
            fn += pred[i] == 0 && truth[i] == 1;
            tp += pred[i] == 1 && truth[i] == 1;
            pred_pos += pred[i];
            true_pos += truth[i];
        }
        const double precision = pred_pos > 0 ? tp / pred_pos : 0.0;
        const double recall = true_pos > 0 ? tp / true_pos : 0.0;
        const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        CHECK(m.accuracy == doctest::Approx(correct / n));
        CHECK(m.fp_rate == doctest::Approx(fp / n));
        CHECK(m.fn_rate == doctest::Approx(fn / n));
        CHECK(m.f1 == doctest::Approx(f1));
        CHECK(m.accuracy + m.fp_rate + m.fn_rate == doctest::Approx(1.0));
    }
}

TEST_CASE("fold summaries use the sample standard deviation") {
    const std::vector<double> two{0.6, 0.8};
    const auto s = summarize(two);
    CHECK(s.mean == doctest::Approx(0.7));
    CHECK(s.std == doctest::Approx(std::sqrt(0.02)));
    CHECK(summarize(std::vector<double>{0.9}).std == 0.0);

    std::vector<MetricsReport> folds(2);
    folds[0].accuracy = 0.6;
    folds[1].accuracy = 0.8;
    folds[0].f1 = folds[1].f1 = 0.5;
    const auto r = summarize_folds(folds);
    CHECK(r.accuracy.mean == doctest::Approx(0.7));
    CHECK(r.accuracy.std == doctest::Approx(0.1414).epsilon(1e-3));
    CHECK(r.f1.std == 0.0);

    const auto j = to_json(r);
    for (const char* key : {"accuracy", "f1", "fp_rate", "fn_rate"}) {
        REQUIRE(j["metrics"].contains(key));
        CHECK(j["metrics"][key].contains("mean"));
        CHECK(j["metrics"][key].contains("std"));
    }
    CHECK(j["folds"].size() == 2);

    const auto csv = metrics_csv(r);
    CHECK(csv.rfind("metric,fold,value\n", 0) == 0);
    CHECK(csv.find("accuracy,0,0.6\n") != std::string::npos);
    CHECK(csv.find("accuracy,mean,") != std::string::npos);
    CHECK(csv.find("fn_rate,std,") != std::string::npos);
}

TEST_CASE("cross-validation trains one model per fold on disjoint data") {
    SyntheticConfig sc;
    sc.n = 30;
    sc.image_fraction = 0.0;
    Rng rng(816);
    const auto data = generate_synthetic(sc, rng);
    Rng fr(816);
    const auto plan = make_folds(data, 3, fr);

    ModelConfig mc;
    mc.lstm_hidden = 4;
    mc.lstm_layers = 1;
    TrainConfig tc;
    tc.epochs = 2;
    tc.learning_rate = 1e-3;
    const auto serial = cross_validate(Variant::LstmMulti, data, plan, mc, tc, false);
    const auto parallel = cross_validate(Variant::LstmMulti, data, plan, mc, tc, true);
    REQUIRE(serial.folds.size() == 3);
    std::size_t evaluated = 0;
    for (std::size_t f = 0; f < 3; ++f) {
        evaluated += serial.fold_counts[f].total();
        CHECK(serial.fold_counts[f].total() == plan.fold_size(f));
        CHECK(serial.folds[f].accuracy == parallel.folds[f].accuracy);
    }
    CHECK(evaluated == data.size());

    // Each fold's standardizer comes from its own training portion.
    REQUIRE(serial.standardizer_fingerprints.size() == 3);
    CHECK(std::set<std::string>(serial.standardizer_fingerprints.begin(), serial.standardizer_fingerprints.end())
              .size() == 3);
    CHECK(serial.standardizer_fingerprints == parallel.standardizer_fingerprints);
    for (std::size_t f = 0; f < 3; ++f) {
        std::vector<Sample> train;
        for (const auto& s : data) {
            if (plan.fold_of(s.id()) != f) train.push_back(s);
        }
        CHECK(fit_standardizer(train).fingerprint() == serial.standardizer_fingerprints[f]);
    }

    const auto ap = cross_validate(Variant::Ap, data, plan, mc, tc, false);
    for (std::size_t f = 0; f < 3; ++f) {
        std::vector<int> pred, truth;
        for (const auto& s : data) {
            if (plan.fold_of(s.id()) != f) continue;
            pred.push_back(ap_predict(s.climate, kApThresholdMeters).label);
            truth.push_back(s.observation.label());
        }
        CHECK(ap.fold_counts[f] == confusion(pred, truth).counts);
    }
}

TEST_CASE("agreement partitions samples by class") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        std::vector<std::string> ids;
        std::vector<int> a(n), b(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            ids.push_back("s" + std::to_string(i));
            a[i] = static_cast<int>(rng.index(2));
            b[i] = static_cast<int>(rng.index(2));
            t[i] = static_cast<int>(rng.index(2));
        }
        const auto r = agreement(ids, a, b, t);
        for (auto c : kConfusionClasses) {
            std::set<std::string> in_a, in_b;
            for (std::size_t i = 0; i < n; ++i) {
                if (classify(a[i], t[i]) == c) in_a.insert(ids[i]);
                if (classify(b[i], t[i]) == c) in_b.insert(ids[i]);
            }
            std::set<std::string> both, only_a, only_b;
            std::set_intersection(in_a.begin(), in_a.end(), in_b.begin(), in_b.end(),
                                  std::inserter(both, both.end()));
            std::set_difference(in_a.begin(), in_a.end(), in_b.begin(), in_b.end(),
                                std::inserter(only_a, only_a.end()));
            std::set_difference(in_b.begin(), in_b.end(), in_a.begin(), in_a.end(),
                                std::inserter(only_b, only_b.end()));
            const auto& cell = r.cell(c);
            CHECK(std::set<std::string>(cell.both.begin(), cell.both.end()) == both);
            CHECK(std::set<std::string>(cell.only_a.begin(), cell.only_a.end()) == only_a);
            CHECK(std::set<std::string>(cell.only_b.begin(), cell.only_b.end()) == only_b);
        }
    }

    // A's unique true positives are exactly B's false negatives.
    const std::vector<std::string> ids{"x", "y", "z"};
    const std::vector<int> a{1, 0, 1}, b{0, 0, 1}, t{1, 0, 1};
    const auto r = agreement(ids, a, b, t);
    CHECK(r.unique_tp_a() == std::vector<std::string>{"x"});
    CHECK(r.cell(ConfusionClass::FN).only_b == std::vector<std::string>{"x"});
    CHECK(r.unique_tp_b().empty());
    CHECK(r.cell(ConfusionClass::TN).both == std::vector<std::string>{"y"});

    const auto j = to_json(r, "AP", "LSTM");
    CHECK(j["classes"]["TP"]["only_a"]["count"] == 1);
    CHECK(j["panels"][0]["title"] == "AP unique true positives (LSTM false negatives)");
    CHECK_THROWS_AS(agreement(ids, a, std::vector<int>{1}, t), ValidationError);
}
