#include "doctest.h"

#include "weldwatch/detector.hpp"
#include "weldwatch/error.hpp"

#include <random>

using namespace weldwatch;

namespace {

Eigen::MatrixXd gaussian_rows(int n, int q, std::uint64_t seed, double shift = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::MatrixXd x(n, q);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) x(i, j) = shift + noise(rng) * (j < 3 ? 3.0 : 0.5);
    return x;
}

Decision with(Outcome o, int cls) {
    Decision d;
    d.outcome = o;
    d.assigned_class = cls;
    return d;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("three-sigma threshold uses the sample standard deviation") {
    Eigen::MatrixXd scores(3, 1);
    scores << -2.0, 0.0, 2.0;
    CHECK(three_sigma_thresholds(scores)(0) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK_THROWS_AS(three_sigma_thresholds(Eigen::MatrixXd::Zero(1, 2)), ConfigError);
}

TEST_CASE("a score exactly at the bound passes") {
    ClassDetector d;
    d.mean = Eigen::VectorXd::Zero(2);
    d.std = Eigen::VectorXd::Ones(2);
    d.projection = Eigen::MatrixXd::Identity(2, 1);
    d.thresholds = Eigen::VectorXd::Constant(1, 1.5);
    CHECK(d.accepts((Eigen::VectorXd(2) << 1.5, 100.0).finished()));
    CHECK(d.accepts((Eigen::VectorXd(2) << -1.5, 0.0).finished()));
    CHECK_FALSE(d.accepts((Eigen::VectorXd(2) << std::nextafter(1.5, 2.0), 0.0).finished()));
    CHECK_THROWS_AS(d.accepts(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("component policy") {
    Eigen::VectorXd spectrum(5);
    spectrum << 5.0, 3.0, 1.0, 0.5, 0.5;  // total 10
    CHECK(choose_components(ComponentPolicy::variance(0.8, 10), spectrum, 100) == 2);
    CHECK(choose_components(ComponentPolicy::variance(0.9, 10), spectrum, 100) == 3);
    CHECK(choose_components(ComponentPolicy::variance(0.9, 2), spectrum, 100) == 2);
    CHECK(choose_components(ComponentPolicy::variance(1.0, 10), spectrum, 3) == 2);  // n - 1
    CHECK(choose_components(ComponentPolicy::fixed(4), spectrum, 100) == 4);
    Eigen::VectorXd rank_deficient(4);
    rank_deficient << 2.0, 1.0, 0.0, 0.0;
    CHECK(choose_components(ComponentPolicy::variance(1.0, 10), rank_deficient, 100) == 2);
    CHECK_THROWS_AS(choose_components(ComponentPolicy::variance(0.0, 10), spectrum, 100), ConfigError);
    CHECK_THROWS_AS(choose_components(ComponentPolicy::variance(0.9, 0), spectrum, 100), ConfigError);
}

TEST_CASE("fitted class accepts most of its own samples and rejects far ones") {
    const Eigen::MatrixXd z = gaussian_rows(60, 12, 3);
    const ClassDetector d = fit_class_detector(z, 0, ComponentPolicy::variance(0.9, 5), "a");
    CHECK(d.components() >= 1);
    CHECK(d.components() <= 5);
    int accepted = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) accepted += d.accepts(z.row(i).transpose());
    CHECK(accepted >= 57);
    const Eigen::MatrixXd far = gaussian_rows(20, 12, 4, 40.0);
    for (Eigen::Index i = 0; i < far.rows(); ++i) CHECK_FALSE(d.accepts(far.row(i).transpose()));
}

TEST_CASE("degenerate classes fail with the class named") {
    CHECK_THROWS_WITH_AS(fit_class_detector(Eigen::MatrixXd::Ones(1, 4), 2, {}, "worn_clean"),
                         doctest::Contains("worn_clean"), FitError);
    CHECK_THROWS_WITH_AS(fit_class_detector(Eigen::MatrixXd::Ones(6, 4), 2, {}, "flat"), doctest::Contains("flat"),
                         FitError);
    CHECK_THROWS_AS(fit_class_detector(gaussian_rows(3, 4, 1), 0, ComponentPolicy::fixed(3), "few"), FitError);
}

TEST_CASE("decision cases") {
    Eigen::VectorXd p(3);
    p << 0.2, 0.5, 0.3;
    const Decision unknown = decide({false, false, false}, p);
    CHECK(unknown.outcome == Outcome::Unknown);
    CHECK(unknown.assigned_class == -1);
    CHECK_FALSE(unknown.softmax.has_value());

    const Decision known = decide({false, false, true}, p);
    CHECK(known.outcome == Outcome::Known);
    CHECK(known.assigned_class == 2);  // the indicator wins over the softmax

    const Decision resolved = decide({true, false, true}, p);
    CHECK(resolved.outcome == Outcome::SoftmaxResolved);
    CHECK(resolved.assigned_class == 1);
    REQUIRE(resolved.softmax.has_value());

    Eigen::VectorXd tie(3);
    tie << 0.4, 0.4, 0.2;
    CHECK(decide({true, true, false}, tie).assigned_class == 0);
    CHECK_THROWS_AS(decide({true}, p), ShapeError);
}

TEST_CASE("metrics from hand counts") {
    std::vector<Decision> decisions;
    std::vector<int> truth;
    for (int i = 0; i < 20; ++i) {  // 18 of 20 unknowns flagged
        decisions.push_back(i < 18 ? with(Outcome::Unknown, -1) : with(Outcome::Known, 0));
        truth.push_back(kUnknownTruth);
    }
    for (int i = 0; i < 20; ++i) {  // 1 of 20 knowns flagged, 2 misassigned
        if (i == 0)
            decisions.push_back(with(Outcome::Unknown, -1));
        else if (i < 3)
            decisions.push_back(with(Outcome::SoftmaxResolved, 1));
        else
            decisions.push_back(with(Outcome::Known, 0));
        truth.push_back(0);
    }
    const DetectionMetrics m = evaluate_decisions(decisions, truth);
    CHECK(m.total == 40);
    CHECK(*m.unknown_recall == doctest::Approx(0.9));
    CHECK(*m.false_alarm_rate == doctest::Approx(0.05));
    CHECK(*m.known_accuracy == doctest::Approx(17.0 / 20.0));
    CHECK(m.overall_accuracy == doctest::Approx(35.0 / 40.0));
    CHECK(m.outcome_counts[0] == 19);
    CHECK(m.outcome_counts[2] == 2);

    const DetectionMetrics only_known = evaluate_decisions({with(Outcome::Known, 0)}, {0});
    CHECK_FALSE(only_known.unknown_recall.has_value());
    CHECK_THROWS_AS(evaluate_decisions({}, {}), DataError);
}

TEST_CASE("bank round trip through text") {
    DetectorBank bank;
    bank.embed_layer = 2;
    bank.class_labels = {"a", "b"};
    bank.detectors.push_back(fit_class_detector(gaussian_rows(30, 6, 1), 0, {}, "a"));
    bank.detectors.push_back(fit_class_detector(gaussian_rows(30, 6, 2, 5.0), 1, {}, "b"));
    const DetectorBank back = load_bank(save_bank(bank));
    REQUIRE(back.num_classes() == 2);
    CHECK(back.class_labels == bank.class_labels);
    for (int c = 0; c < 2; ++c) {
        const auto& a = bank.detectors[static_cast<std::size_t>(c)];
        const auto& b = back.detectors[static_cast<std::size_t>(c)];
        CHECK(a.mean == b.mean);
        CHECK(a.std == b.std);
        CHECK(a.projection == b.projection);
        CHECK(a.thresholds == b.thresholds);
    }
    std::string doc = save_bank(bank);
    doc.resize(doc.size() - 30);
    CHECK_THROWS_AS(load_bank(doc), RestoreError);
}

}  // TEST_SUITE
