#include "doctest.h"

#include "../support/fixture.hpp"
#include "weldwatch/continual.hpp"
#include "weldwatch/error.hpp"

using namespace weldwatch;

namespace {

LabeledGroup group_of(const Dataset& ds, const std::string& label) {
    return {label, feature_matrix(select_labels(ds, {label}))};
}

}  // namespace

TEST_SUITE("continual") {

TEST_CASE("update set appends new classes after the known ones") {
    const auto s = fixture::make();
    UpdateRequest req;
    req.new_classes.push_back(group_of(s.base.split.withheld, "damaged_clean"));
    req.shots_per_class = 4;
    const UpdateSet set = build_update_set(s.base.train, s.base.known_labels, req);
    CHECK(set.first_new_class == 6);
    CHECK(set.labels.size() == 7);
    CHECK(set.labels.back() == "damaged_clean");
    CHECK(set.data.size() == s.base.train.size() + 4);
    CHECK(std::count(set.data.labels.begin(), set.data.labels.end(), 6) == 4);

    req.include_known_replay = false;
    CHECK(build_update_set(s.base.train, s.base.known_labels, req).data.size() == 4);

    UpdateRequest dup = req;
    dup.new_classes.push_back(dup.new_classes.front());
    CHECK_THROWS_AS(build_update_set(s.base.train, s.base.known_labels, dup), ConfigError);
    UpdateRequest clash;
    clash.new_classes.push_back(group_of(s.base.split.train_known, "new_clean"));
    CHECK_THROWS_AS(build_update_set(s.base.train, s.base.known_labels, clash), ConfigError);
}

TEST_CASE("few-shot update grows the model and keeps frozen layers") {
    const auto s = fixture::make();
    UpdateRequest req = update_template(s.cfg);
    req.new_classes.push_back(group_of(s.base.split.withheld, "damaged_polished"));
    req.shots_per_class = 5;
    req.expansion_seed = 3;
    const DetectorBank bank = fit_detector(s.base.model, s.base.train, s.cfg.embed_layer, s.cfg.policy);
    const UpdateResult r = update_model(s.base.model, bank, req, s.base.train);
    CHECK(r.model.num_classes() == 7);
    CHECK(r.bank.num_classes() == 7);
    CHECK(r.model.class_labels.back() == "damaged_polished");
    CHECK(frozen_layers_unchanged(s.base.model, r.model, req.freeze));
    CHECK_FALSE(r.model.weights.back().topRows(6) == s.base.model.weights.back());

    // The new class is recognised on its unseen samples.
    const Eigen::MatrixXd rest = group_of(s.base.split.withheld, "damaged_polished").features.bottomRows(25);
    const auto pred = predict(r.model, rest);
    CHECK(std::count(pred.begin(), pred.end(), 6) >= 23);
    // Old classes survive.
    CHECK(accuracy(predict(r.model, s.base.test.features), s.base.test.labels) >= 0.9);
}

TEST_CASE("known additions without new classes leave the output size alone") {
    const auto s = fixture::make();
    UpdateRequest req = update_template(s.cfg);
    req.known_additions.push_back(group_of(s.base.split.test_known, "worn_clean"));
    const DetectorBank bank = fit_detector(s.base.model, s.base.train, s.cfg.embed_layer, s.cfg.policy);
    const UpdateResult r = update_model(s.base.model, bank, req, s.base.train);
    CHECK(r.model.num_classes() == 6);
    CHECK(r.update_set.data.size() == s.base.train.size() + 6);
}

TEST_CASE("frozen check notices a changed layer") {
    const MlpModel a = init_mlp({3, 4, 2}, 1);
    MlpModel b = a;
    b.weights[0](0, 0) = std::nextafter(b.weights[0](0, 0), 10.0);
    CHECK_FALSE(frozen_layers_unchanged(a, b, FreezeSpec{{0}}));
    CHECK(frozen_layers_unchanged(a, b, FreezeSpec{{1}}));
}

TEST_CASE("mean and sample standard deviation") {
    const auto [m, sd] = mean_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
    CHECK(m == doctest::Approx(5.0));
    CHECK(sd == doctest::Approx(std::sqrt(32.0 / 7.0)));
    CHECK(mean_std({3.0}).second == 0.0);
}

TEST_CASE("sweep is deterministic and sized by the grid") {
    auto s = fixture::make();
    s.cfg.update_train.epochs = 30;
    const SweepScenario sc = make_sweep_scenario(s.base, s.cfg);
    SweepOptions opts = make_sweep_options(s.cfg, 5);
    opts.min_classes = 1;
    opts.max_classes = 2;
    opts.min_shots = 2;
    opts.max_shots = 3;
    opts.repeats = 2;
    const SweepResult a = run_sweep(sc, opts);
    opts.threads = 2;
    const SweepResult b = run_sweep(sc, opts);
    REQUIRE(a.trials.size() == 8);
    CHECK(a.cells.size() == 4);
    CHECK(sweep_trials_csv(a) == sweep_trials_csv(b));
    const CellSummary* cell = a.cell(2, 3);
    REQUIRE(cell != nullptr);
    CHECK(cell->repeats == 2);
    opts.max_shots = 40;
    CHECK_THROWS_AS(run_sweep(sc, opts), DataError);
}

}  // TEST_SUITE
