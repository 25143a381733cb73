#include "doctest.h"

#include "../support/fixture.hpp"
#include "../support/tempdir.hpp"
#include "weldwatch/error.hpp"
#include "weldwatch/monitor.hpp"
#include "weldwatch/textio.hpp"

#include <filesystem>

using namespace weldwatch;
namespace fs = std::filesystem;

namespace {

Dataset batch_of(const fixture::Scenario& s) {
    Dataset b = s.base.split.test_known;
    for (const auto& r : s.base.split.withheld.records) b.records.push_back(r);
    return b;
}

std::vector<Outcome> outcomes(const std::vector<Decision>& d) {
    std::vector<Outcome> out;
    for (const auto& x : d) out.push_back(x.outcome);
    return out;
}

// Cluster whose members are mostly `label`.
const Cluster* cluster_for(const ClusterReport& r, const Dataset& pool, const std::string& label) {
    const Cluster* best = nullptr;
    std::size_t best_hits = 0;
    for (const auto& c : r.clusters) {
        std::size_t hits = 0;
        for (const auto& id : c.member_ids)
            for (const auto& rec : pool.records)
                if (rec.sample_id == id && rec.label == label) ++hits;
        if (hits > best_hits) {
            best_hits = hits;
            best = &c;
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("monitor") {

TEST_CASE("initial state is consistent") {
    const auto s = fixture::make();
    CHECK(s.state.revision == 0);
    CHECK(s.state.label_map() == s.base.known_labels);
    CHECK(s.state.flagged_pool.size() == 0);
    CHECK(s.state.flagged_pool.feature_names == s.state.labeled.feature_names);
    DetectorBank short_bank = s.state.bank;
    short_bank.detectors.pop_back();
    CHECK_THROWS_AS(initial_state(s.state.model, short_bank, s.state.labeled), ConfigError);
}

TEST_CASE("detect_batch flags unknowns into the pool") {
    const auto s = fixture::make();
    const Dataset batch = batch_of(s);
    const DetectOutcome out = detect_batch(s.state, batch);
    CHECK(out.state.revision == 1);
    CHECK(s.state.revision == 0);  // input untouched
    CHECK(s.state.flagged_pool.size() == 0);
    const auto lib = detect_rows(s.state.bank, s.state.model, feature_matrix(batch));
    CHECK(outcomes(out.decisions) == outcomes(lib));
    const auto flagged = static_cast<std::size_t>(
        std::count_if(lib.begin(), lib.end(), [](const Decision& d) { return d.outcome == Outcome::Unknown; }));
    CHECK(out.state.flagged_pool.size() == flagged);
    REQUIRE(out.metrics.has_value());
    CHECK(*out.metrics->unknown_recall >= 0.9);
    CHECK(out.state.history.at(batch.records[0].sample_id).decisions.size() == 1);

    // Re-detecting the same samples does not duplicate pool entries.
    const DetectOutcome again = detect_batch(out.state, batch);
    CHECK(again.state.flagged_pool.size() == flagged);
    CHECK(again.state.history.at(batch.records[0].sample_id).decisions.size() == 2);

    Dataset unlabeled = batch;
    unlabeled.records[0].label.reset();
    CHECK_FALSE(detect_batch(s.state, unlabeled).metrics.has_value());

    Dataset wrong;
    wrong.feature_names = {"a"};
    wrong.add({"z", Eigen::VectorXd::Zero(1), std::nullopt});
    CHECK_THROWS_AS(detect_batch(s.state, wrong), ShapeError);
    CHECK_THROWS_AS(detect_batch(s.state, Dataset{}), DataError);
}

TEST_CASE("labeling a cluster with a new name grows the model") {
    const auto s = fixture::make();
    CHECK_THROWS_AS(cluster_pool(s.state, {}), RequestError);
    const MonitorState detected = detect_batch(s.state, batch_of(s)).state;
    const MonitorState clustered = cluster_pool(detected, s.cfg.birch);
    REQUIRE(clustered.cluster_report.has_value());
    CHECK(clustered.revision == detected.revision + 1);
    CHECK(clustered.similarities.size() == detected.flagged_pool.size());
    CHECK(clustered.cluster_report->purity.has_value());

    const Cluster* c = cluster_for(*clustered.cluster_report, clustered.flagged_pool, "damaged_clean");
    REQUIRE(c != nullptr);
    const MonitorState updated = apply_labels(clustered, {{c->cluster_id, "damaged_clean", {}}}, fixture::knobs(s.cfg));
    CHECK(updated.model.num_classes() == 7);
    CHECK(updated.bank.num_classes() == 7);
    CHECK(updated.label_map().back() == "damaged_clean");
    CHECK(updated.flagged_pool.size() == clustered.flagged_pool.size() - c->members.size());
    CHECK(updated.labeled.size() == clustered.labeled.size() + c->members.size());
    CHECK(updated.revision == clustered.revision + 1);
    CHECK_FALSE(updated.cluster_report.has_value());
    CHECK(frozen_layers_unchanged(clustered.model, updated.model, default_update_freeze()));
}

TEST_CASE("labeling with an existing class does not expand") {
    const auto s = fixture::make();
    const MonitorState clustered = cluster_pool(detect_batch(s.state, batch_of(s)).state, s.cfg.birch);
    const int id = clustered.cluster_report->clusters.front().cluster_id;
    const MonitorState updated = apply_labels(clustered, {{id, "new_clean", {}}}, fixture::knobs(s.cfg));
    CHECK(updated.model.num_classes() == 6);
    CHECK(updated.label_map() == clustered.label_map());
}

TEST_CASE("bad assignments are request errors") {
    const auto s = fixture::make();
    const MonitorState detected = detect_batch(s.state, batch_of(s)).state;
    const auto knobs = fixture::knobs(s.cfg);
    CHECK_THROWS_AS(apply_labels(detected, {{0, "x", {}}}, knobs), RequestError);  // nothing clustered yet
    const MonitorState clustered = cluster_pool(detected, s.cfg.birch);
    const auto& first = clustered.cluster_report->clusters.front();
    CHECK_THROWS_WITH_AS(apply_labels(clustered, {{999, "x", {}}}, knobs), doctest::Contains("999"), RequestError);
    CHECK_THROWS_AS(apply_labels(clustered, {{first.cluster_id, "", {}}}, knobs), RequestError);
    CHECK_THROWS_AS(apply_labels(clustered, {}, knobs), RequestError);
    CHECK_THROWS_AS(apply_labels(clustered, {{first.cluster_id, "x", {{"not-a-member", "y"}}}}, knobs), RequestError);
    CHECK_THROWS_AS(
        apply_labels(clustered, {{first.cluster_id, "x", {}}, {first.cluster_id, "y", {}}}, knobs), RequestError);
}

TEST_CASE("overrides relabel individual members") {
    const auto s = fixture::make();
    const MonitorState clustered = cluster_pool(detect_batch(s.state, batch_of(s)).state, s.cfg.birch);
    const Cluster* c = cluster_for(*clustered.cluster_report, clustered.flagged_pool, "damaged_polished");
    REQUIRE(c != nullptr);
    const std::string odd = c->member_ids.back();
    const MonitorState updated =
        apply_labels(clustered, {{c->cluster_id, "damaged_polished", {{odd, "worn_clean"}}}}, fixture::knobs(s.cfg));
    CHECK(updated.model.num_classes() == 7);
    for (const auto& r : updated.labeled.records)
        if (r.sample_id == odd) CHECK(*r.label == "worn_clean");
}

TEST_CASE("in-place update keeps the class set") {
    const auto s = fixture::make();
    const MonitorState next = update_in_place(s.state, fixture::knobs(s.cfg));
    CHECK(next.revision == 1);
    CHECK(next.model.num_classes() == 6);
    auto no_replay = fixture::knobs(s.cfg);
    no_replay.include_known_replay = false;
    CHECK_THROWS_AS(update_in_place(s.state, no_replay), ConfigError);
}

TEST_CASE("persist and restore reproduce decisions exactly") {
    const auto s = fixture::make();
    TempDir dir;
    const MonitorState detected = detect_batch(s.state, batch_of(s)).state;
    const MonitorState clustered = cluster_pool(detected, s.cfg.birch);
    persist(detected, dir.str());
    persist(clustered, dir.str());
    CHECK(list_revisions(dir.str()) == std::vector<long long>{1, 2});

    const MonitorState back = restore(dir.str());
    CHECK(back.revision == 2);
    CHECK(back.model == clustered.model);
    CHECK(back.flagged_pool.size() == clustered.flagged_pool.size());
    REQUIRE(back.cluster_report.has_value());
    CHECK(back.cluster_report->assignment == clustered.cluster_report->assignment);
    CHECK(back.history.size() == clustered.history.size());
    CHECK(back.metrics.has_value());

    Dataset probe = s.base.split.withheld;
    for (const auto& r : s.base.split.test_known.records) probe.records.push_back(r);
    probe.records.resize(100);
    const Eigen::MatrixXd x = feature_matrix(probe);
    const auto a = detect_rows(clustered.bank, clustered.model, x);
    const auto b = detect_rows(back.bank, back.model, x);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].outcome == b[i].outcome);
        CHECK(a[i].assigned_class == b[i].assigned_class);
        CHECK(a[i].indicator == b[i].indicator);
    }
    CHECK(restore(dir.str(), 1).revision == 1);
    CHECK_FALSE(restore(dir.str(), 1).cluster_report.has_value());
    CHECK_THROWS_AS(persist(clustered, dir.str()), IoError);
    CHECK_THROWS_AS(restore(dir.str(), 7), RestoreError);
}

TEST_CASE("corrupt revisions fail with a diagnostic") {
    const auto s = fixture::make();
    TempDir dir;
    const std::string rev = persist(s.state, dir.str());
    const auto model_path = (fs::path(rev) / "model.txt").string();
    const std::string model = textio::read_file(model_path);
    textio::write_file(model_path, model.substr(0, model.size() / 2));
    CHECK_THROWS_AS(restore(dir.str()), RestoreError);

    textio::write_file(model_path, model);
    CHECK(restore(dir.str()).revision == 0);
    const auto state_path = (fs::path(rev) / "state.json").string();
    std::string state = textio::read_file(state_path);
    state[state.size() / 2] = state[state.size() / 2] == '1' ? '2' : '1';
    textio::write_file(state_path, state);
    CHECK_THROWS_AS(restore(dir.str()), RestoreError);
    CHECK_THROWS_AS(restore((dir.path / "missing").string()), RestoreError);
}

}  // TEST_SUITE
