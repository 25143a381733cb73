#pragma once

// Operational state of a deployed monitor: the current model and detector
// bank, labeled replay data, the pool of samples flagged as unknown, the
// latest clustering of that pool, and per-sample decision history. Every
// operation here is a pure function from one state to the next, so a failed
// operation leaves the caller's state untouched.

#include "weldwatch/clustering.hpp"
#include "weldwatch/continual.hpp"
#include "weldwatch/dataset.hpp"
#include "weldwatch/detector.hpp"
#include "weldwatch/mlp.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weldwatch {

struct DecisionEntry {
    long long revision = 0;
    Outcome outcome = Outcome::Unknown;
    int class_id = -1;
};

struct SampleHistory {
    Eigen::VectorXd features;
    std::vector<DecisionEntry> decisions;
};

struct LabelAssignment {
    int cluster_id = 0;
    std::string label;
    // sample_id -> label for members that belong elsewhere
    std::map<std::string, std::string> overrides;
};

struct UpdateKnobs {
    int shots_per_class = 5;
    bool include_known_replay = true;
    FreezeSpec freeze = default_update_freeze();
    TrainConfig train;
    ComponentPolicy policy;
    std::uint64_t seed = 0;
};

struct MonitorState {
    MlpModel model;
    DetectorBank bank;
    Dataset labeled;       // known-class samples used for replay and detector refits
    Dataset flagged_pool;  // samples flagged unknown and not yet labeled
    std::optional<ClusterReport> cluster_report;
    std::vector<SimilarityVector> similarities;  // aligned with cluster_report->sample_ids
    std::map<std::string, SampleHistory> history;
    std::optional<DetectionMetrics> metrics;
    std::map<std::string, std::string> token_responses;  // idempotency cache
    long long revision = 0;

    const std::vector<std::string>& label_map() const { return model.class_labels; }
    // Throws ConfigError when model, bank and label map disagree.
    void validate() const;
};

MonitorState initial_state(MlpModel model, DetectorBank bank, Dataset labeled);

struct DetectOutcome {
    MonitorState state;
    std::vector<Decision> decisions;
    std::optional<DetectionMetrics> metrics;
};

// Decides every record; unknowns join the flagged pool. When every record is
// labeled, metrics are computed with labels outside the label map counting as
// ground-truth unknowns.
DetectOutcome detect_batch(const MonitorState& state, const Dataset& batch);

MonitorState cluster_pool(const MonitorState& state, const BirchOptions& options);

MonitorState apply_labels(const MonitorState& state, const std::vector<LabelAssignment>& assignments,
                          const UpdateKnobs& knobs);

// Fine-tunes the unfrozen layers on the labeled data without adding classes.
MonitorState update_in_place(const MonitorState& state, const UpdateKnobs& knobs);

// Writes <dir>/rev-NNNNNN/{model.txt,bank.txt,state.json} and points
// <dir>/CURRENT at it. Existing revisions are never overwritten.
std::string persist(const MonitorState& state, const std::string& dir);

// Loads the CURRENT revision, or the given one.
MonitorState restore(const std::string& dir, std::optional<long long> revision = std::nullopt);

std::vector<long long> list_revisions(const std::string& dir);

}  // namespace weldwatch
