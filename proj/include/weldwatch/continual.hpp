#pragma once

// Few-shot class-incremental updates: grow the output layer for newly
// labeled fault classes, fine-tune only the unfrozen later layers on the
// few-shot samples plus replayed known-class data, and refit the detector
// bank over the enlarged class set.

#include "weldwatch/detector.hpp"
#include "weldwatch/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace weldwatch {

struct LabeledGroup {
    std::string label;
    Eigen::MatrixXd features;  // one sample per row
};

inline FreezeSpec default_update_freeze() { return FreezeSpec{{0, 1}}; }

struct UpdateRequest {
    std::vector<LabeledGroup> new_classes;
    // Extra samples for classes the model already knows.
    std::vector<LabeledGroup> known_additions;
    // When > 0, each new class contributes at most this many samples.
    int shots_per_class = 0;
    bool include_known_replay = true;
    FreezeSpec freeze = default_update_freeze();
    TrainConfig train_cfg;
    ComponentPolicy policy;
    std::uint64_t expansion_seed = 0;
    // Fit new-class detectors on every sample of the group rather than only
    // the shots used for fine-tuning (a labeled cluster is labeled in full).
    bool detectors_use_all_samples = false;
};

struct UpdateSet {
    LabeledBatch data;
    std::vector<std::string> labels;  // C + k names, new classes appended in request order
    int first_new_class = 0;
};

// `known` is labeled with ids into `known_labels`.
UpdateSet build_update_set(const LabeledBatch& known, const std::vector<std::string>& known_labels,
                           const UpdateRequest& request);

struct UpdateResult {
    MlpModel model;
    DetectorBank bank;
    UpdateSet update_set;
    std::vector<double> epoch_loss;
};

// Class names come from model.class_labels (or class_<i> when absent).
UpdateResult update_model(const MlpModel& model, const DetectorBank& bank, const UpdateRequest& request,
                          const LabeledBatch& known);

// True when every frozen layer of `after` equals `before` bit for bit. Rows
// added to the output layer are ignored when that layer is frozen.
bool frozen_layers_unchanged(const MlpModel& before, const MlpModel& after, const FreezeSpec& freeze);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// Inputs shared by every sweep trial.
struct SweepScenario {
    MlpModel base_model;                     // trained on the known classes
    DetectorBank base_bank;
    std::vector<std::string> known_labels;
    LabeledBatch known_train;                // replay data
    LabeledBatch known_test;                 // held-out known fold
    std::vector<LabeledGroup> withheld;      // pools of never-trained classes
};

struct SweepOptions {
    int min_classes = 1;
    int max_classes = 3;
    int min_shots = 2;
    int max_shots = 6;
    int repeats = 20;
    // One seed per repeat index; derived from base_seed when empty.
    std::vector<std::uint64_t> seeds;
    std::uint64_t base_seed = 0;
    UpdateRequest request_template;  // freeze, training and replay knobs
    int threads = 1;
};

struct TrialResult {
    int num_new_classes = 0;
    int shots = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    double overall_accuracy = 0.0;
    double known_accuracy = 0.0;
    double new_class_accuracy = 0.0;
    bool frozen_unchanged = true;
};

struct CellSummary {
    int num_new_classes = 0;
    int shots = 0;
    int repeats = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // N-1 denominator; 0 when repeats == 1
    bool std_degenerate = false;
    double mean_known_accuracy = 0.0;
    double mean_new_class_accuracy = 0.0;
};

struct SweepResult {
    std::vector<TrialResult> trials;  // sorted by (classes, shots, repeat)
    std::vector<CellSummary> cells;

    const CellSummary* cell(int classes, int shots) const;
};

TrialResult run_trial(const SweepScenario& scenario, int num_new_classes, int shots, int repeat,
                      std::uint64_t seed, const UpdateRequest& request_template);

SweepResult run_sweep(const SweepScenario& scenario, const SweepOptions& options);

// Mean and N-1 standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

std::string sweep_trials_csv(const SweepResult& result);
std::string sweep_summary_csv(const SweepResult& result);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace weldwatch
