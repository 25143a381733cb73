#pragma once

// Experiment harnesses: the synthetic base scenario (data, split, trained
// model), the open-set detection study, the single few-shot update study and
// the class-count x shot-count sweep.

#include "weldwatch/clustering.hpp"
#include "weldwatch/config.hpp"
#include "weldwatch/continual.hpp"
#include "weldwatch/dataset.hpp"
#include "weldwatch/detector.hpp"
#include "weldwatch/mlp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace weldwatch {

struct ExperimentConfig {
    ScenarioSpec scenario = default_scenario();
    std::uint64_t seed = 7;
    std::vector<int> hidden = kDefaultHiddenSizes;
    TrainConfig train;
    TrainConfig update_train;
    int embed_layer = kDefaultEmbedLayer;
    ComponentPolicy policy;
    BirchOptions birch;
    int shots = 5;
    bool replay = true;
    FreezeSpec freeze = default_update_freeze();
    std::pair<int, int> sweep_classes{1, 3};
    std::pair<int, int> sweep_shots{2, 6};
    int sweep_repeats = 20;

    static ExperimentConfig from_file(const ConfigFile& file);
};

// Derived seed streams.
enum class SeedStream : std::uint64_t { Data = 1, Split, Init, Shuffle, Update, Sweep };
std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream);

struct BaseScenario {
    Dataset data;
    ScenarioSplit split;
    std::vector<std::string> known_labels;
    LabeledBatch train;
    LabeledBatch test;
    MlpModel model;
    std::vector<double> epoch_loss;
};

BaseScenario prepare_base(const ExperimentConfig& cfg, std::uint64_t seed);

// Trains a fresh model on `train` labeled by `labels`.
TrainResult train_classifier(const ExperimentConfig& cfg, const LabeledBatch& train,
                             const std::vector<std::string>& labels, std::uint64_t seed);

struct OpenSetResult {
    DetectorBank bank;
    DetectionMetrics metrics;
    std::vector<Decision> decisions;
    std::vector<int> truth;
};

// Bank fitted on the known training folds; tested on the known holdout fold
// plus every withheld sample.
OpenSetResult run_open_set(const BaseScenario& base, const ExperimentConfig& cfg);

struct FewShotResult {
    double known_accuracy_before = 0.0;
    double known_accuracy = 0.0;
    double new_class_accuracy = 0.0;
    double overall_accuracy = 0.0;
    bool frozen_unchanged = false;
};

FewShotResult run_few_shot(const BaseScenario& base, const ExperimentConfig& cfg, int num_new_classes, int shots,
                           std::uint64_t seed);

SweepScenario make_sweep_scenario(const BaseScenario& base, const ExperimentConfig& cfg);
SweepOptions make_sweep_options(const ExperimentConfig& cfg, std::uint64_t seed);
UpdateRequest update_template(const ExperimentConfig& cfg);

}  // namespace weldwatch
