#pragma once

// Sample records, CSV ingestion, synthetic scenarios standing in for real
// multi-sensor feature tables, and stratified splits.

#include "weldwatch/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace weldwatch {

struct SampleRecord {
    std::string sample_id;
    Eigen::VectorXd features;
    std::optional<std::string> label;
};

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<SampleRecord> records;

    int dim() const { return static_cast<int>(feature_names.size()); }
    std::size_t size() const { return records.size(); }
    void add(SampleRecord r);
    // Labels in order of first appearance.
    std::vector<std::string> labels() const;
};

Dataset parse_csv(const std::string& text, const std::string& source = "<memory>");
Dataset load_csv(const std::string& path);
std::string to_csv(const Dataset& ds);
void save_csv(const Dataset& ds, const std::string& path);

// Row-per-record feature matrix.
Eigen::MatrixXd feature_matrix(const Dataset& ds);

// Maps each record's label to its index in `labels`; throws DataError for a
// missing or unlisted label.
LabeledBatch to_batch(const Dataset& ds, const std::vector<std::string>& labels);

// Records whose label is in `keep`, in original order.
Dataset select_labels(const Dataset& ds, const std::vector<std::string>& keep);

struct ClassSpec {
    std::string name;
    int samples = 30;
    std::optional<Eigen::VectorXd> mean;  // explicit mean overrides the generated one
};

struct ScenarioSpec {
    std::vector<ClassSpec> classes;
    std::vector<std::string> known;
    std::vector<std::string> unknown;  // withheld from training
    int dim = 20;
    double separation = 8.0;  // distance between generated class means, in units of scale
    double scale = 1.0;       // per-feature noise standard deviation
    // Radius scale for generated withheld-class means; known classes use
    // `separation`. Withheld classes model distinct failure modes.
    double withheld_separation = 24.0;
    // Optional pair of classes placed hard_separation * scale apart.
    std::optional<std::pair<std::string, std::string>> hard_pair;
    double hard_separation = 3.0;
    int folds = 5;
    int test_fold = 0;

    void validate() const;
    const ClassSpec* find(const std::string& name) const;
};

// Nine classes x 30 samples, d = 20: six known (new/worn tool x three
// surfaces) and the three damaged-tool classes withheld.
ScenarioSpec default_scenario();

Dataset synth_generate(const ScenarioSpec& spec, std::uint64_t seed);

// Folds of record indices. Each class is shuffled and dealt round-robin.
std::vector<std::vector<std::size_t>> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed);

struct ScenarioSplit {
    Dataset train_known;
    Dataset test_known;
    Dataset withheld;
};

ScenarioSplit scenario_split(const Dataset& ds, const ScenarioSpec& spec, std::uint64_t seed);

}  // namespace weldwatch
