#pragma once

// Open-set detection on hidden-layer embeddings. Offline, each known class
// gets its own z-score statistics, PCA subspace and three-sigma score bounds.
// Online, a sample's embedding is tested against every class; the pattern of
// passes decides between "unknown", a single known class, or a softmax
// tie-break among several consistent classes.

#include "weldwatch/mlp.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace weldwatch {

inline constexpr double kStdFloor = 1e-8;
inline constexpr int kDefaultEmbedLayer = 2;

// How many principal components each class keeps.
struct ComponentPolicy {
    // Smallest r reaching this explained-variance fraction...
    double variance_fraction = 0.9;
    // ...capped here.
    int max_components = 10;
    // When > 0, use exactly this many components instead.
    int fixed_components = 0;

    static ComponentPolicy fixed(int r) { return {0.9, r, r}; }
    static ComponentPolicy variance(double fraction, int cap) { return {fraction, cap, 0}; }
};

struct ClassDetector {
    int class_id = 0;
    Eigen::VectorXd mean;         // q
    Eigen::VectorXd std;          // q, floored at kStdFloor
    Eigen::MatrixXd projection;   // q x r
    Eigen::VectorXd thresholds;   // r, three times the training score std

    int components() const { return static_cast<int>(projection.cols()); }
    Eigen::VectorXd standardize(const Eigen::VectorXd& z) const;
    Eigen::VectorXd scores(const Eigen::VectorXd& z) const;
    // Every component inside its bound; |u| == t passes.
    bool accepts(const Eigen::VectorXd& z) const;
};

struct DetectorBank {
    std::vector<ClassDetector> detectors;
    int embed_layer = kDefaultEmbedLayer;
    std::vector<std::string> class_labels;

    int num_classes() const { return static_cast<int>(detectors.size()); }
    int embedding_dim() const;
};

enum class Outcome { Unknown, Known, SoftmaxResolved };

const char* outcome_name(Outcome o);

struct Decision {
    std::vector<bool> indicator;
    Outcome outcome = Outcome::Unknown;
    int assigned_class = -1;  // -1 for Unknown
    std::optional<Eigen::VectorXd> softmax;
};

// Three times the sample (N-1) standard deviation of every score column.
Eigen::VectorXd three_sigma_thresholds(const Eigen::MatrixXd& scores);

// Number of components the policy keeps for a class with the given spectrum
// and sample count.
int choose_components(const ComponentPolicy& policy, const Eigen::VectorXd& spectrum,
                      Eigen::Index samples);

// Fits one class from its embeddings (one row per training sample).
ClassDetector fit_class_detector(const Eigen::MatrixXd& embeddings, int class_id, const ComponentPolicy& policy,
                                 const std::string& label);

DetectorBank fit_detector(const MlpModel& model, const LabeledBatch& train, int layer = kDefaultEmbedLayer,
                          const ComponentPolicy& policy = {});

std::vector<bool> indicator(const DetectorBank& bank, const MlpModel& model, const Eigen::VectorXd& x);

// Same as indicator() but starting from an already extracted embedding.
std::vector<bool> indicator_from_embedding(const DetectorBank& bank, const Eigen::VectorXd& z);

Decision decide(const std::vector<bool>& indicator, const Eigen::VectorXd& softmax);

// indicator + forward + decide for one sample.
Decision detect(const DetectorBank& bank, const MlpModel& model, const Eigen::VectorXd& x);

std::vector<Decision> detect_rows(const DetectorBank& bank, const MlpModel& model, const Eigen::MatrixXd& x);

inline constexpr int kUnknownTruth = -1;

struct DetectionMetrics {
    std::size_t total = 0;
    std::size_t known = 0;
    std::size_t unknown = 0;
    std::optional<double> unknown_recall;     // unknowns flagged / unknowns
    std::optional<double> false_alarm_rate;   // knowns flagged / knowns
    std::optional<double> known_accuracy;     // knowns assigned their class / knowns
    double overall_accuracy = 0.0;            // correct outcomes / all samples
    std::array<std::size_t, 3> outcome_counts{};  // indexed by Outcome
};

// truth[i] is the class id, or kUnknownTruth for a ground-truth unknown.
DetectionMetrics evaluate_decisions(const std::vector<Decision>& decisions, const std::vector<int>& truth);

DetectionMetrics evaluate_detection(const DetectorBank& bank, const MlpModel& model,
                                    const Eigen::MatrixXd& x, const std::vector<int>& truth);

std::string save_bank(const DetectorBank& bank);
DetectorBank load_bank(const std::string& document);
void save_bank_file(const DetectorBank& bank, const std::string& path);
DetectorBank load_bank_file(const std::string& path);

}  // namespace weldwatch
