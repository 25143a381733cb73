#pragma once

// Feed-forward ReLU network with a softmax head, trained by Adam on mean
// categorical cross-entropy. Layers can be frozen during training and the
// output layer can grow to admit new classes.

#include <Eigen/Dense>

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace weldwatch {

enum class Activation { ReLU };

struct MlpModel {
    // [input d, hidden..., output C]
    std::vector<int> layer_sizes;
    // weights[l] is layer_sizes[l+1] x layer_sizes[l]
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::ReLU;
    std::uint64_t seed = 0;
    // Optional class id -> name mapping carried with the parameters.
    std::vector<std::string> class_labels;

    int num_layers() const { return static_cast<int>(weights.size()); }
    int num_hidden() const { return num_layers() - 1; }
    int input_dim() const { return layer_sizes.front(); }
    int num_classes() const { return layer_sizes.back(); }
    std::size_t num_parameters() const;

    friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

// Weight-layer indices (0 = first hidden layer) whose parameters stay fixed.
struct FreezeSpec {
    std::set<int> frozen_layers;

    bool is_frozen(int layer) const { return frozen_layers.count(layer) > 0; }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int epochs = 200;
    int batch_size = 16;
    std::uint64_t shuffle_seed = 0;

    void validate() const;
};

struct ForwardTrace {
    std::vector<Eigen::VectorXd> pre_activations;
    // Hidden entries hold h^(l); the final entry holds the softmax output.
    std::vector<Eigen::VectorXd> post_activations;
    Eigen::VectorXd logits;
    Eigen::VectorXd probabilities;
};

// Row-per-sample feature matrix with integer class labels.
struct LabeledBatch {
    Eigen::MatrixXd features;
    std::vector<int> labels;

    Eigen::Index size() const { return features.rows(); }
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    double loss = 0.0;  // mean cross-entropy over the batch
};

struct TrainResult {
    MlpModel model;
    std::vector<double> epoch_loss;
};

inline const std::vector<int> kDefaultHiddenSizes{150, 100, 50};

MlpModel init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed);

ForwardTrace forward(const MlpModel& model, const Eigen::VectorXd& x);

// Post-activation of hidden layer `layer` (1-based, h^(layer)).
Eigen::VectorXd embed(const MlpModel& model, const Eigen::VectorXd& x, int layer);

// Embeddings for every row of `x`, one row per sample.
Eigen::MatrixXd embed_rows(const MlpModel& model, const Eigen::MatrixXd& x, int layer);

// Softmax probabilities for every row of `x`, one row per sample.
Eigen::MatrixXd predict_proba(const MlpModel& model, const Eigen::MatrixXd& x);

std::vector<int> predict(const MlpModel& model, const Eigen::MatrixXd& x);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

Gradients gradients(const MlpModel& model, const LabeledBatch& batch);

double mean_loss(const MlpModel& model, const LabeledBatch& batch);

TrainResult train(const MlpModel& model, const LabeledBatch& data, const TrainConfig& cfg,
                  const FreezeSpec& freeze = {});

MlpModel expand_output(const MlpModel& model, int k, std::uint64_t seed);

std::string save_model(const MlpModel& model);
MlpModel load_model(const std::string& document);

void save_model_file(const MlpModel& model, const std::string& path);
MlpModel load_model_file(const std::string& path);

}  // namespace weldwatch
