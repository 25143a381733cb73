#pragma once

// Grouping of flagged samples for labeling. Each sample is mapped to its
// average cosine similarity against every known class (one entry per class),
// the vectors are z-scored per dimension, and a BIRCH clustering-feature tree
// groups them in a single pass.

#include "weldwatch/mlp.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace weldwatch {

struct CosineResult {
    double value = 0.0;
    bool zero_norm = false;  // an input had zero norm; value is 0 by convention
};

CosineResult cosine_checked(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SimilarityVector {
    std::string sample_id;
    Eigen::VectorXd s;
    bool zero_norm_warning = false;
};

// Unit-normalized reference embeddings for each known class.
class SimilaritySpace {
public:
    // class_embeddings[c] holds one embedding per row for known class c.
    explicit SimilaritySpace(std::vector<Eigen::MatrixXd> class_embeddings);

    static SimilaritySpace from_samples(const MlpModel& model, int layer, const LabeledBatch& known);

    int num_classes() const { return static_cast<int>(units_.size()); }
    SimilarityVector transform(const Eigen::VectorXd& embedding, std::string sample_id = {}) const;

private:
    std::vector<Eigen::MatrixXd> units_;     // rows normalized; zero rows stay zero
    std::vector<Eigen::Index> counts_;
};

// s_i(x): mean cosine between z(x) and the embeddings of known class i.
SimilarityVector similarity_vector(const Eigen::VectorXd& x, const MlpModel& model, int layer,
                                   const std::vector<Eigen::MatrixXd>& known_sets, std::string sample_id = {});

// Clustering feature: count, linear sum and sum of squared norms.
struct CFEntry {
    long long n = 0;
    Eigen::VectorXd ls;
    double ss = 0.0;

    static CFEntry of(const Eigen::VectorXd& point);
    CFEntry& operator+=(const CFEntry& other);
    friend CFEntry operator+(CFEntry a, const CFEntry& b) { return a += b; }

    Eigen::VectorXd centroid() const { return ls / static_cast<double>(n); }
    // RMS distance of the summarized points to their centroid, clamped at 0.
    double radius() const;
};

struct BirchOptions {
    double threshold = 2.0;
    int branching = 50;
    // Off by default: the leaf subclusters are the clusters. When set, leaf
    // subclusters are agglomerated (closest centroids first) to this count.
    std::optional<int> target_clusters;
    int representatives = 5;

    void validate() const;
};

// Height-balanced CF tree. Points are absorbed by the closest leaf
// subcluster when the merged radius stays within the threshold; nodes split
// when they exceed the branching factor.
class CFTree {
public:
    struct LeafEntry {
        CFEntry cf;
        std::vector<std::size_t> members;  // insertion indices absorbed here
    };

    CFTree(double threshold, int branching);
    ~CFTree();
    CFTree(CFTree&&) noexcept;
    CFTree& operator=(CFTree&&) noexcept;

    void insert(const Eigen::VectorXd& point);
    std::size_t size() const { return inserted_; }
    // Leaf subclusters in left-to-right order.
    std::vector<LeafEntry> leaves() const;
    int height() const;
    // Every non-leaf entry equals the sum of its child's entries.
    bool check_additivity(double tol) const;

    struct Node;

private:
    std::unique_ptr<Node> root_;
    double threshold_;
    int branching_;
    std::size_t inserted_ = 0;
};

struct Cluster {
    int cluster_id = 0;
    std::vector<std::size_t> members;       // indices into the clustered input
    std::vector<std::string> member_ids;
    Eigen::VectorXd centroid;
    double radius = 0.0;
    std::vector<std::string> representatives;
};

struct ClusterReport {
    std::vector<Cluster> clusters;
    std::vector<int> assignment;            // input index -> cluster_id
    std::vector<std::string> sample_ids;
    std::vector<Eigen::VectorXd> points;    // clustered (standardized) vectors
    std::optional<double> purity;

    const Cluster* find(int cluster_id) const;
};

// Per-dimension z-score (sample std, floored at 1e-8).
std::vector<Eigen::VectorXd> standardize_columns(const std::vector<Eigen::VectorXd>& vectors);

ClusterReport birch_fit(const std::vector<Eigen::VectorXd>& vectors, const BirchOptions& options = {},
                        std::vector<std::string> sample_ids = {});

// Sum over clusters of the majority-label count, divided by the total.
double purity(const ClusterReport& report, const std::map<std::string, std::string>& truth);
double purity(const std::vector<int>& assignment, const std::vector<std::string>& labels);

// min(m, |cluster|) members closest to the centroid; ties by sample id.
std::vector<std::string> representatives(const Cluster& cluster, const std::vector<Eigen::VectorXd>& points,
                                         const std::vector<std::string>& ids, int m);

// Similarity transform, standardization and BIRCH in one step.
struct FlaggedClustering {
    std::vector<SimilarityVector> similarities;  // raw, before standardization
    ClusterReport report;
};

FlaggedClustering cluster_flagged(const SimilaritySpace& space, const MlpModel& model, int layer,
                                  const Eigen::MatrixXd& flagged, const std::vector<std::string>& ids,
                                  const BirchOptions& options = {});

// sample_id,cluster_id,distance_to_centroid,is_representative
std::string cluster_assignments_csv(const ClusterReport& report);
// cluster_id,size,radius,representatives,c1..cC
std::string cluster_summary_csv(const ClusterReport& report);

}  // namespace weldwatch
