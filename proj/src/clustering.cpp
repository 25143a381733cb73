#include "weldwatch/clustering.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace weldwatch {

CosineResult cosine_checked(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeError("cosine of vectors with different lengths");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return {0.0, true};
    return {std::clamp(a.dot(b) / (na * nb), -1.0, 1.0), false};
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return cosine_checked(a, b).value;
}

SimilaritySpace::SimilaritySpace(std::vector<Eigen::MatrixXd> class_embeddings) {
    if (class_embeddings.empty()) throw ConfigError("similarity space needs at least one known class");
    const auto q = class_embeddings.front().cols();
    for (std::size_t c = 0; c < class_embeddings.size(); ++c) {
        Eigen::MatrixXd& m = class_embeddings[c];
        if (m.rows() == 0) throw ConfigError("known class " + std::to_string(c) + " has no samples");
        if (m.cols() != q) throw ShapeError("known classes disagree on embedding length");
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double n = m.row(i).norm();
            if (n > 0.0) m.row(i) /= n;
        }
        counts_.push_back(m.rows());
        units_.push_back(std::move(m));
    }
}

SimilaritySpace SimilaritySpace::from_samples(const MlpModel& model, int layer, const LabeledBatch& known) {
    const Eigen::MatrixXd z = embed_rows(model, known.features, layer);
    const int C = model.num_classes();
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(C));
    for (Eigen::Index i = 0; i < known.size(); ++i) {
        const int y = known.labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= C) throw DataError("known sample label outside model classes");
        rows[static_cast<std::size_t>(y)].push_back(i);
    }
    std::vector<Eigen::MatrixXd> sets;
    for (const auto& r : rows) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), z.cols());
        for (std::size_t i = 0; i < r.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = z.row(r[i]);
        sets.push_back(std::move(m));
    }
    return SimilaritySpace(std::move(sets));
}

SimilarityVector SimilaritySpace::transform(const Eigen::VectorXd& embedding, std::string sample_id) const {
    if (embedding.size() != units_.front().cols()) throw ShapeError("embedding length disagrees with known classes");
    SimilarityVector out;
    out.sample_id = std::move(sample_id);
    out.s.resize(num_classes());
    const double n = embedding.norm();
    if (n == 0.0) {
        out.s.setZero();
        out.zero_norm_warning = true;
        return out;
    }
    const Eigen::VectorXd unit = embedding / n;
    for (int c = 0; c < num_classes(); ++c) {
        const auto& m = units_[static_cast<std::size_t>(c)];
        Eigen::VectorXd dots = (m * unit).cwiseMax(-1.0).cwiseMin(1.0);
        if ((m.rowwise().squaredNorm().array() == 0.0).any()) out.zero_norm_warning = true;
        out.s(c) = dots.sum() / static_cast<double>(counts_[static_cast<std::size_t>(c)]);
    }
    return out;
}

SimilarityVector similarity_vector(const Eigen::VectorXd& x, const MlpModel& model, int layer,
                                   const std::vector<Eigen::MatrixXd>& known_sets, std::string sample_id) {
    std::vector<Eigen::MatrixXd> embedded;
    for (const auto& set : known_sets) {
        if (set.rows() == 0) throw ConfigError("known class set is empty");
        embedded.push_back(embed_rows(model, set, layer));
    }
    return SimilaritySpace(std::move(embedded)).transform(embed(model, x, layer), std::move(sample_id));
}

CFEntry CFEntry::of(const Eigen::VectorXd& point) {
    return {1, point, point.squaredNorm()};
}

CFEntry& CFEntry::operator+=(const CFEntry& other) {
    if (n == 0) return *this = other;
    n += other.n;
    ls += other.ls;
    ss += other.ss;
    return *this;
}

double CFEntry::radius() const {
    const double r2 = ss / static_cast<double>(n) - centroid().squaredNorm();
    return r2 > 0.0 ? std::sqrt(r2) : 0.0;
}

void BirchOptions::validate() const {
    if (!(threshold > 0.0)) throw ConfigError("BIRCH threshold must be > 0");
    if (branching < 2) throw ConfigError("BIRCH branching factor must be >= 2");
    if (target_clusters && *target_clusters < 1) throw ConfigError("target cluster count must be >= 1");
    if (representatives < 1) throw ConfigError("representative count must be >= 1");
}

struct CFTree::Node {
    bool leaf = true;
    struct Entry {
        CFEntry cf;
        std::unique_ptr<Node> child;
        std::vector<std::size_t> members;
    };
    std::vector<Entry> entries;

    std::size_t closest(const Eigen::VectorXd& p) const {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const double d = (entries[i].cf.centroid() - p).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    CFEntry total() const {
        CFEntry t;
        for (const auto& e : entries) t += e.cf;
        return t;
    }
};

namespace {

using Node = CFTree::Node;

// Splits an overfull node around its two farthest entries.
std::pair<std::unique_ptr<Node>, std::unique_ptr<Node>> split_node(Node& node) {
    const auto& es = node.entries;
    std::size_t a = 0, b = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < es.size(); ++i)
        for (std::size_t j = i + 1; j < es.size(); ++j) {
            const double d = (es[i].cf.centroid() - es[j].cf.centroid()).squaredNorm();
            if (d > far) {
                far = d;
                a = i;
                b = j;
            }
        }
    auto left = std::make_unique<Node>();
    auto right = std::make_unique<Node>();
    left->leaf = right->leaf = node.leaf;
    const Eigen::VectorXd ca = es[a].cf.centroid();
    const Eigen::VectorXd cb = es[b].cf.centroid();
    for (std::size_t i = 0; i < node.entries.size(); ++i) {
        auto& e = node.entries[i];
        const bool to_left = i == a || (i != b && (e.cf.centroid() - ca).squaredNorm() <=
                                                      (e.cf.centroid() - cb).squaredNorm());
        (to_left ? left : right)->entries.push_back(std::move(e));
    }
    node.entries.clear();
    return {std::move(left), std::move(right)};
}

// Returns a split pair when `node` overflowed, else nulls.
std::pair<std::unique_ptr<Node>, std::unique_ptr<Node>> insert_into(Node& node, const Eigen::VectorXd& p,
                                                                    std::size_t index, double threshold,
                                                                    int branching) {
    const CFEntry point = CFEntry::of(p);
    if (node.entries.empty()) {
        node.entries.push_back({point, nullptr, {index}});
        return {};
    }
    const std::size_t at = node.closest(p);
    if (node.leaf) {
        auto& e = node.entries[at];
        const CFEntry merged = e.cf + point;
        if (merged.radius() <= threshold) {
            e.cf = merged;
            e.members.push_back(index);
        } else {
            node.entries.push_back({point, nullptr, {index}});
        }
    } else {
        auto& e = node.entries[at];
        auto [l, r] = insert_into(*e.child, p, index, threshold, branching);
        if (l) {
            Node::Entry le{l->total(), std::move(l), {}};
            Node::Entry re{r->total(), std::move(r), {}};
            node.entries[at] = std::move(le);
            node.entries.insert(node.entries.begin() + static_cast<std::ptrdiff_t>(at) + 1, std::move(re));
        } else {
            e.cf += point;
        }
    }
    if (static_cast<int>(node.entries.size()) > branching) return split_node(node);
    return {};
}

void collect_leaves(const Node& node, std::vector<CFTree::LeafEntry>& out) {
    for (const auto& e : node.entries) {
        if (node.leaf)
            out.push_back({e.cf, e.members});
        else
            collect_leaves(*e.child, out);
    }
}

bool additive(const Node& node, double tol) {
    if (node.leaf) return true;
    for (const auto& e : node.entries) {
        const CFEntry sum = e.child->total();
        if (sum.n != e.cf.n || (sum.ls - e.cf.ls).cwiseAbs().maxCoeff() > tol ||
            std::abs(sum.ss - e.cf.ss) > tol * std::max(1.0, std::abs(sum.ss)))
            return false;
        if (!additive(*e.child, tol)) return false;
    }
    return true;
}

}  // namespace

CFTree::CFTree(double threshold, int branching)
    : root_(std::make_unique<Node>()), threshold_(threshold), branching_(branching) {
    BirchOptions opts;
    opts.threshold = threshold;
    opts.branching = branching;
    opts.validate();
}

CFTree::~CFTree() = default;
CFTree::CFTree(CFTree&&) noexcept = default;
CFTree& CFTree::operator=(CFTree&&) noexcept = default;

void CFTree::insert(const Eigen::VectorXd& point) {
    if (!point.allFinite()) throw DataError("BIRCH input contains non-finite values");
    if (!root_->entries.empty() && root_->entries.front().cf.ls.size() != point.size())
        throw ShapeError("BIRCH input vectors differ in length");
    auto [l, r] = insert_into(*root_, point, inserted_++, threshold_, branching_);
    if (l) {
        auto root = std::make_unique<Node>();
        root->leaf = false;
        root->entries.push_back({l->total(), std::move(l), {}});
        root->entries.push_back({r->total(), std::move(r), {}});
        root_ = std::move(root);
    }
}

std::vector<CFTree::LeafEntry> CFTree::leaves() const {
    std::vector<LeafEntry> out;
    collect_leaves(*root_, out);
    return out;
}

int CFTree::height() const {
    int h = 1;
    for (const Node* n = root_.get(); !n->leaf; n = n->entries.front().child.get()) ++h;
    return h;
}

bool CFTree::check_additivity(double tol) const {
    return additive(*root_, tol);
}

const Cluster* ClusterReport::find(int cluster_id) const {
    for (const auto& c : clusters)
        if (c.cluster_id == cluster_id) return &c;
    return nullptr;
}

std::vector<Eigen::VectorXd> standardize_columns(const std::vector<Eigen::VectorXd>& vectors) {
    if (vectors.empty()) return {};
    const auto n = static_cast<double>(vectors.size());
    const auto dim = vectors.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto& v : vectors) mean += v;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (const auto& v : vectors) var += (v - mean).cwiseAbs2();
    Eigen::VectorXd sd = Eigen::VectorXd::Ones(dim);
    if (vectors.size() > 1) sd = (var / (n - 1.0)).cwiseSqrt();
    sd = sd.cwiseMax(1e-8);
    std::vector<Eigen::VectorXd> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.push_back((v - mean).cwiseQuotient(sd));
    return out;
}

namespace {

// Merges the closest pair of centroids until `target` groups remain.
std::vector<CFEntry> agglomerate(std::vector<CFEntry> groups, int target) {
    while (static_cast<int>(groups.size()) > target) {
        std::size_t a = 0, b = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < groups.size(); ++i)
            for (std::size_t j = i + 1; j < groups.size(); ++j) {
                const double d = (groups[i].centroid() - groups[j].centroid()).squaredNorm();
                if (d < best) {
                    best = d;
                    a = i;
                    b = j;
                }
            }
        groups[a] += groups[b];
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
    }
    return groups;
}

}  // namespace

ClusterReport birch_fit(const std::vector<Eigen::VectorXd>& vectors, const BirchOptions& options,
                        std::vector<std::string> sample_ids) {
    options.validate();
    if (vectors.empty()) throw DataError("nothing to cluster");
    if (sample_ids.empty())
        for (std::size_t i = 0; i < vectors.size(); ++i) sample_ids.push_back(std::to_string(i));
    if (sample_ids.size() != vectors.size()) throw ShapeError("sample id count differs from vector count");

    CFTree tree(options.threshold, options.branching);
    for (const auto& v : vectors) tree.insert(v);

    std::vector<CFEntry> groups;
    for (const auto& leaf : tree.leaves()) groups.push_back(leaf.cf);
    if (options.target_clusters) groups = agglomerate(std::move(groups), *options.target_clusters);

    std::vector<Eigen::VectorXd> centroids;
    for (const auto& g : groups) centroids.push_back(g.centroid());

    std::vector<std::vector<std::size_t>> members(centroids.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = (vectors[i] - centroids[c]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        members[best].push_back(i);
    }

    ClusterReport report;
    report.sample_ids = sample_ids;
    report.points = vectors;
    report.assignment.assign(vectors.size(), -1);
    for (const auto& m : members) {
        if (m.empty()) continue;
        Cluster c;
        c.cluster_id = static_cast<int>(report.clusters.size());
        c.members = m;
        c.centroid = Eigen::VectorXd::Zero(vectors.front().size());
        for (std::size_t i : m) {
            c.centroid += vectors[i];
            c.member_ids.push_back(sample_ids[i]);
            report.assignment[i] = c.cluster_id;
        }
        c.centroid /= static_cast<double>(m.size());
        double sq = 0.0;
        for (std::size_t i : m) sq += (vectors[i] - c.centroid).squaredNorm();
        c.radius = std::sqrt(sq / static_cast<double>(m.size()));
        c.representatives = representatives(c, vectors, sample_ids, options.representatives);
        report.clusters.push_back(std::move(c));
    }
    return report;
}

double purity(const std::vector<int>& assignment, const std::vector<std::string>& labels) {
    if (assignment.size() != labels.size()) throw DataError("purity needs one truth label per sample");
    if (assignment.empty()) throw DataError("purity of an empty clustering");
    std::map<int, std::map<std::string, std::size_t>> counts;
    for (std::size_t i = 0; i < assignment.size(); ++i) ++counts[assignment[i]][labels[i]];
    std::size_t majority = 0;
    for (const auto& [cluster, by_label] : counts) {
        std::size_t best = 0;
        for (const auto& [label, n] : by_label) best = std::max(best, n);
        majority += best;
    }
    return static_cast<double>(majority) / static_cast<double>(assignment.size());
}

double purity(const ClusterReport& report, const std::map<std::string, std::string>& truth) {
    std::vector<std::string> labels;
    for (const auto& id : report.sample_ids) {
        const auto it = truth.find(id);
        if (it == truth.end()) throw DataError("no truth label for sample '" + id + "'");
        labels.push_back(it->second);
    }
    return purity(report.assignment, labels);
}

std::vector<std::string> representatives(const Cluster& cluster, const std::vector<Eigen::VectorXd>& points,
                                         const std::vector<std::string>& ids, int m) {
    std::vector<std::pair<double, std::string>> ranked;
    for (std::size_t i : cluster.members) ranked.emplace_back((points[i] - cluster.centroid).norm(), ids[i]);
    std::sort(ranked.begin(), ranked.end());
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(std::max(m, 0)), ranked.size());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < keep; ++i) out.push_back(ranked[i].second);
    return out;
}

FlaggedClustering cluster_flagged(const SimilaritySpace& space, const MlpModel& model, int layer,
                                  const Eigen::MatrixXd& flagged, const std::vector<std::string>& ids,
                                  const BirchOptions& options) {
    if (flagged.rows() == 0) throw DataError("no flagged samples to cluster");
    if (static_cast<Eigen::Index>(ids.size()) != flagged.rows()) throw ShapeError("one id per flagged sample required");
    const Eigen::MatrixXd z = embed_rows(model, flagged, layer);
    FlaggedClustering out;
    std::vector<Eigen::VectorXd> raw;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        out.similarities.push_back(space.transform(z.row(i).transpose(), ids[static_cast<std::size_t>(i)]));
        raw.push_back(out.similarities.back().s);
    }
    out.report = birch_fit(standardize_columns(raw), options, ids);
    return out;
}

std::string cluster_assignments_csv(const ClusterReport& report) {
    std::string out = "sample_id,cluster_id,distance_to_centroid,is_representative\n";
    for (std::size_t i = 0; i < report.sample_ids.size(); ++i) {
        const Cluster* c = report.find(report.assignment[i]);
        const double dist = (report.points[i] - c->centroid).norm();
        const bool rep = std::find(c->representatives.begin(), c->representatives.end(), report.sample_ids[i]) !=
                         c->representatives.end();
        out += report.sample_ids[i] + "," + std::to_string(c->cluster_id) + "," + textio::format_real(dist) + "," +
               (rep ? "1" : "0") + "\n";
    }
    return out;
}

std::string cluster_summary_csv(const ClusterReport& report) {
    std::string out = "cluster_id,size,radius,representatives";
    const auto dim = report.clusters.empty() ? 0 : report.clusters.front().centroid.size();
    for (Eigen::Index j = 0; j < dim; ++j) out += ",c" + std::to_string(j + 1);
    out += "\n";
    for (const auto& c : report.clusters) {
        std::string reps;
        for (const auto& r : c.representatives) reps += (reps.empty() ? "" : ";") + r;
        out += std::to_string(c.cluster_id) + "," + std::to_string(c.members.size()) + "," +
               textio::format_real(c.radius) + "," + reps;
        for (Eigen::Index j = 0; j < dim; ++j) out += "," + textio::format_real(c.centroid(j));
        out += "\n";
    }
    return out;
}

}  // namespace weldwatch
