#include "weldwatch/detector.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/pca.hpp"
#include "weldwatch/textio.hpp"

#include <cmath>

namespace weldwatch {
Eigen::VectorXd ClassDetector::standardize(const Eigen::VectorXd& z) const {
    if (z.size() != mean.size())
        throw ShapeError("embedding has length " + std::to_string(z.size()) + ", detector expects " +
                         std::to_string(mean.size()));
    return (z - mean).cwiseQuotient(std);
}

Eigen::VectorXd ClassDetector::scores(const Eigen::VectorXd& z) const {
    return projection.transpose() * standardize(z);
}

bool ClassDetector::accepts(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd u = scores(z);
    for (Eigen::Index p = 0; p < u.size(); ++p)
        if (!(std::abs(u(p)) <= thresholds(p))) return false;
    return true;
}

int DetectorBank::embedding_dim() const {
    return detectors.empty() ? 0 : static_cast<int>(detectors.front().mean.size());
}

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Unknown: return "unknown";
        case Outcome::Known: return "known";
        case Outcome::SoftmaxResolved: return "softmax_resolved";
    }
    return "?";
}

Eigen::VectorXd three_sigma_thresholds(const Eigen::MatrixXd& scores) {
    if (scores.rows() < 2) throw ConfigError("thresholds need at least two score rows");
    const Eigen::RowVectorXd mean = scores.colwise().mean();
    const Eigen::MatrixXd centered = scores.rowwise() - mean;
    const Eigen::VectorXd var =
        centered.colwise().squaredNorm().transpose() / static_cast<double>(scores.rows() - 1);
    return 3.0 * var.cwiseSqrt();
}

int choose_components(const ComponentPolicy& policy, const Eigen::VectorXd& spectrum, Eigen::Index samples) {
    const Eigen::Index limit = std::min<Eigen::Index>(samples - 1, spectrum.size());
    if (limit < 1) return 0;
    if (policy.fixed_components > 0) return policy.fixed_components;
    if (!(policy.variance_fraction > 0.0 && policy.variance_fraction <= 1.0))
        throw ConfigError("variance fraction must lie in (0, 1]");
    if (policy.max_components < 1) throw ConfigError("component cap must be >= 1");
    const double total = spectrum.sum();
    if (!(total > 0.0)) return 0;
    // Components with numerically zero variance would get a zero bound.
    Eigen::Index rank = 0;
    while (rank < limit && spectrum(rank) > 1e-10 * spectrum(0)) ++rank;
    Eigen::Index r = 0;
    double acc = 0.0;
    while (r < rank && acc < policy.variance_fraction * total) acc += spectrum(r++);
    return static_cast<int>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(r, policy.max_components)));
}

ClassDetector fit_class_detector(const Eigen::MatrixXd& zc, int class_id, const ComponentPolicy& policy,
                                 const std::string& label) {
    const auto n = zc.rows();
    const std::string who = "class '" + label + "'";
    if (n < 2)
        throw FitError(who + " has " + std::to_string(n) + " training samples; at least 2 are required");
    if (!zc.allFinite()) throw DataError(who + ": non-finite embedding");

    ClassDetector det;
    det.class_id = class_id;
    det.mean = zc.colwise().mean().transpose();
    const Eigen::MatrixXd centered = zc.rowwise() - det.mean.transpose();
    det.std = (centered.colwise().squaredNorm().transpose() / static_cast<double>(n - 1)).cwiseSqrt();
    det.std = det.std.cwiseMax(kStdFloor);
    const Eigen::MatrixXd standardized = centered.array().rowwise() / det.std.transpose().array();

    const int r = choose_components(policy, covariance_spectrum(standardized), n);
    if (r > n - 1)
        throw FitError(who + " has " + std::to_string(n) + " samples, too few for " + std::to_string(r) +
                       " components");
    PcaFit fit;
    try {
        if (r < 1) throw ConfigError("zero covariance");
        fit = pca_fit(standardized, r);
    } catch (const ConfigError& e) {
        throw FitError(who + ": degenerate embeddings (" + e.what() + ")");
    }
    det.projection = fit.projection;
    det.thresholds = three_sigma_thresholds(standardized * fit.projection);
    if ((det.thresholds.array() <= 0.0).any()) throw FitError(who + ": zero-variance principal score");
    return det;
}

DetectorBank fit_detector(const MlpModel& model, const LabeledBatch& train, int layer,
                          const ComponentPolicy& policy) {
    if (train.size() == 0) throw DataError("detector training set is empty");
    if (static_cast<Eigen::Index>(train.labels.size()) != train.size())
        throw ShapeError("label count does not match sample count");
    const Eigen::MatrixXd z = embed_rows(model, train.features, layer);
    if (!z.allFinite()) throw DataError("non-finite embedding");

    DetectorBank bank;
    bank.embed_layer = layer;
    const int C = model.num_classes();
    for (int c = 0; c < C; ++c)
        bank.class_labels.push_back(model.class_labels.empty() ? "class_" + std::to_string(c)
                                                               : model.class_labels[static_cast<std::size_t>(c)]);
    for (int y : train.labels)
        if (y < 0 || y >= C) throw DataError("label " + std::to_string(y) + " outside model classes");

    for (int c = 0; c < C; ++c) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < train.size(); ++i)
            if (train.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
        Eigen::MatrixXd zc(static_cast<Eigen::Index>(rows.size()), z.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) zc.row(static_cast<Eigen::Index>(i)) = z.row(rows[i]);
        bank.detectors.push_back(fit_class_detector(zc, c, policy, bank.class_labels[static_cast<std::size_t>(c)]));
    }
    return bank;
}

std::vector<bool> indicator_from_embedding(const DetectorBank& bank, const Eigen::VectorXd& z) {
    std::vector<bool> out;
    out.reserve(bank.detectors.size());
    for (const auto& det : bank.detectors) out.push_back(det.accepts(z));
    return out;
}

std::vector<bool> indicator(const DetectorBank& bank, const MlpModel& model, const Eigen::VectorXd& x) {
    return indicator_from_embedding(bank, embed(model, x, bank.embed_layer));
}

Decision decide(const std::vector<bool>& ind, const Eigen::VectorXd& softmax) {
    if (static_cast<Eigen::Index>(ind.size()) != softmax.size())
        throw ShapeError("indicator and softmax lengths differ");
    Decision d;
    d.indicator = ind;
    int count = 0;
    int hit = -1;
    for (std::size_t c = 0; c < ind.size(); ++c)
        if (ind[c]) {
            ++count;
            hit = static_cast<int>(c);
        }
    if (count == 0) {
        d.outcome = Outcome::Unknown;
    } else if (count == 1) {
        d.outcome = Outcome::Known;
        d.assigned_class = hit;
    } else {
        d.outcome = Outcome::SoftmaxResolved;
        d.softmax = softmax;
        Eigen::Index best = 0;
        softmax.maxCoeff(&best);  // lowest index among ties
        d.assigned_class = static_cast<int>(best);
    }
    return d;
}

Decision detect(const DetectorBank& bank, const MlpModel& model, const Eigen::VectorXd& x) {
    if (bank.num_classes() != model.num_classes())
        throw ShapeError("detector bank covers " + std::to_string(bank.num_classes()) + " classes, model outputs " +
                         std::to_string(model.num_classes()));
    const ForwardTrace trace = forward(model, x);
    const auto& z = trace.post_activations[static_cast<std::size_t>(bank.embed_layer - 1)];
    return decide(indicator_from_embedding(bank, z), trace.probabilities);
}

std::vector<Decision> detect_rows(const DetectorBank& bank, const MlpModel& model, const Eigen::MatrixXd& x) {
    std::vector<Decision> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(detect(bank, model, x.row(i).transpose()));
    return out;
}

DetectionMetrics evaluate_decisions(const std::vector<Decision>& decisions, const std::vector<int>& truth) {
    if (decisions.empty()) throw DataError("no decisions to evaluate");
    if (decisions.size() != truth.size()) throw ShapeError("decision and truth counts differ");
    DetectionMetrics m;
    m.total = decisions.size();
    std::size_t flagged_unknown = 0, flagged_known = 0, correct_known = 0, correct = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const Decision& d = decisions[i];
        ++m.outcome_counts[static_cast<std::size_t>(d.outcome)];
        if (truth[i] == kUnknownTruth) {
            ++m.unknown;
            if (d.outcome == Outcome::Unknown) {
                ++flagged_unknown;
                ++correct;
            }
        } else {
            ++m.known;
            if (d.outcome == Outcome::Unknown) {
                ++flagged_known;
            } else if (d.assigned_class == truth[i]) {
                ++correct_known;
                ++correct;
            }
        }
    }
    if (m.unknown > 0) m.unknown_recall = static_cast<double>(flagged_unknown) / static_cast<double>(m.unknown);
    if (m.known > 0) {
        m.false_alarm_rate = static_cast<double>(flagged_known) / static_cast<double>(m.known);
        m.known_accuracy = static_cast<double>(correct_known) / static_cast<double>(m.known);
    }
    m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    return m;
}

DetectionMetrics evaluate_detection(const DetectorBank& bank, const MlpModel& model, const Eigen::MatrixXd& x,
                                    const std::vector<int>& truth) {
    if (x.rows() == 0) throw DataError("test set is empty");
    return evaluate_decisions(detect_rows(bank, model, x), truth);
}

std::string save_bank(const DetectorBank& bank) {
    textio::Writer w("weldwatch-detector 1");
    w.key("embed_layer").value(static_cast<long long>(bank.embed_layer)).endl();
    w.key("classes").value(static_cast<long long>(bank.detectors.size())).endl();
    w.key("labels").value(static_cast<long long>(bank.class_labels.size()));
    for (const auto& l : bank.class_labels) w.quoted(l);
    w.endl();
    for (const auto& det : bank.detectors) {
        w.key("class").value(static_cast<long long>(det.class_id)).endl();
        w.key("components").value(static_cast<long long>(det.components())).endl();
        w.vector("mean", det.mean);
        w.vector("std", det.std);
        w.matrix("projection", det.projection);
        w.vector("thresholds", det.thresholds);
    }
    return std::move(w).finish();
}

DetectorBank load_bank(const std::string& document) {
    textio::Reader r(document, "weldwatch-detector 1");
    DetectorBank bank;
    r.expect("embed_layer");
    bank.embed_layer = static_cast<int>(r.integer());
    r.expect("classes");
    const auto count = r.integer();
    r.expect("labels");
    const auto nlabels = r.integer();
    if (nlabels != count) throw RestoreError("label count disagrees with class count");
    for (long long i = 0; i < nlabels; ++i) bank.class_labels.push_back(r.quoted());
    for (long long c = 0; c < count; ++c) {
        ClassDetector det;
        r.expect("class");
        det.class_id = static_cast<int>(r.integer());
        if (det.class_id != c) throw RestoreError("class blocks out of order");
        r.expect("components");
        const auto comps = r.integer();
        det.mean = r.vector("mean");
        det.std = r.vector("std");
        det.projection = r.matrix("projection");
        det.thresholds = r.vector("thresholds");
        const auto q = det.mean.size();
        if (det.std.size() != q || det.projection.rows() != q || det.projection.cols() != comps ||
            det.thresholds.size() != comps || comps < 1)
            throw RestoreError("class " + std::to_string(c) + " block has inconsistent shapes");
        if (!bank.detectors.empty() && q != bank.detectors.front().mean.size())
            throw RestoreError("detectors disagree on embedding dimension");
        bank.detectors.push_back(std::move(det));
    }
    if (!r.at_end()) throw RestoreError("trailing content after final class block");
    return bank;
}

void save_bank_file(const DetectorBank& bank, const std::string& path) {
    textio::write_file(path, save_bank(bank));
}

DetectorBank load_bank_file(const std::string& path) {
    return load_bank(textio::read_file(path));
}

}  // namespace weldwatch
