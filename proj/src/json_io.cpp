#include "weldwatch/json_io.hpp"

#include "weldwatch/error.hpp"

namespace weldwatch::json_io {

json to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    if (!j.is_array()) throw DataError("expected a numeric array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw DataError("expected a numeric array");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

json to_json(const Decision& d, const std::vector<std::string>& labels) {
    json out;
    out["indicator"] = d.indicator;
    out["outcome"] = outcome_name(d.outcome);
    out["class_id"] = d.assigned_class;
    if (d.assigned_class >= 0 && d.assigned_class < static_cast<int>(labels.size()))
        out["label"] = labels[static_cast<std::size_t>(d.assigned_class)];
    else
        out["label"] = nullptr;
    if (d.softmax) out["softmax"] = to_json(*d.softmax);
    return out;
}

json to_json(const DetectionMetrics& m) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"total", m.total},
            {"known", m.known},
            {"unknown", m.unknown},
            {"unknown_recall", opt(m.unknown_recall)},
            {"false_alarm_rate", opt(m.false_alarm_rate)},
            {"known_accuracy", opt(m.known_accuracy)},
            {"overall_accuracy", m.overall_accuracy},
            {"outcome_counts",
             {{"unknown", m.outcome_counts[0]}, {"known", m.outcome_counts[1]}, {"softmax_resolved", m.outcome_counts[2]}}}};
}

DetectionMetrics metrics_from_json(const json& j) {
    auto opt = [](const json& v) { return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()}; };
    DetectionMetrics m;
    m.total = j.at("total").get<std::size_t>();
    m.known = j.at("known").get<std::size_t>();
    m.unknown = j.at("unknown").get<std::size_t>();
    m.unknown_recall = opt(j.at("unknown_recall"));
    m.false_alarm_rate = opt(j.at("false_alarm_rate"));
    m.known_accuracy = opt(j.at("known_accuracy"));
    m.overall_accuracy = j.at("overall_accuracy").get<double>();
    const auto& c = j.at("outcome_counts");
    m.outcome_counts = {c.at("unknown").get<std::size_t>(), c.at("known").get<std::size_t>(),
                        c.at("softmax_resolved").get<std::size_t>()};
    return m;
}

json to_json(const ClusterReport& r) {
    json clusters = json::array();
    for (const auto& c : r.clusters)
        clusters.push_back({{"cluster_id", c.cluster_id},
                            {"members", c.members},
                            {"member_ids", c.member_ids},
                            {"size", c.members.size()},
                            {"centroid", to_json(c.centroid)},
                            {"radius", c.radius},
                            {"representatives", c.representatives}});
    json points = json::array();
    for (const auto& p : r.points) points.push_back(to_json(p));
    json out{{"clusters", clusters}, {"assignment", r.assignment}, {"sample_ids", r.sample_ids}, {"points", points}};
    out["purity"] = r.purity ? json(*r.purity) : json(nullptr);
    return out;
}

ClusterReport report_from_json(const json& j) {
    ClusterReport r;
    for (const auto& c : j.at("clusters")) {
        Cluster cl;
        cl.cluster_id = c.at("cluster_id").get<int>();
        cl.members = c.at("members").get<std::vector<std::size_t>>();
        cl.member_ids = c.at("member_ids").get<std::vector<std::string>>();
        cl.centroid = vector_from_json(c.at("centroid"));
        cl.radius = c.at("radius").get<double>();
        cl.representatives = c.at("representatives").get<std::vector<std::string>>();
        r.clusters.push_back(std::move(cl));
    }
    r.assignment = j.at("assignment").get<std::vector<int>>();
    r.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    for (const auto& p : j.at("points")) r.points.push_back(vector_from_json(p));
    if (!j.at("purity").is_null()) r.purity = j.at("purity").get<double>();
    return r;
}

json to_json(const SimilarityVector& s) {
    return {{"sample_id", s.sample_id}, {"s", to_json(s.s)}, {"zero_norm_warning", s.zero_norm_warning}};
}

SimilarityVector similarity_from_json(const json& j) {
    return {j.at("sample_id").get<std::string>(), vector_from_json(j.at("s")), j.at("zero_norm_warning").get<bool>()};
}

json to_json(const SampleRecord& r) {
    json out{{"sample_id", r.sample_id}, {"features", to_json(r.features)}};
    out["label"] = r.label ? json(*r.label) : json(nullptr);
    return out;
}

SampleRecord record_from_json(const json& j) {
    if (!j.is_object()) throw DataError("sample must be a JSON object");
    SampleRecord r;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) throw DataError("sample needs a string sample_id");
    r.sample_id = j["sample_id"].get<std::string>();
    if (!j.contains("features")) throw DataError("sample '" + r.sample_id + "' has no features");
    r.features = vector_from_json(j["features"]);
    if (!r.features.allFinite()) throw DataError("sample '" + r.sample_id + "' has non-finite features");
    if (j.contains("label") && j["label"].is_string() && !j["label"].get<std::string>().empty())
        r.label = j["label"].get<std::string>();
    return r;
}

}  // namespace weldwatch::json_io
