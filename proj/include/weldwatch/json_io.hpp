#pragma once

// JSON views of library values for the HTTP API and persisted state.

#include "weldwatch/clustering.hpp"
#include "weldwatch/dataset.hpp"
#include "weldwatch/detector.hpp"

#include "json.hpp"

namespace weldwatch::json_io {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

json to_json(const Decision& d, const std::vector<std::string>& labels);
json to_json(const DetectionMetrics& m);
DetectionMetrics metrics_from_json(const json& j);

json to_json(const ClusterReport& r);
ClusterReport report_from_json(const json& j);

json to_json(const SimilarityVector& s);
SimilarityVector similarity_from_json(const json& j);

json to_json(const SampleRecord& r);
// Accepts {"sample_id", "features": [...], "label"?}.
SampleRecord record_from_json(const json& j);

}  // namespace weldwatch::json_io
