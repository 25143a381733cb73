#include "weldwatch/http_api.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/json_io.hpp"

#include "httplib.h"

#include <algorithm>

namespace weldwatch {
using json_io::json;

namespace {

std::string token_of(const json& body) {
    if (!body.contains("token") || body["token"].is_null()) return {};
    if (!body["token"].is_string()) throw RequestError("token must be a string");
    return body["token"].get<std::string>();
}

std::optional<long long> expected_of(const json& body) {
    if (!body.contains("expected_revision") || body["expected_revision"].is_null()) return std::nullopt;
    if (!body["expected_revision"].is_number_integer()) throw RequestError("expected_revision must be an integer");
    return body["expected_revision"].get<long long>();
}

template <class T>
void read_opt(const json& body, const char* key, T& out) {
    if (!body.contains(key) || body[key].is_null()) return;
    try {
        out = body[key].get<T>();
    } catch (const json::exception&) {
        throw RequestError(std::string("field '") + key + "' has the wrong type");
    }
}

UpdateKnobs knobs_from(const json& body, UpdateKnobs knobs) {
    read_opt(body, "shots_per_class", knobs.shots_per_class);
    read_opt(body, "include_known_replay", knobs.include_known_replay);
    if (body.contains("freeze") && !body["freeze"].is_null()) {
        std::vector<int> layers;
        read_opt(body, "freeze", layers);
        knobs.freeze.frozen_layers = std::set<int>(layers.begin(), layers.end());
    }
    read_opt(body, "epochs", knobs.train.epochs);
    read_opt(body, "learning_rate", knobs.train.learning_rate);
    read_opt(body, "batch_size", knobs.train.batch_size);
    read_opt(body, "seed", knobs.seed);
    read_opt(body, "variance_fraction", knobs.policy.variance_fraction);
    read_opt(body, "max_components", knobs.policy.max_components);
    read_opt(body, "fixed_components", knobs.policy.fixed_components);
    knobs.train.validate();
    return knobs;
}

Dataset batch_from(const json& body, const MonitorState& state) {
    if (!body.contains("samples") || !body["samples"].is_array()) throw RequestError("body needs a 'samples' array");
    Dataset ds;
    ds.feature_names = state.labeled.feature_names;
    for (const auto& s : body["samples"]) ds.add(json_io::record_from_json(s));
    return ds;
}

json summary(const MonitorState& s) {
    return {{"revision", s.revision},
            {"class_labels", s.label_map()},
            {"num_classes", s.model.num_classes()},
            {"flagged_count", s.flagged_pool.size()},
            {"labeled_count", s.labeled.size()},
            {"num_clusters", s.cluster_report ? s.cluster_report->clusters.size() : 0}};
}

}  // namespace

MonitorService::MonitorService(MonitorState initial, ServiceOptions options) : options_(std::move(options)) {
    initial.validate();
    if (!options_.state_dir.empty()) {
        const auto revs = list_revisions(options_.state_dir);
        // Never reuse a revision number already on disk, even after a rollback.
        if (!revs.empty() && revs.back() > initial.revision) {
            if (std::find(revs.begin(), revs.end(), initial.revision) == revs.end()) persist(initial, options_.state_dir);
            initial.revision = revs.back();
        } else if (revs.empty() || revs.back() < initial.revision) {
            persist(initial, options_.state_dir);
        }
    }
    current_ = std::make_shared<const MonitorState>(std::move(initial));
}

std::shared_ptr<const MonitorState> MonitorService::snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
}

json MonitorService::mutate(const std::string& token, std::optional<long long> expected_revision,
                            const std::function<std::pair<MonitorState, json>(const MonitorState&)>& fn) {
    std::lock_guard writer(write_mutex_);
    const auto base = snapshot();
    if (!token.empty()) {
        const auto hit = base->token_responses.find(token);
        if (hit != base->token_responses.end()) {
            json cached = json::parse(hit->second);
            cached["replayed"] = true;
            return cached;
        }
    }
    if (expected_revision && *expected_revision != base->revision)
        throw ConflictError("stale revision " + std::to_string(*expected_revision) + "; current revision is " +
                            std::to_string(base->revision));

    auto [next, response] = fn(*base);
    if (next.revision <= base->revision) next.revision = base->revision + 1;
    response["revision"] = next.revision;
    if (!token.empty()) next.token_responses[token] = response.dump();
    if (!options_.state_dir.empty()) persist(next, options_.state_dir);
    {
        std::lock_guard lock(read_mutex_);
        current_ = std::make_shared<const MonitorState>(std::move(next));
    }
    response["replayed"] = false;
    return response;
}

json MonitorService::detect(const json& body) {
    return mutate(token_of(body), expected_of(body), [&](const MonitorState& s) {
        const Dataset batch = batch_from(body, s);
        DetectOutcome out = detect_batch(s, batch);
        json decisions = json::array();
        for (std::size_t i = 0; i < batch.size(); ++i) {
            json d = json_io::to_json(out.decisions[i], s.label_map());
            d["sample_id"] = batch.records[i].sample_id;
            decisions.push_back(std::move(d));
        }
        json response{{"decisions", decisions},
                      {"metrics", out.metrics ? json_io::to_json(*out.metrics) : json(nullptr)},
                      {"flagged_count", out.state.flagged_pool.size()}};
        return std::make_pair(std::move(out.state), std::move(response));
    });
}

json MonitorService::cluster(const json& body) {
    BirchOptions birch = options_.birch;
    read_opt(body, "threshold", birch.threshold);
    read_opt(body, "branching", birch.branching);
    read_opt(body, "representatives", birch.representatives);
    if (body.contains("target_clusters") && !body["target_clusters"].is_null()) {
        int k = 0;
        read_opt(body, "target_clusters", k);
        birch.target_clusters = k;
    }
    birch.validate();
    return mutate(token_of(body), expected_of(body), [&](const MonitorState& s) {
        MonitorState next = cluster_pool(s, birch);
        json response{{"num_clusters", next.cluster_report->clusters.size()},
                      {"purity", next.cluster_report->purity ? json(*next.cluster_report->purity) : json(nullptr)}};
        return std::make_pair(std::move(next), std::move(response));
    });
}

json MonitorService::labels(const json& body) {
    if (!body.contains("assignments") || !body["assignments"].is_array())
        throw RequestError("body needs an 'assignments' array");
    std::vector<LabelAssignment> assignments;
    for (const auto& a : body["assignments"]) {
        if (!a.is_object() || !a.contains("cluster_id") || !a["cluster_id"].is_number_integer())
            throw RequestError("each assignment needs an integer cluster_id");
        LabelAssignment la;
        la.cluster_id = a["cluster_id"].get<int>();
        read_opt(a, "label", la.label);
        read_opt(a, "overrides", la.overrides);
        assignments.push_back(std::move(la));
    }
    const UpdateKnobs knobs = knobs_from(body.value("knobs", json::object()), options_.knobs);
    return mutate(token_of(body), expected_of(body), [&](const MonitorState& s) {
        MonitorState next = apply_labels(s, assignments, knobs);
        json response = summary(next);
        response["added_classes"] = next.model.num_classes() - s.model.num_classes();
        return std::make_pair(std::move(next), std::move(response));
    });
}

json MonitorService::update(const json& body) {
    const UpdateKnobs knobs = knobs_from(body, options_.knobs);
    return mutate(token_of(body), expected_of(body), [&](const MonitorState& s) {
        MonitorState next = update_in_place(s, knobs);
        json response = summary(next);
        return std::make_pair(std::move(next), std::move(response));
    });
}

json MonitorService::state_view() const { return summary(*snapshot()); }

json MonitorService::clusters_view() const {
    const auto s = snapshot();
    if (!s->cluster_report) throw RequestError("no clusters available; POST /cluster first");
    json out = json_io::to_json(*s->cluster_report);
    json sims = json::array();
    for (const auto& v : s->similarities) sims.push_back(json_io::to_json(v));
    out["similarities"] = sims;
    out["revision"] = s->revision;
    out["class_labels"] = s->label_map();
    return out;
}

json MonitorService::sample_view(const std::string& id) const {
    const auto s = snapshot();
    const auto h = s->history.find(id);
    if (h == s->history.end()) throw RequestError("sample '" + id + "' not found");
    json decisions = json::array();
    for (const auto& d : h->second.decisions)
        decisions.push_back({{"revision", d.revision}, {"outcome", outcome_name(d.outcome)}, {"class_id", d.class_id}});
    json out{{"sample_id", id}, {"features", json_io::to_json(h->second.features)}, {"decisions", decisions}};
    out["similarity"] = nullptr;
    for (const auto& v : s->similarities)
        if (v.sample_id == id) out["similarity"] = json_io::to_json(v.s);
    out["flagged"] = std::any_of(s->flagged_pool.records.begin(), s->flagged_pool.records.end(),
                                 [&](const SampleRecord& r) { return r.sample_id == id; });
    out["label"] = nullptr;
    for (const auto& r : s->labeled.records)
        if (r.sample_id == id && r.label) out["label"] = *r.label;
    out["revision"] = s->revision;
    return out;
}

json MonitorService::metrics_view() const {
    const auto s = snapshot();
    if (!s->metrics) throw RequestError("no metrics yet; POST /detect a labeled batch first");
    json out = json_io::to_json(*s->metrics);
    out["revision"] = s->revision;
    return out;
}

int status_for(const std::exception& e) {
    if (dynamic_cast<const ConflictError*>(&e)) return 409;
    if (const auto* r = dynamic_cast<const RequestError*>(&e)) {
        const std::string msg = r->what();
        return msg.find("not found") != std::string::npos || msg.find("does not exist") != std::string::npos ||
                       msg.find("no clusters") != std::string::npos || msg.find("no metrics") != std::string::npos
                   ? 404
                   : 400;
    }
    if (dynamic_cast<const json::exception*>(&e)) return 400;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DataError*>(&e) ||
        dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const FitError*>(&e))
        return 422;
    return 500;
}

void register_routes(httplib::Server& server, MonitorService& service) {
    using Handler = std::function<json(const httplib::Request&)>;
    auto wrap = [](Handler h) {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                res.set_content(h(req).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = status_for(e);
                res.set_content(json{{"error", e.what()}, {"status", res.status}}.dump(), "application/json");
            }
        };
    };
    auto body_of = [](const httplib::Request& req) {
        json body = req.body.empty() ? json::object() : json::parse(req.body);
        if (!body.is_object()) throw RequestError("request body must be a JSON object");
        if (req.has_header("X-Request-Token") && !body.contains("token"))
            body["token"] = req.get_header_value("X-Request-Token");
        return body;
    };

    server.Get("/state", wrap([&](const auto&) { return service.state_view(); }));
    server.Get("/clusters", wrap([&](const auto&) { return service.clusters_view(); }));
    server.Get(R"(/samples/([^/]+))", wrap([&](const httplib::Request& req) { return service.sample_view(req.matches[1]); }));
    server.Get("/metrics", wrap([&](const auto&) { return service.metrics_view(); }));
    server.Post("/detect", wrap([&, body_of](const httplib::Request& req) { return service.detect(body_of(req)); }));
    server.Post("/cluster", wrap([&, body_of](const httplib::Request& req) { return service.cluster(body_of(req)); }));
    server.Post("/labels", wrap([&, body_of](const httplib::Request& req) { return service.labels(body_of(req)); }));
    server.Post("/update", wrap([&, body_of](const httplib::Request& req) { return service.update(body_of(req)); }));
}

}  // namespace weldwatch
