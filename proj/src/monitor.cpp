#include "weldwatch/monitor.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/json_io.hpp"
#include "weldwatch/textio.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace weldwatch {
namespace fs = std::filesystem;
using json_io::json;

namespace {

std::vector<std::string> default_feature_names(int d) {
    std::vector<std::string> names;
    for (int j = 0; j < d; ++j) names.push_back("f" + std::to_string(j + 1));
    return names;
}

Outcome outcome_from_name(const std::string& name) {
    for (Outcome o : {Outcome::Unknown, Outcome::Known, Outcome::SoftmaxResolved})
        if (name == outcome_name(o)) return o;
    throw RestoreError("unknown outcome '" + name + "'");
}

std::string revision_dir(const std::string& dir, long long revision) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rev-%06lld", revision);
    return (fs::path(dir) / buf).string();
}

std::string checksum_hex(std::string_view bytes) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(textio::fnv1a(bytes)));
    return buf;
}

LabeledBatch replay_batch(const MonitorState& state) {
    return to_batch(select_labels(state.labeled, state.label_map()), state.label_map());
}

MonitorState with_update(const MonitorState& state, const UpdateResult& result) {
    MonitorState next = state;
    next.model = result.model;
    next.bank = result.bank;
    // Similarity vectors and clusters were computed against the old classes.
    next.cluster_report.reset();
    next.similarities.clear();
    next.revision = state.revision + 1;
    next.validate();
    return next;
}

UpdateRequest request_from(const MonitorState& state, const UpdateKnobs& knobs) {
    if (knobs.shots_per_class < 0) throw ConfigError("shots_per_class must be >= 0");
    UpdateRequest request;
    request.shots_per_class = knobs.shots_per_class;
    request.include_known_replay = knobs.include_known_replay;
    request.freeze = knobs.freeze;
    request.train_cfg = knobs.train;
    request.policy = knobs.policy;
    const auto rev = static_cast<std::uint64_t>(state.revision);
    request.detectors_use_all_samples = true;
    request.expansion_seed = derive_seed(knobs.seed, 2 * rev + 1);
    request.train_cfg.shuffle_seed = derive_seed(knobs.seed, 2 * rev + 2);
    return request;
}

}  // namespace

void MonitorState::validate() const {
    const int C = model.num_classes();
    if (bank.num_classes() != C)
        throw ConfigError("detector bank covers " + std::to_string(bank.num_classes()) + " classes, model outputs " +
                          std::to_string(C));
    if (static_cast<int>(model.class_labels.size()) != C) throw ConfigError("label map size differs from model outputs");
    if (bank.class_labels != model.class_labels) throw ConfigError("bank and model disagree on class labels");
    if (labeled.dim() != model.input_dim() || flagged_pool.dim() != model.input_dim())
        throw ConfigError("stored samples disagree with model input dimension");
}

MonitorState initial_state(MlpModel model, DetectorBank bank, Dataset labeled) {
    MonitorState s;
    if (model.class_labels.empty())
        for (int c = 0; c < model.num_classes(); ++c) model.class_labels.push_back("class_" + std::to_string(c));
    bank.class_labels = model.class_labels;
    s.model = std::move(model);
    s.bank = std::move(bank);
    if (labeled.feature_names.empty()) labeled.feature_names = default_feature_names(s.model.input_dim());
    s.labeled = std::move(labeled);
    s.flagged_pool.feature_names = s.labeled.feature_names;
    s.validate();
    return s;
}

DetectOutcome detect_batch(const MonitorState& state, const Dataset& batch) {
    if (batch.size() == 0) throw DataError("detection batch is empty");
    if (batch.dim() != state.model.input_dim())
        throw ShapeError("batch has " + std::to_string(batch.dim()) + " features, model expects " +
                         std::to_string(state.model.input_dim()));
    DetectOutcome out;
    out.decisions = detect_rows(state.bank, state.model, feature_matrix(batch));
    out.state = state;
    MonitorState& next = out.state;
    next.revision = state.revision + 1;

    std::unordered_set<std::string> pooled;
    for (const auto& r : next.flagged_pool.records) pooled.insert(r.sample_id);
    bool all_labeled = true;
    std::vector<int> truth;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& rec = batch.records[i];
        const auto& d = out.decisions[i];
        auto& h = next.history[rec.sample_id];
        h.features = rec.features;
        h.decisions.push_back({next.revision, d.outcome, d.assigned_class});
        if (d.outcome == Outcome::Unknown && pooled.insert(rec.sample_id).second) next.flagged_pool.records.push_back(rec);
        if (!rec.label) {
            all_labeled = false;
            continue;
        }
        const auto& labels = state.label_map();
        const auto it = std::find(labels.begin(), labels.end(), *rec.label);
        truth.push_back(it == labels.end() ? kUnknownTruth : static_cast<int>(it - labels.begin()));
    }
    if (all_labeled) {
        out.metrics = evaluate_decisions(out.decisions, truth);
        next.metrics = out.metrics;
    }
    return out;
}

MonitorState cluster_pool(const MonitorState& state, const BirchOptions& options) {
    if (state.flagged_pool.size() == 0) throw RequestError("flagged pool is empty; nothing to cluster");
    const SimilaritySpace space = SimilaritySpace::from_samples(state.model, state.bank.embed_layer, replay_batch(state));
    std::vector<std::string> ids;
    for (const auto& r : state.flagged_pool.records) ids.push_back(r.sample_id);
    FlaggedClustering fc =
        cluster_flagged(space, state.model, state.bank.embed_layer, feature_matrix(state.flagged_pool), ids, options);

    std::map<std::string, std::string> truth;
    for (const auto& r : state.flagged_pool.records)
        if (r.label) truth.emplace(r.sample_id, *r.label);
    if (truth.size() == state.flagged_pool.size()) fc.report.purity = purity(fc.report, truth);

    MonitorState next = state;
    next.cluster_report = std::move(fc.report);
    next.similarities = std::move(fc.similarities);
    next.revision = state.revision + 1;
    return next;
}

MonitorState apply_labels(const MonitorState& state, const std::vector<LabelAssignment>& assignments,
                          const UpdateKnobs& knobs) {
    if (assignments.empty()) throw RequestError("no label assignments given");
    if (!state.cluster_report) throw RequestError("no clusters available; cluster the flagged pool first");
    const ClusterReport& report = *state.cluster_report;

    std::unordered_map<std::string, std::size_t> pool_index;
    for (std::size_t i = 0; i < state.flagged_pool.size(); ++i)
        pool_index.emplace(state.flagged_pool.records[i].sample_id, i);

    // sample id -> label, in labeling order (representatives first).
    std::vector<std::pair<std::string, std::string>> labeled_order;
    std::set<int> seen_clusters;
    for (const auto& a : assignments) {
        const Cluster* c = report.find(a.cluster_id);
        if (!c) throw RequestError("cluster " + std::to_string(a.cluster_id) + " does not exist");
        if (!seen_clusters.insert(a.cluster_id).second)
            throw RequestError("cluster " + std::to_string(a.cluster_id) + " assigned twice");
        if (a.label.empty()) throw RequestError("empty label for cluster " + std::to_string(a.cluster_id));
        for (const auto& [id, label] : a.overrides) {
            if (std::find(c->member_ids.begin(), c->member_ids.end(), id) == c->member_ids.end())
                throw RequestError("override sample '" + id + "' is not in cluster " + std::to_string(a.cluster_id));
            if (label.empty()) throw RequestError("empty override label for sample '" + id + "'");
        }
        std::vector<std::string> ordered = c->representatives;
        std::vector<std::pair<double, std::string>> rest;
        for (std::size_t k = 0; k < c->members.size(); ++k) {
            const auto& id = c->member_ids[k];
            if (std::find(ordered.begin(), ordered.end(), id) != ordered.end()) continue;
            rest.emplace_back((report.points[c->members[k]] - c->centroid).norm(), id);
        }
        std::sort(rest.begin(), rest.end());
        for (const auto& [dist, id] : rest) ordered.push_back(id);
        for (const auto& id : ordered) {
            if (!pool_index.count(id)) throw RequestError("sample '" + id + "' is no longer in the flagged pool");
            const auto ov = a.overrides.find(id);
            labeled_order.emplace_back(id, ov == a.overrides.end() ? a.label : ov->second);
        }
    }

    const auto& labels = state.label_map();
    UpdateRequest request = request_from(state, knobs);
    std::map<std::string, std::vector<Eigen::VectorXd>> grouped;
    std::vector<std::string> new_order, known_order;
    for (const auto& [id, label] : labeled_order) {
        auto [it, fresh] = grouped.try_emplace(label);
        if (fresh) (std::find(labels.begin(), labels.end(), label) == labels.end() ? new_order : known_order).push_back(label);
        it->second.push_back(state.flagged_pool.records[pool_index.at(id)].features);
    }
    auto to_group = [&](const std::string& label) {
        const auto& rows = grouped.at(label);
        LabeledGroup g{label, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), state.model.input_dim())};
        for (std::size_t i = 0; i < rows.size(); ++i) g.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        return g;
    };
    for (const auto& l : new_order) request.new_classes.push_back(to_group(l));
    for (const auto& l : known_order) request.known_additions.push_back(to_group(l));

    const UpdateResult result = update_model(state.model, state.bank, request, replay_batch(state));
    MonitorState next = with_update(state, result);

    // Labeled samples move from the pool into the labeled set.
    std::unordered_map<std::string, std::string> assigned(labeled_order.begin(), labeled_order.end());
    next.flagged_pool.records.clear();
    for (const auto& r : state.flagged_pool.records) {
        const auto it = assigned.find(r.sample_id);
        if (it == assigned.end()) {
            next.flagged_pool.records.push_back(r);
        } else {
            SampleRecord moved = r;
            moved.label = it->second;
            next.labeled.records.push_back(std::move(moved));
        }
    }
    return next;
}

MonitorState update_in_place(const MonitorState& state, const UpdateKnobs& knobs) {
    if (!knobs.include_known_replay) throw ConfigError("an in-place update needs replay data");
    const UpdateRequest request = request_from(state, knobs);
    return with_update(state, update_model(state.model, state.bank, request, replay_batch(state)));
}

std::string persist(const MonitorState& state, const std::string& dir) {
    const std::string rev = revision_dir(dir, state.revision);
    if (fs::exists(rev)) throw IoError("revision directory '" + rev + "' already exists");
    const std::string model_doc = save_model(state.model);
    const std::string bank_doc = save_bank(state.bank);

    json payload;
    payload["format"] = "weldwatch-state 1";
    payload["revision"] = state.revision;
    payload["model_checksum"] = checksum_hex(model_doc);
    payload["bank_checksum"] = checksum_hex(bank_doc);
    payload["labeled_csv"] = to_csv(state.labeled);
    payload["flagged_csv"] = to_csv(state.flagged_pool);
    payload["cluster_report"] = state.cluster_report ? json_io::to_json(*state.cluster_report) : json(nullptr);
    json sims = json::array();
    for (const auto& s : state.similarities) sims.push_back(json_io::to_json(s));
    payload["similarities"] = sims;
    json history = json::object();
    for (const auto& [id, h] : state.history) {
        json decisions = json::array();
        for (const auto& d : h.decisions)
            decisions.push_back({{"revision", d.revision}, {"outcome", outcome_name(d.outcome)}, {"class_id", d.class_id}});
        history[id] = {{"features", json_io::to_json(h.features)}, {"decisions", decisions}};
    }
    payload["history"] = history;
    payload["metrics"] = state.metrics ? json_io::to_json(*state.metrics) : json(nullptr);
    payload["tokens"] = state.token_responses;
    const std::string body = payload.dump();
    const json wrapped{{"payload", body}, {"checksum", checksum_hex(body)}};

    const std::string staging = rev + ".partial";
    fs::remove_all(staging);
    textio::write_file((fs::path(staging) / "model.txt").string(), model_doc);
    textio::write_file((fs::path(staging) / "bank.txt").string(), bank_doc);
    textio::write_file((fs::path(staging) / "state.json").string(), wrapped.dump(1));
    fs::rename(staging, rev);
    textio::write_file((fs::path(dir) / "CURRENT").string(), fs::path(rev).filename().string() + "\n");
    return rev;
}

std::vector<long long> list_revisions(const std::string& dir) {
    std::vector<long long> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        long long rev = 0;
        char tail = 0;
        if (entry.is_directory() && std::sscanf(name.c_str(), "rev-%lld%c", &rev, &tail) == 1) out.push_back(rev);
    }
    std::sort(out.begin(), out.end());
    return out;
}

MonitorState restore(const std::string& dir, std::optional<long long> revision) {
    std::string rev;
    if (revision) {
        rev = revision_dir(dir, *revision);
    } else {
        std::string current;
        try {
            current = textio::read_file((fs::path(dir) / "CURRENT").string());
        } catch (const IoError&) {
            throw RestoreError("no CURRENT revision pointer in '" + dir + "'");
        }
        while (!current.empty() && (current.back() == '\n' || current.back() == '\r')) current.pop_back();
        rev = (fs::path(dir) / current).string();
    }
    if (!fs::is_directory(rev)) throw RestoreError("revision directory '" + rev + "' not found");

    std::string model_doc, bank_doc, state_doc;
    try {
        model_doc = textio::read_file((fs::path(rev) / "model.txt").string());
        bank_doc = textio::read_file((fs::path(rev) / "bank.txt").string());
        state_doc = textio::read_file((fs::path(rev) / "state.json").string());
    } catch (const IoError& e) {
        throw RestoreError(std::string("incomplete revision: ") + e.what());
    }

    json payload;
    try {
        const json wrapped = json::parse(state_doc);
        const std::string body = wrapped.at("payload").get<std::string>();
        if (wrapped.at("checksum").get<std::string>() != checksum_hex(body))
            throw RestoreError("state.json checksum mismatch in '" + rev + "'");
        payload = json::parse(body);
    } catch (const json::exception& e) {
        throw RestoreError("state.json in '" + rev + "' is corrupt: " + e.what());
    }

    try {
        if (payload.at("format") != "weldwatch-state 1") throw RestoreError("unsupported state format");
        if (payload.at("model_checksum").get<std::string>() != checksum_hex(model_doc))
            throw RestoreError("model.txt does not match the checksum recorded in state.json");
        if (payload.at("bank_checksum").get<std::string>() != checksum_hex(bank_doc))
            throw RestoreError("bank.txt does not match the checksum recorded in state.json");

        MonitorState s;
        s.model = load_model(model_doc);
        s.bank = load_bank(bank_doc);
        s.revision = payload.at("revision").get<long long>();
        s.labeled = parse_csv(payload.at("labeled_csv").get<std::string>(), rev + "/labeled");
        s.flagged_pool = parse_csv(payload.at("flagged_csv").get<std::string>(), rev + "/flagged");
        if (!payload.at("cluster_report").is_null()) s.cluster_report = json_io::report_from_json(payload["cluster_report"]);
        for (const auto& j : payload.at("similarities")) s.similarities.push_back(json_io::similarity_from_json(j));
        for (const auto& [id, h] : payload.at("history").items()) {
            SampleHistory sh;
            sh.features = json_io::vector_from_json(h.at("features"));
            for (const auto& d : h.at("decisions"))
                sh.decisions.push_back({d.at("revision").get<long long>(),
                                        outcome_from_name(d.at("outcome").get<std::string>()),
                                        d.at("class_id").get<int>()});
            s.history.emplace(id, std::move(sh));
        }
        if (!payload.at("metrics").is_null()) s.metrics = json_io::metrics_from_json(payload["metrics"]);
        s.token_responses = payload.at("tokens").get<std::map<std::string, std::string>>();
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw RestoreError("state.json in '" + rev + "' is malformed: " + e.what());
    } catch (const ParseError& e) {
        throw RestoreError(std::string("stored samples in '") + rev + "' are malformed: " + e.what());
    } catch (const ConfigError& e) {
        throw RestoreError(std::string("inconsistent revision '") + rev + "': " + e.what());
    }
}

}  // namespace weldwatch
