#include "weldwatch/dataset.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/textio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace weldwatch {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

void Dataset::add(SampleRecord r) {
    if (r.features.size() != dim())
        throw ShapeError("record '" + r.sample_id + "' has " + std::to_string(r.features.size()) +
                         " features, dataset has " + std::to_string(dim()));
    records.push_back(std::move(r));
}

std::vector<std::string> Dataset::labels() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : records)
        if (r.label && seen.insert(*r.label).second) out.push_back(*r.label);
    return out;
}

Dataset parse_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError(source + ":" + std::to_string(lineno) + ": " + what);
    };

    Dataset ds;
    bool has_label = false;
    std::size_t columns = 0;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (columns == 0) {
            if (fields.front() != "sample_id") throw fail("header must start with 'sample_id'");
            has_label = fields.back() == "label";
            columns = fields.size();
            ds.feature_names.assign(fields.begin() + 1, fields.end() - (has_label ? 1 : 0));
            if (ds.feature_names.empty()) throw fail("header declares no feature columns");
            continue;
        }
        if (fields.size() != columns)
            throw fail("expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
        SampleRecord r;
        r.sample_id = fields.front();
        if (r.sample_id.empty()) throw fail("empty sample_id");
        if (!ids.insert(r.sample_id).second) throw fail("duplicate sample_id '" + r.sample_id + "'");
        r.features.resize(ds.dim());
        for (int j = 0; j < ds.dim(); ++j) {
            const std::string& f = fields[static_cast<std::size_t>(j + 1)];
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
                throw fail("non-numeric value '" + f + "' in column '" + ds.feature_names[static_cast<std::size_t>(j)] + "'");
            if (!std::isfinite(v)) throw fail("non-finite value '" + f + "'");
            r.features(j) = v;
        }
        if (has_label && !fields.back().empty()) r.label = fields.back();
        ds.records.push_back(std::move(r));
    }
    if (columns == 0) throw ParseError(source + ": missing header row");
    return ds;
}

Dataset load_csv(const std::string& path) {
    return parse_csv(textio::read_file(path), path);
}

std::string to_csv(const Dataset& ds) {
    std::string out = "sample_id";
    for (const auto& n : ds.feature_names) out += "," + n;
    out += ",label\n";
    for (const auto& r : ds.records) {
        out += r.sample_id;
        for (Eigen::Index j = 0; j < r.features.size(); ++j) out += "," + textio::format_real(r.features(j));
        out += ",";
        if (r.label) out += *r.label;
        out += "\n";
    }
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    textio::write_file(path, to_csv(ds));
}

Eigen::MatrixXd feature_matrix(const Dataset& ds) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.size()), ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = ds.records[i].features.transpose();
    return x;
}

LabeledBatch to_batch(const Dataset& ds, const std::vector<std::string>& labels) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], static_cast<int>(i));
    LabeledBatch batch{feature_matrix(ds), {}};
    for (const auto& r : ds.records) {
        if (!r.label) throw DataError("record '" + r.sample_id + "' has no label");
        const auto it = index.find(*r.label);
        if (it == index.end()) throw DataError("record '" + r.sample_id + "' has unlisted label '" + *r.label + "'");
        batch.labels.push_back(it->second);
    }
    return batch;
}

Dataset select_labels(const Dataset& ds, const std::vector<std::string>& keep) {
    const std::unordered_set<std::string> wanted(keep.begin(), keep.end());
    Dataset out;
    out.feature_names = ds.feature_names;
    for (const auto& r : ds.records)
        if (r.label && wanted.count(*r.label)) out.records.push_back(r);
    return out;
}

const ClassSpec* ScenarioSpec::find(const std::string& name) const {
    for (const auto& c : classes)
        if (c.name == name) return &c;
    return nullptr;
}

void ScenarioSpec::validate() const {
    if (dim < 1) throw ConfigError("scenario dimension must be >= 1");
    if (!(scale > 0.0)) throw ConfigError("covariance scale must be > 0");
    if (!(separation > 0.0)) throw ConfigError("class separation must be > 0");
    if (!(withheld_separation >= separation))
        throw ConfigError("withheld separation must be at least the known separation");
    if (folds < 2) throw ConfigError("fold count must be >= 2");
    if (test_fold < 0 || test_fold >= folds) throw ConfigError("test fold outside [0, folds)");
    std::set<std::string> names;
    for (const auto& c : classes) {
        if (c.name.empty()) throw ConfigError("class with empty name");
        if (!names.insert(c.name).second) throw ConfigError("duplicate class '" + c.name + "'");
        if (c.samples < 1) throw ConfigError("class '" + c.name + "' needs at least one sample");
        if (c.mean && c.mean->size() != dim) throw ConfigError("class '" + c.name + "' mean has wrong dimension");
    }
    const std::set<std::string> known_set(known.begin(), known.end());
    for (const auto* group : {&known, &unknown})
        for (const auto& n : *group)
            if (!names.count(n)) throw ConfigError("class '" + n + "' is not declared");
    for (const auto& u : unknown)
        if (known_set.count(u)) throw ConfigError("class '" + u + "' is both known and withheld");
    if (hard_pair && (!find(hard_pair->first) || !find(hard_pair->second)))
        throw ConfigError("hard pair references an undeclared class");
    if (hard_pair && !(hard_separation > 0.0)) throw ConfigError("hard separation must be > 0");
}

ScenarioSpec default_scenario() {
    ScenarioSpec spec;
    for (const char* tool : {"new", "worn", "damaged"})
        for (const char* surface : {"clean", "contaminated", "polished"}) {
            const std::string name = std::string(tool) + "_" + surface;
            spec.classes.push_back({name, 30, std::nullopt});
            (std::string(tool) == "damaged" ? spec.unknown : spec.known).push_back(name);
        }
    return spec;
}

Dataset synth_generate(const ScenarioSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int d = spec.dim;
    // Known classes sit on +e_0, +e_1, ... at radius separation/sqrt(2), so
    // known means are exactly `separation` apart. Withheld classes reuse those
    // axes with the opposite sign at radius withheld_separation/sqrt(2), so
    // they shift the same features the known classes vary in; any axes left
    // over are fresh.
    const double known_radius = spec.separation * spec.scale / std::sqrt(2.0);
    const double withheld_radius = spec.withheld_separation * spec.scale / std::sqrt(2.0);
    const std::set<std::string> withheld(spec.unknown.begin(), spec.unknown.end());
    std::size_t positive = 0;
    for (const auto& c : spec.classes)
        if (!c.mean && !withheld.count(c.name)) ++positive;
    std::vector<Eigen::VectorXd> means;
    std::size_t next_pos = 0, next_neg = 0, next_fresh = positive;
    for (const auto& c : spec.classes) {
        if (c.mean) {
            means.push_back(*c.mean);
            continue;
        }
        std::size_t axis = 0;
        double value = known_radius;
        if (!withheld.count(c.name)) {
            axis = next_pos++;
        } else if (next_neg < positive) {
            axis = next_neg++;
            value = -withheld_radius;
        } else {
            axis = next_fresh++;
            value = withheld_radius;
        }
        if (axis >= static_cast<std::size_t>(d))
            throw ConfigError("dimension " + std::to_string(d) + " too small to place class '" + c.name + "'");
        Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
        m(static_cast<Eigen::Index>(axis)) = value;
        means.push_back(std::move(m));
    }
    if (spec.hard_pair) {
        std::size_t a = 0, b = 0;
        for (std::size_t i = 0; i < spec.classes.size(); ++i) {
            if (spec.classes[i].name == spec.hard_pair->first) a = i;
            if (spec.classes[i].name == spec.hard_pair->second) b = i;
        }
        Eigen::VectorXd dir = means[b] - means[a];
        if (dir.norm() == 0.0) throw ConfigError("hard pair classes share a mean");
        means[b] = means[a] + spec.hard_separation * spec.scale * dir.normalized();
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.scale);
    Dataset ds;
    for (int j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const auto& cls = spec.classes[c];
        for (int i = 0; i < cls.samples; ++i) {
            SampleRecord r;
            char id[16];
            std::snprintf(id, sizeof(id), "_%03d", i);
            r.sample_id = cls.name + id;
            r.features.resize(d);
            for (int j = 0; j < d; ++j) r.features(j) = means[c](j) + noise(rng);
            r.label = cls.name;
            ds.records.push_back(std::move(r));
        }
    }
    return ds;
}

std::vector<std::vector<std::size_t>> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("fold count must be >= 1");
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        if (!r.label) throw DataError("record '" + r.sample_id + "' has no label; cannot stratify");
        auto [it, fresh] = by_class.try_emplace(*r.label);
        if (fresh) order.push_back(*r.label);
        it->second.push_back(i);
    }
    for (const auto& name : order)
        if (static_cast<int>(by_class[name].size()) < k)
            throw DataError("class '" + name + "' has " + std::to_string(by_class[name].size()) +
                            " samples, fewer than " + std::to_string(k) + " folds");

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0;
    for (const auto& name : order) {
        auto idx = by_class[name];
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i : idx) folds[next++ % folds.size()].push_back(i);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

ScenarioSplit scenario_split(const Dataset& ds, const ScenarioSpec& spec, std::uint64_t seed) {
    const auto present = ds.labels();
    const std::set<std::string> have(present.begin(), present.end());
    for (const auto& names : {spec.known, spec.unknown})
        for (const auto& n : names)
            if (!have.count(n)) throw ConfigError("scenario class '" + n + "' does not occur in the data");
    if (spec.test_fold < 0 || spec.test_fold >= spec.folds) throw ConfigError("test fold outside [0, folds)");

    ScenarioSplit split;
    split.withheld = select_labels(ds, spec.unknown);
    const Dataset known = select_labels(ds, spec.known);
    split.train_known.feature_names = split.test_known.feature_names = known.feature_names;
    if (spec.folds == 1) {
        split.train_known = known;
        return split;
    }
    const auto folds = stratified_kfold(known, spec.folds, seed);
    std::vector<bool> in_test(known.size(), false);
    for (std::size_t i : folds[static_cast<std::size_t>(spec.test_fold)]) in_test[i] = true;
    for (std::size_t i = 0; i < known.size(); ++i)
        (in_test[i] ? split.test_known : split.train_known).records.push_back(known.records[i]);
    return split;
}

}  // namespace weldwatch
