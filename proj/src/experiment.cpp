#include "weldwatch/experiment.hpp"

#include "weldwatch/error.hpp"

#include <set>

namespace weldwatch {
namespace {

TrainConfig read_train(const ConfigFile& f, const std::string& prefix, TrainConfig t) {
    t.learning_rate = f.get_real(prefix + "learning_rate", t.learning_rate);
    t.adam_beta1 = f.get_real(prefix + "adam_beta1", t.adam_beta1);
    t.adam_beta2 = f.get_real(prefix + "adam_beta2", t.adam_beta2);
    t.adam_epsilon = f.get_real(prefix + "adam_epsilon", t.adam_epsilon);
    t.epochs = static_cast<int>(f.get_int(prefix + "epochs", t.epochs));
    t.batch_size = static_cast<int>(f.get_int(prefix + "batch_size", t.batch_size));
    t.validate();
    return t;
}

Eigen::MatrixXd group_rows(const LabeledBatch& b, int label) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < b.labels.size(); ++i)
        if (b.labels[i] == label) rows.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), b.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = b.features.row(rows[i]);
    return out;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
    return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

ExperimentConfig ExperimentConfig::from_file(const ConfigFile& f) {
    static const std::set<std::string> known_keys{
        "seed", "dim", "separation", "scale", "withheld_separation", "hard_separation", "folds", "test_fold",
        "samples_per_class", "known", "unknown", "hard_pair", "hidden", "embed_layer", "variance_fraction",
        "max_components", "fixed_components", "birch_threshold", "birch_branching", "birch_target_clusters",
        "representatives", "shots", "replay", "freeze", "sweep_classes", "sweep_shots", "sweep_repeats"};
    static const std::set<std::string> train_keys{"learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                                                  "epochs", "batch_size"};
    for (const auto& [key, value] : f.values()) {
        const std::string base = key.rfind("update_", 0) == 0 ? key.substr(7) : key;
        if (!known_keys.count(key) && !train_keys.count(base)) throw ParseError("unknown config key '" + key + "'");
    }
    ExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(f.get_int("seed", static_cast<long long>(cfg.seed)));

    ScenarioSpec& s = cfg.scenario;
    s.dim = static_cast<int>(f.get_int("dim", s.dim));
    s.separation = f.get_real("separation", s.separation);
    s.scale = f.get_real("scale", s.scale);
    s.withheld_separation = f.get_real("withheld_separation", s.withheld_separation);
    s.hard_separation = f.get_real("hard_separation", s.hard_separation);
    s.folds = static_cast<int>(f.get_int("folds", s.folds));
    s.test_fold = static_cast<int>(f.get_int("test_fold", s.test_fold));
    const int per_class = static_cast<int>(f.get_int("samples_per_class", 30));
    if (f.has("known") || f.has("unknown") || !f.sections().empty()) {
        s.known = f.get_list("known", {});
        s.unknown = f.get_list("unknown", {});
        s.classes.clear();
        for (const auto& name : s.known) s.classes.push_back({name, per_class, std::nullopt});
        for (const auto& name : s.unknown) s.classes.push_back({name, per_class, std::nullopt});
    } else {
        for (auto& c : s.classes) c.samples = per_class;
    }
    for (const auto& sec : f.sections()) {
        if (sec.kind != "class") throw ParseError("unsupported section kind '" + sec.kind + "'");
        ClassSpec* target = nullptr;
        for (auto& c : s.classes)
            if (c.name == sec.name) target = &c;
        if (!target) {
            s.classes.push_back({sec.name, per_class, std::nullopt});
            target = &s.classes.back();
        }
        for (const auto& [key, value] : sec.values) {
            if (key == "samples") {
                target->samples = static_cast<int>(parse_int(value, "class " + sec.name + ": samples"));
            } else if (key == "mean") {
                const auto items = split_list(value);
                Eigen::VectorXd m(static_cast<Eigen::Index>(items.size()));
                for (std::size_t i = 0; i < items.size(); ++i)
                    m(static_cast<Eigen::Index>(i)) = parse_real(items[i], "class " + sec.name + ": mean");
                target->mean = m;
            } else {
                throw ParseError("class " + sec.name + ": unknown key '" + key + "'");
            }
        }
    }
    const auto pair = f.get_list("hard_pair", {});
    if (pair.size() == 2)
        s.hard_pair = std::make_pair(pair[0], pair[1]);
    else if (!pair.empty())
        throw ParseError("hard_pair needs exactly two class names");
    s.validate();

    cfg.hidden = f.get_int_list("hidden", cfg.hidden);
    cfg.train = read_train(f, "", cfg.train);
    cfg.update_train = read_train(f, "update_", cfg.train);
    cfg.embed_layer = static_cast<int>(f.get_int("embed_layer", cfg.embed_layer));
    cfg.policy.variance_fraction = f.get_real("variance_fraction", cfg.policy.variance_fraction);
    cfg.policy.max_components = static_cast<int>(f.get_int("max_components", cfg.policy.max_components));
    cfg.policy.fixed_components = static_cast<int>(f.get_int("fixed_components", cfg.policy.fixed_components));
    cfg.birch.threshold = f.get_real("birch_threshold", cfg.birch.threshold);
    cfg.birch.branching = static_cast<int>(f.get_int("birch_branching", cfg.birch.branching));
    if (f.has("birch_target_clusters"))
        cfg.birch.target_clusters = static_cast<int>(f.get_int("birch_target_clusters", 0));
    cfg.birch.representatives = static_cast<int>(f.get_int("representatives", cfg.birch.representatives));
    cfg.birch.validate();
    cfg.shots = static_cast<int>(f.get_int("shots", cfg.shots));
    cfg.replay = f.get_bool("replay", cfg.replay);
    const auto freeze = f.get_int_list("freeze", {0, 1});
    cfg.freeze.frozen_layers = std::set<int>(freeze.begin(), freeze.end());
    cfg.sweep_classes = f.get_range("sweep_classes", cfg.sweep_classes);
    cfg.sweep_shots = f.get_range("sweep_shots", cfg.sweep_shots);
    cfg.sweep_repeats = static_cast<int>(f.get_int("sweep_repeats", cfg.sweep_repeats));
    return cfg;
}

TrainResult train_classifier(const ExperimentConfig& cfg, const LabeledBatch& train,
                             const std::vector<std::string>& labels, std::uint64_t seed) {
    std::vector<int> sizes{static_cast<int>(train.features.cols())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(static_cast<int>(labels.size()));
    MlpModel model = init_mlp(sizes, stream_seed(seed, SeedStream::Init));
    model.class_labels = labels;
    TrainConfig tc = cfg.train;
    tc.shuffle_seed = stream_seed(seed, SeedStream::Shuffle);
    return weldwatch::train(model, train, tc);
}

BaseScenario prepare_base(const ExperimentConfig& cfg, std::uint64_t seed) {
    BaseScenario base;
    base.data = synth_generate(cfg.scenario, stream_seed(seed, SeedStream::Data));
    base.split = scenario_split(base.data, cfg.scenario, stream_seed(seed, SeedStream::Split));
    base.known_labels = cfg.scenario.known;
    base.train = to_batch(base.split.train_known, base.known_labels);
    base.test = to_batch(base.split.test_known, base.known_labels);
    TrainResult tr = train_classifier(cfg, base.train, base.known_labels, seed);
    base.model = std::move(tr.model);
    base.epoch_loss = std::move(tr.epoch_loss);
    return base;
}

OpenSetResult run_open_set(const BaseScenario& base, const ExperimentConfig& cfg) {
    OpenSetResult out;
    out.bank = fit_detector(base.model, base.train, cfg.embed_layer, cfg.policy);
    const Eigen::MatrixXd withheld = feature_matrix(base.split.withheld);
    Eigen::MatrixXd x(base.test.size() + withheld.rows(), base.model.input_dim());
    x << base.test.features, withheld;
    out.truth = base.test.labels;
    out.truth.insert(out.truth.end(), static_cast<std::size_t>(withheld.rows()), kUnknownTruth);
    out.decisions = detect_rows(out.bank, base.model, x);
    out.metrics = evaluate_decisions(out.decisions, out.truth);
    return out;
}

UpdateRequest update_template(const ExperimentConfig& cfg) {
    UpdateRequest r;
    r.include_known_replay = cfg.replay;
    r.freeze = cfg.freeze;
    r.train_cfg = cfg.update_train;
    r.policy = cfg.policy;
    return r;
}

SweepScenario make_sweep_scenario(const BaseScenario& base, const ExperimentConfig& cfg) {
    SweepScenario s;
    s.base_model = base.model;
    s.base_bank = fit_detector(base.model, base.train, cfg.embed_layer, cfg.policy);
    s.known_labels = base.known_labels;
    s.known_train = base.train;
    s.known_test = base.test;
    const LabeledBatch withheld = to_batch(base.split.withheld, cfg.scenario.unknown);
    for (std::size_t c = 0; c < cfg.scenario.unknown.size(); ++c)
        s.withheld.push_back({cfg.scenario.unknown[c], group_rows(withheld, static_cast<int>(c))});
    return s;
}

SweepOptions make_sweep_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    SweepOptions o;
    o.min_classes = cfg.sweep_classes.first;
    o.max_classes = cfg.sweep_classes.second;
    o.min_shots = cfg.sweep_shots.first;
    o.max_shots = cfg.sweep_shots.second;
    o.repeats = cfg.sweep_repeats;
    o.base_seed = stream_seed(seed, SeedStream::Sweep);
    o.request_template = update_template(cfg);
    return o;
}

FewShotResult run_few_shot(const BaseScenario& base, const ExperimentConfig& cfg, int num_new_classes, int shots,
                           std::uint64_t seed) {
    const SweepScenario scenario = make_sweep_scenario(base, cfg);
    FewShotResult out;
    out.known_accuracy_before = accuracy(predict(base.model, base.test.features), base.test.labels);
    const TrialResult t = run_trial(scenario, num_new_classes, shots, 0, stream_seed(seed, SeedStream::Update),
                                    update_template(cfg));
    out.known_accuracy = t.known_accuracy;
    out.new_class_accuracy = t.new_class_accuracy;
    out.overall_accuracy = t.overall_accuracy;
    out.frozen_unchanged = t.frozen_unchanged;
    return out;
}

}  // namespace weldwatch
