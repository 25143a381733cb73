// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include "../support/oracles.hpp"
#include "../support/tempdir.hpp"
#include "weldwatch/clustering.hpp"
#include "weldwatch/continual.hpp"
#include "weldwatch/experiment.hpp"
#include "weldwatch/monitor.hpp"
#include "weldwatch/pca.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace weldwatch;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

Verdict gradient_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 1.0);
    const MlpModel m = init_mlp({4, 2, 3}, rng());
    LabeledBatch b;
    b.features.resize(8, 4);
    for (Eigen::Index i = 0; i < 8; ++i) {
        b.labels.push_back(static_cast<int>(i % 3));
        for (Eigen::Index j = 0; j < 4; ++j) b.features(i, j) = noise(rng);
    }
    const double err = oracle::max_gradient_error(m, b, gradients(m, b), 1e-5);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << "max relative error " << err << ", " << secs << " s";
    return {err <= 1e-4 && secs < 1.0, os.str()};
}

Verdict pca_oracle() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> noise(0.0, 1.0);
    double worst_dot = 1.0, worst_var = 0.0;
    for (int t = 0; t < 20; ++t) {
        Eigen::MatrixXd x(10, 6);
        for (Eigen::Index i = 0; i < 10; ++i)
            for (Eigen::Index j = 0; j < 6; ++j) x(i, j) = noise(rng);
        const auto [values, vectors] = oracle::jacobi_eigen(oracle::loop_covariance(x));
        const PcaFit fit = pca_fit(x, 6);
        for (int k = 0; k < 6; ++k) {
            worst_dot = std::min(worst_dot, std::abs(fit.projection.col(k).dot(vectors.col(k))));
            worst_var = std::max(worst_var, std::abs(fit.explained_variance(k) - values(k)));
        }
    }
    std::ostringstream os;
    os << "min |dot| " << worst_dot << ", max variance error " << worst_var;
    return {worst_dot >= 0.999 && worst_var <= 1e-8, os.str()};
}

Verdict self_acceptance() {
    ExperimentConfig cfg;
    ScenarioSpec& s = cfg.scenario;
    s.classes.clear();
    s.known.clear();
    s.unknown.clear();
    for (int c = 0; c < 6; ++c) {
        s.classes.push_back({"c" + std::to_string(c), 25, std::nullopt});
        s.known.push_back("c" + std::to_string(c));
    }
    const Dataset ds = synth_generate(s, 31);
    const LabeledBatch train = to_batch(ds, s.known);
    const MlpModel model = train_classifier(cfg, train, s.known, 31).model;
    const DetectorBank bank = fit_detector(model, train, kDefaultEmbedLayer, ComponentPolicy::variance(0.9, 5));
    const Eigen::MatrixXd z = embed_rows(model, train.features, bank.embed_layer);
    double worst = 1.0;
    int max_r = 0;
    for (int c = 0; c < 6; ++c) {
        const auto& det = bank.detectors[static_cast<std::size_t>(c)];
        max_r = std::max(max_r, det.components());
        int own = 0, pass = 0;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            if (train.labels[static_cast<std::size_t>(i)] != c) continue;
            ++own;
            pass += det.accepts(z.row(i).transpose());
        }
        worst = std::min(worst, static_cast<double>(pass) / own);
    }
    std::ostringstream os;
    os << "lowest own-class pass rate " << worst << ", max r " << max_r;
    return {worst >= 0.95 && max_r <= 5, os.str()};
}

Verdict open_set(const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    std::vector<double> recall, known_acc;
    std::size_t known = 0, false_alarms = 0;
    double worst_far = 0.0;
    for (int i = 0; i < 10; ++i) {
        const BaseScenario base = prepare_base(cfg, 100 + static_cast<std::uint64_t>(i));
        const OpenSetResult r = run_open_set(base, cfg);
        recall.push_back(*r.metrics.unknown_recall);
        known_acc.push_back(*r.metrics.known_accuracy);
        known += r.metrics.known;
        false_alarms += static_cast<std::size_t>(std::lround(*r.metrics.false_alarm_rate * r.metrics.known));
        worst_far = std::max(worst_far, *r.metrics.false_alarm_rate);
    }
    const double far = static_cast<double>(false_alarms) / static_cast<double>(known);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << "median recall " << median(recall) << ", median known accuracy " << median(known_acc)
       << ", false-alarm rate " << far << " (worst seed " << worst_far << "), " << secs << " s";
    return {median(recall) >= 0.95 && median(known_acc) >= 0.90 && far <= 0.10 && secs < 120.0, os.str()};
}

Verdict few_shot(const ExperimentConfig& cfg) {
    std::vector<double> overall, drop;
    bool frozen = true;
    for (int i = 0; i < 10; ++i) {
        const std::uint64_t seed = 200 + static_cast<std::uint64_t>(i);
        const BaseScenario base = prepare_base(cfg, seed);
        const FewShotResult r = run_few_shot(base, cfg, 1, 5, seed);
        overall.push_back(r.overall_accuracy);
        drop.push_back(100.0 * (r.known_accuracy_before - r.known_accuracy));
        frozen = frozen && r.frozen_unchanged;
    }
    std::ostringstream os;
    os << "median overall accuracy " << median(overall) << ", median known drop " << median(drop)
       << " points (max " << *std::max_element(drop.begin(), drop.end()) << "), frozen layers "
       << (frozen ? "unchanged" : "CHANGED");
    return {median(overall) >= 0.95 && median(drop) <= 2.0 && frozen, os.str()};
}

Verdict sweep(const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    const BaseScenario base = prepare_base(cfg, cfg.seed);
    const SweepScenario sc = make_sweep_scenario(base, cfg);
    SweepOptions opts = make_sweep_options(cfg, cfg.seed);
    opts.min_classes = 1;
    opts.max_classes = 3;
    opts.min_shots = 2;
    opts.max_shots = 6;
    opts.repeats = 20;
    const SweepResult a = run_sweep(sc, opts);
    const double secs = seconds_since(t0);
    const SweepResult b = run_sweep(sc, opts);
    const bool deterministic = sweep_trials_csv(a) == sweep_trials_csv(b);

    bool monotone = true, std_ok = true;
    std::ostringstream os;
    for (int k = 1; k <= 3; ++k) {
        const double lo = a.cell(k, 2)->mean_accuracy, hi = a.cell(k, 6)->mean_accuracy;
        monotone = monotone && hi >= lo;
        os << "k=" << k << " " << lo << "->" << hi << "; ";
    }
    for (const auto& cell : a.cells) {
        std::vector<double> acc;
        for (const auto& t : a.trials)
            if (t.num_new_classes == cell.num_new_classes && t.shots == cell.shots) acc.push_back(t.overall_accuracy);
        double mean = 0.0;
        for (double v : acc) mean += v / static_cast<double>(acc.size());
        double ss = 0.0;
        for (double v : acc) ss += (v - mean) * (v - mean);
        std_ok = std_ok && std::abs(cell.std_accuracy - std::sqrt(ss / static_cast<double>(acc.size() - 1))) < 1e-12;
    }
    os << a.trials.size() << " trials in " << secs << " s, " << (deterministic ? "deterministic" : "NOT deterministic")
       << ", std " << (std_ok ? "N-1" : "WRONG");
    return {a.trials.size() == 300 && deterministic && monotone && std_ok && secs < 600.0, os.str()};
}

Verdict birch() {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.1);
    const std::vector<Eigen::Vector2d> centers{{0, 0}, {10, 0}, {5, 10}};
    std::vector<Eigen::VectorXd> pts;
    std::vector<std::string> labels;
    for (int i = 0; i < 50; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            pts.push_back(centers[c] + Eigen::Vector2d(noise(rng), noise(rng)));
            labels.push_back(std::to_string(c));
        }
    BirchOptions opts;
    opts.threshold = 2.0;
    const ClusterReport r = birch_fit(pts, opts);
    const double p = purity(r.assignment, labels);

    std::uniform_real_distribution<double> u(-5.0, 5.0);
    CFTree tree(0.8, 5);
    std::vector<Eigen::VectorXd> random;
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd v(4);
        for (Eigen::Index j = 0; j < 4; ++j) v(j) = u(rng);
        random.push_back(v);
        tree.insert(v);
    }
    double radius_err = 0.0;
    for (const auto& leaf : tree.leaves()) {
        std::vector<Eigen::VectorXd> members;
        for (std::size_t i : leaf.members) members.push_back(random[i]);
        radius_err = std::max(radius_err, std::abs(leaf.cf.radius() - oracle::brute_radius(members)));
    }
    const bool additive = tree.check_additivity(1e-8);
    std::ostringstream os;
    os << r.clusters.size() << " clusters, purity " << p << ", additivity " << (additive ? "ok" : "BROKEN")
       << ", max radius error " << radius_err;
    return {r.clusters.size() == 3 && p == 1.0 && additive && radius_err < 1e-9, os.str()};
}

Verdict similarity_suite() {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto rand_vec = [&](int n) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = noise(rng);
        return v;
    };
    bool ok = true;
    std::ostringstream os;
    const Eigen::VectorXd a = rand_vec(16);
    ok = ok && std::abs(cosine(a, a) - 1.0) < 1e-12;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(16), e2 = Eigen::VectorXd::Zero(16);
    e1(0) = 3.0;
    e2(5) = -2.0;
    ok = ok && cosine(e1, e2) == 0.0;
    const Eigen::VectorXd b = rand_vec(16);
    ok = ok && std::abs(cosine(4.2 * a, 0.3 * b) - cosine(a, b)) < 1e-12;

    std::vector<Eigen::MatrixXd> classes;
    for (int c = 0; c < 6; ++c) {
        Eigen::MatrixXd m(10, 16);
        for (Eigen::Index i = 0; i < 10; ++i) m.row(i) = rand_vec(16).transpose();
        classes.push_back(m);
    }
    const SimilaritySpace space(classes);
    double worst = 0.0;
    bool dims = true;
    for (int t = 0; t < 50; ++t) {
        const Eigen::VectorXd z = rand_vec(16);
        const SimilarityVector s = space.transform(z);
        dims = dims && s.s.size() == 6;
        worst = std::max(worst, (s.s - oracle::loop_similarity(z, classes)).cwiseAbs().maxCoeff());
    }
    os << "self/orthogonal/scale checks " << (ok ? "ok" : "FAILED") << ", max oracle difference " << worst
       << ", dimension " << (dims ? "C" : "WRONG");
    return {ok && worst <= 1e-12 && dims, os.str()};
}

Verdict persistence(const ExperimentConfig& cfg) {
    const BaseScenario base = prepare_base(cfg, 300);
    DetectorBank bank = fit_detector(base.model, base.train, cfg.embed_layer, cfg.policy);
    bank.class_labels = base.known_labels;
    MonitorState state = initial_state(base.model, bank, base.split.train_known);
    Dataset batch = base.split.withheld;
    for (const auto& r : base.split.test_known.records) batch.records.push_back(r);
    state = cluster_pool(detect_batch(state, batch).state, cfg.birch);

    TempDir dir;
    persist(state, dir.str());
    const MonitorState back = restore(dir.str());
    const MlpModel model_back = load_model(save_model(state.model));
    const DetectorBank bank_back = load_bank(save_bank(state.bank));

    const Dataset probe = synth_generate(cfg.scenario, 301);
    Eigen::MatrixXd x = feature_matrix(probe).topRows(100);
    const auto ref = detect_rows(state.bank, state.model, x);
    const auto via_state = detect_rows(back.bank, back.model, x);
    const auto via_files = detect_rows(bank_back, model_back, x);
    std::size_t same = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        auto eq = [&](const Decision& d) {
            return d.outcome == ref[i].outcome && d.assigned_class == ref[i].assigned_class &&
                   d.indicator == ref[i].indicator &&
                   (!d.softmax || (*d.softmax - *ref[i].softmax).cwiseAbs().maxCoeff() == 0.0);
        };
        same += eq(via_state[i]) && eq(via_files[i]);
    }
    const bool state_equal = back.model == state.model && back.revision == state.revision &&
                             back.flagged_pool.size() == state.flagged_pool.size() &&
                             back.cluster_report->assignment == state.cluster_report->assignment;
    std::ostringstream os;
    os << same << "/100 identical decisions, state " << (state_equal ? "identical" : "DIFFERS");
    return {same == 100 && state_equal, os.str()};
}

Verdict end_to_end(const ExperimentConfig& cfg) {
    const std::uint64_t seed = cfg.seed;
    const BaseScenario base = prepare_base(cfg, seed);
    DetectorBank bank = fit_detector(base.model, base.train, cfg.embed_layer, cfg.policy);
    bank.class_labels = base.known_labels;
    TempDir dir;
    MonitorState state = initial_state(base.model, bank, base.split.train_known);
    persist(state, dir.str());

    Dataset batch = base.split.test_known;
    for (const auto& r : base.split.withheld.records) batch.records.push_back(r);
    const DetectOutcome detected = detect_batch(state, batch);
    state = detected.state;
    persist(state, dir.str());
    state = cluster_pool(state, cfg.birch);
    persist(state, dir.str());

    // The operator names the cluster after the withheld class most of its
    // representatives belong to.
    std::map<std::string, std::string> truth;
    for (const auto& r : batch.records) truth[r.sample_id] = *r.label;
    const Cluster* chosen = nullptr;
    std::string name;
    std::size_t best = 0;
    for (const auto& c : state.cluster_report->clusters) {
        std::map<std::string, std::size_t> votes;
        for (const auto& id : c.representatives) ++votes[truth[id]];
        for (const auto& [label, n] : votes)
            if (n > best && std::find(base.known_labels.begin(), base.known_labels.end(), label) == base.known_labels.end()) {
                best = n;
                chosen = &c;
                name = label;
            }
    }
    if (!chosen) return {false, "no cluster of a withheld class was formed"};

    UpdateKnobs knobs;
    knobs.shots_per_class = 5;
    knobs.train = cfg.update_train;
    knobs.policy = cfg.policy;
    knobs.freeze = cfg.freeze;
    knobs.seed = stream_seed(seed, SeedStream::Update);
    const std::size_t pool_before = state.flagged_pool.size();
    const int chosen_id = chosen->cluster_id;
    const std::size_t chosen_size = chosen->members.size();
    state = apply_labels(restore(dir.str()), {{chosen_id, name, {}}}, knobs);
    persist(state, dir.str());
    state = restore(dir.str());

    // Held-out samples of the same condition, never seen before.
    const Dataset fresh = select_labels(synth_generate(cfg.scenario, stream_seed(seed + 1, SeedStream::Data)), {name});
    const auto decisions = detect_batch(state, fresh).decisions;
    const int id = static_cast<int>(state.label_map().size()) - 1;
    std::size_t hit = 0;
    for (const auto& d : decisions) hit += d.assigned_class == id && d.outcome != Outcome::Unknown;
    const double rate = static_cast<double>(hit) / static_cast<double>(decisions.size());
    std::ostringstream os;
    os << "flagged " << pool_before << ", labeled cluster " << chosen_id << " (" << chosen_size
       << " members) as '" << name << "', " << state.model.num_classes() << " classes after update, held-out "
       << hit << "/" << decisions.size() << " = " << rate;
    return {state.model.num_classes() == 7 && rate >= 0.9, os.str()};
}

}  // namespace

int main() {
    const ExperimentConfig cfg;
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {1, gradient_oracle},
        {2, pca_oracle},
        {3, self_acceptance},
        {4, [&] { return open_set(cfg); }},
        {5, [&] { return few_shot(cfg); }},
        {6, [&] { return sweep(cfg); }},
        {7, birch},
        {8, similarity_suite},
        {9, [&] { return persistence(cfg); }},
        {10, [&] { return end_to_end(cfg); }},
    };
    int failed = 0;
    for (const auto& [n, run] : criteria) {
        Verdict r;
        try {
            r = run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failed += !r.pass;
        std::printf("criterion %2d: %s  %s\n", n, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
