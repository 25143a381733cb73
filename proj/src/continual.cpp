#include "weldwatch/continual.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/textio.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <cstring>
#include <mutex>
#include <thread>

namespace weldwatch {
namespace {

std::vector<std::string> labels_of(const MlpModel& model) {
    if (!model.class_labels.empty()) return model.class_labels;
    std::vector<std::string> out;
    for (int c = 0; c < model.num_classes(); ++c) out.push_back("class_" + std::to_string(c));
    return out;
}

void append_rows(LabeledBatch& batch, const Eigen::MatrixXd& rows, int label) {
    if (rows.rows() == 0) return;
    if (batch.features.size() > 0 && batch.features.cols() != rows.cols())
        throw ShapeError("update samples disagree on feature count");
    Eigen::MatrixXd grown(batch.features.rows() + rows.rows(), rows.cols());
    if (batch.features.rows() > 0) grown.topRows(batch.features.rows()) = batch.features;
    grown.bottomRows(rows.rows()) = rows;
    batch.features = std::move(grown);
    batch.labels.insert(batch.labels.end(), static_cast<std::size_t>(rows.rows()), label);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

UpdateSet build_update_set(const LabeledBatch& known, const std::vector<std::string>& known_labels,
                           const UpdateRequest& request) {
    const std::set<std::string> existing(known_labels.begin(), known_labels.end());
    std::set<std::string> fresh;
    for (const auto& g : request.new_classes) {
        if (g.label.empty()) throw ConfigError("new class label is empty");
        if (existing.count(g.label)) throw ConfigError("new class label '" + g.label + "' already exists");
        if (!fresh.insert(g.label).second) throw ConfigError("duplicate new class label '" + g.label + "'");
        if (g.features.rows() < 1) throw ConfigError("new class '" + g.label + "' has no samples");
    }
    if (request.shots_per_class < 0) throw ConfigError("shots_per_class must be >= 0");

    UpdateSet set;
    set.labels = known_labels;
    set.first_new_class = static_cast<int>(known_labels.size());
    if (request.include_known_replay) {
        if (static_cast<Eigen::Index>(known.labels.size()) != known.features.rows())
            throw ShapeError("known label count does not match sample count");
        set.data = known;
    }
    for (const auto& g : request.known_additions) {
        const auto it = std::find(known_labels.begin(), known_labels.end(), g.label);
        if (it == known_labels.end()) throw ConfigError("known addition names unknown class '" + g.label + "'");
        append_rows(set.data, g.features, static_cast<int>(it - known_labels.begin()));
    }
    for (const auto& g : request.new_classes) {
        const Eigen::Index take = request.shots_per_class > 0
                                      ? std::min<Eigen::Index>(request.shots_per_class, g.features.rows())
                                      : g.features.rows();
        append_rows(set.data, g.features.topRows(take), static_cast<int>(set.labels.size()));
        set.labels.push_back(g.label);
    }
    return set;
}

bool frozen_layers_unchanged(const MlpModel& before, const MlpModel& after, const FreezeSpec& freeze) {
    for (int l : freeze.frozen_layers) {
        if (l < 0 || l >= before.num_layers() || l >= after.num_layers()) return false;
        const auto& wb = before.weights[static_cast<std::size_t>(l)];
        const auto& bb = before.biases[static_cast<std::size_t>(l)];
        const auto& wa = after.weights[static_cast<std::size_t>(l)];
        const auto& ba = after.biases[static_cast<std::size_t>(l)];
        if (wa.rows() < wb.rows() || wa.cols() != wb.cols() || ba.size() < bb.size()) return false;
        // Bitwise comparison: == on doubles would equate +0 and -0.
        for (Eigen::Index i = 0; i < wb.rows(); ++i)
            for (Eigen::Index j = 0; j < wb.cols(); ++j)
                if (std::memcmp(&wb(i, j), &wa(i, j), sizeof(double)) != 0) return false;
        for (Eigen::Index i = 0; i < bb.size(); ++i)
            if (std::memcmp(&bb(i), &ba(i), sizeof(double)) != 0) return false;
    }
    return true;
}

UpdateResult update_model(const MlpModel& model, const DetectorBank& bank, const UpdateRequest& request,
                          const LabeledBatch& known) {
    const auto old_labels = labels_of(model);
    UpdateResult result;
    result.update_set = build_update_set(known, old_labels, request);
    const int k = static_cast<int>(request.new_classes.size());

    MlpModel grown = expand_output(model, k, request.expansion_seed);
    grown.class_labels = result.update_set.labels;
    TrainResult trained = train(grown, result.update_set.data, request.train_cfg, request.freeze);
    result.model = std::move(trained.model);
    result.epoch_loss = std::move(trained.epoch_loss);

    // Detectors of classes absent from the update set can be carried over
    // only when the layers producing the embedding did not move.
    bool embedding_frozen = true;
    for (int l = 0; l < bank.embed_layer; ++l) embedding_frozen = embedding_frozen && request.freeze.is_frozen(l);

    const LabeledBatch& data = result.update_set.data;
    const Eigen::MatrixXd z = embed_rows(result.model, data.features, bank.embed_layer);
    result.bank.embed_layer = bank.embed_layer;
    result.bank.class_labels = result.update_set.labels;
    for (int c = 0; c < result.model.num_classes(); ++c) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            if (data.labels[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
        const auto& label = result.update_set.labels[static_cast<std::size_t>(c)];
        if (rows.empty() && c < bank.num_classes() && embedding_frozen) {
            result.bank.detectors.push_back(bank.detectors[static_cast<std::size_t>(c)]);
            continue;
        }
        Eigen::MatrixXd zc(static_cast<Eigen::Index>(rows.size()), z.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) zc.row(static_cast<Eigen::Index>(i)) = z.row(rows[i]);
        const int g = c - result.update_set.first_new_class;
        if (request.detectors_use_all_samples && g >= 0)
            zc = embed_rows(result.model, request.new_classes[static_cast<std::size_t>(g)].features, bank.embed_layer);
        result.bank.detectors.push_back(fit_class_detector(zc, c, request.policy, label));
    }
    return result;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw ShapeError("prediction and truth counts differ");
    if (truth.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

TrialResult run_trial(const SweepScenario& scenario, int num_new_classes, int shots, int repeat, std::uint64_t seed,
                      const UpdateRequest& request_template) {
    const std::string cell =
        "cell (" + std::to_string(num_new_classes) + " classes, " + std::to_string(shots) + " shots)";
    if (num_new_classes < 1 || num_new_classes > static_cast<int>(scenario.withheld.size()))
        throw DataError(cell + ": only " + std::to_string(scenario.withheld.size()) + " withheld classes available");
    if (shots < 1) throw ConfigError(cell + ": shots must be >= 1");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pick(scenario.withheld.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(static_cast<std::size_t>(num_new_classes));

    UpdateRequest request = request_template;
    request.new_classes.clear();
    request.shots_per_class = 0;
    request.expansion_seed = derive_seed(seed, 1);
    request.train_cfg.shuffle_seed = derive_seed(seed, 2);
    std::vector<Eigen::MatrixXd> new_tests;
    for (std::size_t c : pick) {
        const auto& pool = scenario.withheld[c];
        if (pool.features.rows() < shots + 1)
            throw DataError(cell + ": withheld class '" + pool.label + "' has " +
                            std::to_string(pool.features.rows()) + " samples, need at least " +
                            std::to_string(shots + 1));
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(pool.features.rows()));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        LabeledGroup g{pool.label, Eigen::MatrixXd(shots, pool.features.cols())};
        Eigen::MatrixXd test(pool.features.rows() - shots, pool.features.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<int>(i) < shots)
                g.features.row(static_cast<Eigen::Index>(i)) = pool.features.row(rows[i]);
            else
                test.row(static_cast<Eigen::Index>(i) - shots) = pool.features.row(rows[i]);
        }
        request.new_classes.push_back(std::move(g));
        new_tests.push_back(std::move(test));
    }

    const UpdateResult updated = update_model(scenario.base_model, scenario.base_bank, request, scenario.known_train);

    TrialResult t;
    t.num_new_classes = num_new_classes;
    t.shots = shots;
    t.repeat = repeat;
    t.seed = seed;
    t.frozen_unchanged = frozen_layers_unchanged(scenario.base_model, updated.model, request.freeze);

    std::vector<int> known_pred, known_truth = scenario.known_test.labels;
    if (scenario.known_test.size() > 0) known_pred = predict(updated.model, scenario.known_test.features);
    std::vector<int> new_pred, new_truth;
    const int C = scenario.base_model.num_classes();
    for (std::size_t j = 0; j < new_tests.size(); ++j) {
        const auto p = predict(updated.model, new_tests[j]);
        new_pred.insert(new_pred.end(), p.begin(), p.end());
        new_truth.insert(new_truth.end(), p.size(), C + static_cast<int>(j));
    }
    t.known_accuracy = accuracy(known_pred, known_truth);
    t.new_class_accuracy = accuracy(new_pred, new_truth);
    std::vector<int> all_pred = known_pred, all_truth = known_truth;
    all_pred.insert(all_pred.end(), new_pred.begin(), new_pred.end());
    all_truth.insert(all_truth.end(), new_truth.begin(), new_truth.end());
    t.overall_accuracy = accuracy(all_pred, all_truth);
    return t;
}

SweepResult run_sweep(const SweepScenario& scenario, const SweepOptions& options) {
    if (options.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (options.min_classes < 1 || options.min_classes > options.max_classes) throw ConfigError("bad class range");
    if (options.min_shots < 1 || options.min_shots > options.max_shots) throw ConfigError("bad shot range");
    std::vector<std::uint64_t> seeds = options.seeds;
    if (seeds.empty())
        for (int r = 0; r < options.repeats; ++r) seeds.push_back(derive_seed(options.base_seed, static_cast<std::uint64_t>(r)));
    if (static_cast<int>(seeds.size()) != options.repeats) throw ConfigError("need exactly one seed per repeat");

    // Fail fast on a cell the pools cannot support.
    std::vector<Eigen::Index> pool_sizes;
    for (const auto& g : scenario.withheld) pool_sizes.push_back(g.features.rows());
    std::sort(pool_sizes.begin(), pool_sizes.end());
    if (static_cast<int>(pool_sizes.size()) < options.max_classes)
        throw DataError("cell (" + std::to_string(options.max_classes) + " classes): only " +
                        std::to_string(pool_sizes.size()) + " withheld classes available");
    if (pool_sizes.front() < options.max_shots + 1)
        throw DataError("cell (" + std::to_string(options.max_shots) + " shots): smallest withheld pool has " +
                        std::to_string(pool_sizes.front()) + " samples");

    struct Job {
        int classes, shots, repeat;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (int k = options.min_classes; k <= options.max_classes; ++k)
        for (int s = options.min_shots; s <= options.max_shots; ++s)
            for (int r = 0; r < options.repeats; ++r)
                jobs.push_back({k, s, r, derive_seed(seeds[static_cast<std::size_t>(r)],
                                                     static_cast<std::uint64_t>(k * 1000 + s))});

    SweepResult result;
    result.trials.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const Job& j = jobs[i];
                result.trials[i] = run_trial(scenario, j.classes, j.shots, j.repeat, j.seed, options.request_template);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t begin = 0; begin < jobs.size(); begin += static_cast<std::size_t>(options.repeats)) {
        CellSummary cell;
        cell.num_new_classes = jobs[begin].classes;
        cell.shots = jobs[begin].shots;
        cell.repeats = options.repeats;
        std::vector<double> overall, known, fresh;
        for (int r = 0; r < options.repeats; ++r) {
            const auto& t = result.trials[begin + static_cast<std::size_t>(r)];
            overall.push_back(t.overall_accuracy);
            known.push_back(t.known_accuracy);
            fresh.push_back(t.new_class_accuracy);
        }
        std::tie(cell.mean_accuracy, cell.std_accuracy) = mean_std(overall);
        cell.std_degenerate = options.repeats == 1;
        cell.mean_known_accuracy = mean_std(known).first;
        cell.mean_new_class_accuracy = mean_std(fresh).first;
        result.cells.push_back(cell);
    }
    return result;
}

const CellSummary* SweepResult::cell(int classes, int shots) const {
    for (const auto& c : cells)
        if (c.num_new_classes == classes && c.shots == shots) return &c;
    return nullptr;
}

std::string sweep_trials_csv(const SweepResult& result) {
    std::string out = "num_new_classes,shots,repeat,seed,overall_accuracy,known_accuracy,new_class_accuracy\n";
    for (const auto& t : result.trials)
        out += std::to_string(t.num_new_classes) + "," + std::to_string(t.shots) + "," + std::to_string(t.repeat) +
               "," + std::to_string(t.seed) + "," + textio::format_real(t.overall_accuracy) + "," +
               textio::format_real(t.known_accuracy) + "," + textio::format_real(t.new_class_accuracy) + "\n";
    return out;
}

std::string sweep_summary_csv(const SweepResult& result) {
    std::string out =
        "num_new_classes,shots,repeats,mean_accuracy,std_accuracy,std_degenerate,mean_known_accuracy,"
        "mean_new_class_accuracy\n";
    for (const auto& c : result.cells)
        out += std::to_string(c.num_new_classes) + "," + std::to_string(c.shots) + "," + std::to_string(c.repeats) +
               "," + textio::format_real(c.mean_accuracy) + "," + textio::format_real(c.std_accuracy) + "," +
               (c.std_degenerate ? "1" : "0") + "," + textio::format_real(c.mean_known_accuracy) + "," +
               textio::format_real(c.mean_new_class_accuracy) + "\n";
    return out;
}

}  // namespace weldwatch
