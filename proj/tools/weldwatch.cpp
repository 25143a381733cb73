// weldwatch command-line front end. Every subcommand reads the files it is
// given and writes its outputs under --out.

#include "weldwatch/error.hpp"
#include "weldwatch/experiment.hpp"
#include "weldwatch/http_api.hpp"
#include "weldwatch/json_io.hpp"
#include "weldwatch/monitor.hpp"
#include "weldwatch/textio.hpp"

#include "CLI11.hpp"
#include "httplib.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace weldwatch;
using json_io::json;

namespace {

struct Common {
    std::string config;
    std::optional<long long> seed;
    std::string out = ".";
    std::vector<std::string> overrides;  // key=value
};

ExperimentConfig load_config(const Common& c) {
    ConfigFile file = c.config.empty() ? ConfigFile::parse("", "<defaults>") : ConfigFile::load(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
        file.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) file.set("seed", std::to_string(*c.seed));
    return ExperimentConfig::from_file(file);
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing --") + what);
    if (!fs::exists(path)) throw IoError(std::string(what) + " file '" + path + "' not found");
}

std::vector<std::string> labels_for(const Dataset& ds) {
    const auto labels = ds.labels();
    if (labels.empty()) throw DataError("training data has no labels");
    return labels;
}

std::string decisions_csv(const Dataset& ds, const std::vector<Decision>& decisions,
                          const std::vector<std::string>& labels) {
    std::string out = "sample_id,outcome,class_id,label,indicator,true_label\n";
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const auto& d = decisions[i];
        std::string bits;
        for (bool b : d.indicator) bits += b ? '1' : '0';
        out += ds.records[i].sample_id + "," + outcome_name(d.outcome) + "," + std::to_string(d.assigned_class) + "," +
               (d.assigned_class >= 0 ? labels[static_cast<std::size_t>(d.assigned_class)] : "") + "," + bits + "," +
               ds.records[i].label.value_or("") + "\n";
    }
    return out;
}

// Truth ids for a labeled batch; labels outside the model are unknowns.
std::optional<std::vector<int>> truth_for(const Dataset& ds, const std::vector<std::string>& labels) {
    std::vector<int> truth;
    for (const auto& r : ds.records) {
        if (!r.label) return std::nullopt;
        const auto it = std::find(labels.begin(), labels.end(), *r.label);
        truth.push_back(it == labels.end() ? kUnknownTruth : static_cast<int>(it - labels.begin()));
    }
    return truth;
}

void print_metrics(const DetectionMetrics& m) {
    auto show = [](const char* name, const std::optional<double>& v) {
        std::printf("  %-18s %s\n", name, v ? std::to_string(*v).c_str() : "n/a");
    };
    std::printf("metrics over %zu samples (%zu known, %zu unknown)\n", m.total, m.known, m.unknown);
    show("unknown_recall", m.unknown_recall);
    show("false_alarm_rate", m.false_alarm_rate);
    show("known_accuracy", m.known_accuracy);
    show("overall_accuracy", m.overall_accuracy);
}

MonitorState open_state(const std::string& state_dir, const std::string& model, const std::string& bank,
                        const std::string& labeled) {
    if (fs::exists(fs::path(state_dir) / "CURRENT")) return restore(state_dir);
    require_file(model, "model");
    require_file(bank, "bank");
    require_file(labeled, "labeled");
    MonitorState s = initial_state(load_model_file(model), load_bank_file(bank), load_csv(labeled));
    persist(s, state_dir);
    return s;
}

UpdateKnobs knobs_from(const ExperimentConfig& cfg, int shots) {
    UpdateKnobs k;
    k.shots_per_class = shots;
    k.include_known_replay = cfg.replay;
    k.freeze = cfg.freeze;
    k.train = cfg.update_train;
    k.policy = cfg.policy;
    k.seed = stream_seed(cfg.seed, SeedStream::Update);
    return k;
}

std::pair<std::string, std::string> split_pair(const std::string& text, const char* what) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw ConfigError(std::string(what) + " expects a=b, got '" + text + "'");
    return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weldwatch: open-set condition monitoring with few-shot updates"};
    app.require_subcommand(1);
    Common c;
    auto common = [&c](CLI::App* sub) {
        sub->add_option("--config", c.config, "Experiment config file");
        sub->add_option("--seed", c.seed, "Base seed (overrides config)");
        sub->add_option("--out", c.out, "Output directory");
        sub->add_option("--set", c.overrides, "Config override key=value (repeatable)");
    };

    std::string data, model, bank, labeled, state_dir, host = "127.0.0.1";
    std::vector<std::string> assigns, overrides_arg;
    int shots = -1, repeats = -1, threads = 1, port = 8080, runs = 10;
    std::string classes_range, shots_range;

    auto* simulate = app.add_subcommand("simulate", "Generate the synthetic scenario");
    common(simulate);

    auto* train_cmd = app.add_subcommand("train", "Train the classifier");
    common(train_cmd);
    train_cmd->add_option("--data", data, "Labeled training CSV")->required();

    auto* fit = app.add_subcommand("fit-detector", "Fit per-class three-sigma detectors");
    common(fit);
    fit->add_option("--model", model)->required();
    fit->add_option("--data", data, "Labeled training CSV")->required();

    auto* detect_cmd = app.add_subcommand("detect", "Classify a batch and flag unknowns");
    common(detect_cmd);
    detect_cmd->add_option("--data", data, "Batch CSV")->required();
    detect_cmd->add_option("--model", model);
    detect_cmd->add_option("--bank", bank);
    detect_cmd->add_option("--labeled", labeled, "Known-class samples seeding a new state");
    detect_cmd->add_option("--state", state_dir, "Monitor state directory");

    auto* cluster_cmd = app.add_subcommand("cluster", "Cluster the flagged pool");
    common(cluster_cmd);
    cluster_cmd->add_option("--state", state_dir)->required();

    auto* update_cmd = app.add_subcommand("update", "Label clusters and update the model");
    common(update_cmd);
    update_cmd->add_option("--state", state_dir)->required();
    update_cmd->add_option("--assign", assigns, "cluster_id=label (repeatable)");
    update_cmd->add_option("--override", overrides_arg, "sample_id=label (repeatable)");
    update_cmd->add_option("--shots", shots, "Samples per new class");

    auto* sweep_cmd = app.add_subcommand("sweep", "Class-count x shot-count grid");
    common(sweep_cmd);
    sweep_cmd->add_option("--classes", classes_range, "a..b");
    sweep_cmd->add_option("--shots", shots_range, "a..b");
    sweep_cmd->add_option("--repeats", repeats);
    sweep_cmd->add_option("--threads", threads);

    auto* eval_cmd = app.add_subcommand("eval", "Open-set and few-shot studies, or metrics for a labeled batch");
    common(eval_cmd);
    eval_cmd->add_option("--runs", runs, "Seeds for the study");
    eval_cmd->add_option("--model", model);
    eval_cmd->add_option("--bank", bank);
    eval_cmd->add_option("--data", data);

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    common(serve_cmd);
    serve_cmd->add_option("--state", state_dir)->required();
    serve_cmd->add_option("--model", model);
    serve_cmd->add_option("--bank", bank);
    serve_cmd->add_option("--labeled", labeled);
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const ExperimentConfig cfg = load_config(c);

        if (*simulate) {
            const Dataset ds = synth_generate(cfg.scenario, stream_seed(cfg.seed, SeedStream::Data));
            const ScenarioSplit split = scenario_split(ds, cfg.scenario, stream_seed(cfg.seed, SeedStream::Split));
            save_csv(ds, out_path(c, "data.csv"));
            save_csv(split.train_known, out_path(c, "train.csv"));
            save_csv(split.test_known, out_path(c, "test.csv"));
            save_csv(split.withheld, out_path(c, "withheld.csv"));
            std::printf("%zu samples: %zu train, %zu known test, %zu withheld\n", ds.size(), split.train_known.size(),
                        split.test_known.size(), split.withheld.size());
        } else if (*train_cmd) {
            require_file(data, "data");
            const Dataset ds = load_csv(data);
            const auto labels = labels_for(ds);
            const TrainResult tr = train_classifier(cfg, to_batch(ds, labels), labels, cfg.seed);
            save_model_file(tr.model, out_path(c, "model.txt"));
            std::string loss = "epoch,loss\n";
            for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e)
                loss += std::to_string(e + 1) + "," + textio::format_real(tr.epoch_loss[e]) + "\n";
            textio::write_file(out_path(c, "train_loss.csv"), loss);
            std::printf("trained %d classes, final loss %.6g\n", tr.model.num_classes(), tr.epoch_loss.back());
        } else if (*fit) {
            require_file(model, "model");
            require_file(data, "data");
            const MlpModel m = load_model_file(model);
            const Dataset ds = load_csv(data);
            const DetectorBank b = fit_detector(m, to_batch(ds, m.class_labels), cfg.embed_layer, cfg.policy);
            save_bank_file(b, out_path(c, "bank.txt"));
            std::string summary = "class_id,label,components\n";
            for (const auto& d : b.detectors)
                summary += std::to_string(d.class_id) + "," + b.class_labels[static_cast<std::size_t>(d.class_id)] + "," +
                           std::to_string(d.components()) + "\n";
            textio::write_file(out_path(c, "detector_summary.csv"), summary);
            std::printf("fitted %d detectors at layer %d\n", b.num_classes(), b.embed_layer);
        } else if (*detect_cmd) {
            require_file(data, "data");
            const Dataset batch = load_csv(data);
            std::vector<Decision> decisions;
            std::optional<DetectionMetrics> metrics;
            std::vector<std::string> labels;
            if (!state_dir.empty()) {
                const MonitorState s = open_state(state_dir, model, bank, labeled);
                DetectOutcome out = detect_batch(s, batch);
                persist(out.state, state_dir);
                decisions = std::move(out.decisions);
                metrics = out.metrics;
                labels = s.label_map();
                std::printf("revision %lld, flagged pool %zu\n", out.state.revision, out.state.flagged_pool.size());
            } else {
                require_file(model, "model");
                require_file(bank, "bank");
                const MlpModel m = load_model_file(model);
                const DetectorBank b = load_bank_file(bank);
                decisions = detect_rows(b, m, feature_matrix(batch));
                labels = m.class_labels;
                if (const auto truth = truth_for(batch, labels)) metrics = evaluate_decisions(decisions, *truth);
            }
            textio::write_file(out_path(c, "decisions.csv"), decisions_csv(batch, decisions, labels));
            Dataset flagged;
            flagged.feature_names = batch.feature_names;
            for (std::size_t i = 0; i < decisions.size(); ++i)
                if (decisions[i].outcome == Outcome::Unknown) flagged.records.push_back(batch.records[i]);
            save_csv(flagged, out_path(c, "flagged.csv"));
            std::printf("%zu of %zu samples flagged unknown\n", flagged.size(), batch.size());
            if (metrics) {
                textio::write_file(out_path(c, "metrics.json"), json_io::to_json(*metrics).dump(2) + "\n");
                print_metrics(*metrics);
            }
        } else if (*cluster_cmd) {
            const MonitorState s = restore(state_dir);
            const MonitorState next = cluster_pool(s, cfg.birch);
            persist(next, state_dir);
            textio::write_file(out_path(c, "clusters.csv"), cluster_summary_csv(*next.cluster_report));
            textio::write_file(out_path(c, "assignments.csv"), cluster_assignments_csv(*next.cluster_report));
            std::printf("revision %lld: %zu clusters over %zu flagged samples\n", next.revision,
                        next.cluster_report->clusters.size(), next.flagged_pool.size());
            if (next.cluster_report->purity) std::printf("purity %.4f\n", *next.cluster_report->purity);
        } else if (*update_cmd) {
            const MonitorState s = restore(state_dir);
            const UpdateKnobs knobs = knobs_from(cfg, shots >= 0 ? shots : cfg.shots);
            MonitorState next;
            if (assigns.empty()) {
                if (!overrides_arg.empty()) throw ConfigError("--override needs at least one --assign");
                next = update_in_place(s, knobs);
            } else {
                std::vector<LabelAssignment> list;
                for (const auto& a : assigns) {
                    const auto [id, label] = split_pair(a, "--assign");
                    list.push_back({static_cast<int>(parse_int(id, "--assign cluster id")), label, {}});
                }
                for (const auto& o : overrides_arg) {
                    const auto [sample, label] = split_pair(o, "--override");
                    bool placed = false;
                    for (auto& la : list) {
                        const Cluster* cl = s.cluster_report ? s.cluster_report->find(la.cluster_id) : nullptr;
                        if (cl && std::find(cl->member_ids.begin(), cl->member_ids.end(), sample) != cl->member_ids.end()) {
                            la.overrides[sample] = label;
                            placed = true;
                        }
                    }
                    if (!placed) throw RequestError("override sample '" + sample + "' is not in an assigned cluster");
                }
                next = apply_labels(s, list, knobs);
            }
            persist(next, state_dir);
            save_model_file(next.model, out_path(c, "model.txt"));
            save_bank_file(next.bank, out_path(c, "bank.txt"));
            std::printf("revision %lld: %d classes, flagged pool %zu\n", next.revision, next.model.num_classes(),
                        next.flagged_pool.size());
        } else if (*sweep_cmd) {
            ExperimentConfig sc = cfg;
            if (!classes_range.empty()) sc.sweep_classes = parse_range(classes_range, "--classes");
            if (!shots_range.empty()) sc.sweep_shots = parse_range(shots_range, "--shots");
            if (repeats >= 0) sc.sweep_repeats = repeats;
            const auto t0 = std::chrono::steady_clock::now();
            const BaseScenario base = prepare_base(sc, sc.seed);
            SweepOptions opts = make_sweep_options(sc, sc.seed);
            opts.threads = threads;
            const SweepResult r = run_sweep(make_sweep_scenario(base, sc), opts);
            textio::write_file(out_path(c, "sweep_trials.csv"), sweep_trials_csv(r));
            textio::write_file(out_path(c, "sweep_summary.csv"), sweep_summary_csv(r));
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("%zu trials in %.1f s\n", r.trials.size(), secs);
            for (const auto& cell : r.cells)
                std::printf("  classes %d shots %d: mean %.4f std %.4f\n", cell.num_new_classes, cell.shots,
                            cell.mean_accuracy, cell.std_accuracy);
        } else if (*eval_cmd) {
            if (!data.empty()) {
                require_file(model, "model");
                require_file(bank, "bank");
                require_file(data, "data");
                const MlpModel m = load_model_file(model);
                const Dataset ds = load_csv(data);
                const auto truth = truth_for(ds, m.class_labels);
                if (!truth) throw DataError("eval needs a fully labeled batch");
                const auto metrics = evaluate_decisions(detect_rows(load_bank_file(bank), m, feature_matrix(ds)), *truth);
                textio::write_file(out_path(c, "metrics.json"), json_io::to_json(metrics).dump(2) + "\n");
                print_metrics(metrics);
            } else {
                if (runs < 1) throw ConfigError("--runs must be >= 1");
                std::string open = "seed,unknown_recall,false_alarm_rate,known_accuracy,overall_accuracy\n";
                std::string few = "seed,known_accuracy_before,known_accuracy,new_class_accuracy,overall_accuracy,frozen_unchanged\n";
                auto fmt = [](const std::optional<double>& v) { return v ? textio::format_real(*v) : std::string(); };
                for (int i = 0; i < runs; ++i) {
                    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
                    const BaseScenario base = prepare_base(cfg, seed);
                    const OpenSetResult os = run_open_set(base, cfg);
                    open += std::to_string(seed) + "," + fmt(os.metrics.unknown_recall) + "," +
                            fmt(os.metrics.false_alarm_rate) + "," + fmt(os.metrics.known_accuracy) + "," +
                            textio::format_real(os.metrics.overall_accuracy) + "\n";
                    const FewShotResult fs =
                        run_few_shot(base, cfg, 1, cfg.shots, stream_seed(seed, SeedStream::Update));
                    few += std::to_string(seed) + "," + textio::format_real(fs.known_accuracy_before) + "," +
                           textio::format_real(fs.known_accuracy) + "," + textio::format_real(fs.new_class_accuracy) +
                           "," + textio::format_real(fs.overall_accuracy) + "," + (fs.frozen_unchanged ? "1" : "0") +
                           "\n";
                    std::printf("seed %llu: recall %s, known %s, few-shot overall %.4f\n",
                                static_cast<unsigned long long>(seed), fmt(os.metrics.unknown_recall).c_str(),
                                fmt(os.metrics.known_accuracy).c_str(), fs.overall_accuracy);
                }
                textio::write_file(out_path(c, "eval_open_set.csv"), open);
                textio::write_file(out_path(c, "eval_few_shot.csv"), few);
            }
        } else if (*serve_cmd) {
            ServiceOptions opts;
            opts.state_dir = state_dir;
            opts.knobs = knobs_from(cfg, cfg.shots);
            opts.birch = cfg.birch;
            MonitorService service(open_state(state_dir, model, bank, labeled), opts);
            httplib::Server server;
            register_routes(server, service);
            std::printf("serving revision %lld on http://%s:%d\n", service.snapshot()->revision, host.c_str(), port);
            std::fflush(stdout);
            if (!server.listen(host, port)) throw IoError("could not listen on " + host + ":" + std::to_string(port));
        }
    } catch (const IoError& e) {
        std::fprintf(stderr, "weldwatch: I/O error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "weldwatch: %s\n", e.what());
        return 1;
    }
    return 0;
}
