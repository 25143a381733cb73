#pragma once

// A small trained monitor over the default synthetic scenario, shared by the
// monitor and HTTP tests.

#include "weldwatch/experiment.hpp"
#include "weldwatch/monitor.hpp"

namespace fixture {

struct Scenario {
    weldwatch::ExperimentConfig cfg;
    weldwatch::BaseScenario base;
    weldwatch::MonitorState state;
};

inline weldwatch::ExperimentConfig small_config() {
    weldwatch::ExperimentConfig cfg;
    cfg.hidden = {48, 32, 16};
    cfg.train.epochs = 120;
    cfg.update_train.epochs = 120;
    return cfg;
}

inline Scenario make(std::uint64_t seed = 7) {
    Scenario s;
    s.cfg = small_config();
    s.base = weldwatch::prepare_base(s.cfg, seed);
    weldwatch::DetectorBank bank =
        weldwatch::fit_detector(s.base.model, s.base.train, s.cfg.embed_layer, s.cfg.policy);
    bank.class_labels = s.base.known_labels;
    s.state = weldwatch::initial_state(s.base.model, bank, s.base.split.train_known);
    return s;
}

inline weldwatch::UpdateKnobs knobs(const weldwatch::ExperimentConfig& cfg) {
    weldwatch::UpdateKnobs k;
    k.shots_per_class = cfg.shots;
    k.train = cfg.update_train;
    k.policy = cfg.policy;
    k.seed = 99;
    return k;
}

inline weldwatch::Dataset only(const weldwatch::Dataset& ds, const std::string& label) {
    return weldwatch::select_labels(ds, {label});
}

}  // namespace fixture
