#include "doctest.h"

#include "weldwatch/config.hpp"
#include "weldwatch/error.hpp"
#include "weldwatch/experiment.hpp"

using namespace weldwatch;

TEST_SUITE("config") {

TEST_CASE("key value pairs, comments and sections") {
    const ConfigFile f = ConfigFile::parse(
        "# comment\nseed = 3\nhidden = 8, 4\nrate = 0.5\nflag = yes\nsweep = 2..6\n[class a]\nsamples = 4\n");
    CHECK(f.get_int("seed", 0) == 3);
    CHECK(f.get_int_list("hidden", {}) == std::vector<int>{8, 4});
    CHECK(f.get_real("rate", 0) == 0.5);
    CHECK(f.get_bool("flag", false));
    CHECK(f.get_range("sweep", {0, 0}) == std::pair<int, int>{2, 6});
    CHECK(f.get_int("absent", 9) == 9);
    REQUIRE(f.sections().size() == 1);
    CHECK(f.sections()[0].kind == "class");
    CHECK(f.sections()[0].values.at("samples") == "4");
}

TEST_CASE("parse errors carry the location") {
    CHECK_THROWS_WITH_AS(ConfigFile::parse("a = 1\nnot a pair\n", "x.cfg"), doctest::Contains("x.cfg:2"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("a = 1\na = 2\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("[class\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("a = x\n").get_int("a", 0), ParseError);
    CHECK_THROWS_AS(parse_range("6..2", "r"), ParseError);
    CHECK_THROWS_AS(parse_bool("maybe", "b"), ParseError);
    CHECK_THROWS_AS(ConfigFile::load("/nonexistent.cfg"), IoError);
}

TEST_CASE("experiment config reads every knob") {
    const ConfigFile f = ConfigFile::parse(
        "seed = 11\ndim = 10\nknown = a, b\nunknown = c\nsamples_per_class = 12\nhidden = 16, 8\n"
        "epochs = 7\nupdate_epochs = 3\nembed_layer = 1\nmax_components = 4\nbirch_threshold = 1.5\n"
        "shots = 3\nreplay = false\nfreeze = 0\nsweep_classes = 1..1\nsweep_repeats = 2\n[class c]\nsamples = 20\n");
    const ExperimentConfig cfg = ExperimentConfig::from_file(f);
    CHECK(cfg.seed == 11);
    CHECK(cfg.scenario.dim == 10);
    CHECK(cfg.scenario.classes.size() == 3);
    CHECK(cfg.scenario.find("c")->samples == 20);
    CHECK(cfg.scenario.find("a")->samples == 12);
    CHECK(cfg.hidden == std::vector<int>{16, 8});
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.update_train.epochs == 3);
    CHECK(cfg.embed_layer == 1);
    CHECK(cfg.policy.max_components == 4);
    CHECK(cfg.birch.threshold == 1.5);
    CHECK(cfg.shots == 3);
    CHECK_FALSE(cfg.replay);
    CHECK(cfg.freeze.frozen_layers == std::set<int>{0});
    CHECK(cfg.sweep_repeats == 2);
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_file(ConfigFile::parse("epoch = 5\n")), doctest::Contains("epoch"),
                         ParseError);
}

TEST_CASE("seed streams are distinct and stable") {
    CHECK(stream_seed(7, SeedStream::Data) != stream_seed(7, SeedStream::Split));
    CHECK(stream_seed(7, SeedStream::Data) == stream_seed(7, SeedStream::Data));
    CHECK(stream_seed(7, SeedStream::Data) != stream_seed(8, SeedStream::Data));
}

}  // TEST_SUITE
