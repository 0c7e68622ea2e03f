#include "doctest.h"

#include "stfno/error.hpp"
#include "stfno/run_config.hpp"

using namespace stfno;

TEST_CASE("defaults and overrides") {
    const RunConfig d = parse_run_config(Json::object());
    CHECK(d.gen.swe.grid.nx == 64);
    CHECK(d.rollout.horizon == 100);

    const Json doc = Json::parse(R"({
        "swe": {"nx": 32, "ny": 16, "r": 0.05},
        "generate": {"samples": 40, "land_box": [0, 4, 0, 8]},
        "model": {"variant": "fno", "width": 8, "modes": [4, 4], "activation": "identity"},
        "train": {"epochs": 3, "coarsen": 2},
        "rollout": {"horizon": 12, "stride": 2, "coarsen": 2},
        "sensitivity": {"mode": "origins", "origins": [3, 5], "reference": 4},
        "eval": {"spectrum_mode": "raw", "stations": [[1, 2]]},
        "seeds": {"train": 9, "forcing": 4}
    })");
    const RunConfig rc = parse_run_config(doc);
    CHECK(rc.gen.swe.grid.nx == 32);
    CHECK(rc.gen.swe.grid.ny == 16);
    CHECK(rc.gen.swe.r == 0.05);
    CHECK(rc.gen.samples == 40);
    CHECK(rc.gen.land_box.has_value());
    CHECK(rc.gen.forcing.seed == 4);
    CHECK(rc.variant == Variant::Fno);
    CHECK(rc.train.epochs == 3);
    CHECK(rc.train.seed == 9);
    CHECK(rc.rollout.stride == 2);
    CHECK(rc.rollout_coarsen == 2);
    CHECK(rc.sensitivity.origins == std::vector<std::size_t>{3, 5});
    CHECK(rc.eval.spectrum_mode == SpectrumMode::Raw);
    REQUIRE(rc.eval.stations.size() == 1);
    CHECK(rc.eval.stations[0].x == 2);

    const ModelConfig mc = rc.model_for(Variant::Fno, {"a", "b"}, {"a"});
    CHECK(mc.width == 8);
    CHECK(mc.modes.kx_max == 4);
    CHECK(mc.activation == Activation::Identity);
    CHECK(mc.dt == rc.gen.sample_dt);
}

TEST_CASE("per-variant model sections") {
    const RunConfig rc = parse_run_config(Json::parse(
        R"({"model": {"width": 6, "fno": {"modes": [5, 5]}, "fnotd": {"modes": [3, 3, 2], "tau": 4}}})"));
    const ModelConfig a = rc.model_for(Variant::Fno, {"x"}, {"x"});
    const ModelConfig b = rc.model_for(Variant::Fnotd, {"x"}, {"x"});
    CHECK(a.width == 6);
    CHECK(b.width == 6);
    CHECK(a.modes == ModeSpec{5, 5, std::nullopt});
    CHECK(a.tau == 1);
    CHECK(b.modes == ModeSpec{3, 3, 2});
    CHECK(b.tau == 4);
    CHECK_THROWS_AS(parse_run_config(Json::parse(R"({"model": {"fno": {"widht": 3}}})")), InvalidArgument);
}

TEST_CASE("unknown keys and bad values name the key") {
    auto message = [](const char* text) {
        try {
            parse_run_config(Json::parse(text));
        } catch (const InvalidArgument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(R"({"train": {"epoch": 3}})").find("train.epoch") != std::string::npos);
    CHECK(message(R"({"bogus": {}})").find("bogus") != std::string::npos);
    CHECK(message(R"({"train": {"epochs": -1}})").find("train.epochs") != std::string::npos);
    CHECK(message(R"({"model": {"variant": "cnn"}})") != "");
    CHECK(message(R"({"eval": {"spectrum_mode": "fancy"}})") != "");
}

TEST_CASE("resolved JSON round trips") {
    const RunConfig rc = parse_run_config(Json::parse(R"({"swe": {"nx": 32, "ny": 32}, "train": {"epochs": 2}})"));
    const Json j = to_json(rc, Variant::Fnotd);
    const RunConfig again = parse_run_config(j);
    CHECK(to_json(again, Variant::Fnotd) == j);

    const ModelConfig mc = rc.model_for(Variant::Fnotd, {"x"}, {"x"});
    const ModelConfig back = model_config_from_json(to_json(mc));
    CHECK(to_json(back) == to_json(mc));
    const TrainConfig tc = train_config_from_json(to_json(rc.train));
    CHECK(to_json(tc) == to_json(rc.train));
    const ChannelStats cs{{"a"}, {1.5}, {2.0}};
    CHECK(channel_stats_from_json(to_json(cs)).stddev[0] == 2.0);
    CHECK_THROWS_AS(model_config_from_json(Json::parse(R"({"variant": 3})")), FormatError);
}
