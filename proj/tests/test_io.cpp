#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kinglab/io.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/simulation.hpp"

using namespace kinglab;

TEST_CASE("config parser: dotted keys, comments, typed getters") {
    std::istringstream in(
        "# comment line\n"
        "king.w0 = 2.5\n"
        "sim.n = 5000   # trailing comment\n"
        "\n"
        "generator.c0=0.25\n"
        "name.with.dots = hello\n");
    const Config cfg = Config::parse(in);
    CHECK(cfg.get_double("king.w0", 0.0) == 2.5);
    CHECK(cfg.get_int("sim.n", 0) == 5000);
    CHECK(cfg.get_double("generator.c0", 0.0) == 0.25);
    CHECK(cfg.get_string("name.with.dots", "") == "hello");
    CHECK(cfg.get_double("missing.key", 7.0) == 7.0);
    CHECK(cfg.has("king.w0"));
    CHECK(!cfg.has("king.w1"));
}

TEST_CASE("config parser: malformed input raises") {
    std::istringstream bad1("king.w0 2.0\n");
    CHECK_THROWS_AS(Config::parse(bad1), ConfigError);
    std::istringstream bad2("= 3\n");
    CHECK_THROWS_AS(Config::parse(bad2), ConfigError);
    std::istringstream bad3("king.w0 = abc\n");
    const Config cfg = Config::parse(bad3);
    CHECK_THROWS_AS(cfg.get_double("king.w0", 0.0), ConfigError);
}

TEST_CASE("model snapshot round trip") {
    KingParameters p;
    p.w0 = 1.5;
    p.grid_size = 301;
    const KingModel m = build_king(p);
    const std::string path = "/tmp/kinglab_test_model.bin";
    save_model(m, path);
    const ModelSnapshot s = load_model_snapshot(path);
    CHECK(s.W0 == m.W0);
    CHECK(s.E0 == m.E0);
    CHECK(s.R == m.R);
    CHECK(s.M == m.M);
    REQUIRE(s.grid_r.size() == m.grid_r.size());
    CHECK(s.grid_u0 == m.grid_u0);
    CHECK(s.grid_m0 == m.grid_m0);
    std::remove(path.c_str());
}

TEST_CASE("snapshot loader rejects foreign files") {
    const std::string path = "/tmp/kinglab_test_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTAMAGICFILE___garbage";
    }
    CHECK_THROWS_AS(load_model_snapshot(path), SnapshotError);
    CHECK_THROWS_AS(load_checkpoint(path), SnapshotError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint round trip preserves every particle bitwise") {
    KingParameters p;
    p.w0 = 2.0;
    const KingModel m = build_king(p);
    const ParticleEnsemble ens = sample_steady_state(m, 3000, 5);
    const std::string path = "/tmp/kinglab_test_chkp.bin";
    save_checkpoint(ens, 1.25, 37, path);
    const Checkpoint c = load_checkpoint(path);
    CHECK(c.t == 1.25);
    CHECK(c.step == 37);
    CHECK(c.ensemble.r == ens.r);
    CHECK(c.ensemble.w == ens.w);
    CHECK(c.ensemble.L == ens.L);
    CHECK(c.ensemble.f == ens.f);
    CHECK(c.ensemble.weight == ens.weight);
    CHECK(c.ensemble.total_mass == ens.total_mass);
    std::remove(path.c_str());
}

TEST_CASE("csv formatting round-trips doubles exactly") {
    for (double v : {0.1, 1.0 / 3.0, 2.360549404e-1, -6.314637e-1, 1e-300}) {
        const std::string s = fmt_g17(v);
        CHECK(std::stod(s) == v);
    }
}
