// SPDX-License-Identifier: Apache-2.0
#include "csg/experiment.hpp"

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

using namespace csg;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "csg_cli_test";

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::string& args) {
    const auto out = kWork / "stdout.txt", err = kWork / "stderr.txt";
    const std::string cmd =
        std::string(CSG_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text_file(out), read_text_file(err)};
}

std::string p(const std::string& name) { return (kWork / name).string(); }

void setup() {
    static bool done = false;
    if (done) return;
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_text_file(kWork / "beam.json", R"({
      "antenna": {"n_y": 2, "n_z": 2, "spacing_y": 0.5, "spacing_z": 0.5, "wavelength": 1.0},
      "grid": {"elevation": {"min_deg": 60, "max_deg": 120, "count": 4},
               "azimuth": {"min_deg": -60, "max_deg": 60, "count": 5}},
      "precoder": {"type": "random_phase", "beams": 6, "seed": 3}
    })");
    write_text_file(kWork / "beam2.json", R"({
      "antenna": {"n_y": 2, "n_z": 2, "spacing_y": 0.5, "spacing_z": 0.5, "wavelength": 1.0},
      "grid": {"elevation": {"min_deg": 60, "max_deg": 120, "count": 4},
               "azimuth": {"min_deg": -60, "max_deg": 60, "count": 5}},
      "precoder": {"type": "steered", "directions_deg": [[90, 0], [80, 20], [100, -20]]}
    })");
    done = true;
}

}  // namespace

TEST_CASE("build, generate, train, baseline, eval and predict end to end") {
    setup();
    auto r = run("build-beam --config " + p("beam.json") + " -o " + p("beam.csga"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("M=6, N=20") != std::string::npos);
    REQUIRE(run("build-beam --config " + p("beam2.json") + " -o " + p("beam2.csga")).code == 0);

    r = run("gen-data --beam " + p("beam.csga") + " -K 3 -L 2 --samples-per-grid 15 -s 0.2 --seed 4 -o " +
            p("data.csgd"));
    REQUIRE_MESSAGE(r.code == 0, r.err);

    r = run("train --data " + p("data.csgd") + " --beam " + p("beam.csga") +
            " --pretrain-epochs 3 --total-epochs 6 --width 8 --out-dir " + p("train"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* f : {"checkpoint.csgw", "summary.json", "train_log.csv", "labels.csv", "metrics.json"})
        CHECK_MESSAGE(fs::exists(kWork / "train" / f), f);
    CHECK(load_checkpoint(kWork / "train" / "checkpoint.csgw").codebook);

    r = run("baseline --pipeline kmeans_y_nomp --data " + p("data.csgd") + " --beam " + p("beam.csga") +
            " --out-dir " + p("bl"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(kWork / "bl" / "summary.json"));

    r = run("eval --data " + p("data.csgd") + " --beam " + p("beam.csga") + " --labels " + p("train/labels.csv") +
            " --summary " + p("train/summary.json") + " -o " + p("eval.json"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto ev = nlohmann::json::parse(read_text_file(kWork / "eval.json"));
    const auto tr = nlohmann::json::parse(read_text_file(kWork / "train" / "metrics.json"));
    CHECK(ev["ari"] == tr["ari"]);
    CHECK(ev.contains("active_mae"));

    r = run("predict --summary " + p("train/summary.json") + " --beam " + p("beam2.csga") + " -o " + p("pred.csv"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto csv = read_text_file(kWork / "pred.csv");
    CHECK(csv.rfind("grid,active,beam_0,beam_1,beam_2\n", 0) == 0);
}

TEST_CASE("predict reports both N values on a mismatch") {
    setup();
    REQUIRE(run("build-beam -o " + p("desk.csga")).code == 0);
    REQUIRE(run("gen-data --beam " + p("desk.csga") + " -K 2 -L 2 --samples-per-grid 5 -o " + p("d2.csgd")).code == 0);
    REQUIRE(run("baseline --pipeline kmeans_y_nomp --data " + p("d2.csgd") + " --beam " + p("desk.csga") +
                " --out-dir " + p("bl2"))
                .code == 0);
    REQUIRE(run("build-beam --config " + p("beam.json") + " -o " + p("small.csga")).code == 0);
    auto r = run("predict --summary " + p("bl2/summary.json") + " --beam " + p("small.csga") + " -o " + p("x.csv"));
    CHECK(r.code == 1);
    CHECK(r.err.find("N=256") != std::string::npos);
    CHECK(r.err.find("N=20") != std::string::npos);
}

TEST_CASE("usage and config errors exit with 2, runtime errors with 1") {
    setup();
    CHECK(run("train --data nothing").code == 2);
    CHECK(run("frobnicate").code == 2);
    auto r = run("train --data " + p("data.csgd") + " --beam " + p("beam.csga") + " --scheme XP --out-dir " + p("t"));
    CHECK(r.code == 2);
    CHECK(r.err.find("--scheme") != std::string::npos);
    CHECK(run("baseline --pipeline nope --data " + p("data.csgd") + " --out-dir " + p("t")).code == 2);

    write_text_file(kWork / "bad.json", "{\"methods\": [\"kmeans_y\"], \"seeds\": [0], \"bogus\": 1}");
    r = run("sweep " + p("bad.json"));
    CHECK(r.code == 2);
    CHECK(r.err.find("/bogus") != std::string::npos);

    r = run("train --data " + p("missing.csgd") + " --out-dir " + p("t"));
    CHECK(r.code == 1);
    write_text_file(kWork / "junk.csgd", "junk");
    r = run("baseline --pipeline kmeans_y --data " + p("junk.csgd") + " --out-dir " + p("t"));
    CHECK(r.code == 1);
    CHECK(r.err.find("unrecognized format") != std::string::npos);
}

TEST_CASE("sweep runs a config file and honours the output override") {
    setup();
    write_text_file(kWork / "sweep.json", R"({
      "dataset": {"synthetic": {"K": 3, "N": 20, "L": 2, "samples_per_grid": 10, "s": 0.3}},
      "beam": {"antenna": {"n_y": 2, "n_z": 2}, "grid": {"elevation": {"min_deg": 60, "max_deg": 120, "count": 4},
               "azimuth": {"min_deg": -60, "max_deg": 60, "count": 5}},
               "precoder": {"type": "random_phase", "beams": 6}},
      "methods": ["kmeans_y", "nomp_kmeans_x"],
      "seeds": [0, 1],
      "output_dir": "ignored"
    })");
    const std::string env = "CSG_OUTPUT_DIR=" + p("sweep_out") + " ";
    const int status = std::system((env + CSG_CLI_PATH + " sweep " + p("sweep.json") + " > /dev/null").c_str());
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(kWork / "sweep_out" / "aggregate.csv"));
    CHECK(fs::exists(kWork / "sweep_out" / "runs" / "nomp_kmeans_x__seed1__round0.json"));
}
