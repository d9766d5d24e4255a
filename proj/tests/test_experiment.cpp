// SPDX-License-Identifier: Apache-2.0
#include "csg/experiment.hpp"

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace csg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_beam() {
    return json::parse(R"({
      "antenna": {"n_y": 2, "n_z": 2, "spacing_y": 0.5, "spacing_z": 0.5, "wavelength": 1.0},
      "grid": {"elevation": {"min_deg": 60, "max_deg": 120, "count": 4},
               "azimuth": {"min_deg": -60, "max_deg": 60, "count": 5}},
      "precoder": {"type": "random_phase", "beams": 6, "seed": 3}
    })");
}

json small_config(const fs::path& out) {
    json j;
    j["dataset"] = {{"synthetic", {{"K", 3}, {"N", 20}, {"L", 2}, {"samples_per_grid", 12}, {"s", 0.2}}}};
    j["beam"] = small_beam();
    j["methods"] = {"csg_ae:PIDA", "kmeans_y", "kmeans_y_nomp"};
    j["seeds"] = {0, 1};
    j["scales"] = {0.1, 0.4};
    j["train"] = {{"pretrain_epochs", 3}, {"total_epochs", 6}, {"width", 8}, {"kmeans_restarts", 2}};
    j["output_dir"] = out.string();
    return j;
}

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("csg_experiment_" + name);
    fs::remove_all(p);
    return p;
}

std::string field_of(const json& j) {
    try {
        parse_experiment_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<accepted>";
}

std::map<std::string, std::string> payloads(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        out[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    }
    return out;
}

}  // namespace

TEST_CASE("a valid config parses with defaults filled in") {
    auto cfg = parse_experiment_config(small_config("x"));
    CHECK(cfg.methods.size() == 3);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1});
    CHECK(cfg.dataset.seed_from_run);
    CHECK(cfg.train.total_epochs == 6);
    CHECK(cfg.workers == 1);
    CHECK(build_beam(cfg.beam).gains.rows() == 6);
    CHECK(build_beam(cfg.beam).gains.cols() == 20);
}

TEST_CASE("the shipped desk sweep config parses") {
    auto cfg = load_experiment_config(fs::path(CSG_SOURCE_DIR) / "configs" / "desk_sweep.json");
    CHECK(cfg.methods.size() == 6);
    CHECK(cfg.scales.size() == 3);
    CHECK(cfg.train.total_epochs == 300);
    CHECK(build_beam(cfg.beam).gains.cols() == 256);
}

TEST_CASE("config errors name the offending field") {
    auto base = small_config("x");
    auto with = [&](const json::json_pointer& ptr, const json& v) {
        json j = base;
        j[ptr] = v;
        return j;
    };
    auto without = [&](const std::string& key) {
        json j = base;
        j.erase(key);
        return j;
    };
    CHECK(field_of(with("/train/w1"_json_pointer, "one")) == "/train/w1");
    CHECK(field_of(with("/train/bogus"_json_pointer, 1)) == "/train/bogus");
    CHECK(field_of(with("/dataset/synthetic/L"_json_pointer, -2)) == "/dataset/synthetic/L");
    CHECK(field_of(with("/methods/1"_json_pointer, "kmeans_q")) == "/methods/1");
    CHECK(field_of(with("/scales/0"_json_pointer, 1.5)) == "/scales/0");
    CHECK(field_of(with("/beam/precoder/type"_json_pointer, "magic")) == "/beam/precoder/type");
    CHECK(field_of(with("/beam/antenna/wavelength"_json_pointer, 0)) == "/beam/antenna/wavelength");
    CHECK(field_of(with("/metrics"_json_pointer, json::array({"ari", "accuracy"}))) == "/metrics/1");
    CHECK(field_of(with("/workers"_json_pointer, 0)) == "/workers");
    CHECK(field_of(with("/extra"_json_pointer, true)) == "/extra");
    CHECK(field_of(without("seeds")) == "/seeds");
    CHECK(field_of(without("beam")) == "/beam");
    CHECK(field_of(json::array()) == "/");
}

TEST_CASE("config files report the line of a JSON syntax error") {
    const auto p = fs::temp_directory_path() / "csg_experiment_bad.json";
    write_text_file(p, "{\n  \"seeds\": [0],\n  \"methods\": [,]\n}\n");
    try {
        load_experiment_config(p);
        FAIL("expected error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == p.string() + ":3");
    }
}

TEST_CASE("environment overrides") {
    auto cfg = parse_experiment_config(small_config("x"));
    setenv("CSG_OUTPUT_DIR", "/tmp/elsewhere", 1);
    setenv("CSG_WORKERS", "3", 1);
    apply_environment_overrides(cfg);
    CHECK(cfg.output_dir == fs::path("/tmp/elsewhere"));
    CHECK(cfg.workers == 3);
    setenv("CSG_WORKERS", "many", 1);
    CHECK_THROWS_AS(apply_environment_overrides(cfg), ConfigError);
    unsetenv("CSG_OUTPUT_DIR");
    unsetenv("CSG_WORKERS");
}

TEST_CASE("a small sweep writes runs, curves, aggregates and a manifest") {
    const auto dir = fresh_dir("sweep");
    auto cfg = parse_experiment_config(small_config(dir));
    auto res = run_experiment(cfg);
    CHECK(res.exit_code == 0);
    CHECK(res.runs.size() == 12);
    for (const auto& r : res.runs) CHECK_MESSAGE(r.ok, r.error);

    const auto stem = run_file_stem("csg_ae:PIDA", 1, 1);
    CHECK(stem == "csg_ae-PIDA__seed1__round1");
    auto run = json::parse(read_text_file(dir / "runs" / (stem + ".json")));
    CHECK(run["status"] == "ok");
    CHECK(run["scale"].get<double>() == 0.4);
    CHECK(run["metrics"].contains("sample_mean_nmse"));
    CHECK(run["metrics"].contains("active_mae"));
    CHECK(fs::exists(dir / "curves" / (stem + ".csv")));
    auto ky = json::parse(read_text_file(dir / "runs" / (run_file_stem("kmeans_y", 0, 0) + ".json")));
    CHECK_FALSE(ky["metrics"].contains("sample_mean_nmse"));

    std::istringstream agg(read_text_file(dir / "aggregate.csv"));
    std::string line;
    std::getline(agg, line);
    CHECK(line == "round,scale,method,metric,n,mean,min,max,spread");
    int rows = 0;
    while (std::getline(agg, line)) {
        ++rows;
        CHECK(line.find(",2,") != std::string::npos);  // two seeds per cell
    }
    CHECK(rows > 0);

    auto manifest = json::parse(read_text_file(dir / "manifest.json"));
    CHECK(manifest["runs"].size() == 12);
    CHECK(manifest["failures"] == 0);
    CHECK(manifest.contains("started_utc"));
}

TEST_CASE("metric filter restricts the payload") {
    const auto dir = fresh_dir("filter");
    auto j = small_config(dir);
    j["methods"] = {"kmeans_y_nomp"};
    j["seeds"] = {0};
    j.erase("scales");
    j["metrics"] = {"ari", "center_wasserstein"};
    auto res = run_experiment(parse_experiment_config(j));
    REQUIRE(res.exit_code == 0);
    auto run = json::parse(read_text_file(dir / "runs" / (run_file_stem("kmeans_y_nomp", 0, 0) + ".json")));
    CHECK(run["metrics"].size() == 3);
    CHECK(run["metrics"].contains("ari"));
    CHECK(run["metrics"].contains("center_wasserstein"));
    CHECK(run["metrics"].contains("provenance"));
}

TEST_CASE("identical configs give byte-identical payloads, regardless of worker count") {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    auto ja = small_config(a), jb = small_config(b);
    jb["workers"] = 3;
    REQUIRE(run_experiment(parse_experiment_config(ja)).exit_code == 0);
    REQUIRE(run_experiment(parse_experiment_config(jb)).exit_code == 0);
    const auto pa = payloads(a), pb = payloads(b);
    CHECK(pa.size() == pb.size());
    CHECK(pa.size() > 12);
    for (const auto& [name, text] : pa) {
        auto it = pb.find(name);
        REQUIRE_MESSAGE(it != pb.end(), name);
        CHECK_MESSAGE(it->second == text, name);
    }
}

TEST_CASE("a failing cell is recorded and flips the exit code") {
    const auto dir = fresh_dir("fail");
    auto j = small_config(dir);
    j["K"] = 500;  // more grids than samples
    j["methods"] = {"kmeans_y"};
    j["seeds"] = {0};
    j.erase("scales");
    auto res = run_experiment(parse_experiment_config(j));
    CHECK(res.exit_code == 1);
    auto run = json::parse(read_text_file(dir / "runs" / (run_file_stem("kmeans_y", 0, 0) + ".json")));
    CHECK(run["status"] == "failed");
    CHECK(run["error"].get<std::string>().find("K=500") != std::string::npos);
    CHECK(json::parse(read_text_file(dir / "manifest.json"))["failures"] == 1);
}

TEST_CASE("labels CSV round-trips") {
    Labels l{3, 0, 2, 2};
    CHECK(parse_labels_csv(labels_csv(l)) == l);
    CHECK_THROWS_AS(parse_labels_csv("sample,label\n0,x\n"), Error);
}
