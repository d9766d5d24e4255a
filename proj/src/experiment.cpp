// SPDX-License-Identifier: Apache-2.0
#include "csg/experiment.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace csg {

using nlohmann::json;
using io::format_double;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "ari",         "nmi",          "homogeneity",       "completeness",
        "v_measure",   "active_ratio", "sample_mean_nmse",  "matched_sample_mean_nmse",
        "center_wasserstein", "active_mae", "overall_mae"};
    return names;
}

std::string join(const std::string& where, const std::string& key) { return where + "/" + key; }

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(join(where, it.key()), "unknown field");
    }
}

const json& need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(join(where, key), "missing required field");
    return j.at(key);
}

double number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field, "must be finite");
    return d;
}

std::uint64_t count(const json& v, const std::string& field) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(field, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

double opt_number(const json& j, const std::string& key, const std::string& where, double fallback) {
    return j.contains(key) ? number(j.at(key), join(where, key)) : fallback;
}

std::uint64_t opt_count(const json& j, const std::string& key, const std::string& where, std::uint64_t fallback) {
    return j.contains(key) ? count(j.at(key), join(where, key)) : fallback;
}

bool opt_bool(const json& j, const std::string& key, const std::string& where, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError(join(where, key), "expected a boolean");
    return j.at(key).get<bool>();
}

std::string string_field(const json& v, const std::string& field) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
}

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where.empty() ? "/" : where, "expected an object");
}

// {"min_deg": a, "max_deg": b, "count": n} -> radians, endpoints included.
std::vector<double> parse_axis(const json& j, const std::string& where) {
    require_object(j, where);
    reject_unknown(j, where, {"min_deg", "max_deg", "count", "values_deg"});
    std::vector<double> out;
    if (j.contains("values_deg")) {
        const auto& v = j.at("values_deg");
        if (!v.is_array() || v.empty()) throw ConfigError(join(where, "values_deg"), "expected a nonempty array");
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(number(v[i], join(where, "values_deg/" + std::to_string(i))) * kDeg);
        return out;
    }
    const double lo = number(need(j, "min_deg", where), join(where, "min_deg"));
    const double hi = number(need(j, "max_deg", where), join(where, "max_deg"));
    const auto n = count(need(j, "count", where), join(where, "count"));
    if (n == 0) throw ConfigError(join(where, "count"), "must be at least 1");
    for (std::uint64_t i = 0; i < n; ++i)
        out.push_back((n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1)) * kDeg);
    return out;
}

SyntheticConfig parse_synthetic(const json& j, const std::string& where, bool& seed_from_run) {
    require_object(j, where);
    reject_unknown(j, where, {"K", "N", "L", "samples_per_grid", "p", "s", "seed", "floor_mw"});
    SyntheticConfig s;
    s.n_grids = opt_count(j, "K", where, s.n_grids);
    s.n_angles = opt_count(j, "N", where, s.n_angles);
    s.sparsity = opt_count(j, "L", where, s.sparsity);
    s.samples_per_grid = opt_count(j, "samples_per_grid", where, s.samples_per_grid);
    s.laplace_power = opt_number(j, "p", where, s.laplace_power);
    s.scale = opt_number(j, "s", where, s.scale);
    s.floor_mw = opt_number(j, "floor_mw", where, s.floor_mw);
    seed_from_run = !j.contains("seed");
    s.seed = opt_count(j, "seed", where, 0);
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError(where, e.what());
    }
    return s;
}

void parse_train(const json& j, const std::string& where, TrainConfig& t) {
    require_object(j, where);
    reject_unknown(j, where,
                   {"pretrain_epochs", "total_epochs", "batch_size", "learning_rate", "weight_decay", "w1", "w2",
                    "val_fraction", "width", "depth", "naive_init_std", "exclude_empty_grids", "kmeans_restarts"});
    t.pretrain_epochs = opt_count(j, "pretrain_epochs", where, t.pretrain_epochs);
    t.total_epochs = opt_count(j, "total_epochs", where, t.total_epochs);
    t.batch_size = opt_count(j, "batch_size", where, t.batch_size);
    t.optimizer.learning_rate = opt_number(j, "learning_rate", where, t.optimizer.learning_rate);
    t.optimizer.weight_decay = opt_number(j, "weight_decay", where, t.optimizer.weight_decay);
    t.weights.reconstruction = opt_number(j, "w1", where, t.weights.reconstruction);
    t.weights.quantization = opt_number(j, "w2", where, t.weights.quantization);
    t.val_fraction = opt_number(j, "val_fraction", where, t.val_fraction);
    t.width = opt_count(j, "width", where, t.width);
    t.depth = opt_count(j, "depth", where, t.depth);
    t.naive_init_std = opt_number(j, "naive_init_std", where, t.naive_init_std);
    t.exclude_empty_grids = opt_bool(j, "exclude_empty_grids", where, t.exclude_empty_grids);
    t.kmeans_restarts = opt_count(j, "kmeans_restarts", where, t.kmeans_restarts);
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError(where, e.what());
    }
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << text;
    out.close();
    require(!out.fail(), ErrorKind::io, "write failed for " + path.string());
}

json filtered_metrics(const MetricsReport& report, const std::vector<std::string>& keep) {
    json all = to_json(report);
    if (keep.empty()) return all;
    json out;
    for (const auto& k : keep)
        if (all.contains(k)) out[k] = all[k];
    out["provenance"] = all["provenance"];
    return out;
}

std::string method_slug(const std::string& method) {
    std::string s = method;
    std::replace(s.begin(), s.end(), ':', '-');
    return s;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) { write_text(path, text); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string prediction_csv(const GridPrediction& p) {
    std::ostringstream out;
    const auto m = p.dbm.empty() ? 0 : static_cast<std::size_t>(p.dbm.front().size());
    out << "grid,active";
    for (std::size_t b = 0; b < m; ++b) out << ",beam_" << b;
    out << '\n';
    for (std::size_t g = 0; g < p.dbm.size(); ++g) {
        out << g << ',' << (p.active[g] ? 1 : 0);
        for (Eigen::Index b = 0; b < p.dbm[g].size(); ++b) out << ',' << format_double(p.dbm[g][b]);
        out << '\n';
    }
    return out.str();
}

std::string labels_csv(const Labels& labels) {
    std::ostringstream out;
    out << "sample,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
    return out.str();
}

Labels parse_labels_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.rfind("sample,label", 0) == 0, ErrorKind::corrupt,
            "labels file must start with the header 'sample,label'");
    Labels out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, ErrorKind::corrupt, "labels line " + std::to_string(row) + ": missing comma");
        char* end = nullptr;
        const auto idx = std::strtoull(line.c_str(), &end, 10);
        require(end == line.c_str() + comma && idx == out.size(), ErrorKind::corrupt,
                "labels line " + std::to_string(row) + ": sample index out of sequence");
        const char* lab = line.c_str() + comma + 1;
        const auto v = std::strtoull(lab, &end, 10);
        require(end != lab && (*end == '\0' || *end == '\r') && v <= 0xffffffffULL, ErrorKind::corrupt,
                "labels line " + std::to_string(row) + ": bad label");
        out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
}

std::string run_file_stem(const std::string& method, std::uint64_t seed, std::size_t round) {
    return method_slug(method) + "__seed" + std::to_string(seed) + "__round" + std::to_string(round);
}

bool is_method(const std::string& name) {
    constexpr std::string_view prefix = "csg_ae:";
    if (name.rfind(prefix, 0) == 0) return SchemeFlags::parse(name.substr(prefix.size())).has_value();
    return is_pipeline(name);
}

AntennaConfig parse_antenna(const json& j, const std::string& where) {
    require_object(j, where);
    reject_unknown(j, where, {"n_y", "n_z", "spacing_y", "spacing_z", "wavelength", "power_mw", "gain"});
    AntennaConfig a;
    a.n_y = opt_count(j, "n_y", where, a.n_y);
    a.n_z = opt_count(j, "n_z", where, a.n_z);
    a.spacing_y = opt_number(j, "spacing_y", where, a.spacing_y);
    a.spacing_z = opt_number(j, "spacing_z", where, a.spacing_z);
    a.wavelength = opt_number(j, "wavelength", where, a.wavelength);
    a.power_mw = opt_number(j, "power_mw", where, a.power_mw);
    if (j.contains("gain")) {
        const auto& g = j.at("gain");
        if (!g.is_array()) throw ConfigError(join(where, "gain"), "expected an array");
        for (std::size_t i = 0; i < g.size(); ++i) a.gain.push_back(number(g[i], join(where, "gain/" + std::to_string(i))));
    }
    if (a.n_y == 0 || a.n_z == 0) throw ConfigError(where, "panel dimensions must be positive");
    if (a.wavelength <= 0) throw ConfigError(join(where, "wavelength"), "must be positive");
    if (a.power_mw <= 0) throw ConfigError(join(where, "power_mw"), "must be positive");
    return a;
}

AngularGrid parse_grid(const json& j, const std::string& where) {
    require_object(j, where);
    reject_unknown(j, where, {"elevation", "azimuth"});
    AngularGrid g;
    g.elevations = parse_axis(need(j, "elevation", where), join(where, "elevation"));
    g.azimuths = parse_axis(need(j, "azimuth", where), join(where, "azimuth"));
    return g;
}

BeamSpec parse_beam_spec(const json& j, const std::string& where) {
    BeamSpec spec;
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s != "desk") throw ConfigError(where, "string form accepts only \"desk\"");
        return parse_beam_spec(desk_beam_json(), where);
    }
    require_object(j, where);
    if (j.contains("path")) {
        reject_unknown(j, where, {"path"});
        spec.path = string_field(j.at("path"), join(where, "path"));
        if (!std::filesystem::exists(*spec.path)) throw ConfigError(join(where, "path"), "file does not exist");
        return spec;
    }
    reject_unknown(j, where, {"antenna", "grid", "precoder"});
    spec.antenna = parse_antenna(need(j, "antenna", where), join(where, "antenna"));
    spec.grid = parse_grid(need(j, "grid", where), join(where, "grid"));
    const auto& p = need(j, "precoder", where);
    const auto pw = join(where, "precoder");
    require_object(p, pw);
    const auto type = string_field(need(p, "type", pw), join(pw, "type"));
    if (type == "steered") {
        reject_unknown(p, pw, {"type", "directions_deg"});
        const auto& d = need(p, "directions_deg", pw);
        if (!d.is_array() || d.empty()) throw ConfigError(join(pw, "directions_deg"), "expected a nonempty array");
        for (std::size_t i = 0; i < d.size(); ++i)
            if (!d[i].is_array() || d[i].size() != 2)
                throw ConfigError(join(pw, "directions_deg/" + std::to_string(i)), "expected [theta_deg, phi_deg]");
    } else if (type == "steered_grid") {
        reject_unknown(p, pw, {"type", "elevation", "azimuth"});
        parse_axis(need(p, "elevation", pw), join(pw, "elevation"));
        parse_axis(need(p, "azimuth", pw), join(pw, "azimuth"));
    } else if (type == "random_phase") {
        reject_unknown(p, pw, {"type", "beams", "seed"});
        if (count(need(p, "beams", pw), join(pw, "beams")) == 0) throw ConfigError(join(pw, "beams"), "must be at least 1");
        opt_count(p, "seed", pw, 0);
    } else {
        throw ConfigError(join(pw, "type"), "unknown precoder type '" + type + "'");
    }
    spec.precoder = p;
    if (!spec.antenna.gain.empty() && spec.antenna.gain.size() != spec.grid.size())
        throw ConfigError(join(where, "antenna/gain"), "length must equal the number of grid angles");
    return spec;
}

BeamPatternMatrix build_beam(const BeamSpec& spec) {
    if (spec.path) return load_beam_pattern(*spec.path);
    AntennaConfig ant = spec.antenna;
    const auto& p = spec.precoder;
    const auto type = p.at("type").get<std::string>();
    if (type == "random_phase") {
        ant.precoder = random_phase_precoder(ant.n_elements(), p.at("beams").get<std::size_t>(),
                                             p.value("seed", std::uint64_t{0}));
    } else {
        std::vector<std::pair<double, double>> dirs;
        if (type == "steered") {
            for (const auto& d : p.at("directions_deg")) dirs.emplace_back(d[0].get<double>() * kDeg, d[1].get<double>() * kDeg);
        } else {
            const auto el = parse_axis(p.at("elevation"), "/beam/precoder/elevation");
            const auto az = parse_axis(p.at("azimuth"), "/beam/precoder/azimuth");
            for (double t : el)
                for (double f : az) dirs.emplace_back(t, f);
        }
        ant.precoder = steered_precoder(ant, dirs);
    }
    return build_beam_pattern(ant, spec.grid);
}

json desk_beam_json() {
    return json{{"antenna", {{"n_y", 8}, {"n_z", 4}, {"spacing_y", 0.5}, {"spacing_z", 0.5}, {"wavelength", 1.0},
                             {"power_mw", 1.0}}},
                {"grid", {{"elevation", {{"min_deg", 60.0}, {"max_deg", 120.0}, {"count", 16}}},
                          {"azimuth", {{"min_deg", -60.0}, {"max_deg", 60.0}, {"count", 16}}}}},
                {"precoder", {{"type", "steered_grid"},
                              {"elevation", {{"min_deg", 67.5}, {"max_deg", 112.5}, {"count", 4}}},
                              {"azimuth", {{"min_deg", -52.5}, {"max_deg", 52.5}, {"count", 8}}}}}};
}

BeamPatternMatrix desk_beam() { return build_beam(parse_beam_spec(desk_beam_json(), "/beam")); }

ExperimentConfig parse_experiment_config(const json& j) {
    require_object(j, "");
    reject_unknown(j, "", {"dataset", "beam", "methods", "seeds", "scales", "metrics", "output_dir", "train", "K", "L",
                           "workers"});
    ExperimentConfig cfg;

    const auto& d = need(j, "dataset", "");
    require_object(d, "/dataset");
    if (d.contains("path")) {
        reject_unknown(d, "/dataset", {"path"});
        cfg.dataset.path = string_field(d.at("path"), "/dataset/path");
        if (!std::filesystem::exists(*cfg.dataset.path)) throw ConfigError("/dataset/path", "file does not exist");
    } else {
        reject_unknown(d, "/dataset", {"synthetic"});
        cfg.dataset.synthetic =
            parse_synthetic(need(d, "synthetic", "/dataset"), "/dataset/synthetic", cfg.dataset.seed_from_run);
    }

    cfg.beam = parse_beam_spec(need(j, "beam", ""), "/beam");

    const auto& m = need(j, "methods", "");
    if (!m.is_array() || m.empty()) throw ConfigError("/methods", "expected a nonempty array");
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto field = "/methods/" + std::to_string(i);
        auto name = string_field(m[i], field);
        if (!is_method(name)) throw ConfigError(field, "unknown method '" + name + "'");
        cfg.methods.push_back(std::move(name));
    }

    const auto& s = need(j, "seeds", "");
    if (!s.is_array() || s.empty()) throw ConfigError("/seeds", "expected a nonempty array");
    for (std::size_t i = 0; i < s.size(); ++i) cfg.seeds.push_back(count(s[i], "/seeds/" + std::to_string(i)));

    if (j.contains("scales")) {
        const auto& sc = j.at("scales");
        if (!sc.is_array() || sc.empty()) throw ConfigError("/scales", "expected a nonempty array");
        if (cfg.dataset.path) throw ConfigError("/scales", "scale rounds need a synthetic dataset");
        for (std::size_t i = 0; i < sc.size(); ++i) {
            const auto field = "/scales/" + std::to_string(i);
            const double v = number(sc[i], field);
            if (v < 0 || v > 1) throw ConfigError(field, "scale must lie in [0, 1]");
            cfg.scales.push_back(v);
        }
    }

    if (j.contains("metrics")) {
        const auto& ms = j.at("metrics");
        if (!ms.is_array()) throw ConfigError("/metrics", "expected an array");
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const auto field = "/metrics/" + std::to_string(i);
            auto name = string_field(ms[i], field);
            const auto& known = metric_names();
            if (std::find(known.begin(), known.end(), name) == known.end())
                throw ConfigError(field, "unknown metric '" + name + "'");
            cfg.metrics.push_back(std::move(name));
        }
    }

    if (j.contains("output_dir")) cfg.output_dir = string_field(j.at("output_dir"), "/output_dir");
    if (j.contains("train")) parse_train(j.at("train"), "/train", cfg.train);
    if (j.contains("K")) {
        cfg.n_grids = count(j.at("K"), "/K");
        if (*cfg.n_grids == 0) throw ConfigError("/K", "must be at least 1");
    }
    if (j.contains("L")) {
        cfg.sparsity = count(j.at("L"), "/L");
        if (*cfg.sparsity == 0) throw ConfigError("/L", "must be at least 1");
    }
    cfg.workers = opt_count(j, "workers", "", 1);
    if (cfg.workers == 0) throw ConfigError("/workers", "must be at least 1");
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError(path.string() + ":" + std::to_string(line), std::string("JSON parse error: ") + e.what());
    }
    return parse_experiment_config(j);
}

void apply_environment_overrides(ExperimentConfig& cfg) {
    if (const char* dir = std::getenv("CSG_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
    if (const char* w = std::getenv("CSG_WORKERS"); w && *w) {
        char* end = nullptr;
        const long v = std::strtol(w, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError("CSG_WORKERS", "expected a positive integer");
        cfg.workers = static_cast<std::size_t>(v);
    }
}

MetricsReport evaluate(const SyntheticDataset& ds, const BeamPatternMatrix& a, const Labels& labels, std::size_t k,
                       double active_ratio, const Matrix* centers, const GridCapsSummary* summary,
                       double floor_mw) {
    MetricsReport r;
    r.active_ratio = active_ratio;
    r.floor_dbm = to_dbm(floor_mw, floor_mw);
    if (ds.has_labels()) r.clustering = clustering_metrics(ds.labels, labels);
    if (centers && centers->rows() > 0 && ds.has_labels()) {
        const auto nmse = sample_mean_nmse(ds.centers, ds.labels, *centers, labels);
        r.sample_mean_nmse = nmse.value;
        r.nmse_skipped = nmse.skipped_zero_norm;
        r.matched_sample_mean_nmse = matched_sample_mean_nmse(ds.centers, ds.labels, *centers).value;
        r.center_wasserstein = center_wasserstein(ds.centers, *centers);
    }
    if (summary) {
        const auto real = grid_average_rsrp(ds.rsrp_dbm, labels, k, floor_mw);
        const auto pred = predict_under_beam(*summary, a, floor_mw);
        Matrix pred_dbm(static_cast<Eigen::Index>(k), real.dbm.cols());
        for (std::size_t g = 0; g < k; ++g) pred_dbm.row(static_cast<Eigen::Index>(g)) = pred.dbm[g].transpose();
        const auto mae = grid_mae(real.dbm, pred_dbm, real.active);
        r.active_mae = mae.active_mae;
        r.overall_mae = mae.overall_mae;
    }
    return r;
}

RunOutcome run_cell(const ExperimentConfig& cfg, const BeamPatternMatrix& a, const std::string& method,
                    std::uint64_t seed, std::size_t round) {
    RunOutcome out;
    out.method = method;
    out.seed = seed;
    out.round = round;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        SyntheticDataset ds;
        double floor_mw = kDefaultFloorMw;
        if (cfg.dataset.path) {
            ds = load_dataset(*cfg.dataset.path);
        } else {
            SyntheticConfig sc = cfg.dataset.synthetic;
            if (cfg.dataset.seed_from_run) sc.seed = seed;
            if (!cfg.scales.empty()) sc.scale = cfg.scales[round];
            floor_mw = sc.floor_mw;
            ds = gen_dataset(sc, a);
        }
        out.scale = ds.scale;
        const std::size_t k = cfg.n_grids.value_or(ds.n_grids());
        const std::size_t l = cfg.sparsity.value_or(ds.sparsity);

        if (method.rfind("csg_ae:", 0) == 0) {
            TrainConfig t = cfg.train;
            t.scheme = *SchemeFlags::parse(method.substr(7));
            t.seed = seed;
            t.n_grids = k;
            t.sparsity = l;
            t.floor_mw = floor_mw;
            auto r = train(t, ds, a);
            out.report = evaluate(ds, a, r.assignment.labels, k, r.final_active_ratio, &r.assignment.centers,
                                  &r.summary, floor_mw);
            out.log = std::move(r.log);
        } else {
            const auto p = run_pipeline(method, ds, a, k, l, seed);
            std::set<std::uint32_t> used(p.labels.begin(), p.labels.end());
            const double ar = static_cast<double>(used.size()) / static_cast<double>(k);
            std::optional<GridCapsSummary> summary;
            if (p.has_centers()) summary = pipeline_summary(p, a, k, l, floor_mw);
            out.report = evaluate(ds, a, p.labels, k, ar, p.has_centers() ? &p.centers : nullptr,
                                  summary ? &*summary : nullptr, floor_mw);
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

SweepResult run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const std::string started = utc_now();
    const BeamPatternMatrix a = build_beam(cfg.beam);

    struct Cell {
        std::string method;
        std::uint64_t seed;
        std::size_t round;
    };
    std::vector<Cell> cells;
    const std::size_t rounds = cfg.scales.empty() ? 1 : cfg.scales.size();
    for (std::size_t r = 0; r < rounds; ++r)
        for (const auto& m : cfg.methods)
            for (auto s : cfg.seeds) cells.push_back({m, s, r});

    fs::create_directories(cfg.output_dir / "runs");
    fs::create_directories(cfg.output_dir / "curves");

    SweepResult result;
    result.runs.resize(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const auto& c = cells[i];
            RunOutcome o = run_cell(cfg, a, c.method, c.seed, c.round);
            const auto stem = run_file_stem(c.method, c.seed, c.round);
            json doc{{"method", o.method}, {"seed", o.seed}, {"round", o.round}, {"status", o.ok ? "ok" : "failed"}};
            if (o.ok) {
                doc["scale"] = o.scale;
                doc["metrics"] = filtered_metrics(o.report, cfg.metrics);
            } else {
                doc["error"] = o.error;
            }
            try {
                write_text(cfg.output_dir / "runs" / (stem + ".json"), doc.dump(2) + "\n");
                if (o.log) {
                    std::ostringstream csv;
                    write_train_log_csv(*o.log, csv);
                    write_text(cfg.output_dir / "curves" / (stem + ".csv"), csv.str());
                }
            } catch (const std::exception& e) {
                o.ok = false;
                o.error = e.what();
            }
            result.runs[i] = std::move(o);
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    // Aggregate in config order: round, method, metric.
    const auto& keys = cfg.metrics.empty() ? metric_names() : cfg.metrics;
    std::ostringstream agg;
    agg << "round,scale,method,metric,n,mean,min,max,spread\n";
    for (std::size_t r = 0; r < rounds; ++r) {
        for (const auto& m : cfg.methods) {
            std::map<std::string, std::vector<double>> values;
            double scale = cfg.scales.empty() ? cfg.dataset.synthetic.scale : cfg.scales[r];
            for (const auto& o : result.runs) {
                if (o.round != r || o.method != m || !o.ok) continue;
                scale = o.scale;
                const json mj = to_json(o.report);
                for (const auto& k : keys)
                    if (mj.contains(k)) values[k].push_back(mj[k].get<double>());
            }
            for (const auto& k : keys) {
                auto it = values.find(k);
                if (it == values.end() || it->second.empty()) continue;
                const auto& v = it->second;
                double sum = 0.0;
                for (double x : v) sum += x;
                const double mean = sum / static_cast<double>(v.size());
                const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
                agg << r << ',' << format_double(scale) << ',' << m << ',' << k << ',' << v.size() << ','
                    << format_double(mean) << ',' << format_double(*lo) << ',' << format_double(*hi) << ','
                    << format_double(*hi - *lo) << '\n';
            }
        }
    }
    write_text(cfg.output_dir / "aggregate.csv", agg.str());

    json manifest;
    manifest["started_utc"] = started;
    manifest["finished_utc"] = utc_now();
    manifest["workers"] = n_workers;
    std::size_t failures = 0;
    json list = json::array();
    for (const auto& o : result.runs) {
        json e{{"file", run_file_stem(o.method, o.seed, o.round)}, {"status", o.ok ? "ok" : "failed"},
               {"wall_seconds", o.wall_seconds}};
        if (!o.ok) {
            e["error"] = o.error;
            ++failures;
        }
        list.push_back(std::move(e));
    }
    manifest["runs"] = std::move(list);
    manifest["failures"] = failures;
    write_text(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
    result.exit_code = failures == 0 ? 0 : 1;
    return result;
}

}  // namespace csg
