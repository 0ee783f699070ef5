#include "stochar/boundary.hpp"
#include "stochar/ergodic.hpp"
#include "stochar/error.hpp"
#include "stochar/estimate.hpp"
#include "stochar/hormander.hpp"
#include "stochar/io.hpp"
#include "stochar/model.hpp"
#include "stochar/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef STOCHAR_VERSION
#define STOCHAR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stochar;

namespace {

constexpr int kOk = 0;
constexpr int kNegative = 1;
constexpr int kUsage = 2;
constexpr int kEstimation = 3;

constexpr const char* kManifestSchema = "stochar.manifest/1";

// ------------------------------------------------------------ helpers

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::vector<double> parse_vec(const std::string& s, const std::string& where) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ParseError(where, "not a number: '" + item + "'");
        }
    }
    if (v.empty()) throw ParseError(where, "empty list");
    return v;
}

// One point per line; blank lines, '#' comments and a non-numeric header are skipped.
std::vector<std::vector<double>> read_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open points file");
    std::vector<std::vector<double>> pts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        if (pts.empty() && line.find_first_of("0123456789") == std::string::npos) continue;
        pts.push_back(parse_vec(line, path + ":" + std::to_string(lineno)));
    }
    if (pts.empty()) throw ParseError(path, "no points");
    return pts;
}

void check_dims(const std::vector<std::vector<double>>& pts, std::size_t m, const std::string& what) {
    for (const auto& p : pts) {
        if (p.size() != m) {
            throw DimensionError(what + ": point has " + std::to_string(p.size()) + " coordinates, expected " +
                                 std::to_string(m));
        }
    }
}

json parse_json_arg(const std::string& s, const std::string& where) {
    try {
        return json::parse(s);
    } catch (const json::parse_error& e) {
        throw ParseError(where, e.what());
    }
}

// ---------------------------------------------------------- run context

struct Common {
    std::string model_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out_dir;
    std::optional<double> dt, horizon;
    bool no_bridge = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-m,--model", c.model_path, "model spec (JSON)")->required();
    sub->add_option("--seed", c.seed, "RNG seed (generated and recorded when absent)");
    sub->add_option("--threads", c.threads, "worker threads (env STOCHAR_THREADS)");
    sub->add_option("--out-dir", c.out_dir, "output directory (env STOCHAR_OUT_DIR)");
    sub->add_option("--dt", c.dt, "time step (overrides the model)");
    sub->add_option("--horizon", c.horizon, "censoring horizon (overrides the model)");
    sub->add_flag("--no-bridge", c.no_bridge, "disable the Brownian-bridge exit test");
}

class Run {
public:
    Run(std::string command, const Common& c, json params) : command_(std::move(command)), params_(std::move(params)) {
        start_ = std::chrono::steady_clock::now();
        out_dir_ = c.out_dir;
        if (out_dir_.empty()) {
            const char* env = std::getenv("STOCHAR_OUT_DIR");
            out_dir_ = env && *env ? env : ".";
        }
        std::size_t threads = 1;
        if (c.threads) {
            threads = *c.threads;
        } else if (const char* env = std::getenv("STOCHAR_THREADS"); env && *env) {
            try {
                threads = static_cast<std::size_t>(std::stoul(env));
            } catch (const std::exception&) {
                throw UsageError(std::string("STOCHAR_THREADS: not a count: '") + env + "'");
            }
        }
        if (threads == 0) throw UsageError("--threads must be positive");

        if (!c.model_path.empty()) {
            const std::string text = read_file(c.model_path);
            model_hash_ = sha256_hex(text);
            try {
                loaded_.emplace(load_model_text(text));
            } catch (const ParseError& e) {
                throw ParseError(c.model_path, e.what());
            }
            sim_ = loaded_->sim;
        }
        if (c.seed) {
            sim_.seed = *c.seed;
            seed_source_ = "flag";
        } else if (loaded_ && loaded_->source.contains("sim") && loaded_->source["sim"].contains("seed")) {
            seed_source_ = "model";
        } else {
            std::random_device rd;
            sim_.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            seed_source_ = "generated";
        }
        if (c.dt) sim_.dt = *c.dt;
        if (c.horizon) sim_.horizon = *c.horizon;
        if (c.no_bridge) sim_.bridge_correction = false;
        sim_.threads = threads;
        sim_.validate();

        fs::create_directories(out_dir_);
    }

    const LoadedModel& model() const {
        if (!loaded_) throw UsageError(command_ + ": --model is required");
        return *loaded_;
    }
    const SimConfig& sim() const { return sim_; }
    SimConfig& sim() { return sim_; }

    void write(const std::string& name, const std::string& content) {
        const fs::path p = fs::path(out_dir_) / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw UsageError("cannot write " + p.string());
        out << content;
        outputs_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void finish(int code) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json config = {{"command", command_},
                       {"params", params_},
                       {"sim",
                        {{"dt", sim_.dt},
                         {"horizon", sim_.horizon},
                         {"bridge_correction", sim_.bridge_correction},
                         {"threads", sim_.threads}}}};
        if (loaded_) config["model"] = loaded_->source;
        json manifest = {{"schema", kManifestSchema},
                         {"tool_version", STOCHAR_VERSION},
                         {"model_sha256", model_hash_.empty() ? json(nullptr) : json(model_hash_)},
                         {"seed", sim_.seed},
                         {"seed_source", seed_source_},
                         {"config", config},
                         {"outputs", outputs_},
                         {"exit_code", code},
                         {"timings", {{"wall_seconds", secs}}}};
        const fs::path p = fs::path(out_dir_) / (command_ + ".manifest.json");
        std::ofstream out(p);
        out << manifest.dump(2) << "\n";
    }

private:
    std::string command_;
    json params_;
    std::string out_dir_;
    std::optional<LoadedModel> loaded_;
    SimConfig sim_;
    std::string model_hash_;
    std::string seed_source_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<std::vector<double>> gather_points(const std::vector<std::string>& xs, const std::string& file,
                                               std::size_t m, const std::string& what) {
    std::vector<std::vector<double>> pts;
    for (const auto& s : xs) pts.push_back(parse_vec(s, "--x"));
    if (!file.empty()) {
        auto more = read_points(file);
        pts.insert(pts.end(), more.begin(), more.end());
    }
    if (pts.empty()) throw UsageError(what + ": give --x or --points");
    check_dims(pts, m, what);
    return pts;
}

std::string coord_header(std::size_t m) {
    std::string s;
    for (std::size_t i = 0; i < m; ++i) s += "x" + std::to_string(i + 1) + ",";
    return s;
}

std::string estimate_row(const MCEstimate& e) {
    return io::fmt17(e.mean) + "," + io::fmt17(e.std_error) + "," + std::to_string(e.n) + "," +
           io::fmt17(e.censored_fraction);
}

// ----------------------------------------------------------- commands

struct HormanderArgs {
    Common c;
    std::vector<std::string> xs;
    std::string points;
    int depth = 4;
    std::string mode = "parabolic";
    double rank_tol = 1e-8;
};

int cmd_check_hormander(const HormanderArgs& a) {
    Run run("check-hormander", a.c, {{"x", a.xs}, {"points", a.points}, {"depth", a.depth}, {"mode", a.mode}});
    const auto& lm = run.model();
    if (!lm.model.is_polynomial()) throw UsageError("check-hormander: the model has non-polynomial coefficients");
    if (a.mode != "parabolic" && a.mode != "full") throw UsageError("--mode must be parabolic or full");
    const auto pts = gather_points(a.xs, a.points, lm.model.dim_state(), "check-hormander");
    const auto form = to_hormander_form(lm.model.drift_poly(), lm.model.sigma_poly());
    const auto report = check_hormander(form, pts, a.depth, a.rank_tol,
                                        a.mode == "full" ? SpanMode::full : SpanMode::parabolic);
    run.write("hormander.json", report.to_json() + "\n");
    run.write("hormander.txt", report.to_table());
    std::cout << report.to_table();
    const int code = report.spans_everywhere ? kOk : kNegative;
    run.finish(code);
    return code;
}

struct SimulateArgs {
    Common c;
    std::string x;
    std::size_t paths = 1000;
    bool store_paths = false;
    std::size_t stride = 1;
};

int cmd_simulate(const SimulateArgs& a) {
    Run run("simulate", a.c, {{"x", a.x}, {"paths", a.paths}, {"store_paths", a.store_paths}, {"stride", a.stride}});
    const auto& lm = run.model();
    const auto x = gather_points({a.x}, "", lm.model.dim_state(), "simulate").front();
    run.sim().store_path = a.store_paths;
    run.sim().path_stride = a.stride;
    const auto batch = simulate_batch(lm.model, lm.domain, x, run.sim(), a.paths);
    run.write("exits.csv", batch_to_csv(batch, lm.model.dim_state()));
    if (a.store_paths) run.write("paths.csv", paths_to_csv(batch, lm.model.dim_state()));
    std::cout << "paths " << batch.n_paths << ", censored fraction " << io::fmt17(batch.censored_fraction())
              << ", exploded " << batch.exploded_count() << "\n";
    run.finish(kOk);
    return kOk;
}

struct SolveArgs {
    Common c;
    std::vector<std::string> xs;
    std::string points;
    std::string f = "0", g = "0";
    std::size_t paths = 10000;
};

int cmd_solve(const SolveArgs& a) {
    Run run("solve", a.c, {{"x", a.xs}, {"points", a.points}, {"f", a.f}, {"g", a.g}, {"paths", a.paths}});
    const auto& lm = run.model();
    const std::size_t m = lm.model.dim_state();
    const auto pts = gather_points(a.xs, a.points, m, "solve");
    const auto f = ScalarFn::from_json(parse_json_arg(a.f, "--f"), m, "--f");
    const auto g = ScalarFn::from_json(parse_json_arg(a.g, "--g"), m, "--g");
    std::string csv = coord_header(m) + "mean,stderr,n,censored_fraction\n";
    for (const auto& x : pts) {
        const auto e = estimate_u_stoc(lm.model, lm.domain, f, g, x, a.paths, run.sim());
        csv += io::join17(x) + "," + estimate_row(e) + "\n";
    }
    run.write("solve.csv", csv);
    std::cout << csv;
    run.finish(kOk);
    return kOk;
}

struct SurvivalArgs {
    Common c;
    std::vector<std::string> xs;
    std::string points;
    std::string times;
    std::size_t paths = 10000;
};

int cmd_survival(const SurvivalArgs& a) {
    Run run("survival", a.c, {{"x", a.xs}, {"points", a.points}, {"times", a.times}, {"paths", a.paths}});
    const auto& lm = run.model();
    const std::size_t m = lm.model.dim_state();
    const auto pts = gather_points(a.xs, a.points, m, "survival");
    const auto times = parse_vec(a.times, "--times");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0) || !(times[i] < run.sim().horizon)) {
            throw UsageError("survival: times must lie in [0, horizon)");
        }
        if (i && times[i] < times[i - 1]) throw UsageError("survival: times must be nondecreasing");
    }
    std::string csv = coord_header(m) + "t,mean,stderr,n,censored_fraction\n";
    std::uint64_t offset = 0;
    for (const auto& x : pts) {
        if (!lm.domain.contains_closure(x)) throw UsageError("survival: start point lies outside the closure of U");
        const auto batch = simulate_batch(lm.model, lm.domain, x, run.sim(), a.paths, offset);
        offset += a.paths;
        const auto curve = survival_curve(batch, times);
        for (std::size_t i = 0; i < times.size(); ++i) {
            csv += io::join17(x) + "," + io::fmt17(times[i]) + "," + estimate_row(curve[i]) + "\n";
        }
    }
    run.write("survival.csv", csv);
    std::cout << csv;
    run.finish(kOk);
    return kOk;
}

struct GreenArgs {
    Common c;
    std::vector<std::string> xs;
    std::string points;
    double beta = 1.0;
    std::string f = "1";
    std::string grid_lo, grid_hi, grid_cells;
    std::size_t paths = 10000;
};

int cmd_green(const GreenArgs& a) {
    Run run("green", a.c,
            {{"x", a.xs}, {"points", a.points}, {"beta", a.beta}, {"f", a.f}, {"paths", a.paths},
             {"grid", {{"lo", a.grid_lo}, {"hi", a.grid_hi}, {"cells", a.grid_cells}}}});
    if (!(a.beta > 0.0)) throw UsageError("green: --beta must be positive");
    const auto& lm = run.model();
    const std::size_t m = lm.model.dim_state();
    const auto pts = gather_points(a.xs, a.points, m, "green");
    const auto f = ScalarFn::from_json(parse_json_arg(a.f, "--f"), m, "--f");
    std::optional<Grid> grid;
    if (!a.grid_lo.empty() || !a.grid_hi.empty() || !a.grid_cells.empty()) {
        const auto cells = parse_vec(a.grid_cells, "--grid-cells");
        std::vector<std::size_t> n;
        for (double v : cells) {
            if (!(v >= 1.0) || v != std::floor(v)) throw UsageError("--grid-cells must be positive integers");
            n.push_back(static_cast<std::size_t>(v));
        }
        grid.emplace(parse_vec(a.grid_lo, "--grid-lo"), parse_vec(a.grid_hi, "--grid-hi"), std::move(n));
        if (grid->dim() != m || grid->hi.size() != m || grid->cells.size() != m) {
            throw DimensionError("green: grid dimension does not match the model");
        }
    }
    std::string csv = coord_header(m) + "mean,stderr,n,censored_fraction,censoring_bias_bound\n";
    std::string dens;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto e = estimate_green(lm.model, lm.domain, a.beta, f, pts[k], a.paths, run.sim(), grid);
        csv += io::join17(pts[k]) + "," + estimate_row(e.value) + "," +
               (e.censoring_bias_bound ? io::fmt17(*e.censoring_bias_bound) : std::string("nan")) + "\n";
        if (e.density) {
            std::stringstream ss(e.density->to_csv());
            std::string line;
            std::getline(ss, line);
            if (k == 0) dens += "point," + line + "\n";
            while (std::getline(ss, line)) dens += std::to_string(k) + "," + line + "\n";
        }
    }
    run.write("green.csv", csv);
    if (grid) run.write("green_density.csv", dens);
    std::cout << csv;
    run.finish(kOk);
    return kOk;
}

struct ProbeArgs {
    Common c;
    std::string x_star;
    std::string h; // default {10, 30, 100} dt
    std::size_t paths = 10000;
    double upper = 0.99, lower = 0.01;
};

int cmd_probe(const ProbeArgs& a) {
    Run run("probe-boundary", a.c,
            {{"x_star", a.x_star}, {"h", a.h}, {"paths", a.paths}, {"upper", a.upper}, {"lower", a.lower}});
    const auto& lm = run.model();
    const auto x = gather_points({a.x_star}, "", lm.model.dim_state(), "probe-boundary").front();
    std::vector<double> hs;
    if (a.h.empty()) {
        for (double k : {10.0, 30.0, 100.0}) hs.push_back(k * run.sim().dt);
    } else {
        hs = parse_vec(a.h, "--h-schedule");
    }
    const auto probe = probe_regularity(lm.model, lm.domain, x, hs, a.paths, run.sim(), a.upper, a.lower);
    run.write("probe.csv", probe.to_csv());
    run.write_json("probe.json", probe.to_json());
    std::cout << "verdict: " << to_string(probe.verdict) << "\n" << probe.to_csv();
    const int code = probe.verdict == RegularityVerdict::regular_evidence ? kOk : kNegative;
    run.finish(code);
    return code;
}

struct CertifyArgs {
    Common c;
    std::string check = "nice";
    std::string x_star;
    // nice
    std::string witness = "sphere";
    std::string normal;
    double lambda = 0.1, beta = 200.0;
    std::string witness_poly;
    double radius = 0.05;
    int grid_n = 21;
    // uid / uip / ce
    std::string fn = "1";
    double delta = 0.05;
    std::string M = "1,2,4,8";
    double delta1 = 0.05;
    std::size_t n_points = 8;
    std::size_t paths = 2000;
};

int cmd_certify(const CertifyArgs& a) {
    Run run("certify", a.c,
            {{"check", a.check}, {"x_star", a.x_star}, {"witness", a.witness}, {"normal", a.normal},
             {"lambda", a.lambda}, {"beta", a.beta}, {"witness_poly", a.witness_poly}, {"radius", a.radius},
             {"grid_n", a.grid_n}, {"fn", a.fn}, {"delta", a.delta}, {"M", a.M}, {"delta1", a.delta1},
             {"n_points", a.n_points}, {"paths", a.paths}});
    const auto& lm = run.model();
    const std::size_t m = lm.model.dim_state();
    const auto x = gather_points({a.x_star}, "", m, "certify").front();
    int code = kOk;
    if (a.check == "nice") {
        Witness w = MultiPoly(m);
        if (a.witness == "sphere") {
            if (a.normal.empty()) throw UsageError("certify: the sphere witness needs --normal");
            const auto nu = gather_points({a.normal}, "", m, "certify --normal").front();
            try {
                w = construct_sphere_witness(lm.model, lm.domain, x, nu, a.lambda, a.beta);
            } catch (const ConditionError& e) {
                run.write_json("certify.json", {{"check", "nice"},
                                                {"valid", false},
                                                {"error", e.what()},
                                                {"normal_form", e.value()}});
                std::cerr << "stochar: " << e.what() << "\n";
                run.finish(kNegative);
                return kNegative;
            }
        } else if (a.witness == "poly") {
            w = io::poly_from_json(parse_json_arg(a.witness_poly, "--witness-poly"), m, "--witness-poly");
        } else {
            throw UsageError("certify: --witness must be sphere or poly");
        }
        const auto cert = certify_nice_point(lm.model, lm.domain, x, w, a.radius, a.grid_n);
        run.write_json("certify.json", cert.to_json());
        std::cout << cert.to_json().dump(2) << "\n";
        code = cert.valid ? kOk : kNegative;
    } else if (a.check == "uid" || a.check == "uip") {
        const auto fn = ScalarFn::from_json(parse_json_arg(a.fn, "--fn"), m, "--fn");
        const auto Ms = parse_vec(a.M, "--M");
        TailOptions opt;
        opt.n_points = a.n_points;
        const auto rep = a.check == "uid"
                             ? diagnose_uid(lm.model, lm.domain, fn, x, a.delta, Ms, a.paths, run.sim(), opt)
                             : diagnose_uip(lm.model, lm.domain, fn, x, a.delta, Ms, a.paths, run.sim(), opt);
        run.write(a.check + ".csv", rep.to_csv());
        run.write_json("certify.json", rep.to_json());
        std::cout << rep.to_csv();
        code = rep.passes ? kOk : kNegative;
    } else if (a.check == "ce") {
        const auto rep = diagnose_ce(lm.model, lm.domain, x, lm.exhaustion, a.delta1, a.paths, run.sim());
        run.write_json("certify.json", rep.to_json());
        std::cout << rep.to_json().dump(2) << "\n";
        code = rep.success ? kOk : kNegative;
    } else {
        throw UsageError("certify: --check must be nice, uid, uip or ce");
    }
    run.finish(code);
    return code;
}

struct ErgodicArgs {
    Common c;
    std::string verb;
    // certify
    std::string w;
    double C = 1.0, D = 1.0;
    int k_max = 5, grid_n = 41;
    double growth_floor = 10.0;
    // cycles / invariant-measure
    std::string center;
    double inner = 0.5, outer = 1.0;
    std::size_t cycles = 1000;
    std::size_t chains = 8;
    std::size_t burn_in = 0;
    std::string grid_lo, grid_hi, grid_cells;
    // classify
    double radius = 1.0;
    std::vector<std::string> starts;
    std::string horizons = "10,100,1000";
    std::size_t paths = 4000;
    // exp-exit
    std::string deltas = "0.5,1,2";
};

std::optional<Grid> grid_from(const ErgodicArgs& a, std::size_t m) {
    if (a.grid_lo.empty() && a.grid_hi.empty() && a.grid_cells.empty()) return std::nullopt;
    std::vector<std::size_t> n;
    for (double v : parse_vec(a.grid_cells, "--grid-cells")) {
        if (!(v >= 1.0) || v != std::floor(v)) throw UsageError("--grid-cells must be positive integers");
        n.push_back(static_cast<std::size_t>(v));
    }
    Grid g(parse_vec(a.grid_lo, "--grid-lo"), parse_vec(a.grid_hi, "--grid-hi"), std::move(n));
    if (g.dim() != m || g.hi.size() != m || g.cells.size() != m) {
        throw DimensionError("grid dimension does not match the model");
    }
    return g;
}

int cmd_ergodic(const ErgodicArgs& a) {
    Run run("ergodic-" + a.verb, a.c,
            {{"verb", a.verb}, {"w", a.w}, {"C", a.C}, {"D", a.D}, {"k_max", a.k_max}, {"grid_n", a.grid_n},
             {"growth_floor", a.growth_floor}, {"center", a.center}, {"inner", a.inner}, {"outer", a.outer},
             {"cycles", a.cycles}, {"chains", a.chains}, {"burn_in", a.burn_in},
             {"grid", {{"lo", a.grid_lo}, {"hi", a.grid_hi}, {"cells", a.grid_cells}}}, {"radius", a.radius},
             {"starts", a.starts}, {"horizons", a.horizons}, {"paths", a.paths}, {"deltas", a.deltas}});
    const auto& lm = run.model();
    const std::size_t m = lm.model.dim_state();
    std::vector<double> center(m, 0.0);
    if (!a.center.empty()) center = gather_points({a.center}, "", m, "--center").front();
    int code = kOk;

    if (a.verb == "certify") {
        if (a.w.empty()) throw UsageError("ergodic certify: --w is required");
        const auto w = io::poly_from_json(parse_json_arg(a.w, "--w"), m, "--w");
        const auto cert =
            certify_nonexplosive(lm.model, w, lm.exhaustion, a.C, a.D, a.k_max, a.grid_n, a.growth_floor);
        run.write_json("lyapunov.json", cert.to_json());
        std::cout << cert.to_json().dump(2) << "\n";
        code = cert.valid ? kOk : kNegative;
    } else if (a.verb == "cycles" || a.verb == "invariant-measure") {
        const CycleConfig cc{center, a.inner, a.outer};
        const auto grid = grid_from(a, m);
        if (a.verb == "invariant-measure" && !grid) throw UsageError("invariant-measure: a grid is required");
        CycleOptions opt;
        opt.n_chains = a.chains;
        const auto sample = run_cycles(lm.model, cc, a.cycles, run.sim(), grid, opt);
        run.write("cycles.csv", sample.to_csv());
        const auto chain = embedded_chain_stationary(sample, a.burn_in);
        run.write_json("chain.json", chain.to_json());
        if (a.verb == "invariant-measure") {
            const auto mu = estimate_invariant_measure(sample, a.burn_in);
            run.write("measure.csv", mu.to_csv());
            std::cout << "cycles used " << mu.cycles_used << ", normalizer " << io::fmt17(mu.normalizer)
                      << ", total mass " << io::fmt17(mu.total_mass()) << "\n";
        } else {
            std::cout << "completed cycles " << sample.completed() << ", censored " << sample.censored_cycles
                      << "\n"
                      << chain.to_json().dump(2) << "\n";
        }
    } else if (a.verb == "classify") {
        if (a.starts.empty()) throw UsageError("ergodic classify: give at least one --start");
        std::vector<std::vector<double>> starts;
        for (const auto& s : a.starts) starts.push_back(parse_vec(s, "--start"));
        check_dims(starts, m, "--start");
        const auto hs = parse_vec(a.horizons, "--horizons");
        const auto rep = classify_recurrence(lm.model, center, a.radius, starts, hs, a.paths, run.sim());
        run.write("recurrence.csv", rep.to_csv());
        run.write_json("recurrence.json", rep.to_json());
        std::cout << "verdict: " << to_string(rep.verdict) << "\n" << rep.to_csv();
        code = rep.verdict == RecurrenceVerdict::inconclusive ? kNegative : kOk;
    } else if (a.verb == "exp-exit") {
        if (a.starts.empty()) throw UsageError("ergodic exp-exit: give at least one --start");
        std::vector<std::vector<double>> starts;
        for (const auto& s : a.starts) starts.push_back(parse_vec(s, "--start"));
        check_dims(starts, m, "--start");
        const auto ds = parse_vec(a.deltas, "--deltas");
        const auto rep = estimate_exp_exit_bound(lm.model, lm.domain, ds, starts, a.paths, run.sim());
        run.write_json("exp_exit.json", rep.to_json());
        std::cout << rep.to_json().dump(2) << "\n";
        code = rep.largest_finite_delta ? kOk : kNegative;
    } else {
        throw UsageError("ergodic: unknown verb '" + a.verb + "'");
    }
    run.finish(code);
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo solver and diagnostics for degenerate-elliptic boundary value problems", "stochar"};
    app.set_version_flag("--version", STOCHAR_VERSION);
    app.require_subcommand(1);

    HormanderArgs ha;
    auto* sh = app.add_subcommand("check-hormander", "bracket spanning check at given points");
    add_common(sh, ha.c);
    sh->add_option("--x", ha.xs, "evaluation point, comma-separated (repeatable)");
    sh->add_option("--points", ha.points, "CSV file of evaluation points");
    sh->add_option("--depth", ha.depth, "maximum bracket depth")->check(CLI::NonNegativeNumber);
    sh->add_option("--mode", ha.mode, "parabolic (default) or full");
    sh->add_option("--rank-tol", ha.rank_tol, "relative singular-value cutoff");

    SimulateArgs sa;
    auto* ss = app.add_subcommand("simulate", "simulate stopped paths and record exits");
    add_common(ss, sa.c);
    ss->add_option("--x", sa.x, "start point")->required();
    ss->add_option("--paths", sa.paths, "number of paths");
    ss->add_flag("--store-paths", sa.store_paths, "also write every path");
    ss->add_option("--stride", sa.stride, "keep every k-th step of stored paths");

    SolveArgs so;
    auto* sv = app.add_subcommand("solve", "estimate u(x) = E int f + E g(x_tau)");
    add_common(sv, so.c);
    sv->add_option("--x", so.xs, "start point (repeatable)");
    sv->add_option("--points", so.points, "CSV file of start points");
    sv->add_option("--f", so.f, "running cost (JSON scalar function)");
    sv->add_option("--g", so.g, "boundary payoff (JSON scalar function)");
    sv->add_option("--paths", so.paths, "paths per point");

    SurvivalArgs su;
    auto* sr = app.add_subcommand("survival", "survival curve P{tau > t}");
    add_common(sr, su.c);
    sr->add_option("--x", su.xs, "start point (repeatable)");
    sr->add_option("--points", su.points, "CSV file of start points");
    sr->add_option("--times", su.times, "comma-separated times")->required();
    sr->add_option("--paths", su.paths, "paths per point");

    GreenArgs ga;
    auto* sg = app.add_subcommand("green", "discounted Green's operator G_beta f");
    add_common(sg, ga.c);
    sg->add_option("--x", ga.xs, "start point (repeatable)");
    sg->add_option("--points", ga.points, "CSV file of start points");
    sg->add_option("--beta", ga.beta, "discount rate (> 0)");
    sg->add_option("--f", ga.f, "integrand (JSON scalar function)");
    sg->add_option("--grid-lo", ga.grid_lo, "occupation histogram lower corner");
    sg->add_option("--grid-hi", ga.grid_hi, "occupation histogram upper corner");
    sg->add_option("--grid-cells", ga.grid_cells, "cells per axis");
    sg->add_option("--paths", ga.paths, "paths per point");

    ProbeArgs pa;
    auto* sp = app.add_subcommand("probe-boundary", "empirical regularity of a boundary point");
    add_common(sp, pa.c);
    sp->add_option("--x-star", pa.x_star, "boundary point")->required();
    sp->add_option("--h-schedule", pa.h, "comma-separated time schedule");
    sp->add_option("--paths", pa.paths, "number of paths");
    sp->add_option("--upper", pa.upper, "regular-evidence threshold");
    sp->add_option("--lower", pa.lower, "irregular-evidence threshold");

    CertifyArgs ca;
    auto* sc = app.add_subcommand("certify", "nice-point certificate or UID/UIP/CE diagnostics");
    add_common(sc, ca.c);
    sc->add_option("--check", ca.check, "nice (default), uid, uip or ce");
    sc->add_option("--x-star", ca.x_star, "boundary point")->required();
    sc->add_option("--witness", ca.witness, "sphere (default) or poly");
    sc->add_option("--normal", ca.normal, "exterior normal for the sphere witness");
    sc->add_option("--lambda", ca.lambda, "sphere witness offset");
    sc->add_option("--beta", ca.beta, "sphere witness sharpness");
    sc->add_option("--witness-poly", ca.witness_poly, "polynomial witness (JSON terms)");
    sc->add_option("--radius", ca.radius, "certificate neighbourhood radius");
    sc->add_option("--grid-n", ca.grid_n, "grid points per axis");
    sc->add_option("--fn", ca.fn, "g (uid) or f (uip) as a JSON scalar function");
    sc->add_option("--delta", ca.delta, "sampling radius around x*");
    sc->add_option("--M", ca.M, "comma-separated tail thresholds");
    sc->add_option("--delta1", ca.delta1, "escape probability bound (ce)");
    sc->add_option("--n-points", ca.n_points, "sampled start points");
    sc->add_option("--paths", ca.paths, "paths per sampled point");

    ErgodicArgs ea;
    auto* se = app.add_subcommand("ergodic", "nonexplosion, cycles, invariant measures and recurrence");
    add_common(se, ea.c);
    se->add_option("verb", ea.verb, "certify | cycles | invariant-measure | classify | exp-exit")
        ->required()
        ->check(CLI::IsMember({"certify", "cycles", "invariant-measure", "classify", "exp-exit"}));
    se->add_option("--w", ea.w, "Lyapunov candidate (JSON terms)");
    se->add_option("--C", ea.C, "Lyapunov rate");
    se->add_option("--D", ea.D, "Lyapunov offset");
    se->add_option("--k-max", ea.k_max, "exhaustion levels checked");
    se->add_option("--grid-n", ea.grid_n, "grid points per axis");
    se->add_option("--growth-floor", ea.growth_floor, "required boundary minimum growth");
    se->add_option("--center", ea.center, "center of the cycle spheres / target ball");
    se->add_option("--inner", ea.inner, "inner cycle radius");
    se->add_option("--outer", ea.outer, "outer cycle radius");
    se->add_option("--cycles", ea.cycles, "cycles in total");
    se->add_option("--chains", ea.chains, "independent chains");
    se->add_option("--burn-in", ea.burn_in, "cycles dropped per chain");
    se->add_option("--grid-lo", ea.grid_lo, "histogram lower corner");
    se->add_option("--grid-hi", ea.grid_hi, "histogram upper corner");
    se->add_option("--grid-cells", ea.grid_cells, "cells per axis");
    se->add_option("--radius", ea.radius, "target ball radius (classify)");
    se->add_option("--start", ea.starts, "start point (repeatable)");
    se->add_option("--horizons", ea.horizons, "comma-separated increasing horizons (classify)");
    se->add_option("--paths", ea.paths, "paths per start");
    se->add_option("--deltas", ea.deltas, "comma-separated exponents (exp-exit)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*sh) return cmd_check_hormander(ha);
        if (*ss) return cmd_simulate(sa);
        if (*sv) return cmd_solve(so);
        if (*sr) return cmd_survival(su);
        if (*sg) return cmd_green(ga);
        if (*sp) return cmd_probe(pa);
        if (*sc) return cmd_certify(ca);
        if (*se) return cmd_ergodic(ea);
    } catch (const EstimationError& e) {
        std::cerr << "stochar: estimation failed: " << e.what() << " (censored fraction "
                  << io::fmt17(e.censored_fraction()) << ")\n";
        return kEstimation;
    } catch (const ConditionError& e) {
        std::cerr << "stochar: " << e.what() << "\n";
        return kNegative;
    } catch (const Error& e) {
        std::cerr << "stochar: " << e.what() << "\n";
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "stochar: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
