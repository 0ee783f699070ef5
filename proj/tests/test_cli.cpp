#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kBin = STOCHAR_CLI;
const std::string kModels = STOCHAR_MODELS;

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("stochar_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + kBin + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

std::string model(const std::string& name) { return kModels + "/" + name + ".json"; }

} // namespace

TEST_CASE("check-hormander exit codes") {
    Scratch s("hormander");
    CHECK(run("check-hormander -m " + model("degenerate_square") + " --x 0,0 --x 1,1 --x -1,0.5 --depth 2 --out-dir " +
              s.dir.string()) == 0);
    const auto rep = read_json(s / "hormander.json");
    for (const auto& p : rep["points"]) CHECK(p["depth_reached"].get<int>() <= 2);
    CHECK(rep["points"][0]["depth_reached"] == 2);
    CHECK(fs::exists(s / "check-hormander.manifest.json"));

    CHECK(run("check-hormander -m " + model("pure_drift") + " --x 0,0 --depth 10 --out-dir " + s.dir.string()) == 1);

    std::ofstream(s / "bad.json") << "{\"schema\": \"stochar.model/1\", \"dim_state\": ";
    CHECK(run("check-hormander -m " + (s / "bad.json") + " --x 0 --out-dir " + s.dir.string()) == 2);
    CHECK(run("check-hormander --x 0") == 2);
}

TEST_CASE("solve") {
    Scratch s("solve");
    CHECK(run("solve -m " + model("bm_unit") + " --x 0.5 --f 1 --paths 20000 --seed 5 --out-dir " + s.dir.string()) == 0);
    std::istringstream csv(slurp(s / "solve.csv"));
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header == "x1,mean,stderr,n,censored_fraction");
    double x, mean, se;
    char c;
    std::istringstream(row) >> x >> c >> mean >> c >> se;
    CHECK(std::abs(mean - 0.25) < 3.0 * se + 0.002);

    CHECK(run("solve -m " + model("bm_unit") + " --x 0.5 --g 3 --paths 100 --seed 5 --out-dir " + s.dir.string()) == 0);
    CHECK(slurp(s / "solve.csv") == "x1,mean,stderr,n,censored_fraction\n0.5,3,0,100,0\n");

    std::ofstream(s / "huge.json") << R"({"schema": "stochar.model/1", "dim_state": 1, "dim_noise": 1, "drift": [0],
        "sigma": [[1]], "domain": {"kind": "box", "lo": [-1000], "hi": [1000]}})";
    CHECK(run("solve -m " + (s / "huge.json") + " --x 0 --f 1 --dt 1e-4 --horizon 0.001 --paths 50 --out-dir " +
              s.dir.string()) == 3);
}

TEST_CASE("probe, certify, green, ergodic") {
    Scratch s("misc");
    const std::string out = " --out-dir " + s.dir.string();
    CHECK(run("probe-boundary -m " + model("degenerate_square") +
              " --x-star 1,0 --dt 1e-4 --h-schedule 0.001,0.003,0.01 --paths 10000 --seed 1" + out) == 1);
    CHECK(read_json(s / "probe.json")["verdict"] == "irregular-evidence");
    CHECK(run("probe-boundary -m " + model("bm_unit") + " --x-star 0 --dt 1e-4 --paths 2000 --seed 1" + out) == 0);

    CHECK(run("certify -m " + model("bm_unit") + " --x-star 0 --normal=-1 --lambda 0.1 --beta 200 --seed 1" + out) == 0);
    CHECK(read_json(s / "certify.json")["valid"] == true);
    CHECK(run("certify -m " + model("degenerate_square") + " --x-star 1,0 --normal 1,0 --seed 1" + out) == 1);

    CHECK(run("green -m " + model("bm_unit") + " --x 0.5 --beta 0 --seed 1" + out) == 2);
    CHECK(run("green -m " + model("bm_unit") + " --x 0.5 --beta -1 --seed 1" + out) == 2);

    CHECK(run("ergodic classify -m " + model("ou") + " --start 2 --radius 1 --horizons 10,100 --paths 1000 --seed 1" +
              out) == 0);
    CHECK(read_json(s / "recurrence.json")["verdict"] == "positive-recurrent-evidence");
    CHECK(run("ergodic certify -m " + model("cubic_drift") + " --w '[[[0],1],[[2],1]]'" + out) == 1);
    CHECK(run("ergodic bogus -m " + model("ou") + out) == 2);
}

TEST_CASE("manifests, seeds and environment overrides") {
    Scratch s("manifest");
    CHECK(run("simulate -m " + model("bm_unit") + " --x 0.5 --paths 10 --out-dir " + s.dir.string()) == 0);
    auto m = read_json(s / "simulate.manifest.json");
    CHECK(m["schema"] == "stochar.manifest/1");
    CHECK(m["seed_source"] == "generated");
    CHECK(m["model_sha256"].get<std::string>().size() == 64);
    CHECK(m["config"]["sim"]["dt"] == 0.001);
    CHECK(m.contains("timings"));

    // Replaying the recorded seed reproduces the output.
    const auto first = slurp(s / "exits.csv");
    const auto seed = m["seed"].get<std::uint64_t>();
    CHECK(run("simulate -m " + model("bm_unit") + " --x 0.5 --paths 10 --seed " + std::to_string(seed) +
              " --out-dir " + s.dir.string()) == 0);
    CHECK(slurp(s / "exits.csv") == first);

    const std::string env_dir = s / "env";
    CHECK(run("simulate -m " + model("bm_unit") + " --x 0.5 --paths 10 --seed 3",
              "STOCHAR_OUT_DIR=" + env_dir + " STOCHAR_THREADS=3") == 0);
    m = read_json(env_dir + "/simulate.manifest.json");
    CHECK(m["config"]["sim"]["threads"] == 3);
    CHECK(run("simulate -m " + model("bm_unit") + " --x 0.5 --paths 10 --seed 3", "STOCHAR_OUT_DIR=" + env_dir +
              " STOCHAR_THREADS=zero") == 2);
}

TEST_CASE("CSV outputs are identical across 1, 4 and 16 threads") {
    Scratch s("threads");
    std::string ref;
    for (int t : {1, 4, 16}) {
        const std::string d = s / std::to_string(t);
        REQUIRE(run("simulate -m " + model("degenerate_square") + " --x 0.2,0.1 --paths 3000 --seed 9 --threads " +
                    std::to_string(t) + " --out-dir " + d) == 0);
        REQUIRE(run("green -m " + model("bm_unit") + " --x 0.5 --beta 2 --paths 3000 --grid-lo 0 --grid-hi 1 "
                    "--grid-cells 10 --seed 9 --threads " + std::to_string(t) + " --out-dir " + d) == 0);
        const std::string all = slurp(d + "/exits.csv") + slurp(d + "/green.csv") + slurp(d + "/green_density.csv");
        if (ref.empty()) ref = all;
        else CHECK(all == ref);
    }
    CHECK(run("--help") == 0);
}
