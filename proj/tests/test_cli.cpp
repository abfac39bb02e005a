#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oiqa/cli.hpp"
#include "oiqa/serialize.hpp"

using namespace oiqa;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
    int code;
    json line;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    json line;
    const std::string text = out.str();
    if (!text.empty() && text.front() == '{') line = json::parse(text);
    return {code, line, err.str()};
}

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "oiqa_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::size_t count_lines(const fs::path& p) {
    const std::string s = read_file(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// One small dataset and model shared by all cases.
struct Fixture {
    fs::path root = scratch();
    std::string data, model;
    std::size_t test_size = 0;
    Fixture() {
        const Run g = cli({"gen-data", "--n", "40", "--size", "16", "--seed", "3", "--out", (root / "runs").string()});
        REQUIRE(g.code == 0);
        data = g.line["dataset"];
        test_size = g.line["test"];
        const Run t = cli({"train", "--data", data, "--epochs", "1", "--out", (root / "runs").string()});
        REQUIRE(t.code == 0);
        model = t.line["model"];
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("epsilon parsing and canonical form") {
    CHECK(parse_epsilon("4/255") == 4.0 / 255.0);
    CHECK(parse_epsilon("0.5") == 0.5);
    CHECK(canonical_epsilon(4.0 / 255.0) == "4/255");
    CHECK(canonical_epsilon(0.0) == "0/255");
    CHECK(parse_epsilon(canonical_epsilon(0.123)) == 0.123);
    CHECK_THROWS(parse_epsilon("x/255"));
    CHECK_THROWS(parse_epsilon("1/0"));
    CHECK_THROWS(parse_epsilon(""));
}

TEST_CASE("certify writes one row per conv layer") {
    auto& f = fixture();
    const Run r = cli({"certify", "--model", f.model, "--out", (f.root / "runs").string()});
    REQUIRE(r.code == 0);
    CHECK(r.line["conv_layers"] == 4);
    CHECK(r.line["recommended_position"] == 6);
    const fs::path dir = r.line["run_dir"].get<std::string>();
    CHECK(count_lines(dir / "certify.csv") == 5);
    CHECK(fs::exists(dir / "provenance.json"));
}

TEST_CASE("usage and data errors map to exit codes") {
    auto& f = fixture();
    const std::string out = (f.root / "err").string();
    CHECK(cli({"attack", "--model", f.model, "--no-such-flag"}).code == 1);
    CHECK(cli({}).code == 1);
    CHECK(cli({"attack", "--model", f.model, "--data", f.data, "--eps", "abc", "--out", out}).code == 1);
    CHECK(cli({"attack", "--model", f.model, "--data", f.data, "--kind", "fgsm", "--out", out}).code == 1);
    CHECK(cli({"attack", "--model", (f.root / "missing.ckpt").string(), "--data", f.data, "--out", out}).code == 2);

    std::string bytes = read_file(f.model);
    bytes[bytes.size() - 3] ^= 0x10;
    write_file(f.root / "corrupt.ckpt", bytes);
    const Run bad = cli({"certify", "--model", (f.root / "corrupt.ckpt").string(), "--out", out});
    CHECK(bad.code == 2);
    CHECK(bad.line["message"].get<std::string>().find("hash") != std::string::npos);
    // failed runs leave no run directory behind
    CHECK((!fs::exists(out) || fs::is_empty(out)));
}

TEST_CASE("attack CSV has one row per test image") {
    auto& f = fixture();
    for (const char* kind : {"pgd", "uap", "stadv"}) {
        CAPTURE(kind);
        const Run r = cli({"attack", "--model", f.model, "--data", f.data, "--kind", kind, "--steps", "2", "--out",
                           (f.root / "runs").string()});
        REQUIRE(r.code == 0);
        const fs::path dir = r.line["run_dir"].get<std::string>();
        CHECK(count_lines(dir / "attack.csv") == f.test_size + 1);
        CHECK(fs::exists(dir / "perturbations" / "universal.qten") == (std::string(kind) == "uap"));
    }
}

TEST_CASE("replay is byte-identical across thread counts") {
    auto& f = fixture();
    const Run first = cli({"eval", "--model", f.model, "--data", f.data, "--steps", "2", "--eps-grid", "2/255,0.0156862745098039",
                           "--threads", "1", "--out", (f.root / "a").string()});
    REQUIRE(first.code == 0);
    const fs::path a = first.line["run_dir"].get<std::string>();
    const json prov = json::parse(read_file(a / "provenance.json"));
    CHECK(prov["config"]["eps_grid"] == "2/255,4/255");

    const Run again = cli({"eval", "--config", (a / "provenance.json").string(), "--threads", "3", "--out",
                           (f.root / "b").string()});
    REQUIRE(again.code == 0);
    const fs::path b = again.line["run_dir"].get<std::string>();
    for (const char* name : {"report.json", "per_image.csv", "abs_gain.svg", "provenance.json"}) {
        CAPTURE(name);
        CHECK(read_file(a / name) == read_file(b / name));
    }
    CHECK(cli({"eval", "--config", (a / "provenance.json").string(), "--steps", "3", "--out", (f.root / "c").string()}).code == 1);
}

TEST_CASE("defend then report compares against the baseline") {
    auto& f = fixture();
    const std::string runs = (f.root / "runs").string();
    const Run d = cli({"defend", "--model", f.model, "--data", f.data, "--epochs", "1", "--out", runs});
    REQUIRE(d.code == 0);
    CHECK(d.line["block_position"] == 6);
    const std::string defended = d.line["model"];
    const fs::path ddir = d.line["run_dir"].get<std::string>();
    CHECK(fs::exists(ddir / "defense.json"));
    CHECK(count_lines(ddir / "prune.csv") > 1);

    auto eval = [&](const std::string& model) {
        const Run r = cli({"eval", "--model", model, "--data", f.data, "--steps", "1", "--no-plots", "--out", runs});
        REQUIRE(r.code == 0);
        return (fs::path(r.line["run_dir"].get<std::string>()) / "report.json").string();
    };
    const std::string base = eval(f.model);
    const std::string def = eval(defended);
    const Run rep = cli({"report", "--reports", def, "--baseline", base, "--out", runs});
    REQUIRE(rep.code == 0);
    CHECK(rep.line["comparison"]["metric"] == "abs_gain_auc");
    const bool lower = rep.line["comparison"]["defended"].get<double>() < rep.line["comparison"]["baseline"].get<double>();
    CHECK(rep.line["comparison"]["defended_lower"] == lower);

    const Run two = cli({"report", "--reports", def + "," + base, "--out", runs});
    REQUIRE(two.code == 0);
    CHECK(two.line["weights"].size() == 2);
}
