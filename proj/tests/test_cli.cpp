#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    std::string bin = std::string(F2I_CLI_PATH);
    std::string cmd = bin + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    while (fgets(buf.data(), buf.size(), p)) out += buf.data();
    int status = pclose(p);
    return {WEXITSTATUS(status), out};
}

std::string fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / "f2i_cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

uint64_t file_hash(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    uint64_t h = 1469598103934665603ull;
    char c;
    while (f.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

TEST_CASE("gen-data is reproducible and promoted atomically") {
    auto root = fresh_dir("gen");
    auto r1 = run_cli("gen-data --n 10 --seed 3 --subjects 2 --out " + root + "/a");
    CHECK(r1.code == 0);
    auto r2 = run_cli("gen-data --n 10 --seed 3 --subjects 2 --out " + root + "/b");
    CHECK(r2.code == 0);
    CHECK(file_hash(fs::path(root) / "a" / "manifest.json") ==
          file_hash(fs::path(root) / "b" / "manifest.json"));
    CHECK(file_hash(fs::path(root) / "a" / "surfaces" / "rec_00003.npb") ==
          file_hash(fs::path(root) / "b" / "surfaces" / "rec_00003.npb"));
    CHECK(!fs::exists(fs::path(root) / "a.tmp"));
    CHECK(fs::exists(fs::path(root) / "a" / "config.json"));
}

TEST_CASE("usage errors exit with code 2 and one machine-parsable line") {
    auto root = fresh_dir("usage");
    {
        auto r = run_cli("refine --manifest nowhere.json --subject 0 --out " + root + "/r");
        CHECK(r.code == 2);
        CHECK(r.output.rfind("error: usage:", 0) == 0);
        CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);
    }
    {
        auto r = run_cli("decode --manifest x.json --out " + root + "/d");
        CHECK(r.code == 2);  // missing --ckpt
    }
    {
        auto r = run_cli("frobnicate");
        CHECK(r.code == 2);
    }
    {
        auto r = run_cli("gen-data --classes 9 --out " + root + "/g");
        CHECK(r.code == 2);
    }
}

TEST_CASE("data errors exit with code 3, checkpoint errors with 5") {
    auto root = fresh_dir("errs");
    {
        auto r = run_cli("pretrain-encoder --manifest " + root + "/missing.json --out " + root +
                         "/run");
        CHECK(r.code == 3);
        CHECK(r.output.rfind("error: data:", 0) == 0);
    }
    {
        auto g = run_cli("gen-data --n 4 --subjects 1 --out " + root + "/ds");
        REQUIRE(g.code == 0);
        auto r = run_cli("decode --ckpt " + root + "/no_ckpt --manifest " + root +
                         "/ds/manifest.json --out " + root + "/dec");
        CHECK(r.code == 5);
        CHECK(r.output.rfind("error: checkpoint:", 0) == 0);
    }
}

TEST_CASE("unknown config keys are rejected") {
    auto root = fresh_dir("cfg");
    {
        std::ofstream f(root + "/bad.json");
        f << R"({"preset":"desk","frobnob":1})";
    }
    auto r = run_cli("gen-data --config " + root + "/bad.json --out " + root + "/ds");
    CHECK(r.code == 2);
    CHECK(r.output.find("frobnob") != std::string::npos);
}

TEST_CASE("config file merges under CLI flags") {
    auto root = fresh_dir("merge");
    {
        std::ofstream f(root + "/cfg.json");
        f << R"({"n":6,"subjects":2,"seed":11})";
    }
    auto r = run_cli("gen-data --config " + root + "/cfg.json --n 8 --out " + root + "/ds");
    REQUIRE(r.code == 0);
    std::ifstream mf(root + "/ds/manifest.json");
    json m;
    mf >> m;
    CHECK(m["records"].size() == 8);          // CLI flag wins
    CHECK(m["seed"].get<uint64_t>() == 11);   // config value survives
    std::ifstream cf(root + "/ds/config.json");
    json echo;
    cf >> echo;
    CHECK(echo["n"].get<int>() == 8);  // run directory embeds the resolved config
}

TEST_CASE("decode defaults are wired: steps 50, guidance 5.0, alpha 1.0") {
    auto r = run_cli("decode --help");
    CHECK(r.code == 0);
    CHECK(r.output.find("--steps") != std::string::npos);
    CHECK(r.output.find("50") != std::string::npos);
    CHECK(r.output.find("--guidance") != std::string::npos);
    CHECK(r.output.find("5") != std::string::npos);
    CHECK(r.output.find("--alpha") != std::string::npos);
    CHECK(r.output.find("1") != std::string::npos);
}

TEST_CASE("top-level --help matches the golden file") {
    auto r = run_cli("--help");
    CHECK(r.code == 0);
    std::ifstream g(std::string(F2I_GOLDEN_DIR) + "/help.txt");
    REQUIRE(g.good());
    std::string golden((std::istreambuf_iterator<char>(g)), std::istreambuf_iterator<char>());
    CHECK(r.output == golden);
}

TEST_CASE("run-root env var resolves relative outputs") {
    auto root = fresh_dir("envroot");
    std::string cmd = "cd / && F2I_RUN_ROOT=" + root + " " + std::string(F2I_CLI_PATH) +
                      " gen-data --n 4 --subjects 1 --out rel_ds --seed 2 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 1024> buf{};
    while (fgets(buf.data(), buf.size(), p)) {
    }
    int status = pclose(p);
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(fs::path(root) / "rel_ds" / "manifest.json"));
}
