// Drives the installed CLI binary end to end through a shell.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

using nlohmann::json;

#ifndef PARAFORMER_CLI_PATH
#error "PARAFORMER_CLI_PATH must be defined"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args, const std::string& env = "") {
    const std::string out_path = "./cli_out.txt";
    const std::string cmd = env + " " + std::string(PARAFORMER_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr const char* kTinyGen = "--pairs 4 --keypoints 32 --dim 16 --image-width 160 --image-height 120";
constexpr const char* kTinyModel =
    "--set variant=paraformer --set dim=16 --set layers=1 --set heads=2 --set sinkhorn_iters=8 --set seed=3";

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run("").exit_code == 1);
    CHECK(run("gen-data").exit_code == 1);             // missing --out
    CHECK(run("unknown-command").exit_code == 1);
    CHECK(run("train --data x.pfd").exit_code == 1);   // missing --out
}

TEST_CASE("gen-data is deterministic per seed and honors PARAFORMER_SEED") {
    auto r1 = run(std::string("gen-data ") + kTinyGen + " --seed 5 --out ./cli_a.pfd");
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.out.find("4 pairs") != std::string::npos);
    auto r2 = run(std::string("gen-data ") + kTinyGen + " --seed 5 --out ./cli_b.pfd");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp("./cli_a.pfd") == slurp("./cli_b.pfd"));

    auto r3 = run(std::string("gen-data ") + kTinyGen + " --seed 6 --out ./cli_c.pfd");
    REQUIRE(r3.exit_code == 0);
    CHECK(slurp("./cli_a.pfd") != slurp("./cli_c.pfd"));

    // env var sets the default seed
    auto r4 = run(std::string("gen-data ") + kTinyGen + " --out ./cli_d.pfd", "PARAFORMER_SEED=5");
    REQUIRE(r4.exit_code == 0);
    CHECK(slurp("./cli_d.pfd") == slurp("./cli_a.pfd"));

    auto bad = run(std::string("gen-data ") + kTinyGen + " --out ./no_dir/x.pfd");
    CHECK(bad.exit_code == 2);
}

TEST_CASE("train, match, eval, resume") {
    REQUIRE(run(std::string("gen-data ") + kTinyGen + " --noise 0.05 --seed 5 --out ./cli_train.pfd").exit_code == 0);

    // full run: 4 epochs
    auto full = run(std::string("train --data ./cli_train.pfd ") + kTinyModel +
                    " --epochs 4 --lr 0.001 --out ./cli_full.pfw");
    REQUIRE(full.exit_code == 0);
    CHECK(full.out.find("epoch   3") != std::string::npos);
    CHECK(slurp("./cli_full.pfw.manifest.json").find("run_hash") != std::string::npos);

    // interrupted run: 2 epochs, then resume to 4
    REQUIRE(run(std::string("train --data ./cli_train.pfd ") + kTinyModel +
                " --epochs 2 --lr 0.001 --out ./cli_part.pfw")
                .exit_code == 0);
    auto resumed = run(std::string("train --data ./cli_train.pfd ") + kTinyModel +
                       " --epochs 4 --lr 0.001 --resume ./cli_part.pfw.last --out ./cli_resumed.pfw");
    REQUIRE(resumed.exit_code == 0);

    // the resumed trajectory reproduces the uninterrupted one
    const json mf = json::parse(slurp("./cli_full.pfw.manifest.json"));
    const json mr = json::parse(slurp("./cli_resumed.pfw.manifest.json"));
    REQUIRE(mf.at("epochs").size() == 4);
    for (const auto& er : mr.at("epochs")) {
        const int e = er.at("epoch").get<int>();
        REQUIRE(e >= 2);
        const double full_loss = mf.at("epochs")[static_cast<size_t>(e)].at("loss").get<double>();
        CHECK(er.at("loss").get<double>() == doctest::Approx(full_loss).epsilon(1e-5));
    }

    // match and eval with the trained checkpoint
    auto match = run("match --model ./cli_full.pfw --data ./cli_train.pfd --out ./cli_matches.json");
    REQUIRE(match.exit_code == 0);
    const json matches = json::parse(slurp("./cli_matches.json"));
    CHECK(matches.size() == 4);

    auto eval = run("eval --model ./cli_full.pfw --data ./cli_train.pfd --nn --nn-mutual --out ./cli_eval.json");
    REQUIRE(eval.exit_code == 0);
    const json report = json::parse(slurp("./cli_eval.json"));
    CHECK(report.contains("model"));
    // near-noiseless descriptors: plain NN errs only on the unmatched points
    CHECK(report.at("nn").at("aggregate").at("precision").get<double>() > 0.8);
    CHECK(report.at("nn_mutual").at("aggregate").at("precision").get<double>() >=
          report.at("nn").at("aggregate").at("precision").get<double>() - 1e-9);
    CHECK(report.at("nn_mutual").at("aggregate").at("precision").get<double>() > 0.95);

    // checkpoint/config mismatch and wrong-format files exit 2
    CHECK(run("match --model ./cli_train.pfd --data ./cli_train.pfd").exit_code == 2);
    CHECK(run(std::string("train --data ./cli_train.pfd ") + kTinyModel +
              " --epochs 4 --resume ./cli_train.pfd --out ./x.pfw")
              .exit_code == 2);

    // a blow-up learning rate aborts with the numeric exit code
    auto nan_run = run(std::string("train --data ./cli_train.pfd ") + kTinyModel +
                       " --epochs 3 --lr 1e8 --out ./cli_nan.pfw");
    CHECK(nan_run.exit_code == 3);

    for (const char* f : {"./cli_a.pfd", "./cli_b.pfd", "./cli_c.pfd", "./cli_d.pfd", "./cli_train.pfd",
                          "./cli_full.pfw", "./cli_full.pfw.last", "./cli_full.pfw.last.opt",
                          "./cli_full.pfw.manifest.json", "./cli_part.pfw", "./cli_part.pfw.last",
                          "./cli_part.pfw.last.opt", "./cli_part.pfw.manifest.json", "./cli_resumed.pfw",
                          "./cli_resumed.pfw.last", "./cli_resumed.pfw.last.opt", "./cli_resumed.pfw.manifest.json",
                          "./cli_matches.json", "./cli_eval.json", "./cli_out.txt", "./cli_nan.pfw",
                          "./cli_nan.pfw.last", "./cli_nan.pfw.last.opt"})
        std::remove(f);
}

TEST_CASE("flops table prints the ratio block and writes csv") {
    auto r = run("flops --csv ./cli_flops.csv");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("ratios vs serial_baseline") != std::string::npos);
    CHECK(r.out.find("paraformer_u") != std::string::npos);
    CHECK(r.out.find("aws on/off") != std::string::npos);
    const std::string csv = slurp("./cli_flops.csv");
    CHECK(csv.find("model,keypoints,pe,projections") != std::string::npos);
    CHECK(csv.find("serial_baseline,512") != std::string::npos);
    std::remove("./cli_flops.csv");
    std::remove("./cli_out.txt");

    auto p = run("flops --params --keypoints 256");
    REQUIRE(p.exit_code == 0);
    CHECK(p.out.find("share qkv+merge") != std::string::npos);
}

TEST_CASE("gradcheck command exits zero on pass") {
    auto r = run("gradcheck --seeds 1");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("gradcheck: PASS") != std::string::npos);
    std::remove("./cli_out.txt");
}
