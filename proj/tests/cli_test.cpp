#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "laf/checkpoint.hpp"
#include "laf/common.hpp"

using namespace laf;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

CmdResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    std::string stem = "/tmp/laf_cli_" + std::to_string(counter++);
    std::string cmd = env + (env.empty() ? "" : " ") + std::string(LAF_CLI_PATH) + " " + args + " >" + stem +
                      ".out 2>" + stem + ".err";
    int rc = std::system(cmd.c_str());
    CmdResult result;
    result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    result.out = slurp(stem + ".out");
    result.err = slurp(stem + ".err");
    fs::remove(stem + ".out");
    fs::remove(stem + ".err");
    return result;
}

const std::string kWork = "/tmp/laf_cli_work";

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("generate --bogus 3").exit_code == 2);
    CmdResult missing = run_cli("generate");
    CHECK(missing.exit_code == 2);
    CHECK(missing.err.find("--out") != std::string::npos);
}

TEST_CASE("runtime errors exit 1 with a single machine-parseable line") {
    CmdResult r = run_cli("eval --checkpoint /nonexistent.ckpt --data /nonexistent --family local_blend");
    CHECK(r.exit_code == 1);
    CHECK(r.err.rfind("error: format error:", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    CmdResult bad_family = run_cli("generate --family no_such --out /tmp/laf_cli_nf");
    CHECK(bad_family.exit_code == 1);
    CHECK(bad_family.err.rfind("error: invalid argument:", 0) == 0);
}

TEST_CASE("reproduce-tables passes on the shipped fixture") {
    std::string fixture = std::string(LAF_SOURCE_DIR) + "/fixtures/paper_tables.json";
    std::string out = kWork + "/tables";
    CmdResult r = run_cli("reproduce-tables --fixture " + fixture + " --out " + out);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("all summary rows reproduced") != std::string::npos);
    CHECK(r.out.find("MISMATCH") == std::string::npos);
    CHECK(fs::exists(out + "/table1_report.csv"));
    CHECK(fs::exists(out + "/table2_report.json"));
}

TEST_CASE("generate, preprocess, train, eval, importance, trim, cam chain") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::string raw = kWork + "/raw", aligned = kWork + "/aligned";

    CHECK(run_cli("generate --family local_blend --split train --pairs 4 --seed 3 --out " + raw).exit_code == 0);
    CHECK(run_cli("generate --family local_blend --split val --pairs 3 --seed 3 --out " + raw).exit_code == 0);
    CHECK(run_cli("generate --family local_blend --split test --pairs 3 --seed 3 --out " + raw).exit_code == 0);
    CHECK(fs::exists(raw + "/local_blend/train/manifest.json"));

    for (const char* split : {"train", "val", "test"})
        CHECK(run_cli("preprocess --in " + raw + " --family local_blend --split " + split + " --out " + aligned)
                  .exit_code == 0);
    CHECK(fs::exists(aligned + "/local_blend/val/manifest.json"));

    std::string ckpt = kWork + "/model.ckpt";
    CmdResult tr = run_cli("train --data " + aligned + " --family local_blend --epochs 2 --batch 4 --seed 9 --out " +
                           ckpt);
    CHECK(tr.exit_code == 0);
    CHECK(tr.out.find("best val AP") != std::string::npos);
    CHECK(fs::exists(ckpt));

    CmdResult ev = run_cli("eval --checkpoint " + ckpt + " --data " + aligned +
                           " --family local_blend --split test --out " + kWork + "/eval.json");
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("AP ") != std::string::npos);
    json eval_report = json::parse(slurp(kWork + "/eval.json"));
    CHECK(eval_report.at("ap").get<double>() >= 0.0);
    CHECK(eval_report.at("ap").get<double>() <= 1.0);

    CmdResult im = run_cli("importance --checkpoint " + ckpt + " --data " + aligned +
                           " --family local_blend --split val --out " + kWork + "/importance.json");
    CHECK(im.exit_code == 0);
    json profile = json::parse(slurp(kWork + "/importance.json"));
    CHECK(profile.at("layers").size() == 8);

    CmdResult tm = run_cli("trim --checkpoint " + ckpt + " --data " + aligned +
                           " --family local_blend --n 3 --out " + kWork + "/trim.json");
    CHECK(tm.exit_code == 0);
    json trim_report = json::parse(slurp(kWork + "/trim.json"));
    CHECK(trim_report.at("selected_layers").size() == 3);
    CHECK(trim_report.at("param_fraction").get<double>() < 1.0);

    // Any aligned fake PNG works as CAM input.
    std::string fake_png;
    for (const auto& entry : fs::directory_iterator(aligned + "/local_blend/test/fake"))
        if (entry.path().extension() == ".png") {
            fake_png = entry.path().string();
            break;
        }
    REQUIRE(!fake_png.empty());
    CmdResult cam = run_cli("cam --checkpoint " + ckpt + " --image " + fake_png + " --k 2 --out " + kWork + "/cam");
    CHECK(cam.exit_code == 0);
    json sidecar = json::parse(slurp(kWork + "/cam/cam.json"));
    CHECK(sidecar.at("heatmaps").size() == 2);
    for (const json& h : sidecar.at("heatmaps"))
        CHECK(fs::exists(kWork + "/cam/" + h.at("png").get<std::string>()));

    SUBCASE("eval rejects a checkpoint whose config mismatches the data") {
        ModelConfig small;
        small.backbone.input_size = 32;
        small.backbone.layers = {ConvLayerSpec{4, 2}};
        small.mlp_hidden1 = 6;
        small.mlp_hidden2 = 4;
        small.primitive_dim = 2;
        Checkpoint mismatched;
        mismatched.model = init_model(small, 1);
        save_checkpoint(mismatched, kWork + "/small.ckpt");
        CmdResult bad = run_cli("eval --checkpoint " + kWork + "/small.ckpt --data " + aligned +
                                " --family local_blend --split test");
        CHECK(bad.exit_code == 1);
        CHECK(bad.err.rfind("error: invalid dataset:", 0) == 0);
        CHECK(bad.err.find("input size") != std::string::npos);
    }
}

TEST_CASE("LAF_SEED overrides the configured seed") {
    std::string a = kWork + "/seed_a", b = kWork + "/seed_b", c = kWork + "/seed_c";
    CHECK(run_cli("generate --family color_shift --split train --pairs 2 --seed 1 --out " + a,
                  "LAF_SEED=42").exit_code == 0);
    CHECK(run_cli("generate --family color_shift --split train --pairs 2 --seed 42 --out " + b).exit_code == 0);
    CHECK(run_cli("generate --family color_shift --split train --pairs 2 --seed 1 --out " + c).exit_code == 0);
    std::string ma = slurp(a + "/color_shift/train/manifest.json");
    std::string mb = slurp(b + "/color_shift/train/manifest.json");
    std::string mc = slurp(c + "/color_shift/train/manifest.json");
    CHECK(ma == mb);
    CHECK(ma != mc);
}

TEST_CASE("rank recomputes summaries from a matrix artifact") {
    fs::create_directories(kWork);
    json cells = json::array();
    cells.push_back({99.0, 80.0, 70.0});
    cells.push_back({60.0, 98.0, 90.0});
    cells.push_back({55.0, 65.0, 97.0});
    json matrix{{"train_labels", {"a", "b", "c"}}, {"eval_labels", {"a", "b", "c"}}, {"ap_percent", cells}};
    atomic_write_file(kWork + "/matrix.json", matrix.dump(2));
    CmdResult r = run_cli("rank --matrix " + kWork + "/matrix.json --out " + kWork + "/ranking.json");
    CHECK(r.exit_code == 0);
    json ranking = json::parse(slurp(kWork + "/ranking.json"));
    REQUIRE(ranking.contains("include_all"));
    REQUIRE(ranking.contains("exclude_train_column"));
    CHECK(ranking.at("include_all").size() == 3);
    // Row b: include-all mean (60+98+90)/3.
    for (const json& entry : ranking.at("include_all"))
        if (entry.at("family") == "b") CHECK(entry.at("mean").get<double>() == doctest::Approx(82.666666).epsilon(1e-6));
    // Exclude-train-column drops the diagonal: row b keeps (60, 90).
    for (const json& entry : ranking.at("exclude_train_column"))
        if (entry.at("family") == "b") CHECK(entry.at("mean").get<double>() == doctest::Approx(75.0).epsilon(1e-12));
}
