#include <filesystem>
#include <fstream>

#include "cli_runner.hpp"
#include "doctest.h"
#include "json.hpp"
#include "rnet/report.hpp"
#include "rnet/weights.hpp"

namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir = fs::temp_directory_path() / "rnet_cli_test";
    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        // small but complete run: 32x32 images, 4 per class, short training
        std::ofstream(dir / "small.json") << R"({"input_size": 32, "per_class": 4, "pretrain_epochs": 2,
                                              "epochs": 2, "head_epochs": 40})";
    }
    ~Workspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("usage and help") {
    Workspace ws;
    const auto none = cli::run(ws.dir, "");
    CHECK(none.code == 1);
    CHECK(none.out.find("compare") != std::string::npos);

    CHECK(cli::run(ws.dir, "--help").code == 0);
    const auto help = cli::run(ws.dir, "compare --help");
    CHECK(help.code == 0);
    for (const char* flag : {"--preset", "--cut-index", "--freeze-prefix", "--epochs", "--lr", "--svm-c", "--svm-tol",
                             "--seed", "--split-seed", "--target", "--weights", "--out", "--config", "--random-init"}) {
        CAPTURE(flag);
        CHECK(help.out.find(flag) != std::string::npos);
    }
    CHECK(help.out.find("10") != std::string::npos);  // defaults are shown (svm C)
    for (const char* sub : {"synth-data", "pretrain", "extract", "train-head", "report"}) {
        CHECK(cli::run(ws.dir, std::string(sub) + " --help").code == 0);
    }
    CHECK(cli::run(ws.dir, "compare --bogus 1").code == 1);
    CHECK(cli::run(ws.dir, "frobnicate").code == 1);
    CHECK(cli::run(ws.dir, "compare").code == 1);
}

TEST_CASE("report command") {
    Workspace ws;
    std::ofstream(ws.dir / "bad.json") << "{ not json";
    const auto bad = cli::run(ws.dir, "report bad.json");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("rnet report: data error") != std::string::npos);
    CHECK(cli::run(ws.dir, "report missing.json").code == 2);
    std::ofstream(ws.dir / "schema.json") << R"({"rows": 3})";
    CHECK(cli::run(ws.dir, "report schema.json").code == 2);

    rnet::EvalReport r;
    r.split_seed = 7;
    r.train_count = 2;
    r.test_count = 2;
    r.rows.push_back({"GoogleNet", "softmax", 50.0, 200, false, {{1, 0}, {1, 0}}, {}, "pretrained", ""});
    r.rows.push_back({"GoogleNet", "svm", 100.0, 200, false, {{1, 0}, {0, 1}}, {}, "pretrained", ""});
    std::ofstream(ws.dir / "ok.json") << rnet::report_to_json(r).dump();
    const auto ok = cli::run(ws.dir, "report ok.json");
    CHECK(ok.code == 0);
    CHECK(ok.out.find("GoogleNet") != std::string::npos);
    CHECK(ok.out.find("100.00") != std::string::npos);
}

TEST_CASE("synth-data, pretrain, compare, extract and train-head") {
    Workspace ws;
    const auto synth = cli::run(ws.dir, "synth-data --out data --per-class 4 --size 32 --seed 3");
    REQUIRE(synth.code == 0);
    CHECK(synth.out.find("seed=3") != std::string::npos);
    CHECK(fs::exists(ws.dir / "data" / "glass" / "glass_0000.ppm"));

    const auto pre = cli::run(ws.dir, "pretrain --config small.json --preset googlenet-mini --weights w.rnfw --seed 5");
    REQUIRE(pre.code == 0);
    CHECK(pre.out.find("seed=5") != std::string::npos);
    CHECK(pre.out.find("pretrain epoch 2/2") != std::string::npos);
    CHECK_NOTHROW(rnet::load_weights(ws.dir / "w.rnfw"));

    const auto cmp =
        cli::run(ws.dir, "compare --config small.json --target data --weights w.rnfw --seed 7 --out report.json");
    REQUIRE(cmp.code == 0);
    CHECK(cmp.out.find("seed=7") != std::string::npos);
    CHECK(cmp.out.find("split_seed=7") != std::string::npos);
    const auto report = nlohmann::json::parse(cli::slurp(ws.dir / "report.json"));
    CHECK(rnet::validate_report(report).empty());
    CHECK(report["rows"][0]["model"] == "googlenet-mini");
    CHECK(cmp.out.find("googlenet-mini") != std::string::npos);

    // the stated preset must agree with the weights
    const auto wrong = cli::run(ws.dir, "compare --config small.json --target data --weights w.rnfw --preset vgg-mini");
    CHECK(wrong.code == 1);
    CHECK(wrong.err.find("rnet compare:") != std::string::npos);

    const auto ext = cli::run(ws.dir, "extract --weights w.rnfw --target data --out feats.bin");
    REQUIRE(ext.code == 0);
    const auto th = cli::run(ws.dir, "train-head --head softmax --features feats.bin --out head.bin --seed 2");
    CHECK(th.code == 0);
    CHECK(th.out.find("seed=2") != std::string::npos);
    CHECK(fs::exists(ws.dir / "head.bin"));
    CHECK(cli::run(ws.dir, "train-head --head svm --features feats.bin").code == 0);
    CHECK(cli::run(ws.dir, "train-head --head knn --features feats.bin").code == 1);
    CHECK(cli::run(ws.dir, "train-head --features nothere.bin").code == 2);
}

TEST_CASE("error exit codes") {
    Workspace ws;
    CHECK(cli::run(ws.dir, "compare --weights nothere.rnfw").code == 2);
    REQUIRE(cli::run(ws.dir, "pretrain --config small.json --weights w.rnfw").code == 0);
    const auto cut = cli::run(ws.dir, "compare --config small.json --weights w.rnfw --cut-index 99");
    CHECK(cut.code == 1);
    CHECK(cut.err.find("rnet compare: invalid network") != std::string::npos);
    std::ofstream(ws.dir / "typo.json") << R"({"epohcs": 3})";
    CHECK(cli::run(ws.dir, "compare --config typo.json --weights w.rnfw").code == 2);
    CHECK(cli::run(ws.dir, "pretrain --source missing-dir --weights x.rnfw").code == 2);
    CHECK_FALSE(fs::exists(ws.dir / "x.rnfw"));
    // one step at this rate overflows the logits
    const auto nan = cli::run(ws.dir, "pretrain --config small.json --lr 1e300 --weights y.rnfw");
    CHECK(nan.code == 3);
    CHECK(nan.err.find("rnet pretrain: training failure") != std::string::npos);
}
