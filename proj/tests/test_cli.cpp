#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prunecoder/checkpoint.hpp"
#include "prunecoder/cli.hpp"
#include "prunecoder/report.hpp"

using namespace prunecoder;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// A synthetic corpus and a 12-layer tiny checkpoint shared by the tests below.
struct Workspace {
    fs::path dir = fs::temp_directory_path() / "prunecoder_test_cli";
    std::string p(const std::string& name) const { return (dir / name).string(); }

    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        REQUIRE(cli({"synth", "--out", dir.string(), "--train", "64", "--val", "32", "--test", "32", "--seed", "1"}).code ==
                0);
        REQUIRE(cli({"init", "--preset", "tiny", "--vocab", p("vocab.txt"), "--config", R"({"num_layers": 12})",
                     "--seed", "4", "--out", p("base.prnc")})
                    .code == 0);
    }
    ~Workspace() { fs::remove_all(dir); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("help exits cleanly and a missing subcommand is a usage error") {
    const auto help = cli({"--help"});
    CHECK(help.code == exit_ok);
    CHECK(help.out.find("prune") != std::string::npos);
    CHECK(cli({"prune", "--help"}).code == exit_ok);
    CHECK(cli({}).code == exit_usage);
    CHECK(cli({"frobnicate"}).code == exit_usage);
}

TEST_CASE("init and synth produce loadable artifacts") {
    Workspace ws;
    for (const char* f : {"vocab.txt", "train.csv", "val.csv", "test.csv"}) CHECK(fs::exists(ws.dir / f));
    const auto ck = load_checkpoint(ws.dir / "base.prnc");
    CHECK(ck.config.num_layers == 12);
    CHECK(ck.config.vocab_size == static_cast<int>(Vocab::load(ws.dir / "vocab.txt").size()));
}

TEST_CASE("prune middle 6 and inspect the provenance") {
    Workspace ws;
    const auto r = cli({"prune", "--in", ws.p("base.prnc"), "--strategy", "middle", "--k", "6", "--out",
                        ws.p("mid.prnc"), "--source-id", "base", "--timestamp", "2024-01-02T03:04:05Z"});
    REQUIRE(r.code == exit_ok);
    CHECK(r.out.find("[0,1,2,9,10,11]") != std::string::npos);
    CHECK(r.out.find("50.00") != std::string::npos);
    const auto ck = load_checkpoint(ws.dir / "mid.prnc");
    CHECK(ck.config.num_layers == 6);
    REQUIRE(ck.records.size() == 1);
    CHECK(ck.records[0].source == "base");

    const auto i = cli({"inspect", "--in", ws.p("mid.prnc")});
    CHECK(i.code == exit_ok);
    CHECK(i.out.find("layers: 6") != std::string::npos);
    CHECK(i.out.find("retained [0,1,2,9,10,11]") != std::string::npos);
    CHECK(i.out.find("middle 6 from base at 2024-01-02T03:04:05Z") != std::string::npos);
}

TEST_CASE("prune rejects k outside [1, L-1]") {
    Workspace ws;
    const auto r = cli({"prune", "--in", ws.p("base.prnc"), "--strategy", "top", "--k", "12", "--out", ws.p("x.prnc")});
    CHECK(r.code == exit_usage);
    CHECK(r.err.find("k") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.dir / "x.prnc"));
    CHECK(cli({"prune", "--in", ws.p("base.prnc"), "--strategy", "sideways", "--k", "2", "--out", ws.p("x.prnc")})
              .code == exit_usage);
}

TEST_CASE("bad inputs map to the data exit code") {
    Workspace ws;
    {
        std::ofstream bad(ws.dir / "bad.prnc");
        bad << "not a checkpoint";
    }
    CHECK(cli({"inspect", "--in", ws.p("bad.prnc")}).code == exit_data);
    CHECK(cli({"inspect", "--in", ws.p("absent.prnc")}).code == exit_data);
    {
        std::ofstream bad(ws.dir / "broken.csv");
        bad << "text,label\nfine,a\nmissing\n";
    }
    const auto r = cli({"finetune", "--in", ws.p("base.prnc"), "--train", ws.p("broken.csv"), "--val", ws.p("val.csv"),
                        "--out", ws.p("ft.prnc"), "--history", ws.p("h.tsv"), "--vocab", ws.p("vocab.txt")});
    CHECK(r.code == exit_data);
    CHECK(r.err.find(":3") != std::string::npos);
}

TEST_CASE("finetune, evaluate and the experiment log") {
    Workspace ws;
    REQUIRE(cli({"prune", "--in", ws.p("base.prnc"), "--strategy", "top", "--k", "10", "--out", ws.p("top.prnc")})
                .code == 0);
    const auto ft = cli({"finetune", "--in", ws.p("top.prnc"), "--train", ws.p("train.csv"), "--val", ws.p("val.csv"),
                         "--config", R"({"epochs": 2, "batch_size": 16, "max_len": 16})", "--out", ws.p("ft.prnc"),
                         "--history", ws.p("history.md")});
    REQUIRE(ft.code == exit_ok);
    CHECK(ft.err.find("resolved") != std::string::npos);
    const auto ck = load_checkpoint(ws.dir / "ft.prnc");
    CHECK(ck.label_names.size() == 4);
    CHECK(ck.records.size() == 1);
    CHECK(slurp(ws.dir / "history.md").find("| Epoch") != std::string::npos);

    const auto log = slurp(ws.dir / "experiments.jsonl");
    const auto entry = nlohmann::json::parse(log.substr(0, log.find('\n')));
    CHECK(entry.at("command") == "finetune");
    CHECK(entry.contains("config_hash"));
    CHECK(entry.contains("seed"));
    CHECK(entry.contains("metrics"));

    const auto ev = cli({"evaluate", "--in", ws.p("ft.prnc"), "--data", ws.p("test.csv"), "--vocab", ws.p("vocab.txt")});
    CHECK(ev.code == exit_ok);
    CHECK(ev.out.find("accuracy") != std::string::npos);
}

TEST_CASE("protocol writes reports that the report command renders") {
    Workspace ws;
    const std::string data = "SYN=" + ws.p("train.csv") + "," + ws.p("val.csv") + "," + ws.p("test.csv");
    const auto r = cli({"protocol", "--in", ws.p("base.prnc"), "--datasets", data, "--specs", "top:6,bottom:6",
                        "--config", R"({"epochs": 1, "batch_size": 16, "max_len": 16})", "--out", ws.p("run"),
                        "--model-name", "Tiny", "--no-checkpoints"});
    REQUIRE(r.code == exit_ok);
    const auto rows = read_reports_jsonl(ws.dir / "run" / "reports.jsonl");
    CHECK(rows.size() == 3);
    CHECK(fs::exists(ws.dir / "run" / "report.md"));
    CHECK(fs::exists(ws.dir / "run" / "report.tsv"));
    CHECK_FALSE(fs::exists(ws.dir / "run" / "checkpoints"));

    const auto md = cli({"report", "--runs", ws.p("run"), "--format", "markdown"});
    CHECK(md.code == exit_ok);
    CHECK(md.out.find("| Tiny | Top 6 |") != std::string::npos);
    CHECK(md.out == slurp(ws.dir / "run" / "report.md"));
    const auto per = cli({"report", "--runs", ws.p("run"), "--format", "tsv", "--dataset", "SYN"});
    CHECK(per.code == exit_ok);
    CHECK(per.out.find("Validation Accuracy") != std::string::npos);
    CHECK(cli({"report", "--runs", ws.p("missing")}).code == exit_data);
}

TEST_CASE("gradcheck passes on the tiny preset and fails loudly at an impossible tolerance") {
    const auto ok = cli({"gradcheck", "--seeds", "2"});
    CHECK(ok.code == exit_ok);
    CHECK(ok.out.find("max relative error") != std::string::npos);
    const auto bad = cli({"gradcheck", "--seeds", "1", "--tolerance", "1e-30"});
    CHECK(bad.code == exit_numeric);
}
