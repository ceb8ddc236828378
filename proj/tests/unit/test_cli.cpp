#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "dnetpad_cli/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = dnetpad::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) m[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return m;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream f(p);
    std::size_t n = 0;
    for (std::string line; std::getline(f, line);) n += !line.empty();
    return n;
}

std::size_t count_ext(const fs::path& root, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(root)) n += e.path().extension() == ext;
    return n;
}

// Shared scratch area: a small dataset and a one-epoch 32 px model.
struct Workspace {
    fs::path root = fs::temp_directory_path() / "dnetpad_unit_cli";
    fs::path data = root / "data";
    fs::path model = root / "model";

    Workspace() {
        fs::remove_all(root);
        REQUIRE(cli({"gen-data", "--train", "16", "--test", "16", "--seed", "3", "--size", "64", "--out", data.string()})
                    .code == 0);
        const auto t = cli({"train", "--data", data.string(), "--out", model.string(), "--epochs", "1", "--batch", "8",
                            "--input-size", "32", "--stem-filters", "4", "--growth", "2", "--bottleneck", "2",
                            "--blocks", "1,1"});
        REQUIRE_MESSAGE(t.code == 0, t.err);
    }
    ~Workspace() { fs::remove_all(root); }

    std::string ckpt() const { return (model / "model.ckpt").string(); }
};

} // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data counts, reruns and refusals") {
    const auto root = fs::temp_directory_path() / "dnetpad_unit_cli_gen";
    fs::remove_all(root);
    const auto a = root / "a";
    REQUIRE(cli({"gen-data", "--train", "12", "--test", "8", "--seed", "5", "--size", "48", "--out", a.string()}).code == 0);
    CHECK(count_ext(a, ".pgm") == 20);
    CHECK(count_lines(a / "manifest.csv") == 21);
    const auto first = tree(a);

    const auto again = cli({"gen-data", "--train", "12", "--test", "8", "--seed", "5", "--size", "48", "--out", a.string()});
    CHECK(again.code == 2);
    CHECK(again.err.rfind("dnetpad error kind=usage code=2", 0) == 0);

    REQUIRE(cli({"gen-data", "--train", "12", "--test", "8", "--seed", "5", "--size", "48", "--force", "--out",
                 a.string()})
                .code == 0);
    // run_config.txt echoes --force, so it legitimately differs
    auto rerun = tree(a);
    auto before = first;
    rerun.erase("run_config.txt");
    before.erase("run_config.txt");
    CHECK(rerun == before);

    const auto empty = root / "empty";
    CHECK(cli({"gen-data", "--train", "0", "--test", "0", "--out", empty.string()}).code == 0);
    CHECK(count_lines(empty / "manifest.csv") == 1);
    CHECK(count_ext(empty, ".pgm") == 0);
    fs::remove_all(root);
}

TEST_CASE("help documents every subcommand") {
    for (const std::string cmd : {"gen-data", "train", "eval", "gradcam", "tsne", "freq-sweep", "robustness"}) {
        const auto r = cli({cmd, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("--out") != std::string::npos);
        CHECK(r.out.find("--jobs") != std::string::npos);
    }
    const auto tr = cli({"train", "--help"}).out;
    for (const char* flag : {"--epochs", "--lr", "--momentum", "--batch", "--growth", "--blocks", "0.005"}) {
        CHECK_MESSAGE(tr.find(flag) != std::string::npos, flag);
    }
    CHECK(cli({"freq-sweep", "--help"}).out.find("--cutoffs") != std::string::npos);
}

TEST_CASE("usage errors") {
    const auto missing = cli({"eval", "--checkpoint", "/nonexistent/m.ckpt", "--data", "/nonexistent"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("kind=usage") != std::string::npos);
    CHECK(missing.err.find('\n') == missing.err.size() - 1);
    CHECK(cli({}).code == 2);
    CHECK(cli({"train", "--no-such-flag"}).code == 2);
    CHECK(cli({"eval", "--config", "/nonexistent.cfg"}).code == 2);
}

TEST_CASE("pipeline commands") {
    Workspace ws;
    CHECK(fs::exists(ws.model / "train_log.csv"));
    CHECK(slurp(ws.model / "run_config.txt").find("epochs=1") != std::string::npos);

    SUBCASE("eval writes a populated report") {
        const auto out = ws.root / "eval";
        const auto r = cli({"eval", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        std::ifstream f(out / "report.csv");
        std::string header, row;
        std::getline(f, header);
        std::getline(f, row);
        CHECK(header.rfind("threshold,target_fdr", 0) == 0);
        CHECK(row.find("0.002") != std::string::npos);
        CHECK(row.rfind(",", 0) != 0);
        for (const char* name : {"scores.csv", "report.txt", "histogram.csv", "histogram.pgm", "roc.csv"}) {
            CHECK_MESSAGE(fs::exists(out / name), name);
        }
        CHECK(count_lines(out / "scores.csv") == 17);

        const auto out2 = ws.root / "eval2";
        REQUIRE(cli({"eval", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--out", out2.string(), "--jobs",
                     "3"})
                    .code == 0);
        CHECK(slurp(out / "report.csv") == slurp(out2 / "report.csv"));
        CHECK(slurp(out / "histogram.pgm") == slurp(out2 / "histogram.pgm"));
    }
    SUBCASE("config file values and flag overrides") {
        const auto cfg = ws.root / "eval.cfg";
        std::ofstream(cfg) << "# evaluation\nfdr = 0.25\nbins=5\nepochs=3\n";
        const auto out = ws.root / "cfg";
        const auto r = cli({"eval", "--config", cfg.string(), "--checkpoint", ws.ckpt(), "--data", ws.data.string(),
                            "--bins", "8", "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        const auto echo = slurp(out / "run_config.txt");
        CHECK(echo.find("fdr=0.25") != std::string::npos);
        CHECK(echo.find("bins=8") != std::string::npos);
        CHECK(count_lines(out / "histogram.csv") == 9);

        std::ofstream(cfg) << "colour=blue\n";
        CHECK(cli({"eval", "--config", cfg.string(), "--checkpoint", ws.ckpt()}).code == 2);
    }
    SUBCASE("freq-sweep writes one row per cutoff plus the baseline") {
        const auto out = ws.root / "sweep";
        const auto r = cli({"freq-sweep", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--cutoffs",
                            "2,4,6,9,14,32", "--fdr", "0.25", "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(count_lines(out / "sweep.csv") == 8);
        CHECK(fs::exists(out / "freq_panel.pgm"));
        CHECK(cli({"freq-sweep", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--cutoffs", "4,2", "--out",
                   out.string()})
                  .code == 2);
    }
    SUBCASE("robustness") {
        const auto out = ws.root / "rob";
        const auto r = cli({"robustness", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--fdr", "0.5",
                            "--out", out.string()});
        if (r.code == 0) {
            CHECK(count_lines(out / "robustness.csv") == 7);
        } else {
            // an untrained model may detect nothing at all, which has no relative decrease
            CHECK(r.err.find("kind=input") != std::string::npos);
        }
    }
    SUBCASE("gradcam averages one map per class") {
        const auto out = ws.root / "gc";
        const auto r = cli({"gradcam", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--class",
                            "cosmetic_contact", "--average", "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(count_ext(out, ".ppm") == 1);
        CHECK(fs::exists(out / "gradcam_cosmetic_contact_avg.ppm"));

        const auto all = ws.root / "gc_all";
        REQUIRE(cli({"gradcam", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--average", "--out",
                     all.string()})
                    .code == 0);
        CHECK(count_ext(all, ".ppm") == 4);

        const auto each = ws.root / "gc_each";
        REQUIRE(cli({"gradcam", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--class", "print", "--limit",
                     "2", "--out", each.string()})
                    .code == 0);
        CHECK(count_ext(each, ".pgm") == 2);
        CHECK(cli({"gradcam", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--block", "7"}).code == 2);
    }
    SUBCASE("tsne") {
        const auto out = ws.root / "tsne";
        const auto r = cli({"tsne", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--perplexity", "3",
                            "--iterations", "60", "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(count_lines(out / "embedding.csv") == 1 + 2 * 16);
        CHECK(count_lines(out / "tsne_summary.csv") == 3);
        CHECK(fs::exists(out / "tsne_block1.ppm"));
        CHECK(fs::exists(out / "tsne_block2.ppm"));
        CHECK(cli({"tsne", "--checkpoint", ws.ckpt(), "--data", ws.data.string(), "--blocks", "3"}).code == 2);
    }
}

}
