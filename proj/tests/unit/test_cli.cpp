#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scotch/cli.hpp"
#include "scotch/datagen.hpp"
#include "scotch/eval.hpp"
#include "scotch/graph.hpp"

using namespace scotch;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("scotch_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Small tiny-network training arguments shared by the train cases.
std::vector<std::string> tiny_train(const fs::path& data, const fs::path& out, const std::string& epochs) {
    return {"train",         "--data",          data.string(), "--out",          out.string(),
            "--epochs",      epochs,            "--step",      "0.1",            "--embed-dim",
            "4",             "--agg-dim",       "4",           "--encoder-hidden", "6",
            "--context-dim", "4",               "--posterior-hidden", "8",       "--warmup-epochs",
            "2",             "--log-every",     "0",           "--snapshot-every", "5"};
}

fs::path small_bimodal(const std::string& name) {
    const fs::path dir = fresh_dir(name);
    REQUIRE(run({"generate", "bimodal", "--n", "6", "--length", "10", "--out", dir.string()}).code == cli::kOk);
    return dir / "data.csv";
}

}  // namespace

TEST_CASE("generate writes the dataset, its sidecars and the resolved config") {
    const fs::path dir = fresh_dir("gen");
    const auto r = run({"generate", "lorenz96", "--n", "3", "--length", "7", "--dim", "5", "--out", dir.string()});
    REQUIRE(r.code == cli::kOk);
    const auto ds = data::load_dataset(dir / "data.csv");
    CHECK(ds.dim == 5);
    CHECK(ds.series.size() == 3);
    CHECK(ds.series[0].times.size() == 7);
    REQUIRE(ds.truth.has_value());
    CHECK(*ds.truth == data::lorenz96_truth(5));

    const auto cfg = data::load_key_values(dir / "config.txt");
    CHECK(cfg.at("command") == "generate");
    CHECK(cfg.at("n") == "3");
    CHECK(cfg.at("obs_interval") == "1");
    CHECK(cfg.at("sigma") == "0.5");
    CHECK(cfg.at("out") == dir.string());
}

TEST_CASE("flags override the config file, which overrides defaults") {
    const fs::path dir = fresh_dir("prec");
    fs::create_directories(dir);
    write(dir / "settings.txt", "n = 4\nlength = 5\nseed = 9\ncommand = generate\n");
    const auto r = run({"generate", "glycolysis", "--config", (dir / "settings.txt").string(), "--n", "2", "--out",
                        (dir / "run").string()});
    REQUIRE(r.code == cli::kOk);
    const auto ds = data::load_dataset(dir / "run" / "data.csv");
    CHECK(ds.series.size() == 2);
    CHECK(ds.series[0].times.size() == 5);
    const auto cfg = data::load_key_values(dir / "run" / "config.txt");
    CHECK(cfg.at("seed") == "9");
    CHECK(cfg.at("n") == "2");
    CHECK(cfg.at("sim_dt") == "0.005");

    // The persisted config replays the same run.
    const auto again = run({"generate", "glycolysis", "--config", (dir / "run" / "config.txt").string(), "--out",
                            (dir / "replay").string()});
    REQUIRE(again.code == cli::kOk);
    CHECK(slurp(dir / "replay" / "data.csv") == slurp(dir / "run" / "data.csv"));

    write(dir / "typo.txt", "lenght = 5\n");
    CHECK(run({"generate", "bimodal", "--config", (dir / "typo.txt").string(), "--out", (dir / "x").string()}).code ==
          cli::kParse);
}

TEST_CASE("boolean flags have negated forms") {
    const fs::path dir = fresh_dir("flags");
    REQUIRE(run({"generate", "bimodal", "--n", "3", "--length", "4", "--normalize", "--out", dir.string()}).code ==
            cli::kOk);
    CHECK(fs::exists(dir / "normalization.txt"));
    CHECK(data::load_key_values(dir / "config.txt").at("normalize") == "true");
    const fs::path off = fresh_dir("flags_off");
    REQUIRE(run({"generate", "bimodal", "--n", "3", "--length", "4", "--no-normalize", "--out", off.string()}).code ==
            cli::kOk);
    CHECK(!fs::exists(off / "normalization.txt"));
}

TEST_CASE("exit codes") {
    CHECK(run({}).code == cli::kParse);
    CHECK(run({"teleport"}).code == cli::kParse);
    CHECK(run({"generate", "unknown"}).code == cli::kParse);
    CHECK(run({"generate", "bimodal", "--n", "many", "--out", fresh_dir("bad_n").string()}).code == cli::kParse);
    CHECK(run({"generate", "bimodal", "--threads", "4", "--out", fresh_dir("threads").string()}).code ==
          cli::kValidation);
    CHECK(run({"generate", "lorenz96", "--dim", "3", "--out", fresh_dir("dim3").string()}).code == cli::kValidation);
    CHECK(run({"generate", "bimodal", "--p", "1", "--out", fresh_dir("p1").string()}).code == cli::kValidation);
    CHECK(run({"generate", "bimodal", "--help"}).code == cli::kOk);

    // A single self-loop truth has no negative cell: AUROC is undefined.
    const fs::path dir = fresh_dir("metric");
    fs::create_directories(dir);
    save_matrix(dir / "p.txt", ad::Array::matrix({{0.7}}), "probs");
    Graph loop(1);
    loop.set_edge(0, 0);
    save_graph(dir / "g.txt", loop);
    const auto r = run({"evaluate", "--probs", (dir / "p.txt").string(), "--truth", (dir / "g.txt").string(), "--out",
                        (dir / "o").string()});
    CHECK(r.code == cli::kMetric);
    CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("output directory falls back to the environment root") {
    const fs::path root = fresh_dir("root");
    ::setenv(cli::kOutputRootEnv, root.string().c_str(), 1);
    const auto r = run({"generate", "bimodal", "--n", "2", "--length", "3"});
    ::unsetenv(cli::kOutputRootEnv);
    REQUIRE(r.code == cli::kOk);
    CHECK(fs::exists(root / "generate" / "data.csv"));
}

TEST_CASE("evaluate reports metrics with and without the diagonal") {
    const fs::path dir = fresh_dir("eval");
    fs::create_directories(dir);
    Graph truth(3);
    truth.set_edge(0, 1);
    truth.set_edge(1, 1);
    truth.set_edge(2, 0);
    save_graph(dir / "truth.txt", truth);
    save_matrix(dir / "probs.txt", ad::Array::matrix({{0.1, 0.9, 0.2}, {0.3, 0.6, 0.1}, {0.8, 0.4, 0.7}}), "probs");
    const auto full = run({"evaluate", "--probs", (dir / "probs.txt").string(), "--truth", (dir / "truth.txt").string(),
                           "--out", (dir / "full").string()});
    REQUIRE(full.code == cli::kOk);
    const auto rf = eval::parse_report(full.out);
    CHECK(rf.at("cells") == 9);
    CHECK(rf.at("tp") == 3);
    CHECK(rf.at("fp") == 1);
    CHECK(rf.at("f1") == doctest::Approx(6.0 / 7.0));
    CHECK(eval::parse_report(slurp(dir / "full" / "report.txt")) == rf);

    const auto off = run({"evaluate", "--probs", (dir / "probs.txt").string(), "--truth", (dir / "truth.txt").string(),
                          "--exclude-diagonal", "--out", (dir / "off").string()});
    REQUIRE(off.code == cli::kOk);
    const auto ro = eval::parse_report(off.out);
    CHECK(ro.at("cells") == 6);
    CHECK(ro.at("tp") == 2);
    CHECK(ro.at("fp") == 0);
    CHECK(ro.at("auroc") == 1.0);

    // A dataset CSV supplies its truth through the sidecar.
    const fs::path gen = fresh_dir("eval_gen");
    REQUIRE(run({"generate", "lorenz96", "--n", "1", "--length", "2", "--dim", "5", "--out", gen.string()}).code ==
            cli::kOk);
    save_matrix(dir / "p5.txt", data::lorenz96_truth(5).to_array(), "probs");
    const auto viacsv = run({"evaluate", "--probs", (dir / "p5.txt").string(), "--truth", (gen / "data.csv").string(),
                             "--out", (dir / "csv").string()});
    REQUIRE(viacsv.code == cli::kOk);
    CHECK(eval::parse_report(viacsv.out).at("auroc") == 1.0);
    CHECK(run({"evaluate", "--probs", (dir / "probs.txt").string(), "--truth", (gen / "data.csv").string(), "--out",
               (dir / "mismatch").string()})
              .code == cli::kValidation);
}

TEST_CASE("training and simulation are bytewise reproducible") {
    const fs::path data = small_bimodal("rep_data");
    const fs::path a = fresh_dir("rep_a"), b = fresh_dir("rep_b");
    REQUIRE(run(tiny_train(data, a, "10")).code == cli::kOk);
    REQUIRE(run(tiny_train(data, b, "10")).code == cli::kOk);
    for (const char* f : {"checkpoint.txt", "edge_probs.txt", "map_graph.txt", "history.csv"})
        CHECK(slurp(a / f) == slurp(b / f));
    CHECK(fs::exists(a / "snapshots" / "edge_probs_5.txt"));
    CHECK(fs::exists(a / "snapshots" / "edge_probs_10.txt"));
    CHECK(data::load_key_values(a / "config.txt").at("t_end") == "0.9");

    const auto history = slurp(a / "history.csv");
    CHECK(history.find("auroc") == std::string::npos);

    const fs::path sa = fresh_dir("rep_sa"), sb = fresh_dir("rep_sb");
    const std::vector<std::string> sim{"simulate", "--checkpoint", (a / "checkpoint.txt").string(), "--paths", "5"};
    auto with_out = [&](const fs::path& o) {
        auto v = sim;
        v.insert(v.end(), {"--out", o.string()});
        return v;
    };
    REQUIRE(run(with_out(sa)).code == cli::kOk);
    REQUIRE(run(with_out(sb)).code == cli::kOk);
    CHECK(slurp(sa / "trajectories.csv") == slurp(sb / "trajectories.csv"));
}

TEST_CASE("training resumes from a checkpoint") {
    const fs::path data = small_bimodal("resume_data");
    const fs::path full = fresh_dir("resume_full"), rest = fresh_dir("resume_rest");
    auto full_args = tiny_train(data, full, "8");
    full_args.insert(full_args.end(), {"--checkpoint-every", "4"});
    REQUIRE(run(full_args).code == cli::kOk);
    REQUIRE(fs::exists(full / "checkpoint_4.txt"));
    auto resume_args = tiny_train(data, rest, "8");
    resume_args.insert(resume_args.end(), {"--resume", (full / "checkpoint_4.txt").string()});
    REQUIRE(run(resume_args).code == cli::kOk);
    CHECK(slurp(rest / "edge_probs.txt") == slurp(full / "edge_probs.txt"));
}

TEST_CASE("intervene with the identity matches simulate, and pins hold") {
    const fs::path dir = fresh_dir("iv");
    fs::create_directories(dir);
    write(dir / "identity.txt", "kind = identity\n");
    write(dir / "pin.txt", "kind = pin\ndims = 0\nvalues = 0.75\nwindow = 1 2\n");
    const std::vector<std::string> common{"--generator", "bimodal", "--paths", "4", "--t-end", "3", "--seed", "2"};
    auto args = [&](std::vector<std::string> head, const std::string& out) {
        head.insert(head.end(), common.begin(), common.end());
        head.insert(head.end(), {"--out", (dir / out).string()});
        return head;
    };
    REQUIRE(run(args({"simulate"}, "sim")).code == cli::kOk);
    REQUIRE(run(args({"intervene", "--intervention", (dir / "identity.txt").string()}, "id")).code == cli::kOk);
    CHECK(slurp(dir / "sim" / "trajectories.csv") == slurp(dir / "id" / "trajectories.csv"));

    REQUIRE(run(args({"intervene", "--intervention", (dir / "pin.txt").string()}, "pin")).code == cli::kOk);
    std::istringstream in(slurp(dir / "pin" / "trajectories.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "path,time,z_0");
    std::size_t pinned = 0;
    while (std::getline(in, line)) {
        std::size_t path;
        double t, z;
        char c1, c2;
        std::istringstream row(line);
        row >> path >> c1 >> t >> c2 >> z;
        if (t >= 1.0 && t <= 2.0) {
            CHECK(z == 0.75);
            ++pinned;
        }
    }
    CHECK(pinned == 4 * 11);

    write(dir / "loop.txt", "kind = ordered\norder = 0\nassign.0 = z0 + 1\n");
    CHECK(run(args({"intervene", "--intervention", (dir / "loop.txt").string()}, "loop")).code == cli::kValidation);
    CHECK(run(args({"intervene"}, "none")).code == cli::kValidation);
}

TEST_CASE("paths simulated from a trained bimodal model reach both signs") {
    const fs::path data = small_bimodal("sign_data");
    const fs::path model = fresh_dir("sign_model"), sim = fresh_dir("sign_sim");
    REQUIRE(run(tiny_train(data, model, "5")).code == cli::kOk);
    REQUIRE(run({"simulate", "--checkpoint", (model / "checkpoint.txt").string(), "--paths", "50", "--t-end", "5",
                 "--out", sim.string()})
                .code == cli::kOk);
    std::istringstream in(slurp(sim / "trajectories.csv"));
    std::string line;
    std::getline(in, line);
    std::size_t pos = 0, neg = 0, rows = 0;
    while (std::getline(in, line)) {
        const double z = std::stod(line.substr(line.rfind(',') + 1));
        pos += z > 0;
        neg += z < 0;
        ++rows;
    }
    CHECK(rows == 50 * 51);
    CHECK(pos > 0);
    CHECK(neg > 0);
}
