// End-to-end checks of the command-line tool, driving the real binary.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string cli() { return GSGAN_CLI_PATH; }

int run(const std::string& args, const std::string& log) {
    const std::string cmd = cli() + " " + args + " > " + log + " 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tmp(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

const std::string kTinyOverrides =
    " --set resolution=8 --set dataset=blobs --set num_classes=4 --set synth_n=64"
    " --set z_dim=8 --set g_channels=8 --set d_channels=8 --set n_dis=2"
    " --set batch_d=4 --set batch_g=4 --set total_iters=6 --set decay_last=2"
    " --set eval_samples=16 --set eval_every=3 --set ckpt_every=3 --set sample_every=6";

}  // namespace

TEST_CASE("dump-config round-trips through a file") {
    const std::string log = tmp("gsgan_cli_dump.txt");
    REQUIRE(run("dump-config", log) == 0);
    const std::string text = slurp(log);
    CHECK(text.find("preset = cifar") != std::string::npos);

    const std::string cfg_path = tmp("gsgan_cli_cfg.txt");
    {
        std::ofstream out(cfg_path);
        out << text;
    }
    const std::string log2 = tmp("gsgan_cli_dump2.txt");
    REQUIRE(run("dump-config --config " + cfg_path, log2) == 0);
    CHECK(slurp(log2) == text);
}

TEST_CASE("train is deterministic: rerun gives byte-identical metrics.csv") {
    const std::string out1 = tmp("gsgan_cli_run1");
    const std::string out2 = tmp("gsgan_cli_run2");
    fs::remove_all(out1);
    fs::remove_all(out2);
    REQUIRE(run("train --seed 5 --out " + out1 + kTinyOverrides, tmp("cli_t1.log")) == 0);
    REQUIRE(run("train --seed 5 --out " + out2 + kTinyOverrides, tmp("cli_t2.log")) == 0);
    const std::string csv1 = slurp(out1 + "/metrics.csv");
    CHECK(csv1 == slurp(out2 + "/metrics.csv"));
    CHECK_FALSE(csv1.empty());
    CHECK(fs::exists(out1 + "/ckpt_final.bin"));
    CHECK(fs::exists(out1 + "/samples_6.ppm"));
}

TEST_CASE("resume continues into the same metrics as the uninterrupted run") {
    const std::string full = tmp("gsgan_cli_full");
    const std::string part = tmp("gsgan_cli_part");
    fs::remove_all(full);
    fs::remove_all(part);
    // 6-iteration run, checkpointing at 3
    REQUIRE(run("train --seed 9 --out " + full + kTinyOverrides, tmp("cli_f.log")) == 0);
    // resume the mid-run checkpoint into a fresh directory: it must replay
    // the uninterrupted run's remaining rows exactly
    REQUIRE(run("train --resume " + full + "/ckpt_3.bin --out " + part, tmp("cli_p2.log")) == 0);
    std::istringstream f(slurp(full + "/metrics.csv")), p(slurp(part + "/metrics.csv"));
    std::string line;
    std::vector<std::string> rows_full, rows_part;
    while (std::getline(f, line)) rows_full.push_back(line);
    while (std::getline(p, line)) rows_part.push_back(line);
    REQUIRE(rows_full.size() == 7);   // header + iters 0..5
    REQUIRE(rows_part.size() == 3);   // iters 3..5, appended without header
    for (int i = 0; i < 3; ++i) CHECK(rows_part[i] == rows_full[4 + i]);
}

TEST_CASE("resume rejects overrides that would invalidate restored state") {
    const std::string full = tmp("gsgan_cli_full");  // from the previous case
    const std::string log = tmp("cli_reject.log");
    CHECK(run("train --resume " + full + "/ckpt_3.bin --set g_channels=16 --out " + full, log) !=
          0);
    CHECK(slurp(log).find("schedule") != std::string::npos);
}

TEST_CASE("sample writes the documented PPM header") {
    const std::string out = tmp("gsgan_cli_grid.ppm");
    REQUIRE(run("sample -n 16 --grid 4 --out-file " + out +
                    " --set resolution=8 --set g_channels=8 --set z_dim=8 --set dataset=blobs"
                    " --set num_classes=4 --set synth_n=16",
                tmp("cli_s.log")) == 0);
    std::ifstream in(out, std::ios::binary);
    std::string magic, w, h, maxv;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P6");
    CHECK(w == "32");
    CHECK(h == "32");
    CHECK(maxv == "255");
}

TEST_CASE("eval prints a fid,is CSV line") {
    const std::string log = tmp("gsgan_cli_eval.txt");
    REQUIRE(run("eval --set resolution=8 --set dataset=blobs --set num_classes=4"
                " --set synth_n=32 --set eval_samples=32 --set g_channels=8 --set z_dim=8",
                log) == 0);
    const std::string text = slurp(log);
    CHECK(text.find("fid,is\n") != std::string::npos);
    double fid = -1, is = -1;
    std::sscanf(text.c_str() + text.find("fid,is\n") + 7, "%lf,%lf", &fid, &is);
    CHECK(fid > 0.0);
    CHECK(is >= 1.0);
}

TEST_CASE("param-count prints per-layer rows that sum to the total") {
    const std::string log = tmp("gsgan_cli_pc.txt");
    REQUIRE(run("param-count --set resolution=8 --set g_channels=8 --set z_dim=8"
                " --set dataset=blobs --set num_classes=4 --set synth_n=16",
                log) == 0);
    const std::string text = slurp(log);
    std::istringstream in(text);
    std::string line;
    long long sum = 0, total = -1;
    bool in_gen = false;
    while (std::getline(in, line)) {
        if (line == "generator") {
            in_gen = true;
            continue;
        }
        if (line == "discriminator") in_gen = false;
        if (!in_gen) continue;
        std::istringstream ls(line);
        std::string name;
        ls >> name;
        if (name == "total") {
            ls >> total;
            break;
        }
        std::string shape;
        long long n;
        ls >> shape >> n;
        sum += n;
    }
    CHECK(total > 0);
    CHECK(sum == total);
}

TEST_CASE("grad-check subcommand passes for the tensor module") {
    const std::string log = tmp("gsgan_cli_gc.txt");
    REQUIRE(run("grad-check --module tensor", log) == 0);
    CHECK(slurp(log).find("all passed") != std::string::npos);
}

TEST_CASE("unknown config keys make commands fail with a message") {
    const std::string log = tmp("gsgan_cli_err.txt");
    CHECK(run("train --set bogus_key=1", log) != 0);
    CHECK(slurp(log).find("unknown key") != std::string::npos);
}

TEST_CASE("eval --dump-features writes CSV matrices") {
    const std::string dir = tmp("gsgan_cli_dumpfeat");
    fs::remove_all(dir);
    REQUIRE(run("eval --dump-features " + dir +
                    " --set resolution=8 --set dataset=blobs --set num_classes=4"
                    " --set synth_n=32 --set eval_samples=16 --set g_channels=8 --set z_dim=8",
                tmp("cli_dump.log")) == 0);
    for (const char* f : {"real_features.csv", "fake_features.csv", "fake_posteriors.csv"}) {
        INFO(f);
        CHECK(fs::exists(dir + "/" + f));
    }
    // 16 rows each
    std::ifstream in(dir + "/fake_features.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 16);
}

TEST_CASE("curves extracts evaluation rows from a metrics file") {
    const std::string csv = tmp("gsgan_curves_in.csv");
    {
        std::ofstream out(csv);
        out << "iter,loss_d,loss_g,lr_g,lr_d,fid,is\n";
        out << "0,1.0,2.0,0.0002,0.0002,,\n";
        out << "1,1.1,2.1,0.0002,0.0002,0.35,1.02\n";
        out << "2,1.2,2.2,0.0002,0.0002,,\n";
        out << "3,1.3,2.3,0.0002,0.0002,0.21,1.05\n";
    }
    const std::string log = tmp("gsgan_curves_out.txt");
    REQUIRE(run("curves --metrics " + csv, log) == 0);
    CHECK(slurp(log) == "iter,fid,is\n1,0.35,1.02\n3,0.21,1.05\n");
}
