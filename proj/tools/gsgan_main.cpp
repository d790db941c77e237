// gsgan command-line tool: training, sampling, evaluation, gradient checks
// and parameter counting for the gated-shortcut GAN library.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "gsgan/gradcheck.hpp"
#include "gsgan/train.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string preset;
    std::string shortcut;
    std::string out_dir = "out";
    std::string resume;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "config file (key = value lines)");
    cmd->add_option("--set", a.sets, "override: key=value (repeatable)");
    cmd->add_option("--preset", a.preset, "hyperparameter preset: cifar | ttur");
    cmd->add_option("--shortcut", a.shortcut,
                    "identity | gated | egs | sog | egsconv | sogconv");
    cmd->add_option("--seed", a.seed, "master seed");
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--resume", a.resume, "checkpoint to resume from");
}

gsgan::RunConfig make_config(const CommonArgs& a) {
    gsgan::RunConfig cfg;
    if (!a.config_path.empty()) cfg.parse_file(a.config_path);
    if (!a.preset.empty()) cfg.set("preset", a.preset);
    if (!a.shortcut.empty()) cfg.set("shortcut", a.shortcut);
    if (a.seed >= 0) cfg.set("seed", std::to_string(a.seed));
    for (const auto& kv : a.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw gsgan::ValueError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int cmd_train(const CommonArgs& a) {
    if (!a.resume.empty()) {
        // resume restores the checkpoint's embedded config; only schedule and
        // output keys may change from the command line
        gsgan::Trainer trainer = gsgan::Trainer::from_checkpoint(a.resume);
        for (const auto& kv : a.sets) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw gsgan::ValueError("--set expects key=value, got '" + kv + "'");
            trainer.override_schedule(kv.substr(0, eq), kv.substr(eq + 1));
        }
        trainer.run(a.out_dir);
        trainer.save(a.out_dir + "/ckpt_final.bin");
        std::printf("resumed to %zu iterations; outputs in %s\n", trainer.iter(),
                    a.out_dir.c_str());
        return 0;
    }
    gsgan::Trainer trainer(make_config(a));
    trainer.run(a.out_dir);
    trainer.save(a.out_dir + "/ckpt_final.bin");
    std::printf("trained %zu iterations; outputs in %s\n", trainer.iter(), a.out_dir.c_str());
    return 0;
}

int cmd_grad_check(const std::string& module) {
    const auto results = gsgan::grad_check_module(module);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-40s max rel err %.3e  %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "ok" : "FAIL");
        ok = ok && r.pass;
    }
    std::printf("%zu checks, %s\n", results.size(), ok ? "all passed" : "FAILURES above");
    return ok ? 0 : 1;
}

int cmd_param_count(const CommonArgs& a) {
    gsgan::RunConfig cfg = make_config(a);
    gsgan::CounterRng rng(gsgan::substream_seed(cfg.get_u64("seed"), 1));

    gsgan::GeneratorSpec gs;
    gs.resolution = cfg.get_u64("resolution");
    gs.z_dim = cfg.get_u64("z_dim");
    gs.base_channels = cfg.get_u64("g_channels");
    gs.shortcut = gsgan::shortcut_from_string(cfg.get("shortcut"));
    gs.conditional = cfg.get_bool("conditional");
    gs.num_classes = cfg.get_u64("num_classes");
    gs.embed_dim = cfg.get_u64("embed_dim");
    gs.sn = cfg.get_bool("sn_g");
    gsgan::DiscriminatorSpec ds;
    ds.resolution = gs.resolution;
    ds.base_channels = cfg.get_u64("d_channels");
    ds.sn = cfg.get_bool("sn_d");
    ds.projection = gs.conditional;
    ds.num_classes = gs.num_classes;
    gsgan::Generator<float> g(gs, rng);
    gsgan::Discriminator<float> d(ds, rng);

    auto print_counts = [](const char* title, std::vector<gsgan::Parameter<float>*> params) {
        std::printf("%s\n", title);
        std::size_t total = 0;
        for (const auto* p : params) {
            std::printf("  %-48s %s %10zu\n", p->name.c_str(),
                        gsgan::shape_str(p->value.shape()).c_str(), p->value.numel());
            total += p->value.numel();
        }
        std::printf("  %-48s %21zu\n", "total", total);
        return total;
    };
    print_counts("generator", g.params());
    print_counts("discriminator", d.params());
    return 0;
}

int cmd_sample(const CommonArgs& a, const std::string& ckpt, std::size_t n, std::size_t grid,
               const std::string& out_path) {
    gsgan::Trainer trainer(make_config(a));
    if (!ckpt.empty()) trainer.load(ckpt);
    gsgan::CounterRng rng(gsgan::substream_seed(trainer.config().get_u64("seed"), 0xdead));
    gsgan::Tensor<float> imgs = trainer.sample_images(n, rng);
    gsgan::write_ppm_grid(out_path, imgs, grid);
    std::printf("wrote %zu samples to %s\n", n, out_path.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& ckpt, const std::string& dump_dir) {
    gsgan::Trainer trainer(make_config(a));
    if (!ckpt.empty()) trainer.load(ckpt);
    const auto [fid, is] = trainer.evaluate_metrics();
    std::printf("fid,is\n%.9g,%.9g\n", fid, is);
    if (!dump_dir.empty()) trainer.dump_eval_matrices(dump_dir);
    return 0;
}

// Per-iteration FID/IS rows from a training metrics file, ready for an
// external plotting tool.
int cmd_curves(const std::string& metrics_csv) {
    std::ifstream in(metrics_csv);
    if (!in) {
        std::fprintf(stderr, "error: cannot open %s\n", metrics_csv.c_str());
        return 1;
    }
    std::string line;
    std::getline(in, line);  // header
    std::printf("iter,fid,is\n");
    while (std::getline(in, line)) {
        // columns: iter,loss_d,loss_g,lr_g,lr_d,fid,is
        std::size_t pos = 0;
        std::vector<std::string> cols;
        while (pos <= line.size()) {
            const std::size_t c = line.find(',', pos);
            cols.push_back(line.substr(pos, c == std::string::npos ? c : c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (cols.size() == 7 && !cols[5].empty())
            std::printf("%s,%s,%s\n", cols[0].c_str(), cols[5].c_str(), cols[6].c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gated-shortcut GAN: training, evaluation and verification"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string module = "all";
    std::string ckpt, out_path = "samples.ppm";
    std::size_t n_samples = 16, grid = 4;

    CLI::App* train = app.add_subcommand("train", "run the training loop");
    add_common(train, args);

    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient suite (64-bit)");
    grad->add_option("--module", module, "all | tensor | nn | blocks | model");

    CLI::App* pc = app.add_subcommand("param-count", "per-layer and total parameter counts");
    add_common(pc, args);

    CLI::App* sample = app.add_subcommand("sample", "write a PPM grid of generated images");
    add_common(sample, args);
    sample->add_option("--ckpt", ckpt, "checkpoint file");
    sample->add_option("-n,--num", n_samples, "number of images");
    sample->add_option("--grid", grid, "grid columns");
    sample->add_option("--out-file", out_path, "output PPM path");

    CLI::App* eval = app.add_subcommand("eval", "print fid,is for a checkpoint");
    add_common(eval, args);
    eval->add_option("--ckpt", ckpt, "checkpoint file");
    std::string dump_dir;
    eval->add_option("--dump-features", dump_dir,
                     "directory for feature/posterior CSV matrices");

    CLI::App* dump = app.add_subcommand("dump-config", "print the config with defaults applied");
    add_common(dump, args);

    std::string curves_csv = "metrics.csv";
    CLI::App* curves =
        app.add_subcommand("curves", "extract iter,fid,is rows from a metrics.csv for plotting");
    curves->add_option("--metrics", curves_csv, "metrics.csv produced by train");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(args);
        if (grad->parsed()) return cmd_grad_check(module);
        if (pc->parsed()) return cmd_param_count(args);
        if (sample->parsed()) return cmd_sample(args, ckpt, n_samples, grid, out_path);
        if (eval->parsed()) return cmd_eval(args, ckpt, dump_dir);
        if (dump->parsed()) {
            std::cout << make_config(args).emit();
            return 0;
        }
        if (curves->parsed()) return cmd_curves(curves_csv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
