#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsgan/checkpoint.hpp"
#include "gsgan/config.hpp"
#include "gsgan/data.hpp"
#include "gsgan/image_io.hpp"
#include "gsgan/losses.hpp"
#include "gsgan/metrics.hpp"
#include "gsgan/model.hpp"
#include "gsgan/optim.hpp"

namespace gsgan {

enum class LossKind { hinge, standard };

struct StepMetrics {
    std::size_t iter = 0;
    double loss_d = 0, loss_g = 0, lr_g = 0, lr_d = 0;
    std::optional<std::pair<double, double>> fid_is;
};

// Streams in the deterministic RNG tree.
enum : std::uint64_t {
    kStreamInit = 1,
    kStreamLatent = 2,
    kStreamLabel = 3,
    kStreamData = 4,
    kStreamEval = 5,
};

// Dataset pass-through source (real images resampled with replacement).
class DatasetImageSource final : public ImageSource {
public:
    explicit DatasetImageSource(DatasetHandle d) : data_(std::move(d)) {}
    Tensor<float> sample(std::size_t n, CounterRng& rng) override {
        std::vector<LabeledImage> recs;
        recs.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            recs.push_back(data_->at(static_cast<std::size_t>(rng.below(data_->size()))));
        return stack_batch<float>(recs).first;
    }

private:
    DatasetHandle data_;
};

// ---------------------------------------------------------------------------
// Adversarial training loop: n_dis discriminator updates per generator
// update, hinge loss by default, Adam(beta1, beta2), linear LR decay at the
// end of training. One Trainer owns all mutable state and runs on one thread.
// ---------------------------------------------------------------------------
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg) : cfg_(cfg) { build(); }

    // n_dis discriminator updates (fresh real batch + fresh latents each),
    // then one generator update. Reported loss_d is the mean over the
    // discriminator updates of this step.
    StepMetrics step() {
        const double lr_g = lr_at(iter_, total_iters_, decay_last_, base_lr_g_);
        const double lr_d = lr_at(iter_, total_iters_, decay_last_, base_lr_d_);
        const Ctx train_sn{true, true};
        const Ctx train_nosn{true, false};

        double loss_d_sum = 0.0;
        for (std::size_t k = 0; k < n_dis_; ++k) {
            auto [reals, real_labels] = next_real_batch(batch_d_);
            auto [fakes, fake_labels] = generate_detached(batch_d_);
            Tape<float> t;
            Var d_real = d_->forward(t, t.constant(std::move(reals)), real_labels, train_sn);
            Var d_fake = d_->forward(t, t.constant(std::move(fakes)), fake_labels, train_nosn);
            Var loss = loss_kind_ == LossKind::hinge ? hinge_loss_d(t, d_real, d_fake)
                                                     : standard_loss_d(t, d_real, d_fake);
            t.backward(loss);
            adam_d_.step(d_->params(), lr_d);
            loss_d_sum += static_cast<double>(t.val(loss)[0]);
            ++d_updates_;
        }

        Tensor<float> z = sample_latent<float>(batch_g_, z_dim_, latent_rng_);
        std::vector<int> labels = sample_labels(batch_g_);
        Tape<float> t;
        Var img = g_->forward(t, t.constant(std::move(z)), labels, train_sn);
        Var logit = d_->forward(t, img, labels, train_nosn);
        Var loss = loss_kind_ == LossKind::hinge ? hinge_loss_g(t, logit)
                                                 : standard_loss_g(t, logit);
        t.backward(loss);
        adam_g_.step(g_->params(), lr_g);
        ++g_updates_;

        StepMetrics m;
        m.iter = iter_++;
        m.loss_d = loss_d_sum / static_cast<double>(n_dis_);
        m.loss_g = static_cast<double>(t.val(loss)[0]);
        m.lr_g = lr_g;
        m.lr_d = lr_d;
        return m;
    }

    // Full run with CSV metrics, periodic checkpoints, sample sheets and
    // FID/IS evaluations, as configured. Appends rows when resuming.
    void run(const std::string& out_dir) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        const std::string csv_path = out_dir + "/metrics.csv";
        std::ofstream csv(csv_path, iter_ == 0 ? std::ios::trunc : std::ios::app);
        if (!csv) throw IoError("train: cannot write " + csv_path);
        if (iter_ == 0) csv << "iter,loss_d,loss_g,lr_g,lr_d,fid,is\n";

        const std::uint64_t eval_every = cfg_.get_u64("eval_every");
        const std::uint64_t ckpt_every = cfg_.get_u64("ckpt_every");
        const std::uint64_t sample_every = cfg_.get_u64("sample_every");

        while (iter_ < total_iters_) {
            StepMetrics m = step();
            if (eval_every && ((m.iter + 1) % eval_every == 0 || m.iter + 1 == total_iters_))
                m.fid_is = evaluate_metrics();
            write_csv_row(csv, m);
            if (ckpt_every && (m.iter + 1) % ckpt_every == 0)
                save(out_dir + "/ckpt_" + std::to_string(m.iter + 1) + ".bin");
            if (sample_every && (m.iter + 1) % sample_every == 0) {
                CounterRng rng(substream_seed(seed_, kStreamEval ^ (m.iter + 1)));
                Tensor<float> imgs = sample_images(cfg_.get_u64("sample_count"), rng);
                write_ppm_grid(out_dir + "/samples_" + std::to_string(m.iter + 1) + ".ppm", imgs,
                               cfg_.get_u64("sample_grid"));
            }
        }
    }

    // Eval-mode image synthesis (BN mode per config).
    Tensor<float> sample_images(std::size_t n, CounterRng& rng) {
        const bool eval_bn = cfg_.get_bool("bn_eval_sampling");
        const Ctx ctx{!eval_bn, false};
        Tensor<float> out({n, 3, resolution_, resolution_});
        std::size_t done = 0;
        while (done < n) {
            const std::size_t b = std::min<std::size_t>(64, n - done);
            Tensor<float> z = sample_latent<float>(b, z_dim_, rng);
            std::vector<int> labels;
            if (conditional_) {
                labels.resize(b);
                for (auto& l : labels) l = static_cast<int>(rng.below(num_classes_));
            }
            Tape<float> t;
            Var img = g_->forward(t, t.constant(std::move(z)), labels, ctx);
            const Tensor<float>& v = t.val(img);
            std::copy(v.raw().begin(), v.raw().end(),
                      out.raw().begin() + static_cast<long>(done * 3 * resolution_ * resolution_));
            done += b;
        }
        return out;
    }

    // (fid, is) of the current generator against cached real features, with a
    // per-iteration evaluation RNG so training streams stay untouched.
    std::pair<double, double> evaluate_metrics() {
        ensure_extractor();
        const std::size_t n = cfg_.get_u64("eval_samples");
        CounterRng rng(substream_seed(seed_, kStreamEval + 7919 * iter_));
        struct GenSource final : ImageSource {
            Trainer* tr;
            Tensor<float> sample(std::size_t n2, CounterRng& r) override {
                return tr->sample_images(n2, r);
            }
        } src;
        src.tr = this;
        return evaluate(src, *extractor_, real_features_, n, rng);
    }

    // Feature/posterior matrices for external cross-checking: real features,
    // generated features and generated posteriors as CSV files.
    void dump_eval_matrices(const std::string& dir) {
        ensure_extractor();
        std::filesystem::create_directories(dir);
        const std::size_t n = cfg_.get_u64("eval_samples");
        CounterRng rng(substream_seed(seed_, kStreamEval + 104729));
        Tensor<float> fakes = sample_images(n, rng);
        write_csv_matrix(dir + "/real_features.csv", real_features_);
        write_csv_matrix(dir + "/fake_features.csv", extractor_->features(fakes));
        write_csv_matrix(dir + "/fake_posteriors.csv", extractor_->posteriors(fakes));
    }

    // ---- checkpointing -----------------------------------------------------

    void save(const std::string& path) {
        CheckpointData d;
        d.config_text = cfg_.emit();
        auto add_params = [&](std::vector<Parameter<float>*> ps) {
            for (auto* p : ps) d.records.push_back(to_record(p->name, p->value));
        };
        add_params(g_->params());
        add_params(d_->params());
        for (auto& s : g_->states()) d.records.push_back(to_record(s.name, *s.tensor));
        for (auto& s : d_->states()) d.records.push_back(to_record(s.name, *s.tensor));
        auto add_moments = [&](const char* prefix, Adam<float>& opt,
                               std::vector<Parameter<float>*> ps) {
            for (auto* p : ps) {
                auto& mo = opt.moments(*p);
                d.records.push_back(to_record(std::string(prefix) + p->name + ".m", mo.m));
                d.records.push_back(to_record(std::string(prefix) + p->name + ".v", mo.v));
            }
        };
        add_moments("adam_g.", adam_g_, g_->params());
        add_moments("adam_d.", adam_d_, d_->params());
        Tensor<double> counters({7});
        counters[0] = static_cast<double>(iter_);
        counters[1] = static_cast<double>(adam_g_.step_count());
        counters[2] = static_cast<double>(adam_d_.step_count());
        counters[3] = static_cast<double>(latent_rng_.counter());
        counters[4] = static_cast<double>(label_rng_.counter());
        counters[5] = static_cast<double>(sampler_->epoch());
        counters[6] = static_cast<double>(sampler_->cursor());
        d.records.push_back(to_record("trainer.counters", counters));
        save_checkpoint(path, d);
    }

    // Restores parameters, optimizer moments, running statistics, RNG and
    // data-sampler positions; continuation is bit-identical to the
    // uninterrupted run.
    void load(const std::string& path) {
        const CheckpointData d = load_checkpoint(path);
        RunConfig loaded;
        loaded.parse_text(d.config_text);
        cfg_ = loaded;
        build();
        restore_records(d);
    }

    static Trainer from_checkpoint(const std::string& path) {
        const CheckpointData d = load_checkpoint(path);
        RunConfig loaded;
        loaded.parse_text(d.config_text);
        Trainer t(loaded);
        t.restore_records(d);
        return t;
    }

    // Post-load adjustments that cannot invalidate restored state: schedule
    // extent and output cadence only.
    void override_schedule(const std::string& key, const std::string& value) {
        static const char* allowed[] = {"total_iters", "decay_last",   "eval_every",
                                        "ckpt_every",  "sample_every", "sample_count",
                                        "sample_grid", "eval_samples"};
        bool ok = false;
        for (const char* k : allowed) ok = ok || key == k;
        if (!ok)
            throw ValueError("resume: only schedule/output keys may be overridden, not '" + key +
                             "'");
        cfg_.set(key, value);
        total_iters_ = cfg_.get_u64("total_iters");
        decay_last_ = cfg_.get_u64("decay_last");
    }

private:
    void restore_records(const CheckpointData& d) {
        auto restore_params = [&](std::vector<Parameter<float>*> ps) {
            for (auto* p : ps) {
                const TensorRecord* r = d.record(p->name);
                if (!r) throw IoError("checkpoint: missing parameter '" + p->name + "'");
                p->value = from_record<float>(*r);
            }
        };
        restore_params(g_->params());
        restore_params(d_->params());
        auto restore_states = [&](std::vector<NamedState<float>> ss) {
            for (auto& s : ss) {
                const TensorRecord* r = d.record(s.name);
                if (!r) throw IoError("checkpoint: missing state '" + s.name + "'");
                *s.tensor = from_record<float>(*r);
            }
        };
        restore_states(g_->states());
        restore_states(d_->states());
        auto restore_moments = [&](const char* prefix, Adam<float>& opt,
                                   std::vector<Parameter<float>*> ps) {
            for (auto* p : ps) {
                const TensorRecord* rm = d.record(std::string(prefix) + p->name + ".m");
                const TensorRecord* rv = d.record(std::string(prefix) + p->name + ".v");
                if (!rm || !rv)
                    throw IoError("checkpoint: missing optimizer state for '" + p->name + "'");
                auto& mo = opt.moments(*p);
                mo.m = from_record<float>(*rm);
                mo.v = from_record<float>(*rv);
            }
        };
        restore_moments("adam_g.", adam_g_, g_->params());
        restore_moments("adam_d.", adam_d_, d_->params());
        const TensorRecord* c = d.record("trainer.counters");
        if (!c) throw IoError("checkpoint: missing trainer counters");
        Tensor<double> counters = from_record<double>(*c);
        iter_ = static_cast<std::size_t>(counters[0]);
        adam_g_.set_step_count(static_cast<std::uint64_t>(counters[1]));
        adam_d_.set_step_count(static_cast<std::uint64_t>(counters[2]));
        latent_rng_.set_counter(static_cast<std::uint64_t>(counters[3]));
        label_rng_.set_counter(static_cast<std::uint64_t>(counters[4]));
        sampler_->restore(static_cast<std::uint64_t>(counters[5]),
                          static_cast<std::uint64_t>(counters[6]));
    }

public:
    // ---- accessors ----------------------------------------------------------

    Generator<float>& generator() { return *g_; }
    Discriminator<float>& discriminator() { return *d_; }
    const RunConfig& config() const { return cfg_; }
    std::size_t iter() const { return iter_; }
    std::uint64_t d_updates() const { return d_updates_; }
    std::uint64_t g_updates() const { return g_updates_; }
    const Dataset& dataset() const { return *data_; }

    static void write_csv_row(std::ostream& os, const StepMetrics& m) {
        char buf[256];
        if (m.fid_is)
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.iter,
                          m.loss_d, m.loss_g, m.lr_g, m.lr_d, m.fid_is->first, m.fid_is->second);
        else
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,,\n", m.iter, m.loss_d,
                          m.loss_g, m.lr_g, m.lr_d);
        os << buf;
    }

    // Real-image features for FID, computed once from the dataset head.
    const Eigen::MatrixXd& real_features() {
        ensure_extractor();
        return real_features_;
    }
    const FeatureExtractor& extractor() {
        ensure_extractor();
        return *extractor_;
    }

private:
    void build() {
        seed_ = cfg_.get_u64("seed");
        z_dim_ = cfg_.get_u64("z_dim");
        n_dis_ = cfg_.get_u64("n_dis");
        batch_d_ = cfg_.get_u64("batch_d");
        batch_g_ = cfg_.get_u64("batch_g");
        total_iters_ = cfg_.get_u64("total_iters");
        decay_last_ = cfg_.get_u64("decay_last");
        base_lr_g_ = cfg_.get_double("lr_g");
        base_lr_d_ = cfg_.get_double("lr_d");
        resolution_ = cfg_.get_u64("resolution");
        conditional_ = cfg_.get_bool("conditional");
        loss_kind_ = cfg_.get("loss") == "standard" ? LossKind::standard : LossKind::hinge;
        if (cfg_.get("loss") != "hinge" && cfg_.get("loss") != "standard")
            throw ValueError("train: unknown loss '" + cfg_.get("loss") + "'");

        const std::string ds = cfg_.get("dataset");
        if (ds == "cifar10") {
            data_ = load_cifar10(cfg_.get("data_dir"));
            if (resolution_ != 32)
                throw ValueError("train: cifar10 is 32x32, config resolution is " +
                                 std::to_string(resolution_));
        } else {
            data_ = synth_dataset(synth_kind_from_string(ds), resolution_,
                                  cfg_.get_u64("num_classes"), cfg_.get_u64("synth_n"),
                                  substream_seed(seed_, kStreamData + 100));
        }
        num_classes_ = data_->num_classes();

        const InitKind init = cfg_.get("init") == "normal002" ? InitKind::normal_002
                                                              : InitKind::glorot_uniform;
        if (cfg_.get("init") != "glorot" && cfg_.get("init") != "normal002")
            throw ValueError("train: unknown init '" + cfg_.get("init") + "'");

        GeneratorSpec gs;
        gs.resolution = resolution_;
        gs.z_dim = z_dim_;
        gs.base_channels = cfg_.get_u64("g_channels");
        gs.shortcut = shortcut_from_string(cfg_.get("shortcut"));
        gs.conditional = conditional_;
        gs.num_classes = num_classes_;
        gs.embed_dim = cfg_.get_u64("embed_dim");
        gs.sn = cfg_.get_bool("sn_g");
        gs.init = init;
        gs.conditional_shortcut_bn = cfg_.get_bool("conditional_shortcut_bn");

        DiscriminatorSpec dspec;
        dspec.resolution = resolution_;
        dspec.base_channels = cfg_.get_u64("d_channels");
        dspec.sn = cfg_.get_bool("sn_d");
        dspec.projection = conditional_;
        dspec.num_classes = num_classes_;
        dspec.init = init;

        CounterRng init_rng(substream_seed(seed_, kStreamInit));
        g_ = std::make_unique<Generator<float>>(gs, init_rng);
        d_ = std::make_unique<Discriminator<float>>(dspec, init_rng);

        adam_g_ = Adam<float>(cfg_.get_double("beta1"), cfg_.get_double("beta2"),
                              cfg_.get_double("adam_eps"));
        adam_d_ = Adam<float>(cfg_.get_double("beta1"), cfg_.get_double("beta2"),
                              cfg_.get_double("adam_eps"));
        latent_rng_ = CounterRng(substream_seed(seed_, kStreamLatent));
        label_rng_ = CounterRng(substream_seed(seed_, kStreamLabel));
        sampler_.emplace(data_, substream_seed(seed_, kStreamData));
        iter_ = 0;
        d_updates_ = g_updates_ = 0;
        extractor_.reset();
    }

    void ensure_extractor() {
        if (extractor_) return;
        const std::string kind = cfg_.get("extractor");
        const std::uint64_t xseed = cfg_.get_u64("extractor_seed");
        if (kind == "randconv")
            extractor_ = make_randconv_extractor(xseed, std::max<std::size_t>(num_classes_, 2));
        else if (kind == "pixelmoments")
            extractor_ = make_pixel_moment_extractor(xseed, std::max<std::size_t>(num_classes_, 2));
        else
            throw ValueError("train: unknown extractor '" + kind + "'");
        const std::size_t n = std::min<std::size_t>(cfg_.get_u64("eval_samples"), data_->size());
        std::vector<LabeledImage> recs;
        recs.reserve(n);
        for (std::size_t i = 0; i < n; ++i) recs.push_back(data_->at(i));
        real_features_ = extractor_->features(stack_batch<float>(recs).first);
    }

    std::pair<Tensor<float>, std::vector<int>> next_real_batch(std::size_t n) {
        auto recs = sampler_->next(n);
        auto [x, labels] = stack_batch<float>(recs);
        if (!conditional_) labels.clear();
        return {std::move(x), std::move(labels)};
    }

    std::vector<int> sample_labels(std::size_t n) {
        std::vector<int> labels;
        if (conditional_) {
            labels.resize(n);
            for (auto& l : labels) l = static_cast<int>(label_rng_.below(num_classes_));
        }
        return labels;
    }

    // Forward pass without recording generator gradients for the D phase.
    std::pair<Tensor<float>, std::vector<int>> generate_detached(std::size_t n) {
        Tensor<float> z = sample_latent<float>(n, z_dim_, latent_rng_);
        std::vector<int> labels = sample_labels(n);
        Tape<float> t;
        Var img = g_->forward(t, t.constant(std::move(z)), labels, Ctx{true, true});
        return {t.val(img), std::move(labels)};
    }

    RunConfig cfg_;
    DatasetHandle data_;
    std::unique_ptr<Generator<float>> g_;
    std::unique_ptr<Discriminator<float>> d_;
    Adam<float> adam_g_, adam_d_;
    CounterRng latent_rng_{0}, label_rng_{0};
    std::optional<BatchSampler> sampler_;
    std::unique_ptr<FeatureExtractor> extractor_;
    Eigen::MatrixXd real_features_;

    std::uint64_t seed_ = 0;
    std::size_t z_dim_ = 0, n_dis_ = 1, batch_d_ = 0, batch_g_ = 0;
    std::size_t total_iters_ = 0, decay_last_ = 0, resolution_ = 0, num_classes_ = 1;
    double base_lr_g_ = 0, base_lr_d_ = 0;
    bool conditional_ = false;
    LossKind loss_kind_ = LossKind::hinge;
    std::size_t iter_ = 0;
    std::uint64_t d_updates_ = 0, g_updates_ = 0;
};

}  // namespace gsgan
