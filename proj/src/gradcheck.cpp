#include "gsgan/gradcheck.hpp"

#include <algorithm>

namespace gsgan {

using gradcheck_detail::check_one;
using gradcheck_detail::project;
using gradcheck_detail::randn_away_from;
using T = Tensor<double>;
using P = Parameter<double>;

namespace {

void randomize_params(const std::vector<P*>& params, CounterRng& rng, double scale = 0.3) {
    for (P* p : params)
        for (double& v : p->value.raw()) v = rng.normal() * scale;
}

// Frozen-state context: batch statistics, no power-iteration updates, so the
// loss is a pure function of the parameter values.
constexpr Ctx kFdCtx{true, false};

// Converge the power iterations before freezing them; near-random (u, v) put
// sigma next to its clamp floor, where the loss is not smooth.
template <typename Forward>
void warmup_sn(Forward&& fwd, int iters = 50) {
    const Ctx warm{true, true};
    for (int i = 0; i < iters; ++i) {
        Tape<double> t;
        fwd(t, warm);
    }
}

}  // namespace

std::vector<GradCheckResult> grad_check_tensor(const FdOptions& opt) {
    std::vector<GradCheckResult> out;
    CounterRng rng(101);

    auto binary = [&](const std::string& name, auto&& apply, T xa, T xb) {
        P a("a", std::move(xa)), b("b", std::move(xb));
        auto fn = [&, name]() {
            Tape<double> t;
            Var r = apply(t, t.param(a), t.param(b));
            CounterRng prng(7);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one(name, fn, {&a, &b}, opt));
    };

    binary("tensor/add", [](Tape<double>& t, Var a, Var b) { return t.add(a, b); },
           T::randn({2, 3}, rng), T::randn({2, 3}, rng));
    binary("tensor/sub", [](Tape<double>& t, Var a, Var b) { return t.sub(a, b); },
           T::randn({2, 3}, rng), T::randn({2, 3}, rng));
    binary("tensor/mul", [](Tape<double>& t, Var a, Var b) { return t.mul(a, b); },
           T::randn({2, 3}, rng), T::randn({2, 3}, rng));
    binary("tensor/add_scalar_bcast", [](Tape<double>& t, Var a, Var b) { return t.add(a, b); },
           T::randn({2, 3}, rng), T::randn({1}, rng));
    binary("tensor/mul_scalar_bcast", [](Tape<double>& t, Var a, Var b) { return t.mul(a, b); },
           T::randn({2, 3}, rng), T::randn({1}, rng));
    binary("tensor/matmul", [](Tape<double>& t, Var a, Var b) { return t.matmul(a, b); },
           T::randn({3, 4}, rng), T::randn({4, 2}, rng));
    binary("tensor/add_bias_rows",
           [](Tape<double>& t, Var a, Var b) { return t.add_bias_rows(a, b); },
           T::randn({3, 4}, rng), T::randn({4}, rng));
    binary("tensor/concat_channels",
           [](Tape<double>& t, Var a, Var b) { return t.concat_channels(a, b); },
           T::randn({2, 2, 3, 3}, rng), T::randn({2, 3, 3, 3}, rng));

    auto unary = [&](const std::string& name, auto&& apply, T xx) {
        P x("x", std::move(xx));
        auto fn = [&]() {
            Tape<double> t;
            Var r = apply(t, t.param(x));
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one(name, fn, {&x}, opt));
    };

    unary("tensor/relu", [](Tape<double>& t, Var x) { return t.relu(x); },
          randn_away_from(0.0, 0.05, {2, 3, 4, 4}, rng));
    unary("tensor/sigmoid", [](Tape<double>& t, Var x) { return t.sigmoid(x); },
          T::randn({2, 5}, rng));
    unary("tensor/tanh", [](Tape<double>& t, Var x) { return t.tanh(x); }, T::randn({2, 5}, rng));
    unary("tensor/log_clamped",
          [](Tape<double>& t, Var x) { return t.log_clamped(x, 1e-12); },
          randn_away_from(0.0, 0.3, {2, 4}, rng));
    unary("tensor/clamp_min", [](Tape<double>& t, Var x) { return t.clamp_min(x, 0.0); },
          randn_away_from(0.0, 0.05, {2, 4}, rng));
    unary("tensor/upsample_nearest2x",
          [](Tape<double>& t, Var x) { return t.upsample_nearest2x(x); },
          T::randn({2, 2, 3, 3}, rng));
    unary("tensor/avgpool2x", [](Tape<double>& t, Var x) { return t.avgpool2x(x); },
          T::randn({2, 2, 4, 4}, rng));
    unary("tensor/global_sum_pool", [](Tape<double>& t, Var x) { return t.global_sum_pool(x); },
          T::randn({2, 3, 4, 4}, rng));
    unary("tensor/sum_axis1", [](Tape<double>& t, Var x) { return t.sum_axis1(x); },
          T::randn({3, 5}, rng));
    unary("tensor/slice_cols", [](Tape<double>& t, Var x) { return t.slice_cols(x, 1, 4); },
          T::randn({3, 6}, rng));
    unary("tensor/reshape", [](Tape<double>& t, Var x) { return t.reshape(x, {6, 2}); },
          T::randn({3, 4}, rng));
    unary("tensor/affine", [](Tape<double>& t, Var x) { return t.affine(x, -2.0, 0.5); },
          T::randn({3, 4}, rng));
    unary("tensor/mean_all", [](Tape<double>& t, Var x) { return t.mean_all(x); },
          T::randn({3, 4}, rng));
    unary("tensor/sum_all", [](Tape<double>& t, Var x) { return t.sum_all(x); },
          T::randn({3, 4}, rng));
    unary("tensor/batch_norm_train",
          [](Tape<double>& t, Var x) { return t.batch_norm_train(x, 1e-5); },
          T::randn({2, 3, 3, 3}, rng));

    {
        std::vector<double> m{0.3, -0.2, 0.1}, v{1.5, 0.7, 1.0};
        P x("x", T::randn({2, 3, 3, 3}, rng));
        auto fn = [&]() {
            Tape<double> t;
            Var r = t.batch_norm_eval(t.param(x), m, v, 1e-5);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("tensor/batch_norm_eval", fn, {&x}, opt));
    }
    {
        P x("x", T::randn({2, 3, 4, 4}, rng));
        P g("g", T::randn({2, 3}, rng));
        P b("b", T::randn({2, 3}, rng));
        auto fn = [&]() {
            Tape<double> t;
            Var r = t.channel_affine(t.param(x), t.param(g), t.param(b));
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("tensor/channel_affine", fn, {&x, &g, &b}, opt));
    }
    {
        P x("x", T::randn({2, 3, 4, 4}, rng));
        P g("g", T::randn({3}, rng));
        P b("b", T::randn({3}, rng));
        auto fn = [&]() {
            Tape<double> t;
            Var r = t.channel_scale_bias(t.param(x), t.param(g), t.param(b));
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("tensor/channel_scale_bias", fn, {&x, &g, &b}, opt));
    }
    {
        P tb("table", T::randn({5, 3}, rng));
        std::vector<int> ids{0, 2, 2, 4};
        auto fn = [&]() {
            Tape<double> t;
            Var r = t.embedding(t.param(tb), ids);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("tensor/embedding", fn, {&tb}, opt));
    }
    {
        P a("a", T::randn({2, 3}, rng));
        P s("s", T({1}, {1.7}));
        auto fn = [&]() {
            Tape<double> t;
            Var r = t.div_by_scalar(t.param(a), t.param(s));
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("tensor/div_by_scalar", fn, {&a, &s}, opt));
    }

    auto conv_case = [&](const std::string& name, Shape xs, Shape ks, Pad pad) {
        P x("x", T::randn(xs, rng));
        P k("k", T::randn(ks, rng, 0.5));
        P b("b", T::randn({ks[0]}, rng, 0.2));
        auto fn = [&, pad]() {
            Tape<double> t;
            Var r = t.conv2d(t.param(x), t.param(k), t.param(b), pad);
            CounterRng prng(11);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one(name, fn, {&x, &k, &b}, opt));
    };
    conv_case("tensor/conv2d_1x1_same", {2, 3, 4, 4}, {2, 3, 1, 1}, Pad::same);
    conv_case("tensor/conv2d_3x3_same", {1, 3, 5, 5}, {2, 3, 3, 3}, Pad::same);
    conv_case("tensor/conv2d_3x3_valid", {1, 2, 5, 5}, {2, 2, 3, 3}, Pad::valid);

    return out;
}

std::vector<GradCheckResult> grad_check_nn(const FdOptions& opt) {
    std::vector<GradCheckResult> out;
    CounterRng rng(202);

    {
        Dense<double> layer("dense", 4, 3, InitKind::glorot_uniform, rng);
        P x("x", T::randn({2, 4}, rng));
        std::vector<P*> ps{&x};
        layer.params(ps);
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/dense", fn, ps, opt));
    }
    {
        Dense<double> layer("dense_sn", 4, 3, InitKind::glorot_uniform, rng, true);
        P x("x", T::randn({2, 4}, rng));
        std::vector<P*> ps{&x};
        layer.params(ps);
        warmup_sn([&](Tape<double>& t, const Ctx& c) { layer.forward(t, t.param(x), c); });
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/dense_spectral_norm", fn, ps, opt));
    }
    {
        BatchNorm<double> layer("bn", 3, true);
        P x("x", T::randn({2, 3, 3, 3}, rng));
        std::vector<P*> ps{&x};
        layer.params(ps);
        CounterRng r2(5);
        for (double& v : layer.gamma().value.raw()) v = 1.0 + 0.3 * r2.normal();
        for (double& v : layer.beta().value.raw()) v = 0.3 * r2.normal();
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/batch_norm_train", fn, ps, opt));
    }
    {
        BatchNorm<double> layer("bn", 3, true);
        for (double& v : layer.running_mean().raw()) v = rng.normal() * 0.2;
        for (double& v : layer.running_var().raw()) v = 1.0 + 0.4 * rng.uniform01();
        P x("x", T::randn({2, 3, 3, 3}, rng));
        std::vector<P*> ps{&x};
        layer.params(ps);
        Ctx ev{false, false};
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), ev);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/batch_norm_eval", fn, ps, opt));
    }
    {
        CondBatchNorm<double> layer("cbn", 3, 4, rng);
        P x("x", T::randn({2, 3, 3, 3}, rng));
        P cond("cond", T::randn({2, 4}, rng));
        std::vector<P*> ps{&x, &cond};
        layer.params(ps);
        randomize_params({ps.begin() + 2, ps.end()}, rng);  // wake the zero-init source
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), t.param(cond), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/conditional_batch_norm", fn, ps, opt));
    }
    {
        Conv2d<double> layer("conv_sn", 3, 2, 3, InitKind::glorot_uniform, rng, true);
        P x("x", T::randn({2, 3, 4, 4}, rng));
        std::vector<P*> ps{&x};
        layer.params(ps);
        warmup_sn([&](Tape<double>& t, const Ctx& c) { layer.forward(t, t.param(x), c); });
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, t.param(x), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/conv_spectral_norm", fn, ps, opt));
    }
    {
        Embedding<double> layer("emb", 5, 3, InitKind::glorot_uniform, rng);
        std::vector<int> ids{1, 3, 3, 0};
        std::vector<P*> ps;
        layer.params(ps);
        auto fn = [&]() {
            Tape<double> t;
            Var r = layer.forward(t, ids, kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(check_one("nn/embed_label", fn, ps, opt));
    }

    return out;
}

std::vector<GradCheckResult> grad_check_blocks(const FdOptions& opt) {
    std::vector<GradCheckResult> out;

    for (ShortcutKind kind : all_shortcut_kinds()) {
        CounterRng rng(303);
        BlockConfig cfg = BlockConfig::generator(3, 3, true, kind, 4);
        GeneratorBlock<double> blk("blk", cfg, InitKind::glorot_uniform, rng);
        P x("x", T::randn({2, 3, 3, 3}, rng));
        P cond("cond", T::randn({2, 4}, rng));
        std::vector<P*> ps{&x, &cond};
        blk.params(ps);
        randomize_params({ps.begin() + 2, ps.end()}, rng);
        auto fn = [&]() {
            Tape<double> t;
            Var r = blk.forward(t, t.param(x), t.param(cond), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(
            check_one(std::string("blocks/gen_up_") + to_string(kind), fn, ps, opt));
    }

    // Channel-changing blocks exercise the alignment projections.
    for (ShortcutKind kind : {ShortcutKind::identity, ShortcutKind::gated, ShortcutKind::egs}) {
        CounterRng rng(404);
        BlockConfig cfg = BlockConfig::generator(4, 3, false, kind, 4);
        GeneratorBlock<double> blk("blk", cfg, InitKind::glorot_uniform, rng);
        P x("x", T::randn({2, 4, 4, 4}, rng));
        P cond("cond", T::randn({2, 4}, rng));
        std::vector<P*> ps{&x, &cond};
        blk.params(ps);
        randomize_params({ps.begin() + 2, ps.end()}, rng);
        auto fn = [&]() {
            Tape<double> t;
            Var r = blk.forward(t, t.param(x), t.param(cond), kFdCtx);
            CounterRng prng(9);
            Var loss = project(t, r, prng);
            t.backward(loss);
            return t.val(loss)[0];
        };
        out.push_back(
            check_one(std::string("blocks/gen_proj_") + to_string(kind), fn, ps, opt));
    }

    for (bool down : {true, false}) {
        for (bool sn : {false, true}) {
            CounterRng rng(505);
            DiscriminatorBlock<double> blk("dblk", 3, 5, down, InitKind::glorot_uniform, rng, sn);
            P x("x", T::randn({2, 3, 4, 4}, rng));
            std::vector<P*> ps{&x};
            blk.params(ps);
            if (sn) warmup_sn([&](Tape<double>& t, const Ctx& c) { blk.forward(t, t.param(x), c); });
            auto fn = [&]() {
                Tape<double> t;
                Var r = blk.forward(t, t.param(x), kFdCtx);
                CounterRng prng(9);
                Var loss = project(t, r, prng);
                t.backward(loss);
                return t.val(loss)[0];
            };
            out.push_back(check_one(std::string("blocks/disc_") + (down ? "down" : "plain") +
                                        (sn ? "_sn" : ""),
                                    fn, ps, opt));
        }
    }

    return out;
}

std::vector<GradCheckResult> grad_check_model(const FdOptions& opt) {
    std::vector<GradCheckResult> out;
    FdOptions mo = opt;
    if (mo.max_coords_per_param == 0) mo.max_coords_per_param = 3;

    auto pick_params = [](std::vector<P*> all, std::size_t n, std::uint64_t seed) {
        CounterRng r(seed);
        std::vector<P*> picked;
        for (std::size_t i = 0; i < n && !all.empty(); ++i) {
            const std::size_t j = static_cast<std::size_t>(r.below(all.size()));
            picked.push_back(all[j]);
            all.erase(all.begin() + static_cast<long>(j));
        }
        return picked;
    };

    for (ShortcutKind kind : {ShortcutKind::gated, ShortcutKind::identity}) {
        CounterRng rng(606);
        GeneratorSpec gs;
        gs.resolution = 8;
        gs.z_dim = 6;
        gs.base_channels = 6;
        gs.shortcut = kind;
        DiscriminatorSpec ds;
        ds.resolution = 8;
        ds.base_channels = 6;
        ds.sn = true;
        Generator<double> g(gs, rng);
        Discriminator<double> d(ds, rng);
        CounterRng prng(607);
        randomize_params(g.params(), prng);
        T z = T::randn({2, 6}, rng);
        T warm_img = T::randn({2, 3, 8, 8}, rng);
        warmup_sn([&](Tape<double>& t, const Ctx& c) { d.forward(t, t.constant(warm_img), {}, c); });
        auto fn = [&]() {
            Tape<double> t;
            Var img = g.forward(t, t.constant(z), {}, kFdCtx);
            Var logit = d.forward(t, img, {}, kFdCtx);
            Var loss = hinge_loss_g(t, logit);
            t.backward(loss);
            return t.val(loss)[0];
        };
        // Full pipeline, FD on a random sample of generator parameters.
        auto ps = pick_params(g.params(), 10, 42);
        out.push_back(check_one(std::string("model/generator_hinge_") + to_string(kind), fn,
                                ps, mo));
    }

    {
        CounterRng rng(707);
        DiscriminatorSpec ds;
        ds.resolution = 8;
        ds.base_channels = 6;
        ds.sn = true;
        Discriminator<double> d(ds, rng);
        T real = T::randn({2, 3, 8, 8}, rng);
        T fake = T::randn({2, 3, 8, 8}, rng);
        warmup_sn([&](Tape<double>& t, const Ctx& c) { d.forward(t, t.constant(real), {}, c); });
        auto fn = [&]() {
            Tape<double> t;
            Var lr = d.forward(t, t.constant(real), {}, kFdCtx);
            Var lf = d.forward(t, t.constant(fake), {}, kFdCtx);
            Var loss = hinge_loss_d(t, lr, lf);
            t.backward(loss);
            return t.val(loss)[0];
        };
        auto ps = pick_params(d.params(), 10, 43);
        out.push_back(check_one("model/discriminator_hinge", fn, ps, mo));
    }

    {
        // Conditional pair with projection: gradients reach both embeddings.
        CounterRng rng(808);
        GeneratorSpec gs;
        gs.resolution = 8;
        gs.z_dim = 6;
        gs.base_channels = 6;
        gs.conditional = true;
        gs.num_classes = 3;
        gs.embed_dim = 4;
        DiscriminatorSpec ds;
        ds.resolution = 8;
        ds.base_channels = 6;
        ds.sn = true;
        ds.projection = true;
        ds.num_classes = 3;
        Generator<double> g(gs, rng);
        Discriminator<double> d(ds, rng);
        CounterRng prng(809);
        randomize_params(g.params(), prng);
        T z = T::randn({2, 6}, rng);
        std::vector<int> y{0, 2};
        T warm_img = T::randn({2, 3, 8, 8}, rng);
        warmup_sn([&](Tape<double>& t, const Ctx& c) { d.forward(t, t.constant(warm_img), y, c); });
        auto fn = [&]() {
            Tape<double> t;
            Var img = g.forward(t, t.constant(z), y, kFdCtx);
            Var logit = d.forward(t, img, y, kFdCtx);
            Var loss = hinge_loss_g(t, logit);
            t.backward(loss);
            return t.val(loss)[0];
        };
        std::vector<P*> ps = pick_params(g.params(), 8, 44);
        ps.push_back(&g.embed().table());
        out.push_back(check_one("model/conditional_projection", fn, ps, mo));
    }

    return out;
}

std::vector<GradCheckResult> grad_check_module(const std::string& which, const FdOptions& opt) {
    if (which == "all") return grad_check_all(opt);
    if (which == "tensor") return grad_check_tensor(opt);
    if (which == "nn") return grad_check_nn(opt);
    if (which == "blocks") return grad_check_blocks(opt);
    if (which == "model") return grad_check_model(opt);
    throw ValueError("grad-check: unknown module '" + which + "' (all|tensor|nn|blocks|model)");
}

}  // namespace gsgan
