#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsgan/blocks.hpp"
#include "gsgan/gradcheck.hpp"
#include "oracles.hpp"

using namespace gsgan;
using T = Tensor<double>;
using Tf = Tensor<float>;

namespace {
const Ctx kTrain{true, true};

// 1x1 conv helper for pinned-weight expectations.
template <typename S>
Tensor<S> conv1x1_ref(const Tensor<S>& x, const Tensor<S>& k, const Tensor<S>& b) {
    return oracles::naive_conv2d(x, k, b, true);
}
}  // namespace

TEST_CASE("main_path shape: [1,256,4,4] up-block gives [1,256,8,8]") {
    CounterRng rng(1);
    BlockConfig cfg = BlockConfig::generator(256, 256, true, ShortcutKind::gated, 16);
    GeneratorBlock<float> blk("b", cfg, InitKind::glorot_uniform, rng);
    Tape<float> t;
    Var fc = blk.main_path(t, t.constant(Tf::randn({1, 256, 4, 4}, rng)),
                           t.constant(Tf::randn({1, 16}, rng)), kTrain);
    CHECK(t.val(fc).shape() == Shape{1, 256, 8, 8});
}

TEST_CASE("zeroed final conv makes the main path zero") {
    CounterRng rng(2);
    BlockConfig cfg = BlockConfig::generator(4, 4, true, ShortcutKind::identity, 3);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    std::vector<Parameter<double>*> ps;
    blk.params(ps);
    for (auto* p : ps)
        if (p->name == "b.conv2.kernel")
            std::fill(p->value.raw().begin(), p->value.raw().end(), 0.0);
    Tape<double> t;
    Var fc = blk.main_path(t, t.constant(T::randn({2, 4, 3, 3}, rng)),
                           t.constant(T::randn({2, 3}, rng)), kTrain);
    for (double v : t.val(fc).raw()) CHECK(v == 0.0);
}

TEST_CASE("main_path gradient reaches the conditioning vector") {
    CounterRng rng(3);
    BlockConfig cfg = BlockConfig::generator(3, 3, true, ShortcutKind::identity, 4);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    std::vector<Parameter<double>*> ps;
    blk.params(ps);
    CounterRng r2(33);
    for (auto* p : ps)
        for (double& v : p->value.raw()) v = r2.normal() * 0.3;
    Parameter<double> cond("cond", T::randn({2, 4}, rng));
    T x = T::randn({2, 3, 3, 3}, rng);
    auto fn = [&]() {
        Tape<double> t;
        Var fc = blk.main_path(t, t.constant(x), t.param(cond), Ctx{true, false});
        CounterRng prng(5);
        Var loss = t.sum_all(t.mul(fc, t.constant(T::randn(t.val(fc).shape(), prng))));
        t.backward(loss);
        return t.val(loss)[0];
    };
    CHECK(fd_max_rel_error(fn, {&cond}) < 1e-4);
}

TEST_CASE("gated shortcut pinned 1x1x1 hand case gives 4.0") {
    CounterRng rng(4);
    BlockConfig cfg = BlockConfig::generator(1, 1, false, ShortcutKind::gated, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    // W_g = 0 (gate 0.5); W_r sums concat(f_c, f_i) so f_r = f_i + f_c;
    // W_o = identity. f_i = 2, f_c = 3 -> f_o = 0.5*3 + 0.5*5 = 4.
    blk.refine_conv().kernel().value = T({1, 2, 1, 1}, {1, 1});
    blk.out_conv().kernel().value = T({1, 1, 1, 1}, {1});
    Tape<double> t;
    Var out = blk.apply_shortcut(t, t.constant(T({1, 1, 1, 1}, {2})),
                                 t.constant(T({1, 1, 1, 1}, {3})), kTrain);
    CHECK(t.val(out)[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("gate saturation drives f_o to W_o*f_c / W_o*f_r") {
    CounterRng rng(5);
    BlockConfig cfg = BlockConfig::generator(3, 3, false, ShortcutKind::gated, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    CounterRng r2(55);
    for (Conv2d<double>* c : {&blk.refine_conv(), &blk.out_conv()})
        for (double& v : c->kernel().value.raw()) v = r2.normal() * 0.5;
    T fi = T::randn({2, 3, 4, 4}, rng);
    T fc = T::randn({2, 3, 4, 4}, rng);

    auto run_with_bias = [&](double bias) {
        std::fill(blk.gate_conv().bias().value.raw().begin(),
                  blk.gate_conv().bias().value.raw().end(), bias);
        Tape<double> t;
        Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
        return t.val(out);
    };

    // bias +20: gate ~ 1, output ~ W_o * f_c
    {
        T got = run_with_bias(20.0);
        T want = conv1x1_ref(fc, blk.out_conv().kernel().value, blk.out_conv().bias().value);
        for (std::size_t i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
    }
    // bias -20: gate ~ 0, output ~ W_o * f_r
    {
        T got = run_with_bias(-20.0);
        T cat({2, 6, 4, 4});
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t c = 0; c < 6; ++c)
                for (std::size_t i = 0; i < 16; ++i)
                    cat.at(b, c, i / 4, i % 4) = c < 3 ? fc.at(b, c, i / 4, i % 4)
                                                       : fi.at(b, c - 3, i / 4, i % 4);
        T fr = conv1x1_ref(cat, blk.refine_conv().kernel().value, blk.refine_conv().bias().value);
        T want = conv1x1_ref(fr, blk.out_conv().kernel().value, blk.out_conv().bias().value);
        for (std::size_t i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
    }
}

TEST_CASE("gate values stay strictly inside (0,1) and are traced") {
    CounterRng rng(6);
    BlockConfig cfg = BlockConfig::generator(3, 3, true, ShortcutKind::gated, 4);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    std::vector<Parameter<double>*> ps;
    blk.params(ps);
    CounterRng r2(66);
    for (auto* p : ps)
        for (double& v : p->value.raw()) v = r2.normal() * 0.5;
    blk.enable_trace(true);
    Tape<double> t;
    blk.forward(t, t.constant(T::randn({2, 3, 4, 4}, rng)), t.constant(T::randn({2, 4}, rng)),
                kTrain);
    REQUIRE(blk.trace().has_value());
    const auto& tr = *blk.trace();
    CHECK(tr.f_g.numel() > 0);
    for (double g : tr.f_g.raw()) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
    }
    CHECK(tr.f_i.shape() == tr.f_c.shape());
    CHECK(tr.f_o.shape() == tr.f_c.shape());
}

TEST_CASE("EGS with zeroed gate equals the scaled-identity shortcut") {
    CounterRng rng(7);
    BlockConfig cfg = BlockConfig::generator(3, 3, false, ShortcutKind::egs, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    T fi = T::randn({2, 3, 5, 5}, rng);
    T fc = T::randn({2, 3, 5, 5}, rng);
    Tape<double> t;
    Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
    for (std::size_t i = 0; i < fi.numel(); ++i)
        CHECK(std::abs(t.val(out)[i] - 0.5 * (fi[i] + fc[i])) < 1e-7);
}

TEST_CASE("EGS saturation limits") {
    CounterRng rng(8);
    BlockConfig cfg = BlockConfig::generator(2, 2, false, ShortcutKind::egs, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    T fi = T::randn({1, 2, 3, 3}, rng);
    T fc = T::randn({1, 2, 3, 3}, rng);
    // gate -> 1: f_EGS = f_i exactly (double rounding at sigmoid(40))
    std::fill(blk.gate_conv().bias().value.raw().begin(),
              blk.gate_conv().bias().value.raw().end(), 40.0);
    Tape<double> t;
    Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
    for (std::size_t i = 0; i < fi.numel(); ++i)
        CHECK(t.val(out)[i] == doctest::Approx(fi[i]).epsilon(1e-12));
}

TEST_CASE("EGS pinned numeric case") {
    CounterRng rng(9);
    BlockConfig cfg = BlockConfig::generator(1, 1, false, ShortcutKind::egs, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    // gate = sigmoid(1*f_c + 1*f_i): f_i=2, f_c=3 -> g = sigmoid(5)
    blk.gate_conv().kernel().value = T({1, 2, 1, 1}, {1, 1});
    Tape<double> t;
    Var out = blk.apply_shortcut(t, t.constant(T({1, 1, 1, 1}, {2})),
                                 t.constant(T({1, 1, 1, 1}, {3})), kTrain);
    const double g = 1.0 / (1.0 + std::exp(-5.0));
    CHECK(t.val(out)[0] == doctest::Approx(g * 2 + (1 - g) * 3).epsilon(1e-12));
}

TEST_CASE("SOG limits and pinned case") {
    CounterRng rng(10);
    BlockConfig cfg = BlockConfig::generator(2, 2, false, ShortcutKind::sog, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    T fi = T::randn({1, 2, 3, 3}, rng);
    T fc = T::randn({1, 2, 3, 3}, rng);
    // gate -> 1: identity-shortcut block output f_i + f_c
    std::fill(blk.gate_conv().bias().value.raw().begin(),
              blk.gate_conv().bias().value.raw().end(), 40.0);
    {
        Tape<double> t;
        Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
        for (std::size_t i = 0; i < fi.numel(); ++i)
            CHECK(t.val(out)[i] == doctest::Approx(fi[i] + fc[i]).epsilon(1e-12));
    }
    // gate -> 0: out = f_c
    std::fill(blk.gate_conv().bias().value.raw().begin(),
              blk.gate_conv().bias().value.raw().end(), -40.0);
    {
        Tape<double> t;
        Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
        for (std::size_t i = 0; i < fi.numel(); ++i)
            CHECK(t.val(out)[i] == doctest::Approx(fc[i]).epsilon(1e-12));
    }
    // zeroed gate: out = 0.5 f_i + f_c
    std::fill(blk.gate_conv().bias().value.raw().begin(),
              blk.gate_conv().bias().value.raw().end(), 0.0);
    {
        Tape<double> t;
        Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
        for (std::size_t i = 0; i < fi.numel(); ++i)
            CHECK(t.val(out)[i] == doctest::Approx(0.5 * fi[i] + fc[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv variants append a 1x1 output conv") {
    CounterRng rng(11);
    for (ShortcutKind kind : {ShortcutKind::egs_conv, ShortcutKind::sog_conv}) {
        BlockConfig cfg = BlockConfig::generator(2, 2, false, kind, 2);
        GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
        // identity W_o: equals the plain EGS/SOG result
        blk.out_conv().kernel().value = T({2, 2, 1, 1}, {1, 0, 0, 1});
        std::fill(blk.out_conv().bias().value.raw().begin(),
                  blk.out_conv().bias().value.raw().end(), 0.0);
        T fi = T::randn({1, 2, 3, 3}, rng);
        T fc = T::randn({1, 2, 3, 3}, rng);
        Tape<double> t;
        Var out = blk.apply_shortcut(t, t.constant(fi), t.constant(fc), kTrain);
        for (std::size_t i = 0; i < fi.numel(); ++i) {
            const double plain = kind == ShortcutKind::egs_conv ? 0.5 * (fi[i] + fc[i])
                                                                : 0.5 * fi[i] + fc[i];
            CHECK(t.val(out)[i] == doctest::Approx(plain).epsilon(1e-12));
        }
    }
}

TEST_CASE("identity block: zeroed main path returns the input (square case)") {
    CounterRng rng(12);
    BlockConfig cfg = BlockConfig::generator(3, 3, false, ShortcutKind::identity, 2);
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    std::vector<Parameter<double>*> ps;
    blk.params(ps);
    for (auto* p : ps)
        if (p->name == "b.conv2.kernel" || p->name == "b.conv2.bias")
            std::fill(p->value.raw().begin(), p->value.raw().end(), 0.0);
    T fi = T::randn({2, 3, 4, 4}, rng);
    Tape<double> t;
    Var out = blk.forward(t, t.constant(fi), t.constant(T::randn({2, 2}, rng)), kTrain);
    for (std::size_t i = 0; i < fi.numel(); ++i) CHECK(t.val(out)[i] == fi[i]);
}

TEST_CASE("identity up-block 512->256 gives [1,256,16,16]") {
    CounterRng rng(13);
    BlockConfig cfg = BlockConfig::generator(512, 256, true, ShortcutKind::identity, 8);
    GeneratorBlock<float> blk("b", cfg, InitKind::glorot_uniform, rng);
    Tape<float> t;
    Var out = blk.forward(t, t.constant(Tf::randn({1, 512, 8, 8}, rng)),
                          t.constant(Tf::randn({1, 8}, rng)), kTrain);
    CHECK(t.val(out).shape() == Shape{1, 256, 16, 16});
}

TEST_CASE("disc_block: first CIFAR block maps [1,3,32,32] to [1,128,16,16]") {
    CounterRng rng(14);
    DiscriminatorBlock<float> blk("d", 3, 128, true, InitKind::glorot_uniform, rng, true);
    Tape<float> t;
    Var out = blk.forward(t, t.constant(Tf::randn({1, 3, 32, 32}, rng)), kTrain);
    CHECK(t.val(out).shape() == Shape{1, 128, 16, 16});
}

TEST_CASE("disc_block without down preserves spatial size") {
    CounterRng rng(15);
    DiscriminatorBlock<double> blk("d", 5, 5, false, InitKind::glorot_uniform, rng, false);
    Tape<double> t;
    Var out = blk.forward(t, t.constant(T::randn({2, 5, 6, 6}, rng)), kTrain);
    CHECK(t.val(out).shape() == Shape{2, 5, 6, 6});
}

TEST_CASE("disc_block rejects odd spatial extent when downsampling") {
    CounterRng rng(16);
    DiscriminatorBlock<double> blk("d", 2, 2, true, InitKind::glorot_uniform, rng, false);
    Tape<double> t;
    CHECK_THROWS_AS(blk.forward(t, t.constant(T::zeros({1, 2, 5, 5})), kTrain), ShapeError);
}

TEST_CASE("SN-enabled disc_block convs are normalized within 1% after warmup") {
    CounterRng rng(17);
    DiscriminatorBlock<double> blk("d", 3, 6, true, InitKind::glorot_uniform, rng, true);
    T x = T::randn({2, 3, 8, 8}, rng);
    for (int i = 0; i < 100; ++i) {
        Tape<double> t;
        blk.forward(t, t.constant(x), kTrain);
    }
    for (Conv2d<double>* c : blk.convs()) {
        const auto& ks = c->kernel().value.shape();
        const std::size_t rows = ks[0], cols = ks[1] * ks[2] * ks[3];
        Tape<double> t;
        Var wbar = c->sn().apply(t, c->kernel(), {rows, cols}, Ctx{true, false});
        const double sigma = oracles::largest_singular_value(t.val(wbar).raw(), rows, cols);
        CHECK(sigma > 0.99);
        CHECK(sigma < 1.01);
    }
}

TEST_CASE("gated block config invariant: c_g = c_r = c_o") {
    CounterRng rng(18);
    BlockConfig cfg = BlockConfig::generator(3, 3, false, ShortcutKind::gated, 2);
    cfg.c_r = 5;
    CHECK_THROWS_AS(GeneratorBlock<double>("b", cfg, InitKind::glorot_uniform, rng), ValueError);
    BlockConfig down = BlockConfig::generator(3, 3, false, ShortcutKind::gated, 2);
    down.resample = Resample::down2x;
    CHECK_THROWS_AS(GeneratorBlock<double>("b", down, InitKind::glorot_uniform, rng), ValueError);
}

TEST_CASE("blocks finite-difference suite covers every ShortcutKind") {
    const auto results = grad_check_blocks();
    std::size_t kinds_seen = 0;
    for (ShortcutKind k : all_shortcut_kinds()) {
        const std::string needle = std::string("gen_up_") + to_string(k);
        for (const auto& r : results)
            if (r.name.find(needle) != std::string::npos) {
                ++kinds_seen;
                break;
            }
    }
    CHECK(kinds_seen == 6);
    for (const auto& r : results) {
        INFO(r.name, " max rel err ", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("conditionally-normalized shortcut BN is available behind its flag") {
    CounterRng rng(19);
    BlockConfig cfg = BlockConfig::generator(3, 3, true, ShortcutKind::gated, 4);
    cfg.conditional_shortcut_bn = true;
    GeneratorBlock<double> blk("b", cfg, InitKind::glorot_uniform, rng);
    std::vector<Parameter<double>*> ps;
    blk.params(ps);
    bool has_source = false;
    for (auto* p : ps) has_source = has_source || p->name == "b.shortcut.bn.source.weight";
    CHECK(has_source);

    Parameter<double> x("x", T::randn({2, 3, 3, 3}, rng));
    Parameter<double> cond("cond", T::randn({2, 4}, rng));
    CounterRng r2(20);
    for (auto* p : ps)
        for (double& v : p->value.raw()) v = r2.normal() * 0.3;
    auto fn = [&]() {
        Tape<double> t;
        Var out = blk.forward(t, t.param(x), t.param(cond), Ctx{true, false});
        CounterRng prng(5);
        Var loss = t.sum_all(t.mul(out, t.constant(T::randn(t.val(out).shape(), prng))));
        t.backward(loss);
        return t.val(loss)[0];
    };
    std::vector<Parameter<double>*> all{&x, &cond};
    for (auto* p : ps) all.push_back(p);
    CHECK(fd_max_rel_error(fn, all) < 1e-4);
}
