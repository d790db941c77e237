#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gsgan/nn.hpp"

namespace gsgan {

// Skip-connection variant of a generator residual block.
enum class ShortcutKind { identity, gated, egs, sog, egs_conv, sog_conv };

inline const char* to_string(ShortcutKind k) {
    switch (k) {
        case ShortcutKind::identity: return "identity";
        case ShortcutKind::gated: return "gated";
        case ShortcutKind::egs: return "egs";
        case ShortcutKind::sog: return "sog";
        case ShortcutKind::egs_conv: return "egsconv";
        case ShortcutKind::sog_conv: return "sogconv";
    }
    return "?";
}

inline ShortcutKind shortcut_from_string(const std::string& s) {
    if (s == "identity") return ShortcutKind::identity;
    if (s == "gated") return ShortcutKind::gated;
    if (s == "egs") return ShortcutKind::egs;
    if (s == "sog") return ShortcutKind::sog;
    if (s == "egsconv") return ShortcutKind::egs_conv;
    if (s == "sogconv") return ShortcutKind::sog_conv;
    throw ValueError("unknown shortcut kind '" + s + "'");
}

inline std::vector<ShortcutKind> all_shortcut_kinds() {
    return {ShortcutKind::identity, ShortcutKind::gated,    ShortcutKind::egs,
            ShortcutKind::sog,      ShortcutKind::egs_conv, ShortcutKind::sog_conv};
}

enum class Resample { none, up2x, down2x };

// Declarative description of one residual block.
struct BlockConfig {
    std::size_t c_i = 0;  // input channels
    std::size_t c_c = 0;  // main-path (convolutional feature) channels
    std::size_t c_g = 0;  // gate channels
    std::size_t c_r = 0;  // refinement channels
    std::size_t c_o = 0;  // output channels
    Resample resample = Resample::none;
    ShortcutKind shortcut = ShortcutKind::identity;
    std::size_t cond_dim = 0;      // conditioning vector width for cBN
    bool conditional_shortcut_bn = false;

    static BlockConfig generator(std::size_t c_i, std::size_t c_o, bool up, ShortcutKind kind,
                                 std::size_t cond_dim) {
        BlockConfig c;
        c.c_i = c_i;
        c.c_c = c.c_g = c.c_r = c.c_o = c_o;
        c.resample = up ? Resample::up2x : Resample::none;
        c.shortcut = kind;
        c.cond_dim = cond_dim;
        return c;
    }
};

// Values captured during one gated-shortcut forward pass (debug/inspection).
// f_i is the shortcut-path input as it enters the gate, i.e. after BN and
// resampling.
template <typename S>
struct GatedShortcutTrace {
    Tensor<S> f_i, f_c, f_g, f_r, f_o;
};

// ---------------------------------------------------------------------------
// Generator residual block: BigGAN-style pre-activation main path
//   cBN -> ReLU -> [up2x] -> 3x3 conv -> cBN -> ReLU -> 3x3 conv
// combined with the input through one of the six shortcut variants.
// ---------------------------------------------------------------------------
template <typename S>
class GeneratorBlock {
public:
    GeneratorBlock() = default;

    GeneratorBlock(const std::string& name, const BlockConfig& cfg, InitKind init, CounterRng& rng,
                   bool sn = false)
        : cfg_(cfg) {
        if (cfg.resample == Resample::down2x)
            throw ValueError(name + ": generator blocks cannot downsample");
        if (cfg.shortcut == ShortcutKind::gated &&
            !(cfg.c_g == cfg.c_r && cfg.c_r == cfg.c_o))
            throw ValueError(name + ": gated shortcut requires c_g = c_r = c_o");
        cbn1_ = CondBatchNorm<S>(name + ".cbn1", cfg.c_i, cfg.cond_dim, rng);
        conv1_ = Conv2d<S>(name + ".conv1", cfg.c_i, cfg.c_c, 3, init, rng, sn);
        cbn2_ = CondBatchNorm<S>(name + ".cbn2", cfg.c_c, cfg.cond_dim, rng);
        conv2_ = Conv2d<S>(name + ".conv2", cfg.c_c, cfg.c_c, 3, init, rng, sn);

        switch (cfg.shortcut) {
            case ShortcutKind::identity:
                if (cfg.c_i != cfg.c_o) {
                    sc_proj_ = Conv2d<S>(name + ".shortcut.proj", cfg.c_i, cfg.c_o, 1, init, rng, sn);
                    has_proj_ = true;
                }
                break;
            case ShortcutKind::gated:
                make_shortcut_bn(name, rng);
                // W_g starts at zero (gate 0.5) and W_r at zero, so the block
                // begins as 0.5 * W_o * f_c. W_o must not start at zero: a
                // zero W_o kills both the output and every gradient through
                // the block, and a stack of such blocks is an exact saddle
                // point training cannot leave.
                wg_ = Conv2d<S>(name + ".shortcut.wg", cfg.c_c + cfg.c_i, cfg.c_g,
                                1, InitKind::zeros, rng, false);
                wr_ = Conv2d<S>(name + ".shortcut.wr", cfg.c_c + cfg.c_i, cfg.c_r,
                                1, InitKind::zeros, rng, false);
                wo_ = Conv2d<S>(name + ".shortcut.wo", cfg.c_g, cfg.c_o, 1, init, rng, sn);
                has_wr_ = has_wo_ = true;
                break;
            case ShortcutKind::egs:
            case ShortcutKind::sog:
            case ShortcutKind::egs_conv:
            case ShortcutKind::sog_conv: {
                make_shortcut_bn(name, rng);
                // The gated sum needs f_i and f_c on the same channel count;
                // a 1x1 projection aligns them when they differ.
                if (cfg.c_i != cfg.c_c) {
                    sc_proj_ = Conv2d<S>(name + ".shortcut.proj", cfg.c_i, cfg.c_c, 1, init, rng, sn);
                    has_proj_ = true;
                }
                wg_ = Conv2d<S>(name + ".shortcut.wg", 2 * cfg.c_c, cfg.c_c, 1, InitKind::zeros,
                                rng, false);
                if (cfg.shortcut == ShortcutKind::egs_conv ||
                    cfg.shortcut == ShortcutKind::sog_conv) {
                    wo_ = Conv2d<S>(name + ".shortcut.wo", cfg.c_c, cfg.c_o, 1, init, rng, sn);
                    has_wo_ = true;
                }
                break;
            }
        }
    }

    // Main path only: returns f_c at the post-resample spatial size.
    Var main_path(Tape<S>& t, Var f_i, Var cond, const Ctx& ctx) {
        Var h = cbn1_.forward(t, f_i, cond, ctx);
        h = t.relu(h);
        if (cfg_.resample == Resample::up2x) h = t.upsample_nearest2x(h);
        h = conv1_.forward(t, h, ctx);
        h = cbn2_.forward(t, h, cond, ctx);
        h = t.relu(h);
        return conv2_.forward(t, h, ctx);
    }

    Var forward(Tape<S>& t, Var f_i, Var cond, const Ctx& ctx) {
        Var f_c = main_path(t, f_i, cond, ctx);
        if (cfg_.shortcut == ShortcutKind::identity) {
            Var s = f_i;
            if (cfg_.resample == Resample::up2x) s = t.upsample_nearest2x(s);
            if (has_proj_) s = sc_proj_.forward(t, s, ctx);
            return t.add(s, f_c);
        }
        // Gating variants: BN on f_i, match spatial size, then gate.
        Var fi = cfg_.conditional_shortcut_bn ? sc_cbn_.forward(t, f_i, cond, ctx)
                                              : sc_bn_.standardize(t, f_i, ctx);
        if (cfg_.resample == Resample::up2x) fi = t.upsample_nearest2x(fi);
        if (has_proj_) fi = sc_proj_.forward(t, fi, ctx);
        return apply_shortcut(t, fi, f_c, ctx);
    }

    // The shortcut combination itself, on an already aligned f_i. Exposed so
    // the gating arithmetic can be exercised on bare tensors.
    Var apply_shortcut(Tape<S>& t, Var f_i, Var f_c, const Ctx& ctx) {
        Var cat = t.concat_channels(f_c, f_i);
        Var f_g = t.sigmoid(wg_.forward(t, cat, ctx));
        Var one_minus_g = t.affine(f_g, S(-1), S(1));
        Var out;
        Var f_r;
        switch (cfg_.shortcut) {
            case ShortcutKind::gated: {
                f_r = wr_.forward(t, cat, ctx);
                Var blend = t.add(t.mul(f_g, f_c), t.mul(one_minus_g, f_r));
                out = wo_.forward(t, blend, ctx);
                break;
            }
            case ShortcutKind::egs:
            case ShortcutKind::egs_conv:
                out = t.add(t.mul(f_g, f_i), t.mul(one_minus_g, f_c));
                if (has_wo_) out = wo_.forward(t, out, ctx);
                break;
            case ShortcutKind::sog:
            case ShortcutKind::sog_conv:
                out = t.add(t.mul(f_g, f_i), f_c);
                if (has_wo_) out = wo_.forward(t, out, ctx);
                break;
            default:
                throw ValueError("apply_shortcut: identity block has no gate");
        }
        if (trace_enabled_) {
            trace_ = GatedShortcutTrace<S>{t.val(f_i), t.val(f_c), t.val(f_g),
                                           f_r.valid() ? t.val(f_r) : Tensor<S>(), t.val(out)};
        }
        return out;
    }

    void params(std::vector<Parameter<S>*>& out) {
        cbn1_.params(out);
        conv1_.params(out);
        cbn2_.params(out);
        conv2_.params(out);
        if (has_proj_) sc_proj_.params(out);
        if (has_gate()) wg_.params(out);
        if (has_wr_) wr_.params(out);
        if (has_wo_) wo_.params(out);
        if (cfg_.conditional_shortcut_bn && uses_shortcut_bn()) sc_cbn_.params(out);
    }

    void states(std::vector<NamedState<S>>& out) {
        cbn1_.states(out);
        conv1_.states(out);
        cbn2_.states(out);
        conv2_.states(out);
        if (has_proj_) sc_proj_.states(out);
        if (uses_shortcut_bn()) {
            if (cfg_.conditional_shortcut_bn)
                sc_cbn_.states(out);
            else
                sc_bn_.states(out);
        }
        if (has_gate()) wg_.states(out);
        if (has_wr_) wr_.states(out);
        if (has_wo_) wo_.states(out);
    }

    const BlockConfig& config() const { return cfg_; }
    bool has_gate() const { return cfg_.shortcut != ShortcutKind::identity; }
    bool uses_shortcut_bn() const { return has_gate(); }

    void enable_trace(bool on) { trace_enabled_ = on; }
    const std::optional<GatedShortcutTrace<S>>& trace() const { return trace_; }

    Conv2d<S>& gate_conv() { return wg_; }
    Conv2d<S>& refine_conv() { return wr_; }
    Conv2d<S>& out_conv() { return wo_; }
    CondBatchNorm<S>& cbn1() { return cbn1_; }

private:
    void make_shortcut_bn(const std::string& name, CounterRng& rng) {
        if (cfg_.conditional_shortcut_bn)
            sc_cbn_ = CondBatchNorm<S>(name + ".shortcut.bn", cfg_.c_i, cfg_.cond_dim, rng);
        else
            sc_bn_ = BatchNorm<S>(name + ".shortcut.bn", cfg_.c_i, false);
    }

    BlockConfig cfg_;
    CondBatchNorm<S> cbn1_, cbn2_;
    Conv2d<S> conv1_, conv2_;
    BatchNorm<S> sc_bn_;       // non-affine: balances the two feature scales
    CondBatchNorm<S> sc_cbn_;  // optional conditional variant
    Conv2d<S> sc_proj_, wg_, wr_, wo_;
    bool has_proj_ = false, has_wr_ = false, has_wo_ = false;
    bool trace_enabled_ = false;
    std::optional<GatedShortcutTrace<S>> trace_;
};

// ---------------------------------------------------------------------------
// Discriminator residual block:
//   ReLU -> 3x3 conv -> ReLU -> 3x3 conv -> [avgpool2x]
// with an identity shortcut (1x1 conv when channels change or the block
// downsamples, then the same pooling).
// ---------------------------------------------------------------------------
template <typename S>
class DiscriminatorBlock {
public:
    DiscriminatorBlock() = default;

    DiscriminatorBlock(const std::string& name, std::size_t c_i, std::size_t c_o, bool down,
                       InitKind init, CounterRng& rng, bool sn)
        : c_i_(c_i), c_o_(c_o), down_(down) {
        conv1_ = Conv2d<S>(name + ".conv1", c_i, c_o, 3, init, rng, sn);
        conv2_ = Conv2d<S>(name + ".conv2", c_o, c_o, 3, init, rng, sn);
        learnable_sc_ = (c_i != c_o) || down;
        if (learnable_sc_) sc_conv_ = Conv2d<S>(name + ".shortcut.proj", c_i, c_o, 1, init, rng, sn);
    }

    Var forward(Tape<S>& t, Var x, const Ctx& ctx) {
        Var h = t.relu(x);
        h = conv1_.forward(t, h, ctx);
        h = t.relu(h);
        h = conv2_.forward(t, h, ctx);
        if (down_) h = t.avgpool2x(h);
        Var s = x;
        if (learnable_sc_) s = sc_conv_.forward(t, s, ctx);
        if (down_) s = t.avgpool2x(s);
        return t.add(h, s);
    }

    void params(std::vector<Parameter<S>*>& out) {
        conv1_.params(out);
        conv2_.params(out);
        if (learnable_sc_) sc_conv_.params(out);
    }
    void states(std::vector<NamedState<S>>& out) {
        conv1_.states(out);
        conv2_.states(out);
        if (learnable_sc_) sc_conv_.states(out);
    }

    std::vector<Conv2d<S>*> convs() {
        std::vector<Conv2d<S>*> v{&conv1_, &conv2_};
        if (learnable_sc_) v.push_back(&sc_conv_);
        return v;
    }

    bool downsamples() const { return down_; }

private:
    std::size_t c_i_ = 0, c_o_ = 0;
    bool down_ = false, learnable_sc_ = false;
    Conv2d<S> conv1_, conv2_, sc_conv_;
};

}  // namespace gsgan
