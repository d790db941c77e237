#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gsgan/blocks.hpp"

namespace gsgan {

// Generator description. Defaults reproduce the 32x32 table; resolution 128
// reproduces the [512,512,256,128,64] chain when base_channels stays 256.
// Resolutions 8 and 16 are reduced desk-scale variants with the same topology
// rules (one up-block per spatial doubling from 4x4).
struct GeneratorSpec {
    std::size_t resolution = 32;
    std::size_t z_dim = 128;
    std::size_t base_channels = 256;
    ShortcutKind shortcut = ShortcutKind::gated;
    bool conditional = false;
    std::size_t num_classes = 1;
    std::size_t embed_dim = 128;
    bool sn = false;
    InitKind init = InitKind::glorot_uniform;
    bool conditional_shortcut_bn = false;

    // (c_in, c_out) per up-block, first entry fed by the 4x4 stem.
    std::vector<std::pair<std::size_t, std::size_t>> block_widths() const {
        const std::size_t c = base_channels;
        switch (resolution) {
            case 8: return {{c, c}};
            case 16: return {{c, c}, {c, c}};
            case 32: return {{c, c}, {c, c}, {c, c}};
            case 128:
                return {{2 * c, 2 * c}, {2 * c, 2 * c}, {2 * c, c}, {c, c / 2}, {c / 2, c / 4}};
            default:
                throw ValueError("generator: unsupported resolution " +
                                 std::to_string(resolution));
        }
    }
};

struct DiscriminatorSpec {
    std::size_t resolution = 32;
    std::size_t base_channels = 128;
    bool sn = true;
    bool projection = false;
    std::size_t num_classes = 1;
    InitKind init = InitKind::glorot_uniform;

    // (c_in, c_out, down) per block.
    std::vector<std::tuple<std::size_t, std::size_t, bool>> block_widths() const {
        const std::size_t c = base_channels;
        switch (resolution) {
            case 8: return {{3, c, true}, {c, c, false}};
            case 16: return {{3, c, true}, {c, c, true}, {c, c, false}};
            case 32: return {{3, c, true}, {c, c, true}, {c, c, false}, {c, c, false}};
            case 128:
                return {{3, c / 2, true},     {c / 2, c, true},     {c, 2 * c, true},
                        {2 * c, 4 * c, true}, {4 * c, 4 * c, true}, {4 * c, 4 * c, false}};
            default:
                throw ValueError("discriminator: unsupported resolution " +
                                 std::to_string(resolution));
        }
    }
};

template <typename S>
std::size_t param_count(std::vector<Parameter<S>*> params) {
    std::size_t n = 0;
    for (const auto* p : params)
        if (p->trainable) n += p->value.numel();
    return n;
}

// ---------------------------------------------------------------------------
// Generator: FC stem to 4x4, a chain of up-blocks, BN + ReLU, 3x3 conv to RGB,
// tanh. Every block's BN is conditioned on the noise vector (and the class
// embedding in conditional mode).
// ---------------------------------------------------------------------------
template <typename S>
class Generator {
public:
    explicit Generator(const GeneratorSpec& spec, CounterRng& rng) : spec_(spec) {
        const auto widths = spec.block_widths();
        stem_c_ = widths.front().first;
        cond_dim_ = spec.z_dim + (spec.conditional ? spec.embed_dim : 0);
        stem_ = Dense<S>("g.stem", spec.z_dim, 4 * 4 * stem_c_, spec.init, rng, spec.sn);
        if (spec.conditional)
            embed_ = Embedding<S>("g.embed", spec.num_classes, spec.embed_dim, spec.init, rng);
        for (std::size_t i = 0; i < widths.size(); ++i) {
            BlockConfig cfg = BlockConfig::generator(widths[i].first, widths[i].second, true,
                                                     spec.shortcut, cond_dim_);
            cfg.conditional_shortcut_bn = spec.conditional_shortcut_bn;
            blocks_.emplace_back("g.block" + std::to_string(i + 1), cfg, spec.init, rng, spec.sn);
        }
        final_bn_ = BatchNorm<S>("g.final_bn", widths.back().second, true);
        final_conv_ = Conv2d<S>("g.final_conv", widths.back().second, 3, 3, spec.init, rng, spec.sn);
    }

    // z: [b, z_dim]; labels used only in conditional mode.
    Var forward(Tape<S>& t, Var z, const std::vector<int>& labels, const Ctx& ctx) {
        const std::size_t b = t.val(z).dim(0);
        Var cond = z;
        if (spec_.conditional) {
            if (labels.size() != b)
                throw ValueError("generator: " + std::to_string(labels.size()) + " labels for batch " +
                                 std::to_string(b));
            Var e = embed_.forward(t, labels, ctx);
            Var zc = t.reshape(z, {b, spec_.z_dim, 1, 1});
            Var ec = t.reshape(e, {b, spec_.embed_dim, 1, 1});
            cond = t.reshape(t.concat_channels(zc, ec), {b, cond_dim_});
        }
        Var h = stem_.forward(t, z, ctx);
        h = t.reshape(h, {b, stem_c_, 4, 4});
        for (auto& blk : blocks_) h = blk.forward(t, h, cond, ctx);
        h = final_bn_.forward(t, h, ctx);
        h = t.relu(h);
        h = final_conv_.forward(t, h, ctx);
        return t.tanh(h);
    }

    std::vector<Parameter<S>*> params() {
        std::vector<Parameter<S>*> out;
        stem_.params(out);
        if (spec_.conditional) embed_.params(out);
        for (auto& b : blocks_) b.params(out);
        final_bn_.params(out);
        final_conv_.params(out);
        return out;
    }

    std::vector<NamedState<S>> states() {
        std::vector<NamedState<S>> out;
        stem_.states(out);
        if (spec_.conditional) embed_.states(out);
        for (auto& b : blocks_) b.states(out);
        final_bn_.states(out);
        final_conv_.states(out);
        return out;
    }

    std::size_t num_params() { return param_count<S>(params()); }

    const GeneratorSpec& spec() const { return spec_; }
    std::vector<GeneratorBlock<S>>& blocks() { return blocks_; }
    std::size_t cond_dim() const { return cond_dim_; }
    Embedding<S>& embed() { return embed_; }

private:
    GeneratorSpec spec_;
    std::size_t stem_c_ = 0, cond_dim_ = 0;
    Dense<S> stem_;
    Embedding<S> embed_;
    std::vector<GeneratorBlock<S>> blocks_;
    BatchNorm<S> final_bn_;
    Conv2d<S> final_conv_;
};

// ---------------------------------------------------------------------------
// Discriminator: down-block stack, ReLU, global sum pool, dense to one logit.
// In projection mode the logit gains <embed(y), pooled features>.
// ---------------------------------------------------------------------------
template <typename S>
class Discriminator {
public:
    explicit Discriminator(const DiscriminatorSpec& spec, CounterRng& rng) : spec_(spec) {
        const auto widths = spec.block_widths();
        for (std::size_t i = 0; i < widths.size(); ++i) {
            auto [ci, co, down] = widths[i];
            blocks_.emplace_back("d.block" + std::to_string(i + 1), ci, co, down, spec.init, rng,
                                 spec.sn);
        }
        feat_c_ = std::get<1>(widths.back());
        dense_ = Dense<S>("d.dense", feat_c_, 1, spec.init, rng, spec.sn);
        if (spec.projection)
            embed_ = Embedding<S>("d.embed", spec.num_classes, feat_c_, spec.init, rng, spec.sn);
    }

    // x: [b,3,res,res] -> logits [b,1].
    Var forward(Tape<S>& t, Var x, const std::vector<int>& labels, const Ctx& ctx) {
        Var h = x;
        for (auto& blk : blocks_) h = blk.forward(t, h, ctx);
        h = t.relu(h);
        Var pooled = t.global_sum_pool(h);  // [b, feat_c]
        Var logit = dense_.forward(t, pooled, ctx);
        if (spec_.projection) {
            const std::size_t b = t.val(x).dim(0);
            if (labels.size() != b)
                throw ValueError("discriminator: " + std::to_string(labels.size()) +
                                 " labels for batch " + std::to_string(b));
            Var e = embed_.forward(t, labels, ctx);
            logit = t.add(logit, t.sum_axis1(t.mul(e, pooled)));
        }
        return logit;
    }

    std::vector<Parameter<S>*> params() {
        std::vector<Parameter<S>*> out;
        for (auto& b : blocks_) b.params(out);
        dense_.params(out);
        if (spec_.projection) embed_.params(out);
        return out;
    }

    std::vector<NamedState<S>> states() {
        std::vector<NamedState<S>> out;
        for (auto& b : blocks_) b.states(out);
        dense_.states(out);
        if (spec_.projection) embed_.states(out);
        return out;
    }

    std::size_t num_params() { return param_count<S>(params()); }

    const DiscriminatorSpec& spec() const { return spec_; }
    std::vector<DiscriminatorBlock<S>>& blocks() { return blocks_; }
    Dense<S>& dense() { return dense_; }
    std::size_t feature_channels() const { return feat_c_; }

private:
    DiscriminatorSpec spec_;
    std::size_t feat_c_ = 0;
    std::vector<DiscriminatorBlock<S>> blocks_;
    Dense<S> dense_;
    Embedding<S> embed_;
};

}  // namespace gsgan
