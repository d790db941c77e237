#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gsgan/tensor.hpp"

namespace gsgan {

// Pixel byte <-> [-1, 1] mapping shared by loaders, PPM output and the
// generator's tanh range.
inline float normalize_pixel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

inline std::uint8_t denormalize_pixel(double x) {
    const double v = (x + 1.0) * 127.5;
    long r = std::lround(v);  // rounds half away from zero
    if (r < 0) r = 0;
    if (r > 255) r = 255;
    return static_cast<std::uint8_t>(r);
}

// One training record: CHW pixels in [-1, 1] plus a class id.
struct LabeledImage {
    Tensor<float> pixels;  // [3, h, w]
    int label = 0;
};

// Deterministic, index-addressable image dataset.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual LabeledImage at(std::size_t idx) const = 0;
    virtual std::size_t resolution() const = 0;
    virtual std::size_t num_classes() const = 0;
};

using DatasetHandle = std::shared_ptr<const Dataset>;

// CIFAR-10 binary batches: 3073-byte records, 1 label byte then 1024 bytes
// per RGB plane, row-major. `path` may be a single .bin file or a directory
// holding data_batch_*.bin.
DatasetHandle load_cifar10(const std::string& path);

enum class SynthKind { rings, blobs, stripes };

SynthKind synth_kind_from_string(const std::string& s);
const char* to_string(SynthKind k);

// Procedural class-conditional patterns, a desk-scale stand-in for the heavy
// datasets. Fully determined by (kind, resolution, k, n, seed); renders on
// access, stores nothing.
DatasetHandle synth_dataset(SynthKind kind, std::size_t resolution, std::size_t k, std::size_t n,
                            std::uint64_t seed);

// i.i.d. standard-normal latents, [batch, z_dim].
template <typename S>
Tensor<S> sample_latent(std::size_t batch, std::size_t z_dim, CounterRng& rng) {
    Tensor<S> z({batch, z_dim});
    for (S& v : z.raw()) v = static_cast<S>(rng.normal());
    return z;
}

// Epoch-wise sampler: a deterministic permutation of the dataset per
// (seed, epoch), consumed sequentially, reshuffled on wrap.
class BatchSampler {
public:
    BatchSampler(DatasetHandle data, std::uint64_t seed)
        : data_(std::move(data)), seed_(seed) {
        reshuffle();
    }

    // Next `n` records (wraps to the next epoch as needed).
    std::vector<LabeledImage> next(std::size_t n) {
        std::vector<LabeledImage> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (cursor_ >= perm_.size()) {
                ++epoch_;
                cursor_ = 0;
                reshuffle();
            }
            out.push_back(data_->at(perm_[cursor_++]));
        }
        return out;
    }

    std::uint64_t epoch() const { return epoch_; }
    std::uint64_t cursor() const { return cursor_; }
    void restore(std::uint64_t epoch, std::uint64_t cursor) {
        epoch_ = epoch;
        cursor_ = cursor;
        reshuffle();
    }
    const Dataset& dataset() const { return *data_; }

private:
    void reshuffle() {
        CounterRng r(substream_seed(seed_, epoch_));
        perm_ = r.permutation(data_->size());
    }

    DatasetHandle data_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::uint64_t cursor_ = 0;
    std::vector<std::size_t> perm_;
};

// Stacks records into a batch tensor [n, 3, h, w] plus labels.
template <typename S>
std::pair<Tensor<S>, std::vector<int>> stack_batch(const std::vector<LabeledImage>& recs) {
    const std::size_t n = recs.size();
    const Shape& ps = recs.front().pixels.shape();
    Tensor<S> x({n, ps[0], ps[1], ps[2]});
    std::vector<int> labels(n);
    const std::size_t stride = ps[0] * ps[1] * ps[2];
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = recs[i].label;
        for (std::size_t j = 0; j < stride; ++j)
            x[i * stride + j] = static_cast<S>(recs[i].pixels[j]);
    }
    return {std::move(x), std::move(labels)};
}

}  // namespace gsgan
