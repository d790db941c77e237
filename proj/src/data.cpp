#include "gsgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace gsgan {

namespace {

constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3*1024 pixels
constexpr std::size_t kCifarPlane = 1024;

class Cifar10Dataset final : public Dataset {
public:
    explicit Cifar10Dataset(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

    std::size_t size() const override { return bytes_.size() / kCifarRecord; }
    std::size_t resolution() const override { return 32; }
    std::size_t num_classes() const override { return 10; }

    LabeledImage at(std::size_t idx) const override {
        const std::uint8_t* rec = bytes_.data() + idx * kCifarRecord;
        LabeledImage img;
        img.label = rec[0];
        img.pixels = Tensor<float>({3, 32, 32});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < kCifarPlane; ++i)
                img.pixels[c * kCifarPlane + i] = normalize_pixel(rec[1 + c * kCifarPlane + i]);
        return img;
    }

private:
    std::vector<std::uint8_t> bytes_;
};

std::vector<std::uint8_t> read_cifar_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cifar10: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kCifarRecord != 0)
        throw IoError("cifar10: " + path + " has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of " + std::to_string(kCifarRecord));
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord)
        if (bytes[off] > 9)
            throw IoError("cifar10: " + path + " record " + std::to_string(off / kCifarRecord) +
                          " has label byte " + std::to_string(bytes[off]) + " > 9");
    return bytes;
}

}  // namespace

DatasetHandle load_cifar10(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<std::uint8_t> all;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("data_batch_", 0) == 0 && name.size() > 4 &&
                name.substr(name.size() - 4) == ".bin")
                files.push_back(e.path().string());
        }
        if (files.empty()) throw IoError("cifar10: no data_batch_*.bin files in " + path);
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto bytes = read_cifar_file(f);
            all.insert(all.end(), bytes.begin(), bytes.end());
        }
    } else {
        all = read_cifar_file(path);
    }
    return std::make_shared<Cifar10Dataset>(std::move(all));
}

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "rings") return SynthKind::rings;
    if (s == "blobs") return SynthKind::blobs;
    if (s == "stripes") return SynthKind::stripes;
    throw ValueError("unknown synth dataset kind '" + s + "' (rings|blobs|stripes)");
}

const char* to_string(SynthKind k) {
    switch (k) {
        case SynthKind::rings: return "rings";
        case SynthKind::blobs: return "blobs";
        case SynthKind::stripes: return "stripes";
    }
    return "?";
}

namespace {

// Class-dependent base colors, spread around the hue circle.
void class_color(std::size_t label, std::size_t k, float* rgb) {
    const double a = 6.283185307179586 * static_cast<double>(label) / static_cast<double>(k ? k : 1);
    rgb[0] = static_cast<float>(0.55 + 0.45 * std::cos(a));
    rgb[1] = static_cast<float>(0.55 + 0.45 * std::cos(a - 2.0943951023931953));
    rgb[2] = static_cast<float>(0.55 + 0.45 * std::cos(a + 2.0943951023931953));
}

class SynthDataset final : public Dataset {
public:
    SynthDataset(SynthKind kind, std::size_t res, std::size_t k, std::size_t n, std::uint64_t seed)
        : kind_(kind), res_(res), k_(k), n_(n), seed_(seed) {
        if (res != 8 && res != 16 && res != 32)
            throw ValueError("synth dataset: resolution must be 8, 16 or 32, got " +
                             std::to_string(res));
        if (k == 0) throw ValueError("synth dataset: need at least one class");
    }

    std::size_t size() const override { return n_; }
    std::size_t resolution() const override { return res_; }
    std::size_t num_classes() const override { return k_; }

    LabeledImage at(std::size_t idx) const override {
        LabeledImage img;
        img.label = static_cast<int>(idx % k_);  // exact class balance
        img.pixels = Tensor<float>({3, res_, res_});
        CounterRng rng(substream_seed(seed_, idx));

        float rgb[3];
        class_color(static_cast<std::size_t>(img.label), k_, rgb);
        const double r = static_cast<double>(res_);
        const double jx = rng.normal() * 0.04 * r;
        const double jy = rng.normal() * 0.04 * r;

        for (std::size_t y = 0; y < res_; ++y) {
            for (std::size_t x = 0; x < res_; ++x) {
                const double px = static_cast<double>(x) + 0.5;
                const double py = static_cast<double>(y) + 0.5;
                double m = 0.0;  // pattern intensity in [0, 1]
                switch (kind_) {
                    case SynthKind::blobs: {
                        const double a = 6.283185307179586 * img.label / static_cast<double>(k_);
                        const double cx = r / 2 + 0.28 * r * std::cos(a) + jx;
                        const double cy = r / 2 + 0.28 * r * std::sin(a) + jy;
                        const double s = r / 5.0;
                        const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                        m = std::exp(-d2 / (2 * s * s));
                        break;
                    }
                    case SynthKind::rings: {
                        const double rad =
                            (static_cast<double>(img.label) + 1.0) / (static_cast<double>(k_) + 1.0) *
                            (r / 2);
                        const double cx = r / 2 + jx * 0.5, cy = r / 2 + jy * 0.5;
                        const double d = std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
                        const double t = std::max(1.0, r / 12.0);
                        m = std::exp(-(d - rad) * (d - rad) / (2 * t * t));
                        break;
                    }
                    case SynthKind::stripes: {
                        const double period = r / (2.0 + static_cast<double>(img.label));
                        const double phase = jx;
                        const double a = 6.283185307179586 * (py + phase) / period;
                        m = 0.5 + 0.5 * std::sin(a);
                        break;
                    }
                }
                for (std::size_t c = 0; c < 3; ++c) {
                    // background -0.85, pattern toward the class color
                    float v = -0.85f + static_cast<float>(m) * (rgb[c] * 1.7f + 0.15f);
                    v = std::min(1.0f, std::max(-1.0f, v));
                    img.pixels[(c * res_ + y) * res_ + x] = v;
                }
            }
        }
        return img;
    }

private:
    SynthKind kind_;
    std::size_t res_, k_, n_;
    std::uint64_t seed_;
};

}  // namespace

DatasetHandle synth_dataset(SynthKind kind, std::size_t resolution, std::size_t k, std::size_t n,
                            std::uint64_t seed) {
    return std::make_shared<SynthDataset>(kind, resolution, k, n, seed);
}

}  // namespace gsgan
