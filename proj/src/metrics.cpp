#include "gsgan/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gsgan/checkpoint.hpp"
#include "gsgan/tape.hpp"

namespace gsgan {

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
    const std::size_t n = static_cast<std::size_t>(features.rows());
    if (n < 2)
        throw ValueError("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
    GaussianStats s;
    s.n = n;
    s.mean = features.colwise().mean();
    Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
    s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    s.cov = ((s.cov + s.cov.transpose()) / 2.0).eval();
    return s;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols())
        throw ShapeError("sqrtm_psd: matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * scale)
        throw ValueError("sqrtm_psd: matrix is not symmetric (max asymmetry " +
                         std::to_string(asym) + ")");
    Eigen::MatrixXd sym = (a + a.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw ValueError("sqrtm_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8)
            throw ValueError("sqrtm_psd: significantly indefinite input (eigenvalue " +
                             std::to_string(ev[i]) + ")");
        if (ev[i] < 0) ev[i] = 0;
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& p, const GaussianStats& q) {
    if (p.mean.size() != q.mean.size())
        throw ShapeError("frechet_distance: dimension " + std::to_string(p.mean.size()) + " vs " +
                         std::to_string(q.mean.size()));
    const Eigen::MatrixXd sp = sqrtm_psd(p.cov);
    Eigen::MatrixXd inner = sp * q.cov * sp;
    inner = ((inner + inner.transpose()) / 2.0).eval();
    const Eigen::MatrixXd s = sqrtm_psd(inner);
    const double mean_term = (p.mean - q.mean).squaredNorm();
    return mean_term + p.cov.trace() + q.cov.trace() - 2.0 * s.trace();
}

double inception_score(const Eigen::MatrixXd& posterior) {
    const Eigen::Index n = posterior.rows(), k = posterior.cols();
    if (n < 1 || k < 1) throw ValueError("inception_score: empty posterior");
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (posterior(i, j) < 0)
                throw ValueError("inception_score: negative probability in row " +
                                 std::to_string(i));
            sum += posterior(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValueError("inception_score: row " + std::to_string(i) + " sums to " +
                             std::to_string(sum));
    }
    const Eigen::VectorXd marginal = posterior.colwise().mean();
    double kl_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double kl = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double pij = posterior(i, j);
            if (pij > 0) kl += pij * (std::log(pij) - std::log(marginal[j]));
        }
        kl_sum += kl;
    }
    return std::exp(kl_sum / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Extractors
// ---------------------------------------------------------------------------

namespace {

// Minimal inference-only conv net evaluated in double precision.
struct ConvNetWeights {
    Tensor<double> k1, b1;    // 3 -> c1, 3x3
    Tensor<double> k2, b2;    // c1 -> c2, 3x3
    Tensor<double> wf, bf;    // c2 -> d feature head
    Tensor<double> wc, bc;    // d -> K classifier head
    std::uint64_t seed = 0;
    std::size_t num_classes = 0;
};

constexpr std::size_t kC1 = 12, kC2 = 24, kFeatDim = 64;
// Classifier-head gain; tanh features are small, so raw random logits would
// leave every posterior near uniform.
constexpr double kHeadGain = 4.0;

ConvNetWeights make_weights(std::uint64_t seed, std::size_t k) {
    ConvNetWeights w;
    w.seed = seed;
    w.num_classes = k;
    CounterRng rng(substream_seed(seed, 0xfeed));
    auto glorot = [&](Shape s, std::size_t fi, std::size_t fo) {
        Tensor<double> t(std::move(s));
        const double lim = std::sqrt(6.0 / static_cast<double>(fi + fo));
        for (double& v : t.raw()) v = rng.uniform(-lim, lim);
        return t;
    };
    w.k1 = glorot({kC1, 3, 3, 3}, 27, kC1 * 9);
    w.b1 = glorot({kC1}, kC1, kC1);
    w.k2 = glorot({kC2, kC1, 3, 3}, kC1 * 9, kC2 * 9);
    w.b2 = glorot({kC2}, kC2, kC2);
    w.wf = glorot({kC2, kFeatDim}, kC2, kFeatDim);
    w.bf = glorot({kFeatDim}, kFeatDim, kFeatDim);
    w.wc = glorot({kFeatDim, k}, kFeatDim, k);
    w.bc = glorot({k}, k, k);
    return w;
}

Tensor<double> conv_relu(const Tensor<double>& x, const Tensor<double>& kern,
                         const Tensor<double>& bias) {
    const std::size_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = kern.dim(0);
    Tensor<double> out({b, co, h, w});
    std::vector<double> cols(ci * 9 * h * w);
    for (std::size_t ib = 0; ib < b; ++ib) {
        detail::im2col(x.data() + ib * ci * h * w, ci, h, w, 3, 3, 1, h, w, cols.data());
        double* ob = out.data() + ib * co * h * w;
        detail::gemm(co, ci * 9, h * w, kern.data(), cols.data(), ob, false);
        for (std::size_t c = 0; c < co; ++c)
            for (std::size_t i = 0; i < h * w; ++i) {
                double v = ob[c * h * w + i] + bias[c];
                ob[c * h * w + i] = v > 0 ? v : 0;
            }
    }
    return out;
}

Tensor<double> pool2(const Tensor<double>& x) {
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<double> out({b, c, h / 2, w / 2});
    for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double* s = x.data() + bc * h * w;
        double* d = out.data() + bc * (h / 2) * (w / 2);
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t z = 0; z < w / 2; ++z)
                d[y * (w / 2) + z] = (s[2 * y * w + 2 * z] + s[2 * y * w + 2 * z + 1] +
                                      s[(2 * y + 1) * w + 2 * z] + s[(2 * y + 1) * w + 2 * z + 1]) /
                                     4.0;
    }
    return out;
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            logits(i, j) = std::exp(logits(i, j) - mx);
            sum += logits(i, j);
        }
        logits.row(i) /= sum;
    }
    return logits;
}

class RandConvExtractor final : public FeatureExtractor {
public:
    explicit RandConvExtractor(ConvNetWeights w) : w_(std::move(w)) {}

    Eigen::MatrixXd features(const Tensor<float>& images) const override {
        Tensor<double> x = images.cast<double>();
        x = conv_relu(x, w_.k1, w_.b1);
        if (x.dim(2) >= 4) x = pool2(x);
        x = conv_relu(x, w_.k2, w_.b2);
        if (x.dim(2) >= 4) x = pool2(x);
        // global average pool -> [n, c2]
        const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
        Eigen::MatrixXd pooled(n, c);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double* p = x.data() + (i * c + j) * plane;
                double acc = 0.0;
                for (std::size_t q = 0; q < plane; ++q) acc += p[q];
                pooled(i, j) = acc / static_cast<double>(plane);
            }
        Eigen::MatrixXd feats(n, kFeatDim);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < kFeatDim; ++j) {
                double acc = w_.bf[j];
                for (std::size_t q = 0; q < c; ++q) acc += pooled(i, q) * w_.wf[q * kFeatDim + j];
                feats(i, j) = std::tanh(acc);
            }
        return feats;
    }

    Eigen::MatrixXd posteriors(const Tensor<float>& images) const override {
        const Eigen::MatrixXd f = features(images);
        const std::size_t k = w_.num_classes;
        Eigen::MatrixXd logits(f.rows(), k);
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double acc = w_.bc[j];
                for (std::size_t q = 0; q < kFeatDim; ++q) acc += f(i, q) * w_.wc[q * k + j] * kHeadGain;
                logits(i, static_cast<Eigen::Index>(j)) = acc;
            }
        return softmax_rows(std::move(logits));
    }

    std::size_t feature_dim() const override { return kFeatDim; }
    std::size_t num_classes() const override { return w_.num_classes; }

    const ConvNetWeights& weights() const { return w_; }

private:
    ConvNetWeights w_;
};

class PixelMomentExtractor final : public FeatureExtractor {
public:
    PixelMomentExtractor(std::uint64_t seed, std::size_t k) : k_(k) {
        CounterRng rng(substream_seed(seed, 0x9a7));
        head_ = Tensor<double>({dim_, k});
        for (double& v : head_.raw()) v = rng.normal();
    }

    Eigen::MatrixXd features(const Tensor<float>& images) const override {
        const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2),
                          w = images.dim(3);
        if (c != 3) throw ShapeError("pixel_moment extractor: need RGB, got " + shape_str(images.shape()));
        Eigen::MatrixXd out(n, dim_);
        const std::size_t gh = h / 4, gw = w / 4;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t col = 0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float* p = images.data() + (i * c + ch) * h * w;
                double m = 0.0;
                for (std::size_t q = 0; q < h * w; ++q) m += p[q];
                m /= static_cast<double>(h * w);
                double v = 0.0;
                for (std::size_t q = 0; q < h * w; ++q) v += (p[q] - m) * (p[q] - m);
                v = std::sqrt(v / static_cast<double>(h * w));
                out(i, col++) = m;
                out(i, col++) = v;
            }
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float* p = images.data() + (i * c + ch) * h * w;
                for (std::size_t gy = 0; gy < 4; ++gy)
                    for (std::size_t gx = 0; gx < 4; ++gx) {
                        double m = 0.0;
                        for (std::size_t y = gy * gh; y < (gy + 1) * gh; ++y)
                            for (std::size_t x = gx * gw; x < (gx + 1) * gw; ++x)
                                m += p[y * w + x];
                        out(i, col++) = m / static_cast<double>(gh * gw);
                    }
            }
        }
        return out;
    }

    Eigen::MatrixXd posteriors(const Tensor<float>& images) const override {
        const Eigen::MatrixXd f = features(images);
        Eigen::MatrixXd logits(f.rows(), k_);
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < k_; ++j) {
                double acc = 0.0;
                for (std::size_t q = 0; q < dim_; ++q) acc += f(i, q) * head_[q * k_ + j];
                logits(i, static_cast<Eigen::Index>(j)) = acc;
            }
        return softmax_rows(std::move(logits));
    }

    std::size_t feature_dim() const override { return dim_; }
    std::size_t num_classes() const override { return k_; }

private:
    static constexpr std::size_t dim_ = 6 + 48;
    std::size_t k_;
    Tensor<double> head_;
};

}  // namespace

std::unique_ptr<FeatureExtractor> make_randconv_extractor(std::uint64_t seed,
                                                          std::size_t num_classes) {
    return std::make_unique<RandConvExtractor>(make_weights(seed, num_classes));
}

std::unique_ptr<FeatureExtractor> make_pixel_moment_extractor(std::uint64_t seed,
                                                              std::size_t num_classes) {
    return std::make_unique<PixelMomentExtractor>(seed, num_classes);
}

void save_randconv_extractor(const FeatureExtractor& ex, const std::string& path) {
    const auto* rc = dynamic_cast<const RandConvExtractor*>(&ex);
    if (!rc) throw ValueError("save_randconv_extractor: not a randconv extractor");
    const ConvNetWeights& w = rc->weights();
    CheckpointData d;
    d.config_text = "kind = randconv\nnum_classes = " + std::to_string(w.num_classes) + "\n";
    d.records.push_back(to_record("extractor.k1", w.k1));
    d.records.push_back(to_record("extractor.b1", w.b1));
    d.records.push_back(to_record("extractor.k2", w.k2));
    d.records.push_back(to_record("extractor.b2", w.b2));
    d.records.push_back(to_record("extractor.wf", w.wf));
    d.records.push_back(to_record("extractor.bf", w.bf));
    d.records.push_back(to_record("extractor.wc", w.wc));
    d.records.push_back(to_record("extractor.bc", w.bc));
    save_checkpoint(path, d);
}

std::unique_ptr<FeatureExtractor> load_randconv_extractor(const std::string& path) {
    const CheckpointData d = load_checkpoint(path);
    auto need = [&](const char* name) {
        const TensorRecord* r = d.record(name);
        if (!r) throw IoError("extractor file missing record '" + std::string(name) + "'");
        return from_record<double>(*r);
    };
    ConvNetWeights w;
    w.k1 = need("extractor.k1");
    w.b1 = need("extractor.b1");
    w.k2 = need("extractor.k2");
    w.b2 = need("extractor.b2");
    w.wf = need("extractor.wf");
    w.bf = need("extractor.bf");
    w.wc = need("extractor.wc");
    w.bc = need("extractor.bc");
    w.num_classes = w.bc.numel();
    return std::make_unique<RandConvExtractor>(std::move(w));
}

std::pair<double, double> evaluate(ImageSource& source, const FeatureExtractor& extractor,
                                   const Eigen::MatrixXd& real_features, std::size_t n_samples,
                                   CounterRng& rng, std::size_t batch) {
    if (static_cast<std::size_t>(real_features.cols()) != extractor.feature_dim())
        throw ShapeError("evaluate: real features have dim " +
                         std::to_string(real_features.cols()) + ", extractor produces " +
                         std::to_string(extractor.feature_dim()));
    Eigen::MatrixXd feats(n_samples, extractor.feature_dim());
    Eigen::MatrixXd posts(n_samples, extractor.num_classes());
    std::size_t done = 0;
    while (done < n_samples) {
        const std::size_t n = std::min(batch, n_samples - done);
        Tensor<float> images = source.sample(n, rng);
        feats.middleRows(static_cast<Eigen::Index>(done), static_cast<Eigen::Index>(n)) =
            extractor.features(images);
        posts.middleRows(static_cast<Eigen::Index>(done), static_cast<Eigen::Index>(n)) =
            extractor.posteriors(images);
        done += n;
    }
    const double fid = frechet_distance(gaussian_stats(real_features), gaussian_stats(feats));
    const double is = inception_score(posts);
    return {fid, is};
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw IoError("write_csv_matrix: cannot write " + path);
    char buf[64];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << buf << (j + 1 < m.cols() ? "," : "");
        }
        out << "\n";
    }
}

}  // namespace gsgan
