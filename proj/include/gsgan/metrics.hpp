#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>

#include "gsgan/tensor.hpp"

namespace gsgan {

// Gaussian fit of a feature distribution: the FID inputs.
struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric by construction
    std::size_t n = 0;
};

// Sample mean and unbiased (n-1) covariance of row-wise features.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-1e-8, 0) are clamped to zero; anything lower is rejected.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

// ||mu_p - mu_q||^2 + trace(Cp + Cq - 2 (Cp Cq)^{1/2}), computed through the
// symmetric form sqrtm(Cp^{1/2} Cq Cp^{1/2}).
double frechet_distance(const GaussianStats& p, const GaussianStats& q);

// exp(E[KL(p(l|x) || p(l))]) over posterior rows; p(l) is the column mean.
double inception_score(const Eigen::MatrixXd& posterior);

// Fixed (non-trainable) map from image batches to feature vectors and class
// posteriors. Deterministic for a fixed seed / weight file.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Eigen::MatrixXd features(const Tensor<float>& images) const = 0;    // [n, d]
    virtual Eigen::MatrixXd posteriors(const Tensor<float>& images) const = 0;  // [n, K]
    virtual std::size_t feature_dim() const = 0;
    virtual std::size_t num_classes() const = 0;
};

// Fixed-seed random CNN (d = 64) with a random linear classifier head.
std::unique_ptr<FeatureExtractor> make_randconv_extractor(std::uint64_t seed,
                                                          std::size_t num_classes);

// Same extractor with weights loaded from a checkpoint-format file.
std::unique_ptr<FeatureExtractor> load_randconv_extractor(const std::string& path);
void save_randconv_extractor(const FeatureExtractor& ex, const std::string& path);

// Raw pixel moments: per-channel mean/std plus a 4x4 grid of cell means.
std::unique_ptr<FeatureExtractor> make_pixel_moment_extractor(std::uint64_t seed,
                                                              std::size_t num_classes);

// Anything that can produce image batches [n,3,h,w]: a generator in eval
// mode, or a dataset pass-through.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual Tensor<float> sample(std::size_t n, CounterRng& rng) = 0;
};

// Samples n images, fits Gaussians, returns (fid, is).
std::pair<double, double> evaluate(ImageSource& source, const FeatureExtractor& extractor,
                                   const Eigen::MatrixXd& real_features, std::size_t n_samples,
                                   CounterRng& rng, std::size_t batch = 64);

// CSV matrix dump for external cross-checking.
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m);

}  // namespace gsgan
