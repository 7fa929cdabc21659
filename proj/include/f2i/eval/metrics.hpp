#pragma once

#include <vector>

#include "f2i/core/tensor.hpp"

namespace f2i {

/// Pearson correlation over flattened values. Throws DataError on
/// zero-variance input (undefined correlation).
double pixcorr(const Tensor& recon, const Tensor& gt);

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), standard stabilizers
/// (K1=0.01, K2=0.03, data range 1), valid windows only, mean over windows
/// and channels. Inputs [S,S] or [3,S,S] with values in [0,1].
double ssim(const Tensor& recon, const Tensor& gt);

/// Two-way identification over all ordered pairs: a trial (i, j != i)
/// succeeds iff corr(recon_i, gt_i) > corr(recon_i, gt_j); ties fail.
double two_way_identification(const std::vector<std::vector<double>>& recon_feats,
                              const std::vector<std::vector<double>>& gt_feats);

/// Mean over samples of (1 - corr(recon_i, gt_i)) / 2, in [0,1].
double feature_distance(const std::vector<std::vector<double>>& recon_feats,
                        const std::vector<std::vector<double>>& gt_feats);

/// Peak signal-to-noise ratio in dB for data range 1.
double psnr(const Tensor& a, const Tensor& b);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace f2i
