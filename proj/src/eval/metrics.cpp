#include "f2i/eval/metrics.hpp"

#include <cmath>

#include "f2i/core/errors.hpp"

namespace f2i {

namespace {

double pearson_raw(const double* a, const double* b, int64_t n) {
    double ma = 0, mb = 0;
    for (int64_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0, sbb = 0, sab = 0;
    for (int64_t i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw DataError("correlation undefined: zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("pearson: size mismatch");
    return pearson_raw(a.data(), b.data(), static_cast<int64_t>(a.size()));
}

double pixcorr(const Tensor& recon, const Tensor& gt) {
    if (!recon.same_shape(gt)) throw ShapeError("pixcorr: shape mismatch");
    std::vector<double> a(static_cast<size_t>(recon.numel())), b(a.size());
    for (int64_t i = 0; i < recon.numel(); ++i) {
        a[static_cast<size_t>(i)] = recon[i];
        b[static_cast<size_t>(i)] = gt[i];
    }
    return pearson(a, b);
}

double ssim(const Tensor& recon, const Tensor& gt) {
    if (!recon.same_shape(gt)) throw ShapeError("ssim: shape mismatch");
    int channels = 1;
    int64_t S;
    if (recon.rank() == 2) {
        S = recon.dim(0);
        if (recon.dim(1) != S) throw ShapeError("ssim: square input required");
    } else if (recon.rank() == 3 && recon.dim(0) == 3) {
        channels = 3;
        S = recon.dim(1);
        if (recon.dim(2) != S) throw ShapeError("ssim: square input required");
    } else {
        throw ShapeError("ssim: [S,S] or [3,S,S] required");
    }
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    if (S < win) throw DataError("ssim: image smaller than the 11x11 window");

    double kernel[win];
    double ksum = 0;
    for (int i = 0; i < win; ++i) {
        double d = i - (win - 1) / 2.0;
        kernel[i] = std::exp(-d * d / (2 * sigma * sigma));
        ksum += kernel[i];
    }
    for (int i = 0; i < win; ++i) kernel[i] /= ksum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int64_t out = S - win + 1;

    // separable horizontal-then-vertical filtering of the five moment maps
    auto filt = [&](const std::vector<double>& img, std::vector<double>& dst) {
        std::vector<double> tmp(static_cast<size_t>(S * out));
        for (int64_t y = 0; y < S; ++y)
            for (int64_t x = 0; x < out; ++x) {
                double s = 0;
                for (int k = 0; k < win; ++k) s += kernel[k] * img[static_cast<size_t>(y * S + x + k)];
                tmp[static_cast<size_t>(y * out + x)] = s;
            }
        dst.assign(static_cast<size_t>(out * out), 0.0);
        for (int64_t y = 0; y < out; ++y)
            for (int64_t x = 0; x < out; ++x) {
                double s = 0;
                for (int k = 0; k < win; ++k) s += kernel[k] * tmp[static_cast<size_t>((y + k) * out + x)];
                dst[static_cast<size_t>(y * out + x)] = s;
            }
    };

    double total = 0;
    for (int c = 0; c < channels; ++c) {
        const float* pa = recon.data() + static_cast<int64_t>(c) * S * S;
        const float* pb = gt.data() + static_cast<int64_t>(c) * S * S;
        std::vector<double> a(static_cast<size_t>(S * S)), b(a.size()), aa(a.size()), bb(a.size()),
            ab(a.size());
        for (int64_t i = 0; i < S * S; ++i) {
            a[static_cast<size_t>(i)] = pa[i];
            b[static_cast<size_t>(i)] = pb[i];
            aa[static_cast<size_t>(i)] = static_cast<double>(pa[i]) * pa[i];
            bb[static_cast<size_t>(i)] = static_cast<double>(pb[i]) * pb[i];
            ab[static_cast<size_t>(i)] = static_cast<double>(pa[i]) * pb[i];
        }
        std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
        filt(a, mu_a);
        filt(b, mu_b);
        filt(aa, e_aa);
        filt(bb, e_bb);
        filt(ab, e_ab);
        double acc = 0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            double va = e_aa[i] - mu_a[i] * mu_a[i];
            double vb = e_bb[i] - mu_b[i] * mu_b[i];
            double cov = e_ab[i] - mu_a[i] * mu_b[i];
            acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / channels;
}

double two_way_identification(const std::vector<std::vector<double>>& recon_feats,
                              const std::vector<std::vector<double>>& gt_feats) {
    size_t n = recon_feats.size();
    if (n != gt_feats.size() || n < 2)
        throw DataError("two-way identification: need >= 2 matched feature rows");
    // correlation of every reconstruction against every ground truth
    std::vector<std::vector<double>> corr(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) corr[i][j] = pearson(recon_feats[i], gt_feats[j]);
    int64_t good = 0, trials = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            ++trials;
            if (corr[i][i] > corr[i][j]) ++good;  // ties count as failure
        }
    return static_cast<double>(good) / static_cast<double>(trials);
}

double feature_distance(const std::vector<std::vector<double>>& recon_feats,
                        const std::vector<std::vector<double>>& gt_feats) {
    size_t n = recon_feats.size();
    if (n != gt_feats.size() || n == 0) throw DataError("feature distance: size mismatch");
    double acc = 0;
    for (size_t i = 0; i < n; ++i) acc += (1.0 - pearson(recon_feats[i], gt_feats[i])) / 2.0;
    return acc / static_cast<double>(n);
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
    double mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace f2i
