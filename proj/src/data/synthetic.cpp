#include "f2i/data/synthetic.hpp"

#include <algorithm>

#include "f2i/core/errors.hpp"
#include <array>
#include <cmath>

namespace f2i {

namespace {

constexpr uint64_t kBasisKey = 0x5ab5ec7ba515ull;    // subject bases, seed-independent
constexpr uint64_t kCaptionKey = 0xca97e0b310ull;    // caption embeddings, seed-independent

struct Rgb {
    double r, g, b;
};

// class -> (shape, saturated colour); wraps after six classes
const std::array<Rgb, 6> kColors = {{{0.85, 0.10, 0.10},
                                     {0.10, 0.75, 0.15},
                                     {0.12, 0.25, 0.85},
                                     {0.90, 0.80, 0.10},
                                     {0.80, 0.15, 0.80},
                                     {0.10, 0.75, 0.80}}};

double sd_circle(double x, double y, double r) { return std::sqrt(x * x + y * y) - r; }

double sd_square(double x, double y, double r) {
    return std::max(std::abs(x), std::abs(y)) - r;
}

double sd_triangle(double x, double y, double r) {
    const double k = std::sqrt(3.0);
    x = std::abs(x) - r;
    y = y + r / k;
    if (x + k * y > 0.0) {
        double nx = (x - k * y) / 2.0;
        double ny = (-k * x - y) / 2.0;
        x = nx;
        y = ny;
    }
    x -= std::clamp(x, -2.0 * r, 0.0);
    double len = std::sqrt(x * x + y * y);
    return y > 0.0 ? -len : len;
}

double sd_hexagon(double x, double y, double r) {
    const double kx = -0.8660254037844386, ky = 0.5, kz = 0.5773502691896258;
    x = std::abs(x);
    y = std::abs(y);
    double d = 2.0 * std::min(kx * x + ky * y, 0.0);
    x -= d * kx;
    y -= d * ky;
    x -= std::clamp(x, -kz * r, kz * r);
    y -= r;
    double len = std::sqrt(x * x + y * y);
    return y > 0.0 ? len : -len;
}

double shape_sdf(int shape, double x, double y, double r) {
    switch (shape % 4) {
        case 0: return sd_circle(x, y, r);
        case 1: return sd_square(x, y, r);
        case 2: return sd_triangle(x, y, r);
        default: return sd_hexagon(x, y, r);
    }
}

}  // namespace

int factor_dim(int classes) { return classes + 5; }

std::vector<double> factor_vector(const FactorSample& f, int classes) {
    std::vector<double> v(static_cast<size_t>(factor_dim(classes)), 0.0);
    v[static_cast<size_t>(f.cls)] = 1.0;
    v[static_cast<size_t>(classes) + 0] = 2.0 * (f.cx - 0.5);
    v[static_cast<size_t>(classes) + 1] = 2.0 * (f.cy - 0.5);
    v[static_cast<size_t>(classes) + 2] = 4.0 * (f.scale - 0.22);
    v[static_cast<size_t>(classes) + 3] = 0.5 * std::cos(f.theta);
    v[static_cast<size_t>(classes) + 4] = 0.5 * std::sin(f.theta);
    return v;
}

FactorSample sample_factors(Rng& rng, int classes) {
    FactorSample f;
    f.cls = static_cast<int>(rng.below(classes));
    f.cx = rng.uniform(0.30, 0.70);
    f.cy = rng.uniform(0.30, 0.70);
    f.scale = rng.uniform(0.14, 0.30);
    f.theta = rng.uniform(0.0, 6.283185307179586477);
    return f;
}

ImageSample render_image(const FactorSample& f, int side) {
    const double bg = 0.82;
    const Rgb col = kColors[static_cast<size_t>(f.cls % 6)];
    const double edge = 1.5;  // soft edge, pixels
    const double s = static_cast<double>(side);
    const double r = f.scale * s;
    const double cx = f.cx * s, cy = f.cy * s;
    const double ct = std::cos(f.theta), st = std::sin(f.theta);

    ImageSample img;
    img.rgb = Tensor({3, side, side});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double px = (x + 0.5) - cx, py = (y + 0.5) - cy;
            double rx = ct * px + st * py;  // rotate into shape frame
            double ry = -st * px + ct * py;
            double d = shape_sdf(f.cls, rx, ry, r);
            double cov = std::clamp(0.5 - d / edge, 0.0, 1.0);
            double out[3] = {bg * (1 - cov) + col.r * cov, bg * (1 - cov) + col.g * cov,
                             bg * (1 - cov) + col.b * cov};
            for (int c = 0; c < 3; ++c)
                img.rgb[static_cast<int64_t>(c) * side * side + static_cast<int64_t>(y) * side + x] =
                    static_cast<float>(out[c]);
        }
    return img;
}

Tensor caption_embedding(int cls, const ScalePreset& preset) {
    Rng rng = Rng::keyed(kCaptionKey, static_cast<uint64_t>(cls),
                         static_cast<uint64_t>(preset.text_tokens) * 131 +
                             static_cast<uint64_t>(preset.text_dim));
    Tensor emb({preset.text_tokens, preset.text_dim});
    rng.fill_normal(emb, 0.0, 0.5);
    return emb;
}

Tensor subject_basis(int subject, int side, int classes) {
    const int F = factor_dim(classes);
    const int coarse = 8;
    Tensor basis({F, static_cast<int64_t>(side) * side});
    Rng rng = Rng::keyed(kBasisKey, static_cast<uint64_t>(subject), static_cast<uint64_t>(side));

    // smooth fields: coarse white noise, bilinearly upsampled
    for (int j = 0; j < F; ++j) {
        std::vector<double> grid(static_cast<size_t>(coarse) * coarse);
        for (auto& v : grid) v = rng.normal();
        float* row = basis.data() + static_cast<int64_t>(j) * side * side;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                double gx = (x + 0.5) / side * (coarse - 1);
                double gy = (y + 0.5) / side * (coarse - 1);
                int x0 = std::min(static_cast<int>(gx), coarse - 2);
                int y0 = std::min(static_cast<int>(gy), coarse - 2);
                double fx = gx - x0, fy = gy - y0;
                double v00 = grid[static_cast<size_t>(y0) * coarse + x0];
                double v01 = grid[static_cast<size_t>(y0) * coarse + x0 + 1];
                double v10 = grid[static_cast<size_t>(y0 + 1) * coarse + x0];
                double v11 = grid[static_cast<size_t>(y0 + 1) * coarse + x0 + 1];
                double v = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) +
                           v10 * (1 - fx) * fy + v11 * fx * fy;
                row[static_cast<int64_t>(y) * side + x] = static_cast<float>(v);
            }
    }

    // Modified Gram-Schmidt in double; rows end up orthonormal, then get
    // scaled so the mixed map has O(1) per-pixel variance pre-normalization.
    const int64_t n = static_cast<int64_t>(side) * side;
    std::vector<std::vector<double>> q(static_cast<size_t>(F),
                                       std::vector<double>(static_cast<size_t>(n)));
    for (int j = 0; j < F; ++j) {
        auto& qj = q[static_cast<size_t>(j)];
        for (int64_t i = 0; i < n; ++i) qj[static_cast<size_t>(i)] = basis[static_cast<int64_t>(j) * n + i];
        for (int p = 0; p < j; ++p) {
            const auto& qp = q[static_cast<size_t>(p)];  // already unit norm
            double dot = 0;
            for (int64_t i = 0; i < n; ++i) dot += qj[static_cast<size_t>(i)] * qp[static_cast<size_t>(i)];
            for (int64_t i = 0; i < n; ++i) qj[static_cast<size_t>(i)] -= dot * qp[static_cast<size_t>(i)];
        }
        double norm = 0;
        for (int64_t i = 0; i < n; ++i) norm += qj[static_cast<size_t>(i)] * qj[static_cast<size_t>(i)];
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw DataError("subject basis: degenerate field");
        for (int64_t i = 0; i < n; ++i) qj[static_cast<size_t>(i)] /= norm;
        double s = std::sqrt(static_cast<double>(n) / F);
        for (int64_t i = 0; i < n; ++i)
            basis[static_cast<int64_t>(j) * n + i] = static_cast<float>(qj[static_cast<size_t>(i)] * s);
    }
    return basis;
}

SurfaceMap render_surface(const FactorSample& f, int subject, const Tensor& basis, int side,
                          const GeneratorParams& params, Rng& noise_rng) {
    const int64_t n = static_cast<int64_t>(side) * side;
    std::vector<double> fv = factor_vector(f, params.classes);

    SurfaceMap sm;
    sm.subject_id = subject;
    sm.pixels = Tensor({side, side});
    for (int64_t i = 0; i < n; ++i) {
        double v = 0;
        for (size_t j = 0; j < fv.size(); ++j)
            v += fv[j] * basis[static_cast<int64_t>(j) * n + i];
        v += params.noise_sigma * noise_rng.normal();
        sm.pixels[i] = static_cast<float>(v);
    }

    if (params.normalization == "zscore") {
        double mean = 0;
        for (int64_t i = 0; i < n; ++i) mean += sm.pixels[i];
        mean /= static_cast<double>(n);
        double var = 0;
        for (int64_t i = 0; i < n; ++i) {
            double d = sm.pixels[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + 1e-8);
        for (int64_t i = 0; i < n; ++i)
            sm.pixels[i] = static_cast<float>((sm.pixels[i] - mean) * is);
    }
    return sm;
}

}  // namespace f2i
