#include "f2i/eval/probes.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "f2i/core/errors.hpp"

namespace f2i {

RidgeProbe RidgeProbe::fit(const std::vector<std::vector<double>>& x,
                           const std::vector<std::vector<double>>& y, double lambda) {
    if (x.empty() || x.size() != y.size()) throw DataError("probe: bad training set");
    const int64_t n = static_cast<int64_t>(x.size());
    const int64_t d = static_cast<int64_t>(x[0].size());
    const int64_t k = static_cast<int64_t>(y[0].size());

    Eigen::MatrixXd X(n, d), Y(n, k);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) X(i, j) = x[static_cast<size_t>(i)][static_cast<size_t>(j)];
        for (int64_t j = 0; j < k; ++j) Y(i, j) = y[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    Eigen::RowVectorXd xm = X.colwise().mean();
    Eigen::RowVectorXd ym = Y.colwise().mean();
    X.rowwise() -= xm;
    Y.rowwise() -= ym;

    // dual ridge: alpha = (X X^T + lambda I)^-1 Y, W = X^T alpha
    Eigen::MatrixXd G = X * X.transpose();
    G.diagonal().array() += lambda;
    Eigen::MatrixXd alpha = G.ldlt().solve(Y);
    Eigen::MatrixXd W = X.transpose() * alpha;  // d x k

    RidgeProbe p;
    p.w.assign(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(d)));
    p.bias.assign(static_cast<size_t>(k), 0.0);
    for (int64_t j = 0; j < k; ++j) {
        for (int64_t i = 0; i < d; ++i) p.w[static_cast<size_t>(j)][static_cast<size_t>(i)] = W(i, j);
        p.bias[static_cast<size_t>(j)] = ym(j) - xm * W.col(j);
    }
    return p;
}

std::vector<double> RidgeProbe::apply(const std::vector<double>& x) const {
    std::vector<double> out(w.size());
    for (size_t j = 0; j < w.size(); ++j) {
        if (x.size() != w[j].size()) throw ShapeError("probe: feature dim mismatch");
        double s = bias[j];
        for (size_t i = 0; i < x.size(); ++i) s += w[j][i] * x[i];
        out[j] = s;
    }
    return out;
}

std::vector<double> flatten_image(const ImageSample& img) {
    std::vector<double> v(static_cast<size_t>(img.rgb.numel()));
    for (int64_t i = 0; i < img.rgb.numel(); ++i) v[static_cast<size_t>(i)] = img.rgb[i];
    return v;
}

std::vector<double> flatten_surface(const SurfaceMap& sm) {
    std::vector<double> v(static_cast<size_t>(sm.pixels.numel()));
    for (int64_t i = 0; i < sm.pixels.numel(); ++i) v[static_cast<size_t>(i)] = sm.pixels[i];
    return v;
}

RidgeProbe fit_class_probe(const std::vector<ImageSample>& images, const std::vector<int>& classes,
                           int n_classes, double lambda) {
    std::vector<std::vector<double>> x, y;
    for (size_t i = 0; i < images.size(); ++i) {
        x.push_back(flatten_image(images[i]));
        std::vector<double> onehot(static_cast<size_t>(n_classes), 0.0);
        onehot.at(static_cast<size_t>(classes[i])) = 1.0;
        y.push_back(std::move(onehot));
    }
    return RidgeProbe::fit(x, y, lambda);
}

int predict_class(const RidgeProbe& probe, const ImageSample& img) {
    auto scores = probe.apply(flatten_image(img));
    int best = 0;
    for (size_t j = 1; j < scores.size(); ++j)
        if (scores[j] > scores[static_cast<size_t>(best)]) best = static_cast<int>(j);
    return best;
}

RidgeProbe fit_position_probe(const std::vector<ImageSample>& images,
                              const std::vector<std::pair<double, double>>& centers,
                              double lambda) {
    std::vector<std::vector<double>> x, y;
    for (size_t i = 0; i < images.size(); ++i) {
        x.push_back(flatten_image(images[i]));
        y.push_back({centers[i].first, centers[i].second});
    }
    return RidgeProbe::fit(x, y, lambda);
}

std::pair<double, double> predict_position(const RidgeProbe& probe, const ImageSample& img) {
    auto p = probe.apply(flatten_image(img));
    return {p[0], p[1]};
}

double r_squared(const std::vector<double>& predicted, const std::vector<double>& target) {
    if (predicted.size() != target.size() || predicted.empty())
        throw DataError("r_squared: size mismatch");
    double mean = 0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(target.size());
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < target.size(); ++i) {
        ss_res += (target[i] - predicted[i]) * (target[i] - predicted[i]);
        ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    if (ss_tot <= 0) throw DataError("r_squared: zero-variance target");
    return 1.0 - ss_res / ss_tot;
}

}  // namespace f2i
