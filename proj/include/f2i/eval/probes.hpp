#pragma once

#include <vector>

#include "f2i/data/types.hpp"

namespace f2i {

/// Linear ridge regression fitted in the dual (kernel) form, so wide inputs
/// (raw pixels) with few samples stay cheap. Used as the synthetic
/// factor-probe family: class probe (one-vs-all) and position probe.
struct RidgeProbe {
    std::vector<std::vector<double>> w;  // [k][d]
    std::vector<double> bias;            // [k]

    static RidgeProbe fit(const std::vector<std::vector<double>>& x,
                          const std::vector<std::vector<double>>& y, double lambda = 1e-3);

    std::vector<double> apply(const std::vector<double>& x) const;
};

std::vector<double> flatten_image(const ImageSample& img);
std::vector<double> flatten_surface(const SurfaceMap& sm);

/// One-vs-all class probe on image pixels.
RidgeProbe fit_class_probe(const std::vector<ImageSample>& images, const std::vector<int>& classes,
                           int n_classes, double lambda = 1e-3);
int predict_class(const RidgeProbe& probe, const ImageSample& img);

/// (cx, cy) position probe on image pixels.
RidgeProbe fit_position_probe(const std::vector<ImageSample>& images,
                              const std::vector<std::pair<double, double>>& centers,
                              double lambda = 1e-3);
std::pair<double, double> predict_position(const RidgeProbe& probe, const ImageSample& img);

/// Coefficient of determination of predictions against targets.
double r_squared(const std::vector<double>& predicted, const std::vector<double>& target);

}  // namespace f2i
