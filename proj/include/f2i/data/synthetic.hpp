#pragma once

#include <cstdint>
#include <string>

#include "f2i/core/rng.hpp"
#include "f2i/data/preset.hpp"
#include "f2i/data/types.hpp"

namespace f2i {

/// Knobs of the synthetic paired-data generator. The semantic factor is the
/// object class (shape + colour); the structural factors are position, size
/// and orientation. Captions embed the semantic factor only.
struct GeneratorParams {
    int classes = 4;
    double noise_sigma = 0.05;
    std::string normalization = "zscore";  // "zscore" | "none"
    int test_subject = -1;                 // -1: no test split
    int test_count = 0;                    // per generated manifest, taken from test_subject
};

struct FactorSample {
    int cls = 0;
    double cx = 0.5, cy = 0.5;  // centre, fraction of image side
    double scale = 0.2;         // radius, fraction of image side
    double theta = 0.0;         // orientation, radians
};

/// Factor vector [one-hot class..., cx', cy', scale', cos, sin] that drives
/// both the rendered image and the surface map.
std::vector<double> factor_vector(const FactorSample& f, int classes);
int factor_dim(int classes);

FactorSample sample_factors(Rng& rng, int classes);

/// Deterministic renderer: coloured geometric shape on a plain background.
ImageSample render_image(const FactorSample& f, int side);

/// Frozen caption embedding of a class id, [L_T, d_T]. Keyed by the class
/// alone (not the dataset seed) so separately generated manifests agree.
Tensor caption_embedding(int cls, const ScalePreset& preset);

/// Per-subject orthonormal mixing basis, rows are smooth random fields of
/// unit L2 norm scaled to unit aggregate pixel variance; [F, side*side].
/// Keyed by the subject alone so subjects are consistent across manifests.
Tensor subject_basis(int subject, int side, int classes);

SurfaceMap render_surface(const FactorSample& f, int subject, const Tensor& basis, int side,
                          const GeneratorParams& params, Rng& noise_rng);

}  // namespace f2i
