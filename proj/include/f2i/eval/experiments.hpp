#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "f2i/data/manifest.hpp"
#include "f2i/eval/embedder.hpp"
#include "f2i/eval/metrics.hpp"
#include "f2i/train/pipeline.hpp"

namespace f2i {

/// Per-metric aggregate plus per-sample breakdown and run metadata.
struct MetricReport {
    nlohmann::json metadata;
    double pixcorr_mean = 0, ssim_mean = 0, two_way = 0, distance = 0;
    double semantic_probe_accuracy = -1;  // -1: probes unavailable
    double position_probe_rmse = -1;
    std::vector<nlohmann::json> per_sample;

    nlohmann::json to_json() const;
    std::string table() const;  // text table, Low-Level / High-Level grouping
};

/// Deterministic per-record decode; the per-sample seed is derived from
/// (base seed, record index) and is independent of alpha, so control-scale
/// sweeps reuse identical noise.
std::vector<ImageSample> decode_records(const Pipeline& p, const Manifest& m,
                                        const std::vector<size_t>& indices,
                                        const DecodeOptions& base);

struct ProbePair {
    RidgeProbe cls, pos;
    int n_classes = 0;
    bool valid = false;
};
/// Fit factor probes on ground-truth renders of the given records.
ProbePair fit_probes(const Manifest& m, const std::vector<size_t>& indices, int n_classes);

MetricReport evaluate_records(const Pipeline& p, const Manifest& m,
                              const std::vector<size_t>& eval_indices,
                              const std::vector<ImageSample>& decoded,
                              const std::string& embedder_name, const ProbePair& probes,
                              nlohmann::json metadata);

/// Decode every sample once per alpha with identical per-sample seeds; emit
/// a grid ordered by alpha plus one MetricReport per alpha.
struct SweepResult {
    std::vector<double> alphas;
    std::vector<MetricReport> reports;
    Tensor grid;  // rows: alpha, cols: samples
};
SweepResult control_scale_sweep(const Pipeline& p, const Manifest& m,
                                const std::vector<size_t>& indices,
                                const std::vector<double>& alphas, const DecodeOptions& base,
                                const std::string& embedder_name, const ProbePair& probes);

/// Decode with the semantic condition from sample_a and the low-level branch
/// driven by sample_b.
ImageSample feature_swap(const Pipeline& p, const SurfaceMap& sample_a, const SurfaceMap& sample_b,
                         const DecodeOptions& opt);

}  // namespace f2i
