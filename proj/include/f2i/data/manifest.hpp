#pragma once

#include <array>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "f2i/data/preset.hpp"
#include "f2i/data/synthetic.hpp"
#include "f2i/data/types.hpp"

namespace f2i {

struct ManifestRecord {
    std::string surface, image, caption;  // paths relative to the manifest root
    int subject = 0;
    std::string split = "train";  // "train" | "test"
    FactorSample factors;
};

struct Manifest {
    std::string root;  // directory holding manifest.json and the data files
    uint64_t seed = 0;
    std::string preset = "desk";
    nlohmann::json generator_params;
    std::vector<ManifestRecord> records;

    static Manifest load(const std::string& manifest_path);
    void save(const std::string& manifest_path) const;

    SurfaceMap load_surface(size_t i) const;
    ImageSample load_image(size_t i) const;
    Tensor load_caption(size_t i) const;
    PairedSample load_record(size_t i) const;

    std::vector<size_t> indices_with_split(const std::string& split) const;
    std::vector<int> subjects() const;

    /// Re-reads every referenced file (existence + parse).
    void verify_files() const;
};

/// Renders and writes a full synthetic dataset under out_dir and returns its
/// manifest. Pure function of (n, seed, preset, n_subjects, params): repeated
/// calls produce bit-identical files.
Manifest generate_synthetic_dataset(const std::string& out_dir, int n, uint64_t seed,
                                    const ScalePreset& preset, int n_subjects,
                                    const GeneratorParams& params = {});

/// Partitions a manifest around a held-out subject:
///   train  = everything except the holdout's test-tagged records,
///   refine = the holdout's train-tagged records,
///   test   = the holdout's test-tagged records.
/// Test-tagged records of other subjects (if any) stay in train, so the three
/// sets always cover the input exactly once.
std::array<Manifest, 3> split_by_subject(const Manifest& m, int holdout_subject);

}  // namespace f2i
