#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "f2i/core/tensor.hpp"
#include "f2i/train/pipeline.hpp"

namespace f2i {

// Checkpoint layout: <dir>/index.json plus one array file per parameter
// (and per optimizer moment) under <dir>/params/ and <dir>/opt/.

struct CheckpointMeta {
    std::string kind;  // calibrated_encoding | backbone | cross_subject_pretrain | single_subject_refine
    std::string preset;
    int64_t iteration = 0;
    nlohmann::json extra;  // latent_scale, parent refs, flags echo...
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& dir, const NamedTensors& params, const NamedTensors& opt_m,
                     const NamedTensors& opt_v, int64_t opt_steps, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> opt_m, opt_v;
    int64_t opt_steps = 0;

    const Tensor& param(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) != 0; }
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

/// Copy checkpoint parameters into the pipeline for every pipeline parameter
/// whose name starts with one of the prefixes. Missing names or shape
/// mismatches raise CheckpointError; a preset mismatch always does.
void apply_to_pipeline(Pipeline& p, const LoadedCheckpoint& ckpt,
                       const std::vector<std::string>& prefixes);

/// Extract (prefix-filtered) named parameter values from the pipeline.
NamedTensors pipeline_params(const Pipeline& p, const std::vector<std::string>& prefixes = {});

}  // namespace f2i
