#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>

namespace f2i {

/// Resolved run configuration shared by every CLI subcommand. Precedence:
/// command-line flags > config file > preset defaults. Unknown config-file
/// keys are rejected.
struct RunConfig {
    std::string preset = "desk";
    uint64_t seed = 0;
    std::string out;
    std::string manifest;
    std::string encoder_ckpt, backbone_ckpt, parent_ckpt, ckpt, resume;

    int64_t iterations = -1;  // -1: stage default (3000 pretrain / 1000 refine / 2000 encoder)
    int64_t codec_iterations = 1200;
    double codec_lr = 2e-3;
    int64_t unet_iterations = 2000;
    int batch = 16;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double lambda_sem = 0.1;
    double cfg_dropout = 0.05;
    int64_t cfg_dropout_after = 0;
    int64_t ckpt_every = 0;
    int64_t sample_every = 0;

    std::string encoder_mode = "full";  // full | frozen | random-init | cls-only
    bool use_llmn = true;
    bool use_auxiliary = true;
    bool use_semantic_loss = true;
    std::string ablation;  // "" | "wo-pretrain"

    int subject = -1;
    double alpha = 1.0;
    int steps = 50;
    double guidance = 5.0;
    std::string alphas = "0,0.25,0.5,0.75,1";
    std::string embedder = "pixel";
    std::string split = "test";
    int jobs = 1;

    int n = 16;
    int subjects = 4;
    int classes = 4;
    double noise_sigma = 0.05;
    std::string normalization = "zscore";
    int test_subject = -1;
    int test_count = 0;

    std::string high_from, low_from;

    static RunConfig from_json_file(const std::string& path);
    void merge_json(const nlohmann::json& j);  // unknown keys rejected
    nlohmann::json to_json() const;
};

}  // namespace f2i
