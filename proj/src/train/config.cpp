#include "f2i/train/config.hpp"

#include <fstream>

#include "f2i/core/errors.hpp"

namespace f2i {

using json = nlohmann::json;

namespace {
template <class T>
void pick(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

void RunConfig::merge_json(const json& j) {
    static const char* known[] = {
        "preset", "seed", "out", "manifest", "encoder_ckpt", "backbone_ckpt", "parent_ckpt",
        "ckpt", "resume", "iterations", "codec_iterations", "unet_iterations", "codec_lr", "batch", "lr",
        "weight_decay", "lambda_sem", "cfg_dropout", "cfg_dropout_after", "ckpt_every",
        "sample_every", "encoder_mode", "use_llmn", "use_auxiliary", "use_semantic_loss",
        "ablation", "subject", "alpha", "steps", "guidance", "alphas", "embedder", "split",
        "jobs", "n", "subjects", "classes", "noise_sigma", "normalization", "test_subject",
        "test_count", "high_from", "low_from"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw UsageError("config: unknown key '" + it.key() + "'");
    }
    pick(j, "preset", preset);
    pick(j, "seed", seed);
    pick(j, "out", out);
    pick(j, "manifest", manifest);
    pick(j, "encoder_ckpt", encoder_ckpt);
    pick(j, "backbone_ckpt", backbone_ckpt);
    pick(j, "parent_ckpt", parent_ckpt);
    pick(j, "ckpt", ckpt);
    pick(j, "resume", resume);
    pick(j, "iterations", iterations);
    pick(j, "codec_iterations", codec_iterations);
    pick(j, "codec_lr", codec_lr);
    pick(j, "unet_iterations", unet_iterations);
    pick(j, "batch", batch);
    pick(j, "lr", lr);
    pick(j, "weight_decay", weight_decay);
    pick(j, "lambda_sem", lambda_sem);
    pick(j, "cfg_dropout", cfg_dropout);
    pick(j, "cfg_dropout_after", cfg_dropout_after);
    pick(j, "ckpt_every", ckpt_every);
    pick(j, "sample_every", sample_every);
    pick(j, "encoder_mode", encoder_mode);
    pick(j, "use_llmn", use_llmn);
    pick(j, "use_auxiliary", use_auxiliary);
    pick(j, "use_semantic_loss", use_semantic_loss);
    pick(j, "ablation", ablation);
    pick(j, "subject", subject);
    pick(j, "alpha", alpha);
    pick(j, "steps", steps);
    pick(j, "guidance", guidance);
    pick(j, "alphas", alphas);
    pick(j, "embedder", embedder);
    pick(j, "split", split);
    pick(j, "jobs", jobs);
    pick(j, "n", n);
    pick(j, "subjects", subjects);
    pick(j, "classes", classes);
    pick(j, "noise_sigma", noise_sigma);
    pick(j, "normalization", normalization);
    pick(j, "test_subject", test_subject);
    pick(j, "test_count", test_count);
    pick(j, "high_from", high_from);
    pick(j, "low_from", low_from);
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: bad JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.merge_json(j);
    return cfg;
}

json RunConfig::to_json() const {
    return json{{"preset", preset},
                {"seed", seed},
                {"out", out},
                {"manifest", manifest},
                {"encoder_ckpt", encoder_ckpt},
                {"backbone_ckpt", backbone_ckpt},
                {"parent_ckpt", parent_ckpt},
                {"ckpt", ckpt},
                {"resume", resume},
                {"iterations", iterations},
                {"codec_iterations", codec_iterations},
                {"codec_lr", codec_lr},
                {"unet_iterations", unet_iterations},
                {"batch", batch},
                {"lr", lr},
                {"weight_decay", weight_decay},
                {"lambda_sem", lambda_sem},
                {"cfg_dropout", cfg_dropout},
                {"cfg_dropout_after", cfg_dropout_after},
                {"ckpt_every", ckpt_every},
                {"sample_every", sample_every},
                {"encoder_mode", encoder_mode},
                {"use_llmn", use_llmn},
                {"use_auxiliary", use_auxiliary},
                {"use_semantic_loss", use_semantic_loss},
                {"ablation", ablation},
                {"subject", subject},
                {"alpha", alpha},
                {"steps", steps},
                {"guidance", guidance},
                {"alphas", alphas},
                {"embedder", embedder},
                {"split", split},
                {"jobs", jobs},
                {"n", n},
                {"subjects", subjects},
                {"classes", classes},
                {"noise_sigma", noise_sigma},
                {"normalization", normalization},
                {"test_subject", test_subject},
                {"test_count", test_count},
                {"high_from", high_from},
                {"low_from", low_from}};
}

}  // namespace f2i
