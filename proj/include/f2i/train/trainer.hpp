#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "f2i/core/optim.hpp"
#include "f2i/data/manifest.hpp"
#include "f2i/train/checkpoint.hpp"
#include "f2i/train/pipeline.hpp"

namespace f2i {

struct StagePlan {
    Stage stage = Stage::cross_subject_pretrain;
    int64_t iterations = 3000;  // desk defaults: 3k pretrain / 1k refine
    int batch = 16;
    std::string manifest_path;
    std::string parent_ckpt;     // stage-ii ckpt for stage iii (unless w/o-pretrain)
    int64_t ckpt_every = 0;      // 0: final checkpoint only
    int64_t sample_every = 0;    // 0: no sample grids
};

struct OptimizerConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    // lr == 0 is allowed: it must leave parameters bit-identical (used by
    // the no-update contract checks)
    void validate() const {
        if (!(lr >= 0)) throw UsageError("optimizer: lr must be >= 0");
        if (!(weight_decay >= 0)) throw UsageError("optimizer: weight decay must be >= 0");
    }
};

struct TrainOutput {
    std::string ckpt_dir;
    std::vector<std::array<double, 4>> trace;  // iteration, L_dif, L_sem, L
};

/// Per-iteration randomness, all derived from (seed, iteration) so a resumed
/// run replays the exact stream of an unbroken one.
struct StepDraws {
    std::vector<int64_t> indices;
    std::vector<int> ts;
    std::vector<bool> drop;  // CFG dropout: substitute the unconditional embedding
};
StepDraws draw_step(uint64_t seed, int64_t it, int batch, int64_t n_records, int T,
                    const LossWeights& w);
Tensor draw_eps(uint64_t seed, int64_t it, const std::vector<int64_t>& shape);

/// All records of a manifest resident in memory.
struct DatasetCache {
    std::vector<Tensor> surfaces, images, captions;
    std::vector<int> classes, subjects;
    explicit DatasetCache(const Manifest& m);
    int64_t size() const { return static_cast<int64_t>(surfaces.size()); }
};

/// Stage i: masked-autoencoder pretraining of the calibrated encoder.
TrainOutput train_calibrated_encoder(const Manifest& data, const ScalePreset& preset,
                                     int64_t iterations, int batch, OptimizerConfig opt,
                                     uint64_t seed, const std::string& run_dir,
                                     WeightInit init = WeightInit::trunc_normal,
                                     const std::string& resume_ckpt = "");

/// One MAE optimization step on a surface batch; returns the pre-update loss.
double pretrain_step(CalibratedEncoder& mae, AdamW& opt, const Tensor& surfaces);

/// Backbone preparation: trains the image codec, fixes the latent scale,
/// then trains the denoiser U-Net on caption conditioning (with CFG
/// dropout). Stands in for loading pretrained diffusion weights; the result
/// is frozen during stages ii/iii.
TrainOutput train_backbone(const Manifest& data, const ScalePreset& preset, int64_t codec_iters,
                           int64_t unet_iters, int batch, OptimizerConfig opt,
                           const LossWeights& weights, uint64_t seed, const std::string& run_dir,
                           double codec_lr = 2e-3);

/// Assemble a pipeline for stage ii/iii: load parents, initialize the
/// control branch from the frozen backbone encoder when fresh.
std::unique_ptr<Pipeline> build_stage_pipeline(const ScalePreset& preset,
                                               const AblationFlags& flags, const StagePlan& plan,
                                               const std::string& encoder_ckpt,
                                               const std::string& backbone_ckpt, uint64_t seed);

/// Stages ii/iii: joint training of encoder (per flags), HLGN and LLMN under
/// the composite objective, backbone and codec locked.
TrainOutput train_stage(Pipeline& p, const Manifest& data, const StagePlan& plan,
                        const LossWeights& weights, OptimizerConfig opt, uint64_t seed,
                        const std::string& run_dir, const std::string& resume_ckpt = "");

}  // namespace f2i
