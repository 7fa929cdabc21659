#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "f2i/cli/commands.hpp"
#include "f2i/core/errors.hpp"

using namespace f2i;

namespace {

// Precedence is CLI > config file > preset defaults, so the config file is
// loaded before CLI11 writes any flag the user actually passed.
RunConfig preload_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return RunConfig::from_json_file(argv[i + 1]);
    return RunConfig{};
}

void add_common(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--config", "JSON config file (merged before flags)")->type_name("PATH");
    cmd->add_option("--preset", cfg.preset, "scale preset: desk | full")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
    cmd->add_option("--out", cfg.out, "output directory (under $F2I_RUN_ROOT when relative)");
}

void add_train_common(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--manifest", cfg.manifest, "dataset manifest.json");
    cmd->add_option("--iterations", cfg.iterations, "training iterations (-1: stage default)")
        ->capture_default_str();
    cmd->add_option("--batch", cfg.batch, "batch size")->capture_default_str();
    cmd->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--resume", cfg.resume, "checkpoint to resume mid-stage");
    cmd->add_option("--ckpt-every", cfg.ckpt_every, "periodic checkpoint interval (0: final only)")
        ->capture_default_str();
    cmd->add_option("--sample-every", cfg.sample_every, "sample-grid interval (0: off)")
        ->capture_default_str();
}

void add_ablation(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--encoder-mode", cfg.encoder_mode, "full | frozen | random-init | cls-only")
        ->capture_default_str();
    cmd->add_flag("!--no-llmn", cfg.use_llmn, "disable the low-level manipulation network");
    cmd->add_flag("!--no-auxiliary", cfg.use_auxiliary, "disable the auxiliary semantic branch");
    cmd->add_flag("!--no-semantic-loss", cfg.use_semantic_loss, "disable the semantic loss term");
    cmd->add_option("--lambda", cfg.lambda_sem, "semantic loss weight")->capture_default_str();
    cmd->add_option("--cfg-dropout", cfg.cfg_dropout, "unconditional-substitution probability")
        ->capture_default_str();
    cmd->add_option("--cfg-dropout-after", cfg.cfg_dropout_after,
                    "iteration from which CFG dropout is active")
        ->capture_default_str();
}

void add_decode_common(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--ckpt", cfg.ckpt, "stage-ii/iii checkpoint directory");
    cmd->add_option("--alpha", cfg.alpha, "control scale")->capture_default_str();
    cmd->add_option("--steps", cfg.steps, "DDIM steps")->capture_default_str();
    cmd->add_option("--guidance", cfg.guidance, "classifier-free guidance scale")
        ->capture_default_str();
    cmd->add_option("--split", cfg.split, "records to use: test | train | all")
        ->capture_default_str();
    cmd->add_option("--jobs", cfg.jobs, "decode worker pool size")->capture_default_str();
    cmd->add_flag("!--no-llmn", cfg.use_llmn, "decode without the control branch");
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    try {
        cfg = preload_config(argc, argv);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 2;
    }

    CLI::App app{"fmri2img: surface-map-to-image reconstruction via multi-level "
                 "conditioning of a latent diffusion model"};
    app.name("fmri2img");
    app.require_subcommand(1);
    app.footer("Relative --out paths are resolved under $F2I_RUN_ROOT when it is set.\n"
               "Exit codes: 0 ok, 2 usage, 3 data error, 4 training divergence, 5 checkpoint "
               "error.");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    add_common(gen, cfg);
    gen->add_option("--n", cfg.n, "number of records")->capture_default_str();
    gen->add_option("--subjects", cfg.subjects, "number of subjects")->capture_default_str();
    gen->add_option("--classes", cfg.classes, "semantic classes (2..6)")->capture_default_str();
    gen->add_option("--noise-sigma", cfg.noise_sigma, "surface noise level")
        ->capture_default_str();
    gen->add_option("--normalization", cfg.normalization, "surface normalization: zscore | none")
        ->capture_default_str();
    gen->add_option("--test-subject", cfg.test_subject, "subject whose tail records are test")
        ->capture_default_str();
    gen->add_option("--test-count", cfg.test_count, "test records on --test-subject")
        ->capture_default_str();

    auto* enc = app.add_subcommand("pretrain-encoder", "stage i: calibrated fMRI encoding");
    add_common(enc, cfg);
    add_train_common(enc, cfg);
    enc->add_option("--encoder-mode", cfg.encoder_mode, "full | random-init (init only)")
        ->capture_default_str();

    auto* bb = app.add_subcommand("pretrain-backbone",
                                  "train the latent-diffusion backbone (codec + denoiser) from "
                                  "scratch; stands in for pretrained diffusion weights");
    add_common(bb, cfg);
    add_train_common(bb, cfg);
    bb->add_option("--codec-iterations", cfg.codec_iterations, "codec training iterations")
        ->capture_default_str();
    bb->add_option("--codec-lr", cfg.codec_lr, "codec learning rate")->capture_default_str();
    bb->add_option("--unet-iterations", cfg.unet_iterations, "denoiser training iterations")
        ->capture_default_str();
    bb->add_option("--cfg-dropout", cfg.cfg_dropout, "unconditional-substitution probability")
        ->capture_default_str();

    auto* cross = app.add_subcommand("pretrain-cross", "stage ii: cross-subject pretraining");
    add_common(cross, cfg);
    add_train_common(cross, cfg);
    add_ablation(cross, cfg);
    cross->add_option("--encoder-ckpt", cfg.encoder_ckpt, "stage-i checkpoint");
    cross->add_option("--backbone-ckpt", cfg.backbone_ckpt, "backbone checkpoint");

    auto* ref = app.add_subcommand("refine", "stage iii: single-subject refining");
    add_common(ref, cfg);
    add_train_common(ref, cfg);
    add_ablation(ref, cfg);
    ref->add_option("--parent-ckpt", cfg.parent_ckpt, "stage-ii checkpoint");
    ref->add_option("--subject", cfg.subject, "subject id to refine on");
    ref->add_option("--ablation", cfg.ablation, "wo-pretrain: train refine-only");
    ref->add_option("--encoder-ckpt", cfg.encoder_ckpt, "stage-i checkpoint (wo-pretrain)");
    ref->add_option("--backbone-ckpt", cfg.backbone_ckpt, "backbone checkpoint (wo-pretrain)");

    auto* dec = app.add_subcommand("decode", "reconstruct images from surface maps");
    add_common(dec, cfg);
    add_decode_common(dec, cfg);
    dec->add_option("--manifest", cfg.manifest, "dataset manifest.json");

    auto* sweep = app.add_subcommand("sweep-alpha", "decode a grid over control scales");
    add_common(sweep, cfg);
    add_decode_common(sweep, cfg);
    sweep->add_option("--manifest", cfg.manifest, "dataset manifest.json");
    sweep->add_option("--alphas", cfg.alphas, "comma-separated control scales")
        ->capture_default_str();
    sweep->add_option("--n", cfg.n, "samples per alpha")->capture_default_str();
    sweep->add_option("--embedder", cfg.embedder, "pixel | latent | factor-probe")
        ->capture_default_str();

    auto* swap = app.add_subcommand("swap",
                                    "decode with semantics from one surface map and structure "
                                    "from another");
    add_common(swap, cfg);
    add_decode_common(swap, cfg);
    swap->add_option("--high-from", cfg.high_from, "surface map supplying semantics (.npb)");
    swap->add_option("--low-from", cfg.low_from, "surface map supplying structure (.npb)");

    auto* ev = app.add_subcommand("evaluate", "decode and score reconstructions");
    add_common(ev, cfg);
    add_decode_common(ev, cfg);
    ev->add_option("--manifest", cfg.manifest, "dataset manifest.json");
    ev->add_option("--embedder", cfg.embedder, "pixel | latent | factor-probe")
        ->capture_default_str();
    ev->add_option("--classes", cfg.classes, "semantic classes for the factor probes")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 2;
    }

    try {
        if (gen->parsed()) cmd_gen_data(cfg);
        else if (enc->parsed()) cmd_pretrain_encoder(cfg);
        else if (bb->parsed()) cmd_pretrain_backbone(cfg);
        else if (cross->parsed()) cmd_pretrain_cross(cfg);
        else if (ref->parsed()) cmd_refine(cfg);
        else if (dec->parsed()) cmd_decode(cfg);
        else if (sweep->parsed()) cmd_sweep_alpha(cfg);
        else if (swap->parsed()) cmd_swap(cfg);
        else if (ev->parsed()) cmd_evaluate(cfg);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: divergence: %s\n", e.what());
        return 4;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "error: checkpoint: %s\n", e.what());
        return 5;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
