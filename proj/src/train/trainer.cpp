#include "f2i/train/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "f2i/eval/image_io.hpp"

namespace f2i {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr uint64_t kStepStream = 0x57e9;
constexpr uint64_t kEpsStream = 0x0e95;

void write_trace(const std::string& run_dir,
                 const std::vector<std::array<double, 4>>& trace) {
    std::ofstream f((fs::path(run_dir) / "loss.csv").string(), std::ios::trunc);
    f << "iteration,loss_dif,loss_sem,loss_total\n";
    for (const auto& row : trace)
        f << static_cast<int64_t>(row[0]) << "," << row[1] << "," << row[2] << "," << row[3]
          << "\n";
}

void write_config_echo(const std::string& run_dir, const json& j) {
    std::ofstream f((fs::path(run_dir) / "train_config.json").string(), std::ios::trunc);
    f << j.dump(1) << "\n";
}

Tensor gather_batch(const std::vector<Tensor>& pool, const std::vector<int64_t>& idx) {
    std::vector<int64_t> shape = pool[0].shape();
    shape.insert(shape.begin(), static_cast<int64_t>(idx.size()));
    Tensor out(shape);
    int64_t per = pool[0].numel();
    for (size_t b = 0; b < idx.size(); ++b)
        std::copy(pool[static_cast<size_t>(idx[b])].data(),
                  pool[static_cast<size_t>(idx[b])].data() + per,
                  out.data() + static_cast<int64_t>(b) * per);
    return out;
}

NamedTensors moments_named(const std::vector<std::pair<std::string, Var>>& named,
                           const std::vector<Var>& opt_params, std::vector<Tensor>& moments) {
    NamedTensors out;
    for (size_t i = 0; i < opt_params.size(); ++i) {
        for (const auto& [n, v] : named)
            if (v == opt_params[i]) {
                out.emplace_back(n, moments[i]);
                break;
            }
    }
    return out;
}

void restore_optimizer(AdamW& opt, const std::vector<std::pair<std::string, Var>>& named,
                       const LoadedCheckpoint& ckpt) {
    auto& m = opt.moments_m();
    auto& v = opt.moments_v();
    const auto& ps = opt.params();
    for (size_t i = 0; i < ps.size(); ++i) {
        std::string name;
        for (const auto& [n, var] : named)
            if (var == ps[i]) name = n;
        auto im = ckpt.opt_m.find(name);
        auto iv = ckpt.opt_v.find(name);
        if (im == ckpt.opt_m.end() || iv == ckpt.opt_v.end())
            throw CheckpointError("checkpoint: missing optimizer state for '" + name + "'");
        if (!im->second.same_shape(m[i]))
            throw CheckpointError("checkpoint: optimizer shape mismatch for '" + name + "'");
        m[i] = im->second;
        v[i] = iv->second;
    }
    opt.set_steps_taken(ckpt.opt_steps);
}

}  // namespace

StepDraws draw_step(uint64_t seed, int64_t it, int batch, int64_t n_records, int T,
                    const LossWeights& w) {
    Rng rng = Rng::keyed(seed, kStepStream, static_cast<uint64_t>(it));
    StepDraws d;
    d.indices.resize(static_cast<size_t>(batch));
    d.ts.resize(static_cast<size_t>(batch));
    d.drop.resize(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) d.indices[static_cast<size_t>(b)] = rng.below(n_records);
    for (int b = 0; b < batch; ++b) d.ts[static_cast<size_t>(b)] = static_cast<int>(rng.below(T));
    bool active = it >= w.cfg_dropout_after;
    for (int b = 0; b < batch; ++b)
        d.drop[static_cast<size_t>(b)] = active && rng.uniform() < w.cfg_dropout;
    return d;
}

Tensor draw_eps(uint64_t seed, int64_t it, const std::vector<int64_t>& shape) {
    Rng rng = Rng::keyed(seed, kEpsStream, static_cast<uint64_t>(it));
    Tensor eps(shape);
    rng.fill_normal(eps);
    return eps;
}

DatasetCache::DatasetCache(const Manifest& m) {
    if (m.records.empty()) throw DataError("trainer: empty manifest");
    for (size_t i = 0; i < m.records.size(); ++i) {
        surfaces.push_back(m.load_surface(i).pixels);
        images.push_back(m.load_image(i).rgb);
        captions.push_back(m.load_caption(i));
        classes.push_back(m.records[i].factors.cls);
        subjects.push_back(m.records[i].subject);
    }
}

double pretrain_step(CalibratedEncoder& mae, AdamW& opt, const Tensor& surfaces) {
    Graph g;
    auto surf = Graph::leaf(surfaces);
    auto latent = mae.encode(g, surf);
    auto recon = mae.decode(g, latent);
    auto loss = reconstruction_loss(g, surf, recon);
    double lv = loss->val[0];
    if (!std::isfinite(lv)) throw DivergenceError("pretrain_step: non-finite loss");
    opt.zero_grad();
    g.backward(loss);
    opt.step();
    return lv;
}

TrainOutput train_calibrated_encoder(const Manifest& data, const ScalePreset& preset,
                                     int64_t iterations, int batch, OptimizerConfig opt_cfg,
                                     uint64_t seed, const std::string& run_dir, WeightInit init,
                                     const std::string& resume_ckpt) {
    opt_cfg.validate();
    preset.validate();
    fs::create_directories(run_dir);
    DatasetCache cache(data);

    EncoderConfig ecfg = EncoderConfig::from_preset(preset);
    ecfg.init = init;
    Rng init_rng = Rng::keyed(seed, 0x1217);
    CalibratedEncoder mae(ecfg, init_rng);

    std::vector<std::pair<std::string, Var>> named;
    for (const auto& [n, v] : mae.params.items) named.emplace_back("mae." + n, v);
    std::vector<Var> train_params;
    for (auto& [n, v] : named) {
        v->needs_grad = true;
        train_params.push_back(v);
    }
    AdamW opt(train_params, opt_cfg.lr, opt_cfg.weight_decay);

    int64_t start_it = 0;
    if (!resume_ckpt.empty()) {
        auto ckpt = load_checkpoint(resume_ckpt);
        if (ckpt.meta.preset != preset.name) throw CheckpointError("checkpoint: preset mismatch");
        for (auto& [n, v] : named) {
            const Tensor& t = ckpt.param(n);
            if (!t.same_shape(v->val)) throw CheckpointError("checkpoint: shape mismatch: " + n);
            v->val = t;
        }
        restore_optimizer(opt, named, ckpt);
        start_it = ckpt.meta.iteration;
    }

    write_config_echo(run_dir, {{"stage", "calibrated_encoding"},
                                {"iterations", iterations},
                                {"batch", batch},
                                {"lr", opt_cfg.lr},
                                {"weight_decay", opt_cfg.weight_decay},
                                {"seed", seed}});

    TrainOutput out;
    LossWeights no_drop;
    no_drop.cfg_dropout = 0.0;
    for (int64_t it = start_it; it < iterations; ++it) {
        StepDraws d = draw_step(seed, it, batch, cache.size(), 1, no_drop);
        Tensor surf = gather_batch(cache.surfaces, d.indices);
        double lv;
        try {
            lv = pretrain_step(mae, opt, surf);
        } catch (const DivergenceError&) {
            throw DivergenceError("calibrated encoding diverged at iteration " +
                                  std::to_string(it));
        }
        out.trace.push_back({static_cast<double>(it), lv, 0.0, lv});
    }

    write_trace(run_dir, out.trace);
    NamedTensors params;
    for (const auto& [n, v] : named) params.emplace_back(n, v->val);
    CheckpointMeta meta{"calibrated_encoding", preset.name, iterations, json::object()};
    std::string ckpt_dir = (fs::path(run_dir) / "ckpt").string();
    save_checkpoint(ckpt_dir, params, moments_named(named, opt.params(), opt.moments_m()),
                    moments_named(named, opt.params(), opt.moments_v()), opt.steps_taken(), meta);
    out.ckpt_dir = ckpt_dir;
    return out;
}

TrainOutput train_backbone(const Manifest& data, const ScalePreset& preset, int64_t codec_iters,
                           int64_t unet_iters, int batch, OptimizerConfig opt_cfg,
                           const LossWeights& weights, uint64_t seed, const std::string& run_dir,
                           double codec_lr) {
    opt_cfg.validate();
    weights.validate();
    preset.validate();
    fs::create_directories(run_dir);
    DatasetCache cache(data);

    Rng init_rng = Rng::keyed(seed, 0x1218);
    Codec codec(CodecConfig::from_preset(preset), init_rng);
    UNet unet(UNetConfig::from_preset(preset), init_rng);
    NoiseSchedule sched = NoiseSchedule::from_preset(preset);

    write_config_echo(run_dir, {{"stage", "backbone"},
                                {"codec_iterations", codec_iters},
                                {"unet_iterations", unet_iters},
                                {"batch", batch},
                                {"lr", opt_cfg.lr},
                                {"weight_decay", opt_cfg.weight_decay},
                                {"cfg_dropout", weights.cfg_dropout},
                                {"seed", seed}});

    TrainOutput out;
    LossWeights no_drop;
    no_drop.cfg_dropout = 0.0;

    // phase A: codec on plain pixel MSE
    {
        std::vector<Var> ps;
        for (auto& [n, v] : codec.params.items) {
            v->needs_grad = true;
            ps.push_back(v);
        }
        AdamW opt(ps, codec_lr, 0.0);
        for (int64_t it = 0; it < codec_iters; ++it) {
            StepDraws d = draw_step(seed ^ 0xc0dec, it, batch, cache.size(), 1, no_drop);
            Tensor imgs = gather_batch(cache.images, d.indices);
            Graph g;
            auto x = Graph::leaf(imgs);
            auto recon = codec.decode(g, codec.encode(g, x));
            auto loss = ops::mse_mean(g, x, recon);
            double lv = loss->val[0];
            if (!std::isfinite(lv))
                throw DivergenceError("codec training diverged at iteration " + std::to_string(it));
            opt.zero_grad();
            g.backward(loss);
            opt.step();
            out.trace.push_back({static_cast<double>(it), lv, 0.0, lv});
        }
        for (auto& [n, v] : codec.params.items) v->needs_grad = false;
    }

    // latent scale: unit variance over the training latents
    float latent_scale = 1.0f;
    {
        double ss = 0;
        int64_t cnt = 0;
        for (int64_t i = 0; i < cache.size(); ++i) {
            Tensor z = codec.encode_t(cache.images[static_cast<size_t>(i)].reshaped(
                {1, 3, preset.image_side, preset.image_side}));
            for (int64_t j = 0; j < z.numel(); ++j) ss += static_cast<double>(z[j]) * z[j];
            cnt += z.numel();
        }
        double std = std::sqrt(ss / static_cast<double>(cnt));
        if (std > 1e-8) latent_scale = static_cast<float>(1.0 / std);
    }

    // phase B: denoiser on caption conditioning (the CFG-capable prior)
    {
        std::vector<Var> ps;
        for (auto& [n, v] : unet.params.items) {
            v->needs_grad = true;
            ps.push_back(v);
        }
        AdamW opt(ps, opt_cfg.lr, opt_cfg.weight_decay);
        std::vector<int64_t> zshape = {batch, preset.latent_c, preset.latent_h, preset.latent_w};
        for (int64_t it = 0; it < unet_iters; ++it) {
            StepDraws d = draw_step(seed ^ 0xb0e, it, batch, cache.size(), sched.T, weights);
            Tensor imgs = gather_batch(cache.images, d.indices);
            Tensor z0 = codec.encode_t(imgs);
            for (int64_t j = 0; j < z0.numel(); ++j) z0[j] *= latent_scale;
            Tensor eps = draw_eps(seed ^ 0xb0e, it, zshape);
            Tensor z_t = add_noise_batch(z0, d.ts, eps, sched);

            Tensor ctx({static_cast<int64_t>(batch), preset.text_tokens, preset.text_dim});
            int64_t per = static_cast<int64_t>(preset.text_tokens) * preset.text_dim;
            for (int b = 0; b < batch; ++b) {
                if (d.drop[static_cast<size_t>(b)]) continue;  // zeros = empty caption
                const Tensor& c = cache.captions[static_cast<size_t>(d.indices[static_cast<size_t>(b)])];
                std::copy(c.data(), c.data() + per, ctx.data() + b * per);
            }

            Graph g;
            auto eps_hat = unet.denoise(g, Graph::leaf(z_t), d.ts, Graph::leaf(ctx), nullptr, 1.0);
            auto loss = ops::mse_mean(g, Graph::leaf(eps), eps_hat);
            double lv = loss->val[0];
            if (!std::isfinite(lv))
                throw DivergenceError("backbone training diverged at iteration " +
                                      std::to_string(it));
            opt.zero_grad();
            g.backward(loss);
            opt.step();
            out.trace.push_back({static_cast<double>(codec_iters + it), lv, 0.0, lv});
        }
    }

    write_trace(run_dir, out.trace);
    NamedTensors params;
    for (const auto& [n, v] : unet.params.items) params.emplace_back("unet." + n, v->val);
    for (const auto& [n, v] : codec.params.items) params.emplace_back("codec." + n, v->val);
    CheckpointMeta meta{"backbone", preset.name, codec_iters + unet_iters,
                        {{"latent_scale", latent_scale}}};
    std::string ckpt_dir = (fs::path(run_dir) / "ckpt").string();
    save_checkpoint(ckpt_dir, params, {}, {}, 0, meta);
    out.ckpt_dir = ckpt_dir;
    return out;
}

std::unique_ptr<Pipeline> build_stage_pipeline(const ScalePreset& preset,
                                               const AblationFlags& flags, const StagePlan& plan,
                                               const std::string& encoder_ckpt,
                                               const std::string& backbone_ckpt, uint64_t seed) {
    if (plan.stage == Stage::calibrated_encoding)
        throw UsageError("build_stage_pipeline: stage i uses train_calibrated_encoder");
    if (plan.stage == Stage::single_subject_refine && plan.parent_ckpt.empty() &&
        backbone_ckpt.empty())
        throw UsageError(
            "refine requires a stage-ii parent checkpoint (or the w/o-pretrain ablation with a "
            "backbone checkpoint)");
    if (plan.stage == Stage::cross_subject_pretrain && !plan.parent_ckpt.empty() &&
        backbone_ckpt.empty() && encoder_ckpt.empty()) {
        // resuming stage ii from its own checkpoint: parents embedded
    }

    auto p = std::make_unique<Pipeline>(preset, flags, seed);

    if (!plan.parent_ckpt.empty()) {
        auto parent = load_checkpoint(plan.parent_ckpt);
        if (plan.stage == Stage::single_subject_refine &&
            parent.meta.kind != "cross_subject_pretrain" && parent.meta.kind != "single_subject_refine")
            throw CheckpointError("refine: parent must be a stage-ii checkpoint, got kind '" +
                                  parent.meta.kind + "'");
        apply_to_pipeline(*p, parent, {});
        return p;
    }

    // fresh conditioning stage: backbone required; encoder unless random_init
    if (backbone_ckpt.empty())
        throw UsageError("stage requires a backbone checkpoint (pretrain-backbone)");
    auto bb = load_checkpoint(backbone_ckpt);
    if (bb.meta.kind != "backbone")
        throw CheckpointError("expected a backbone checkpoint, got kind '" + bb.meta.kind + "'");
    apply_to_pipeline(*p, bb, {"unet.", "codec."});

    if (flags.encoder_mode != EncoderMode::random_init) {
        if (encoder_ckpt.empty())
            throw UsageError("stage requires an encoder checkpoint unless the random-init "
                             "ablation is selected");
        auto enc = load_checkpoint(encoder_ckpt);
        if (enc.meta.kind != "calibrated_encoding")
            throw CheckpointError("expected a calibrated-encoding checkpoint, got kind '" +
                                  enc.meta.kind + "'");
        apply_to_pipeline(*p, enc, {"mae."});
    }

    p->control.copy_core_from(p->unet);
    return p;
}

TrainOutput train_stage(Pipeline& p, const Manifest& data, const StagePlan& plan,
                        const LossWeights& weights, OptimizerConfig opt_cfg, uint64_t seed,
                        const std::string& run_dir, const std::string& resume_ckpt) {
    if (plan.stage == Stage::calibrated_encoding)
        throw UsageError("train_stage handles stages ii/iii only");
    opt_cfg.validate();
    weights.validate();
    fs::create_directories(run_dir);
    DatasetCache cache(data);

    auto named = p.named_params();
    auto train_params = p.configure_trainable(plan.stage);
    if (train_params.empty()) throw UsageError("train_stage: nothing to train under these flags");
    AdamW opt(train_params, opt_cfg.lr, opt_cfg.weight_decay);

    int64_t start_it = 0;
    if (!resume_ckpt.empty()) {
        auto ckpt = load_checkpoint(resume_ckpt);
        apply_to_pipeline(p, ckpt, {});
        restore_optimizer(opt, named, ckpt);
        start_it = ckpt.meta.iteration;
    }

    write_config_echo(run_dir, {{"stage", stage_name(plan.stage)},
                                {"iterations", plan.iterations},
                                {"batch", plan.batch},
                                {"lr", opt_cfg.lr},
                                {"weight_decay", opt_cfg.weight_decay},
                                {"lambda_sem", weights.lambda_sem},
                                {"cfg_dropout", weights.cfg_dropout},
                                {"cfg_dropout_after", weights.cfg_dropout_after},
                                {"seed", seed}});

    const int B = plan.batch;
    const int64_t per_ctx = static_cast<int64_t>(p.preset.text_tokens) * p.preset.text_dim;
    std::vector<int64_t> zshape = {B, p.preset.latent_c, p.preset.latent_h, p.preset.latent_w};

    auto save = [&](int64_t iteration, const std::string& dir) {
        NamedTensors params;
        for (const auto& [n, v] : named) params.emplace_back(n, v->val);
        CheckpointMeta meta{stage_name(plan.stage), p.preset.name, iteration,
                            {{"latent_scale", p.latent_scale},
                             {"encoder_mode", static_cast<int>(p.flags.encoder_mode)},
                             {"use_llmn", p.flags.use_llmn},
                             {"use_auxiliary", p.flags.use_auxiliary},
                             {"use_semantic_loss", p.flags.use_semantic_loss}}};
        save_checkpoint(dir, params, moments_named(named, opt.params(), opt.moments_m()),
                        moments_named(named, opt.params(), opt.moments_v()), opt.steps_taken(),
                        meta);
    };

    TrainOutput out;
    for (int64_t it = start_it; it < plan.iterations; ++it) {
        StepDraws d = draw_step(seed, it, B, cache.size(), p.sched.T, weights);

        Tensor surf = gather_batch(cache.surfaces, d.indices);
        Tensor imgs = gather_batch(cache.images, d.indices);
        Tensor z0 = p.image_to_latent(imgs);
        Tensor eps = draw_eps(seed, it, zshape);
        Tensor z_t = add_noise_batch(z0, d.ts, eps, p.sched);

        Tensor captions({B, p.preset.text_tokens, p.preset.text_dim});
        Tensor keep_mask({B, p.preset.text_tokens, p.preset.text_dim});
        for (int b = 0; b < B; ++b) {
            const Tensor& c = cache.captions[static_cast<size_t>(d.indices[static_cast<size_t>(b)])];
            std::copy(c.data(), c.data() + per_ctx, captions.data() + b * per_ctx);
            float keep = d.drop[static_cast<size_t>(b)] ? 0.0f : 1.0f;
            std::fill(keep_mask.data() + b * per_ctx, keep_mask.data() + (b + 1) * per_ctx, keep);
        }

        Graph g;
        auto latent = p.encode_latent(g, Graph::leaf(surf));
        auto f_txt = p.hlgn.fmri_to_text(g, latent);
        auto f_sem = p.flags.use_auxiliary
                         ? Hlgn::combine(g, f_txt, p.hlgn.auxiliary_encode(g, latent))
                         : f_txt;
        // CFG dropout replaces the semantic condition the denoiser sees with
        // the unconditional (zero) embedding; the semantic loss still targets
        // the true caption.
        auto f_used = ops::mul(g, f_sem, Graph::leaf(keep_mask));

        auto z_leaf = Graph::leaf(z_t);
        VarT<float> eps_hat;
        if (p.flags.use_llmn) {
            auto seed_map = p.ft(g, latent);
            auto maps = p.control.forward(g, z_leaf, seed_map, d.ts, f_used);
            eps_hat = p.unet.denoise(g, z_leaf, d.ts, f_used, &maps, 1.0);
        } else {
            eps_hat = p.unet.denoise(g, z_leaf, d.ts, f_used, nullptr, 1.0);
        }

        auto l_dif = ops::mse_mean(g, Graph::leaf(eps), eps_hat);
        auto l_sem = semantic_loss(g, Graph::leaf(captions), f_txt);
        auto loss = p.flags.use_semantic_loss
                        ? total_loss(g, l_dif, l_sem, weights.lambda_sem)
                        : l_dif;

        double lv = loss->val[0];
        if (!std::isfinite(lv))
            throw DivergenceError(stage_name(plan.stage) + " diverged at iteration " +
                                  std::to_string(it));
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        out.trace.push_back({static_cast<double>(it), l_dif->val[0], l_sem->val[0], lv});

        if (plan.ckpt_every > 0 && (it + 1) % plan.ckpt_every == 0 && it + 1 < plan.iterations)
            save(it + 1, (fs::path(run_dir) / ("ckpt_it_" + std::to_string(it + 1))).string());

        if (plan.sample_every > 0 && (it + 1) % plan.sample_every == 0) {
            fs::create_directories(fs::path(run_dir) / "samples");
            std::vector<Tensor> tiles;
            int grid_n = static_cast<int>(std::min<int64_t>(4, cache.size()));
            for (int k = 0; k < grid_n; ++k) {
                SurfaceMap sm{cache.surfaces[static_cast<size_t>(k)],
                              cache.subjects[static_cast<size_t>(k)]};
                DecodeOptions dopt;
                dopt.steps = std::min(20, p.sched.T);
                dopt.seed = seed ^ static_cast<uint64_t>(k);
                tiles.push_back(p.decode_sample(sm, dopt).rgb);
                tiles.push_back(cache.images[static_cast<size_t>(k)]);
            }
            write_ppm((fs::path(run_dir) / "samples" / ("it_" + std::to_string(it + 1) + ".ppm"))
                          .string(),
                      image_grid(tiles, 2));
        }
    }

    write_trace(run_dir, out.trace);
    std::string ckpt_dir = (fs::path(run_dir) / "ckpt").string();
    save(plan.iterations, ckpt_dir);
    out.ckpt_dir = ckpt_dir;
    return out;
}

}  // namespace f2i
