#include "f2i/cli/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "f2i/data/array_io.hpp"
#include "f2i/eval/experiments.hpp"
#include "f2i/eval/image_io.hpp"
#include "f2i/train/trainer.hpp"

namespace f2i {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << j.dump(1) << "\n";
}

void echo_config(const std::string& dir, const RunConfig& cfg) {
    write_json((fs::path(dir) / "config.json").string(), cfg.to_json());
}

/// Run `fill` against a temp directory, then promote it to `out`.
void atomic_dir(const std::string& out, const std::function<void(const std::string&)>& fill) {
    if (out.empty()) throw UsageError("missing --out");
    std::string tmp = out + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    fill(tmp);
    fs::remove_all(out);
    fs::rename(tmp, out);
}

EncoderMode parse_encoder_mode(const std::string& s) {
    if (s == "full") return EncoderMode::full;
    if (s == "frozen") return EncoderMode::frozen;
    if (s == "random-init") return EncoderMode::random_init;
    if (s == "cls-only") return EncoderMode::cls_only;
    throw UsageError("unknown encoder mode '" + s + "'");
}

AblationFlags flags_from(const RunConfig& cfg) {
    AblationFlags f;
    f.encoder_mode = parse_encoder_mode(cfg.encoder_mode);
    f.use_llmn = cfg.use_llmn;
    f.use_auxiliary = cfg.use_auxiliary;
    f.use_semantic_loss = cfg.use_semantic_loss;
    return f;
}

LossWeights weights_from(const RunConfig& cfg) {
    LossWeights w;
    w.lambda_sem = cfg.lambda_sem;
    w.cfg_dropout = cfg.cfg_dropout;
    w.cfg_dropout_after = cfg.cfg_dropout_after;
    w.validate();
    return w;
}

Manifest filter_records(const Manifest& m, const std::function<bool(const ManifestRecord&)>& keep) {
    Manifest out = m;
    out.records.clear();
    for (const auto& r : m.records)
        if (keep(r)) out.records.push_back(r);
    return out;
}

std::vector<size_t> eval_indices(const Manifest& m, const std::string& split) {
    std::vector<size_t> idx;
    if (split == "all") {
        for (size_t i = 0; i < m.records.size(); ++i) idx.push_back(i);
        return idx;
    }
    idx = m.indices_with_split(split);
    if (idx.empty() && split == "test")  // no held-out records tagged: fall back to everything
        for (size_t i = 0; i < m.records.size(); ++i) idx.push_back(i);
    if (idx.empty()) throw DataError("no records with split '" + split + "'");
    return idx;
}

std::vector<double> parse_alphas(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw UsageError("sweep: empty alpha list");
    return out;
}

DecodeOptions decode_opts(const RunConfig& cfg) {
    DecodeOptions o;
    o.alpha = cfg.alpha;
    o.steps = cfg.steps;
    o.guidance = cfg.guidance;
    o.seed = cfg.seed;
    o.use_llmn = cfg.use_llmn;
    return o;
}

std::vector<ImageSample> decode_parallel(const Pipeline& p, const Manifest& m,
                                         const std::vector<size_t>& indices,
                                         const DecodeOptions& base, int jobs) {
    std::vector<ImageSample> out(indices.size());
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(indices.size())));
    auto work = [&](int stripe) {
        for (size_t k = static_cast<size_t>(stripe); k < indices.size(); k += static_cast<size_t>(jobs)) {
            DecodeOptions opt = base;
            opt.seed = Rng::mix(base.seed ^ (0x5eed0000ull + indices[k]));
            out[k] = p.decode_sample(m.load_surface(indices[k]), opt);
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> ts;
        for (int j = 0; j < jobs; ++j) ts.emplace_back(work, j);
        for (auto& t : ts) t.join();
    }
    return out;
}

}  // namespace

std::string resolve_out(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* root = std::getenv("F2I_RUN_ROOT");
    if (!root || !*root) return path;
    return (fs::path(root) / path).string();
}

std::unique_ptr<Pipeline> pipeline_from_checkpoint(const std::string& ckpt_dir) {
    auto ckpt = load_checkpoint(ckpt_dir);
    if (ckpt.meta.kind != "cross_subject_pretrain" && ckpt.meta.kind != "single_subject_refine")
        throw CheckpointError("decode needs a stage-ii/iii checkpoint, got kind '" +
                              ckpt.meta.kind + "'");
    AblationFlags flags;
    const auto& ex = ckpt.meta.extra;
    if (ex.contains("encoder_mode"))
        flags.encoder_mode = static_cast<EncoderMode>(ex["encoder_mode"].get<int>());
    if (ex.contains("use_llmn")) flags.use_llmn = ex["use_llmn"].get<bool>();
    if (ex.contains("use_auxiliary")) flags.use_auxiliary = ex["use_auxiliary"].get<bool>();
    if (ex.contains("use_semantic_loss"))
        flags.use_semantic_loss = ex["use_semantic_loss"].get<bool>();
    auto p = std::make_unique<Pipeline>(ScalePreset::by_name(ckpt.meta.preset), flags, 0);
    apply_to_pipeline(*p, ckpt, {});
    p->set_all_trainable(false);
    return p;
}

void cmd_gen_data(const RunConfig& cfg) {
    ScalePreset preset = ScalePreset::by_name(cfg.preset);
    GeneratorParams gp;
    gp.classes = cfg.classes;
    gp.noise_sigma = cfg.noise_sigma;
    gp.normalization = cfg.normalization;
    gp.test_subject = cfg.test_subject;
    gp.test_count = cfg.test_count;
    atomic_dir(resolve_out(cfg.out), [&](const std::string& tmp) {
        generate_synthetic_dataset(tmp, cfg.n, cfg.seed, preset, cfg.subjects, gp);
        echo_config(tmp, cfg);
    });
}

void cmd_pretrain_encoder(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw UsageError("pretrain-encoder: missing --manifest");
    ScalePreset preset = ScalePreset::by_name(cfg.preset);
    Manifest all = Manifest::load(cfg.manifest);
    Manifest train = filter_records(all, [](const ManifestRecord& r) { return r.split == "train"; });
    int64_t iters = cfg.iterations < 0 ? 2000 : cfg.iterations;
    WeightInit init = cfg.encoder_mode == "random-init" ? WeightInit::xavier_uniform
                                                        : WeightInit::trunc_normal;
    std::string run_dir = resolve_out(cfg.out);
    fs::create_directories(run_dir);
    echo_config(run_dir, cfg);
    train_calibrated_encoder(train, preset, iters, cfg.batch, {cfg.lr, cfg.weight_decay},
                             cfg.seed, run_dir, init, cfg.resume);
}

void cmd_pretrain_backbone(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw UsageError("pretrain-backbone: missing --manifest");
    ScalePreset preset = ScalePreset::by_name(cfg.preset);
    Manifest all = Manifest::load(cfg.manifest);
    Manifest train = filter_records(all, [](const ManifestRecord& r) { return r.split == "train"; });
    std::string run_dir = resolve_out(cfg.out);
    fs::create_directories(run_dir);
    echo_config(run_dir, cfg);
    train_backbone(train, preset, cfg.codec_iterations, cfg.unet_iterations, cfg.batch,
                   {cfg.lr, cfg.weight_decay}, weights_from(cfg), cfg.seed, run_dir,
                   cfg.codec_lr);
}

void cmd_pretrain_cross(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw UsageError("pretrain-cross: missing --manifest");
    ScalePreset preset = ScalePreset::by_name(cfg.preset);
    Manifest all = Manifest::load(cfg.manifest);
    Manifest train = filter_records(all, [](const ManifestRecord& r) { return r.split == "train"; });

    StagePlan plan;
    plan.stage = Stage::cross_subject_pretrain;
    plan.iterations = cfg.iterations < 0 ? 3000 : cfg.iterations;
    plan.batch = cfg.batch;
    plan.ckpt_every = cfg.ckpt_every;
    plan.sample_every = cfg.sample_every;
    plan.parent_ckpt = cfg.resume;  // resuming embeds all parents

    auto p = build_stage_pipeline(preset, flags_from(cfg), plan, cfg.encoder_ckpt,
                                  cfg.backbone_ckpt, cfg.seed);
    std::string run_dir = resolve_out(cfg.out);
    fs::create_directories(run_dir);
    echo_config(run_dir, cfg);
    train_stage(*p, train, plan, weights_from(cfg), {cfg.lr, cfg.weight_decay}, cfg.seed, run_dir,
                cfg.resume);
}

void cmd_refine(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw UsageError("refine: missing --manifest");
    if (cfg.subject < 0) throw UsageError("refine: missing --subject");
    if (!cfg.ablation.empty() && cfg.ablation != "wo-pretrain")
        throw UsageError("refine: unknown ablation '" + cfg.ablation + "'");
    bool wo_pretrain = cfg.ablation == "wo-pretrain";
    if (cfg.parent_ckpt.empty() && cfg.resume.empty() && !wo_pretrain)
        throw UsageError("refine requires --parent-ckpt (or --ablation wo-pretrain)");

    ScalePreset preset = ScalePreset::by_name(cfg.preset);
    Manifest all = Manifest::load(cfg.manifest);
    Manifest refine = filter_records(all, [&](const ManifestRecord& r) {
        return r.split == "train" && r.subject == cfg.subject;
    });
    if (refine.records.empty())
        throw DataError("refine: no train records for subject " + std::to_string(cfg.subject));

    StagePlan plan;
    plan.stage = Stage::single_subject_refine;
    plan.iterations = cfg.iterations < 0 ? 1000 : cfg.iterations;
    plan.batch = cfg.batch;
    plan.ckpt_every = cfg.ckpt_every;
    plan.sample_every = cfg.sample_every;
    plan.parent_ckpt = !cfg.resume.empty() ? cfg.resume : cfg.parent_ckpt;

    auto p = build_stage_pipeline(preset, flags_from(cfg), plan, cfg.encoder_ckpt,
                                  cfg.backbone_ckpt, cfg.seed);
    std::string run_dir = resolve_out(cfg.out);
    fs::create_directories(run_dir);
    echo_config(run_dir, cfg);
    train_stage(*p, refine, plan, weights_from(cfg), {cfg.lr, cfg.weight_decay}, cfg.seed,
                run_dir, cfg.resume);
}

void cmd_decode(const RunConfig& cfg) {
    if (cfg.ckpt.empty()) throw UsageError("decode: missing --ckpt");
    if (cfg.manifest.empty()) throw UsageError("decode: missing --manifest");
    auto p = pipeline_from_checkpoint(cfg.ckpt);
    Manifest m = Manifest::load(cfg.manifest);
    if (m.preset != p->preset.name) throw DataError("decode: manifest/checkpoint preset mismatch");
    auto idx = eval_indices(m, cfg.split);
    auto images = decode_parallel(*p, m, idx, decode_opts(cfg), cfg.jobs);
    atomic_dir(resolve_out(cfg.out), [&](const std::string& tmp) {
        json index = json::array();
        for (size_t k = 0; k < idx.size(); ++k) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "rec_%05zu", idx[k]);
            write_array((fs::path(tmp) / (std::string(buf) + ".npb")).string(), images[k].rgb,
                        "image_rgb");
            write_ppm((fs::path(tmp) / (std::string(buf) + ".ppm")).string(), images[k].rgb);
            index.push_back({{"record", idx[k]}, {"file", std::string(buf) + ".npb"}});
        }
        write_json((fs::path(tmp) / "decode.json").string(),
                   {{"checkpoint", cfg.ckpt},
                    {"alpha", cfg.alpha},
                    {"steps", cfg.steps},
                    {"guidance", cfg.guidance},
                    {"seed", cfg.seed},
                    {"images", index}});
        echo_config(tmp, cfg);
    });
}

void cmd_sweep_alpha(const RunConfig& cfg) {
    if (cfg.ckpt.empty()) throw UsageError("sweep-alpha: missing --ckpt");
    if (cfg.manifest.empty()) throw UsageError("sweep-alpha: missing --manifest");
    auto p = pipeline_from_checkpoint(cfg.ckpt);
    Manifest m = Manifest::load(cfg.manifest);
    auto idx = eval_indices(m, cfg.split);
    if (static_cast<int>(idx.size()) > cfg.n) idx.resize(static_cast<size_t>(cfg.n));
    auto alphas = parse_alphas(cfg.alphas);
    auto train_idx = m.indices_with_split("train");
    ProbePair probes = fit_probes(m, train_idx, cfg.classes);
    auto res = control_scale_sweep(*p, m, idx, alphas, decode_opts(cfg), cfg.embedder, probes);
    atomic_dir(resolve_out(cfg.out), [&](const std::string& tmp) {
        write_ppm((fs::path(tmp) / "grid.ppm").string(), res.grid);
        write_array((fs::path(tmp) / "grid.npb").string(), res.grid, "image_rgb");
        json reports = json::array();
        for (size_t i = 0; i < res.reports.size(); ++i)
            reports.push_back(res.reports[i].to_json());
        write_json((fs::path(tmp) / "sweep.json").string(),
                   {{"alphas", res.alphas}, {"reports", reports}});
        echo_config(tmp, cfg);
    });
}

void cmd_swap(const RunConfig& cfg) {
    if (cfg.ckpt.empty()) throw UsageError("swap: missing --ckpt");
    if (cfg.high_from.empty() || cfg.low_from.empty())
        throw UsageError("swap: missing --high-from / --low-from");
    auto p = pipeline_from_checkpoint(cfg.ckpt);
    SurfaceMap a{read_array(cfg.high_from), 0};
    SurfaceMap b{read_array(cfg.low_from), 0};
    ImageSample img = feature_swap(*p, a, b, decode_opts(cfg));
    atomic_dir(resolve_out(cfg.out), [&](const std::string& tmp) {
        write_array((fs::path(tmp) / "swap.npb").string(), img.rgb, "image_rgb");
        write_ppm((fs::path(tmp) / "swap.ppm").string(), img.rgb);
        echo_config(tmp, cfg);
    });
}

void cmd_evaluate(const RunConfig& cfg) {
    if (cfg.ckpt.empty()) throw UsageError("evaluate: missing --ckpt");
    if (cfg.manifest.empty()) throw UsageError("evaluate: missing --manifest");
    auto p = pipeline_from_checkpoint(cfg.ckpt);
    Manifest m = Manifest::load(cfg.manifest);
    if (m.preset != p->preset.name)
        throw DataError("evaluate: manifest/checkpoint preset mismatch");
    auto idx = eval_indices(m, cfg.split);
    auto train_idx = m.indices_with_split("train");
    ProbePair probes = fit_probes(m, train_idx, cfg.classes);
    auto images = decode_parallel(*p, m, idx, decode_opts(cfg), cfg.jobs);
    MetricReport rep = evaluate_records(*p, m, idx, images, cfg.embedder, probes,
                                        {{"checkpoint", cfg.ckpt},
                                         {"alpha", cfg.alpha},
                                         {"steps", cfg.steps},
                                         {"guidance", cfg.guidance},
                                         {"seed", cfg.seed},
                                         {"split", cfg.split}});
    atomic_dir(resolve_out(cfg.out), [&](const std::string& tmp) {
        write_json((fs::path(tmp) / "report.json").string(), rep.to_json());
        std::ofstream tf((fs::path(tmp) / "report.txt").string(), std::ios::trunc);
        tf << rep.table();
        echo_config(tmp, cfg);
    });
    std::printf("%s", rep.table().c_str());
}

}  // namespace f2i
