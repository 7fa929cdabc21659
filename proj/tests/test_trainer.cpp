#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "f2i/train/trainer.hpp"

using namespace f2i;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / "f2i_trainer" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

Manifest tiny_dataset(const std::string& name, int n = 8, int subjects = 2) {
    auto dir = fresh_dir(name);
    return generate_synthetic_dataset(dir, n, 31, ScalePreset::desk(), subjects);
}

StagePlan tiny_plan(Stage stage, const std::string&, int64_t iters, int batch = 4) {
    StagePlan plan;
    plan.stage = stage;
    plan.iterations = iters;
    plan.batch = batch;
    return plan;
}

std::map<std::string, Tensor> snapshot(const Pipeline& p) {
    std::map<std::string, Tensor> out;
    for (const auto& [n, v] : p.named_params()) out.emplace(n, v->val);
    return out;
}

bool identical(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("total loss: composite objective spot values") {
    Graph g;
    auto dif = Graph::leaf(Tensor::scalar(0.5f));
    auto sem = Graph::leaf(Tensor::scalar(2.0f));
    CHECK(total_loss(g, dif, sem, 0.1)->val[0] == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(total_loss(g, dif, Graph::leaf(Tensor::scalar(0.f)), 0.1)->val[0] == 0.5f);
    // lambda = 0 reproduces the objective without the semantic term
    CHECK(total_loss(g, dif, sem, 0.0)->val[0] == 0.5f);
    CHECK_THROWS_AS(total_loss(g, dif, sem, -0.1), UsageError);
    auto bad = Graph::leaf(Tensor::scalar(std::numeric_limits<float>::infinity()));
    CHECK_THROWS_AS(total_loss(g, bad, sem, 0.1), DivergenceError);
}

TEST_CASE("cfg dropout rate falls in the 99% binomial interval over 1e4 steps") {
    LossWeights w;  // 0.05 default, active from iteration 0
    int64_t hits = 0;
    const int64_t steps = 10000;
    for (int64_t it = 0; it < steps; ++it) {
        StepDraws d = draw_step(77, it, 1, 100, 200, w);
        if (d.drop[0]) ++hits;
    }
    double rate = static_cast<double>(hits) / static_cast<double>(steps);
    double half = 2.5758 * std::sqrt(0.05 * 0.95 / static_cast<double>(steps));
    CHECK(rate > 0.05 - half);
    CHECK(rate < 0.05 + half);

    // the threshold delays activation
    LossWeights late = w;
    late.cfg_dropout_after = 5000;
    for (int64_t it = 0; it < 5000; ++it) {
        StepDraws d = draw_step(78, it, 4, 100, 200, late);
        for (bool b : d.drop) CHECK(!b);
    }
}

TEST_CASE("stage ii: frozen audit, gradient flow, zero-lr identity") {
    Manifest data = tiny_dataset("stage2");
    AblationFlags flags;
    Pipeline p(ScalePreset::desk(), flags, 41);
    p.control.copy_core_from(p.unet);
    auto before = snapshot(p);

    SUBCASE("backbone and codec stay bit-identical; conditioning branches move") {
        auto run_dir = fresh_dir("stage2_run");
        auto plan = tiny_plan(Stage::cross_subject_pretrain, "", 1);
        train_stage(p, data, plan, LossWeights{}, OptimizerConfig{}, 43, run_dir);

        bool enc_moved = false, main_moved = false, aux_moved = false, ft_moved = false,
             copy_moved = false, zero_moved = false;
        for (const auto& [name, v] : p.named_params()) {
            bool same = identical(before.at(name), v->val);
            if (name.rfind("unet.", 0) == 0 || name.rfind("codec.", 0) == 0) {
                CHECK(same);  // locked
            }
            if (!same) {
                if (name.rfind("mae.enc.", 0) == 0) enc_moved = true;
                if (name.rfind("hlgn.main.", 0) == 0) main_moved = true;
                if (name.rfind("hlgn.aux.", 0) == 0) aux_moved = true;
                if (name.rfind("llmn.ft.", 0) == 0) ft_moved = true;
                if (name.rfind("llmn.control.core", 0) == 0) copy_moved = true;
                if (name.rfind("llmn.control.zero", 0) == 0) zero_moved = true;
            }
            if (name.rfind("mae.dec.", 0) == 0) CHECK(same);  // MAE decoder unused here
        }
        CHECK(enc_moved);
        CHECK(main_moved);
        CHECK(aux_moved);
        CHECK(ft_moved);
        CHECK(copy_moved);
        CHECK(zero_moved);
    }

    SUBCASE("frozen encoder mode locks the encoder") {
        p.flags.encoder_mode = EncoderMode::frozen;
        auto run_dir = fresh_dir("stage2_frozen");
        auto plan = tiny_plan(Stage::cross_subject_pretrain, "", 1);
        train_stage(p, data, plan, LossWeights{}, OptimizerConfig{}, 43, run_dir);
        for (const auto& [name, v] : p.named_params())
            if (name.rfind("mae.", 0) == 0) CHECK(identical(before.at(name), v->val));
    }

    SUBCASE("zero learning rate leaves every parameter bit-identical") {
        auto run_dir = fresh_dir("stage2_zerolr");
        auto plan = tiny_plan(Stage::cross_subject_pretrain, "", 3);
        OptimizerConfig opt;
        opt.lr = 0.0;
        train_stage(p, data, plan, LossWeights{}, opt, 43, run_dir);
        for (const auto& [name, v] : p.named_params())
            CHECK(identical(before.at(name), v->val));
    }
}

TEST_CASE("save/resume reproduces the uninterrupted loss trace exactly") {
    Manifest data = tiny_dataset("resume");

    auto make_pipeline = [&]() {
        Pipeline p(ScalePreset::desk(), AblationFlags{}, 51);
        p.control.copy_core_from(p.unet);
        return p;
    };

    // uninterrupted: 6 iterations
    Pipeline pa = make_pipeline();
    auto full = train_stage(pa, data, tiny_plan(Stage::cross_subject_pretrain, "", 6), LossWeights{},
                            OptimizerConfig{}, 52, fresh_dir("resume_full"));

    // interrupted: 3 iterations, checkpoint, resume to 6
    Pipeline pb = make_pipeline();
    auto half = train_stage(pb, data, tiny_plan(Stage::cross_subject_pretrain, "", 3), LossWeights{},
                            OptimizerConfig{}, 52, fresh_dir("resume_half"));
    Pipeline pc = make_pipeline();
    auto rest = train_stage(pc, data, tiny_plan(Stage::cross_subject_pretrain, "", 6), LossWeights{},
                            OptimizerConfig{}, 52, fresh_dir("resume_rest"), half.ckpt_dir);

    REQUIRE(full.trace.size() == 6);
    REQUIRE(rest.trace.size() == 3);  // iterations 3..5
    for (size_t i = 0; i < 3; ++i) {
        CHECK(full.trace[3 + i][1] == rest.trace[i][1]);
        CHECK(full.trace[3 + i][3] == rest.trace[i][3]);
    }
    for (const auto& [name, v] : pa.named_params()) {
        auto other = pc.named_params();
        for (const auto& [n2, v2] : other)
            if (n2 == name) CHECK(identical(v->val, v2->val));
    }
}

TEST_CASE("checkpoint errors: missing parameter file, preset mismatch, parentage") {
    Manifest data = tiny_dataset("ckpt_err", 6, 2);
    Pipeline p(ScalePreset::desk(), AblationFlags{}, 61);
    p.control.copy_core_from(p.unet);
    auto out = train_stage(p, data, tiny_plan(Stage::cross_subject_pretrain, "", 1), LossWeights{},
                           OptimizerConfig{}, 62, fresh_dir("ckpt_err_run"));

    // deleting one parameter file must fail naming the parameter
    fs::remove(fs::path(out.ckpt_dir) / "params" / "hlgn.main.mlp.fc1.w.npb");
    CHECK_THROWS_WITH_AS(load_checkpoint(out.ckpt_dir),
                         doctest::Contains("hlgn.main.mlp.fc1.w"), CheckpointError);

    // loading a desk checkpoint into a full-preset pipeline is a preset error
    Pipeline pf(ScalePreset::desk(), AblationFlags{}, 63);
    LoadedCheckpoint fake;
    fake.meta.preset = "full";
    fake.meta.kind = "cross_subject_pretrain";
    CHECK_THROWS_WITH_AS(apply_to_pipeline(pf, fake, {}), doctest::Contains("preset"),
                         CheckpointError);

    // stage parentage: refine without parent and without the w/o-pretrain path
    StagePlan plan = tiny_plan(Stage::single_subject_refine, "", 1);
    CHECK_THROWS_AS(build_stage_pipeline(ScalePreset::desk(), AblationFlags{}, plan, "", "", 1),
                    UsageError);
}

TEST_CASE("stage i training reduces reconstruction loss on a small overfit set") {
    Manifest data = tiny_dataset("mae_overfit", 4, 1);
    auto out = train_calibrated_encoder(data, ScalePreset::desk(), 300, 4, OptimizerConfig{}, 71,
                                        fresh_dir("mae_run"));
    REQUIRE(out.trace.size() == 300);
    double first = out.trace[0][3];
    double last10 = 0;
    for (size_t i = out.trace.size() - 10; i < out.trace.size(); ++i) last10 += out.trace[i][3];
    last10 /= 10.0;
    CHECK(last10 < 0.5 * first);  // the full <5% overfit check runs in the acceptance suite
    CHECK(fs::exists(fs::path(out.ckpt_dir) / "index.json"));
}
