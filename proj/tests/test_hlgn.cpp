#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "f2i/core/optim.hpp"
#include "f2i/hlgn/hlgn.hpp"
#include "test_util.hpp"

using namespace f2i;
using namespace testutil;

namespace {
HlgnConfig desk_cfg() { return HlgnConfig::from_preset(ScalePreset::desk()); }
HlgnConfig full_cfg() { return HlgnConfig::from_preset(ScalePreset::full()); }
}  // namespace

TEST_CASE("fmri_to_text maps L_r x d_r onto L_T x d_T for both presets") {
    {
        Rng wrng(1), drng(2);
        Hlgn h(desk_cfg(), wrng);
        Tensor latent({2, 65, 128});
        drng.fill_normal(latent);
        Graph g;
        auto f = h.fmri_to_text(g, Graph::leaf(latent));
        CHECK(f->val.shape() == std::vector<int64_t>{2, 8, 32});
        CHECK(f->val.all_finite());

        Tensor zeros({1, 65, 128});
        auto fz = h.fmri_to_text(g, Graph::leaf(zeros));
        CHECK(fz->val.shape() == std::vector<int64_t>{1, 8, 32});
        CHECK(fz->val.all_finite());

        CHECK_THROWS_AS(h.fmri_to_text(g, Graph::leaf(Tensor({1, 60, 128}))), ShapeError);
    }
    {
        Rng wrng(3), drng(4);
        HlgnT<float> h(full_cfg(), wrng);
        Tensor latent({1, 257, 1024});
        drng.fill_normal(latent);
        Graph g;
        auto f = h.fmri_to_text(g, Graph::leaf(latent));
        CHECK(f->val.shape() == std::vector<int64_t>{1, 77, 1024});
    }
}

TEST_CASE("auxiliary branch is exactly zero at init and becomes active after one step") {
    Rng wrng(5), drng(6);
    Hlgn h(desk_cfg(), wrng);
    Tensor latent({3, 65, 128});
    drng.fill_normal(latent);
    {
        Graph g;
        auto au = h.auxiliary_encode(g, Graph::leaf(latent));
        CHECK(au->val.shape() == std::vector<int64_t>{3, 8, 32});
        for (int64_t i = 0; i < au->val.numel(); ++i) CHECK(au->val[i] == 0.0f);

        // zero-init identity: combine(f_txt, aux) == f_txt bit-exactly
        auto ft = h.fmri_to_text(g, Graph::leaf(latent));
        auto sem = Hlgn::combine(g, ft, au);
        for (int64_t i = 0; i < ft->val.numel(); ++i) CHECK(sem->val[i] == ft->val[i]);
    }
    {
        std::vector<Var> ps;
        for (auto& [n, v] : h.params.items) {
            v->needs_grad = true;
            ps.push_back(v);
        }
        AdamW opt(ps, 1e-3, 0.0);
        Tensor target({3, 8, 32});
        drng.fill_normal(target);
        Graph g;
        auto sem = h.semantic_condition(g, Graph::leaf(latent), true);
        auto loss = semantic_loss(g, Graph::leaf(target), sem);
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        Graph g2;
        auto au = h.auxiliary_encode(g2, Graph::leaf(latent));
        double mx = 0;
        for (int64_t i = 0; i < au->val.numel(); ++i)
            mx = std::max(mx, std::abs(static_cast<double>(au->val[i])));
        CHECK(mx > 0.0);
    }
}

TEST_CASE("combine: zero residual, exact cancellation, loop oracle") {
    Rng rng(7);
    Tensor a({2, 8, 32}), b({2, 8, 32});
    rng.fill_normal(a);
    rng.fill_normal(b);
    Graph g;
    auto va = Graph::leaf(a), vb = Graph::leaf(b);
    auto sum = Hlgn::combine(g, va, vb);
    for (int64_t i = 0; i < a.numel(); ++i)
        CHECK(sum->val[i] == a[i] + b[i]);  // elementwise oracle, exact

    Tensor neg = a;
    for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
    auto zero = Hlgn::combine(g, va, Graph::leaf(neg));
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(zero->val[i] == 0.0f);
}

TEST_CASE("semantic loss: literal Eq-style reduction") {
    {  // equal inputs -> 0
        Tensor a({1, 8, 32});
        Rng rng(8);
        rng.fill_normal(a);
        Graph g;
        CHECK(semantic_loss(g, Graph::leaf(a), Graph::leaf(a))->val[0] == 0.0f);
    }
    {  // L_T=1, d_T=2, difference (3,4) -> 25 (sum over dim, mean over tokens)
        Tensor t({1, 1, 2}, {3.f, 4.f});
        Tensor z({1, 1, 2}, {0.f, 0.f});
        Graph g;
        CHECK(semantic_loss(g, Graph::leaf(t), Graph::leaf(z))->val[0] == 25.0f);
    }
    {  // double-precision loop oracle on random pairs
        Rng rng(9);
        Tensor a({2, 8, 32}), b({2, 8, 32});
        rng.fill_normal(a);
        rng.fill_normal(b);
        Graph g;
        double got = semantic_loss(g, Graph::leaf(a), Graph::leaf(b))->val[0];
        double oracle = 0;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t i = 0; i < 8; ++i) {
                double tok = 0;
                for (int64_t d = 0; d < 32; ++d) {
                    double diff = static_cast<double>(a.at(n, i, d)) - b.at(n, i, d);
                    tok += diff * diff;
                }
                oracle += tok;
            }
        oracle /= 2.0 * 8.0;  // mean over batch x tokens, sum over dim
        CHECK(std::abs(got - oracle) / oracle < 1e-6);
    }
    {  // symmetry and shape check
        Rng rng(10);
        Tensor a({1, 8, 32}), b({1, 8, 32});
        rng.fill_normal(a);
        rng.fill_normal(b);
        Graph g;
        CHECK(semantic_loss(g, Graph::leaf(a), Graph::leaf(b))->val[0] ==
              semantic_loss(g, Graph::leaf(b), Graph::leaf(a))->val[0]);
        CHECK_THROWS_AS(semantic_loss(g, Graph::leaf(a), Graph::leaf(Tensor({1, 7, 32}))),
                        ShapeError);
    }
}

TEST_CASE("every HLGN parameter's gradient matches central differences (tiny instance)") {
    HlgnConfig tiny{9, 6, 2, 4};  // L_r=9, d_r=6, L_T=2, d_T=4
    Rng wrng(11), drng(12);
    HlgnT<double> h(tiny, wrng);
    TensorD latent = randn(drng, {1, 9, 6});
    TensorD target = randn(drng, {1, 2, 4});

    std::vector<VarT<double>> leaves;
    for (auto& [n, v] : h.params.items) {
        v->needs_grad = true;
        leaves.push_back(v);
    }
    auto rebuild = [&](bool back) {
        GraphT<double> g;
        auto sem = h.semantic_condition(g, GraphT<double>::leaf(latent), true);
        auto loss = semantic_loss(g, GraphT<double>::leaf(target), sem);
        if (back) g.backward(loss);
        return loss->val[0];
    };
    for (auto& l : leaves) l->zero_grad();
    rebuild(true);
    Rng pick(13);
    double worst = 0;
    for (auto& leaf : leaves)
        for (int64_t idx = 0; idx < leaf->val.numel(); ++idx) {  // exhaustive
            double g_ad = leaf->has_grad() ? leaf->grad[idx] : 0.0;
            double g_fd = numeric_grad([&] { return rebuild(false); }, leaf, idx, 1e-5);
            worst = std::max(worst, rel_err(g_ad, g_fd, 1e-6));
        }
    CHECK(worst < 1e-3);
}

TEST_CASE("desk-preset HLGN gradients match central differences on sampled entries") {
    Rng wrng(14), drng(15);
    HlgnT<double> h(desk_cfg(), wrng);
    TensorD latent = randn(drng, {1, 65, 128});
    TensorD target = randn(drng, {1, 8, 32});
    std::vector<VarT<double>> leaves;
    for (auto& [n, v] : h.params.items) {
        v->needs_grad = true;
        leaves.push_back(v);
    }
    auto rebuild = [&](bool back) {
        GraphT<double> g;
        auto sem = h.semantic_condition(g, GraphT<double>::leaf(latent), true);
        auto loss = semantic_loss(g, GraphT<double>::leaf(target), sem);
        if (back) g.backward(loss);
        return loss->val[0];
    };
    Rng pick(16);
    CHECK(check_gradients(rebuild, leaves, pick, 4) < 1e-3);
}
