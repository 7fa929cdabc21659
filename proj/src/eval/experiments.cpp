#include "f2i/eval/experiments.hpp"

#include <cmath>
#include <sstream>

#include "f2i/eval/image_io.hpp"

namespace f2i {

using json = nlohmann::json;

json MetricReport::to_json() const {
    json j;
    j["metadata"] = metadata;
    j["metrics"] = {{"pixcorr", pixcorr_mean},
                    {"ssim", ssim_mean},
                    {"two_way_identification", two_way},
                    {"feature_distance", distance}};
    if (semantic_probe_accuracy >= 0) {
        j["metrics"]["semantic_probe_accuracy"] = semantic_probe_accuracy;
        j["metrics"]["position_probe_rmse"] = position_probe_rmse;
    }
    j["per_sample"] = per_sample;
    return j;
}

std::string MetricReport::table() const {
    std::ostringstream os;
    os << "               Low-Level            |  High-Level\n";
    os << "  PixCorr ^   SSIM ^                |  TwoWay ^   Dist v\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %7.4f     %6.4f               |  %6.4f     %6.4f\n",
                  pixcorr_mean, ssim_mean, two_way, distance);
    os << buf;
    if (semantic_probe_accuracy >= 0) {
        std::snprintf(buf, sizeof(buf),
                      "  semantic-probe acc: %.4f   position-probe rmse: %.4f\n",
                      semantic_probe_accuracy, position_probe_rmse);
        os << buf;
    }
    os << "  (distances use the declared [0,1] normalization; magnitudes are\n"
          "   not comparable to published backbone-specific distances)\n";
    return os.str();
}

std::vector<ImageSample> decode_records(const Pipeline& p, const Manifest& m,
                                        const std::vector<size_t>& indices,
                                        const DecodeOptions& base) {
    std::vector<ImageSample> out;
    out.reserve(indices.size());
    for (size_t idx : indices) {
        DecodeOptions opt = base;
        opt.seed = Rng::mix(base.seed ^ (0x5eed0000ull + idx));
        SurfaceMap sm = m.load_surface(idx);
        out.push_back(p.decode_sample(sm, opt));
    }
    return out;
}

ProbePair fit_probes(const Manifest& m, const std::vector<size_t>& indices, int n_classes) {
    ProbePair pp;
    if (indices.size() < 8) return pp;
    std::vector<ImageSample> imgs;
    std::vector<int> classes;
    std::vector<std::pair<double, double>> centers;
    for (size_t idx : indices) {
        imgs.push_back(m.load_image(idx));
        classes.push_back(m.records[idx].factors.cls);
        centers.push_back({m.records[idx].factors.cx, m.records[idx].factors.cy});
    }
    pp.cls = fit_class_probe(imgs, classes, n_classes);
    pp.pos = fit_position_probe(imgs, centers);
    pp.n_classes = n_classes;
    pp.valid = true;
    return pp;
}

MetricReport evaluate_records(const Pipeline& p, const Manifest& m,
                              const std::vector<size_t>& eval_indices,
                              const std::vector<ImageSample>& decoded,
                              const std::string& embedder_name, const ProbePair& probes,
                              json metadata) {
    if (eval_indices.size() != decoded.size())
        throw DataError("evaluate: decoded count mismatch");
    EmbedderRegistry reg = EmbedderRegistry::build(&p, probes.valid ? &probes.cls : nullptr);
    const Embedder& emb = reg.get(embedder_name);

    MetricReport rep;
    rep.metadata = std::move(metadata);
    rep.metadata["embedder"] = embedder_name;

    std::vector<std::vector<double>> rf, gf;
    double pix = 0, ss = 0, probe_ok = 0, pos_se = 0;
    for (size_t k = 0; k < eval_indices.size(); ++k) {
        ImageSample gt = m.load_image(eval_indices[k]);
        const ImageSample& rc = decoded[k];
        double pc = pixcorr(rc.rgb, gt.rgb);
        double sv = ssim(rc.rgb, gt.rgb);
        pix += pc;
        ss += sv;
        rf.push_back(emb.fn(rc));
        gf.push_back(emb.fn(gt));
        json row = {{"record", eval_indices[k]}, {"pixcorr", pc}, {"ssim", sv}};
        if (probes.valid) {
            int pred = predict_class(probes.cls, rc);
            bool ok = pred == m.records[eval_indices[k]].factors.cls;
            probe_ok += ok ? 1.0 : 0.0;
            auto [px, py] = predict_position(probes.pos, rc);
            double dx = px - m.records[eval_indices[k]].factors.cx;
            double dy = py - m.records[eval_indices[k]].factors.cy;
            pos_se += dx * dx + dy * dy;
            row["class_pred"] = pred;
            row["class_true"] = m.records[eval_indices[k]].factors.cls;
        }
        rep.per_sample.push_back(std::move(row));
    }
    size_t n = eval_indices.size();
    rep.pixcorr_mean = pix / static_cast<double>(n);
    rep.ssim_mean = ss / static_cast<double>(n);
    rep.two_way = two_way_identification(rf, gf);
    rep.distance = feature_distance(rf, gf);
    if (probes.valid) {
        rep.semantic_probe_accuracy = probe_ok / static_cast<double>(n);
        rep.position_probe_rmse = std::sqrt(pos_se / static_cast<double>(n));
    }
    return rep;
}

SweepResult control_scale_sweep(const Pipeline& p, const Manifest& m,
                                const std::vector<size_t>& indices,
                                const std::vector<double>& alphas, const DecodeOptions& base,
                                const std::string& embedder_name, const ProbePair& probes) {
    SweepResult res;
    res.alphas = alphas;
    std::vector<Tensor> tiles;
    for (double a : alphas) {
        if (!(a >= 0)) throw UsageError("sweep: alphas must be >= 0");
        DecodeOptions opt = base;
        opt.alpha = a;
        auto decoded = decode_records(p, m, indices, opt);  // same per-sample seeds for every alpha
        for (const auto& im : decoded) tiles.push_back(im.rgb);
        res.reports.push_back(evaluate_records(p, m, indices, decoded, embedder_name, probes,
                                               {{"alpha", a}, {"steps", base.steps},
                                                {"guidance", base.guidance}, {"seed", base.seed}}));
    }
    res.grid = image_grid(tiles, static_cast<int>(indices.size()));
    return res;
}

ImageSample feature_swap(const Pipeline& p, const SurfaceMap& sample_a, const SurfaceMap& sample_b,
                         const DecodeOptions& opt) {
    if (sample_a.pixels.dim(0) != sample_b.pixels.dim(0))
        throw DataError("swap: sample presets differ");
    DecodeOptions o = opt;
    o.structural_source = &sample_b;
    return p.decode_sample(sample_a, o);
}

}  // namespace f2i
