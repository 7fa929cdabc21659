#include "f2i/data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "f2i/core/errors.hpp"
#include "f2i/data/array_io.hpp"

namespace f2i {

namespace fs = std::filesystem;
using json = nlohmann::json;

Manifest Manifest::load(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw DataError("manifest: cannot open " + manifest_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: bad JSON: ") + e.what());
    }
    Manifest m;
    m.root = fs::path(manifest_path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    m.seed = j.at("seed").get<uint64_t>();
    m.preset = j.at("preset").get<std::string>();
    m.generator_params = j.value("generator_params", json::object());
    for (const auto& r : j.at("records")) {
        ManifestRecord rec;
        rec.surface = r.at("surface").get<std::string>();
        rec.image = r.at("image").get<std::string>();
        rec.caption = r.at("caption").get<std::string>();
        rec.subject = r.at("subject").get<int>();
        rec.split = r.at("split").get<std::string>();
        rec.factors.cls = r.at("class").get<int>();
        rec.factors.cx = r.at("cx").get<double>();
        rec.factors.cy = r.at("cy").get<double>();
        rec.factors.scale = r.at("scale").get<double>();
        rec.factors.theta = r.at("theta").get<double>();
        if (rec.split != "train" && rec.split != "test")
            throw DataError("manifest: unknown split tag '" + rec.split + "'");
        m.records.push_back(std::move(rec));
    }
    for (const auto& rec : m.records) {
        for (const std::string& p : {rec.surface, rec.image, rec.caption})
            if (!fs::exists(fs::path(m.root) / p))
                throw DataError("manifest: missing file " + p);
    }
    return m;
}

void Manifest::save(const std::string& manifest_path) const {
    json j;
    j["format"] = 1;
    j["seed"] = seed;
    j["preset"] = preset;
    j["generator_params"] = generator_params;
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"surface", r.surface},
                        {"image", r.image},
                        {"caption", r.caption},
                        {"subject", r.subject},
                        {"split", r.split},
                        {"class", r.factors.cls},
                        {"cx", r.factors.cx},
                        {"cy", r.factors.cy},
                        {"scale", r.factors.scale},
                        {"theta", r.factors.theta}});
    }
    j["records"] = std::move(recs);
    std::ofstream f(manifest_path, std::ios::trunc);
    if (!f) throw DataError("manifest: cannot write " + manifest_path);
    f << j.dump(1) << "\n";
}

SurfaceMap Manifest::load_surface(size_t i) const {
    const auto& r = records.at(i);
    SurfaceMap sm;
    sm.pixels = read_array((fs::path(root) / r.surface).string());
    sm.subject_id = r.subject;
    return sm;
}

ImageSample Manifest::load_image(size_t i) const {
    ImageSample img;
    img.rgb = read_array((fs::path(root) / records.at(i).image).string());
    return img;
}

Tensor Manifest::load_caption(size_t i) const {
    return read_array((fs::path(root) / records.at(i).caption).string());
}

PairedSample Manifest::load_record(size_t i) const {
    PairedSample s;
    s.surface = load_surface(i);
    s.image = load_image(i);
    s.caption_embedding = load_caption(i);
    s.subject_id = records.at(i).subject;
    return s;
}

std::vector<size_t> Manifest::indices_with_split(const std::string& split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

std::vector<int> Manifest::subjects() const {
    std::set<int> s;
    for (const auto& r : records) s.insert(r.subject);
    return {s.begin(), s.end()};
}

void Manifest::verify_files() const {
    for (size_t i = 0; i < records.size(); ++i) {
        load_surface(i);
        load_image(i);
        load_caption(i);
    }
}

Manifest generate_synthetic_dataset(const std::string& out_dir, int n, uint64_t seed,
                                    const ScalePreset& preset, int n_subjects,
                                    const GeneratorParams& params) {
    if (n < 1) throw UsageError("gen-data: n must be >= 1");
    if (n_subjects < 1) throw UsageError("gen-data: n_subjects must be >= 1");
    if (params.classes < 2 || params.classes > 6)
        throw UsageError("gen-data: classes must be in 2..6");
    preset.validate();

    fs::create_directories(fs::path(out_dir) / "surfaces");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "captions");

    Manifest m;
    m.root = out_dir;
    m.seed = seed;
    m.preset = preset.name;
    m.generator_params = {{"classes", params.classes},
                          {"noise_sigma", params.noise_sigma},
                          {"normalization", params.normalization},
                          {"test_subject", params.test_subject},
                          {"test_count", params.test_count},
                          {"n_subjects", n_subjects}};

    std::vector<Tensor> bases;
    bases.reserve(static_cast<size_t>(n_subjects));
    for (int s = 0; s < n_subjects; ++s)
        bases.push_back(subject_basis(s, preset.surface_side, params.classes));

    std::vector<bool> caption_written(static_cast<size_t>(params.classes), false);

    // records are assigned to subjects round-robin; the last `test_count`
    // records of `test_subject` carry the test tag
    int per_subj_total = (params.test_subject >= 0 && params.test_subject < n_subjects)
                             ? n / n_subjects + (params.test_subject < n % n_subjects ? 1 : 0)
                             : 0;
    if (params.test_count > per_subj_total && params.test_subject >= 0)
        throw UsageError("gen-data: test_count exceeds records of test_subject");

    for (int i = 0; i < n; ++i) {
        int subject = i % n_subjects;
        int order = i / n_subjects;

        Rng frng = Rng::keyed(seed, 1 /*factors*/, static_cast<uint64_t>(i));
        FactorSample f = sample_factors(frng, params.classes);

        ImageSample img = render_image(f, preset.image_side);
        Rng nrng = Rng::keyed(seed, 2 /*noise*/, static_cast<uint64_t>(i));
        SurfaceMap sm = render_surface(f, subject, bases[static_cast<size_t>(subject)],
                                       preset.surface_side, params, nrng);

        char buf[32];
        std::snprintf(buf, sizeof(buf), "rec_%05d.npb", i);
        ManifestRecord rec;
        rec.surface = std::string("surfaces/") + buf;
        rec.image = std::string("images/") + buf;
        rec.caption = "captions/class_" + std::to_string(f.cls) + ".npb";
        rec.subject = subject;
        rec.factors = f;
        rec.split = (subject == params.test_subject && order >= per_subj_total - params.test_count)
                        ? "test"
                        : "train";

        write_array((fs::path(out_dir) / rec.surface).string(), sm.pixels, "surface_map");
        write_array((fs::path(out_dir) / rec.image).string(), img.rgb, "image_rgb");
        if (!caption_written[static_cast<size_t>(f.cls)]) {
            write_array((fs::path(out_dir) / rec.caption).string(),
                        caption_embedding(f.cls, preset), "caption_embedding");
            caption_written[static_cast<size_t>(f.cls)] = true;
        }
        m.records.push_back(std::move(rec));
    }

    m.save((fs::path(out_dir) / "manifest.json").string());
    return m;
}

std::array<Manifest, 3> split_by_subject(const Manifest& m, int holdout_subject) {
    auto subj = m.subjects();
    if (std::find(subj.begin(), subj.end(), holdout_subject) == subj.end())
        throw DataError("split_by_subject: unknown subject id " +
                        std::to_string(holdout_subject));

    Manifest train = m, refine = m, test = m;
    train.records.clear();
    refine.records.clear();
    test.records.clear();
    for (const auto& r : m.records) {
        bool is_test = (r.subject == holdout_subject && r.split == "test");
        if (is_test) {
            test.records.push_back(r);
        } else {
            train.records.push_back(r);
            if (r.subject == holdout_subject) refine.records.push_back(r);
        }
    }
    return {std::move(train), std::move(refine), std::move(test)};
}

}  // namespace f2i
