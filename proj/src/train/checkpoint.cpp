#include "f2i/train/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "f2i/core/errors.hpp"
#include "f2i/data/array_io.hpp"

namespace f2i {

namespace fs = std::filesystem;
using json = nlohmann::json;

void save_checkpoint(const std::string& dir, const NamedTensors& params, const NamedTensors& opt_m,
                     const NamedTensors& opt_v, int64_t opt_steps, const CheckpointMeta& meta) {
    fs::create_directories(fs::path(dir) / "params");
    if (!opt_m.empty()) fs::create_directories(fs::path(dir) / "opt");

    json index;
    index["format"] = 1;
    index["kind"] = meta.kind;
    index["preset"] = meta.preset;
    index["iteration"] = meta.iteration;
    index["extra"] = meta.extra;
    index["opt_steps"] = opt_steps;

    json plist = json::array();
    for (const auto& [name, t] : params) {
        std::string file = "params/" + name + ".npb";
        write_array((fs::path(dir) / file).string(), t, "param");
        plist.push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
    }
    index["params"] = std::move(plist);

    json olist = json::array();
    for (size_t i = 0; i < opt_m.size(); ++i) {
        const auto& name = opt_m[i].first;
        std::string fm = "opt/" + name + ".m.npb";
        std::string fv = "opt/" + name + ".v.npb";
        write_array((fs::path(dir) / fm).string(), opt_m[i].second, "adam_m");
        write_array((fs::path(dir) / fv).string(), opt_v[i].second, "adam_v");
        olist.push_back({{"name", name}, {"m", fm}, {"v", fv}});
    }
    index["opt"] = std::move(olist);

    std::ofstream f((fs::path(dir) / "index.json").string(), std::ios::trunc);
    if (!f) throw CheckpointError("checkpoint: cannot write index in " + dir);
    f << index.dump(1) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream f((fs::path(dir) / "index.json").string());
    if (!f) throw CheckpointError("checkpoint: missing index.json in " + dir);
    json index;
    try {
        f >> index;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad index.json: ") + e.what());
    }

    LoadedCheckpoint out;
    out.meta.kind = index.at("kind").get<std::string>();
    out.meta.preset = index.at("preset").get<std::string>();
    out.meta.iteration = index.at("iteration").get<int64_t>();
    out.meta.extra = index.value("extra", json::object());
    out.opt_steps = index.value("opt_steps", int64_t{0});

    for (const auto& e : index.at("params")) {
        std::string name = e.at("name").get<std::string>();
        std::string file = e.at("file").get<std::string>();
        fs::path path = fs::path(dir) / file;
        if (!fs::exists(path))
            throw CheckpointError("checkpoint: missing parameter file for '" + name + "' (" +
                                  file + ")");
        Tensor t;
        try {
            t = read_array(path.string());
        } catch (const std::exception& ex) {
            throw CheckpointError("checkpoint: unreadable parameter '" + name + "': " + ex.what());
        }
        auto shape = e.at("shape").get<std::vector<int64_t>>();
        if (shape != t.shape())
            throw CheckpointError("checkpoint: shape mismatch for parameter '" + name + "'");
        out.params.emplace(name, std::move(t));
    }
    for (const auto& e : index.value("opt", json::array())) {
        std::string name = e.at("name").get<std::string>();
        fs::path pm = fs::path(dir) / e.at("m").get<std::string>();
        fs::path pv = fs::path(dir) / e.at("v").get<std::string>();
        if (!fs::exists(pm) || !fs::exists(pv))
            throw CheckpointError("checkpoint: missing optimizer state for '" + name + "'");
        out.opt_m.emplace(name, read_array(pm.string()));
        out.opt_v.emplace(name, read_array(pv.string()));
    }
    return out;
}

const Tensor& LoadedCheckpoint::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
        throw CheckpointError("checkpoint: missing parameter '" + name + "'");
    return it->second;
}

void apply_to_pipeline(Pipeline& p, const LoadedCheckpoint& ckpt,
                       const std::vector<std::string>& prefixes) {
    if (ckpt.meta.preset != p.preset.name)
        throw CheckpointError("checkpoint: preset mismatch (checkpoint '" + ckpt.meta.preset +
                              "', pipeline '" + p.preset.name + "')");
    for (auto& [name, var] : p.named_params()) {
        bool wanted = prefixes.empty();
        for (const auto& pre : prefixes)
            if (name.rfind(pre, 0) == 0) wanted = true;
        if (!wanted) continue;
        const Tensor& t = ckpt.param(name);
        if (!t.same_shape(var->val))
            throw CheckpointError("checkpoint: shape mismatch for parameter '" + name + "'");
        var->val = t;
    }
    if (ckpt.meta.extra.contains("latent_scale"))
        p.latent_scale = ckpt.meta.extra["latent_scale"].get<float>();
}

NamedTensors pipeline_params(const Pipeline& p, const std::vector<std::string>& prefixes) {
    NamedTensors out;
    for (const auto& [name, var] : p.named_params()) {
        bool wanted = prefixes.empty();
        for (const auto& pre : prefixes)
            if (name.rfind(pre, 0) == 0) wanted = true;
        if (wanted) out.emplace_back(name, var->val);
    }
    return out;
}

}  // namespace f2i
