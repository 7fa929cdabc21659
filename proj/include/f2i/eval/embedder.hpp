#pragma once

#include <functional>
#include <string>
#include <vector>

#include "f2i/data/types.hpp"
#include "f2i/eval/probes.hpp"
#include "f2i/train/pipeline.hpp"

namespace f2i {

/// Named pure image -> feature-vector function with a fixed output
/// dimension. Built-ins: raw-pixel flatten, codec-latent flatten, and the
/// synthetic semantic-factor probe. The two-way / distance protocol accepts
/// any of them, so external embedders can be plugged in later.
struct Embedder {
    std::string name;
    std::function<std::vector<double>(const ImageSample&)> fn;
};

struct EmbedderRegistry {
    std::vector<Embedder> entries;

    const Embedder& get(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw UsageError("unknown embedder '" + name + "'");
    }

    /// pipeline enables "latent"; factor_probe enables "factor-probe".
    static EmbedderRegistry build(const Pipeline* pipeline = nullptr,
                                  const RidgeProbe* factor_probe = nullptr) {
        EmbedderRegistry reg;
        reg.entries.push_back({"pixel", [](const ImageSample& im) { return flatten_image(im); }});
        if (pipeline)
            reg.entries.push_back({"latent", [pipeline](const ImageSample& im) {
                                       Tensor z = pipeline->codec.encode_t(im.rgb.reshaped(
                                           {1, 3, im.rgb.dim(1), im.rgb.dim(2)}));
                                       std::vector<double> v(static_cast<size_t>(z.numel()));
                                       for (int64_t i = 0; i < z.numel(); ++i)
                                           v[static_cast<size_t>(i)] = z[i];
                                       return v;
                                   }});
        if (factor_probe)
            reg.entries.push_back({"factor-probe", [factor_probe](const ImageSample& im) {
                                       return factor_probe->apply(flatten_image(im));
                                   }});
        return reg;
    }
};

}  // namespace f2i
