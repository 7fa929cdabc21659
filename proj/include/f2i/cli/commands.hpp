#pragma once

#include <memory>
#include <string>

#include "f2i/train/config.hpp"
#include "f2i/train/pipeline.hpp"

namespace f2i {

// One function per CLI subcommand; each throws typed errors that the entry
// point maps to exit codes. Final outputs are written to a temporary path
// and promoted atomically.

void cmd_gen_data(const RunConfig& cfg);
void cmd_pretrain_encoder(const RunConfig& cfg);
void cmd_pretrain_backbone(const RunConfig& cfg);
void cmd_pretrain_cross(const RunConfig& cfg);
void cmd_refine(const RunConfig& cfg);
void cmd_decode(const RunConfig& cfg);
void cmd_sweep_alpha(const RunConfig& cfg);
void cmd_swap(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);

/// Rebuild a full pipeline (weights + flags + latent scale) from a stage-ii
/// or stage-iii checkpoint.
std::unique_ptr<Pipeline> pipeline_from_checkpoint(const std::string& ckpt_dir);

/// Resolve an output path under $F2I_RUN_ROOT when relative.
std::string resolve_out(const std::string& path);

}  // namespace f2i
