#pragma once

#include "psnerf/config.hpp"
#include "psnerf/metrics.hpp"

namespace psnerf {

// Pipeline subcommands. Each reads its inputs from cfg.dataset / cfg.output,
// writes its artifacts under cfg.output, and throws:
//   ConfigError    for an unusable configuration,
//   UpstreamError  when a prior pipeline step's artifacts are missing,
//   anything else  for runtime (numeric / I/O) failures.
void cmd_synth(const RunConfig& cfg);
void cmd_stage1(const RunConfig& cfg);
void cmd_stage2(const RunConfig& cfg);
void cmd_render(const RunConfig& cfg);
void cmd_relight(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_extract_mesh(const RunConfig& cfg);

// Dispatch by subcommand name; throws ConfigError for an unknown name.
void run_command(const std::string& name, const RunConfig& cfg);

// The guidance prior a run uses: loaded from files or synthesized from the
// dataset's gt sidecar, deterministically from the run seed.
GuidancePrior make_prior(const RunConfig& cfg, const MultiLightDataset& dataset);

}  // namespace psnerf
