#pragma once

#include <optional>

#include "psnerf/stage2.hpp"
#include "psnerf/synth.hpp"

namespace psnerf {

// Bad or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required artifact from an earlier pipeline step is missing (exit code 3).
struct UpstreamError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PriorConfig {
    enum class Source { Oracle, Files };
    Source source = Source::Oracle;
    std::filesystem::path path;  // Files: prior directory
    double normal_noise_deg = 8.0;
    double light_noise_deg = 10.0;
    double intensity_sigma = 0.1;
};

struct RenderConfig {
    int view = 0;
    int light_id = -1;  // -1: mean over the view's dataset lights
};

struct RelightLight {
    Vec3 direction = Vec3::UnitZ();
    double intensity = 1.0;
};

struct RelightConfig {
    int view = 0;
    std::vector<RelightLight> lights;  // averaged if more than one
    // optional view-space material override maps (PFM)
    std::filesystem::path albedo_override;
    std::filesystem::path specular_override;
};

struct MeshConfig {
    int resolution = 64;
    double level = 0.5;
};

struct EvalConfig {
    enum class Source { Stage2, Gt };
    Source source = Source::Stage2;
    int mesh_resolution = 64;
    long chamfer_samples = 20000;
};

// One JSON document drives every subcommand; sections a command does not use
// are ignored by it but still validated. Unknown keys are rejected.
struct RunConfig {
    int schema_version = 1;
    std::filesystem::path dataset;
    std::filesystem::path output;
    std::uint64_t seed = 0;
    int workers = 1;
    std::optional<SyntheticSceneSpec> synth;
    PriorConfig prior;
    Stage1Config stage1;
    Stage2Config stage2;
    RenderConfig render;
    RelightConfig relight;
    MeshConfig mesh;
    EvalConfig eval;

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace psnerf
