#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "psnerf/rng.hpp"
#include "psnerf/tape.hpp"

namespace psnerf {

enum class OutputActivation { Linear, Sigmoid, UnitNormalize, Softplus };

struct MlpSpec {
    int input_dim = 0;
    int hidden_width = 0;
    int n_layers = 0;  // number of weight layers, including the output layer
    std::set<int> skip_layers;  // hidden layer indices where the input is re-concatenated
    int output_dim = 0;
    OutputActivation output_activation = OutputActivation::Linear;

    void validate() const;
    // Input width of weight layer i (0-based).
    int layer_input_dim(int i) const;
    std::size_t parameter_count() const;
};

struct MlpParams {
    std::vector<Eigen::ArrayXXd> weights;  // weights[i]: out x in
    std::vector<Eigen::ArrayXXd> biases;   // biases[i]: out x 1
};

// Tape handles for one forward pass; params are re-registered per tape.
struct MlpTapeParams {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

MlpParams mlp_init(const MlpSpec& spec, RngStream& rng);

// Plain (non-recording) batched evaluation; x columns are input vectors.
Eigen::ArrayXXd mlp_eval(const MlpSpec& spec, const MlpParams& params,
                         const Eigen::ArrayXXd& x);

MlpTapeParams mlp_register(ad::Tape& tape, const MlpParams& params);

// Batched evaluation on the tape; x may itself be a differentiable variable.
ad::Var mlp_eval(ad::Tape& tape, const MlpSpec& spec, const MlpTapeParams& params,
                 ad::Var x);

// Read accumulated gradients back into MlpParams-shaped storage.
MlpParams mlp_collect_grads(const ad::Tape& tape, const MlpTapeParams& tp,
                            const MlpParams& like);

// Versioned little-endian binary checkpoint (spec fields + parameter arrays).
void mlp_save(const std::filesystem::path& path, const MlpSpec& spec, const MlpParams& params);
std::pair<MlpSpec, MlpParams> mlp_load(const std::filesystem::path& path);

// ---- Adam ----
struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState(const MlpParams& like, AdamConfig cfg);

    // Standard Adam with bias correction. Throws on non-finite gradients,
    // naming the parameter block.
    void step(MlpParams& params, const MlpParams& grads);
    long iteration() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long step_count_ = 0;
    std::vector<Eigen::ArrayXXd> m_w_, v_w_, m_b_, v_b_;
};

// Adam over a single flat parameter vector (used for light parameters).
class AdamVecState {
public:
    AdamVecState(Eigen::Index n, AdamConfig cfg);
    void step(Eigen::ArrayXd& params, const Eigen::ArrayXd& grads);

private:
    AdamConfig cfg_;
    long step_count_ = 0;
    Eigen::ArrayXd m_, v_;
};

}  // namespace psnerf
