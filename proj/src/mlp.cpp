#include "psnerf/mlp.hpp"

#include <cstring>
#include <fstream>

namespace psnerf {

void MlpSpec::validate() const {
    if (n_layers < 1) throw std::invalid_argument("MlpSpec: n_layers must be >= 1");
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("MlpSpec: input/output dims must be >= 1");
    if (n_layers > 1 && hidden_width < 1)
        throw std::invalid_argument("MlpSpec: hidden_width must be >= 1");
    for (int s : skip_layers)
        if (s <= 0 || s >= n_layers)
            throw std::invalid_argument("MlpSpec: skip layer index out of (0, n_layers)");
}

int MlpSpec::layer_input_dim(int i) const {
    if (i == 0) return input_dim;
    return hidden_width + (skip_layers.count(i) ? input_dim : 0);
}

std::size_t MlpSpec::parameter_count() const {
    std::size_t n = 0;
    for (int i = 0; i < n_layers; ++i) {
        int out = (i == n_layers - 1) ? output_dim : hidden_width;
        n += static_cast<std::size_t>(out) * layer_input_dim(i) + out;
    }
    return n;
}

MlpParams mlp_init(const MlpSpec& spec, RngStream& rng) {
    spec.validate();
    MlpParams p;
    for (int i = 0; i < spec.n_layers; ++i) {
        int in = spec.layer_input_dim(i);
        int out = (i == spec.n_layers - 1) ? spec.output_dim : spec.hidden_width;
        double bound = std::sqrt(1.0 / in);  // fan-in scaled uniform
        Eigen::ArrayXXd w(out, in);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                w(r, c) = bound * (2.0 * rng.next_uniform() - 1.0);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::ArrayXXd::Zero(out, 1));
    }
    return p;
}

namespace {

Eigen::ArrayXXd apply_activation(OutputActivation act, Eigen::ArrayXXd h) {
    switch (act) {
        case OutputActivation::Linear: return h;
        case OutputActivation::Sigmoid: return 1.0 / (1.0 + (-h).exp());
        case OutputActivation::Softplus: return h.max(0.0) + (1.0 + (-h.abs()).exp()).log();
        case OutputActivation::UnitNormalize: {
            // epsilon keeps a dead-ReLU zero column finite (matches the tape path)
            Eigen::ArrayXd norms = h.matrix().colwise().norm().array() + 1e-9;
            return h.rowwise() / norms.transpose();
        }
    }
    throw std::logic_error("unknown activation");
}

}  // namespace

Eigen::ArrayXXd mlp_eval(const MlpSpec& spec, const MlpParams& params,
                         const Eigen::ArrayXXd& x) {
    if (x.rows() != spec.input_dim) throw std::invalid_argument("mlp_eval: input dim mismatch");
    Eigen::ArrayXXd h = x;
    for (int i = 0; i < spec.n_layers; ++i) {
        if (i > 0 && spec.skip_layers.count(i)) {
            Eigen::ArrayXXd cat(h.rows() + x.rows(), h.cols());
            cat.topRows(h.rows()) = h;
            cat.bottomRows(x.rows()) = x;
            h = std::move(cat);
        }
        h = ((params.weights[i].matrix() * h.matrix()).colwise() +
             params.biases[i].col(0).matrix()).array();
        if (i < spec.n_layers - 1) h = h.max(0.0);
    }
    return apply_activation(spec.output_activation, std::move(h));
}

MlpTapeParams mlp_register(ad::Tape& tape, const MlpParams& params) {
    MlpTapeParams tp;
    for (const auto& w : params.weights) tp.weights.push_back(tape.input(w));
    for (const auto& b : params.biases) tp.biases.push_back(tape.input(b));
    return tp;
}

ad::Var mlp_eval(ad::Tape& tape, const MlpSpec& spec, const MlpTapeParams& params,
                 ad::Var x) {
    if (tape.value(x).rows() != spec.input_dim)
        throw std::invalid_argument("mlp_eval: input dim mismatch");
    ad::Var h = x;
    int n = spec.n_layers;
    for (int i = 0; i < n; ++i) {
        if (i > 0 && spec.skip_layers.count(i)) h = ad::concat_rows(tape, h, x);
        h = ad::add_colwise(tape, ad::matmul(tape, params.weights[i], h), params.biases[i]);
        if (i < n - 1) h = ad::relu(tape, h);
    }
    switch (spec.output_activation) {
        case OutputActivation::Linear: return h;
        case OutputActivation::Sigmoid: return ad::sigmoid(tape, h);
        case OutputActivation::Softplus: return ad::softplus(tape, h);
        case OutputActivation::UnitNormalize: return ad::normalize_cols(tape, h, 1e-9);
    }
    throw std::logic_error("unknown activation");
}

MlpParams mlp_collect_grads(const ad::Tape& tape, const MlpTapeParams& tp,
                            const MlpParams& like) {
    MlpParams g;
    for (std::size_t i = 0; i < tp.weights.size(); ++i) {
        g.weights.push_back(tape.has_grad(tp.weights[i])
                                ? tape.grad(tp.weights[i])
                                : ad::Arr(Eigen::ArrayXXd::Zero(like.weights[i].rows(),
                                                                like.weights[i].cols())));
        g.biases.push_back(tape.has_grad(tp.biases[i])
                               ? tape.grad(tp.biases[i])
                               : ad::Arr(Eigen::ArrayXXd::Zero(like.biases[i].rows(),
                                                               like.biases[i].cols())));
    }
    return g;
}

// ---- checkpoint io ----
// Layout: magic "PSNF", u32 version=1, spec fields (i32), u32 skip count +
// i32 skips, u32 layer count, then per layer u32 rows/cols + f64 data for W
// and b, all little-endian.
namespace {

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_arr(std::ofstream& f, const Eigen::ArrayXXd& a) {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(a.rows()));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(a.cols()));
    f.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(sizeof(double) * a.size()));
}

Eigen::ArrayXXd get_arr(std::ifstream& f) {
    auto rows = get<std::uint32_t>(f);
    auto cols = get<std::uint32_t>(f);
    Eigen::ArrayXXd a(rows, cols);
    f.read(reinterpret_cast<char*>(a.data()),
           static_cast<std::streamsize>(sizeof(double) * a.size()));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return a;
}

}  // namespace

void mlp_save(const std::filesystem::path& path, const MlpSpec& spec, const MlpParams& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
    f.write("PSNF", 4);
    put<std::uint32_t>(f, 1);
    put<std::int32_t>(f, spec.input_dim);
    put<std::int32_t>(f, spec.hidden_width);
    put<std::int32_t>(f, spec.n_layers);
    put<std::int32_t>(f, spec.output_dim);
    put<std::int32_t>(f, static_cast<std::int32_t>(spec.output_activation));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(spec.skip_layers.size()));
    for (int s : spec.skip_layers) put<std::int32_t>(f, s);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(params.weights.size()));
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        put_arr(f, params.weights[i]);
        put_arr(f, params.biases[i]);
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

std::pair<MlpSpec, MlpParams> mlp_load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::strncmp(magic, "PSNF", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    auto version = get<std::uint32_t>(f);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    MlpSpec spec;
    spec.input_dim = get<std::int32_t>(f);
    spec.hidden_width = get<std::int32_t>(f);
    spec.n_layers = get<std::int32_t>(f);
    spec.output_dim = get<std::int32_t>(f);
    spec.output_activation = static_cast<OutputActivation>(get<std::int32_t>(f));
    auto nskip = get<std::uint32_t>(f);
    for (std::uint32_t i = 0; i < nskip; ++i) spec.skip_layers.insert(get<std::int32_t>(f));
    auto nlayer = get<std::uint32_t>(f);
    MlpParams p;
    for (std::uint32_t i = 0; i < nlayer; ++i) {
        p.weights.push_back(get_arr(f));
        p.biases.push_back(get_arr(f));
    }
    spec.validate();
    return {spec, p};
}

// ---- Adam ----

AdamState::AdamState(const MlpParams& like, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& w : like.weights) {
        m_w_.push_back(Eigen::ArrayXXd::Zero(w.rows(), w.cols()));
        v_w_.push_back(Eigen::ArrayXXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : like.biases) {
        m_b_.push_back(Eigen::ArrayXXd::Zero(b.rows(), b.cols()));
        v_b_.push_back(Eigen::ArrayXXd::Zero(b.rows(), b.cols()));
    }
}

namespace {

void adam_update(Eigen::ArrayXXd& p, const Eigen::ArrayXXd& g, Eigen::ArrayXXd& m,
                 Eigen::ArrayXXd& v, const AdamConfig& c, long t, const char* block) {
    if (!g.allFinite())
        throw std::runtime_error(std::string("adam: non-finite gradient in block ") + block);
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    double mc = 1.0 - std::pow(c.beta1, t);
    double vc = 1.0 - std::pow(c.beta2, t);
    p -= c.learning_rate * (m / mc) / ((v / vc).sqrt() + c.eps);
}

}  // namespace

void AdamState::step(MlpParams& params, const MlpParams& grads) {
    if (grads.weights.size() != params.weights.size())
        throw std::invalid_argument("adam: gradient/parameter block count mismatch");
    ++step_count_;
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        std::string name = "layer" + std::to_string(i);
        adam_update(params.weights[i], grads.weights[i], m_w_[i], v_w_[i], cfg_, step_count_,
                    (name + ".weight").c_str());
        adam_update(params.biases[i], grads.biases[i], m_b_[i], v_b_[i], cfg_, step_count_,
                    (name + ".bias").c_str());
    }
}

AdamVecState::AdamVecState(Eigen::Index n, AdamConfig cfg)
    : cfg_(cfg), m_(Eigen::ArrayXd::Zero(n)), v_(Eigen::ArrayXd::Zero(n)) {}

void AdamVecState::step(Eigen::ArrayXd& params, const Eigen::ArrayXd& grads) {
    if (!grads.allFinite()) throw std::runtime_error("adam: non-finite gradient in light block");
    ++step_count_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grads;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grads.square();
    double mc = 1.0 - std::pow(cfg_.beta1, step_count_);
    double vc = 1.0 - std::pow(cfg_.beta2, step_count_);
    params -= cfg_.learning_rate * (m_ / mc) / ((v_ / vc).sqrt() + cfg_.eps);
}

}  // namespace psnerf
