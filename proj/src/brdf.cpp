#include "psnerf/brdf.hpp"

namespace psnerf {

void SGBasisSpec::validate() const {
    if (lambdas.size() == 0) throw std::invalid_argument("SGBasisSpec: empty basis");
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        if (lambdas[i] <= 0.0) throw std::invalid_argument("SGBasisSpec: sharpness must be positive");
        if (i > 0 && lambdas[i] <= lambdas[i - 1])
            throw std::invalid_argument("SGBasisSpec: sharpness values must be strictly increasing");
    }
}

SGBasisSpec SGBasisSpec::log_spaced(int k, double lo, double hi) {
    SGBasisSpec s;
    s.lambdas.resize(k);
    for (int i = 0; i < k; ++i)
        s.lambdas[i] = lo * std::pow(hi / lo, k == 1 ? 0.0 : static_cast<double>(i) / (k - 1));
    s.validate();
    return s;
}

Vec3 half_vector(const Vec3& w_i, const Vec3& w_o) {
    Vec3 s = w_i + w_o;
    double n = s.norm();
    if (n < 1e-9) throw DegenerateHalfVectorError("half_vector: antiparallel directions");
    return s / n;
}

Eigen::ArrayXd sg_basis_eval(const SGBasisSpec& spec, const Vec3& h, const Vec3& n) {
    double hn = h.dot(n);
    return (spec.lambdas * (hn - 1.0)).exp();
}

Vec3 brdf_eval(const Vec3& rho_d, const Eigen::ArrayXd& omega, const SGBasisSpec& spec,
               const Vec3& w_i, const Vec3& w_o, const Vec3& n) {
    if (omega.size() != spec.lambdas.size())
        throw std::invalid_argument("brdf_eval: weight/basis size mismatch");
    double rho_s = (omega * sg_basis_eval(spec, half_vector(w_i, w_o), n)).sum();
    return rho_d + Vec3::Constant(rho_s);
}

ad::Var brdf_eval_tape(ad::Tape& t, ad::Var rho_d, ad::Var omega, const SGBasisSpec& spec,
                       ad::Var h, ad::Var n) {
    ad::Var hn = ad::dot_cols(t, h, n);                    // 1 x B
    ad::Var hn1 = ad::cadd(t, hn, -1.0);
    // exp(lambda_i * (h.n - 1)) as a k x B array
    ad::Arr lam(spec.lambdas.size(), 1);
    lam.col(0) = spec.lambdas;
    ad::Var basis = ad::exp(t, ad::matmul_const_left(t, lam, hn1));
    ad::Var rho_s = ad::dot_cols(t, omega, basis);          // 1 x B
    return ad::add(t, rho_d, rho_s);                        // row-broadcast over channels
}

}  // namespace psnerf
