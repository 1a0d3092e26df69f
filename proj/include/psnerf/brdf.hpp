#pragma once

#include "psnerf/scene.hpp"
#include "psnerf/tape.hpp"

namespace psnerf {

// Spherical-Gaussian specular basis D(h,n) = [exp(lambda_i (h.n - 1))].
struct SGBasisSpec {
    Eigen::ArrayXd lambdas;  // strictly increasing, all positive

    void validate() const;
    int lobe_count() const { return static_cast<int>(lambdas.size()); }

    // k lobes log-spaced in [lo, hi]; default covers broad-to-sharp highlights.
    static SGBasisSpec log_spaced(int k = 9, double lo = 2.0, double hi = 512.0);
};

struct DegenerateHalfVectorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Vec3 half_vector(const Vec3& w_i, const Vec3& w_o);

Eigen::ArrayXd sg_basis_eval(const SGBasisSpec& spec, const Vec3& h, const Vec3& n);

// f_r = rho_d + omega^T D(h, n); specular is achromatic (added to all channels).
Vec3 brdf_eval(const Vec3& rho_d, const Eigen::ArrayXd& omega, const SGBasisSpec& spec,
               const Vec3& w_i, const Vec3& w_o, const Vec3& n);

// Tape path: omega (k x B), rho_d (3 x B), h/n (3 x B) -> f_r (3 x B).
// h and n must be unit columns.
ad::Var brdf_eval_tape(ad::Tape& t, ad::Var rho_d, ad::Var omega, const SGBasisSpec& spec,
                       ad::Var h, ad::Var n);

}  // namespace psnerf
