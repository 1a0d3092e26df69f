#pragma once

#include "psnerf/field.hpp"
#include "psnerf/rng.hpp"

namespace psnerf {

struct EmptyMeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    void validate() const;  // index range + non-degenerate triangles
    std::pair<Vec3, Vec3> bounds() const;
    double area() const;
};

// Marching cubes on the opacity proxy alpha(x) = 1 - exp(-sigma(x) * delta),
// with delta one grid cell of the bbox diagonal. Degenerate triangles are
// dropped. Throws EmptyMeshError when the level set never crosses the grid.
TriangleMesh extract_mesh(const DensityField& field, const Vec3& bbox_min, const Vec3& bbox_max,
                          int resolution, double level = 0.5);

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh load_obj(const std::filesystem::path& path);

// Area-weighted uniform surface samples (deterministic under the stream).
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, int n_samples, RngStream& rng);

// Symmetric Chamfer distance in mm. Both meshes are rescaled by the
// ground-truth mesh's bounding transform so its longest axis spans [-1,1];
// one rescaled unit is 500 mm (the [-1,1] box spans 1000 mm). Point-sampled,
// nearest-neighbor via a uniform spatial grid.
double chamfer(const TriangleMesh& pred, const TriangleMesh& gt, int n_samples, RngStream& rng);

}  // namespace psnerf
