#pragma once

#include <array>
#include <vector>

#include "xloc/geometry.hpp"

namespace xloc::detail {

bool is_degenerate_triplet(const std::array<Vec3, 3>& X);
Vec3 bearing(const CameraIntrinsics& K, const Pixel& p);
// Non-throwing core of solve_p3p; callers check degeneracy first.
void p3p_candidates(const std::array<Vec3, 3>& f, const std::array<Vec3, 3>& X, std::vector<Pose>* out);

}  // namespace xloc::detail
