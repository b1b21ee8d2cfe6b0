#pragma once

#include <array>

namespace bsnsch {

// Symmetric Gauss rules on the reference triangle in barycentric coordinates.
// Weights sum to 1; multiply by the physical triangle area.
struct TriQuadPoint {
    double l0, l1, l2, w;
};

// Degree 2, interior points, positive weights.
inline constexpr std::array<TriQuadPoint, 3> tri_quad_deg2{{
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0},
}};

// Degree 4 (Dunavant), positive weights.
inline constexpr std::array<TriQuadPoint, 6> tri_quad_deg4{{
    {0.108103018168070, 0.445948490915965, 0.445948490915965, 0.223381589678011},
    {0.445948490915965, 0.108103018168070, 0.445948490915965, 0.223381589678011},
    {0.445948490915965, 0.445948490915965, 0.108103018168070, 0.223381589678011},
    {0.816847572980459, 0.091576213509771, 0.091576213509771, 0.109951743655322},
    {0.091576213509771, 0.816847572980459, 0.091576213509771, 0.109951743655322},
    {0.091576213509771, 0.091576213509771, 0.816847572980459, 0.109951743655322},
}};

// Degree 5 (Dunavant 7-point), positive weights.
inline constexpr std::array<TriQuadPoint, 7> tri_quad_deg5{{
    {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225},
    {0.059715871789770, 0.470142064105115, 0.470142064105115, 0.132394152788506},
    {0.470142064105115, 0.059715871789770, 0.470142064105115, 0.132394152788506},
    {0.470142064105115, 0.470142064105115, 0.059715871789770, 0.132394152788506},
    {0.797426985353087, 0.101286507323456, 0.101286507323456, 0.125939180544827},
    {0.101286507323456, 0.797426985353087, 0.101286507323456, 0.125939180544827},
    {0.101286507323456, 0.101286507323456, 0.797426985353087, 0.125939180544827},
}};

// Gauss-Legendre on [0,1]; weights sum to 1, multiply by edge length.
struct EdgeQuadPoint {
    double t, w;
};

inline constexpr std::array<EdgeQuadPoint, 2> edge_quad_deg3{{
    {0.211324865405187, 0.5},
    {0.788675134594813, 0.5},
}};

inline constexpr std::array<EdgeQuadPoint, 3> edge_quad_deg5{{
    {0.112701665379258, 5.0 / 18.0},
    {0.5, 8.0 / 18.0},
    {0.887298334620742, 5.0 / 18.0},
}};

} // namespace bsnsch
