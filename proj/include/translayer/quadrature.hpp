#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace translayer {

// Gauss-Legendre rule mapped to [0, 1]; exact for polynomials of degree
// 2 * points - 1. Supported point counts: 1..8.
struct GaussRule {
    std::vector<double> nodes, weights;
    int points() const { return static_cast<int>(nodes.size()); }
};

inline GaussRule gauss_rule(int points) {
    // abscissae/weights on [-1, 1], positive half; mirrored below
    static const double kx[8][4] = {
        {0.0, 0, 0, 0},
        {0.5773502691896257645, 0, 0, 0},
        {0.0, 0.7745966692414833770, 0, 0},
        {0.3399810435848562648, 0.8611363115940525752, 0, 0},
        {0.0, 0.5384693101056830910, 0.9061798459386639928, 0},
        {0.2386191860831969086, 0.6612093864662645137, 0.9324695142031520278, 0},
        {0.0, 0.4058451513773971669, 0.7415311855993944399, 0.9491079123427585245},
        {0.1834346424956498049, 0.5255324099163289858, 0.7966664774136267395,
         0.9602898564975362317}};
    static const double kw[8][4] = {
        {2.0, 0, 0, 0},
        {1.0, 0, 0, 0},
        {0.8888888888888888889, 0.5555555555555555556, 0, 0},
        {0.6521451548625461426, 0.3478548451374538574, 0, 0},
        {0.5688888888888888889, 0.4786286704993664680, 0.2369268850561890875, 0},
        {0.4679139345726910474, 0.3607615730481386076, 0.1713244923791703450, 0},
        {0.4179591836734693878, 0.3818300505051189449, 0.2797053914892766679,
         0.1294849661688696933},
        {0.3626837833783619830, 0.3137066458778872873, 0.2223810344533744705,
         0.1012285362903762592}};
    if (points < 1 || points > 8) throw std::invalid_argument("gauss points 1..8");
    GaussRule r;
    const int half = (points + 1) / 2;
    const bool has_center = points % 2 == 1;
    // ascending nodes on [0, 1]
    for (int i = half - 1; i >= 0; --i) {
        if (has_center && i == 0) continue;
        r.nodes.push_back(0.5 * (1.0 - kx[points - 1][i]));
        r.weights.push_back(0.5 * kw[points - 1][i]);
    }
    if (has_center) {
        r.nodes.push_back(0.5);
        r.weights.push_back(0.5 * kw[points - 1][0]);
    }
    for (int i = has_center ? 1 : 0; i < half; ++i) {
        r.nodes.push_back(0.5 * (1.0 + kx[points - 1][i]));
        r.weights.push_back(0.5 * kw[points - 1][i]);
    }
    return r;
}

// Smallest rule exact for the given polynomial degree, capped at 8 points.
inline GaussRule gauss_rule_for_degree(int degree) {
    int pts = degree / 2 + 1;
    if (pts < 1) pts = 1;
    if (pts > 8) pts = 8;
    return gauss_rule(pts);
}

}  // namespace translayer
