#include "translayer/density.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace translayer {

namespace {

double dot_n(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sq_norm(const double* a, int n) { return a ? dot_n(a, a, n) : 0.0; }

// |d1|^2 over the whole state + quartic well on the value block.
// well == Radial: (1 - |v|^2)^2; well == TwoPoint: |v-a|^2 |v-b|^2.
class QuarticWellDensity final : public EnergyDensity {
  public:
    enum class Well { Radial, TwoPoint };

    QuarticWellDensity(CompositeShape shape, Well well, std::vector<double> a,
                       std::vector<double> b, std::string name)
        : shape_(shape), well_(well), a_(std::move(a)), b_(std::move(b)),
          name_(std::move(name)) {
        shape_.check_valid();
    }

    const CompositeShape& shape() const override { return shape_; }
    int order() const override { return 1; }
    std::string name() const override { return name_; }
    int max_total_degree() const override { return 4; }

    double eval(const SlotView& at) const override {
        const int s = shape_.state_size();
        const double g = sq_norm(at.d1, s * shape_.dim);
        return g + well(at.value);
    }

    void add_grad(const SlotView& at, double w, const SlotGrad& out) const override {
        const int s = shape_.state_size();
        if (out.d1 && at.d1) {
            const int n = s * shape_.dim;
            for (int i = 0; i < n; ++i) out.d1[i] += w * 2.0 * at.d1[i];
        }
        if (out.value) well_grad(at.value, w, out.value);
    }

  private:
    double well(const double* v) const {
        const int s = shape_.state_size();
        if (well_ == Well::Radial) {
            const double r = 1.0 - sq_norm(v, s);
            return r * r;
        }
        double da = 0.0, db = 0.0;
        for (int i = 0; i < s; ++i) {
            da += (v[i] - a_[i]) * (v[i] - a_[i]);
            db += (v[i] - b_[i]) * (v[i] - b_[i]);
        }
        return da * db;
    }

    void well_grad(const double* v, double w, double* out) const {
        const int s = shape_.state_size();
        if (well_ == Well::Radial) {
            const double r = 1.0 - sq_norm(v, s);
            for (int i = 0; i < s; ++i) out[i] += w * (-4.0) * r * v[i];
            return;
        }
        double da = 0.0, db = 0.0;
        for (int i = 0; i < s; ++i) {
            da += (v[i] - a_[i]) * (v[i] - a_[i]);
            db += (v[i] - b_[i]) * (v[i] - b_[i]);
        }
        for (int i = 0; i < s; ++i)
            out[i] += w * 2.0 * ((v[i] - a_[i]) * db + da * (v[i] - b_[i]));
    }

    CompositeShape shape_;
    Well well_;
    std::vector<double> a_, b_;
    std::string name_;
};

class PolynomialDensity final : public EnergyDensity {
  public:
    PolynomialDensity(CompositeShape shape, int order,
                      std::vector<PolynomialTerm> terms, std::string label)
        : shape_(shape), order_(order), terms_(std::move(terms)),
          name_(std::move(label)) {
        shape_.check_valid();
        if (order_ != 1 && order_ != 2)
            throw std::invalid_argument("polynomial order must be 1 or 2");
        const int s = shape_.state_size();
        const int n = shape_.dim;
        for (const auto& t : terms_) {
            int deg = 0;
            for (const auto& f : t.factors) {
                if (f.exponent < 1)
                    throw std::invalid_argument("factor exponent must be >= 1");
                int limit = 0;
                switch (f.slot) {
                    case kSlotD2: limit = (order_ == 2) ? s * n * n : 0; break;
                    case kSlotD1: limit = s * n; break;
                    case kSlotValue: limit = s; break;
                    case kSlotInhom: limit = shape_.inhom_dim; break;
                    default: throw std::invalid_argument("bad slot id");
                }
                if (f.index < 0 || f.index >= limit)
                    throw std::invalid_argument("factor index out of range");
                deg += f.exponent;
            }
            max_degree_ = std::max(max_degree_, deg);
        }
        spot_check_nonnegative();
    }

    const CompositeShape& shape() const override { return shape_; }
    int order() const override { return order_; }
    std::string name() const override { return name_; }
    int max_total_degree() const override { return max_degree_; }

    double eval(const SlotView& at) const override {
        double total = 0.0;
        for (const auto& t : terms_) {
            double prod = t.coeff;
            for (const auto& f : t.factors) {
                const double x = fetch(at, f);
                for (int e = 0; e < f.exponent; ++e) prod *= x;
            }
            total += prod;
        }
        return total;
    }

    void add_grad(const SlotView& at, double w, const SlotGrad& out) const override {
        for (const auto& t : terms_) {
            for (std::size_t k = 0; k < t.factors.size(); ++k) {
                const auto& fk = t.factors[k];
                double* slot = nullptr;
                switch (fk.slot) {
                    case kSlotD2: slot = out.d2; break;
                    case kSlotD1: slot = out.d1; break;
                    case kSlotValue: slot = out.value; break;
                    case kSlotInhom: slot = nullptr; break;
                }
                if (!slot) continue;
                double prod = t.coeff * fk.exponent;
                const double xk = fetch(at, fk);
                for (int e = 0; e < fk.exponent - 1; ++e) prod *= xk;
                for (std::size_t j = 0; j < t.factors.size(); ++j) {
                    if (j == k) continue;
                    const double x = fetch(at, t.factors[j]);
                    for (int e = 0; e < t.factors[j].exponent; ++e) prod *= x;
                }
                slot[fk.index] += w * prod;
            }
        }
    }

  private:
    double fetch(const SlotView& at, const PolynomialFactor& f) const {
        const double* base = nullptr;
        switch (f.slot) {
            case kSlotD2: base = at.d2; break;
            case kSlotD1: base = at.d1; break;
            case kSlotValue: base = at.value; break;
            case kSlotInhom: base = at.inhom; break;
        }
        return base ? base[f.index] : 0.0;
    }

    void spot_check_nonnegative() const {
        std::mt19937 rng(12345u);
        std::uniform_real_distribution<double> uni(-2.0, 2.0);
        const int s = shape_.state_size();
        const int n = shape_.dim;
        std::vector<double> d2(static_cast<std::size_t>(s) * n * n);
        std::vector<double> d1(static_cast<std::size_t>(s) * n);
        std::vector<double> v(s), f(std::max(1, shape_.inhom_dim));
        for (int trial = 0; trial < 256; ++trial) {
            for (auto& x : d2) x = uni(rng);
            for (auto& x : d1) x = uni(rng);
            for (auto& x : v) x = uni(rng);
            for (auto& x : f) x = uni(rng);
            SlotView at{order_ == 2 ? d2.data() : nullptr, d1.data(), v.data(),
                        shape_.inhom_dim ? f.data() : nullptr};
            if (eval(at) < -1e-9)
                throw std::invalid_argument(
                    "polynomial density is negative on a sample point");
        }
    }

    CompositeShape shape_;
    int order_;
    std::vector<PolynomialTerm> terms_;
    std::string name_;
    int max_degree_ = 0;
};

}  // namespace

double EnergyDensity::well_value(const double* value, const double* inhom) const {
    SlotView at;
    at.value = value;
    at.inhom = inhom;
    return eval(at);
}

DensityPtr make_modica_mortola(int dim, int components) {
    CompositeShape sh;
    sh.dim = dim;
    sh.unconstrained_dim = components;
    return std::make_shared<QuarticWellDensity>(
        sh, QuarticWellDensity::Well::Radial, std::vector<double>{},
        std::vector<double>{}, "modica_mortola");
}

DensityPtr make_aviles_giga(int dim) {
    CompositeShape sh;
    sh.dim = dim;
    sh.grad_rows = 1;
    return std::make_shared<QuarticWellDensity>(
        sh, QuarticWellDensity::Well::Radial, std::vector<double>{},
        std::vector<double>{}, "aviles_giga");
}

DensityPtr make_two_gradient_well(int dim, int rows,
                                  const std::vector<double>& well_a,
                                  const std::vector<double>& well_b) {
    CompositeShape sh;
    sh.dim = dim;
    sh.grad_rows = rows;
    const int s = sh.state_size();
    if (static_cast<int>(well_a.size()) != s ||
        static_cast<int>(well_b.size()) != s)
        throw std::invalid_argument("well size must match rows x dim");
    // rank-one difference: d = a - b must satisfy d = col * row outer product;
    // equivalently all 2x2 minors vanish.
    std::vector<double> d(s);
    for (int i = 0; i < s; ++i) d[i] = well_a[i] - well_b[i];
    double norm = 0.0;
    for (double x : d) norm += x * x;
    if (norm <= 0.0) throw std::invalid_argument("wells must differ");
    for (int r1 = 0; r1 < rows; ++r1)
        for (int r2 = r1 + 1; r2 < rows; ++r2)
            for (int c1 = 0; c1 < dim; ++c1)
                for (int c2 = c1 + 1; c2 < dim; ++c2) {
                    const double minor = d[r1 * dim + c1] * d[r2 * dim + c2] -
                                         d[r1 * dim + c2] * d[r2 * dim + c1];
                    if (std::abs(minor) > 1e-10 * norm)
                        throw std::invalid_argument(
                            "well difference must be rank one");
                }
    return std::make_shared<QuarticWellDensity>(
        sh, QuarticWellDensity::Well::TwoPoint, well_a, well_b,
        "two_gradient_well");
}

DensityPtr make_polynomial(const CompositeShape& shape, int order,
                           std::vector<PolynomialTerm> terms, std::string label) {
    return std::make_shared<PolynomialDensity>(shape, order, std::move(terms),
                                               std::move(label));
}

namespace {

int block_value_offset(const CompositeShape& sh, int block) {
    switch (block) {
        case 0: return 0;
        case 1: return sh.grad_rows * sh.dim;
        case 2: return (sh.grad_rows + sh.divfree_rows) * sh.dim;
    }
    throw std::invalid_argument("block must be 0, 1 or 2");
}

int block_value_size(const CompositeShape& sh, int block) {
    switch (block) {
        case 0: return sh.grad_rows * sh.dim;
        case 1: return sh.divfree_rows * sh.dim;
        case 2: return sh.unconstrained_dim;
    }
    throw std::invalid_argument("block must be 0, 1 or 2");
}

}  // namespace

std::vector<PolynomialTerm> two_well_terms_on_block(const CompositeShape& shape,
                                                    int block,
                                                    const std::vector<double>& a,
                                                    const std::vector<double>& b) {
    const int off = block_value_offset(shape, block);
    const int n = block_value_size(shape, block);
    if (static_cast<int>(a.size()) != n || static_cast<int>(b.size()) != n)
        throw std::invalid_argument("well size mismatch");
    // (sum_i (z_i-a_i)^2) * (sum_j (z_j-b_j)^2), expanded term by term:
    // each (i, j) pair contributes (z_i^2 - 2 a_i z_i + a_i^2)(z_j^2 - ...).
    std::vector<PolynomialTerm> terms;
    auto add = [&terms](double c, std::vector<PolynomialFactor> fs) {
        if (c == 0.0) return;
        terms.push_back(PolynomialTerm{c, std::move(fs)});
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int zi = off + i, zj = off + j;
            const double ai = a[i], bj = b[j];
            if (i == j) {
                add(1.0, {{kSlotValue, zi, 4}});
                add(-2.0 * bj - 2.0 * ai, {{kSlotValue, zi, 3}});
                add(bj * bj + 4.0 * ai * bj + ai * ai, {{kSlotValue, zi, 2}});
                add(-2.0 * ai * bj * bj - 2.0 * ai * ai * bj,
                    {{kSlotValue, zi, 1}});
                add(ai * ai * bj * bj, {});
                continue;
            }
            add(1.0, {{kSlotValue, zi, 2}, {kSlotValue, zj, 2}});
            add(-2.0 * bj, {{kSlotValue, zi, 2}, {kSlotValue, zj, 1}});
            add(bj * bj, {{kSlotValue, zi, 2}});
            add(-2.0 * ai, {{kSlotValue, zi, 1}, {kSlotValue, zj, 2}});
            add(4.0 * ai * bj, {{kSlotValue, zi, 1}, {kSlotValue, zj, 1}});
            add(-2.0 * ai * bj * bj, {{kSlotValue, zi, 1}});
            add(ai * ai, {{kSlotValue, zj, 2}});
            add(-2.0 * ai * ai * bj, {{kSlotValue, zj, 1}});
            add(ai * ai * bj * bj, {});
        }
    return terms;
}

std::vector<PolynomialTerm> grad_penalty_terms_on_block(const CompositeShape& shape,
                                                        int block, double coeff) {
    const int off = block_value_offset(shape, block);
    const int n = block_value_size(shape, block);
    std::vector<PolynomialTerm> terms;
    for (int i = 0; i < n; ++i)
        for (int axis = 0; axis < shape.dim; ++axis)
            terms.push_back(
                PolynomialTerm{coeff, {{kSlotD1, (off + i) * shape.dim + axis, 2}}});
    return terms;
}

}  // namespace translayer
