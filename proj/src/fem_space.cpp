#include "thetaincl/fem_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "thetaincl/errors.hpp"
#include "thetaincl/quadrature.hpp"

namespace thetaincl {

namespace {

// |s|^{p-2} s, continuous at 0 for p > 1.
double signed_power(double s, double p) {
    if (s == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(s), p - 1.0), s);
}

void require_same_mesh(const DiscreteFunction& u, const DiscreteFunction& v) {
    if (u.mesh != v.mesh)
        throw std::invalid_argument("fem_space: operands live on different meshes");
}

} // namespace

// --- mesh construction -----------------------------------------------------

std::shared_ptr<const SpatialMesh> SpatialMesh::interval(double length, int elements,
                                                         BoundaryCondition bc) {
    if (!(length > 0.0)) throw std::invalid_argument("mesh: length must be positive");
    if (elements < 1) throw std::invalid_argument("mesh: need at least one element");
    std::vector<double> nodes(static_cast<std::size_t>(elements) + 1);
    for (int i = 0; i <= elements; ++i)
        nodes[static_cast<std::size_t>(i)] = length * static_cast<double>(i) / elements;
    nodes.back() = length;
    return from_nodes(std::move(nodes), bc);
}

std::shared_ptr<const SpatialMesh> SpatialMesh::from_nodes(std::vector<double> nodes,
                                                           BoundaryCondition bc) {
    if (nodes.size() < 2 || nodes.front() != 0.0)
        throw std::invalid_argument("mesh: nodes must start at 0 with >= 1 element");
    auto mesh = std::shared_ptr<SpatialMesh>(new SpatialMesh());
    mesh->bc_ = bc;
    mesh->nodes_ = std::move(nodes);
    mesh->h_.resize(mesh->nodes_.size() - 1);
    for (std::size_t e = 0; e + 1 < mesh->nodes_.size(); ++e) {
        mesh->h_[e] = mesh->nodes_[e + 1] - mesh->nodes_[e];
        if (!(mesh->h_[e] > 0.0))
            throw std::invalid_argument("mesh: nodes must be strictly increasing");
    }
    if (bc == BoundaryCondition::dirichlet && mesh->nodes_.size() < 3)
        throw std::invalid_argument("mesh: Dirichlet mode needs an interior node");
    mesh->assemble();
    return mesh;
}

std::shared_ptr<const SpatialMesh> SpatialMesh::desk() {
    auto mesh = std::shared_ptr<SpatialMesh>(new SpatialMesh());
    mesh->desk_ = true;
    mesh->bc_ = BoundaryCondition::natural;
    mesh->nodes_ = {0.0};
    mesh->free_count_ = 1;
    mesh->free_index_ = {0};
    mesh->node_of_free_ = {0};
    mesh->mass_.resize(1, 1);
    mesh->mass_.insert(0, 0) = 1.0;
    mesh->mass_.makeCompressed();
    mesh->gram2_ = mesh->mass_;
    mesh->mass_ldlt_.compute(mesh->mass_);
    mesh->gram2_ldlt_.compute(mesh->gram2_);
    return mesh;
}

void SpatialMesh::assemble() {
    const int n_nodes = node_count();
    free_index_.assign(static_cast<std::size_t>(n_nodes), -1);
    node_of_free_.clear();
    for (int j = 0; j < n_nodes; ++j) {
        const bool boundary = (j == 0 || j == n_nodes - 1);
        if (bc_ == BoundaryCondition::dirichlet && boundary) continue;
        free_index_[static_cast<std::size_t>(j)] = static_cast<int>(node_of_free_.size());
        node_of_free_.push_back(j);
    }
    free_count_ = static_cast<int>(node_of_free_.size());

    std::vector<Eigen::Triplet<double>> mass_t, stiff_t;
    for (int e = 0; e < element_count(); ++e) {
        const double h = h_[static_cast<std::size_t>(e)];
        const int gl[2] = {e, e + 1};
        // Local consistent mass h/6 [[2,1],[1,2]] and stiffness 1/h [[1,-1],[-1,1]].
        const double m[2][2] = {{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}};
        const double k[2][2] = {{1.0 / h, -1.0 / h}, {-1.0 / h, 1.0 / h}};
        for (int a = 0; a < 2; ++a) {
            const int ia = free_index_[static_cast<std::size_t>(gl[a])];
            if (ia < 0) continue;
            for (int b = 0; b < 2; ++b) {
                const int ib = free_index_[static_cast<std::size_t>(gl[b])];
                if (ib < 0) continue;
                mass_t.emplace_back(ia, ib, m[a][b]);
                stiff_t.emplace_back(ia, ib, k[a][b]);
            }
        }
    }
    mass_.resize(free_count_, free_count_);
    mass_.setFromTriplets(mass_t.begin(), mass_t.end());
    Eigen::SparseMatrix<double> stiffness(free_count_, free_count_);
    stiffness.setFromTriplets(stiff_t.begin(), stiff_t.end());
    gram2_ = (bc_ == BoundaryCondition::natural)
                 ? Eigen::SparseMatrix<double>(stiffness + mass_)
                 : stiffness;
    mass_.makeCompressed();
    gram2_.makeCompressed();

    mass_ldlt_.compute(mass_);
    gram2_ldlt_.compute(gram2_);
    if (mass_ldlt_.info() != Eigen::Success || gram2_ldlt_.info() != Eigen::Success)
        throw std::runtime_error("mesh: Gram factorization failed (matrix not SPD?)");
}

Eigen::VectorXd SpatialMesh::mass_solve(const Eigen::VectorXd& rhs) const {
    return mass_ldlt_.solve(rhs);
}

Eigen::VectorXd SpatialMesh::gram2_solve(const Eigen::VectorXd& rhs) const {
    return gram2_ldlt_.solve(rhs);
}

Eigen::VectorXd SpatialMesh::full_values(const Eigen::VectorXd& free_coeffs) const {
    if (free_coeffs.size() != free_count_)
        throw std::invalid_argument("fem_space: coefficient size mismatch");
    if (desk_) return free_coeffs;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(node_count());
    for (int i = 0; i < free_count_; ++i)
        full[node_of_free_[static_cast<std::size_t>(i)]] = free_coeffs[i];
    return full;
}

Eigen::VectorXd SpatialMesh::slopes(const Eigen::VectorXd& free_coeffs) const {
    const Eigen::VectorXd full = full_values(free_coeffs);
    Eigen::VectorXd s(element_count());
    for (int e = 0; e < element_count(); ++e)
        s[e] = (full[e + 1] - full[e]) / h_[static_cast<std::size_t>(e)];
    return s;
}

Eigen::SparseMatrix<double> SpatialMesh::weighted_stiffness(const Eigen::VectorXd& c) const {
    if (c.size() != element_count())
        throw std::invalid_argument("fem_space: one stiffness weight per element required");
    std::vector<Eigen::Triplet<double>> t;
    for (int e = 0; e < element_count(); ++e) {
        const double w = c[e] / h_[static_cast<std::size_t>(e)];
        const int gl[2] = {e, e + 1};
        const double k[2][2] = {{w, -w}, {-w, w}};
        for (int a = 0; a < 2; ++a) {
            const int ia = free_index_[static_cast<std::size_t>(gl[a])];
            if (ia < 0) continue;
            for (int b = 0; b < 2; ++b) {
                const int ib = free_index_[static_cast<std::size_t>(gl[b])];
                if (ib < 0) continue;
                t.emplace_back(ia, ib, k[a][b]);
            }
        }
    }
    Eigen::SparseMatrix<double> out(free_count_, free_count_);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

Eigen::SparseMatrix<double> SpatialMesh::weighted_mass(const Eigen::MatrixXd& w_at_gauss) const {
    if (w_at_gauss.rows() != element_count() || w_at_gauss.cols() != 2)
        throw std::invalid_argument("fem_space: weighted mass needs (elements x 2) weights");
    const GaussRule rule = gauss2();
    std::vector<Eigen::Triplet<double>> t;
    for (int e = 0; e < element_count(); ++e) {
        const double h = h_[static_cast<std::size_t>(e)];
        const int gl[2] = {e, e + 1};
        for (std::size_t q = 0; q < rule.size; ++q) {
            const double xi = rule.nodes[q];
            const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
            const double scale = 0.5 * h * rule.weights[q] * w_at_gauss(e, static_cast<int>(q));
            for (int a = 0; a < 2; ++a) {
                const int ia = free_index_[static_cast<std::size_t>(gl[a])];
                if (ia < 0) continue;
                for (int b = 0; b < 2; ++b) {
                    const int ib = free_index_[static_cast<std::size_t>(gl[b])];
                    if (ib < 0) continue;
                    t.emplace_back(ia, ib, scale * phi[a] * phi[b]);
                }
            }
        }
    }
    Eigen::SparseMatrix<double> out(free_count_, free_count_);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

// --- norms and duality -----------------------------------------------------

double h_inner(const DiscreteFunction& u, const DiscreteFunction& v) {
    require_same_mesh(u, v);
    return u.coeffs.dot(u.mesh->mass_apply(v.coeffs));
}

double h_norm(const DiscreteFunction& u) {
    return std::sqrt(std::max(0.0, h_inner(u, u)));
}

double v_norm(const MeshPtr& mesh, double p, const Eigen::VectorXd& coeffs) {
    if (!(p > 1.0)) throw std::invalid_argument("v_norm: p must exceed 1");
    if (mesh->is_desk()) return std::abs(coeffs[0]);
    const Eigen::VectorXd s = mesh->slopes(coeffs);
    double acc = 0.0;
    for (int e = 0; e < mesh->element_count(); ++e)
        acc += mesh->element_lengths()[static_cast<std::size_t>(e)] *
               std::pow(std::abs(s[e]), p);
    if (mesh->bc() == BoundaryCondition::natural) {
        // |u|^p by 2-point Gauss (exact for p = 2, the only exponent where the
        // norm must agree with the assembled Gram).
        const Eigen::VectorXd full = mesh->full_values(coeffs);
        const GaussRule rule = gauss2();
        for (int e = 0; e < mesh->element_count(); ++e) {
            const double h = mesh->element_lengths()[static_cast<std::size_t>(e)];
            for (std::size_t q = 0; q < rule.size; ++q) {
                const double xi = rule.nodes[q];
                const double val = 0.5 * (1.0 - xi) * full[e] + 0.5 * (1.0 + xi) * full[e + 1];
                acc += 0.5 * h * rule.weights[q] * std::pow(std::abs(val), p);
            }
        }
    }
    return std::pow(acc, 1.0 / p);
}

double v_norm(const DiscreteFunction& u) { return v_norm(u.mesh, u.p, u.coeffs); }

Eigen::VectorXd v_norm_gradient(const MeshPtr& mesh, double p,
                                const Eigen::VectorXd& coeffs) {
    if (mesh->is_desk()) {
        Eigen::VectorXd g(1);
        g[0] = coeffs[0] >= 0.0 ? 1.0 : -1.0;
        return g;
    }
    const double N = v_norm(mesh, p, coeffs);
    if (!(N > 0.0))
        throw std::invalid_argument("v_norm_gradient: norm vanishes at this point");
    // Assemble grad(N^p), then scale by N^{1-p}/p.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh->free_count());
    const Eigen::VectorXd s = mesh->slopes(coeffs);
    for (int e = 0; e < mesh->element_count(); ++e) {
        const double t = p * signed_power(s[e], p);
        const int il = mesh->free_index(e);
        const int ir = mesh->free_index(e + 1);
        if (il >= 0) g[il] -= t;
        if (ir >= 0) g[ir] += t;
    }
    if (mesh->bc() == BoundaryCondition::natural) {
        const Eigen::VectorXd full = mesh->full_values(coeffs);
        const GaussRule rule = gauss2();
        for (int e = 0; e < mesh->element_count(); ++e) {
            const double h = mesh->element_lengths()[static_cast<std::size_t>(e)];
            for (std::size_t q = 0; q < rule.size; ++q) {
                const double xi = rule.nodes[q];
                const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                const double val = phi[0] * full[e] + phi[1] * full[e + 1];
                const double w = 0.5 * h * rule.weights[q] * p * signed_power(val, p);
                const int il = mesh->free_index(e);
                const int ir = mesh->free_index(e + 1);
                if (il >= 0) g[il] += w * phi[0];
                if (ir >= 0) g[ir] += w * phi[1];
            }
        }
    }
    return (std::pow(N, 1.0 - p) / p) * g;
}

double dual_norm(const DualVector& g, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("dual_norm: p must exceed 1");
    const MeshPtr& mesh = g.mesh;
    if (mesh->is_desk()) return std::abs(g.coeffs[0]);
    const double scale = g.coeffs.norm();
    if (scale == 0.0) return 0.0;
    if (p == 2.0) {
        // Riesz: ||g||_* = sqrt(g^T G^{-1} g) with the p = 2 V-Gram.
        return std::sqrt(std::max(0.0, g.coeffs.dot(mesh->gram2_solve(g.coeffs))));
    }
    // Duality map: solve A_p(w) = g with <A_p(w), v> = int |w'|^{p-2} w' v'
    // (plus the |w|^{p-2} w v part on natural meshes, same quadrature as
    // v_norm).  Hoelder on the combined slope/value measure gives
    // <A_p(w), v> <= ||w||^{p-1} ||v|| with equality at v = w, so
    // ||g||_* = ||w||^{p-1} exactly in the discrete space.
    const Eigen::VectorXd gs = g.coeffs / scale;
    const bool natural = mesh->bc() == BoundaryCondition::natural;
    const GaussRule rule = gauss2();

    auto duality_residual = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(mesh->free_count());
        const Eigen::VectorXd s = mesh->slopes(w);
        for (int e = 0; e < mesh->element_count(); ++e) {
            const double t = signed_power(s[e], p);
            const int il = mesh->free_index(e);
            const int ir = mesh->free_index(e + 1);
            if (il >= 0) r[il] -= t;
            if (ir >= 0) r[ir] += t;
        }
        if (natural) {
            const Eigen::VectorXd full = mesh->full_values(w);
            for (int e = 0; e < mesh->element_count(); ++e) {
                const double h = mesh->element_lengths()[static_cast<std::size_t>(e)];
                for (std::size_t q = 0; q < rule.size; ++q) {
                    const double xi = rule.nodes[q];
                    const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                    const double val = phi[0] * full[e] + phi[1] * full[e + 1];
                    const double wq = 0.5 * h * rule.weights[q] * signed_power(val, p);
                    const int il = mesh->free_index(e);
                    const int ir = mesh->free_index(e + 1);
                    if (il >= 0) r[il] += wq * phi[0];
                    if (ir >= 0) r[ir] += wq * phi[1];
                }
            }
        }
        return r - gs;
    };

    auto duality_jacobian = [&](const Eigen::VectorXd& w) {
        const Eigen::VectorXd s = mesh->slopes(w);
        Eigen::VectorXd cw(mesh->element_count());
        double wmax = 0.0;
        for (int e = 0; e < mesh->element_count(); ++e) {
            double c = (p - 1.0) * std::pow(std::abs(s[e]), p - 2.0);
            if (!std::isfinite(c)) c = 1e30; // p < 2 at a flat slope
            cw[e] = c;
            wmax = std::max(wmax, c);
        }
        // Floor the weights so the factorization stays definite where the
        // slope vanishes (degenerate direction for p > 2).
        const double floor = 1e-10 * (wmax + 1.0);
        for (int e = 0; e < mesh->element_count(); ++e) cw[e] = std::max(cw[e], floor);
        Eigen::SparseMatrix<double> J = mesh->weighted_stiffness(cw);
        if (natural) {
            Eigen::MatrixXd mv(mesh->element_count(), 2);
            const Eigen::VectorXd full = mesh->full_values(w);
            for (int e = 0; e < mesh->element_count(); ++e) {
                for (std::size_t q = 0; q < rule.size; ++q) {
                    const double xi = rule.nodes[q];
                    const double val =
                        0.5 * (1.0 - xi) * full[e] + 0.5 * (1.0 + xi) * full[e + 1];
                    double c = (p - 1.0) * std::pow(std::abs(val), p - 2.0);
                    if (!std::isfinite(c)) c = 1e30;
                    mv(e, static_cast<Eigen::Index>(q)) = c;
                }
            }
            J = J + mesh->weighted_mass(mv);
        }
        return J;
    };

    // p = 2 solution, rescaled so that A_p(c w) = c^{p-1} A_p(w) matches g in
    // the <., w> pairing, makes a good Newton seed.
    Eigen::VectorXd w = mesh->gram2_solve(gs);
    {
        const double nw = v_norm(mesh, p, w);
        const double pair = gs.dot(w);
        if (nw > 0.0 && pair > 0.0)
            w *= std::pow(pair / std::pow(nw, p), 1.0 / (p - 1.0));
    }
    Eigen::VectorXd F = duality_residual(w);
    double fn = F.norm();
    constexpr double tol = 1e-13;
    constexpr int max_iter = 80;
    for (int iter = 0; iter < max_iter && fn > tol; ++iter) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(duality_jacobian(w));
        if (ldlt.info() != Eigen::Success)
            throw SolverError("dual_norm: duality-map Jacobian factorization failed");
        const Eigen::VectorXd d = ldlt.solve(-F);
        double step = 1.0;
        bool improved = false;
        while (step >= 0x1.0p-40) {
            const Eigen::VectorXd cand = w + step * d;
            const Eigen::VectorXd Fc = duality_residual(cand);
            const double fc = Fc.norm();
            if (fc < fn) {
                w = cand;
                F = Fc;
                fn = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    if (fn > 1e-9)
        throw SolverError("dual_norm: duality-map iteration did not converge");
    return scale * std::pow(v_norm(mesh, p, w), p - 1.0);
}

DiscreteFunction l2_project(const MeshPtr& mesh, double p,
                            const std::function<double(double)>& f) {
    if (mesh->is_desk()) {
        Eigen::VectorXd c(1);
        c[0] = f(0.0);
        return {mesh, p, std::move(c)};
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh->free_count());
    const GaussRule rule = gauss5();
    for (int e = 0; e < mesh->element_count(); ++e) {
        const double xl = mesh->nodes()[static_cast<std::size_t>(e)];
        const double xr = mesh->nodes()[static_cast<std::size_t>(e) + 1];
        const double h = xr - xl;
        for (std::size_t q = 0; q < rule.size; ++q) {
            const double xi = rule.nodes[q];
            const double x = 0.5 * (xl + xr) + 0.5 * h * xi;
            const double w = 0.5 * h * rule.weights[q] * f(x);
            const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
            const int il = mesh->free_index(e);
            const int ir = mesh->free_index(e + 1);
            if (il >= 0) b[il] += w * phi[0];
            if (ir >= 0) b[ir] += w * phi[1];
        }
    }
    return {mesh, p, mesh->mass_solve(b)};
}

double eval(const DiscreteFunction& u, double x) {
    const MeshPtr& mesh = u.mesh;
    if (mesh->is_desk()) return u.coeffs[0];
    const auto& nodes = mesh->nodes();
    if (x < nodes.front() || x > nodes.back())
        throw std::invalid_argument("eval: point outside the mesh");
    const Eigen::VectorXd full = mesh->full_values(u.coeffs);
    auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
    std::size_t e = (it == nodes.end()) ? nodes.size() - 2
                                        : static_cast<std::size_t>(it - nodes.begin()) - 1;
    const double t = (x - nodes[e]) / (nodes[e + 1] - nodes[e]);
    return (1.0 - t) * full[e] + t * full[e + 1];
}

// --- embedding -------------------------------------------------------------

void validate_embedding(const EmbeddingSpec& emb, const MeshPtr& mesh) {
    if (emb.mode == EmbeddingMode::boundary) {
        if (mesh->is_desk())
            throw std::invalid_argument("embedding: boundary mode undefined on the desk space");
        if (mesh->bc() != BoundaryCondition::natural)
            throw std::invalid_argument(
                "embedding: boundary mode requires natural boundary conditions");
    }
}

UElement iota_apply(const EmbeddingSpec& emb, const DiscreteFunction& u) {
    validate_embedding(emb, u.mesh);
    if (emb.mode == EmbeddingMode::source) return {u.coeffs};
    const Eigen::VectorXd full = u.mesh->full_values(u.coeffs);
    Eigen::VectorXd tr(2);
    tr[0] = full[0];
    tr[1] = full[full.size() - 1];
    return {std::move(tr)};
}

DualVector iota_adjoint(const EmbeddingSpec& emb, const MeshPtr& mesh,
                        const UElement& xi) {
    validate_embedding(emb, mesh);
    if (emb.mode == EmbeddingMode::source) {
        if (xi.values.size() != mesh->free_count())
            throw std::invalid_argument("iota_adjoint: U-element size mismatch");
        return {mesh, mesh->mass_apply(xi.values)};
    }
    if (xi.values.size() != 2)
        throw std::invalid_argument("iota_adjoint: boundary U-element must be a pair");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh->free_count());
    g[mesh->free_index(0)] = xi.values[0];
    g[mesh->free_index(mesh->node_count() - 1)] = xi.values[1];
    return {mesh, std::move(g)};
}

double u_inner(const EmbeddingSpec& emb, const MeshPtr& mesh, const UElement& a,
               const UElement& b) {
    if (emb.mode == EmbeddingMode::source)
        return a.values.dot(mesh->mass_apply(b.values));
    return a.values.dot(b.values);
}

double u_norm(const EmbeddingSpec& emb, const MeshPtr& mesh, const UElement& a) {
    return std::sqrt(std::max(0.0, u_inner(emb, mesh, a, a)));
}

double embedding_norm(const EmbeddingSpec& emb, const MeshPtr& mesh, double p) {
    validate_embedding(emb, mesh);
    if (p != 2.0) {
        if (!emb.iota_norm_bound)
            throw std::invalid_argument(
                "embedding_norm: p != 2 requires a user-supplied iota norm bound");
        return *emb.iota_norm_bound;
    }
    if (mesh->is_desk()) return 1.0;
    // Largest lambda with B v = lambda G v, B the U-Gram pulled back to V_h.
    Eigen::SparseMatrix<double> B;
    if (emb.mode == EmbeddingMode::source) {
        B = mesh->mass();
    } else {
        B.resize(mesh->free_count(), mesh->free_count());
        B.insert(mesh->free_index(0), mesh->free_index(0)) = 1.0;
        const int last = mesh->free_index(mesh->node_count() - 1);
        B.coeffRef(last, last) += 1.0;
        B.makeCompressed();
    }
    Eigen::VectorXd x = Eigen::VectorXd::Ones(mesh->free_count());
    double lambda = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
        Eigen::VectorXd y = mesh->gram2_solve(B * x);
        const double ny = y.norm();
        if (ny == 0.0) return 0.0;
        y /= ny;
        const double next = y.dot(B * y) / y.dot(mesh->gram2() * y);
        x = std::move(y);
        if (iter > 2 && std::abs(next - lambda) <= 1e-12 * std::max(1.0, next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(0.0, lambda));
}

} // namespace thetaincl
