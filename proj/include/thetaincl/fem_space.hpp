#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace thetaincl {

enum class BoundaryCondition { dirichlet, natural };

// Conforming P1 space on a 1-D interval mesh, or the single-DOF "desk" space
// (V = H = R) used for closed-form checks.  The mesh owns the assembled mass
// and p = 2 Gram matrices together with their factorizations; all coefficient
// vectors below live on the free nodes (interior nodes under Dirichlet
// conditions, every node otherwise).
class SpatialMesh {
public:
    static std::shared_ptr<const SpatialMesh> interval(double length, int elements,
                                                       BoundaryCondition bc);
    static std::shared_ptr<const SpatialMesh> from_nodes(std::vector<double> nodes,
                                                         BoundaryCondition bc);
    static std::shared_ptr<const SpatialMesh> desk();

    bool is_desk() const { return desk_; }
    BoundaryCondition bc() const { return bc_; }
    double length() const { return nodes_.empty() ? 0.0 : nodes_.back(); }
    int element_count() const { return static_cast<int>(h_.size()); }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int free_count() const { return free_count_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& element_lengths() const { return h_; }

    // Free-node <-> global-node index maps.  Global node j is free iff
    // free_index(j) >= 0.
    int free_index(int node) const { return free_index_[static_cast<std::size_t>(node)]; }
    int node_of_free(int i) const { return node_of_free_[static_cast<std::size_t>(i)]; }

    const Eigen::SparseMatrix<double>& mass() const { return mass_; }
    // p = 2 V-Gram: stiffness under Dirichlet conditions, stiffness + mass in
    // the natural mode (where the V-norm carries the L2 part), identity on the
    // desk space.  Serves as the Riesz map at p = 2 and as the ascent metric
    // for other exponents.
    const Eigen::SparseMatrix<double>& gram2() const { return gram2_; }

    Eigen::VectorXd mass_apply(const Eigen::VectorXd& v) const { return mass_ * v; }
    Eigen::VectorXd mass_solve(const Eigen::VectorXd& rhs) const;
    Eigen::VectorXd gram2_solve(const Eigen::VectorXd& rhs) const;

    // Nodal values on all nodes, with Dirichlet zeros filled in.
    Eigen::VectorXd full_values(const Eigen::VectorXd& free_coeffs) const;
    // Per-element slopes of the P1 function with the given free coefficients.
    Eigen::VectorXd slopes(const Eigen::VectorXd& free_coeffs) const;

    // sum_e c_e * (local p=2 stiffness of element e); c has one entry per element.
    Eigen::SparseMatrix<double> weighted_stiffness(const Eigen::VectorXd& c) const;
    // int w(x) phi_i phi_j with w given at the two Gauss points per element
    // (w is (elements x 2), row-major in the element).
    Eigen::SparseMatrix<double> weighted_mass(const Eigen::MatrixXd& w_at_gauss) const;

private:
    SpatialMesh() = default;
    void assemble();

    bool desk_ = false;
    BoundaryCondition bc_ = BoundaryCondition::dirichlet;
    std::vector<double> nodes_;
    std::vector<double> h_;
    std::vector<int> free_index_;
    std::vector<int> node_of_free_;
    int free_count_ = 0;

    Eigen::SparseMatrix<double> mass_;
    Eigen::SparseMatrix<double> gram2_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mass_ldlt_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram2_ldlt_;
};

using MeshPtr = std::shared_ptr<const SpatialMesh>;

// Element of V_h: free-node coefficients plus the exponent p of the ambient
// V = W^{1,p} that norms are measured in.
struct DiscreteFunction {
    MeshPtr mesh;
    double p = 2.0;
    Eigen::VectorXd coeffs;
};

// Element of V_h^*, stored through the canonical duality pairing
// <g, v> = g . coeffs(v).
struct DualVector {
    MeshPtr mesh;
    Eigen::VectorXd coeffs;
};

enum class EmbeddingMode { source, boundary };

// The auxiliary space U and the map iota: V -> U.  Source mode: U = H = L2,
// iota the identity (U-elements are nodal vectors on the free nodes).
// Boundary mode: U = R^2, iota the endpoint trace; requires natural boundary
// conditions so the trace is not constrained to zero.
struct EmbeddingSpec {
    EmbeddingMode mode = EmbeddingMode::source;
    // ||iota||_{V->U}: computed for p = 2, otherwise this user bound is
    // required by embedding_norm.
    std::optional<double> iota_norm_bound;
    // ||p||_{H->U} for the case-A threshold; defaults to 1 in source mode.
    std::optional<double> p_map_norm_bound;
};

struct UElement {
    Eigen::VectorXd values; // free-node values (source) or endpoint pair (boundary)
};

// --- H and V geometry ------------------------------------------------------

double h_inner(const DiscreteFunction& u, const DiscreteFunction& v);
double h_norm(const DiscreteFunction& u);
// W^{1,p} norm: (sum_e h_e |s_e|^p)^{1/p} under Dirichlet conditions, with the
// 2-point Gauss |u|^p term added in natural mode; |c| on the desk space.
double v_norm(const DiscreteFunction& u);
double v_norm(const MeshPtr& mesh, double p, const Eigen::VectorXd& coeffs);

// Gradient of coeffs -> v_norm at a point where the norm is positive.
Eigen::VectorXd v_norm_gradient(const MeshPtr& mesh, double p,
                                const Eigen::VectorXd& coeffs);

// Dual norm sup_{||v||_V = 1} <g, v>.  Exact Riesz solve at p = 2; otherwise
// the duality map A_p(w) = g is inverted by a damped Newton iteration and the
// norm returned as ||w||_V^{p-1} (Hoelder equality in the discrete pairing),
// throwing SolverError when the Newton residual does not reach 1e-9.
double dual_norm(const DualVector& g, double p);

// L2(0,L) projection into V_h (boundary rows dropped under Dirichlet
// conditions); load integrals by 5-point Gauss per element.
DiscreteFunction l2_project(const MeshPtr& mesh, double p,
                            const std::function<double(double)>& f);

// Point evaluation of the P1 interpolant (Dirichlet zeros included).
double eval(const DiscreteFunction& u, double x);

// --- U space and the embedding --------------------------------------------

UElement iota_apply(const EmbeddingSpec& emb, const DiscreteFunction& u);
DualVector iota_adjoint(const EmbeddingSpec& emb, const MeshPtr& mesh,
                        const UElement& xi);
double u_inner(const EmbeddingSpec& emb, const MeshPtr& mesh, const UElement& a,
               const UElement& b);
double u_norm(const EmbeddingSpec& emb, const MeshPtr& mesh, const UElement& a);

// ||iota||_{V->U}: largest generalized eigenvalue of the U-Gram against the
// V-Gram (power iteration) when p = 2; the declared iota_norm_bound otherwise.
double embedding_norm(const EmbeddingSpec& emb, const MeshPtr& mesh, double p);

void validate_embedding(const EmbeddingSpec& emb, const MeshPtr& mesh);

} // namespace thetaincl
