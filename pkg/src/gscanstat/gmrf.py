"""Intrinsic Gaussian Markov random field structure matrices and sampling.

Provides the graph-Laplacian spatial precision, the first-order random-walk
temporal precision, their Kronecker interaction combinations, variance-based
scaling, sum-to-zero constraint matrices, generalized inverses and
constrained sampling.  Dense eigendecompositions are used up to
``DENSE_LIMIT`` unknowns; generalized solves fall back to conjugate gradients
with null-space projection above that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.io import mmwrite
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg

from .errors import DegenerateInput, InfeasibleConstraints
from .graph import SpatialGraph

DENSE_LIMIT = 5000
EIG_RTOL = 1e-10  # eigenvalues below EIG_RTOL * max are treated as zero

_KINDS = ("I", "II", "III", "IV")


def canonical_kind(kind) -> str:
    """Normalize an interaction label: accepts 'I'..'IV', 1..4."""
    if isinstance(kind, int):
        if not 1 <= kind <= 4:
            raise ValueError(f"interaction type must be 1..4, got {kind}")
        return _KINDS[kind - 1]
    k = str(kind).upper()
    if k in _KINDS:
        return k
    raise ValueError(f"unknown interaction type {kind!r}")


@dataclass(frozen=True)
class StructureMatrix:
    """Symmetric PSD structure matrix with its known rank deficiency."""

    matrix: sparse.csr_matrix
    rank_deficiency: int
    scaled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", sparse.csr_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class ConstraintSet:
    """Stacked sum-to-zero constraint rows A with A x = 0."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix",
                           np.atleast_2d(np.asarray(self.matrix, dtype=np.float64)))

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def icar_precision(graph: SpatialGraph) -> StructureMatrix:
    """Graph-Laplacian precision: degree on the diagonal, -1 per neighbor pair."""
    adj = graph.adjacency_matrix()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    R = sparse.diags(deg) - adj
    n_comp = int(connected_components(adj, directed=False)[0])
    return StructureMatrix(R.tocsr(), rank_deficiency=n_comp)


def rw1_precision(T: int) -> StructureMatrix:
    """Second-difference random-walk structure on a path of T periods."""
    if T < 2:
        raise DegenerateInput("random-walk structure needs T >= 2")
    main = np.full(T, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(T - 1, -1.0)
    R = sparse.diags([off, main, off], offsets=(-1, 0, 1))
    return StructureMatrix(R.tocsr(), rank_deficiency=1)


def _eigh_psd(R: StructureMatrix):
    vals, vecs = np.linalg.eigh(R.dense())
    tol = EIG_RTOL * max(vals[-1], 1.0)
    vals = np.where(vals < tol, 0.0, vals)
    return vals, vecs


def generalized_inverse(R: StructureMatrix) -> np.ndarray:
    """Dense Moore-Penrose inverse via eigendecomposition (small matrices)."""
    vals, vecs = _eigh_psd(R)
    inv = np.where(vals > 0, 1.0 / np.where(vals > 0, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


def positive_eigenvalues(R: StructureMatrix) -> np.ndarray:
    vals, _ = _eigh_psd(R)
    return vals[vals > 0]


def scale_structure(R: StructureMatrix) -> StructureMatrix:
    """Rescale so the generalized-inverse diagonal has geometric mean one.

    Returns ``c * R`` with ``c`` the geometric mean of the diagonal of the
    pseudo-inverse of R (marginal variances under unit precision), the
    standard reference scaling for intrinsic models.
    """
    if R.dim > DENSE_LIMIT:
        diag = _pinv_diagonal_cg(R)
    else:
        diag = np.diag(generalized_inverse(R))
    positive = diag[diag > 0]
    if positive.size == 0:
        raise DegenerateInput("structure matrix has no positive marginal variances")
    factor = float(np.exp(np.mean(np.log(positive))))
    return StructureMatrix(R.matrix * factor, rank_deficiency=R.rank_deficiency,
                           scaled=True)


def interaction_structure(kind, R_gamma: StructureMatrix, R_xi_scaled: StructureMatrix,
                          n: int, T: int) -> StructureMatrix:
    """Kronecker space-time interaction structure for the requested type.

    Type I is independent (identity), II temporally structured, III spatially
    structured, IV fully structured.  Layout matches the period-major cell
    linearization: the temporal factor is the left Kronecker operand.
    """
    k = canonical_kind(kind)
    if R_gamma.dim != T or R_xi_scaled.dim != n:
        raise ValueError("factor dimensions disagree with n, T")
    rank_g = T - R_gamma.rank_deficiency
    rank_x = n - R_xi_scaled.rank_deficiency
    if k == "I":
        M = sparse.identity(n * T, format="csr")
        deficiency = 0
    elif k == "II":
        M = sparse.kron(R_gamma.matrix, sparse.identity(n), format="csr")
        deficiency = n * T - rank_g * n
    elif k == "III":
        M = sparse.kron(sparse.identity(T), R_xi_scaled.matrix, format="csr")
        deficiency = n * T - T * rank_x
    else:
        M = sparse.kron(R_gamma.matrix, R_xi_scaled.matrix, format="csr")
        deficiency = n * T - rank_g * rank_x
    return StructureMatrix(M, rank_deficiency=deficiency,
                           scaled=R_xi_scaled.scaled)


def delta_constraint_rows(kind, n: int, T: int) -> np.ndarray:
    """Sum-to-zero rows for the interaction block alone (period-major layout)."""
    k = canonical_kind(kind)
    nT = n * T
    if k == "I":
        return np.ones((1, nT))
    if k == "II":
        rows = np.zeros((n, nT))
        for i in range(n):
            rows[i, i::n] = 1.0  # sum over periods for area i
        return rows
    if k == "III":
        rows = np.zeros((T, nT))
        for t in range(T):
            rows[t, t * n:(t + 1) * n] = 1.0  # sum over areas at period t
        return rows
    rows = np.zeros((T + n - 1, nT))
    for t in range(T):
        rows[t, t * n:(t + 1) * n] = 1.0
    for i in range(n - 1):  # last area row is redundant given the period rows
        rows[T + i, i::n] = 1.0
    return rows


def constraint_set(kind, n: int, T: int) -> ConstraintSet:
    """Identifiability constraints over the stacked (spatial, temporal,
    interaction) effects, one sum-to-zero family per Table of interaction
    types: spatial and temporal totals always, interaction sums depending on
    the type (global for I, per area for II, per period for III, both with one
    redundant row dropped for IV)."""
    nT = n * T
    dim = n + T + nT
    rows = []
    r = np.zeros(dim)
    r[:n] = 1.0
    rows.append(r)
    r = np.zeros(dim)
    r[n:n + T] = 1.0
    rows.append(r)
    for dr in delta_constraint_rows(kind, n, T):
        r = np.zeros(dim)
        r[n + T:] = dr
        rows.append(r)
    return ConstraintSet(np.vstack(rows))


def _null_projector(A: np.ndarray):
    """Orthonormal basis of the row space of A (drops redundant rows)."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > 1e-12 * max(s[0], 1.0) if s.size else np.zeros(0, dtype=bool)
    return vt[keep]


def sample_constrained(structure: StructureMatrix, precision_scalar: float,
                       constraints: ConstraintSet | np.ndarray | None, seed,
                       size: int = 1) -> np.ndarray:
    """Draw zero-mean Gaussians with precision ``precision_scalar * structure``
    restricted to its row space, then condition so every constraint row is
    satisfied exactly.

    Null-space components are pinned to zero via the eigendecomposition; the
    conditioning step is an orthogonal projection in the whitened coordinates
    (kriging with identity covariance).  Deterministic per seed.  Returns an
    array of shape (size, dim), squeezed to (dim,) when size is 1.
    """
    if precision_scalar <= 0:
        raise ValueError("precision_scalar must be positive")
    vals, vecs = _eigh_psd(structure)
    pos = vals > 0
    if constraints is None:
        A = np.zeros((0, structure.dim))
    elif isinstance(constraints, ConstraintSet):
        A = constraints.matrix
    else:
        A = np.atleast_2d(np.asarray(constraints, dtype=np.float64))
    if A.shape[0] and A.shape[1] != structure.dim:
        raise InfeasibleConstraints(
            f"constraints have {A.shape[1]} columns, structure dim is {structure.dim}")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    z = rng.standard_normal((size, int(pos.sum())))

    # constraints expressed on the whitened positive-eigenspace coordinates
    scale = 1.0 / np.sqrt(precision_scalar * vals[pos])
    basis = vecs[:, pos] * scale  # x = basis @ z
    G = A @ basis
    Q = _null_projector(G)
    if Q.shape[0]:
        z = z - (z @ Q.T) @ Q
    x = z @ basis.T
    if A.shape[0]:
        resid = np.abs(A @ x.T)
        if resid.size and resid.max() > 1e-8:
            raise InfeasibleConstraints(
                f"constraint residual {resid.max():.3e} after conditioning")
    return x[0] if size == 1 else x


def constrained_covariance(structure: StructureMatrix, precision_scalar: float,
                           constraints: ConstraintSet | np.ndarray | None) -> np.ndarray:
    """Exact covariance of :func:`sample_constrained` draws (dense oracle)."""
    vals, vecs = _eigh_psd(structure)
    pos = vals > 0
    scale = 1.0 / np.sqrt(precision_scalar * vals[pos])
    basis = vecs[:, pos] * scale
    if constraints is None:
        A = np.zeros((0, structure.dim))
    elif isinstance(constraints, ConstraintSet):
        A = constraints.matrix
    else:
        A = np.atleast_2d(np.asarray(constraints, dtype=np.float64))
    G = A @ basis
    Q = _null_projector(G)
    P = np.eye(basis.shape[1]) - Q.T @ Q if Q.shape[0] else np.eye(basis.shape[1])
    return basis @ P @ basis.T


def bym2_covariance(R_scaled: StructureMatrix, tau: float, lam: float) -> np.ndarray:
    """Composite spatial covariance mixing an unstructured part with the
    scaled structure's generalized inverse: (1/tau) [(1-lam) I + lam R*^-]."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    n = R_scaled.dim
    return ((1.0 - lam) * np.eye(n) + lam * generalized_inverse(R_scaled)) / tau


def _range_projector(null_basis: np.ndarray):
    q, _ = np.linalg.qr(null_basis)

    def project(b):
        return b - q @ (q.T @ b)

    return project


def solve_generalized(structure: StructureMatrix, b: np.ndarray,
                      null_basis: np.ndarray | None = None,
                      rtol: float = 1e-10) -> np.ndarray:
    """Apply the Moore-Penrose inverse of the structure matrix to ``b``.

    Dense eigendecomposition below ``DENSE_LIMIT``; above it, conjugate
    gradients on the rank-corrected operator ``R + V V^T`` with the right-hand
    side projected onto the range (``null_basis`` columns must span the null
    space; required for the iterative path).
    """
    if structure.dim <= DENSE_LIMIT:
        return generalized_inverse(structure) @ b
    if null_basis is None:
        raise ValueError("null_basis is required above the dense limit")
    q, _ = np.linalg.qr(np.atleast_2d(null_basis.T).T)
    project = _range_projector(q)
    R = structure.matrix

    def matvec(x):
        return R @ x + q @ (q.T @ x)

    op = LinearOperator(shape=R.shape, matvec=matvec, dtype=np.float64)
    rhs = project(np.asarray(b, dtype=np.float64))
    x, info = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=10 * structure.dim)
    if info != 0:
        raise DegenerateInput(f"conjugate gradients failed to converge (info={info})")
    return project(x)


def laplacian_null_basis(structure: StructureMatrix) -> np.ndarray:
    """Orthonormal null basis of a Laplacian-structured matrix (per-component
    constant vectors, read off the off-diagonal sparsity pattern)."""
    pattern = structure.matrix.copy()
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    n_comp, labels = connected_components(pattern, directed=False)
    basis = np.zeros((structure.dim, n_comp))
    for c in range(n_comp):
        members = labels == c
        basis[members, c] = 1.0 / np.sqrt(members.sum())
    return basis


def _pinv_diagonal_cg(R: StructureMatrix) -> np.ndarray:
    # column-by-column generalized solves; costly but the only path above the
    # dense limit, where an eigendecomposition is infeasible
    null_basis = laplacian_null_basis(R)
    diag = np.empty(R.dim)
    e = np.zeros(R.dim)
    for i in range(R.dim):
        e[i] = 1.0
        diag[i] = solve_generalized(R, e, null_basis=null_basis)[i]
        e[i] = 0.0
    return diag


def write_matrix_market(structure: StructureMatrix, path) -> None:
    """Dump the structure matrix in Matrix Market coordinate format."""
    mmwrite(str(path), structure.matrix.tocoo())
