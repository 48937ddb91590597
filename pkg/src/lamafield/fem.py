"""Finite-element machinery on piecewise-linear hat bases.

Meshes (1-D intervals, structured 2-D triangulations), assembly of the
mass and stiffness forms, mass lumping, the operator kappa^2*C + G, its
even-order recursion, the spectral fractional application, and the
log-determinant, in the mass-lumped (Markov) convention throughout.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.linalg as sla
from scipy.sparse.linalg import splu

from .errors import ValidationError

__all__ = [
    "Mesh",
    "FemDiscretization",
    "build_mesh_1d",
    "build_mesh_2d",
    "assemble",
    "observation_matrix",
    "operator_matrix",
    "k_alpha_even",
    "fractional_apply",
    "log_det_k_alpha",
]


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh: nodes and element connectivity.

    1-D nodes are a strictly increasing coordinate array of shape (n,);
    2-D nodes have shape (n, 2) with triangles in ``elements``.
    """

    dimension: int
    nodes: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        if self.dimension not in (1, 2):
            raise ValidationError("mesh dimension must be 1 or 2")
        if elements.size == 0:
            raise ValidationError("mesh needs at least one element")
        if elements.min() < 0 or elements.max() >= self.node_count:
            raise ValidationError("element refers to a nonexistent node")
        if self.dimension == 1:
            if nodes.ndim != 1 or len(nodes) < 2:
                raise ValidationError("1-D mesh needs >= 2 nodes in a flat array")
            if np.any(np.diff(nodes) <= 0):
                raise ValidationError("1-D nodes must be strictly increasing")
        else:
            if nodes.ndim != 2 or nodes.shape[1] != 2:
                raise ValidationError("2-D mesh nodes must have shape (n, 2)")
            if np.any(_triangle_areas(nodes, elements) <= 1e-14):
                raise ValidationError("degenerate (zero-area) triangle in mesh")

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    def measure(self) -> float:
        """Total length/area of the meshed domain."""
        if self.dimension == 1:
            return float(self.nodes[-1] - self.nodes[0])
        return float(np.sum(_triangle_areas(self.nodes, self.elements)))


def _triangle_areas(nodes, elements):
    p = nodes[elements]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    return 0.5 * np.abs(v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])


def build_mesh_1d(x0: float, n: int, h: float) -> Mesh:
    """Uniform 1-D mesh with n nodes starting at x0, spacing h."""
    if n < 3:
        raise ValidationError("1-D mesh needs at least 3 nodes")
    if h <= 0:
        raise ValidationError("spacing must be positive")
    nodes = x0 + h * np.arange(n)
    elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return Mesh(dimension=1, nodes=nodes, elements=elements)


def mesh_from_nodes_1d(nodes) -> Mesh:
    """1-D mesh on arbitrary strictly increasing node coordinates."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return Mesh(dimension=1, nodes=nodes, elements=elements)


def build_mesh_2d(rect, nx: int, ny: int) -> Mesh:
    """Structured triangulation of a rectangle, row-major node order.

    Each grid cell is split along the lower-left to upper-right diagonal,
    which keeps the construction deterministic.
    """
    if nx < 3 or ny < 3:
        raise ValidationError("2-D mesh needs at least 3 nodes per side")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValidationError("rectangle bounds must be ordered")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    tris = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            ll = j * nx + i
            lr = ll + 1
            ul = ll + nx
            ur = ul + 1
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    return Mesh(dimension=2, nodes=nodes, elements=np.asarray(tris))


@dataclass(frozen=True)
class FemDiscretization:
    """Assembled matrices for a mesh: effectively immutable, share freely.

    C is the consistent mass matrix, G the stiffness, a the lumped mass
    vector (row sums of C), phi the observation matrix.  The generalized
    eigenpairs of G v = lambda * diag(a) v are computed on first use and
    cached.
    """

    mesh: Mesh
    C: sp.csr_matrix
    G: sp.csr_matrix
    a: np.ndarray
    phi: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.mesh.node_count

    @cached_property
    def eig(self):
        """(eigenvalues, eigenvectors) of the symmetrized lumped problem.

        Returns (lam, U) with diag(a)^{-1/2} G diag(a)^{-1/2} = U lam U^T.
        """
        s = 1.0 / np.sqrt(self.a)
        S = (self.G.multiply(s[:, None]).multiply(s[None, :])).toarray()
        S = 0.5 * (S + S.T)
        lam, U = sla.eigh(S)
        return np.maximum(lam, 0.0), U


def _assemble_1d(mesh):
    nodes = mesh.nodes
    n = len(nodes)
    hs = np.diff(nodes)
    rows, cols, mvals, svals = [], [], [], []
    for e, h in enumerate(hs):
        i, j = e, e + 1
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        mvals += [h / 3.0, h / 6.0, h / 6.0, h / 3.0]
        svals += [1.0 / h, -1.0 / h, -1.0 / h, 1.0 / h]
    C = sp.csr_matrix((mvals, (rows, cols)), shape=(n, n))
    G = sp.csr_matrix((svals, (rows, cols)), shape=(n, n))
    return C, G


def _assemble_2d(mesh):
    nodes, elements = mesh.nodes, mesh.elements
    n = mesh.node_count
    p = nodes[elements]
    areas = _triangle_areas(nodes, elements)
    # P1 gradients: for triangle (p0,p1,p2), grad phi_i = rot(edge opposite i)/(2A)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    grads = np.stack(
        [
            np.stack([-e0[:, 1], e0[:, 0]], axis=1),
            np.stack([-e1[:, 1], e1[:, 0]], axis=1),
            np.stack([-e2[:, 1], e2[:, 0]], axis=1),
        ],
        axis=1,
    ) / (2.0 * areas)[:, None, None]
    local_mass = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]], dtype=float) / 12.0
    mloc = areas[:, None, None] * local_mass
    sloc = np.einsum("tix,tjx,t->tij", grads, grads, areas)
    ii = np.repeat(elements, 3, axis=1).ravel()
    jj = np.tile(elements, (1, 3)).ravel()
    C = sp.csr_matrix((mloc.ravel(), (ii, jj)), shape=(n, n))
    G = sp.csr_matrix((sloc.ravel(), (ii, jj)), shape=(n, n))
    return C, G


def observation_matrix(mesh: Mesh, points) -> sp.csr_matrix:
    """Phi with Phi_ij = phi_j(s_i) for observation locations s_i (1-D)."""
    if mesh.dimension != 1:
        raise ValidationError("observation_matrix supports 1-D meshes")
    pts = np.asarray(points, dtype=float)
    nodes = mesh.nodes
    if np.any(pts < nodes[0]) or np.any(pts > nodes[-1]):
        raise ValidationError("observation point outside the mesh")
    idx = np.clip(np.searchsorted(nodes, pts, side="right") - 1, 0, len(nodes) - 2)
    t = (pts - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    rows = np.repeat(np.arange(len(pts)), 2)
    cols = np.column_stack([idx, idx + 1]).ravel()
    vals = np.column_stack([1.0 - t, t]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), len(nodes)))


def assemble(mesh: Mesh, obs_points=None) -> FemDiscretization:
    """Assemble mass/stiffness by exact integration of the hat functions.

    obs_points defaults to the nodes themselves, which makes phi the
    identity.
    """
    if mesh.dimension == 1:
        C, G = _assemble_1d(mesh)
    else:
        C, G = _assemble_2d(mesh)
    a = np.asarray(C.sum(axis=1)).ravel()
    if np.any(a <= 0):
        raise ValidationError("assembly produced a nonpositive lumped mass")
    if obs_points is None:
        phi = sp.identity(mesh.node_count, format="csr")
    else:
        phi = observation_matrix(mesh, obs_points)
    return FemDiscretization(mesh=mesh, C=C, G=G, a=a, phi=phi)


def lumped_mass(fd: FemDiscretization) -> sp.csr_matrix:
    return sp.diags(fd.a, format="csr")


def operator_matrix(fd: FemDiscretization, kappa: float, lumped: bool = True):
    """K = kappa^2 * C + G with the lumped (diagonal) mass by default."""
    if kappa <= 0:
        raise ValidationError("kappa must be positive")
    mass = lumped_mass(fd) if lumped else fd.C
    return (kappa**2 * mass + fd.G).tocsc()


def k_alpha_even(fd: FemDiscretization, kappa: float, alpha) -> sp.csc_matrix:
    """Sparse K_alpha from the recursion K_alpha = K Ct^{-1} K_{alpha-2}."""
    if alpha != int(alpha) or int(alpha) % 2 != 0 or alpha < 2:
        raise ValidationError("k_alpha_even needs even integer alpha >= 2; "
                              "use fractional_apply otherwise")
    K = operator_matrix(fd, kappa)
    inv_ct = sp.diags(1.0 / fd.a)
    out = K
    for _ in range(int(alpha) // 2 - 1):
        out = (K @ inv_ct @ out).tocsc()
    return out.tocsc()


def fractional_apply(fd: FemDiscretization, kappa: float, alpha: float, w,
                     direction: str = "inverse"):
    """Apply (Ct^{-1} K)^{+-alpha/2} to w through the eigendecomposition.

    direction "inverse" applies the negative power (the solve used in
    sampling), "forward" the positive power.
    """
    if alpha <= fd.mesh.dimension / 2.0:
        raise ValidationError("alpha must exceed d/2")
    if direction not in ("inverse", "forward"):
        raise ValidationError("direction must be 'inverse' or 'forward'")
    lam, U = fd.eig
    power = -alpha / 2.0 if direction == "inverse" else alpha / 2.0
    sqrt_a = np.sqrt(fd.a)
    y = U.T @ (sqrt_a * np.asarray(w, dtype=float))
    y *= (lam + kappa**2) ** power
    return (U @ y) / sqrt_a


def log_det_k_alpha(fd: FemDiscretization, kappa: float, alpha: float,
                    method: str = "eigen") -> float:
    """log det of (Ct^{-1} K)^{alpha/2}.

    The eigen path is (alpha/2) * sum log(lambda_i + kappa^2) and works
    for any alpha; the cholesky path factors the sparse K and applies to
    even alpha only.  Both agree to rounding where both apply.
    """
    if alpha <= fd.mesh.dimension / 2.0:
        raise ValidationError("alpha must exceed d/2")
    if method == "eigen":
        lam, _ = fd.eig
        return float(alpha / 2.0 * np.sum(np.log(lam + kappa**2)))
    if method == "cholesky":
        if alpha != int(alpha) or int(alpha) % 2 != 0:
            raise ValidationError("cholesky log-det path needs even alpha")
        K = operator_matrix(fd, kappa)
        lu = splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
        log_det_k = float(np.sum(np.log(np.abs(lu.U.diagonal()))))
        return alpha / 2.0 * (log_det_k - float(np.sum(np.log(fd.a))))
    raise ValidationError("method must be 'eigen' or 'cholesky'")
