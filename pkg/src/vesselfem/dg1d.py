"""Discontinuous Galerkin machinery on the 1D vessel partition.

Elements carry shifted Legendre bases (L2-orthogonal per element, so the
unweighted mass matrix is diagonal).  The diffusion form is the interior
penalty method with symmetry switch epsilon in {-1, 0, +1}; the advection
form upwinds on the left trace and includes the outflow boundary term, while
the inflow datum enters the right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, DomainError

DEFAULT_SIGMA_MIN = 50.0


@dataclass(frozen=True)
class DgParams:
    """Interior penalty parameters: symmetry switch epsilon and penalty sigma.

    For epsilon in {0, +1} the penalty must clear sigma_min (default 50, the
    value used in the convergence experiments); the antisymmetric variant
    epsilon = -1 is stable for any sigma >= 1.
    """

    epsilon: int
    sigma: float
    sigma_min: float = DEFAULT_SIGMA_MIN

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise ConfigError("epsilon must be -1, 0 or +1")
        if self.sigma <= 0:
            raise ConfigError("penalty sigma must be positive")
        if self.epsilon in (0, 1) and self.sigma < self.sigma_min:
            raise ConfigError(
                f"sigma = {self.sigma} below required minimum {self.sigma_min} "
                f"for epsilon = {self.epsilon}"
            )
        if self.epsilon == -1 and self.sigma < 1.0:
            raise ConfigError("sigma must be >= 1 for epsilon = -1")


@dataclass(frozen=True)
class Partition1D:
    """Strictly increasing nodes s_0 = 0 < ... < s_N = L."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigError("partition needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigError("partition nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, length: float, n_elements: int):
        return cls(np.linspace(0.0, length, n_elements + 1))

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def lengths(self):
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.lengths.max())

    @property
    def length(self) -> float:
        return float(self.nodes[-1])


def legendre_basis(xi, degree):
    """Legendre values and derivatives P_0..P_degree at xi in [-1, 1].

    Returns arrays of shape (degree+1,) + xi.shape.
    """
    xi = np.asarray(xi, dtype=float)
    vals = np.zeros((degree + 1,) + xi.shape)
    ders = np.zeros_like(vals)
    vals[0] = 1.0
    if degree >= 1:
        vals[1] = xi
        ders[1] = 1.0
    for n in range(1, degree):
        vals[n + 1] = ((2 * n + 1) * xi * vals[n] - n * vals[n - 1]) / (n + 1)
        ders[n + 1] = ders[n - 1] + (2 * n + 1) * vals[n]
    return vals, ders


class DgSpace:
    """Broken polynomial space of degree k on a Partition1D."""

    def __init__(self, partition: Partition1D, degree: int):
        if degree < 1:
            raise ConfigError("polynomial degree must be >= 1")
        self.partition = partition
        self.degree = degree
        self.n_local = degree + 1
        self.n_dofs = partition.n_elements * self.n_local

    def element_dofs(self, e: int):
        return np.arange(e * self.n_local, (e + 1) * self.n_local)

    def element_of(self, s):
        """Element index containing arclength s (right-closed at the end)."""
        nodes = self.partition.nodes
        e = np.clip(
            np.searchsorted(nodes, s, side="right") - 1, 0, self.partition.n_elements - 1
        )
        return e

    def reference_coords(self, e, s):
        a = self.partition.nodes[e]
        h = self.partition.lengths[e]
        return 2.0 * (np.asarray(s, dtype=float) - a) / h - 1.0

    def basis_at(self, e, s):
        """Values and s-derivatives of the local basis of element e at points s."""
        xi = self.reference_coords(e, s)
        vals, ders = legendre_basis(xi, self.degree)
        scale = 2.0 / self.partition.lengths[e]
        return vals, ders * scale

    def evaluate(self, dofs, s):
        """Evaluate the broken field at arbitrary points in [0, L]."""
        scalar = np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        e = self.element_of(s)
        out = np.zeros(s.shape)
        for elem in np.unique(e):
            mask = e == elem
            vals, _ = self.basis_at(elem, s[mask])
            out[mask] = vals.T @ np.asarray(dofs)[self.element_dofs(elem)]
        return float(out[0]) if scalar else out

    def gauss_points(self, n_points):
        """Per-element Gauss points and weights: arrays (n_elements, n_points)."""
        xi, w = leggauss(n_points)
        a = self.partition.nodes[:-1, None]
        h = self.partition.lengths[:, None]
        pts = a + 0.5 * h * (xi[None, :] + 1.0)
        wts = 0.5 * h * w[None, :]
        return pts, wts

    def constant_one(self):
        """Dof vector representing the constant function 1."""
        out = np.zeros(self.n_dofs)
        out[:: self.n_local] = 1.0
        return out


def _coef_array(coef, s):
    out = np.asarray(coef(s), dtype=float)
    return np.broadcast_to(out, np.shape(s)) if out.ndim == 0 else out


def trace_eval(space: DgSpace, dofs, i: int, side: str) -> float:
    """One-sided value at partition node s_i; side is '-' (left) or '+' (right)."""
    if side not in ("-", "+"):
        raise ValueError("side must be '-' or '+'")
    n = space.partition.n_elements
    if side == "-":
        if i < 1 or i > n:
            raise DomainError(f"no left trace at node {i}")
        e = i - 1
        vals, _ = legendre_basis(np.float64(1.0), space.degree)
    else:
        if i < 0 or i > n - 1:
            raise DomainError(f"no right trace at node {i}")
        e = i
        vals, _ = legendre_basis(np.float64(-1.0), space.degree)
    return float(vals @ np.asarray(dofs)[space.element_dofs(e)])


def jump(space: DgSpace, dofs, i: int) -> float:
    """Jump v(s_i-) - v(s_i+) at an interior node."""
    if i < 1 or i > space.partition.n_elements - 1:
        raise DomainError(f"node {i} is not an interior node")
    return trace_eval(space, dofs, i, "-") - trace_eval(space, dofs, i, "+")


def average_flux(space: DgSpace, dofs, i: int) -> float:
    """Average (v(s_i-) + v(s_i+)) / 2 at an interior node."""
    if i < 1 or i > space.partition.n_elements - 1:
        raise DomainError(f"node {i} is not an interior node")
    return 0.5 * (trace_eval(space, dofs, i, "-") + trace_eval(space, dofs, i, "+"))


def _interface_traces(space: DgSpace):
    """Trace values/derivatives of the local bases at element endpoints."""
    vr, dr = legendre_basis(np.float64(1.0), space.degree)
    vl, dl = legendre_basis(np.float64(-1.0), space.degree)
    return vl, dl, vr, dr


def assemble_mass_weighted(space: DgSpace, weight):
    """Weighted mass matrix (weight ch, vh); block diagonal SPD."""
    q = space.degree + 2
    pts, wts = space.gauss_points(q)
    rows, cols, data = [], [], []
    for e in range(space.partition.n_elements):
        vals, _ = space.basis_at(e, pts[e])
        wq = wts[e] * _coef_array(weight, pts[e])
        block = np.einsum("q,iq,jq->ij", wq, vals, vals)
        dofs = space.element_dofs(e)
        rows.append(np.repeat(dofs, space.n_local))
        cols.append(np.tile(dofs, space.n_local))
        data.append(block.ravel())
    return _to_csr(space, rows, cols, data)


def assemble_a_lambda(space: DgSpace, kappa_hat, weight, params: DgParams):
    """Interior penalty diffusion form with area weight and diffusivity kappa_hat.

    Volume term (weight kappa ch' vh'), consistency and (epsilon-weighted)
    symmetry terms at interior nodes, and the penalty (sigma / h_max) [ch][vh]
    with the global mesh size, matching the seminorm scaling.
    """
    q = space.degree + 2
    pts, wts = space.gauss_points(q)
    rows, cols, data = [], [], []
    for e in range(space.partition.n_elements):
        vals, ders = space.basis_at(e, pts[e])
        wq = wts[e] * _coef_array(weight, pts[e]) * _coef_array(kappa_hat, pts[e])
        block = np.einsum("q,iq,jq->ij", wq, ders, ders)
        dofs = space.element_dofs(e)
        rows.append(np.repeat(dofs, space.n_local))
        cols.append(np.tile(dofs, space.n_local))
        data.append(block.ravel())

    vl, dl, vr, dr = _interface_traces(space)
    sigma_h = params.sigma / space.partition.h_max
    n = space.partition.n_elements
    for i in range(1, n):
        eL, eR = i - 1, i
        hL, hR = space.partition.lengths[eL], space.partition.lengths[eR]
        s_i = space.partition.nodes[i]
        coef = float(np.asarray(weight(s_i)) * np.asarray(kappa_hat(s_i)))
        dofs = np.concatenate([space.element_dofs(eL), space.element_dofs(eR)])
        jump_row = np.concatenate([vr, -vl])
        avg_der = 0.5 * coef * np.concatenate([dr * 2.0 / hL, dl * 2.0 / hR])
        block = (
            -np.outer(jump_row, avg_der)
            - params.epsilon * np.outer(avg_der, jump_row)
            + sigma_h * np.outer(jump_row, jump_row)
        )
        rows.append(np.repeat(dofs, dofs.size))
        cols.append(np.tile(dofs, dofs.size))
        data.append(block.ravel())
    return _to_csr(space, rows, cols, data)


def assemble_b_lambda(space: DgSpace, u_hat: float, weight):
    """Upwinded advection form for constant vessel velocity u_hat > 0."""
    if u_hat <= 0.0:
        raise ConfigError("vessel velocity must be positive (upwinding is fixed)")
    q = space.degree + 2
    pts, wts = space.gauss_points(q)
    rows, cols, data = [], [], []
    for e in range(space.partition.n_elements):
        vals, ders = space.basis_at(e, pts[e])
        wq = wts[e] * _coef_array(weight, pts[e]) * u_hat
        block = -np.einsum("q,iq,jq->ij", wq, ders, vals)  # row = test derivative
        dofs = space.element_dofs(e)
        rows.append(np.repeat(dofs, space.n_local))
        cols.append(np.tile(dofs, space.n_local))
        data.append(block.ravel())

    vl, _, vr, _ = _interface_traces(space)
    n = space.partition.n_elements
    for i in range(1, n):
        eL, eR = i - 1, i
        coef = float(np.asarray(weight(space.partition.nodes[i]))) * u_hat
        dofs = np.concatenate([space.element_dofs(eL), space.element_dofs(eR)])
        jump_row = np.concatenate([vr, -vl])
        upwind_col = np.concatenate([vr, np.zeros_like(vl)])
        block = coef * np.outer(jump_row, upwind_col)
        rows.append(np.repeat(dofs, dofs.size))
        cols.append(np.tile(dofs, dofs.size))
        data.append(block.ravel())

    # outflow boundary term at s = L
    eN = n - 1
    coef = float(np.asarray(weight(space.partition.length))) * u_hat
    dofs = space.element_dofs(eN)
    rows.append(np.repeat(dofs, space.n_local))
    cols.append(np.tile(dofs, space.n_local))
    data.append((coef * np.outer(vr, vr)).ravel())
    return _to_csr(space, rows, cols, data)


def assemble_inflow_rhs(space: DgSpace, weight, u_hat: float, c_in: float):
    """Inflow vector |D(0)| u_hat c_in vh(0+); supported on the first element."""
    vl, _ = legendre_basis(np.float64(-1.0), space.degree)
    out = np.zeros(space.n_dofs)
    out[space.element_dofs(0)] = float(np.asarray(weight(0.0))) * u_hat * c_in * vl
    return out


def seminorm_matrix(space: DgSpace, params: DgParams):
    """Matrix of the broken-gradient-plus-penalty seminorm squared."""
    q = space.degree + 1
    pts, wts = space.gauss_points(q)
    rows, cols, data = [], [], []
    for e in range(space.partition.n_elements):
        _, ders = space.basis_at(e, pts[e])
        block = np.einsum("q,iq,jq->ij", wts[e], ders, ders)
        dofs = space.element_dofs(e)
        rows.append(np.repeat(dofs, space.n_local))
        cols.append(np.tile(dofs, space.n_local))
        data.append(block.ravel())
    vl, _, vr, _ = _interface_traces(space)
    sigma_h = params.sigma / space.partition.h_max
    for i in range(1, space.partition.n_elements):
        dofs = np.concatenate([space.element_dofs(i - 1), space.element_dofs(i)])
        jump_row = np.concatenate([vr, -vl])
        rows.append(np.repeat(dofs, dofs.size))
        cols.append(np.tile(dofs, dofs.size))
        data.append((sigma_h * np.outer(jump_row, jump_row)).ravel())
    return _to_csr(space, rows, cols, data)


def dg_seminorm(space: DgSpace, dofs, params: DgParams) -> float:
    """Broken H1 seminorm with penalty-weighted jumps; zero only on constants."""
    m = seminorm_matrix(space, params)
    v = np.asarray(dofs, dtype=float)
    return float(np.sqrt(max(v @ (m @ v), 0.0)))


def l2_project(space: DgSpace, fn):
    """Element-local unweighted L2 projection onto the broken space."""
    q = space.degree + 4
    pts, wts = space.gauss_points(q)
    out = np.zeros(space.n_dofs)
    j = np.arange(space.n_local)
    for e in range(space.partition.n_elements):
        vals, _ = space.basis_at(e, pts[e])
        rhs = vals @ (wts[e] * np.asarray(fn(pts[e]), dtype=float))
        mass = space.partition.lengths[e] / (2.0 * j + 1.0)  # orthogonal basis
        out[space.element_dofs(e)] = rhs / mass
    return out


def _to_csr(space: DgSpace, rows, cols, data):
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.n_dofs, space.n_dofs),
    )
    return mat.tocsr()
