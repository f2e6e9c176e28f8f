"""Exchange term between the box concentration and the vessel concentration.

The wall flux is gamma |circumference| (cbar - chat), where cbar is the
lateral average of the 3D field over the section circle.  A single discrete
averaging operator (uniform circle quadrature + P1 point evaluation) is used
everywhere, so the four assembled blocks are mutually consistent: the pair
quadratic form u' C_OO u - 2 u' C_OL v + v' C_LL v equals the assembled
integral of gamma |circumference| (ubar - v)^2 and is nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dg1d import DgSpace
from .errors import DomainError, GeometryError
from .geometry import VesselGeometry
from .mesh3d import FemSpace

DEFAULT_N_CIRCLE = 16


@dataclass(frozen=True)
class CouplingBlocks:
    """Sparse blocks of the exchange term over (3D dofs, 1D dofs)."""

    c_oo: sp.csr_matrix
    c_ol: sp.csr_matrix
    c_lo: sp.csr_matrix
    c_ll: sp.csr_matrix
    gauss_order: int
    n_circle: int


def average_row(fem: FemSpace, geometry: VesselGeometry, s: float, n_circle: int):
    """Sparse row of the discrete lateral-average operator at arclength s.

    Returns (dof ids, weights): the average of a P1 field c at s is
    sum(weights * c[dof ids]).  Duplicated dof ids are permitted.
    """
    pts, _ = geometry.circle_points(s, n_circle)
    try:
        tet_ids, bary = fem.mesh.locate_many(pts)
    except DomainError as err:
        raise GeometryError(
            f"section circle at s = {s} leaves the box: {err}"
        ) from err
    dofs = fem.mesh.tets[tet_ids].ravel()
    weights = (bary / n_circle).ravel()
    return dofs, weights


def lateral_average(fem: FemSpace, geometry: VesselGeometry, c_dofs, s: float,
                    n_circle: int = DEFAULT_N_CIRCLE) -> float:
    """Mean of the P1 field over the section circle at arclength s."""
    dofs, weights = average_row(fem, geometry, s, n_circle)
    return float(weights @ np.asarray(c_dofs)[dofs])


def assemble_coupling(
    geometry: VesselGeometry,
    fem: FemSpace,
    dg: DgSpace,
    gauss_order: int | None = None,
    n_circle: int = DEFAULT_N_CIRCLE,
) -> CouplingBlocks:
    """Assemble the four exchange blocks by 1D Gauss x circle quadrature."""
    q = gauss_order if gauss_order is not None else dg.degree + 2
    pts, wts = dg.gauss_points(q)

    oo_r, oo_c, oo_d = [], [], []
    ol_r, ol_c, ol_d = [], [], []
    ll_r, ll_c, ll_d = [], [], []
    for e in range(dg.partition.n_elements):
        vals, _ = dg.basis_at(e, pts[e])
        edofs = dg.element_dofs(e)
        for k in range(q):
            s_q = pts[e][k]
            gam = float(np.asarray(geometry.gamma_at(s_q)))
            if gam == 0.0:
                continue
            factor = gam * float(geometry.section_circumference(s_q)) * wts[e][k]
            adofs, aw = average_row(fem, geometry, s_q, n_circle)
            brow = vals[:, k]

            oo_r.append(np.repeat(adofs, adofs.size))
            oo_c.append(np.tile(adofs, adofs.size))
            oo_d.append(factor * np.outer(aw, aw).ravel())

            ol_r.append(np.repeat(adofs, edofs.size))
            ol_c.append(np.tile(edofs, adofs.size))
            ol_d.append(factor * np.outer(aw, brow).ravel())

            ll_r.append(np.repeat(edofs, edofs.size))
            ll_c.append(np.tile(edofs, edofs.size))
            ll_d.append(factor * np.outer(brow, brow).ravel())

    def build(rows, cols, data, shape):
        if rows:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
            d = np.concatenate(data)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            d = np.zeros(0)
        return sp.coo_matrix((d, (r, c)), shape=shape).tocsr()

    n_o, n_l = fem.n_dofs, dg.n_dofs
    c_oo = build(oo_r, oo_c, oo_d, (n_o, n_o))
    c_ol = build(ol_r, ol_c, ol_d, (n_o, n_l))
    c_lo = build(ol_c, ol_r, ol_d, (n_l, n_o))  # same triplets, transposed
    c_ll = build(ll_r, ll_c, ll_d, (n_l, n_l))
    return CouplingBlocks(c_oo, c_ol, c_lo, c_ll, q, n_circle)


def refinement_report(geometry, fem, dg, n_circle=DEFAULT_N_CIRCLE):
    """Max entrywise change of each block when the circle count doubles."""
    coarse = assemble_coupling(geometry, fem, dg, n_circle=n_circle)
    fine = assemble_coupling(geometry, fem, dg, n_circle=2 * n_circle)
    out = {}
    for name in ("c_oo", "c_ol", "c_lo", "c_ll"):
        delta = getattr(fine, name) - getattr(coarse, name)
        out[name] = float(np.abs(delta.data).max()) if delta.nnz else 0.0
    return out
