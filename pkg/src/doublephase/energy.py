"""Double phase energy, its truncations and assembled Gateaux derivatives.

All integrals use the one-point cell quadrature of :mod:`doublephase.mesh`:
gradient terms at cell midpoints, ``F(x, u)`` at the cell-averaged value.
The truncated functionals replace the cell value ``a`` by ``max(a, 0)``
(``phi_plus``) or ``min(a, 0)`` (``phi_minus``), which keeps them C^1
because ``f(x, 0) = 0``.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import CorruptFieldError, ScalarField, gradient

__all__ = [
    "EnergyBreakdown",
    "ResidualVector",
    "eval_f",
    "eval_F",
    "flux_kernel",
    "energy_phi",
    "residual",
    "operator_residual",
    "pairing",
    "monotonicity_sample",
    "WHICH",
]

WHICH = ("phi", "plus", "minus")


def eval_f(spec, x, t):
    return spec.f(x, t)


def eval_F(spec, x, t):
    return spec.F(x, t)


@dataclass(frozen=True)
class EnergyBreakdown:
    I_p: float
    I_q: float
    F_term: float
    F_plus: float
    F_minus: float

    @property
    def I(self):
        return self.I_p + self.I_q

    @property
    def phi(self):
        return self.I_p + self.I_q - self.F_term

    @property
    def phi_plus(self):
        return self.I_p + self.I_q - self.F_plus

    @property
    def phi_minus(self):
        return self.I_p + self.I_q - self.F_minus

    def total(self, which="phi"):
        return {"phi": self.phi, "plus": self.phi_plus, "minus": self.phi_minus}[which]

    def scale(self, which="phi"):
        """|I_p| + |I_q| + |F-term|, the reference size for stopping tests."""
        F = {"phi": self.F_term, "plus": self.F_plus, "minus": self.F_minus}[which]
        return abs(self.I_p) + abs(self.I_q) + abs(F)


class ResidualVector(ScalarField):
    """Nodal representation of v -> <phi'(u), v>; zero on the boundary."""


def _truncated(a, which):
    if which == "phi":
        return a
    if which == "plus":
        return np.maximum(a, 0.0)
    if which == "minus":
        return np.minimum(a, 0.0)
    raise ValueError(f"which must be one of {WHICH}, got {which!r}")


def flux_kernel(gnorm, p, q, mu, eps=0.0):
    """Scalar k with A(xi) = k * xi; extended by 0 where xi = 0 (exact kernel).

    With ``eps > 0`` the regularised kernel (|xi|^2 + eps^2)^((p-2)/2) is used.
    """
    if eps > 0.0:
        s = gnorm ** 2 + eps ** 2
        return s ** ((p - 2.0) / 2.0) + mu * s ** ((q - 2.0) / 2.0)
    out = np.zeros_like(gnorm)
    nz = gnorm > 0.0
    g = gnorm[nz]
    out[nz] = g ** (p[nz] - 2.0) + mu[nz] * g ** (q[nz] - 2.0)
    return out


def _check_finite(u):
    if not np.all(np.isfinite(u.values)):
        raise CorruptFieldError("field contains non-finite values")


def energy_phi(cfg, u):
    """Gradient terms, F-terms and the totals phi, phi_+ and phi_-."""
    _check_finite(u)
    p, q, mu, xc = cfg.cell_data
    qf = gradient(u)
    gn = qf.grad_norm
    dx = cfg.grid.cell_measure
    nl = cfg.nonlinearity
    a = qf.values
    I_p = float(np.sum(gn ** p / p) * dx)
    I_q = float(np.sum(mu * gn ** q / q) * dx)
    F_term = float(np.sum(nl.F(xc, a)) * dx)
    F_plus = float(np.sum(nl.F(xc, np.maximum(a, 0.0))) * dx)
    F_minus = float(np.sum(nl.F(xc, np.minimum(a, 0.0))) * dx)
    out = EnergyBreakdown(I_p, I_q, F_term, F_plus, F_minus)
    if not np.isfinite([I_p, I_q, F_term, F_plus, F_minus]).all():
        raise CorruptFieldError("non-finite energy")
    return out


def _assemble(grid, cell_flux, cell_source):
    """Nodal vector sum_k G_k^T flux_k - Avg^T source, scaled by |cell|."""
    dx = grid.cell_measure
    out = grid.averaging_matrix.T @ (-cell_source * dx)
    for k, G in enumerate(grid.gradient_matrices):
        out += G.T @ (cell_flux[:, k] * dx)
    out = out.reshape(grid.counts)
    out[grid.boundary_mask] = 0.0
    return out


def operator_residual(cfg, u, eps=0.0):
    """Nodal form of the double phase operator, v -> <A(u), v>."""
    _check_finite(u)
    p, q, mu, _ = cfg.cell_data
    qf = gradient(u)
    k = flux_kernel(qf.grad_norm, p, q, mu, eps)
    vals = _assemble(cfg.grid, k[:, None] * qf.gradients, np.zeros(cfg.grid.num_cells))
    return ResidualVector(cfg.grid, vals)


def residual(cfg, u, which="phi", eps=0.0):
    """Nodal form of phi'(u) (or phi_+', phi_-'), zero on boundary nodes."""
    _check_finite(u)
    p, q, mu, xc = cfg.cell_data
    qf = gradient(u)
    k = flux_kernel(qf.grad_norm, p, q, mu, eps)
    src = cfg.nonlinearity.f(xc, _truncated(qf.values, which))
    vals = _assemble(cfg.grid, k[:, None] * qf.gradients, src)
    return ResidualVector(cfg.grid, vals)


def pairing(rv, v):
    """Duality pairing: sum over interior nodes of rv_i * v_i."""
    if rv.grid != v.grid:
        raise ValueError("pairing of fields on different grids")
    mask = rv.grid.interior_mask
    return float(np.dot(rv.values[mask], v.values[mask]))


def monotonicity_sample(cfg, pairs):
    """min over pairs of <A(u) - A(v), u - v>."""
    vals = []
    for u, v in pairs:
        d = operator_residual(cfg, u) - operator_residual(cfg, v)
        vals.append(pairing(ResidualVector(cfg.grid, d.values), u - v))
    return min(vals)
