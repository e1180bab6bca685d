"""Real-line quadrature and small dense matrix helpers.

The integrator is a vectorised adaptive Gauss-Kronrod (7/15) scheme. The
integrand is called with a 1-D array of abscissae and may return either an
array of the same length or an array of shape ``(len(x), ...)`` (vector-valued
integrands share the same panel refinement). Complex values are fine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import NonConvergence, NotHermitian, Singular

# Kronrod abscissae on [0, 1) (mirrored), QUADPACK qk15 values.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
# Gauss weights for the odd Kronrod nodes (1, 3, 5, 7 above).
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
_gauss_pos = {1: 0, 3: 1, 5: 2, 7: 3}
for _i, _j in _gauss_pos.items():
    GAUSS_WEIGHTS[_i] = _WG[_j]
    GAUSS_WEIGHTS[14 - _i] = _WG[_j]


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation and tolerance settings for :func:`integrate`.

    ``half_width`` is the truncation half-width L of the real line, in the
    integration variable's units.
    """

    half_width: float
    max_subdivisions: int = 4000
    abs_tol: float = 1e-15
    rel_tol: float = 1e-12

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")

    def scaled(self, factor: float) -> "QuadratureSpec":
        """Same tolerances, half-width divided by ``factor``."""
        return QuadratureSpec(self.half_width / factor, self.max_subdivisions,
                              self.abs_tol, self.rel_tol)


def _gk_panels(integrand, a, b):
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = centre[:, None] + half[:, None] * NODES[None, :]
    vals = np.asarray(integrand(x.ravel()))
    vals = vals.reshape(x.shape + vals.shape[1:])
    bcast = (slice(None),) + (None,) * (vals.ndim - 2)
    kron = np.einsum("pn...,n->p...", vals, KRONROD_WEIGHTS) * half[bcast]
    gauss = np.einsum("pn...,n->p...", vals, GAUSS_WEIGHTS) * half[bcast]
    return kron, np.abs(kron - gauss)


def default_breakpoints(half_width: float, scale: float | None = None) -> np.ndarray:
    """Symmetric geometric breakpoints around the origin.

    Panels start narrow (``scale``) near zero and widen by 4x outward, which
    suits integrands with a sharp feature at the origin under a broad envelope.
    """
    if scale is None or scale <= 0 or scale >= half_width:
        return np.array([-half_width, 0.0, half_width])
    pts = [0.0]
    s = scale
    while s < half_width:
        pts.extend([s, -s])
        s *= 4.0
    pts.extend([half_width, -half_width])
    return np.unique(np.array(pts))


def integrate(integrand: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec,
              breakpoints: Sequence[float] | None = None,
              return_panels: bool = False):
    """Integrate ``integrand`` over ``[-L, L]`` by adaptive Gauss-Kronrod.

    Returns ``(value, error)``; both are arrays when the integrand is
    vector-valued. Raises :class:`NonConvergence` when more than
    ``spec.max_subdivisions`` panels would be needed.
    """
    L = spec.half_width
    if breakpoints is None:
        pts = np.array([-L, 0.0, L])
    else:
        pts = np.asarray(breakpoints, dtype=float)
        pts = np.unique(np.clip(np.concatenate([pts, [-L, L]]), -L, L))
    a, b = pts[:-1], pts[1:]

    done_val = 0.0
    done_err = 0.0
    n_done = 0
    while True:
        val, err = _gk_panels(integrand, a, b)
        total_val = done_val + val.sum(axis=0)
        total_err = done_err + err.sum(axis=0)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total_val))
        if np.all(total_err <= tol):
            if return_panels:
                return total_val, total_err, n_done + len(a)
            return total_val, total_err
        # each panel gets an error budget proportional to its width
        share = (b - a) / (2 * L)
        ratio = err / np.multiply.outer(share, tol)
        ratio = ratio.reshape(len(a), -1).max(axis=1)
        bad = ratio > 1.0
        if not np.any(bad):
            bad = ratio >= ratio.max()
        keep = ~bad
        done_val = done_val + val[keep].sum(axis=0)
        done_err = done_err + err[keep].sum(axis=0)
        n_done += int(np.count_nonzero(keep))
        ab, bb = a[bad], b[bad]
        mid = 0.5 * (ab + bb)
        a = np.concatenate([ab, mid])
        b = np.concatenate([mid, bb])
        order = np.argsort(a, kind="stable")
        a, b = a[order], b[order]
        if n_done + len(a) > spec.max_subdivisions:
            raise NonConvergence(
                f"quadrature needs more than {spec.max_subdivisions} panels "
                f"(error {np.max(total_err):.3e} vs tolerance {np.min(tol):.3e})")


def trapezoid_oracle(integrand, half_width: float, points: int = 1_000_001):
    """Fixed-order composite trapezoid rule on a uniform grid.

    Independent of :func:`integrate`; used only as a brute-force cross-check.
    """
    x = np.linspace(-half_width, half_width, points)
    return trapezoid(integrand(x), x)


def _equilibrate(m: np.ndarray):
    d = np.sqrt(np.abs(np.diag(m)).astype(float))
    d = np.where(d > 0, d, 1.0)
    return m / np.outer(d, d), d


def invert(m, cond_cap: float = 1e12) -> np.ndarray:
    """Inverse of a small dense (complex or real) matrix.

    Singularity is judged on the diagonally equilibrated matrix so that mixed
    physical units (e.g. metres and inverse metres) do not trip the test.
    """
    m = np.atleast_2d(np.asarray(m))
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError("invert expects a non-empty square matrix")
    n = m.shape[0]
    s, d = _equilibrate(m)
    row = np.max(np.sum(np.abs(s), axis=1))
    det = np.linalg.det(s)
    if not np.isfinite(det) or abs(det) < 1e-12 * row ** n:
        raise Singular(f"|det| = {abs(det):.3e} below threshold")
    if np.linalg.cond(s) > cond_cap:
        raise Singular(f"condition number above cap {cond_cap:.1e}")
    inv = np.linalg.inv(s)
    return inv / np.outer(d, d)


def is_positive_semidefinite(m, tol: float = 1e-10, scale=None) -> bool:
    """True iff all eigenvalues are >= -tol * (largest eigenvalue magnitude).

    ``scale`` (per-coordinate positive factors) applies the congruence
    ``D m D`` first, which is how mixed-unit Fisher matrices are compared.
    """
    m = np.atleast_2d(np.asarray(m))
    if scale is not None:
        dsc = np.asarray(scale, dtype=float)
        m = m * np.outer(dsc, dsc)
    big = np.max(np.abs(m)) if m.size else 0.0
    if big == 0.0:
        return True
    if np.max(np.abs(m - m.conj().T)) > tol * big:
        raise NotHermitian("matrix asymmetry exceeds tolerance")
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return bool(ev.min() >= -tol * np.max(np.abs(ev)))
