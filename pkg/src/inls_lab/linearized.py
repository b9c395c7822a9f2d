"""Linearization of the flow around the standing wave e^{it} Q.

Writing u = e^{it}(Q + w1 + i w2) gives, to first order,

    dw1/dt =  L_- w2,      dw2/dt = -L_+ w1,
    L_+ = -Delta + 1 - 3 r^{-b} Q^2,   L_- = -Delta + 1 - r^{-b} Q^2.

Both operators are assembled as symmetric tridiagonal matrices in v = r u.  A
growing mode e^{e0 t}(w1, w2) needs e0 w1 = L_- w2 and e0 w2 = -L_+ w1, so
L_- L_+ w1 = -e0^2 w1: the rate sits at a negative eigenvalue of the composed
operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cholesky_banded, eig_banded, eigh_tridiagonal, solve_banded

from .errors import IncompatibleFields, NumericFailure
from .ground_state import GroundState
from .radial_core import RadialField, RadialGrid, inner


@dataclass(frozen=True)
class LinearizedPair:
    b: float
    grid: RadialGrid
    plus_diag: np.ndarray = field(repr=False)
    minus_diag: np.ndarray = field(repr=False)
    off_diag: np.ndarray = field(repr=False)

    @property
    def l_plus(self) -> sp.csr_matrix:
        return sp.diags([self.off_diag, self.plus_diag, self.off_diag], [-1, 0, 1], format="csr")

    @property
    def l_minus(self) -> sp.csr_matrix:
        return sp.diags([self.off_diag, self.minus_diag, self.off_diag], [-1, 0, 1], format="csr")

    def apply_plus(self, f: RadialField) -> RadialField:
        return RadialField.from_v(self.grid, self.l_plus @ f.v)

    def apply_minus(self, f: RadialField) -> RadialField:
        return RadialField.from_v(self.grid, self.l_minus @ f.v)

    def dense_block(self) -> np.ndarray:
        """Generator of the (w1, w2) system as a dense matrix; small grids only."""
        n = self.grid.n
        A = np.zeros((2 * n, 2 * n))
        A[:n, n:] = self.l_minus.toarray()
        A[n:, :n] = -self.l_plus.toarray()
        return A


@dataclass(frozen=True)
class SpectrumReport:
    b: float
    neg_count_plus: int
    min_eig_minus: float
    unstable_rate: float
    unstable_direction: Tuple[RadialField, RadialField] = field(repr=False)
    eig_plus: np.ndarray = field(repr=False, default=None)
    eig_minus: np.ndarray = field(repr=False, default=None)
    log: List[str] = field(repr=False, default_factory=list)

    def y_plus(self) -> RadialField:
        """Growing mode w1 + i w2 in the rotating frame, unit L^2 norm."""
        w1, w2 = self.unstable_direction
        return w1 + 1j * w2

    def y_minus(self) -> RadialField:
        """Decaying mode, the conjugate of the growing one."""
        return self.y_plus().conj()

    def summary(self):
        return {
            "b": self.b, "neg_count_plus": self.neg_count_plus,
            "min_eig_minus": self.min_eig_minus, "unstable_rate": self.unstable_rate,
            "eig_plus": [float(x) for x in self.eig_plus],
            "eig_minus": [float(x) for x in self.eig_minus],
        }


def assemble(b: float, Q: GroundState) -> LinearizedPair:
    if abs(b - Q.b) > 1e-14:
        raise IncompatibleFields(f"ground state computed for b={Q.b}, asked for b={b}")
    grid = Q.grid
    h = grid.spacing
    pot = grid.nodes ** (-b) * np.real(Q.field.values) ** 2
    main = 2.0 / h ** 2 + 1.0
    off = np.full(grid.n - 1, -1.0 / h ** 2)
    return LinearizedPair(b, grid, main - 3.0 * pot, main - pot, off)


def _unstable_mode(pair: LinearizedPair, min_minus: float, log: List[str]):
    """Most negative eigenvalue of L_- L_+ through a symmetric banded problem.

    With L_- + eta = C C^T (bidiagonal Cholesky), S = C^T L_+ C is symmetric
    pentadiagonal and similar to (L_- + eta) L_+.  The shift eta only lifts the
    (numerically zero) kernel of L_- so the factorization exists; C is never
    inverted.  If S z = mu z then y = C z solves L_- L_+ y = mu y, i.e. y is w1.
    """
    n = pair.grid.n
    eta = max(0.0, -min_minus) + 1e-8
    ab = np.zeros((2, n))
    ab[0] = pair.minus_diag + eta
    ab[1, :-1] = pair.off_diag
    try:
        cb = cholesky_banded(ab, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"L_- is not positive semidefinite: {exc}") from exc
    C = sp.diags([cb[0], cb[1, :-1]], [0, -1], format="csr")
    S = (C.T @ pair.l_plus @ C).todia()
    band = np.zeros((3, n))
    for off, row in zip(S.offsets, S.data):
        if off >= 0:
            band[off, :n - off] = row[off:]
    mu = eig_banded(band, lower=True, select="i", select_range=(0, 0), eigvals_only=True)[0]
    log.append(f"eta={eta:.1e} mu={mu:.12g}")
    if not mu < 0:
        raise NumericFailure(f"composed operator has no negative eigenvalue (min {mu:.3e})")
    z = _inverse_iteration(band, mu, log)
    return float(np.sqrt(-mu)), C @ z


def _inverse_iteration(band: np.ndarray, mu: float, log: List[str], iters: int = 4):
    """Eigenvector of the banded symmetric matrix for an eigenvalue already known to full accuracy."""
    n = band.shape[1]
    kd = band.shape[0] - 1
    full = np.zeros((2 * kd + 1, n))
    # general banded storage, upper rows mirror the lower band
    for d in range(kd + 1):
        full[kd + d, :n - d] = band[d, :n - d]
        full[kd - d, d:] = band[d, :n - d]
    full[kd] -= mu * (1.0 + 1e-10)
    z = np.exp(-np.linspace(0.0, 10.0, n))
    for _ in range(iters):
        z = solve_banded((kd, kd), full, z)
        z /= np.linalg.norm(z)
    log.append(f"inverse iteration: {iters} steps")
    return z


def spectrum(pair: LinearizedPair, k: int = 6) -> SpectrumReport:
    if k < 3:
        raise ValueError("k must be at least 3")
    log: List[str] = []
    try:
        ep = eigh_tridiagonal(pair.plus_diag, pair.off_diag, select="i",
                              select_range=(0, k - 1), eigvals_only=True)
        em = eigh_tridiagonal(pair.minus_diag, pair.off_diag, select="i",
                              select_range=(0, k - 1), eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    e0, w1v = _unstable_mode(pair, float(em[0]), log)
    w2v = -(pair.l_plus @ w1v) / e0
    grid = pair.grid
    w1 = RadialField.from_v(grid, w1v)
    w2 = RadialField.from_v(grid, w2v)
    nrm = np.sqrt(inner(w1, w1).real + inner(w2, w2).real)
    # fix the sign so the near-origin part of w1 is positive
    s = 1.0 if w1v[np.argmax(np.abs(w1v))] > 0 else -1.0
    w1, w2 = w1 * (s / nrm), w2 * (s / nrm)
    return SpectrumReport(
        b=pair.b, neg_count_plus=int(np.sum(ep < 0)), min_eig_minus=float(em[0]),
        unstable_rate=e0, unstable_direction=(w1, w2), eig_plus=ep, eig_minus=em, log=log,
    )


def unstable_rate(Q: GroundState) -> float:
    return spectrum(assemble(Q.b, Q)).unstable_rate
