"""Time stepping for i u_t + Delta u + r^{-b} |u|^2 u = 0 in v = r u coordinates.

Two one-step maps are available.

``cn`` (default): the conservative Crank-Nicolson scheme

    i (v+ - v)/dt + D2 m + W (|v+|^2 + |v|^2)/2 m = 0,   m = (v+ + v)/2,  W = r^{-b-2},

solved by fixed-point iteration against a once-factorized 2i/dt + D2.  It
conserves the discrete mass and the discrete energy K_h/2 - P_h/4 exactly (up
to the iteration tolerance) and maps the discrete ground state to e^{i theta} Q_h
with tan(theta/2) = dt/2.

``strang``: half nonlinear phase, exact sine-spectral linear propagator, half
nonlinear phase.  Mass is exact; energy is only second order and the error
constant is large because the weight is singular at the first node.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy.fft import dst
from scipy.interpolate import CubicSpline
from scipy.linalg import get_lapack_funcs

from .errors import InvalidConfiguration, NumericFailure
from .radial_core import (RadialField, RadialGrid, dirichlet_eigenvalues, discrete_mass,
                          variance, variance_rate)

STATUSES = ("running", "completed", "blowup_detected", "truncation_contaminated")


def compute_sc(b: float) -> float:
    if not 0.0 < b <= 1.0:
        raise InvalidConfiguration(f"b must lie in (0,1), got {b}")
    return (1.0 + b) / 2.0


@dataclass(frozen=True)
class Reference:
    """Ground-state values used by blowup certificates and delta."""
    mass: float
    kinetic: float
    energy: float

    @classmethod
    def from_ground_state(cls, gs) -> "Reference":
        return cls(gs.mass_h, gs.kinetic_h, gs.energy_h)


@dataclass(frozen=True)
class EvolveConfig:
    dt0: float = 4e-3
    t_final: float = 10.0
    gradient_cap: float = 1e3
    boundary_mass_cap: float = 1e-4
    sample_every: float = 0.05
    scheme: str = "cn"
    picard_tol: float = 1e-14
    max_picard: int = 60
    energy_budget: float = 1e-9
    min_dt_factor: float = 1e-12
    virial_certificate: bool = True
    delta0_frac: float = 0.1
    stop_on_truncation: bool = True
    nonlinear: bool = True
    reference: Optional[Reference] = None

    def __post_init__(self):
        if not self.dt0 > 0:
            raise InvalidConfiguration("dt0 must be positive")
        if not self.gradient_cap > 1:
            raise InvalidConfiguration("gradient_cap must exceed 1")
        if not self.t_final > 0 or not self.sample_every > 0:
            raise InvalidConfiguration("t_final and sample_every must be positive")
        if self.scheme not in ("cn", "strang"):
            raise InvalidConfiguration(f"unknown scheme {self.scheme!r}")
        if not 0 < self.boundary_mass_cap <= 1:
            raise InvalidConfiguration("boundary_mass_cap must lie in (0,1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    b: float
    grid: RadialGrid
    times: np.ndarray
    states: List[RadialField]
    mass_ledger: np.ndarray
    energy_ledger: np.ndarray
    kinetic_ledger: np.ndarray
    potential_ledger: np.ndarray
    variance_ledger: np.ndarray
    variance_rate_ledger: np.ndarray
    boundary_fraction: np.ndarray
    dt_history: np.ndarray
    status: str
    blowup_time: Optional[float] = None
    blowup_reason: Optional[str] = None
    blowup_time_bound: Optional[float] = None
    config: Optional[EvolveConfig] = None
    notes: List[str] = field(default_factory=list)

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass_ledger / self.mass_ledger[0] - 1.0)))

    def energy_drift(self) -> float:
        e0 = self.energy_ledger[0]
        scale = abs(e0) if e0 != 0 else max(self.kinetic_ledger[0], 1e-300)
        return float(np.max(np.abs(self.energy_ledger - e0)) / scale)

    def delta(self, kinetic_ref: float) -> np.ndarray:
        return np.abs(self.kinetic_ledger - kinetic_ref)

    def final(self) -> RadialField:
        return self.states[-1]

    def at(self, t: float) -> RadialField:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no sample at t={t}")
        return self.states[j]


# -- one-step maps ---------------------------------------------------------------

@lru_cache(maxsize=16)
def _cn_factor(n: int, h: float, dt: float):
    """LU factors of 2i/dt + D2 (tridiagonal, constant for fixed dt)."""
    d = np.full(n, 2j / dt - 2.0 / h ** 2)
    off = np.full(n - 1, 1.0 / h ** 2 + 0j)
    gttrf, gttrs = get_lapack_funcs(("gttrf", "gttrs"), (d,))
    dl, d, du, du2, ipiv, info = gttrf(off, d, off.copy())
    if info != 0:
        raise NumericFailure("tridiagonal factorization failed")
    return gttrs, (dl, d, du, du2, ipiv)


def _weight(grid: RadialGrid, b: float) -> np.ndarray:
    return grid.nodes ** (-b - 2.0)


@np.errstate(over="ignore", invalid="ignore")
def _cn_step_v(v, dt, grid, W, tol, max_iter, guess=None, nonlinear=True):
    """Returns (v_next, iterations) or (None, iterations) on non-convergence."""
    gttrs, lu = _cn_factor(grid.n, grid.spacing, dt)
    rhs0 = (2j / dt) * v
    a2 = v.real ** 2 + v.imag ** 2
    vn = v.copy() if guess is None else guess
    prev = np.inf
    for it in range(1, max_iter + 1):
        m = 0.5 * (vn + v)
        if nonlinear:
            rhs = rhs0 - W * (0.5 * (vn.real ** 2 + vn.imag ** 2 + a2)) * m
        else:
            rhs = rhs0
        m, info = gttrs(*lu, rhs)
        vnew = 2.0 * m - v
        if not np.all(np.isfinite(vnew)):
            return None, it
        d = np.max(np.abs(vnew - vn))
        scale = np.max(np.abs(vnew))
        vn = vnew
        if not nonlinear or d <= tol * scale:
            return vn, it
        # accept a stagnated iteration at the rounding floor
        if d >= prev and d <= 1e3 * tol * scale:
            return vn, it
        prev = d
    return None, max_iter


def _strang_step_v(v, dt, grid, W, nonlinear=True):
    lam = dirichlet_eigenvalues(grid)
    if nonlinear:
        v = v * np.exp(0.5j * dt * W * (v.real ** 2 + v.imag ** 2))
    c = dst(v, type=1, norm="ortho")
    v = dst(c * np.exp(1j * lam * dt), type=1, norm="ortho")
    if nonlinear:
        v = v * np.exp(0.5j * dt * W * (v.real ** 2 + v.imag ** 2))
    return v


def step(u: RadialField, dt: float, b: float, scheme: str = "cn", nonlinear: bool = True,
         tol: float = 1e-14, max_iter: int = 200) -> RadialField:
    if not dt > 0:
        raise InvalidConfiguration("dt must be positive")
    grid = u.grid
    W = _weight(grid, b)
    v = u.v.astype(complex)
    if scheme == "strang":
        vn = _strang_step_v(v, dt, grid, W, nonlinear)
    elif scheme == "cn":
        vn, _ = _cn_step_v(v, dt, grid, W, tol, max_iter, nonlinear=nonlinear)
        if vn is None:
            raise NumericFailure("implicit step did not converge")
    else:
        raise InvalidConfiguration(f"unknown scheme {scheme!r}")
    if not np.all(np.isfinite(vn)):
        raise NumericFailure("non-finite values after step")
    return RadialField.from_v(grid, vn)


# -- evolution --------------------------------------------------------------------

def _energy_v(v, h, W):
    a2 = v.real ** 2 + v.imag ** 2
    dv = np.diff(np.concatenate(([0.0], v, [0.0])))
    K = 4 * np.pi * np.sum(dv.real ** 2 + dv.imag ** 2) / h
    P = 4 * np.pi * h * np.sum(W * a2 * a2)
    return K, P


def _virial_certificate(b, K, P, M, E, V, Vp, ref: Optional[Reference], delta0_frac):
    """Return a blowup-time bound if the current state is certified to blow up, else None.

    d^2/dt^2 V = 8(3+b)E - 4(1+b)K.  With E < 0, or with M^{1-s}E^s not above the
    ground-state value and K above K[Q] by delta0, this stays negative for all
    later times; once V' < 0 the concave V must reach zero before t + V/|V'|.
    """
    if not Vp < 0:
        return None
    if E < 0:
        return V / abs(Vp)
    if ref is None:
        return None
    s = compute_sc(b)
    prod = M ** (1 - s) * E ** s
    prod_q = ref.mass ** (1 - s) * ref.energy ** s
    if prod <= prod_q * (1 + 1e-8) and K - ref.kinetic >= delta0_frac * ref.kinetic:
        if 8 * (3 + b) * E - 4 * (1 + b) * K < 0:
            return V / abs(Vp)
    return None


def evolve(u0: RadialField, cfg: EvolveConfig, b: float) -> Trajectory:
    grid = u0.grid
    h = grid.spacing
    W = _weight(grid, b)
    compute_sc(b)
    outer = grid.nodes >= 0.9 * grid.r_max
    v = u0.v.astype(complex)
    k_ref = cfg.reference.kinetic if cfg.reference is not None else None

    times, states = [], []
    ledgers = {k: [] for k in ("M", "E", "K", "P", "V", "Vp", "B")}
    dt_hist: List[float] = []
    notes: List[str] = []

    def record(t, v):
        f = RadialField.from_v(grid, v)
        K, P = _energy_v(v, h, W)
        M = discrete_mass(f)
        times.append(t)
        states.append(f)
        ledgers["M"].append(M)
        ledgers["K"].append(K)
        ledgers["P"].append(P)
        ledgers["E"].append(0.5 * K - 0.25 * P if cfg.nonlinear else 0.5 * K)
        ledgers["V"].append(variance(f))
        ledgers["Vp"].append(variance_rate(f))
        a2 = np.abs(v) ** 2
        ledgers["B"].append(float(a2[outer].sum() / a2.sum()) if a2.sum() > 0 else 0.0)
        return f

    record(0.0, v)
    status = "running"
    blow_t = blow_reason = blow_bound = None
    n_samples = int(math.ceil(cfg.t_final / cfg.sample_every - 1e-9))
    dt_cur = cfg.dt0
    dt_min = cfg.min_dt_factor * cfg.dt0
    e_scale = max(abs(ledgers["E"][0]), ledgers["K"][0], 1e-300)
    vprev = None

    for s_idx in range(1, n_samples + 1):
        t0 = (s_idx - 1) * cfg.sample_every
        t1 = min(s_idx * cfg.sample_every, cfg.t_final)
        t = t0
        while t < t1 - 1e-12 * max(1.0, t1):
            remaining = t1 - t
            nsub = max(1, int(math.ceil(remaining / dt_cur - 1e-9)))
            dt = remaining / nsub
            if cfg.scheme == "strang":
                vn = _strang_step_v(v, dt, grid, W, cfg.nonlinear)
                ok = bool(np.all(np.isfinite(vn)))
            else:
                guess = (2 * v - vprev) if (vprev is not None and dt_hist and
                                             abs(dt_hist[-1] - dt) < 1e-12 * dt) else None
                vn, _ = _cn_step_v(v, dt, grid, W, cfg.picard_tol, cfg.max_picard,
                                   guess=guess, nonlinear=cfg.nonlinear)
                ok = vn is not None
                if ok and cfg.nonlinear:
                    K0, P0 = _energy_v(v, h, W)
                    K1, P1 = _energy_v(vn, h, W)
                    if abs((0.5 * K1 - 0.25 * P1) - (0.5 * K0 - 0.25 * P0)) > cfg.energy_budget * e_scale:
                        ok = False
            if not ok:
                dt_cur *= 0.5
                vprev = None
                if dt_cur < dt_min:
                    status, blow_t, blow_reason = "blowup_detected", t, "dt_underflow"
                    break
                continue
            vprev, v = v, vn
            t += dt
            dt_hist.append(dt)
            # regrow towards dt0 once steps succeed again
            if dt_cur < cfg.dt0 and len(dt_hist) % 16 == 0:
                dt_cur = min(cfg.dt0, 2 * dt_cur)
        if status != "running":
            record(t, v)
            break
        record(t1, v)
        K, M, E = ledgers["K"][-1], ledgers["M"][-1], ledgers["E"][-1]
        if k_ref is not None and K > cfg.gradient_cap * k_ref:
            status, blow_t, blow_reason = "blowup_detected", t1, "gradient_cap"
            break
        if cfg.virial_certificate and cfg.nonlinear:
            bound = _virial_certificate(b, K, ledgers["P"][-1], M, E, ledgers["V"][-1],
                                        ledgers["Vp"][-1], cfg.reference, cfg.delta0_frac)
            if bound is not None:
                status, blow_t, blow_reason = "blowup_detected", t1, "virial"
                blow_bound = t1 + bound
                break
        if ledgers["B"][-1] > cfg.boundary_mass_cap:
            notes.append(f"outer-shell mass fraction {ledgers['B'][-1]:.2e} at t={t1:.4g}")
            if cfg.stop_on_truncation:
                status = "truncation_contaminated"
                break
    if status == "running":
        status = "truncation_contaminated" if notes else "completed"

    return Trajectory(
        b=b, grid=grid, times=np.array(times), states=states,
        mass_ledger=np.array(ledgers["M"]), energy_ledger=np.array(ledgers["E"]),
        kinetic_ledger=np.array(ledgers["K"]), potential_ledger=np.array(ledgers["P"]),
        variance_ledger=np.array(ledgers["V"]), variance_rate_ledger=np.array(ledgers["Vp"]),
        boundary_fraction=np.array(ledgers["B"]), dt_history=np.array(dt_hist),
        status=status, blowup_time=blow_t, blowup_reason=blow_reason,
        blowup_time_bound=blow_bound, config=cfg, notes=notes,
    )


# -- scaling -----------------------------------------------------------------------

def rescale(u: RadialField, lam: float, b: float, mode: str = "resample") -> RadialField:
    """u_lam(x) = lam^{(2-b)/2} u(lam x).

    ``resample`` keeps the grid and interpolates v = r u by a cubic spline, with
    zero extension beyond r_max.  ``exact`` moves the samples to the grid whose
    nodes are r_j / lam, on which every discrete functional scales exactly.
    """
    if not lam > 0:
        raise InvalidConfiguration(f"scaling factor must be positive, got {lam}")
    amp = lam ** ((2.0 - b) / 2.0)
    if lam == 1.0:
        return RadialField(u.grid, u.values.copy())
    if mode == "exact":
        return RadialField(u.grid.scaled(lam), amp * u.values)
    if mode != "resample":
        raise InvalidConfiguration(f"unknown rescale mode {mode!r}")
    g = u.grid
    rr = np.concatenate(([0.0], g.nodes, [g.r_max]))
    vv = np.concatenate(([0.0], u.v, [0.0]))
    spline = CubicSpline(rr, vv)
    x = lam * g.nodes
    inside = x < g.r_max
    v_new = np.zeros(g.n, dtype=vv.dtype)
    v_new[inside] = spline(x[inside])
    # v_lam(r) = r u_lam(r) = amp * v(lam r) / lam
    return RadialField.from_v(g, amp * v_new / lam)


def resample(u: RadialField, grid: RadialGrid) -> RadialField:
    """Spline transfer of v = r u onto another grid, zero beyond the source r_max."""
    g = u.grid
    rr = np.concatenate(([0.0], g.nodes, [g.r_max]))
    vv = np.concatenate(([0.0], u.v, [0.0]))
    spline = CubicSpline(rr, vv)
    x = grid.nodes
    out = np.zeros(grid.n, dtype=vv.dtype)
    m = x < g.r_max
    out[m] = spline(x[m])
    return RadialField.from_v(grid, out)
