"""Modulation decomposition near the standing wave and the space-time meters built on it.

For u(t) close to the orbit of e^{it}Q:

    g = e^{-i(zeta + t)} u - Q = alpha Q + h,
    (g2, Q) = 0,  (h1, Delta Q) = 0,  (h2, Q) = 0,

with zeta fixed by the first condition and alpha by the second.  delta(t) is
|K[u(t)] - K[Q]|, the distance proxy that opens and closes the window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson

from .errors import FitDomainError, InsufficientData, ModulationUndefined
from .ground_state import GroundState
from .radial_core import (RadialField, discrete_kinetic, inner, laplacian, norm_h1_sq, norm_lq,
                          radial_derivative)

INF = math.inf


@dataclass(frozen=True)
class ModulationFrame:
    t: float
    zeta: float
    alpha: float
    h: RadialField = field(repr=False)
    delta: float
    ortho_residuals: Tuple[float, float]
    g_h1: float
    in_window: bool
    g: RadialField = field(repr=False, default=None)
    h_h1: float = 0.0

    def row(self):
        return {"t": self.t, "zeta": self.zeta, "alpha": self.alpha, "delta": self.delta,
                "h_h1": self.h_h1, "g_h1": self.g_h1, "in_window": int(self.in_window),
                "ortho1": self.ortho_residuals[0], "ortho2": self.ortho_residuals[1]}


@dataclass(frozen=True)
class AdmissiblePair:
    q: float | Fraction
    r: float | Fraction

    @property
    def admissible(self) -> bool:
        return check_admissible(self)


@dataclass(frozen=True)
class RateFit:
    c: float
    prefactor: float
    rms_log_residual: float
    window: Tuple[float, float]
    n: int = 0


@dataclass(frozen=True)
class ZetaLimit:
    zeta0: float
    rate: Optional[RateFit]


STRICHARTZ_PAIRS = (
    (INF, Fraction(2)), (Fraction(2), Fraction(6)), (Fraction(3), Fraction(18, 5)),
    (Fraction(4), Fraction(3)), (Fraction(16, 3), Fraction(8, 3)),
)


# -- decomposition ---------------------------------------------------------------

def _qfield(Q) -> RadialField:
    return Q.field if isinstance(Q, GroundState) else Q


def laplacian_q(Q) -> RadialField:
    """Delta Q = Q - r^{-b} Q^3 from the ground-state equation."""
    if isinstance(Q, GroundState):
        return Q.laplacian_q()
    return laplacian(Q)


def fit_phase(u: RadialField, t: float, Q, previous: Optional[float] = None) -> float:
    q = _qfield(Q)
    z = inner(u, q)
    scale = math.sqrt(max(inner(u, u).real, 0.0) * inner(q, q).real)
    if scale == 0.0 or abs(z) <= 1e-12 * scale:
        raise ModulationUndefined("overlap with Q vanishes; u is far from the orbit")
    zeta = math.atan2(z.imag, z.real) - t
    if previous is not None:
        zeta += 2 * math.pi * round((previous - zeta) / (2 * math.pi))
    else:
        zeta = math.remainder(zeta, 2 * math.pi)
        if zeta <= -math.pi:
            zeta += 2 * math.pi
    return float(zeta)


def delta(u: RadialField, Q) -> float:
    """|K[u] - K[Q]| with the discrete kinetic functional conserved by the flow."""
    kq = Q.kinetic_h if isinstance(Q, GroundState) else discrete_kinetic(Q)
    return float(abs(discrete_kinetic(u) - kq))


def decompose(u: RadialField, t: float, Q, previous: Optional[float] = None,
              delta0: Optional[float] = None) -> ModulationFrame:
    q = _qfield(Q)
    lapq = laplacian_q(Q)
    zeta = fit_phase(u, t, Q, previous)
    g = u * np.exp(-1j * (zeta + t)) - q
    g1 = g.real
    alpha = inner(g1, lapq).real / inner(q, lapq).real
    h = g - alpha * q
    h1, h2 = h.real, h.imag
    o1 = inner(h1, lapq).real
    o2 = inner(h2, q).real
    kq = Q.kinetic_h if isinstance(Q, GroundState) else discrete_kinetic(q)
    d = abs(discrete_kinetic(u) - kq)
    d0 = 0.1 * kq if delta0 is None else delta0
    return ModulationFrame(
        t=float(t), zeta=zeta, alpha=float(alpha), h=h, delta=float(d),
        ortho_residuals=(float(o1), float(o2)), g_h1=math.sqrt(norm_h1_sq(g)),
        in_window=bool(d < d0), g=g, h_h1=math.sqrt(norm_h1_sq(h)),
    )


def decompose_trajectory(times: Sequence[float], states: Sequence[RadialField], Q,
                         delta0: Optional[float] = None) -> List[ModulationFrame]:
    """Frames with zeta made continuous across samples; stops at the first undefined frame."""
    frames: List[ModulationFrame] = []
    prev = None
    for t, u in zip(times, states):
        try:
            fr = decompose(u, t, Q, previous=prev, delta0=delta0)
        except ModulationUndefined:
            break
        frames.append(fr)
        prev = fr.zeta
    return frames


def orthogonality_relative(frame: ModulationFrame, Q) -> Tuple[float, float]:
    """Orthogonality residuals divided by ||Q||_{H^1} ||g||_{H^1}."""
    qn = math.sqrt(norm_h1_sq(_qfield(Q)))
    s = qn * frame.g_h1
    if s == 0.0:
        return 0.0, 0.0
    return abs(frame.ortho_residuals[0]) / s, abs(frame.ortho_residuals[1]) / s


# -- admissibility ---------------------------------------------------------------

def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if math.isinf(x):
            return INF
        return Fraction(x).limit_denominator(10 ** 6)
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "oo"):
        return INF
    return Fraction(x)


def check_admissible(pair) -> bool:
    """Exact test of 2/q + 3/r = 3/2 with q >= 2 (L^2-admissible pair in three dimensions)."""
    q, r = (pair.q, pair.r) if isinstance(pair, AdmissiblePair) else pair
    q, r = _as_fraction(q), _as_fraction(r)
    if r is INF or (not isinstance(r, Fraction)) or r <= 0:
        return False
    if q is INF:
        return Fraction(3) / r == Fraction(3, 2)
    if q < 2:
        return False
    return Fraction(2) / q + Fraction(3) / r == Fraction(3, 2)


# -- space-time meters ----------------------------------------------------------------

def _frames_window(frames, window):
    """(times, fields) from frames: ModulationFrames (g), or (t, field) pairs."""
    ts, fs = [], []
    for fr in frames:
        if isinstance(fr, ModulationFrame):
            ts.append(fr.t)
            fs.append(fr.g)
        else:
            ts.append(float(fr[0]))
            fs.append(fr[1])
    ts = np.asarray(ts)
    t1, t2 = window
    tol = 1e-9 * max(1.0, abs(t2))
    if ts.size == 0 or ts.min() > t1 + tol or ts.max() < t2 - tol:
        raise InsufficientData(f"frames do not cover [{t1}, {t2}]")
    m = (ts >= t1 - tol) & (ts <= t2 + tol)
    if m.sum() < 2 and t2 > t1:
        raise InsufficientData("need at least two frames in the window")
    return ts[m], [f for f, k in zip(fs, m) if k]


def _time_integral(ts, ys):
    if ts.size < 2:
        return 0.0
    if ts.size >= 3:
        return float(simpson(ys, x=ts))
    return float(np.trapezoid(ys, ts))


def _gradient_field(f: RadialField) -> RadialField:
    return RadialField(f.grid, radial_derivative(f))


def strichartz_meter(frames, window: Tuple[float, float], pair, derivative: bool = False) -> float:
    """||g||_{L^q_t L^r_x} (or with grad g) over the window, Simpson rule in time."""
    q, r = (pair.q, pair.r) if isinstance(pair, AdmissiblePair) else pair
    if not check_admissible((q, r)):
        raise ValueError(f"pair ({q}, {r}) is not L^2-admissible")
    ts, fs = _frames_window(frames, window)
    rr = float(r)
    norms = np.array([norm_lq(_gradient_field(f) if derivative else f, rr) for f in fs])
    qf = _as_fraction(q)
    if qf is INF:
        return float(norms.max())
    qq = float(qf)
    return _time_integral(ts, norms ** qq) ** (1.0 / qq)


def pair_label(pair) -> str:
    q, r = pair
    return f"({'inf' if q is INF or q == INF else q},{r})"


def strichartz_table(frames, window: Optional[Tuple[float, float]] = None):
    """Meters of g and grad g for every pair in STRICHARTZ_PAIRS over a window (default: all frames)."""
    if window is None:
        window = (frames[0].t, frames[-1].t)
    out = {}
    for pair in STRICHARTZ_PAIRS:
        out[pair_label(pair)] = {"g": strichartz_meter(frames, window, pair),
                                 "grad_g": strichartz_meter(frames, window, pair, derivative=True)}
    return out


def grad_power_integral(frames, window: Tuple[float, float], a: float) -> float:
    """int_window ||grad g||_{L^2}^a dt."""
    if not a > 0:
        raise ValueError("a must be positive")
    ts, fs = _frames_window(frames, window)
    vals = np.array([norm_lq(_gradient_field(f), 2) ** a for f in fs])
    return _time_integral(ts, vals)


def virial_check(delta_samples, t1: float, t2: float):
    """(int_{t1}^{t2} delta, (delta(t1), delta(t2)), ratio) from sampled delta."""
    ts, ds = np.asarray(delta_samples[0], float), np.asarray(delta_samples[1], float)
    tol = 1e-9 * max(1.0, abs(t2))
    if ts.min() > t1 + tol or ts.max() < t2 - tol:
        raise InsufficientData("delta samples do not cover the window")
    m = (ts >= t1 - tol) & (ts <= t2 + tol)
    tt, dd = ts[m], ds[m]
    d1 = float(np.interp(t1, ts, ds))
    d2 = float(np.interp(t2, ts, ds))
    lhs = _time_integral(tt, dd)
    denom = d1 + d2
    ratio = lhs / denom if denom > 0 else (0.0 if lhs == 0 else math.inf)
    return lhs, (d1, d2), ratio


def virial_ratio_max(times, deltas) -> Tuple[float, Tuple[float, float]]:
    """Max over all sample pairs t1 < t2 of the trapezoid int delta / (delta(t1) + delta(t2))."""
    t = np.asarray(times, float)
    d = np.asarray(deltas, float)
    if t.size < 2:
        raise InsufficientData("need two samples")
    cum = cumulative_trapezoid(d, t, initial=0.0)
    lhs = cum[None, :] - cum[:, None]
    den = d[:, None] + d[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.triu(np.ones_like(lhs, dtype=bool), 1) & (den > 0), lhs / den, -np.inf)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return float(ratio[i, j]), (float(t[i]), float(t[j]))


def alpha_drift(frames: Sequence[ModulationFrame], t: float, s: float) -> float:
    fr = {round(f.t, 12): f for f in frames}
    try:
        ft, fs = fr[round(t, 12)], fr[round(s, 12)]
    except KeyError as exc:
        raise InsufficientData(f"no frame at t={exc.args[0]}") from None
    if not (ft.in_window and fs.in_window):
        raise InsufficientData("alpha drift is only defined for in-window frames")
    return abs(fs.alpha - ft.alpha)


def alpha_drift_envelope(frames: Sequence[ModulationFrame]) -> Tuple[np.ndarray, np.ndarray]:
    """sup_{s >= t} |alpha(s) - alpha(t)| over in-window frames."""
    fw = [f for f in frames if f.in_window]
    a = np.array([f.alpha for f in fw])
    t = np.array([f.t for f in fw])
    env = np.array([np.max(np.abs(a[k:] - a[k])) for k in range(a.size)])
    return t, env


def _split_samples(samples):
    """Accept (times, values) arrays or a list of (t, value) pairs."""
    if len(samples) == 2 and np.ndim(samples[0]) == 1 and np.ndim(samples[1]) == 1 \
            and len(samples[0]) == len(samples[1]) and len(samples[0]) != 2:
        return np.asarray(samples[0], float), np.asarray(samples[1], float)
    arr = np.asarray(samples, float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def rate_fit(samples, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """Least squares of log(value) = log(A) - c t."""
    t, y = _split_samples(samples)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, y = t[m], y[m]
    if t.size < 8:
        raise FitDomainError(f"rate fit needs at least 8 samples, got {t.size}")
    if np.any(~(y > 0)):
        raise FitDomainError("rate fit needs strictly positive samples")
    X = np.column_stack([np.ones_like(t), -t])
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = np.log(y) - X @ coef
    return RateFit(c=float(coef[1]), prefactor=float(np.exp(coef[0])),
                   rms_log_residual=float(np.sqrt(np.mean(resid ** 2))),
                   window=(float(t[0]), float(t[-1])), n=int(t.size))


def zeta_limit(frames, tail_fraction: float = 0.25) -> ZetaLimit:
    """Mean zeta over the last part of the time range and the decay rate of its Cauchy envelope.

    The envelope at t_n is max - min of zeta over [t_n, t_end]; its rate is fitted
    over the samples where it is still positive.
    """
    if frames and isinstance(frames[0], ModulationFrame):
        t = np.array([f.t for f in frames])
        z = np.array([f.zeta for f in frames])
    else:
        t, z = np.asarray(frames[0], float), np.asarray(frames[1], float)
    if t.size < 2:
        raise InsufficientData("need at least two frames")
    t_cut = t[-1] - tail_fraction * (t[-1] - t[0])
    zeta0 = float(np.mean(z[t >= t_cut]))
    env = np.array([np.ptp(z[k:]) for k in range(z.size)])
    m = env > 0
    fit = None
    if m.sum() >= 8:
        try:
            fit = rate_fit((t[m], env[m]))
        except FitDomainError:
            fit = None
    return ZetaLimit(zeta0, fit)


def g_equation_residual(frames: Sequence[ModulationFrame], Q, b: float):
    """Residual of i g_t + (Delta - 1) g - zeta'(g + Q) + R(g) at the middle of three frames.

    R(g) = r^{-b}(|g+Q|^2 (g+Q) - Q^3); time derivatives by centered differences.
    Returns (max-norm residual, |zeta'| / delta).
    """
    if len(frames) != 3:
        raise InsufficientData("need exactly three consecutive frames")
    f0, f1, f2 = frames
    dt = f2.t - f0.t
    if not dt > 0:
        raise InsufficientData("frames must be time ordered")
    q = _qfield(Q)
    r = q.grid.nodes
    g = f1.g.values
    gt = (f2.g.values - f0.g.values) / dt
    zdot = (f2.zeta - f0.zeta) / dt
    lap = laplacian(f1.g).values
    w = g + q.values
    R = r ** (-b) * (np.abs(w) ** 2 * w - q.values ** 3)
    res = 1j * gt + lap - g - zdot * w + R
    ratio = abs(zdot) / f1.delta if f1.delta > 0 else (0.0 if zdot == 0 else math.inf)
    return float(np.max(np.abs(res))), float(ratio)


def comparability(frames: Sequence[ModulationFrame], delta_range: Tuple[float, float]):
    """Bracket constants for ||h||/|alpha|, |alpha|/delta and ||g||/delta over frames in range."""
    sel = [f for f in frames if f.in_window and delta_range[0] < f.delta < delta_range[1]
           and f.alpha != 0]
    if not sel:
        raise InsufficientData("no frames in the comparability range")
    r1 = np.array([f.h_h1 / abs(f.alpha) for f in sel])
    r2 = np.array([abs(f.alpha) / f.delta for f in sel])
    r3 = np.array([f.g_h1 / f.delta for f in sel])

    def cstar(x):
        return float(max(x.max(), 1.0 / x.min()))

    return {"h_over_alpha": (float(r1.min()), float(r1.max())),
            "alpha_over_delta": (float(r2.min()), float(r2.max())),
            "g_over_delta_max": float(r3.max()),
            "C_star": max(cstar(r1), cstar(r2)), "n": len(sel)}
