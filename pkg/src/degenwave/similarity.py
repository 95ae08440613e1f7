"""Similarity frames w(y, s) extracted from solver traces.

For a base point x0 with blow-up time T0 = T_U(X0), X0 = phi(x0), the frame
variables are

    w(y, s) = (T0 - t)^(2/(p-1)) U(X, t),   X = X0 + y e^(-s),
    t = T0 - e^(-s),                        s = -log(T0 - t),

turning the backward unit cone into the cylinder |y| < 1.  Frames are sampled
by cubic interpolation in X and linear interpolation in t between stored
snapshots; w_y is a centered difference on the y-grid, and w_s comes
pointwise from the stored velocity field through the transform identity
(differencing adjacent frames would amplify the interpolation error by 1/ds).

At the origin (X0 = 0) the cone collapses to y in (0, 1) and the first-order
term (d-1)/y d_y w stays in the equation instead of decaying like e^(-s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .coefficients import CoefficientModel
from .solver import Trace

__all__ = [
    "ConeOutsideDomainError",
    "ExtrapolationError",
    "SimilarityFrame",
    "FrameLadder",
    "to_similarity",
    "frame_ladder",
    "frames_from_solution",
    "frame_equation_residual",
    "u_from_frame",
]


class ConeOutsideDomainError(ValueError):
    """The backward cone leaves the trace's spatial domain or hits masked nodes."""


class ExtrapolationError(ValueError):
    """The requested s exceeds the time range resolved by the trace."""


@dataclass
class SimilarityFrame:
    """(w, w_s, w_y) on a y-grid at one similarity time for one base point."""

    x0: float
    X0: float
    T0: float
    s: float
    y: np.ndarray
    w: np.ndarray
    w_s: np.ndarray
    w_y: np.ndarray
    p: float
    d: int
    origin: bool = False


@dataclass
class FrameLadder:
    frames: list
    s_min: float
    s_max: float
    ds: float
    x0: float
    X0: float
    T0: float
    limit: str  # what capped s_max: "resolution" | "coverage" | "cone" | "s_cap"

    def __iter__(self):
        return iter(self.frames)

    def __len__(self):
        return len(self.frames)


_EDGE_GUARD = 1e-5  # keeps endpoints inside the innermost quadrature nodes


def _frame_y_grid(n_y, origin):
    g = _EDGE_GUARD
    if origin:
        return np.linspace(g, 1.0 - g, n_y)
    return np.linspace(-1.0 + g, 1.0 - g, n_y)


def _bracket_index(times, t):
    i = int(np.searchsorted(times, t, side="right")) - 1
    if i < 0 or i >= times.shape[0] - 1:
        if i == times.shape[0] - 1 and times[i] == t:
            return i - 1
        raise ExtrapolationError(f"t={t:g} outside stored range "
                                 f"[{times[0]:g}, {times[-1]:g}]")
    return i


def _sample_u(trace: Trace, X_pts, t, require_alive=True, with_velocity=False):
    """u (and optionally u_t) at (X_pts, t): cubic in X on each bracketing
    snapshot, linear in t."""
    X = trace.X
    h = X[1] - X[0]
    if np.min(X_pts) < X[0] - 1e-12 or np.max(X_pts) > X[-1] + 1e-12:
        raise ConeOutsideDomainError("cone leaves the spatial domain of the trace")
    i = _bracket_index(trace.times, t)
    t0, t1 = trace.times[i], trace.times[i + 1]
    th = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
    lo = max(int(np.floor((np.min(X_pts) - X[0]) / h)) - 4, 0)
    hi = min(int(np.ceil((np.max(X_pts) - X[0]) / h)) + 5, X.shape[0])
    if require_alive and not (trace.alive[i, lo:hi].all() and trace.alive[i + 1, lo:hi].all()):
        raise ConeOutsideDomainError(
            f"masked nodes inside the cone at t={t:g}")
    if hi - lo < 4:
        lo = max(hi - 4, 0)
    s0 = CubicSpline(X[lo:hi], trace.U[i, lo:hi])
    s1 = CubicSpline(X[lo:hi], trace.U[i + 1, lo:hi])
    u = (1.0 - th) * s0(X_pts) + th * s1(X_pts)
    if not with_velocity:
        return u, (t1 - t0)
    v0 = CubicSpline(X[lo:hi], trace.V[i, lo:hi])
    v1 = CubicSpline(X[lo:hi], trace.V[i + 1, lo:hi])
    return u, (1.0 - th) * v0(X_pts) + th * v1(X_pts), (t1 - t0)


def _sample_w(trace, X0, T0, s, y, p, with_velocity=False):
    ems = np.exp(-s)
    t = T0 - ems
    if t < 0:
        raise ExtrapolationError(f"s={s:g} precedes t=0 (e^-s > T0)")
    if not with_velocity:
        u, span = _sample_u(trace, X0 + y * ems, t)
        return ems ** (2.0 / (p - 1.0)) * u, span
    u, v, span = _sample_u(trace, X0 + y * ems, t, with_velocity=True)
    return ems ** (2.0 / (p - 1.0)) * u, v, span


def _w_s_from_velocity(y, w, w_y, v, s, p):
    """w_s through the transform: w_s = -2/(p-1) w - y w_y + e^(-(p+1)s/(p-1)) u_t.

    Pointwise in the stored velocity field, so it avoids the 1/ds noise
    amplification of differencing interpolated frames.
    """
    return (-2.0 / (p - 1.0) * w - y * w_y
            + np.exp(-(p + 1.0) * s / (p - 1.0)) * v)


def _w_y(y, w):
    wy = np.empty_like(w)
    dy = y[1] - y[0]
    wy[1:-1] = (w[2:] - w[:-2]) / (2.0 * dy)
    wy[0] = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dy)
    wy[-1] = (3.0 * w[-1] - 4.0 * w[-2] + w[-3]) / (2.0 * dy)
    return wy


def to_similarity(trace: Trace, model: CoefficientModel, x0: float, s: float,
                  n_y: int = 257, T0: Optional[float] = None,
                  ds: float = 0.01) -> SimilarityFrame:
    """Build one similarity frame from a trace.

    w_y is a centered difference on the y-grid; w_s is evaluated pointwise
    from the stored velocity field through the transform identity (a centered
    difference between frames at s -+ ds would amplify the trace
    interpolation error by 1/ds)."""
    from .coefficients import phi
    from .solver import fit_blowup_time

    X0 = phi(model, x0)
    if T0 is None:
        j = int(round(X0 / (trace.X[1] - trace.X[0])))
        ts, us = trace.crossings_for(j)
        T0, _ = fit_blowup_time(ts, us, model.p)
    if not np.isfinite(T0):
        raise ValueError(f"no blow-up time available at x0={x0:g}")
    if np.exp(-s) > T0:
        raise ExtrapolationError(f"s={s:g} is below -log T0={-np.log(T0):g}")
    origin = X0 == 0.0
    y = _frame_y_grid(n_y, origin)
    w, v, _ = _sample_w(trace, X0, T0, s, y, model.p, with_velocity=True)
    w_y = _w_y(y, w)
    return SimilarityFrame(
        x0=x0, X0=X0, T0=T0, s=s, y=y, w=w,
        w_s=_w_s_from_velocity(y, w, w_y, v, s, model.p), w_y=w_y,
        p=model.p, d=model.d, origin=origin)


def frame_ladder(trace: Trace, model: CoefficientModel, x0: float, T0: float,
                 n_y: int = 257, ds: float = 0.01, s_margin: float = 0.5,
                 resolve_factor: float = 4.0, cover_frac: float = 0.08,
                 s_cap: float = 20.0) -> FrameLadder:
    """Uniform s-ladder of frames from s_min = -log T0 + s_margin up to the
    largest s the trace resolves.

    The ladder stops at the resolution bound e^(-s) >= resolve_factor * h;
    earlier when a sampled node's remaining lifetime falls below the same
    margin (a front arriving from a neighboring singularity is only
    ~(T_loc - t) wide in X, so such frames are under-resolved); and earlier
    still when stored snapshots no longer bracket the frame time tightly
    enough (spacing <= cover_frac * (T0 - t)) or cone nodes are masked.
    """
    from .coefficients import phi

    X0 = phi(model, x0)
    origin = X0 == 0.0
    h = trace.X[1] - trace.X[0]
    y = _frame_y_grid(n_y, origin)
    s_min = -np.log(T0) + s_margin
    if not origin:
        # keep the cone inside X > 0
        s_min = max(s_min, -np.log(X0) + 0.02)
    s_res = -np.log(resolve_factor * h)
    limit = "resolution"

    s_vals = []
    ws = []
    vs = []
    s = s_min
    while s <= min(s_res, s_cap) + 1e-12:
        ems = np.exp(-s)
        t = T0 - ems
        # every sampled node must survive the frame time by the resolution
        # margin: an arriving front is only ~(T_loc - t) wide in X
        lo = max(int(np.floor((X0 - ems) / h)) - 1, 0)
        hi = min(int(np.ceil((X0 + ems) / h)) + 2, trace.X.shape[0])
        if float(np.min(trace.mask_time[lo:hi])) - t < resolve_factor * h:
            limit = "resolution"
            break
        try:
            w, v, span = _sample_w(trace, X0, T0, s, y, model.p,
                                   with_velocity=True)
        except (ConeOutsideDomainError, ExtrapolationError) as err:
            limit = "cone" if isinstance(err, ConeOutsideDomainError) else "coverage"
            break
        if span > cover_frac * np.exp(-s):
            limit = "coverage"
            break
        s_vals.append(s)
        ws.append(w)
        vs.append(v)
        s += ds
    if s > min(s_res, s_cap):
        limit = "resolution" if s_res <= s_cap else "s_cap"
    if len(s_vals) < 3:
        raise ExtrapolationError(
            f"trace resolves fewer than 3 frames at x0={x0:g} "
            f"(s_min={s_min:.3f}, limit={limit})")

    frames = []
    for i, s_i in enumerate(s_vals):
        w_y = _w_y(y, ws[i])
        frames.append(SimilarityFrame(
            x0=x0, X0=X0, T0=T0, s=s_i, y=y, w=ws[i],
            w_s=_w_s_from_velocity(y, ws[i], w_y, vs[i], s_i, model.p),
            w_y=w_y, p=model.p, d=model.d, origin=origin))
    return FrameLadder(frames=frames, s_min=s_vals[0], s_max=s_vals[-1],
                       ds=ds, x0=x0, X0=X0, T0=T0, limit=limit)


def frames_from_solution(u: Callable, model: CoefficientModel, x0: float,
                         T0: float, s_values: Sequence[float], n_y: int = 257,
                         ds: float = 0.01) -> list:
    """Frames sampled from a closed-form solution u(X, t) instead of a trace.

    Derivatives use the same finite differences as the trace path, so these
    frames exercise the downstream machinery with controlled input error.
    """
    from .coefficients import phi

    X0 = phi(model, x0)
    origin = X0 == 0.0
    y = _frame_y_grid(n_y, origin)
    p = model.p

    def w_at(s):
        ems = np.exp(-s)
        return ems ** (2.0 / (p - 1.0)) * np.asarray(
            u(X0 + y * ems, T0 - ems), dtype=float)

    frames = []
    for s in s_values:
        w = w_at(s)
        w_s = (w_at(s + ds) - w_at(s - ds)) / (2.0 * ds)
        frames.append(SimilarityFrame(
            x0=x0, X0=X0, T0=T0, s=float(s), y=y, w=w, w_s=w_s,
            w_y=_w_y(y, w), p=p, d=model.d, origin=origin))
    return frames


def u_from_frame(frame: SimilarityFrame):
    """Undo the similarity scaling: (X, t, u) samples reproduced by the frame."""
    ems = np.exp(-frame.s)
    X = frame.X0 + frame.y * ems
    t = frame.T0 - ems
    u = np.exp(2.0 * frame.s / (frame.p - 1.0)) * frame.w
    return X, t, u


def frame_equation_residual(frames: Sequence[SimilarityFrame],
                            model: CoefficientModel, trim: int = 2) -> float:
    """Max-norm residual of the full similarity-variable equation on the
    middle of three consecutive equally spaced frames.

    Serves as a transform-correctness certificate: frames built from an exact
    solution must make this small (finite-difference accuracy), frames from
    anything else will not.
    """
    if len(frames) != 3:
        raise ValueError("need exactly three consecutive frames")
    fm, f0, fp = frames
    ds1 = f0.s - fm.s
    ds2 = fp.s - f0.s
    if abs(ds1 - ds2) > 1e-10 * max(ds1, ds2):
        raise ValueError("frames must be equally spaced in s")
    if not (np.array_equal(fm.y, f0.y) and np.array_equal(f0.y, fp.y)):
        raise ValueError("frames must share one y-grid")
    ds = ds1
    p, d = f0.p, f0.d
    y = f0.y
    dy = y[1] - y[0]
    w = f0.w
    w_s = (fp.w - fm.w) / (2.0 * ds)
    w_ss = (fp.w - 2.0 * f0.w + fm.w) / ds**2
    w_y = f0.w_y
    w_yy = np.empty_like(w)
    w_yy[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / dy**2
    w_yy[0] = w_yy[1]
    w_yy[-1] = w_yy[-2]
    w_ys = (fp.w_y - fm.w_y) / (2.0 * ds)

    s = f0.s
    ems = np.exp(-s)
    X = f0.X0 + y * ems
    beta0 = float(model.beta(f0.X0))
    beta_X = np.asarray(model.beta(X), dtype=float)
    e_fac = np.exp(2.0 * s / (p - 1.0))

    rhs = ((1.0 - y**2) * w_yy
           - 2.0 * (p + 1.0) / (p - 1.0) * y * w_y
           - 2.0 * (p + 1.0) / (p - 1.0) ** 2 * w
           + beta0 * np.abs(w) ** (p - 1.0) * w
           - (p + 3.0) / (p - 1.0) * w_s
           - 2.0 * y * w_ys
           + ems * (d - 1.0) / X * w_y
           + (beta_X - beta0) * np.abs(w) ** (p - 1.0) * w)
    from .coefficients import _zero_f
    if model.f is not _zero_f:
        rhs = rhs + e_fac ** (-p) * np.asarray(model.f(e_fac * w), dtype=float)
    if model.has_perturbations():
        amp = e_fac ** ((p + 1.0) / 2.0)  # e^((p+1)s/(p-1))
        rhs = rhs + e_fac ** (-p) * model.G(
            X, f0.T0 - ems, amp * w_y,
            amp * (w_s + y * w_y + 2.0 / (p - 1.0) * w))
    res = w_ss - rhs
    sl = slice(trim, -trim) if trim else slice(None)
    return float(np.max(np.abs(res[sl])))
