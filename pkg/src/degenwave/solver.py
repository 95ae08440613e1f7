"""Explicit solver for the transformed radial wave equation.

Integrates

    U_tt = U_XX + (d-1)/X U_X + beta(X) |U|^(p-1) U + f(U) + G(X, t, U_X, U_t)

on a uniform X-grid with a Neumann ghost at the origin (U_X(0) = 0, so the
first-order term limits to (d-1) U_XX there).  Time stepping is leapfrog in
kick-drift-kick form, which is algebraically the classic three-level scheme
and tolerates a variable dt.  The characteristic speed is 1 after the change
of variables, so the CFL restriction is simply dt <= cfl * h.

Blow-up bookkeeping: each node records the times at which |U| crosses a
geometric threshold ladder; nodes exceeding the overflow guard are masked and
kept frozen, and the unit-speed domain of influence above a masked node is
conservatively frozen as well.  Blow-up times come from fitting log|U|
against log(T - t) with the slope pinned to -2/(p-1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .coefficients import CoefficientModel

__all__ = [
    "InstabilityError",
    "InsufficientResolutionError",
    "SolverParams",
    "FieldState",
    "Trace",
    "BlowupCurve",
    "PointClass",
    "kappa0",
    "make_initial_state",
    "step",
    "simulate",
    "fit_blowup_time",
    "detect_blowup_time",
    "blowup_curve",
    "classify_point",
]


class InstabilityError(RuntimeError):
    """Non-finite values appeared on nodes that were nowhere near blow-up."""


class InsufficientResolutionError(ValueError):
    """Too few curve samples near the requested base point."""


def kappa0(p: float) -> float:
    """ODE normalization (2(p+1)/(p-1)^2)^(1/(p-1))."""
    return (2.0 * (p + 1.0) / (p - 1.0) ** 2) ** (1.0 / (p - 1.0))


@dataclass(frozen=True)
class SolverParams:
    h: float
    X_max: float
    cfl: float = 0.9
    t_max: float = 10.0
    threshold_base: float = 100.0
    threshold_factor: float = 2.0
    guard: float = 1e12
    near_dt_frac: float = 0.05
    store_frac: float = 0.005
    stop_window: Optional[tuple] = None
    focus_X: Optional[tuple] = None   # analysis vertices; storage cadence follows them
    boundary: str = "neumann"

    def __post_init__(self):
        if not (0.0 < self.cfl <= 0.9):
            raise ValueError("cfl must lie in (0, 0.9] (unit speed after the transform)")
        if self.h <= 0 or self.X_max <= self.h:
            raise ValueError("need 0 < h < X_max")

    def thresholds(self) -> np.ndarray:
        return default_thresholds(self.threshold_base, self.threshold_factor,
                                  self.guard)


def default_thresholds(base=100.0, factor=2.0, guard=1e12) -> np.ndarray:
    out = []
    u = base
    while u <= guard:
        out.append(u)
        u *= factor
    return np.array(out)


@dataclass
class FieldState:
    """Discretized (U, U_t) pair at one time, with per-node liveness."""

    X: np.ndarray
    U: np.ndarray
    V: np.ndarray
    t: float
    alive: np.ndarray
    beta_X: np.ndarray
    accel: Optional[np.ndarray] = None  # cached operator value at (U, V, t)


def make_initial_state(model: CoefficientModel, params: SolverParams,
                       U0, V0) -> FieldState:
    n = int(round(params.X_max / params.h)) + 1
    X = params.h * np.arange(n)
    U0 = np.broadcast_to(np.asarray(U0, dtype=float), (n,)).copy()
    V0 = np.broadcast_to(np.asarray(V0, dtype=float), (n,)).copy()
    beta_X = np.asarray(model.beta(X), dtype=float)
    if np.any(beta_X < 0):
        raise ValueError("reaction coefficient beta(X) must be nonnegative on the grid")
    return FieldState(X=X, U=U0, V=V0, t=0.0, alive=np.ones(n, dtype=bool),
                      beta_X=beta_X)


def _masked_fill(U, alive):
    """Replace masked values adjacent to alive nodes with the alive neighbor's
    value so stencils never read frozen overflow garbage.  Deep in a race the
    reaction term dominates the stencil, so a zeroth-order fill is enough."""
    if alive.all():
        return U
    Ue = U.copy()
    dead = ~alive
    left_alive = np.zeros_like(dead)
    left_alive[1:] = alive[:-1]
    right_alive = np.zeros_like(dead)
    right_alive[:-1] = alive[1:]
    take_left = dead & left_alive
    take_right = dead & right_alive & ~take_left
    idx = np.where(take_left)[0]
    Ue[idx] = U[idx - 1]
    idx = np.where(take_right)[0]
    Ue[idx] = U[idx + 1]
    return Ue


def _acceleration(model: CoefficientModel, X, U, V, t, h, beta_X, alive,
                  boundary="neumann"):
    """Spatial operator + nonlinearity + perturbations."""
    from .coefficients import _zero_f  # default marker

    Ue = _masked_fill(U, alive)
    d = model.d
    p = model.p
    n = Ue.shape[0]
    A = np.empty_like(Ue)
    if boundary == "periodic":
        Up = np.roll(Ue, -1)
        Um = np.roll(Ue, 1)
        d2 = (Up - 2.0 * Ue + Um) / h**2
        d1 = (Up - Um) / (2.0 * h)
        A[:] = d2
        if d != 1:
            raise ValueError("periodic harness supports d = 1 only")
    else:
        d2 = np.empty_like(Ue)
        d1 = np.zeros_like(Ue)
        d2[1:-1] = (Ue[2:] - 2.0 * Ue[1:-1] + Ue[:-2]) / h**2
        d1[1:-1] = (Ue[2:] - Ue[:-2]) / (2.0 * h)
        # ghost symmetry at the origin: U(-h) = U(h)
        d2[0] = 2.0 * (Ue[1] - Ue[0]) / h**2
        d1[0] = 0.0
        # outer ghost: U(X_max + h) = U(X_max - h)
        d2[-1] = 2.0 * (Ue[-2] - Ue[-1]) / h**2
        d1[-1] = 0.0
        A[:] = d2
        if d != 1:
            A[1:] += (d - 1) / X[1:] * d1[1:]
            # limit (d-1)/X U_X -> (d-1) U_XX for even data
            A[0] += (d - 1) * d2[0]
    A += beta_X * np.abs(Ue) ** (p - 1.0) * Ue
    if model.f is not _zero_f:
        A += model.f(Ue)
    if model.has_perturbations():
        A += model.G(X, t, d1, V)
    return A


def step(state: FieldState, model: CoefficientModel, dt: float,
         params: Optional[SolverParams] = None) -> FieldState:
    """Advance one leapfrog step; masks nodes that exceed the overflow guard.

    Frozen nodes keep their last values.  Raises InstabilityError when a node
    far from blow-up turns non-finite under a CFL-respecting dt.
    """
    h = state.X[1] - state.X[0]
    guard = params.guard if params is not None else 1e12
    boundary = params.boundary if params is not None else "neumann"
    if params is not None and dt > params.cfl * h * (1.0 + 1e-12):
        raise ValueError(f"dt={dt:g} violates the CFL bound {params.cfl * h:g}")

    A0 = state.accel
    if A0 is None:
        A0 = _acceleration(model, state.X, state.U, state.V, state.t, h,
                           state.beta_X, state.alive, boundary)
    Vh = state.V + 0.5 * dt * A0
    U1 = state.U + dt * Vh
    t1 = state.t + dt
    A1 = _acceleration(model, state.X, U1, Vh, t1, h, state.beta_X,
                       state.alive, boundary)
    V1 = Vh + 0.5 * dt * A1

    U1 = np.where(state.alive, U1, state.U)
    V1 = np.where(state.alive, V1, state.V)
    A1 = np.where(state.alive, A1, 0.0)

    thr_base = params.threshold_base if params is not None else 100.0
    bad = state.alive & ~(np.isfinite(U1) & np.isfinite(V1))
    jumped = (bad | (state.alive & (np.abs(U1) >= guard))) \
        & (np.abs(state.U) < 0.5 * thr_base)
    if np.any(jumped):
        # quiet node went non-finite (or through the guard) in a single step:
        # that is never a resolved blow-up, whatever the dt policy
        raise InstabilityError(
            f"non-finite update at t={t1:g} on nodes far from blow-up")
    if np.any(bad):
        U1[bad] = np.sign(state.U[bad]) * guard
        V1[bad] = 0.0
    over = state.alive & (np.abs(U1) >= guard)
    alive1 = state.alive & ~bad & ~over
    unchanged = bool(np.array_equal(alive1, state.alive))
    return FieldState(X=state.X, U=U1, V=V1, t=t1, alive=alive1,
                      beta_X=state.beta_X,
                      accel=A1 if unchanged else None)


@dataclass
class Trace:
    """Stored snapshots plus threshold-crossing records of one run."""

    X: np.ndarray
    times: np.ndarray          # (nt,)
    U: np.ndarray              # (nt, nx)
    V: np.ndarray              # (nt, nx)
    alive: np.ndarray          # (nt, nx) bool
    cross_node: np.ndarray     # flattened crossing records
    cross_level: np.ndarray
    cross_time: np.ndarray
    cross_value: np.ndarray
    mask_time: np.ndarray      # per node: time it was masked/frozen (+inf alive)
    meta: dict

    def crossings_for(self, j):
        sel = self.cross_node == j
        order = np.argsort(self.cross_time[sel], kind="stable")
        return self.cross_time[sel][order], self.cross_value[sel][order]

    # -- append-only binary trace: one fixed-size record per snapshot --------

    def save(self, basename):
        basename = Path(basename)
        nx = self.X.shape[0]
        with open(basename.with_suffix(".bin"), "wb") as fh:
            for i in range(self.times.shape[0]):
                fh.write(struct.pack("<d", self.times[i]))
                fh.write(self.U[i].astype("<f8").tobytes())
                fh.write(self.V[i].astype("<f8").tobytes())
                fh.write(self.alive[i].astype(np.uint8).tobytes())
        meta = dict(self.meta)
        meta["nx"] = nx
        meta["h"] = float(self.X[1] - self.X[0])
        with open(basename.with_suffix(".meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
        np.savez(basename.with_suffix(".aux.npz"),
                 cross_node=self.cross_node, cross_level=self.cross_level,
                 cross_time=self.cross_time, cross_value=self.cross_value,
                 mask_time=self.mask_time)

    @classmethod
    def load(cls, basename):
        basename = Path(basename)
        with open(basename.with_suffix(".meta.json")) as fh:
            meta = json.load(fh)
        nx = meta["nx"]
        rec = 8 + 8 * nx + 8 * nx + nx
        raw = Path(basename.with_suffix(".bin")).read_bytes()
        nt = len(raw) // rec
        times = np.empty(nt)
        U = np.empty((nt, nx))
        V = np.empty((nt, nx))
        alive = np.empty((nt, nx), dtype=bool)
        for i in range(nt):
            off = i * rec
            times[i] = struct.unpack_from("<d", raw, off)[0]
            U[i] = np.frombuffer(raw, "<f8", nx, off + 8)
            V[i] = np.frombuffer(raw, "<f8", nx, off + 8 + 8 * nx)
            alive[i] = np.frombuffer(raw, np.uint8, nx, off + 8 + 16 * nx).astype(bool)
        aux = np.load(basename.with_suffix(".aux.npz"))
        h = meta["h"]
        return cls(X=h * np.arange(nx), times=times, U=U, V=V, alive=alive,
                   cross_node=aux["cross_node"], cross_level=aux["cross_level"],
                   cross_time=aux["cross_time"], cross_value=aux["cross_value"],
                   mask_time=aux["mask_time"], meta=meta)


def _blowup_gap_estimate(model, U, V, alive, racing):
    """Crude estimate of min (T - t) over threatened nodes, used only to
    control dt and the trace storage cadence.

    The amplitude proxy (kappa0/|U|)^((p-1)/2) applies to every alive node;
    the velocity proxy 2U/((p-1)V) is the exact ODE relation near blow-up and
    is trusted only on racing nodes (elsewhere a passing wave fakes it)."""
    p = model.p
    k0 = kappa0(p)
    if not np.any(alive):
        return np.inf
    u = np.abs(U[alive])
    gap = float(np.min((k0 / np.maximum(u, 1e-300)) ** ((p - 1.0) / 2.0)))
    if np.any(racing):
        ur = np.abs(U[racing])
        vr = V[racing]
        ok = vr * U[racing] > 0
        if np.any(ok):
            gap = min(gap, float(np.min(
                2.0 * ur[ok] / ((p - 1.0) * np.abs(vr[ok])))))
    return gap


def simulate(model: CoefficientModel, params: SolverParams, U0, V0,
             stream_path=None) -> Trace:
    """Run to t_max or until every node in stop_window is masked or frozen.

    Snapshots are stored on a cadence proportional to the estimated time to
    the nearest blow-up, so the trace resolves the (T-t) ramp without keeping
    every step of a threshold race.
    """
    state = make_initial_state(model, params, U0, V0)
    n = state.X.shape[0]
    thresholds = params.thresholds()
    next_thr = np.zeros(n, dtype=np.int64)
    mask_time = np.full(n, np.inf)
    freeze_deadline = np.full(n, np.inf)

    cross_node, cross_level, cross_time, cross_value = [], [], [], []
    snap_t, snap_U, snap_V, snap_alive = [], [], [], []

    stream = open(Path(stream_path).with_suffix(".bin"), "wb") if stream_path else None

    def store(st):
        snap_t.append(st.t)
        snap_U.append(st.U.copy())
        snap_V.append(st.V.copy())
        snap_alive.append(st.alive.copy())
        if stream is not None:
            stream.write(struct.pack("<d", st.t))
            stream.write(st.U.astype("<f8").tobytes())
            stream.write(st.V.astype("<f8").tobytes())
            stream.write(st.alive.astype(np.uint8).tobytes())

    store(state)
    base_dt = params.cfl * params.h
    max_store_dt = 50.0 * base_dt
    next_store = 0.0

    if params.stop_window is not None:
        lo, hi = params.stop_window
        window = (state.X >= lo) & (state.X <= hi)
    else:
        window = None
    focus_idx = None
    if params.focus_X is not None:
        focus_idx = np.unique(np.clip(
            np.round(np.asarray(params.focus_X) / params.h).astype(int), 0, n - 1))

    while state.t < params.t_max:
        racing = state.alive & (next_thr > 0)
        gap = _blowup_gap_estimate(model, state.U, state.V, state.alive, racing)
        dt = min(base_dt, max(params.near_dt_frac * gap, 1e-14),
                 params.t_max - state.t)
        prev_alive = state.alive
        state = step(state, model, dt, params)

        # newly masked nodes: record and propagate the unit-speed freeze cone
        newly = prev_alive & ~state.alive
        if np.any(newly):
            for j in np.where(newly)[0]:
                mask_time[j] = state.t
                freeze_deadline = np.minimum(
                    freeze_deadline, state.t + np.abs(state.X - state.X[j]))
        frozen = state.alive & (state.t >= freeze_deadline)
        if np.any(frozen):
            state.alive = state.alive & ~frozen
            state.accel = None
            mask_time[frozen] = state.t

        # threshold ladder crossings
        while True:
            can = state.alive & (next_thr < thresholds.shape[0])
            hit = can & (np.abs(state.U) >= thresholds[np.minimum(next_thr, thresholds.shape[0] - 1)])
            if not np.any(hit):
                break
            for j in np.where(hit)[0]:
                cross_node.append(j)
                cross_level.append(int(next_thr[j]))
                cross_time.append(state.t)
                cross_value.append(abs(float(state.U[j])))
            next_thr[hit] += 1

        # store on the adaptive cadence; with focus vertices the cadence
        # follows their estimated time-to-blow-up instead of the global front
        if focus_idx is None:
            store_scale = gap
        else:
            store_scale = np.inf
            for j in focus_idx:
                if not state.alive[j]:
                    continue
                gj = _blowup_gap_estimate(
                    model, state.U[j:j + 1], state.V[j:j + 1],
                    np.ones(1, dtype=bool),
                    np.array([next_thr[j] > 0]))
                # a front arriving from elsewhere can blow the vertex before
                # its own amplitude ramps; the unit-cone deadline bounds that
                gj = min(gj, max(freeze_deadline[j] - state.t, 2.0 * params.h))
                store_scale = min(store_scale, gj)
            if not np.isfinite(store_scale):
                store_scale = gap
        store_gap = min(max(params.store_frac * max(store_scale, 2.0 * params.h),
                            1e-14), max_store_dt)
        if state.t >= next_store:
            store(state)
            next_store = state.t + store_gap

        if not np.any(state.alive):
            break
        if window is not None and not np.any(state.alive & window):
            break

    if snap_t[-1] != state.t:
        store(state)
    if stream is not None:
        stream.close()

    meta = {
        "p": model.p, "d": model.d, "N": model.N, "q": model.q, "M": model.M,
        "family": model.family, "alpha": model.alpha, "a0": model.a0,
        "h": params.h, "X_max": params.X_max, "cfl": params.cfl,
        "t_end": state.t, "guard": params.guard,
        "threshold_base": params.threshold_base,
        "threshold_factor": params.threshold_factor,
        "near_dt_frac": params.near_dt_frac, "store_frac": params.store_frac,
    }
    return Trace(
        X=state.X, times=np.array(snap_t), U=np.array(snap_U),
        V=np.array(snap_V), alive=np.array(snap_alive),
        cross_node=np.array(cross_node, dtype=np.int64),
        cross_level=np.array(cross_level, dtype=np.int64),
        cross_time=np.array(cross_time), cross_value=np.array(cross_value),
        mask_time=mask_time, meta=meta)


# -- blow-up time estimation --------------------------------------------------


def fit_blowup_time(times, values, p, fit_count=3):
    """Estimate T from threshold crossings of one node.

    Minimizes over T the spread of log|U_k| + 2/(p-1) log(T - t_k), i.e. a
    least-squares fit of log|U| against log(T - t) with slope -2/(p-1).
    Returns (T, residual); (+inf, nan) when fewer than 3 crossings exist.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape[0] >= 2:
        # one step can cross several thresholds; keep the deepest value per time
        keep = np.concatenate([times[1:] != times[:-1], [True]])
        times, values = times[keep], values[keep]
    if times.shape[0] < 3:
        return np.inf, np.nan
    m = min(fit_count, times.shape[0]) if fit_count else times.shape[0]
    m = max(m, 3)
    t = times[-m:]
    u = values[-m:]
    slope = 2.0 / (p - 1.0)

    # two-point closed form seeds the bracket
    r = (u[-1] / u[-2]) ** (1.0 / slope)
    if r <= 1.0:
        return np.inf, np.nan
    T2 = (r * t[-1] - t[-2]) / (r - 1.0)
    delta0 = max(T2 - t[-1], 1e-300)

    def spread(logdelta):
        T = t[-1] + np.exp(logdelta)
        z = np.log(u) + slope * np.log(T - t)
        return float(np.var(z))

    lo, hi = np.log(delta0) - np.log(100.0), np.log(delta0) + np.log(100.0)
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - gr * (b - a)
    c2 = a + gr * (b - a)
    f1, f2 = spread(c1), spread(c2)
    for _ in range(200):
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - gr * (b - a)
            f1 = spread(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + gr * (b - a)
            f2 = spread(c2)
        if b - a < 1e-14:
            break
    logd = 0.5 * (a + b)
    return t[-1] + float(np.exp(logd)), float(np.sqrt(spread(logd)))


def detect_blowup_time(times, values, p, thresholds=None, fit_count=3):
    """Blow-up time from a full |U| time series and a threshold ladder.

    Extracts the first crossing of each threshold from the series, then
    delegates to fit_blowup_time.  Series that never cross at least three
    thresholds return +inf.
    """
    times = np.asarray(times, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if thresholds is None:
        thresholds = default_thresholds()
    ct, cv = [], []
    k = 0
    for i in range(times.shape[0]):
        if k < len(thresholds) and values[i] >= thresholds[k]:
            ct.append(times[i])
            cv.append(values[i])
            while k < len(thresholds) and values[i] >= thresholds[k]:
                k += 1
    return fit_blowup_time(np.array(ct), np.array(cv), p, fit_count=fit_count)


@dataclass(frozen=True)
class PointClass:
    kind: str                  # non_characteristic | characteristic | undetermined
    delta: Optional[float] = None

    def __str__(self):
        if self.kind == "non_characteristic":
            return f"non_characteristic(delta={self.delta:.4g})"
        return self.kind


@dataclass
class BlowupCurve:
    """Sampled blow-up times T_U(X) with slopes and point classification."""

    X: np.ndarray
    T: np.ndarray
    T_prime: np.ndarray
    residual: np.ndarray
    classification: list
    delta: np.ndarray

    def interp_T(self, X0):
        return float(np.interp(X0, self.X, self.T))

    def interp_T_prime(self, X0):
        return float(np.interp(X0, self.X, self.T_prime))

    def to_rows(self):
        for i in range(self.X.shape[0]):
            c = self.classification[i]
            yield (self.X[i], self.T[i], self.T_prime[i], c.kind,
                   c.delta if c.delta is not None else np.nan)


def classify_point(curve, X0, neighborhood=0.1, delta_min=0.01,
                   char_tol=0.05, min_samples=8) -> PointClass:
    """Cone classification of the blow-up curve at X0.

    `curve` is a BlowupCurve or an (X, T) pair of arrays.  delta is the
    steepest downward slope (T(X0) - T(X))/|X - X0| over the neighborhood,
    i.e. the smallest cone aperture verified on the grid.  A point is
    characteristic when the inner sampled |slope| reaches 1 within char_tol
    on at least one side.
    """
    if isinstance(curve, BlowupCurve):
        X, T = curve.X, curve.T
    else:
        X, T = curve
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    good = np.isfinite(T)
    sel = good & (np.abs(X - X0) <= neighborhood) & (np.abs(X - X0) > 0)
    if np.count_nonzero(sel) < min_samples:
        raise InsufficientResolutionError(
            f"only {np.count_nonzero(sel)} curve samples within "
            f"{neighborhood:g} of X0={X0:g}")
    T0 = float(np.interp(X0, X[good], T[good]))
    dX = X[sel] - X0
    slopes = (T[sel] - T0) / dX

    char = False
    for side in (dX > 0, dX < 0):
        if np.count_nonzero(side) >= 2:
            order = np.argsort(np.abs(dX[side]))
            inner = np.abs(slopes[side][order][:3])
            if np.median(inner) >= 1.0 - char_tol:
                char = True
    if char:
        return PointClass("characteristic")

    delta_star = float(np.max((T0 - T[sel]) / np.abs(dX)))
    if delta_star <= 1.0 - char_tol:
        return PointClass("non_characteristic", max(delta_star, delta_min))
    return PointClass("undetermined")


def blowup_curve(trace: Trace, window=None, fit_count=3, neighborhood=0.1,
                 delta_min=0.01, char_tol=0.05) -> BlowupCurve:
    """Assemble the blow-up curve from a trace's crossing records."""
    p = trace.meta["p"]
    X = trace.X
    n = X.shape[0]
    T = np.full(n, np.inf)
    res = np.full(n, np.nan)
    for j in range(n):
        ts, us = trace.crossings_for(j)
        T[j], res[j] = fit_blowup_time(ts, us, p, fit_count=fit_count)
    if window is not None:
        keep = (X >= window[0]) & (X <= window[1])
    else:
        keep = np.ones(n, dtype=bool)
    keep &= np.isfinite(T)
    Xc, Tc, rc = X[keep], T[keep], res[keep]

    Tp = np.gradient(Tc, Xc) if Xc.shape[0] >= 2 else np.zeros_like(Tc)
    cls = []
    delta = np.full(Xc.shape[0], np.nan)
    for i in range(Xc.shape[0]):
        try:
            c = classify_point((Xc, Tc), Xc[i], neighborhood=neighborhood,
                               delta_min=delta_min, char_tol=char_tol)
        except InsufficientResolutionError:
            c = PointClass("undetermined")
        cls.append(c)
        if c.delta is not None:
            delta[i] = c.delta
    return BlowupCurve(X=Xc, T=Tc, T_prime=Tp, residual=rc,
                       classification=cls, delta=delta)
