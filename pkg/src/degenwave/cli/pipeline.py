"""Stage pipeline: solve -> curve -> frames -> energy -> fits, with caching.

Each stage declares a signature (hash of the config sections it depends on
plus its input files); a stage is skipped when the existing manifest carries
the same signature and all recorded outputs still checksum-match.  Stage
outputs are CSV/JSON with fixed 17-significant-digit float formatting so
identical configs reproduce byte-identical files.  Wall-clock times live only
in the manifest and never inside data outputs.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .. import energy as energy_mod
from .. import normspaces
from .. import profiles as profiles_mod
from .. import soliton_dynamics as solitons_mod
from ..similarity import frame_ladder
from ..solver import Trace, blowup_curve, simulate
from .config import RunConfig

__all__ = ["StageFailure", "PipelineRunner", "run_pipeline", "STAGE_ORDER",
           "fmt", "write_csv", "emit_plot_data"]

STAGE_ORDER = ["simulate", "curve", "frames", "energy", "profile-fit",
               "solitons", "normcheck", "report"]

STAGE_DEPS = {
    "simulate": [],
    "curve": ["simulate"],
    "frames": ["simulate", "curve"],
    "energy": ["frames"],
    "profile-fit": ["frames", "curve"],
    "solitons": [],
    "normcheck": [],
    "report": ["curve", "energy", "profile-fit", "solitons", "normcheck"],
}


class StageFailure(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def fmt(x) -> str:
    """Fixed 17-significant-digit formatting for reproducible CSV output."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_json(path, obj):
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _x0_tag(x0: float) -> str:
    return f"{x0:g}".replace("-", "m")


class PipelineRunner:
    """Executes stages in dependency order against one output directory."""

    def __init__(self, config: RunConfig, out_dir=None, jobs: int = 1):
        self.config = config
        self.out = Path(out_dir) if out_dir is not None else config.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.jobs = max(int(jobs), 1)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()
        self._trace: Optional[Trace] = None
        self._curve = None
        self._ladders = {}

    # -- manifest -------------------------------------------------------------

    def _load_manifest(self):
        if self.manifest_path.exists():
            try:
                with open(self.manifest_path) as fh:
                    return json.load(fh)
            except (json.JSONDecodeError, OSError):
                pass
        return {"config_hash": self.config.config_hash(), "stages": {}}

    def _save_manifest(self):
        self.manifest["config_hash"] = self.config.config_hash()
        write_json(self.manifest_path, self.manifest)

    def _cached(self, stage, signature) -> bool:
        rec = self.manifest["stages"].get(stage)
        if not rec or rec.get("status") not in ("ok", "cached") \
                or rec.get("signature") != signature:
            return False
        for out in rec.get("outputs", []):
            p = self.out / out["path"]
            if not p.exists() or sha256_file(p) != out["sha256"]:
                return False
        return True

    def _record(self, stage, signature, outputs, seconds, status="ok", error=None):
        rec = {
            "status": status, "signature": signature, "seconds": round(seconds, 3),
            "outputs": [{"path": str(Path(p).relative_to(self.out)),
                         "sha256": sha256_file(p)} for p in outputs],
        }
        if error:
            rec["error"] = error
        self.manifest["stages"][stage] = rec
        self._save_manifest()

    # -- signatures -----------------------------------------------------------

    def _signature(self, stage) -> str:
        cfg = self.config
        base = {
            "simulate": cfg.section_hash("coefficients", "initial_data", "grid", "solver"),
            "curve": cfg.section_hash("coefficients", "initial_data", "grid", "solver", "analysis"),
            "frames": cfg.section_hash("coefficients", "initial_data", "grid", "solver", "analysis"),
            "energy": cfg.section_hash("coefficients", "initial_data", "grid", "solver", "analysis"),
            "profile-fit": cfg.section_hash("coefficients", "initial_data", "grid", "solver", "analysis"),
            "solitons": cfg.section_hash("solitons"),
            "normcheck": cfg.section_hash("normcheck"),
            "report": cfg.config_hash(),
        }[stage]
        dep_sigs = [self.manifest["stages"].get(d, {}).get("signature", "")
                    for d in STAGE_DEPS[stage]]
        return hashlib.sha256((base + "|" + "|".join(dep_sigs)).encode()).hexdigest()

    # -- stage bodies ----------------------------------------------------------

    def run(self, target: str = "report", force: Optional[str] = None):
        """Run target and its prerequisites; returns the manifest dict."""
        if target not in STAGE_ORDER:
            raise ValueError(f"unknown stage {target!r}")
        chain = self._chain(target)
        for stage in chain:
            sig = self._signature(stage)
            if stage != force and self._cached(stage, sig):
                self.manifest["stages"][stage]["status"] = "cached"
                self._save_manifest()
                continue
            t0 = time.perf_counter()
            try:
                outputs = getattr(self, "_stage_" + stage.replace("-", "_"))()
            except Exception as err:  # record, then surface
                self._record(stage, sig, [], time.perf_counter() - t0,
                             status="failed", error=str(err))
                raise StageFailure(stage, str(err)) from err
            self._record(stage, sig, outputs, time.perf_counter() - t0)
        return self.manifest

    def _chain(self, target):
        seen = []

        def visit(stage):
            for dep in STAGE_DEPS[stage]:
                visit(dep)
            if stage not in seen:
                seen.append(stage)

        visit(target)
        return seen

    # simulate ---------------------------------------------------------------

    def _stage_simulate(self):
        cfg = self.config
        model = cfg.model()
        params = cfg.solver_params()
        X = params.h * np.arange(int(round(params.X_max / params.h)) + 1)
        U0, V0 = cfg.initial_data(X)
        trace = simulate(model, params, U0, V0)
        base = self.out / "trace"
        trace.save(base)
        self._trace = trace
        return [base.with_suffix(".bin"), base.with_suffix(".meta.json"),
                base.with_suffix(".aux.npz")]

    def trace(self) -> Trace:
        if self._trace is None:
            self._trace = Trace.load(self.out / "trace")
        return self._trace

    # curve ------------------------------------------------------------------

    def _stage_curve(self):
        cfg = self.config
        curve = blowup_curve(
            self.trace(), window=cfg.curve_window(),
            fit_count=int(cfg.raw["analysis"]["fit_crossings"]),
            neighborhood=float(cfg.raw["analysis"]["neighborhood"]))
        self._curve = curve
        path = write_csv(self.out / "curve.csv",
                         ["X", "T", "T_prime", "class", "delta"],
                         curve.to_rows())
        return [path]

    def curve(self):
        if self._curve is None:
            self._curve = _read_curve_csv(self.out / "curve.csv")
        return self._curve

    # frames -----------------------------------------------------------------

    def _ladder(self, x0):
        if x0 not in self._ladders:
            cfg = self.config
            model = cfg.model()
            X0 = model.phi(x0)
            curve = self.curve()
            T0 = curve.interp_T(X0)
            if not np.isfinite(T0):
                raise StageFailure("frames", f"no blow-up time at x0={x0:g}")
            a = cfg.raw["analysis"]
            self._ladders[x0] = frame_ladder(
                self.trace(), model, x0, T0,
                n_y=int(a["n_y"]), ds=float(a["ds"]),
                s_margin=float(a["s_margin"]),
                resolve_factor=float(a["resolve_factor"]))
        return self._ladders[x0]

    def _build_ladders(self):
        """Build all per-x0 ladders, fanning out to a worker pool if jobs > 1.

        Workers share the read-only trace via fork; results come back in
        x0-list order so outputs stay deterministic."""
        todo = [x0 for x0 in self.config.x0_list if x0 not in self._ladders]
        if not todo:
            return
        if self.jobs > 1 and len(todo) > 1:
            import multiprocessing as mp

            self.trace()
            self.curve()
            with mp.get_context("fork").Pool(min(self.jobs, len(todo))) as pool:
                results = pool.map(self._ladder_worker, todo)
            for x0, ladder in zip(todo, results):
                self._ladders[x0] = ladder
        else:
            for x0 in todo:
                self._ladder(x0)

    def _ladder_worker(self, x0):
        return self._ladder(x0)

    def _stage_frames(self):
        outputs = []
        manifest = {}
        self._build_ladders()
        for x0 in self.config.x0_list:
            ladder = self._ladder(x0)
            tag = _x0_tag(x0)
            rows = []
            for f in ladder.frames:
                for i in range(f.y.shape[0]):
                    rows.append((f.s, f.y[i], f.w[i], f.w_s[i], f.w_y[i]))
            outputs.append(write_csv(self.out / f"frames_{tag}.csv",
                                     ["s", "y", "w", "w_s", "w_y"], rows))
            manifest[tag] = {
                "x0": x0, "X0": ladder.X0, "T0": ladder.T0,
                "s_min": ladder.s_min, "s_max": ladder.s_max,
                "ds": ladder.ds, "n_frames": len(ladder.frames),
                "limit": ladder.limit,
            }
        outputs.append(write_json(self.out / "frames_manifest.json", manifest))
        return outputs

    # energy -----------------------------------------------------------------

    def _stage_energy(self):
        cfg = self.config
        model = cfg.model()
        a = cfg.raw["analysis"]
        mu = float(a["mu"])
        nq = int(a["quad_nodes"])
        burn = float(a["burn_in_fraction"])
        outputs = []
        summary = {}
        for x0 in cfg.x0_list:
            ladder = self._ladder(x0)
            tag = _x0_tag(x0)
            if ladder.X0 == 0.0:
                rows = []
                E00s = []
                for f in ladder.frames:
                    E00, slope = energy_mod.origin_energy(f, model, n=nq)
                    E00s.append(E00)
                    rows.append((f.s, E00, slope))
                outputs.append(write_csv(self.out / f"energy_origin_{tag}.csv",
                                         ["s", "E00", "slope_pred"], rows))
                summary[tag] = {"x0": x0, "origin": True,
                                "E00_first": E00s[0], "E00_last": E00s[-1]}
                continue
            reports = energy_mod.energy_series(ladder.frames, model, mu=mu, n=nq)
            res1, res2 = energy_mod.dissipation_identity_check(
                reports, ladder.frames, model, n=nq)
            s_burn = _burn_in_s(ladder, burn)
            nviol, worst = energy_mod.lyapunov_violations(reports, s_burn)
            rows = [(r.s, r.E0, r.I, r.J, r.K, r.E, r.H, r.dissipation,
                     r.res1, r.res2) for r in reports]
            outputs.append(write_csv(
                self.out / f"energy_{tag}.csv",
                ["s", "E0", "I", "J", "K", "E", "H", "dissipation",
                 "res1", "res2"], rows))
            summary[tag] = {
                "x0": x0, "origin": False, "mu": mu, "s_burn": s_burn,
                "res1_max": res1, "res2_max": res2,
                "lyapunov_violations": nviol, "worst_violation": worst,
                "H_first": reports[0].H, "H_last": reports[-1].H,
            }
        outputs.append(write_json(self.out / "energy_summary.json", summary))
        return outputs

    # profile fits -------------------------------------------------------------

    def _stage_profile_fit(self):
        cfg = self.config
        model = cfg.model()
        nq = int(cfg.raw["analysis"]["quad_nodes"])
        curve = self.curve()
        outputs = []
        result = {}
        char_fits = {}
        for x0 in cfg.x0_list:
            ladder = self._ladder(x0)
            tag = _x0_tag(x0)
            if ladder.X0 == 0.0:
                continue
            kind = _curve_class_at(curve, ladder.X0)
            if kind == "characteristic":
                # opportunistic expansion fit at points the curve flags
                try:
                    cf = profiles_mod.characteristic_expansion_fit(curve, model, x0)
                    char_fits[tag] = {"x0": x0, "k": cf.k, "xi0": cf.xi0,
                                      "nu": cf.nu, "residual": cf.residual,
                                      "rejected": cf.rejected}
                except profiles_mod.InsufficientRangeError as err:
                    char_fits[tag] = {"x0": x0, "error": str(err)}
                continue
            fit = profiles_mod.fit_profile(ladder.frames, model, n=nq)
            series = write_csv(self.out / f"profile_distance_{tag}.csv",
                               ["s", "distance"],
                               zip(fit.s_series, fit.distance_series))
            outputs.append(series)
            T_prime = curve.interp_T_prime(ladder.X0)
            E_fit = _soliton_energy(fit, model, nq)
            result[tag] = {
                "x0": x0, "theta": fit.theta, "d_hat": fit.d_hat_star,
                "mu0": fit.rate, "distance": fit.distance,
                "s_star": fit.s_star, "converged": fit.converged,
                "T_U_prime": T_prime,
                "d_hat_vs_T_prime": abs(fit.d_hat_star - T_prime),
                "E_at_fit": E_fit,
                "distance_series_file": series.name,
            }
        outputs.append(write_json(self.out / "profile_fit.json", result))
        outputs.append(write_json(self.out / "characteristic_fits.json", char_fits))
        return outputs

    # solitons ------------------------------------------------------------------

    def _stage_solitons(self):
        cfg = self.config
        sec = cfg.raw["solitons"]
        p = float(sec["p"])
        c1 = float(sec["c1"])
        s0 = float(sec["s_start"])
        s1 = float(sec["s_end"])
        tol = float(sec["tol"])
        outputs = []
        summary = {}
        for k_str in sec["k_list"].split():
            k = int(k_str)
            s_grid = np.geomspace(s0, s1, 120)
            xi_ansatz = solitons_mod.explicit_ansatz(k, p, c1, s_grid)
            rows = [(s_grid[i], *xi_ansatz[i]) for i in range(s_grid.shape[0])]
            outputs.append(write_csv(
                self.out / f"solitons_k{k}.csv",
                ["s"] + [f"xi{i+1}" for i in range(k)], rows))

            state = solitons_mod.SolitonState(
                xi=solitons_mod.explicit_ansatz(k, p, c1, s0), s=s0, c1=c1, p=p)
            series = solitons_mod.integrate(state, s1, tol=tol, n_samples=120)
            gap_rows = []
            for st in series:
                gap_obs = float(np.min(np.diff(st.xi)))
                gap_ans = float(np.min(np.diff(
                    solitons_mod.explicit_ansatz(k, p, c1, st.s))))
                gap_rows.append((st.s, gap_obs, gap_ans))
            outputs.append(write_csv(self.out / f"soliton_gaps_k{k}.csv",
                                     ["s", "gap_observed", "gap_ansatz"],
                                     gap_rows))
            res = _ansatz_residual(k, p, c1, s_grid)
            summary[f"k{k}"] = {"k": k, "p": p, "c1": c1,
                                "max_residual_times_s": res,
                                "gap_final_observed": gap_rows[-1][1],
                                "gap_final_ansatz": gap_rows[-1][2]}
        outputs.append(write_json(self.out / "solitons_summary.json", summary))
        return outputs

    # normcheck -------------------------------------------------------------------

    def _stage_normcheck(self):
        sec = self.config.raw["normcheck"]
        R = float(sec["R"])
        h = float(sec["h"])
        outputs = []
        result = {}
        for d_str in sec["dims"].split():
            d = int(d_str)
            family = stress_family(d, R=R, h=h)
            rep = normspaces.equivalence_check(family, d)
            result[f"d{d}"] = {
                "d": d, "family_size": rep.family_size,
                "ratio_min": rep.ratio_min, "ratio_max": rep.ratio_max,
                "spread": rep.spread,
                "witness_functions": [rep.witness_min, rep.witness_max],
            }
        outputs.append(write_json(self.out / "normcheck.json", result))
        return outputs

    # report ----------------------------------------------------------------------

    def _stage_report(self):
        from .report import render_report
        return render_report(self)


def _curve_class_at(curve, X0):
    if curve.X.shape[0] == 0:
        return "undetermined"
    i = int(np.argmin(np.abs(curve.X - X0)))
    return curve.classification[i].kind


def _burn_in_s(ladder, burn_fraction):
    s_burn = ladder.s_min + burn_fraction * (ladder.s_max - ladder.s_min)
    X0 = ladder.X0
    if 0.0 < X0:
        s_burn = max(s_burn,
                     -4.0 * math.log(X0) if X0 < 1.0 else -math.inf,
                     -math.log(X0 / 2.0),
                     -math.log(ladder.T0))
    return float(s_burn)


def _soliton_energy(fit, model, nq):
    """E0 evaluated at the fitted soliton (w = theta kappa_beta, w_s = 0)."""
    from ..similarity import SimilarityFrame

    p = fit.p
    y = np.linspace(-1.0 + 1e-5, 1.0 - 1e-5, 512)
    w = fit.theta * fit.beta_scale * profiles_mod.kappa(fit.d_hat_star, y, p)
    wy = fit.theta * fit.beta_scale * profiles_mod.kappa_prime(fit.d_hat_star, y, p)
    frame = SimilarityFrame(x0=fit.x0, X0=fit.X0, T0=fit.T0, s=fit.s_star,
                            y=y, w=w, w_s=np.zeros_like(y), w_y=wy, p=p, d=1)
    return energy_mod.E0_functional(frame, float(model.beta(fit.X0)), n=nq)


def _ansatz_residual(k, p, c1, s_grid):
    worst = 0.0
    for s in s_grid:
        xi = solitons_mod.explicit_ansatz(k, p, c1, float(s))
        i = np.arange(1, k + 1)
        xidot = (i - (k + 1) / 2.0) * (p - 1.0) / (2.0 * float(s))
        rhs = solitons_mod.ode_rhs(solitons_mod.SolitonState(
            xi=xi, s=float(s), c1=c1, p=p))
        worst = max(worst, float(np.max(np.abs(xidot - rhs))) * float(s))
    return worst


def _read_curve_csv(path):
    from ..solver import BlowupCurve, PointClass

    data = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            X, T, Tp, cls, delta = line.rstrip("\n").split(",")
            data.append((float(X), float(T), float(Tp), cls, float(delta)))
    X = np.array([r[0] for r in data])
    T = np.array([r[1] for r in data])
    Tp = np.array([r[2] for r in data])
    cls = [PointClass(r[3], None if math.isnan(r[4]) else r[4]) for r in data]
    delta = np.array([r[4] for r in data])
    return BlowupCurve(X=X, T=T, T_prime=Tp, residual=np.full_like(X, np.nan),
                       classification=cls, delta=delta)


def stress_family(d, R=24.0, h=0.01, n_target=50):
    """Deterministic 50-function stress family: bumps at radii 1..20, widths
    0.2/0.5/1.0 cycled, oscillatory decaying tails, Gaussians, constants."""
    from ..normspaces import RadialFunction

    fns = []
    widths = [0.2, 0.5, 1.0]
    for i, rc in enumerate(range(1, 21)):
        w = widths[i % 3]
        fns.append(lambda r, rc=rc, w=w: np.exp(-(((r - rc) / w) ** 2)))
    for om in (1.0, 3.0, 7.0):
        for lam in (3.0, 8.0):
            fns.append(lambda r, om=om, lam=lam:
                       np.sin(om * r) * np.exp(-r / lam))
    for sig in (0.5, 1.0, 2.0, 4.0, 8.0):
        fns.append(lambda r, sig=sig: np.exp(-((r / sig) ** 2)))
    fns.append(lambda r: np.ones_like(r))
    fns.append(lambda r: 1.0 / (1.0 + r**2))
    fns.append(lambda r: np.where(r <= 1.0, 1.0, 0.0) * (1.0 + 0.0 * r))
    k = 0
    while len(fns) < n_target:
        rc = 1.5 + 0.8 * k
        fns.append(lambda r, rc=rc: np.exp(-((r - rc) ** 2)) + 0.1 * np.exp(-r))
        k += 1
    return [RadialFunction.from_callable(fn, d, R=R, h=h) for fn in fns[:n_target]]


def emit_plot_data(runner: PipelineRunner, kind: str):
    """Two-column plot-data files (header + columns) per analysis kind."""
    out = runner.out
    paths = []
    if kind == "energy":
        for x0 in runner.config.x0_list:
            tag = _x0_tag(x0)
            src = out / f"energy_{tag}.csv"
            if not src.exists():
                continue
            s, H = _csv_columns(src, "s", "H")
            paths.append(write_csv(out / f"plot_energy_{tag}.dat",
                                   ["s", "H"], zip(s, H)))
    elif kind == "curve":
        src = out / "curve.csv"
        if not src.exists():
            raise StageFailure("report", "curve stage has not produced curve.csv")
        X, T = _csv_columns(src, "X", "T")
        paths.append(write_csv(out / "plot_curve.dat", ["X", "T"], zip(X, T)))
    elif kind == "profile":
        for x0 in runner.config.x0_list:
            tag = _x0_tag(x0)
            src = out / f"profile_distance_{tag}.csv"
            if not src.exists():
                continue
            s, dist = _csv_columns(src, "s", "distance")
            paths.append(write_csv(out / f"plot_profile_{tag}.dat",
                                   ["s", "distance"], zip(s, dist)))
    elif kind == "solitons":
        for k_str in runner.config.raw["solitons"]["k_list"].split():
            src = out / f"soliton_gaps_k{k_str}.csv"
            if not src.exists():
                continue
            s, gap = _csv_columns(src, "s", "gap_observed")
            paths.append(write_csv(out / f"plot_solitons_k{k_str}.dat",
                                   ["s", "gap"], zip(s, gap)))
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    if not paths:
        raise StageFailure("report", f"no inputs available for plot kind {kind!r}")
    return paths


def _csv_columns(path, *names):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        idx = [header.index(n) for n in names]
        cols = [[] for _ in names]
        for line in fh:
            parts = line.rstrip("\n").split(",")
            for j, i in enumerate(idx):
                cols[j].append(float(parts[i]))
    return [np.array(c) for c in cols]


def run_pipeline(config: RunConfig, out_dir=None, jobs: int = 1,
                 target: str = "report", force: Optional[str] = None):
    runner = PipelineRunner(config, out_dir=out_dir, jobs=jobs)
    return runner.run(target=target, force=force)
