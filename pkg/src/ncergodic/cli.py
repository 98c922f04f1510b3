"""Reproducible experiment runner.

``ncergodic <experiment> [flags]`` runs one experiment over a seed range and
writes CSV/JSON tables plus a ``manifest.json`` into ``--out``.
``ncergodic report --out DIR`` aggregates a finished run.  Exit codes: 0 when
every verdict passes, 2 when some verdict fails (or a seed crashed), 1 on an
execution error.

Every default below is a choice of this tool: the single ``4 x 4`` block with
the unnormalized trace, ``alpha = 0.5``, ``p`` in ``{1.5, 2, 3}``,
``N_max = 10^5`` and 50 seeds.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Sequence

import numpy as np

from . import averages, concentration, maximal
from .algebra import AlgebraSpec, Element, Tolerance, p_norm
from .operators import DSOperator
from .sampling import geometric_grid, sample_path, slln_trajectory
from .suites import convergence_case

log = logging.getLogger("ncergodic")

EXPERIMENTS = ("sample", "converge", "bau", "gamma", "tails", "decay", "interp", "identities")

# acceptance thresholds
DECREASE_FACTOR = 5.0
EARLY_INDEX = 100
PASS_FRACTION = 0.9
BAU_SUP_FRACTION = 0.1
EQUIVALENCE_TOL = 1e-12
ABEL_TOL = 1e-10
DECOMPOSITION_TOL = 1e-12
INTERP_SLACK = 1e-2
IDENTITY_N_MAX = 10_000
DENSE_FACTOR = 16


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything that determines the outputs of a run.

    ``operator`` is an operator-grammar dictionary applied to every seed; when
    it is ``None`` each seed draws its own equal mixture of ``n_terms`` Haar
    unitary conjugations.  ``ngrid`` defaults per experiment: ``2^8, 2^10,
    2^12`` for ``gamma`` and ``tails``, ``2^8, ..., 2^16`` for ``decay`` and
    ``4096`` for ``interp``.
    """

    experiment: str = "converge"
    algebra: dict = field(default_factory=lambda: {"blocks": [{"dim": 4, "weight": 1.0}]})
    operator: dict | None = None
    n_terms: int = 2
    alpha: list = field(default_factory=lambda: [0.5])
    p: list = field(default_factory=lambda: [1.5, 2.0, 3.0])
    n_max: int = 100_000
    ratio: float = 10.0
    seed_start: int = 0
    seed_count: int = 50
    trials: int = 1000
    ngrid: list | None = None
    deltas: list = field(default_factory=lambda: [0.2, 0.5, 1.0])
    eps: float = 0.05
    eq_tol: float = 1e-10
    psd_tol: float = 1e-9
    out: str = "runs"
    workers: int = 1

    # fields that do not change any output
    _UNHASHED = ("out", "workers")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        self.alpha = [float(a) for a in np.atleast_1d(self.alpha)]
        if not self.alpha or any(not 0.0 < a < 1.0 for a in self.alpha):
            raise ConfigError("alpha values must lie in (0, 1)")
        self.p = [float(q) for q in np.atleast_1d(self.p)]
        if not self.p or any(not q >= 1.0 for q in self.p):
            raise ConfigError("p values must be >= 1")
        for name in ("n_max", "seed_count", "trials", "n_terms", "workers", "seed_start"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer")
            setattr(self, name, int(v))
        if self.n_max < 2:
            raise ConfigError("n_max must be >= 2")
        if self.seed_count < 1:
            raise ConfigError("the seed range is empty")
        if self.seed_start < 0 or self.seed_start + self.seed_count > 2**64:
            raise ConfigError("seeds must be 64-bit unsigned integers")
        if self.trials < 1 or self.n_terms < 1 or self.workers < 1:
            raise ConfigError("trials, n_terms and workers must be >= 1")
        if not self.ratio > 1.0:
            raise ConfigError("ratio must be > 1")
        if not self.eps > 0.0:
            raise ConfigError("eps must be > 0")
        if self.ngrid is not None:
            self.ngrid = sorted({int(n) for n in self.ngrid})
            if not self.ngrid or self.ngrid[0] < 2:
                raise ConfigError("ngrid entries must be >= 2")
        self.deltas = [float(d) for d in self.deltas]
        if any(not d > 0 for d in self.deltas):
            raise ConfigError("deltas must be > 0")
        try:
            self.tolerance()
            spec = self.spec()
            if self.operator is not None:
                DSOperator.from_dict(spec, self.operator, self.tolerance())
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid algebra or operator: {exc}") from exc

    # -- derived objects ---------------------------------------------------
    def spec(self) -> AlgebraSpec:
        return AlgebraSpec.from_dict(self.algebra)

    def tolerance(self) -> Tolerance:
        return Tolerance(self.eq_tol, self.psd_tol)

    @property
    def seeds(self) -> range:
        return range(self.seed_start, self.seed_start + self.seed_count)

    def grid(self) -> list[int]:
        if self.ngrid is not None:
            return list(self.ngrid)
        if self.experiment == "decay":
            return [2**k for k in range(8, 17)]
        if self.experiment == "interp":
            return [4096]
        return [256, 1024, 4096]

    def case(self, seed: int) -> tuple[DSOperator, Element]:
        spec = self.spec()
        if self.operator is None:
            return convergence_case(seed, spec, self.n_terms)
        T = DSOperator.from_dict(spec, self.operator, self.tolerance())
        return T, spec.random_element(np.random.default_rng(seed), "hermitian")

    def checkpoints(self, upper: int) -> list[int]:
        pts = set(int(v) for v in geometric_grid(upper, self.ratio))
        if upper > EARLY_INDEX:
            pts.add(EARLY_INDEX)
        return sorted(pts)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def config_hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    code_version: str
    files: list
    wall_clock: dict
    failures: list
    verdicts: dict
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures and all(v["passed"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"no manifest at {path}")
        return cls(**json.loads(path.read_text()))


def code_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError("refusing to write a non-finite value")
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def read_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _verdict(passed: bool, value, threshold) -> dict:
    return {"passed": bool(passed), "value": value, "threshold": threshold}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# per-job kernels (module level so a process pool can pickle them)


def _job_sample(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    path = sample_path(alpha, cfg.n_max, seed)
    return {"path": path, "slln": [(seed, alpha, int(n), r) for n, r in slln_trajectory(path, cfg.ratio)]}


def _job_converge(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    T, x = cfg.case(seed)
    path = sample_path(alpha, cfg.n_max, seed)
    cps = cfg.checkpoints(cfg.n_max)
    rnd = averages.random_average(T, x, path, cps, p=cfg.p)
    ms = sorted({path.count(N) for N in cps})
    hit = averages.hitting_average(T, x, path, ms, p=cfg.p)
    rows = [(seed, alpha) + r for r in rnd.rows()] + [(seed, alpha) + r for r in hit.rows()]
    early = EARLY_INDEX if cfg.n_max > EARLY_INDEX else cps[0]
    m_early, m_late = path.count(early), path.count(cfg.n_max)
    final = {}
    for q in cfg.p:
        final[f"random_p{q:g}"] = (float(rnd.residual(q, early)), float(rnd.residual(q, cfg.n_max)))
        final[f"hitting_p{q:g}"] = (float(hit.residual(q, m_early)), float(hit.residual(q, m_late)))
    summary = {"seed": seed, "alpha": alpha, "operator_hash": T.hash(), "early_index": early, "residuals": final}
    return {"rows": rows, "summary": summary}


def _job_bau(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    T, x = cfg.case(seed)
    path = sample_path(alpha, cfg.n_max, seed)
    N = cfg.n_max
    tol = cfg.tolerance()
    eps = cfg.eps * x.spec.tau_one
    x_inf = p_norm(x, np.inf)
    rows, certs = [], []
    for start in (max(1, N // 2), max(1, N // 10)):
        window = averages.average_window(T, x, path, start, N)
        cert = maximal.bau_certificate(window, None, eps, 2.0, maximal.STRATEGIES, start, tol)
        rows.append((seed, alpha, start, N, cert.lam, cert.trace_defect / x.spec.tau_one, cert.sup_bound, x_inf, cert.strategy))
        certs.append({"seed": seed, "alpha": alpha, **cert.to_dict()})
    return {"rows": rows, "certificates": certs}


def _job_gamma(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    grid = cfg.grid()
    path = sample_path(alpha, grid[-1], seed)
    rows = []
    for N in grid:
        g = concentration.gamma_sup(path, N)
        fine = DENSE_FACTOR * g.grid_size
        dense = concentration.gamma_sup_coeffs(path.Y[:N], g.W_N, grid_size=fine).grid_max
        rows.append((seed, alpha, N, g.grid_max, g.sup_bound, g.W_N, dense))
    return {"rows": rows}


def _job_identities(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    T, x = cfg.case(seed)
    n = min(cfg.n_max, IDENTITY_N_MAX)
    path = sample_path(alpha, n, seed)
    xn = p_norm(x, 2)
    ms = [int(m) for m in geometric_grid(path.hits.size, cfg.ratio)]
    eq = [(seed, alpha, m, d, d / xn) for m in ms for d in [averages.equivalence_defect(T, x, path, m)]]
    Ns = [N for N in cfg.checkpoints(n) if N >= 2]
    ab = [(seed, alpha, N, d, d / xn) for N in Ns for d in [averages.abel_defect(T, x, N, alpha)]]
    dec = [(seed, alpha, N, averages.decomposition_defect(T, x, path, [N])) for N in cfg.checkpoints(n)]
    return {"equivalence": eq, "abel": ab, "decomposition": dec}


def _job_interp(cfg: ExperimentConfig, seed: int, alpha: float) -> dict:
    T, _ = cfg.case(seed)
    rows = []
    grid = cfg.grid()
    path = sample_path(alpha, grid[-1], seed)
    for N in grid:
        A = concentration.fluctuation_operator(T, path, N)
        spec = T.spec
        n1 = concentration.operator_norm(spec, A, 1.0, seed=seed)
        n2 = concentration.operator_norm(spec, A, 2.0)
        sup = concentration.gamma_sup(path, N).sup_bound
        for q in cfg.p:
            if not 1.0 < q <= 2.0:
                continue
            nq = n2 if q == 2.0 else concentration.operator_norm(spec, A, q, seed=seed)
            bound = n1 ** (2.0 * (1.0 / q - 0.5)) * n2 ** (2.0 * (1.0 - 1.0 / q))
            rows.append((seed, alpha, N, q, nq, n1, n2, bound, nq - bound, sup))
    return {"rows": rows}


_JOBS = {
    "sample": _job_sample,
    "converge": _job_converge,
    "bau": _job_bau,
    "gamma": _job_gamma,
    "identities": _job_identities,
    "interp": _job_interp,
}


def _guarded(args):
    kind, cfg_dict, seed, alpha = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    t0 = time.perf_counter()
    try:
        result = _JOBS[kind](cfg, seed, alpha)
        return {"seed": seed, "alpha": alpha, "ok": True, "result": result, "seconds": time.perf_counter() - t0}
    except Exception as exc:  # one failing seed must not abort the sweep
        return {"seed": seed, "alpha": alpha, "ok": False, "error": f"{type(exc).__name__}: {exc}", "seconds": time.perf_counter() - t0}


def _sweep(cfg: ExperimentConfig) -> list[dict]:
    jobs = [(cfg.experiment, cfg.to_dict(), s, a) for a in cfg.alpha for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_guarded, jobs))  # map keeps job order
    return [_guarded(j) for j in jobs]


# ---------------------------------------------------------------------------
# experiment reducers: write files, return (files, verdicts, summary)


def _fraction(flags) -> float:
    flags = list(flags)
    return sum(flags) / len(flags) if flags else 0.0


def _reduce_sample(cfg, out, results):
    files, rows = [], []
    for r in results:
        path = r["result"]["path"]
        tag = f"a{r['alpha']:g}_s{r['seed']}"
        files.append(path.write_csv(out / f"path_{tag}.csv"))
        files.append(path.write_hits_json(out / f"hits_{tag}.json"))
        rows.extend(r["result"]["slln"])
    files.append(write_csv(out / "slln.csv", ["seed", "alpha", "N", "S_N_over_W_N"], rows))
    return files, {}, {"paths": len(results)}


def converge_verdicts(summaries: list[dict], alphas, ps) -> dict:
    verdicts = {}
    for a in alphas:
        mine = [s for s in summaries if s["alpha"] == a]
        for scheme in ("random", "hitting"):
            for q in ps:
                key = f"{scheme}_p{q:g}"
                frac = _fraction(late <= early / DECREASE_FACTOR for early, late in (s["residuals"][key] for s in mine))
                verdicts[f"converge alpha={a:g} {scheme} p={q:g}"] = _verdict(frac >= PASS_FRACTION, frac, PASS_FRACTION)
    return verdicts


def _reduce_converge(cfg, out, results):
    rows = [row for r in results for row in r["result"]["rows"]]
    summaries = [r["result"]["summary"] for r in results]
    files = [
        write_csv(out / "trajectory.csv", ["seed", "alpha", "scheme", "index", "p", "residual"], rows),
    ]
    (out / "summary.json").write_text(json.dumps(summaries, indent=1, sort_keys=True) + "\n")
    files.append(out / "summary.json")
    return files, converge_verdicts(summaries, cfg.alpha, cfg.p), {"runs": len(summaries)}


BAU_HEADER = ["seed", "alpha", "window_start", "window_end", "lambda", "trace_defect_rel", "sup_bound", "x_inf", "strategy"]


def bau_verdicts(rows: list[dict], eps: float, n_max: int) -> dict:
    late = [r for r in rows if int(r["window_start"]) == max(1, n_max // 2)]
    early = {(r["seed"], r["alpha"]): float(r["sup_bound"]) for r in rows if int(r["window_start"]) == max(1, n_max // 10)}
    exists = [float(r["trace_defect_rel"]) < eps and float(r["sup_bound"]) < BAU_SUP_FRACTION * float(r["x_inf"]) for r in late]
    mono = [float(r["sup_bound"]) <= early[(r["seed"], r["alpha"])] for r in late if (r["seed"], r["alpha"]) in early]
    return {
        "bau certificate on [N/2, N]": _verdict(bool(exists) and all(exists), _fraction(exists), 1.0),
        "bau sup_bound non-increasing in window start": _verdict(_fraction(mono) >= PASS_FRACTION, _fraction(mono), PASS_FRACTION),
    }


def _reduce_bau(cfg, out, results):
    rows = [row for r in results for row in r["result"]["rows"]]
    certs = [c for r in results for c in r["result"]["certificates"]]
    files = [write_csv(out / "bau.csv", BAU_HEADER, rows)]
    (out / "certificates.json").write_text(json.dumps(certs, indent=1, sort_keys=True) + "\n")
    files.append(out / "certificates.json")
    return files, bau_verdicts(read_csv(files[0]), cfg.eps, cfg.n_max), {"certificates": len(certs)}


def _reduce_gamma(cfg, out, results):
    rows = [row for r in results for row in r["result"]["rows"]]
    files = [write_csv(out / "gamma.csv", ["seed", "alpha", "N", "grid_max", "sup_bound", "W_N", "dense_max"], rows)]
    ok = [row[6] <= row[4] for row in rows]
    return files, {"net guarantee": _verdict(bool(ok) and all(ok), _fraction(ok), 1.0)}, {"rows": len(rows)}


def _reduce_identities(cfg, out, results):
    eq = [row for r in results for row in r["result"]["equivalence"]]
    ab = [row for r in results for row in r["result"]["abel"]]
    dec = [row for r in results for row in r["result"]["decomposition"]]
    files = [
        write_csv(out / "equivalence.csv", ["seed", "alpha", "m", "defect", "defect_rel"], eq),
        write_csv(out / "abel.csv", ["seed", "alpha", "N", "defect", "defect_rel"], ab),
        write_csv(out / "decomposition.csv", ["seed", "alpha", "N", "defect_rel"], dec),
    ]
    worst = lambda rows, k: max((row[k] for row in rows), default=0.0)  # noqa: E731
    verdicts = {
        "equivalence defect": _verdict(worst(eq, 4) <= EQUIVALENCE_TOL, worst(eq, 4), EQUIVALENCE_TOL),
        "abel defect": _verdict(worst(ab, 4) <= ABEL_TOL, worst(ab, 4), ABEL_TOL),
        "decomposition defect": _verdict(worst(dec, 3) <= DECOMPOSITION_TOL, worst(dec, 3), DECOMPOSITION_TOL),
    }
    return files, verdicts, {"instances": len(eq) + len(ab) + len(dec)}


def _reduce_interp(cfg, out, results):
    rows = [row for r in results for row in r["result"]["rows"]]
    header = ["seed", "alpha", "N", "p", "norm_p", "norm_1", "norm_2", "interp_bound", "defect", "sup_bound"]
    files = [write_csv(out / "interp.csv", header, rows)]
    vn = [row[6] <= row[9] for row in rows]
    at2 = [row[8] == 0.0 for row in rows if row[3] == 2.0]
    slack = [row[8] <= INTERP_SLACK * row[7] + cfg.eq_tol for row in rows if row[3] != 2.0]
    verdicts = {"von Neumann bound": _verdict(bool(vn) and all(vn), _fraction(vn), 1.0)}
    if at2:
        verdicts["interpolation defect at p=2"] = _verdict(all(at2), _fraction(at2), 1.0)
    if slack:
        verdicts["interpolation defect within slack"] = _verdict(all(slack), _fraction(slack), 1.0)
    return files, verdicts, {"rows": len(rows)}


_REDUCERS = {
    "sample": _reduce_sample,
    "converge": _reduce_converge,
    "bau": _reduce_bau,
    "gamma": _reduce_gamma,
    "identities": _reduce_identities,
    "interp": _reduce_interp,
}


def _run_tails(cfg, out):
    tallies, partial, rows = [], {}, []
    grid = cfg.grid()
    for a in cfg.alpha:
        g = concentration.gamma_tail_experiment(a, grid, cfg.trials, cfg.seed_start)
        c = concentration.chernoff_tail_experiment(a, grid, cfg.deltas, cfg.trials, cfg.seed_start)
        for t in g + c:
            tallies.append(t)
            rows.append((t.rule, a, t.N, t.trials, t.hits, t.bound, t.frequency, t.margin, t.consistent))
        partial[f"{a:g}"] = {
            "gamma_bound_partial_sums": [t.partial_sum for t in g],
            "gamma_bound_terms": [list(t.terms) for t in g],
            "chernoff_partial_sums": {f"{d:g}": float(concentration.chernoff_series(a, d, cfg.n_max)[-1]) for d in cfg.deltas},
            "boundedness_N1": {
                f"{d:g}": v["N1"]
                for d, v in concentration.boundedness_profile(a, cfg.deltas, cfg.seeds, cfg.n_max).items()
            },
        }
    files = [write_csv(out / "tally.csv", ["rule", "alpha", "N", "trials", "hits", "bound", "frequency", "margin", "consistent"], rows)]
    (out / "tails.json").write_text(json.dumps(partial, indent=1, sort_keys=True) + "\n")
    files.append(out / "tails.json")
    ok = [t.consistent for t in tallies]
    return files, {"tail tallies consistent": _verdict(all(ok), _fraction(ok), 1.0)}, {"tallies": len(tallies)}, []


def _run_decay(cfg, out):
    rows, verdicts = [], {}
    for a in cfg.alpha:
        fit = concentration.decay_fit(a, list(cfg.seeds), cfg.grid())
        rows.extend((a,) + r for r in fit.rows())
        verdicts[f"decay alpha={a:g}"] = _verdict(fit.passed, fit.median_slope, -fit.eps)
    files = [write_csv(out / "fit.csv", ["alpha", "seed", "slope", "intercept"], rows)]
    return files, verdicts, {"fits": len(rows)}, []


def run(config: ExperimentConfig) -> RunManifest:
    """Execute ``config`` and write its outputs and manifest into ``config.out``."""
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    t0 = time.perf_counter()
    job_seconds: list[float] = []
    if config.experiment == "tails":
        files, verdicts, summary, failures = _run_tails(config, out)
    elif config.experiment == "decay":
        files, verdicts, summary, failures = _run_decay(config, out)
    else:
        results = _sweep(config)
        job_seconds = [r["seconds"] for r in results]
        failures = [{"seed": r["seed"], "alpha": r["alpha"], "error": r["error"]} for r in results if not r["ok"]]
        for f in failures:
            log.warning("seed %s alpha %s failed: %s", f["seed"], f["alpha"], f["error"])
        ok = [r for r in results if r["ok"]]
        files, verdicts, summary = _REDUCERS[config.experiment](config, out, ok)
    total = time.perf_counter() - t0
    index = [{"path": Path(f).name, "bytes": Path(f).stat().st_size, "sha256": _sha256(Path(f))} for f in files]
    manifest = RunManifest(
        config=config.to_dict(),
        config_hash=config.config_hash(),
        code_version=code_version(),
        files=index,
        wall_clock={
            "total_seconds": total,
            "jobs": len(job_seconds),
            "mean_job_seconds": float(np.mean(job_seconds)) if job_seconds else 0.0,
            "max_job_seconds": float(np.max(job_seconds)) if job_seconds else 0.0,
        },
        failures=failures,
        verdicts=verdicts,
        summary=summary,
    )
    manifest.write(out)
    return manifest


def report(manifest: RunManifest | str | Path) -> dict:
    """Aggregate a finished run into machine-readable verdicts and tables."""
    base = None
    if not isinstance(manifest, RunManifest):
        base = Path(manifest)
        manifest = RunManifest.load(base)
        base = base if base.is_dir() else base.parent
    base = Path(manifest.config.get("out", ".")) if base is None else base
    for f in manifest.files:
        if not (base / f["path"]).exists():
            raise FileNotFoundError(f"output file {f['path']} listed in the manifest is missing")
        if _sha256(base / f["path"]) != f["sha256"]:
            raise ValueError(f"output file {f['path']} does not match its manifest checksum")
    names = {f["path"] for f in manifest.files}
    tables: dict = {}
    exp = manifest.config.get("experiment")
    if exp == "converge" and "summary.json" in names:
        summaries = json.loads((base / "summary.json").read_text())
        verdicts = converge_verdicts(summaries, manifest.config["alpha"], manifest.config["p"])
        tables["decrease_fraction"] = [{"check": k, "fraction": v["value"]} for k, v in verdicts.items()]
    if exp == "bau" and "bau.csv" in names:
        rows = read_csv(base / "bau.csv")
        tables["certificates"] = sorted(rows, key=lambda r: float(r["trace_defect_rel"]))
    rows = sum(len(read_csv(base / name)) for name in sorted(names) if name.endswith(".csv"))
    return {
        "experiment": exp,
        "config_hash": manifest.config_hash,
        "passed": manifest.passed,
        "verdicts": manifest.verdicts,
        "failures": manifest.failures,
        "rows": rows,
        "tables": tables,
    }


# ---------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    if not hi:
        raise argparse.ArgumentTypeError("expected START:STOP")
    lo, hi = int(lo), int(hi)
    if hi <= lo:
        raise argparse.ArgumentTypeError("empty seed range")
    return lo, hi - lo


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--alpha", type=float, nargs="+")
    p.add_argument("--p", type=float, nargs="+", dest="p")
    p.add_argument("--nmax", type=int, dest="n_max")
    p.add_argument("--ratio", type=float, help="checkpoint ratio of the geometric grid")
    p.add_argument("--seed", type=int, help="single seed (same as --seed-start S --seed-count 1)")
    p.add_argument("--seeds", type=_seed_range, help="seed range START:STOP (STOP excluded)")
    p.add_argument("--seed-start", type=int)
    p.add_argument("--seed-count", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--ngrid", type=int, nargs="+")
    p.add_argument("--deltas", type=float, nargs="+")
    p.add_argument("--eps", type=float)
    p.add_argument("--dim", type=int, help="size of a single-block algebra")
    p.add_argument("--algebra", help="algebra JSON, inline or @file")
    p.add_argument("--operator", help="operator grammar JSON, inline or @file")
    p.add_argument("--n-terms", type=int)
    p.add_argument("--eq-tol", type=float)
    p.add_argument("--psd-tol", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")


def _json_arg(text: str):
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    return json.loads(text)


def config_from_args(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    data["experiment"] = experiment
    for name in ("alpha", "p", "n_max", "ratio", "seed_start", "seed_count", "trials", "ngrid", "deltas", "eps", "n_terms", "eq_tol", "psd_tol", "workers", "out"):
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    if args.seed is not None:
        data["seed_start"], data["seed_count"] = args.seed, 1
    if args.seeds is not None:
        data["seed_start"], data["seed_count"] = args.seeds
    if args.dim is not None:
        data["algebra"] = {"blocks": [{"dim": args.dim, "weight": 1.0}]}
    if args.algebra is not None:
        data["algebra"] = _json_arg(args.algebra)
    if args.operator is not None:
        data["operator"] = _json_arg(args.operator)
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncergodic", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    generic = sub.add_parser("run", help="run the experiment named by --experiment")
    generic.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    _add_run_flags(generic)
    rep = sub.add_parser("report", help="aggregate a finished run")
    rep.add_argument("--out", required=True, help="run directory or manifest path")
    rep.add_argument("--json", action="store_true", help="print the full JSON report")
    return parser


def _print_verdicts(verdicts: dict, failures: list) -> None:
    for name, v in verdicts.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {name}  value={v['value']}  threshold={v['threshold']}")
    for f in failures:
        print(f"FAIL  seed {f['seed']} alpha {f['alpha']}: {f['error']}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            rep = report(args.out)
            if args.json:
                print(json.dumps(rep, indent=1, sort_keys=True))
            else:
                print(f"experiment {rep['experiment']}  rows {rep['rows']}")
                _print_verdicts(rep["verdicts"], rep["failures"])
            return 0 if rep["passed"] else 2
        experiment = args.experiment if args.command == "run" else args.command
        cfg = config_from_args(args, experiment)
        manifest = run(cfg)
        _print_verdicts(manifest.verdicts, manifest.failures)
        print(f"wrote {len(manifest.files)} files to {cfg.out} in {manifest.wall_clock['total_seconds']:.1f}s")
        return 0 if manifest.passed else 2
    except Exception as exc:
        log.debug("execution error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
