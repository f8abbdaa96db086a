"""Monte-Carlo sweeps over (method, L) and their CSV outputs.

Configuration is TOML. Top-level keys describe the experiment, and the
``[scenario]``, ``[target]``, ``[grid]`` and ``[ste]`` tables hold the
remaining parameters; see ``README.md`` for the full schema. Unknown keys
are rejected so that typos fail loudly.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamforming import nmse, sdr_loss, to_db
from .errors import (ConfigError, GenerationFailureError, InvalidInputError,
                     NumericalFailureError)
from .estimators import ShrinkageTarget, SteConfig, nscm, scm
from .scenarios import (STREAM_TARGET, StapScenarioSpec, UlaScenarioSpec, build_stap_scenario,
                        build_ula_scenario, knowledge_target, trial_rng)
from .tuning import (TuningGrid, oracle_s2cm, oracle_ste, s2cm_estimate, tune_s2cm_ae,
                     tune_s2cm_cv, tune_ste_ae, tune_ste_cv1, tune_ste_cv2)

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

log = logging.getLogger(__name__)

METHODS = ("scm", "nscm", "s2cm_cv", "s2cm_ae", "oracle_s2cm",
           "ste_cv1", "ste_cv2", "ste_ae", "oracle_ste")
TUNED_METHODS = METHODS[2:]
OUTPUTS = ("sdr_loss", "nmse", "rho_curve", "distance_curve", "cost_curve")
SWEEP_HEADER = ("method", "L", "mean_sl_db", "std_sl_db", "mean_nmse", "mean_rho",
                "mean_iterations", "trials_failed")
CURVES_HEADER = ("series", "trial", "index", "value")
DEFAULT_TRIALS = {"ula": 200, "stap": 100}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TargetSpec:
    """Shrinkage target choice.

    ``knowledge`` draws ``T = R o t t^T`` per trial, or once for the whole
    sweep when ``fixed`` is set. ``normalize_trace`` rescales any target to
    trace ``N``.
    """

    kind: str = "identity"
    sigma_t2: float = 0.1
    fixed: bool = False
    normalize_trace: bool = False

    def __post_init__(self):
        if self.kind not in ("identity", "knowledge"):
            raise ConfigError(f"target.kind must be 'identity' or 'knowledge', got {self.kind!r}")
        if self.sigma_t2 < 0:
            raise ConfigError("target.sigma_t2 must be >= 0")


@dataclass(frozen=True)
class GridSpec:
    count: int = 100
    eps: float = 1e-3

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("grid.count must be >= 1")
        if not 0.0 < self.eps < 0.5:
            raise ConfigError("grid.eps must lie in (0, 0.5)")

    def for_s2cm(self) -> TuningGrid:
        return TuningGrid.uniform(self.count, 0.0, self.eps)

    def for_ste(self, n: int, l_count: int) -> TuningGrid:
        return TuningGrid.for_ste(n, l_count, self.count, self.eps)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: UlaScenarioSpec | StapScenarioSpec
    methods: tuple[str, ...]
    l_grid: tuple[int, ...]
    trials: int = 200
    master_seed: int = 0
    target: TargetSpec = TargetSpec()
    grid: GridSpec = GridSpec()
    ste: SteConfig = SteConfig()
    refine: bool = True
    outputs: tuple[str, ...] = ("sdr_loss", "nmse")
    threads: int = 1

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods contains duplicates")
        if not self.l_grid:
            raise ConfigError("l_grid must be nonempty")
        if any(int(l_count) < 2 for l_count in self.l_grid):
            raise ConfigError("every entry of l_grid must be >= 2")
        if len(set(self.l_grid)) != len(self.l_grid):
            raise ConfigError("l_grid contains duplicates")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for o in self.outputs:
            if o not in OUTPUTS:
                raise ConfigError(f"unknown output {o!r}; choose from {', '.join(OUTPUTS)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def scenario_kind(self) -> str:
        return "ula" if isinstance(self.scenario, UlaScenarioSpec) else "stap"


def _coerce(value, default, where: str):
    """Check a TOML value against the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        return tuple(value)
    if default is None or isinstance(default, str):
        return value
    raise ConfigError(f"{where}: unsupported value")  # pragma: no cover


def _build(cls, table: dict, section: str, skip: tuple[str, ...] = ()):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kwargs = {}
    for name, value in table.items():
        f = known[name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kwargs[name] = _coerce(value, default, f"{section}.{name}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


_TOP_KEYS = {"seed", "trials", "methods", "l_grid", "outputs", "threads",
             "scenario", "target", "grid", "ste"}


def config_from_dict(doc: dict, require_experiment: bool = True) -> ExperimentConfig:
    """Validate a parsed TOML document and build the experiment configuration.

    With ``require_experiment=False`` the ``methods`` and ``l_grid`` keys may
    be omitted (used by the single-shot ``tune`` command).
    """
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    scen = dict(doc.get("scenario", {}))
    if not isinstance(doc.get("scenario", {}), dict):
        raise ConfigError("[scenario] must be a table")
    kind = scen.pop("kind", "ula")
    if kind == "ula":
        scenario = _build(UlaScenarioSpec, scen, "scenario")
    elif kind == "stap":
        scenario = _build(StapScenarioSpec, scen, "scenario")
    else:
        raise ConfigError(f"scenario.kind must be 'ula' or 'stap', got {kind!r}")

    ste_table = dict(doc.get("ste", {}))
    refine = _coerce(ste_table.pop("refine", True), True, "ste.refine")
    ste = _build(SteConfig, ste_table, "ste", skip=("initial",))

    def listed(key, default, cast):
        raw = doc.get(key, default)
        if not isinstance(raw, list):
            raise ConfigError(f"{key} must be an array")
        out = []
        for v in raw:
            if cast is int and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"{key} entries must be integers")
            if cast is str and not isinstance(v, str):
                raise ConfigError(f"{key} entries must be strings")
            out.append(v)
        return tuple(out)

    methods = listed("methods", [] if require_experiment else ["s2cm_cv"], str)
    l_grid = listed("l_grid", [] if require_experiment else [2], int)
    scalars = {}
    for key, default in (("seed", 0), ("trials", DEFAULT_TRIALS[kind]), ("threads", 1)):
        scalars[key] = _coerce(doc.get(key, default), default, key)
    return ExperimentConfig(
        scenario=scenario, methods=methods, l_grid=l_grid, trials=scalars["trials"],
        master_seed=scalars["seed"],
        target=_build(TargetSpec, doc.get("target", {}), "target"),
        grid=_build(GridSpec, doc.get("grid", {}), "grid"),
        ste=ste, refine=refine,
        outputs=listed("outputs", ["sdr_loss", "nmse"], str),
        threads=scalars["threads"])


def load_config(path, require_experiment: bool = True) -> ExperimentConfig:
    """Read and validate a TOML experiment file."""
    p = Path(path)
    try:
        with p.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    try:
        return config_from_dict(doc, require_experiment)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------
@dataclass
class MethodOutcome:
    method: str
    sl: float = math.nan
    nmse: float = math.nan
    rho: float = math.nan
    iterations: float = 0.0
    error: str | None = None


@dataclass
class TrialFailure:
    method: str
    l_count: int
    trial: int
    seed: int
    reason: str


@dataclass
class SweepRow:
    method: str
    L: int
    mean_sl_db: float
    std_sl_db: float
    mean_nmse: float
    mean_rho: float
    mean_iterations: float
    trials_failed: int

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in SWEEP_HEADER)


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)
    failures: list[TrialFailure] = field(default_factory=list)
    curves: list[tuple[str, int, int, float]] = field(default_factory=list)

    def row(self, method: str, l_count: int) -> SweepRow:
        for r in self.rows:
            if r.method == method and r.L == l_count:
                return r
        raise KeyError((method, l_count))


def build_scenario(spec):
    if isinstance(spec, UlaScenarioSpec):
        return build_ula_scenario(spec)
    return build_stap_scenario(spec)


def trial_target(config: ExperimentConfig, realization, trial: int) -> ShrinkageTarget:
    """Shrinkage target used by every method in one trial."""
    n = realization.n
    spec = config.target
    if spec.kind == "identity":
        target = ShrinkageTarget.identity(n)
    else:
        rng = trial_rng(config.master_seed, 0 if spec.fixed else trial, STREAM_TARGET)
        target = knowledge_target(realization.r_true, spec.sigma_t2, rng)
    if spec.normalize_trace:
        m = target.matrix
        target = ShrinkageTarget(m * (n / np.trace(m).real))
    return target


def run_method(method: str, samples, realization, target, config: ExperimentConfig):
    """Estimate with one method; returns ``(estimate, rho, iterations, tuning_result)``.

    Non-convergence of a Tyler-type iteration raises ``NumericalFailureError``
    so that callers can treat it like any other failed trial.
    """
    s = realization.s
    x = samples.data
    n, l_count = x.shape
    cfg = config.ste
    if method == "scm":
        if l_count < n:
            raise NumericalFailureError(f"SCM is singular for L={l_count} < N={n}")
        return scm(samples), 0.0, 0, None
    if method == "nscm":
        if l_count < n:
            raise NumericalFailureError(f"NSCM is singular for L={l_count} < N={n}")
        return nscm(samples), math.nan, 0, None
    if method in ("s2cm_cv", "s2cm_ae", "oracle_s2cm"):
        grid = config.grid.for_s2cm()
        if method == "s2cm_cv":
            res = tune_s2cm_cv(samples, s, target, grid)
        elif method == "s2cm_ae":
            res = tune_s2cm_ae(samples, s, target, grid)
        else:
            res = oracle_s2cm(samples, s, target, realization.r_true, grid)
        return s2cm_estimate(samples, target, res), res.rho_star, 0, res
    grid = config.grid.for_ste(n, l_count)
    if method == "ste_cv1":
        res, est = tune_ste_cv1(samples, s, target, grid, cfg=cfg)
    elif method == "ste_cv2":
        res, est = tune_ste_cv2(samples, s, target, grid, cfg, refine=config.refine)
    elif method == "ste_ae":
        res, est = tune_ste_ae(samples, s, target, grid, cfg, refine=config.refine)
    elif method == "oracle_ste":
        res, est = oracle_ste(samples, s, target, realization.r_true, grid, cfg)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    if not res.converged:
        raise NumericalFailureError(
            f"Tyler iteration did not converge within {cfg.max_iter} iterations")
    return est, res.rho_star, res.iterations, res


def _curve_records(method, l_count, trial, res, outputs):
    out = []
    if res is None:
        return out
    tag = f"{method}:L{l_count}"
    if "cost_curve" in outputs:
        out += [(f"{tag}:cost_rho", trial, i, float(v)) for i, v in enumerate(res.rho_grid)]
        out += [(f"{tag}:cost", trial, i, float(v)) for i, v in enumerate(res.costs)]
    if "rho_curve" in outputs and res.rho_history:
        out += [(f"{tag}:rho", trial, i, float(v)) for i, v in enumerate(res.rho_history)]
    if "distance_curve" in outputs and res.distances:
        out += [(f"{tag}:distance", trial, i, float(v)) for i, v in enumerate(res.distances)]
    return out


def run_trial(config: ExperimentConfig, realization, l_count: int, trial: int):
    """All methods on one shared snapshot set; never raises for numerical trouble."""
    outcomes, curves = [], []
    try:
        samples = realization.snapshots(config.master_seed, trial, l_count)
        target = trial_target(config, realization, trial)
    except (GenerationFailureError, InvalidInputError, NumericalFailureError) as exc:
        return [MethodOutcome(m, error=f"{type(exc).__name__}: {exc}")
                for m in config.methods], curves
    for method in config.methods:
        out = MethodOutcome(method)
        try:
            est, rho, iters, res = run_method(method, samples, realization, target, config)
            if "sdr_loss" in config.outputs:
                out.sl = sdr_loss(est, realization.r_true, realization.s)
            if "nmse" in config.outputs:
                out.nmse = nmse(est, realization.r_true)
            out.rho, out.iterations = float(rho), float(iters)
            curves += _curve_records(method, l_count, trial, res, config.outputs)
        except (NumericalFailureError, InvalidInputError, np.linalg.LinAlgError) as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        outcomes.append(out)
    return outcomes, curves


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def _aggregate(method: str, l_count: int, outcomes: list[MethodOutcome]) -> SweepRow:
    ok = [o for o in outcomes if o.error is None]
    sl_db = [float(to_db(o.sl)) for o in ok if not math.isnan(o.sl)]
    std = float(np.std(sl_db, ddof=1)) if len(sl_db) > 1 else (0.0 if sl_db else math.nan)
    return SweepRow(method, int(l_count), _mean(sl_db), std,
                    _mean([o.nmse for o in ok if not math.isnan(o.nmse)]),
                    _mean([o.rho for o in ok]),
                    _mean([o.iterations for o in ok]),
                    len(outcomes) - len(ok))


def run_sweep(config: ExperimentConfig, threads: int | None = None) -> SweepReport:
    """Run every (L, trial) cell and reduce in index order.

    Work is distributed over ``threads`` workers (default ``config.threads``).
    Each cell draws its snapshots from its own ``(seed, trial)`` streams, so
    the report does not depend on the number of workers.
    """
    workers = config.threads if threads is None else int(threads)
    if workers < 1:
        raise InvalidInputError("threads must be >= 1")
    realization = build_scenario(config.scenario)
    cells = [(l_count, trial) for l_count in config.l_grid for trial in range(config.trials)]

    def work(cell):
        return run_trial(config, realization, *cell)

    if workers == 1:
        results = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, cells))

    report = SweepReport()
    per_key: dict[tuple[str, int], list[MethodOutcome]] = {}
    for (l_count, trial), (outcomes, curves) in zip(cells, results):
        report.curves.extend(curves)
        for o in outcomes:
            per_key.setdefault((o.method, l_count), []).append(o)
            if o.error is not None:
                fail = TrialFailure(o.method, l_count, trial, config.master_seed, o.error)
                report.failures.append(fail)
                log.warning("trial failed: method=%s L=%d seed=%d trial=%d: %s",
                            o.method, l_count, config.master_seed, trial, o.error)
    report.rows = sorted((_aggregate(m, l_count, outs) for (m, l_count), outs in per_key.items()),
                         key=lambda r: (r.method, r.L))
    return report


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def format_value(v) -> str:
    """Integers verbatim, floats as the shortest decimal that round-trips."""
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("booleans are not valid CSV values here")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows) -> None:
    p = Path(path)
    try:
        with p.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {p}: {exc.strerror}", str(p)) from exc


def emit_csv(report: SweepReport, path) -> None:
    """Write the aggregated sweep table, sorted by (method, L)."""
    rows = sorted(report.rows, key=lambda r: (r.method, r.L))
    _write_rows(path, SWEEP_HEADER, (r.values() for r in rows))


def emit_curves(diagnostics, path) -> None:
    """Write ``(series, trial, index, value)`` records in long format."""
    if isinstance(diagnostics, SweepReport):
        diagnostics = diagnostics.curves
    _write_rows(path, CURVES_HEADER,
                ((str(s), int(t), int(i), float(v)) for s, t, i, v in diagnostics))
