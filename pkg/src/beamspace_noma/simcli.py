"""Experiment orchestration: scenario configs, sweeps and convergence traces.

Configs are flat YAML mappings.  Sweeps emit one CSV row per
(algorithm, axis value) with a fixed column order; floats are written with
``repr`` so a fixed seed reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .beamdesign import ALGORITHMS, SolverConfig, baseline_tdma, design_for
from .channel import ArrayConfig, ChannelParams, generate_ue_profile, rng_stream
from .clustering import ClusteredScenario, cluster_scenario
from .rates import RateReport, ergodic_weighted_sum_rate

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SweepSpec",
    "CSV_COLUMNS",
    "load_scenario",
    "drop_profiles",
    "build_scenario",
    "solve_scenario",
    "run_sweep",
    "write_csv",
    "convergence_trace",
    "report_dict",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "algorithm", "axis_name", "axis_value", "n_t", "k", "snr_db", "mc_realizations", "seed",
    "weighted_sum_rate", "sum_rate_stderr", "upper_bound", "outer_iters", "converged", "wall_time_ms",
)
AXES = ("snr_db", "k", "n_t")

# stream key of the UE drop, kept apart from the per-realization fading streams
_DROP_KEY = 1000
_ALIASES = {"mc": "mc_realizations", "radius": "cell_radius_m"}
_SOLVER_FIELDS = tuple(f.name for f in fields(SolverConfig))


class ConfigError(ValueError):
    """Invalid or unparsable configuration; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    n_t: int
    k: int
    p_max_db: float
    seed: int = 0
    cell_radius_m: float = 50.0
    num_paths: int = 4
    angular_spread_deg: float = 5.0
    pathloss_exponent: float = 3.7
    reference_gain_db: float = 0.0
    min_distance_m: float = 1.0
    power_decay: float = 1.0
    excess_distance_m: float = 10.0
    weights: object = "uniform"
    num_sectors: int | None = None
    mc_realizations: int = 1000
    max_outer_iters: int = 50
    max_inner_iters: int = 500
    outer_tol: float = 1e-4
    multiplier_tol: float | None = None
    step_mu: float = 0.01
    step_mu2: float = 0.01
    step_omega: float = 0.01
    initial_multiplier: float = 1.0

    def __post_init__(self):
        for name in ("n_t", "k", "seed", "num_paths", "mc_realizations", "max_outer_iters", "max_inner_iters"):
            _check_int(name, getattr(self, name))
        if self.n_t < 2:
            raise ConfigError(f"n_t must be >= 2, got {self.n_t}", "n_t")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}", "k")
        if self.mc_realizations < 1:
            raise ConfigError(f"mc_realizations must be >= 1, got {self.mc_realizations}", "mc_realizations")
        for name in ("max_outer_iters", "max_inner_iters", "num_paths"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", name)
        if self.num_sectors is not None:
            _check_int("num_sectors", self.num_sectors)
            if self.num_sectors < 1:
                raise ConfigError("num_sectors must be >= 1", "num_sectors")
        for name in ("p_max_db", "cell_radius_m", "angular_spread_deg", "pathloss_exponent",
                     "reference_gain_db", "min_distance_m", "power_decay", "excess_distance_m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
                raise ConfigError(f"{name} must be a finite number, got {v!r}", name)
        if self.weights != "uniform":
            w = self.weights
            if not isinstance(w, (list, tuple)) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in w):
                raise ConfigError("weights must be 'uniform' or a list of numbers", "weights")
            if len(w) < self.k or any(x <= 0 for x in w):
                raise ConfigError(f"weights needs {self.k} positive entries, got {len(w)}", "weights")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        # delegate the remaining range checks, naming the field on failure
        try:
            self.channel_params()
        except ValueError as e:
            raise ConfigError(str(e), _guess_field(str(e))) from None
        try:
            self.solver_config()
        except ValueError as e:
            raise ConfigError(str(e), _guess_field(str(e))) from None

    @property
    def p_max(self) -> float:
        return 10 ** (self.p_max_db / 10)

    @property
    def sectors(self) -> int:
        return self.n_t if self.num_sectors is None else self.num_sectors

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            num_paths=self.num_paths,
            angular_spread_deg=self.angular_spread_deg,
            power_decay=self.power_decay,
            cell_radius=self.cell_radius_m,
            min_distance=self.min_distance_m,
            pathloss_exponent=self.pathloss_exponent,
            reference_gain_db=self.reference_gain_db,
            excess_distance=self.excess_distance_m,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**{f: getattr(self, f) for f in _SOLVER_FIELDS})

    def ue_weights(self, k: int | None = None) -> np.ndarray:
        k = self.k if k is None else k
        if self.weights == "uniform":
            return np.ones(k)
        if len(self.weights) < k:
            raise ConfigError(f"weights has {len(self.weights)} entries, need {k}", "weights")
        return np.array(self.weights[:k])

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["weights"], tuple):
            d["weights"] = list(d["weights"])
        return d


def _check_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {v!r}", name)


def _guess_field(message: str) -> str | None:
    # the first config key (or channel/solver parameter name) in the message
    names = {f.name: f.name for f in fields(ScenarioConfig)}
    names.update(cell_radius="cell_radius_m", min_distance="min_distance_m",
                 excess_distance="excess_distance_m", step="step_mu", iteration="max_outer_iters")
    found = [(message.find(short), -len(short), full) for short, full in names.items() if short in message]
    return min(found)[2] if found else None


def _parse(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"parse error at line {line}: {e.problem or e}", line=line) from None
    except yaml.YAMLError as e:
        raise ConfigError(f"parse error: {e}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a key-value mapping", line=1)
    return data


def load_scenario(source, **overrides) -> ScenarioConfig:
    """Load a flat YAML config from a path, inline text or a mapping.

    A string is read as a file when such a file exists and parsed as YAML
    otherwise.  Keyword ``overrides`` (e.g. ``seed``) replace loaded values.
    Unknown keys raise :class:`ConfigError`; so does any violated invariant,
    with :attr:`ConfigError.field` set to the offending key.
    """
    if isinstance(source, dict):
        data = dict(source)
    elif isinstance(source, Path) or (isinstance(source, str) and os.path.isfile(source)):
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {source}: {e.strerror or e}") from None
        data = _parse(text)
    elif isinstance(source, str) and any(ch in source for ch in ":{\n"):
        data = _parse(source)
    elif isinstance(source, str):
        raise ConfigError(f"config file not found: {source}")
    else:
        raise TypeError(f"unsupported config source {type(source).__name__}")

    data = {_ALIASES.get(k, k): v for k, v in data.items()}
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(map(str, data)) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}", unknown[0])
    for req in ("n_t", "k", "p_max_db"):
        if req not in data:
            raise ConfigError(f"missing required key {req!r}", req)
    if isinstance(data.get("weights"), str) and data["weights"] != "uniform":
        raise ConfigError("weights must be 'uniform' or a list of numbers", "weights")
    return ScenarioConfig(**data)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    algorithms: tuple = ALGORITHMS
    output_path: str | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}", "axis")
        vals = tuple(self.values)
        if not vals:
            raise ConfigError("sweep values must be non-empty", "values")
        if list(vals) != sorted(vals):
            raise ConfigError("sweep values must be sorted", "values")
        if self.axis in ("k", "n_t"):
            for v in vals:
                if float(v) != int(v):
                    raise ConfigError(f"{self.axis} values must be integers", "values")
            vals = tuple(int(v) for v in vals)
        else:
            vals = tuple(float(v) for v in vals)
        algs = tuple(self.algorithms)
        if not algs:
            raise ConfigError("algorithms must be non-empty", "algorithms")
        bad = [a for a in algs if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}", "algorithms")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "algorithms", algs)


def drop_profiles(config: ScenarioConfig, n_t: int | None = None, k: int | None = None) -> list:
    """UE profiles of the seeded drop.

    UE ``i`` always uses its own keyed stream, so the same seed places UEs
    identically for every array size and a smaller ``k`` is a prefix.
    """
    n_t = config.n_t if n_t is None else n_t
    k = config.k if k is None else k
    params = config.channel_params()
    array = ArrayConfig(n_t)
    weights = config.ue_weights(k)
    return [generate_ue_profile(rng_stream(config.seed, _DROP_KEY, i), params, array,
                                weight=weights[i], ue_id=i)[0] for i in range(k)]


def build_scenario(config: ScenarioConfig, n_t: int | None = None, k: int | None = None) -> ClusteredScenario:
    """Drop ``k`` UEs for ``config.seed`` and cluster them."""
    n_t = config.n_t if n_t is None else n_t
    return cluster_scenario(drop_profiles(config, n_t, k), config.num_sectors or n_t)


def solve_scenario(config: ScenarioConfig, algorithm: str, scenario: ClusteredScenario | None = None):
    """Design and evaluate one algorithm; returns ``(RateReport, trace or None)``."""
    if scenario is None:
        scenario = build_scenario(config)
    if algorithm == "tdma":
        return baseline_tdma(scenario, config.p_max, config.mc_realizations, config.seed), None
    design, trace = design_for(algorithm, scenario, config.p_max, config.solver_config())
    return ergodic_weighted_sum_rate(design, scenario, config.mc_realizations, config.seed), trace


def _point_config(config, axis, value):
    if axis == "snr_db":
        return replace(config, p_max_db=float(value))
    return replace(config, **{axis: int(value)})


def _run_point(config, axis, value, algorithm, scenario, timing):
    cfg = _point_config(config, axis, value)
    t0 = time.perf_counter()
    try:
        report, trace = solve_scenario(cfg, algorithm, scenario)
        wsr, err, ub = report.weighted_sum_rate, report.sum_rate_stderr, report.upper_bound
        iters = trace.outer_iters_used if trace is not None else 0
        converged = trace.converged if trace is not None else True
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        log.error("%s at %s=%s failed: %s", algorithm, axis, value, e)
        wsr = err = ub = float("nan")
        iters, converged = 0, False
    ms = (time.perf_counter() - t0) * 1e3
    return {
        "algorithm": algorithm,
        "axis_name": axis,
        "axis_value": value,
        "n_t": cfg.n_t,
        "k": cfg.k,
        "snr_db": float(cfg.p_max_db),
        "mc_realizations": cfg.mc_realizations,
        "seed": cfg.seed,
        "weighted_sum_rate": float(wsr),
        "sum_rate_stderr": float(err),
        "upper_bound": float(ub),
        "outer_iters": int(iters),
        "converged": bool(converged),
        "wall_time_ms": ms if timing else None,
    }


def run_sweep(config: ScenarioConfig, sweep: SweepSpec, timing: bool = False, workers: int = 1) -> list:
    """Evaluate every (algorithm, axis value) pair and return sorted rows.

    A K-sweep drops UEs once at the largest K and truncates.  Rows are
    buffered and sorted by (algorithm, axis value) regardless of ``workers``.
    ``wall_time_ms`` stays empty unless ``timing`` is set, which keeps the
    CSV deterministic.  With ``sweep.output_path`` set the CSV is written too.
    """
    if sweep.axis == "k":
        profiles = drop_profiles(config, k=max(sweep.values))
        scenarios = {v: cluster_scenario(profiles[:v], config.sectors) for v in sweep.values}
    else:
        scenarios = {v: build_scenario(_point_config(config, sweep.axis, v)) for v in sweep.values}
    jobs = [(config, sweep.axis, v, a, scenarios[v], timing) for a in sweep.algorithms for v in sweep.values]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda j: _run_point(*j), jobs))
    else:
        rows = [_run_point(*j) for j in jobs]
    order = {a: i for i, a in enumerate(sweep.algorithms)}
    rows.sort(key=lambda r: (order[r["algorithm"]], r["axis_value"]))
    if sweep.output_path:
        write_csv(rows, sweep.output_path)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path=None) -> str:
    """Serialize rows in :data:`CSV_COLUMNS` order; write to ``path`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def convergence_trace(config: ScenarioConfig, algorithm: str) -> list:
    """Per outer iteration rows ``(iteration, surrogate, budget_usage)``."""
    if algorithm not in ("alg1", "alg2", "alg3"):
        raise ValueError(f"no iterative trace for {algorithm!r}; use alg1, alg2 or alg3")
    scenario = build_scenario(config)
    _, trace = design_for(algorithm, scenario, config.p_max, config.solver_config())
    return [{"iteration": i + 1, "surrogate": s, "budget_usage": b}
            for i, (s, b) in enumerate(zip(trace.surrogate_per_outer_iter, trace.budget_usage_per_iter))]


def report_dict(report: RateReport, trace=None) -> dict:
    out = {
        "weighted_sum_rate": report.weighted_sum_rate,
        "sum_rate_stderr": report.sum_rate_stderr,
        "upper_bound": report.upper_bound,
        "num_realizations": report.num_realizations,
        "seed": report.rng_seed,
        "per_ue_rates": {int(k): v for k, v in report.per_ue_rates.items()},
    }
    if trace is not None:
        out["outer_iters"] = trace.outer_iters_used
        out["converged"] = trace.converged
    return out
