"""Monte Carlo experiment grids, aggregation and result files.

An :class:`ExperimentConfig` names one experiment kind and its grid axes.
:func:`run_experiment` expands the grid, splits each point's trials into
tasks, runs them in a process pool and merges the results by (grid index,
trial index).  Every trial draws from its own stream keyed by the master
seed and a label built from the point and the trial index, so results do not
depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .adversaries import (
    VECTOR_CHUNK,
    FraudKind,
    FraudStrategy,
    known_bits_mask,
    simulate_chunk,
    theorem_bound,
    wilson_interval,
)
from .attacks import (
    SessionSource,
    attack_hitomi,
    birthday_sessions,
    dictionary_attack_ideal,
    dictionary_attack_noisy,
)
from .channel import LinkPair
from .core import RngStream
from .protocols import ProtocolId, ProtocolParams, TagIdentity
from .threshold import (
    RegimeError,
    hoeffding_false_accept,
    hoeffding_false_reject,
    in_regime,
    integer_threshold,
    optimal_threshold_specialized,
    p_a_bound,
    p_t_bound,
)

KINDS = ("eavesdrop_ideal", "eavesdrop_noisy", "attack_success", "threshold_grid", "fraud_grid", "hitomi_resistance")
FORMATS = ("csv", "json")
Z95 = 1.959963984540054
TRIAL_CHUNK = 64


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid.  Field names are also the TOML keys.

    ``tau_values`` entries are integers or the strings ``"n"``, ``"n/2"``
    and ``"n+1"``.  ``nonce_bits_values`` entries of 0 mean "same as n".
    """

    kind: str
    n_values: tuple = (16,)
    ber_values: tuple = (0.0,)
    p_values: tuple = (1.0,)
    rho_values: tuple = (1.0,)
    omega_values: tuple = (0.01,)
    tau_values: tuple = (1,)
    v_values: tuple = ()
    strategies: tuple = ("distance", "mafia", "terrorist")
    protocols: tuple = ("swiss-knife",)
    nonce_bits_values: tuple = (0,)
    trials: int = 100
    seed: int = 0
    workers: Optional[int] = None
    output: str = "results"
    formats: tuple = ("csv", "json")
    ber_mode: str = "per-link"
    aggregation: str = "mode"
    candidate_policy: str = "reset"
    session_cap: Optional[int] = None
    prf: str = "hmac-sha256"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers must be a positive integer")
        for name in self.axes():
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"grid axis {name} is empty")
        n_max = None if self.kind == "threshold_grid" else 64  # the bounds are analytic
        for n in self.n_values:
            if not isinstance(n, int) or n < 1 or (n_max and n > n_max):
                raise ConfigError(f"n values must be integers in 1..{n_max or 'inf'}, got {n!r}")
        for q in self.ber_values:
            if not 0.0 <= q <= 0.5:
                raise ConfigError(f"BER values must be in [0, 1/2], got {q!r}")
        for p in self.p_values:
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"p values must be in (0, 1], got {p!r}")
        for r in self.rho_values:
            if not r > 0:
                raise ConfigError("rho values must be positive")
        for t in self.tau_values:
            if not (isinstance(t, int) or t in ("n", "n/2", "n+1")):
                raise ConfigError(f"tau values must be integers or 'n', 'n/2', 'n+1', got {t!r}")
        for s in self.strategies:
            try:
                FraudKind(s)
            except ValueError:
                raise ConfigError(f"unknown fraud strategy {s!r}") from None
        for p in self.protocols:
            try:
                ProtocolId.parse(p)
            except ValueError:
                raise ConfigError(f"unknown protocol {p!r}") from None
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigError(f"formats must be a non-empty subset of {FORMATS}")
        if self.ber_mode not in ("per-link", "end-to-end"):
            raise ConfigError("ber_mode must be 'per-link' or 'end-to-end'")
        if self.aggregation not in ("mode", "majority"):
            raise ConfigError("aggregation must be 'mode' or 'majority'")
        if self.candidate_policy not in ("reset", "persist"):
            raise ConfigError("candidate_policy must be 'reset' or 'persist'")
        if self.session_cap is not None and self.session_cap < 1:
            raise ConfigError("session_cap must be positive")
        if self.kind in ("eavesdrop_ideal", "eavesdrop_noisy", "attack_success"):
            proto = ProtocolId.parse(self.protocols[0])
            if proto is ProtocolId.HITOMI:
                raise ConfigError("eavesdrop grids attack swiss-knife or reid-split; use hitomi_resistance")
            if proto is ProtocolId.REID_SPLIT and max(self.n_values) > 32:
                raise ConfigError("reid-split dictionary keys need n <= 32")

    def axes(self) -> tuple[str, ...]:
        return {
            "eavesdrop_ideal": ("n_values",),
            "eavesdrop_noisy": ("n_values", "ber_values", "p_values"),
            "attack_success": ("n_values", "ber_values"),
            "threshold_grid": ("n_values", "omega_values", "rho_values"),
            "fraud_grid": ("strategies", "protocols", "n_values", "tau_values"),
            "hitomi_resistance": ("n_values", "nonce_bits_values"),
        }[self.kind]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def resolve_workers(cfg: ExperimentConfig, override: Optional[int] = None) -> int:
    """Explicit override, then the config, then ``DBOUND_WORKERS``, then 1."""
    if override is not None:
        return max(1, int(override))
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get("DBOUND_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DBOUND_WORKERS must be an integer, got {env!r}") from None
    return 1


def resolve_tau(value, n: int) -> int:
    if isinstance(value, int):
        return value
    return {"n": n, "n/2": max(1, n // 2), "n+1": n + 1}[value]


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    kind: str
    seed: int
    columns: list
    rows: list
    config: dict = field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0  # kept out of files so reruns are byte-identical

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "version": self.version,
            "config": self.config,
            "columns": list(self.columns),
            "rows": [{c: _clean(r.get(c)) for c in self.columns} for r in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentResult":
        return cls(data["kind"], data["seed"], list(data["columns"]), list(data["rows"]), data.get("config", {}), data.get("version", ""))


def _clean(v):
    """Canonical value for files: floats at 12 significant digits, NaN as None."""
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if hasattr(v, "item"):
        return _clean(v.item())
    if isinstance(v, float):
        if not math.isfinite(v):
            return None
        return float(f"{v:.12g}")
    return v


def _fmt_csv(v) -> str:
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


CSV_COLUMNS = {
    "eavesdrop_ideal": ["n", "ber", "p", "trials", "mean_sessions", "std_sessions", "ci95_lo", "ci95_hi"],
    "eavesdrop_noisy": ["n", "ber", "p", "trials", "mean_sessions", "std_sessions", "ci95_lo", "ci95_hi"],
}


def render(result: ExperimentResult, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result.to_dict(), indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        cols = CSV_COLUMNS.get(result.kind, result.columns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in result.rows:
            w.writerow([_fmt_csv(r.get(c)) for c in cols])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def result_filename(result: ExperimentResult, fmt: str) -> str:
    return f"{result.kind}_{result.seed}.{fmt}"


def write_results(result: ExperimentResult, path, fmt: str = "csv") -> Path:
    """Write one file.  A directory ``path`` gets ``<kind>_<seed>.<ext>`` inside it."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    path = Path(path)
    if path.is_dir():
        path = path / result_filename(result, fmt)
    text = render(result, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path) -> ExperimentResult:
    with open(path, encoding="utf-8") as fh:
        return ExperimentResult.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# Statistics helpers
# --------------------------------------------------------------------------


def summarize(values: list) -> dict:
    t = len(values)
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if t > 1 else 0.0
    half = Z95 * std / math.sqrt(t)
    return {
        "trials": t,
        "mean": mean,
        "std": std,
        "ci95_lo": mean - half,
        "ci95_hi": mean + half,
        "min": min(values),
        "max": max(values),
    }


def proportion(successes: int, trials: int) -> dict:
    lo, hi = wilson_interval(successes, trials)
    p = successes / trials
    return {
        "trials": trials,
        "successes": successes,
        "rate": p,
        "ci95_lo": lo,
        "ci95_hi": hi,
        "stderr": math.sqrt(p * (1 - p) / trials),
    }


def exact_fraud_bound(strategy: FraudStrategy, params: ProtocolParams, v: int) -> float:
    """The theorem bound extended to tau > 1.

    With ``k`` guessable rounds each right with probability ``s`` and the
    remaining rounds always right, success is Pr(Binomial(k, 1-s) < tau).
    At tau = 1 this is the theorem's s^k.
    """
    n, tau = params.n, params.tau
    if strategy.kind is FraudKind.TERRORIST:
        k, s = v, 0.75
    elif strategy.kind is FraudKind.MAFIA and params.protocol is ProtocolId.REID_SPLIT:
        k, s = n, 0.75
    else:
        k, s = n, 0.5
    return float(sum(math.comb(k, e) * (1 - s) ** e * s ** (k - e) for e in range(0, min(k, tau - 1) + 1)))


# --------------------------------------------------------------------------
# Grid points and trial tasks
# --------------------------------------------------------------------------


def _trial_rng(cfg_seed: int, kind: str, point: dict, trial: int) -> RngStream:
    label = "/".join(f"{k}={point[k]}" for k in sorted(point))
    return RngStream(cfg_seed, f"{kind}/{label}/trial={trial}")


def grid_points(cfg: ExperimentConfig) -> list[dict]:
    k = cfg.kind
    if k == "eavesdrop_ideal":
        return [{"n": n, "ber": 0.0, "p": 1.0} for n in cfg.n_values]
    if k == "eavesdrop_noisy":
        return [{"n": n, "ber": q, "p": p} for n, q, p in itertools.product(cfg.n_values, cfg.ber_values, cfg.p_values)]
    if k == "attack_success":
        return [{"n": n, "ber": q} for n, q in itertools.product(cfg.n_values, cfg.ber_values)]
    if k == "threshold_grid":
        return [{"n": n, "omega": w, "rho": r} for n, w, r in itertools.product(cfg.n_values, cfg.omega_values, cfg.rho_values)]
    if k == "hitomi_resistance":
        return [{"n": n, "nonce_bits": b or n} for n, b in itertools.product(cfg.n_values, cfg.nonce_bits_values)]
    points = []
    for s, proto, n, tau in itertools.product(cfg.strategies, cfg.protocols, cfg.n_values, cfg.tau_values):
        vs = [v for v in (cfg.v_values or (n,)) if v <= n] if s == "terrorist" else [n]
        for v in vs:
            points.append({"strategy": s, "protocol": ProtocolId.parse(proto).value, "n": n, "v": v, "tau": resolve_tau(tau, n)})
    return points


def _eavesdrop_trial(cfg: ExperimentConfig, point: dict, t: int) -> tuple:
    rng = _trial_rng(cfg.seed, cfg.kind, point, t)
    n = point["n"]
    params = ProtocolParams(ProtocolId.parse(cfg.protocols[0]), n, prf=cfg.prf)
    tag = TagIdentity.random(rng.child("tag"), n)
    if cfg.kind == "eavesdrop_ideal":
        rep = dictionary_attack_ideal(SessionSource(params, tag), n, rng.child("sessions"))
        return rep.sessions_used, rep.success
    links = LinkPair.symmetric(point["ber"], cfg.ber_mode)
    max_c = 1 if cfg.kind == "attack_success" else None
    rep = dictionary_attack_noisy(
        n, links.forward, links.backward, point.get("p", 1.0), tag.x, rng.child("sessions"),
        params=params, tag_id=tag.id, aggregation=cfg.aggregation, candidate_policy=cfg.candidate_policy,
        session_cap=cfg.session_cap, max_candidates=max_c,
    )
    return rep.sessions_used, rep.success


def _hitomi_trial(cfg: ExperimentConfig, point: dict, t: int) -> tuple:
    rng = _trial_rng(cfg.seed, cfg.kind, point, t)
    n = point["n"]
    params = ProtocolParams(ProtocolId.HITOMI, n, nonce_bits=point["nonce_bits"], prf=cfg.prf)
    tag = TagIdentity.random(rng.child("tag"), n)
    cap = cfg.session_cap or 10**6
    rep = attack_hitomi(SessionSource(params, tag), n, rng.child("sessions"), cap)
    return rep.sessions_used, rep.success, rep.bits_set, rep.bits_set_correct, rep.first_collision


def _fraud_setup(cfg: ExperimentConfig, point: dict):
    n = point["n"]
    params = ProtocolParams(point["protocol"], n, tau=point["tau"], prf=cfg.prf)
    s = point["strategy"]
    if s == "terrorist":
        strategy = FraudStrategy(FraudKind.TERRORIST, known_key_bits=known_bits_mask(n, point["v"]))
    else:
        strategy = FraudStrategy(FraudKind(s))
    return strategy, params


def _fraud_rng(cfg: ExperimentConfig, point: dict) -> RngStream:
    label = "/".join(f"{k}={point[k]}" for k in sorted(point))
    return RngStream(cfg.seed, f"fraud_grid/{label}")


def _run_task(task) -> tuple:
    """Worker entry point: (cfg dict, point index, point, start, stop) -> values."""
    cfg_d, idx, point, start, stop = task
    cfg = ExperimentConfig.from_dict(cfg_d)
    if cfg.kind == "fraud_grid":
        strategy, params = _fraud_setup(cfg, point)
        root = _fraud_rng(cfg, point)
        out = []
        for k in range(start, stop):
            size = min(VECTOR_CHUNK, cfg.trials - k * VECTOR_CHUNK)
            out.append(simulate_chunk(strategy, params, size, root.child(f"chunk{k}")))
        return idx, start, out
    fn = _hitomi_trial if cfg.kind == "hitomi_resistance" else _eavesdrop_trial
    return idx, start, [fn(cfg, point, t) for t in range(start, stop)]


def _tasks(cfg: ExperimentConfig, points: list[dict]) -> list:
    d = cfg.to_dict()
    tasks = []
    for idx, point in enumerate(points):
        if cfg.kind == "fraud_grid":
            units, step = -(-cfg.trials // VECTOR_CHUNK), 1
        else:
            units, step = cfg.trials, TRIAL_CHUNK
        for start in range(0, units, step):
            tasks.append((d, idx, point, start, min(units, start + step)))
    return tasks


def _execute(cfg: ExperimentConfig, points: list[dict], workers: int) -> list[list]:
    tasks = _tasks(cfg, points)
    if workers <= 1 or len(tasks) <= 1:
        done = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_task, tasks))
    per_point: list[dict] = [{} for _ in points]
    for idx, start, values in done:
        per_point[idx][start] = values
    return [[v for s in sorted(chunks) for v in chunks[s]] for chunks in per_point]


# --------------------------------------------------------------------------
# Grid runners
# --------------------------------------------------------------------------


def _result(cfg, columns, rows, t0) -> ExperimentResult:
    return ExperimentResult(cfg.kind, cfg.seed, columns, rows, cfg.to_dict(), __version__, time.perf_counter() - t0)


def run_eavesdrop_grid(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    if cfg.kind not in ("eavesdrop_ideal", "eavesdrop_noisy"):
        raise ConfigError("run_eavesdrop_grid needs kind eavesdrop_ideal or eavesdrop_noisy")
    t0 = time.perf_counter()
    points = grid_points(cfg)
    results = _execute(cfg, points, resolve_workers(cfg, workers))
    rows = []
    for point, vals in zip(points, results):
        s = summarize([v[0] for v in vals])
        rows.append({
            **point,
            "trials": s["trials"],
            "mean_sessions": s["mean"],
            "std_sessions": s["std"],
            "ci95_lo": s["ci95_lo"],
            "ci95_hi": s["ci95_hi"],
            "min_sessions": s["min"],
            "max_sessions": s["max"],
            "successes": sum(bool(v[1]) for v in vals),
            "mean_over_2n": s["mean"] / 2 ** point["n"],
        })
    cols = ["n", "ber", "p", "trials", "mean_sessions", "std_sessions", "ci95_lo", "ci95_hi",
            "min_sessions", "max_sessions", "successes", "mean_over_2n"]
    return _result(cfg, cols, rows, t0)


def run_success_grid(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    if cfg.kind != "attack_success":
        raise ConfigError("run_success_grid needs kind attack_success")
    t0 = time.perf_counter()
    points = grid_points(cfg)
    results = _execute(cfg, points, resolve_workers(cfg, workers))
    rows = []
    for point, vals in zip(points, results):
        pr = proportion(sum(bool(v[1]) for v in vals), len(vals))
        rows.append({**point, "trials": pr["trials"], "successes": pr["successes"], "success_rate": pr["rate"],
                     "ci95_lo": pr["ci95_lo"], "ci95_hi": pr["ci95_hi"]})
    return _result(cfg, ["n", "ber", "trials", "successes", "success_rate", "ci95_lo", "ci95_hi"], rows, t0)


def threshold_row(n: int, omega: float, rho: float) -> dict:
    row = {"n": n, "omega": omega, "rho": rho, "tau": None, "tau_int": None, "tau_over_n": None,
           "p_t": None, "p_a": None, "in_regime": False, "false_accept_bound": None,
           "false_reject_bound": None, "max_loss_bound": None, "error": ""}
    try:
        tau = optimal_threshold_specialized(n, omega, rho)
        p_t, p_a = p_t_bound(omega), p_a_bound(omega)
        row.update(tau=tau, tau_int=integer_threshold(tau), tau_over_n=tau / n, p_t=p_t, p_a=p_a)
        row["in_regime"] = in_regime(n, p_t, p_a, tau)
        if row["in_regime"]:
            fa = hoeffding_false_accept(n, p_a, tau)
            fr = hoeffding_false_reject(n, p_t, tau)
            row.update(false_accept_bound=fa, false_reject_bound=fr, max_loss_bound=max(fa, fr * rho))
        else:
            row["error"] = "outside regime p_t < tau/n < p_a"
    except (ValueError, RegimeError) as exc:
        row["error"] = str(exc)
    return row


def run_threshold_grid(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    if cfg.kind != "threshold_grid":
        raise ConfigError("run_threshold_grid needs kind threshold_grid")
    t0 = time.perf_counter()
    rows = [threshold_row(p["n"], p["omega"], p["rho"]) for p in grid_points(cfg)]
    return _result(cfg, list(rows[0].keys()), rows, t0)


def run_fraud_grid(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    if cfg.kind != "fraud_grid":
        raise ConfigError("run_fraud_grid needs kind fraud_grid")
    t0 = time.perf_counter()
    points = grid_points(cfg)
    results = _execute(cfg, points, resolve_workers(cfg, workers))
    rows = []
    for point, chunks in zip(points, results):
        strategy, params = _fraud_setup(cfg, point)
        pr = proportion(sum(c[0] for c in chunks), cfg.trials)
        rows.append({
            **point,
            "trials": cfg.trials,
            "successes": pr["successes"],
            "p_hat": pr["rate"],
            "ci95_lo": pr["ci95_lo"],
            "ci95_hi": pr["ci95_hi"],
            "stderr": pr["stderr"],
            "mean_rounds_correct": sum(c[1] for c in chunks) / cfg.trials,
            "theorem_bound": theorem_bound(strategy, params),
            "bound": exact_fraud_bound(strategy, params, point["v"]),
        })
    cols = ["strategy", "protocol", "n", "v", "tau", "trials", "successes", "p_hat", "ci95_lo", "ci95_hi",
            "stderr", "mean_rounds_correct", "theorem_bound", "bound"]
    return _result(cfg, cols, rows, t0)


def run_hitomi_grid(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    if cfg.kind != "hitomi_resistance":
        raise ConfigError("run_hitomi_grid needs kind hitomi_resistance")
    t0 = time.perf_counter()
    points = grid_points(cfg)
    results = _execute(cfg, points, resolve_workers(cfg, workers))
    rows = []
    for point, vals in zip(points, results):
        bits_set = sum(v[2] for v in vals)
        firsts = [v[4] for v in vals if v[4] is not None]
        rows.append({
            **point,
            "trials": len(vals),
            "session_cap": cfg.session_cap or 10**6,
            "successes": sum(bool(v[1]) for v in vals),
            "bits_set": bits_set,
            "accuracy": sum(v[3] for v in vals) / bits_set if bits_set else None,
            "collided_trials": len(firsts),
            "median_first_collision": statistics.median(firsts) if firsts else None,
            "birthday_n50": birthday_sessions(point["nonce_bits"], 0.5),
        })
    cols = ["n", "nonce_bits", "trials", "session_cap", "successes", "bits_set", "accuracy",
            "collided_trials", "median_first_collision", "birthday_n50"]
    return _result(cfg, cols, rows, t0)


RUNNERS = {
    "eavesdrop_ideal": run_eavesdrop_grid,
    "eavesdrop_noisy": run_eavesdrop_grid,
    "attack_success": run_success_grid,
    "threshold_grid": run_threshold_grid,
    "fraud_grid": run_fraud_grid,
    "hitomi_resistance": run_hitomi_grid,
}


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg, workers)


def run_and_write(cfg: ExperimentConfig, out_dir=None, workers: Optional[int] = None) -> tuple[ExperimentResult, list[Path]]:
    result = run_experiment(cfg, workers)
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return result, [write_results(result, out, fmt) for fmt in cfg.formats]
