"""Experiment configuration, method runners and sweep orchestration.

A sweep is a grid of cells ``(sweep value, seed)``.  Each cell draws one
channel realization and runs every configured method on it, so the SDR
search is shared by the three SDR-based methods and the rank-one CCCP
result can seed the rank-two run.  Cells run in a process pool and the
records are merged by a fixed sort key before writing, so the CSV is a
pure function of the configuration (except for the ``runtime_s`` column).

Sweep axes
    ``P_T``    values are total budgets in dBm at fixed ``destination_count``
    ``M``      values are destination counts at fixed ``P_T_dbm``
    ``trace``  values are total budgets in dBm; R2-CCCP runs
               ``trace_starts`` random starts for ``trace_iterations``
               iterations and the per-iteration highest and lowest minimum
               SNR over starts are written to ``traces.csv``
"""

import csv
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import cccp, model, scenario, sdr

__all__ = [
    "METHODS",
    "RELAY_METHODS",
    "RESULT_COLUMNS",
    "TRACE_COLUMNS",
    "ConfigError",
    "MethodOptions",
    "ExperimentConfig",
    "ResultRecord",
    "PROFILES",
    "profile",
    "load_config",
    "config_from_dict",
    "rate",
    "run_dsd",
    "run_r1",
    "run_r2",
    "run_cell",
    "sweep",
    "write_results_csv",
    "write_traces_csv",
    "write_manifest",
    "prepare_output_dir",
]

METHODS = ("R2-CCCP", "R1-CCCP", "R2-SDR2D", "R1-SDR2D", "SDR2D-UB", "DSD")
RELAY_METHODS = METHODS[:-1]
SDR_METHODS = ("R2-SDR2D", "R1-SDR2D", "SDR2D-UB")
SWEEP_AXES = ("P_T", "M", "trace")

RESULT_COLUMNS = ["sweep_axis", "sweep_value", "seed", "method", "min_snr_db", "min_rate",
                  "iterations", "sdr_rank", "status", "runtime_s"]
TRACE_COLUMNS = ["sweep_value", "seed", "k", "highest_min_snr_db", "lowest_min_snr_db"]


class ConfigError(ValueError):
    """Malformed configuration; the message names the file, line and field."""


@dataclass(frozen=True)
class MethodOptions:
    """Per-method settings.

    ``n_starts`` random CCCP starts are used in ``P_T`` and ``M`` sweeps;
    R2-CCCP additionally starts from the R1-CCCP solution.  Trace mode uses
    ``trace_starts`` starts and exactly ``trace_iterations`` iterations.
    """

    epsilon: float = 1e-2
    max_iter: int = 50
    n_starts: int = 1
    grid_size: int = 200
    n_candidates: int = 200
    trace_starts: int = 10
    trace_iterations: int = 10

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        for name in ("max_iter", "n_starts", "grid_size", "n_candidates", "trace_starts",
                     "trace_iterations"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one sweep.

    Powers are in dBm; ``geometry`` overrides fields of
    :class:`~relaycast.scenario.NetworkGeometry` other than the counts and
    noise levels, which have their own fields.
    """

    relay_count: int = 10
    destination_count: int = 10
    noise_dbm: float = -132.0
    P_T_dbm: float = 20.0
    source_ratio: float = 0.5
    relay_sum_ratio: float = 1.0 / 3.0
    per_relay_ratio: float = 1.0 / 15.0
    methods: tuple = METHODS
    sweep_axis: str = "P_T"
    sweep_values: tuple = (20.0,)
    seeds: tuple = tuple(range(20))
    options: MethodOptions = field(default_factory=MethodOptions)
    geometry: dict = field(default_factory=dict)
    out: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.methods:
            raise ValueError("methods must not be empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        for name in ("source_ratio", "relay_sum_ratio", "per_relay_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {list(SWEEP_AXES)}")
        if self.sweep_axis == "M" and any(int(v) != v or v < 1 for v in self.sweep_values):
            raise ValueError("M sweep values must be positive integers")
        if int(self.relay_count) < 1 or int(self.destination_count) < 1:
            raise ValueError("relay_count and destination_count must be positive")
        known = {f.name for f in fields(scenario.NetworkGeometry)}
        extra = set(self.geometry) - known
        if extra:
            raise ValueError(f"unknown geometry field(s) {sorted(extra)}")

    # -- derived quantities --------------------------------------------------

    def network(self, M=None):
        g = dict(self.geometry)
        g.update(relay_count=int(self.relay_count),
                 destination_count=int(self.destination_count if M is None else M),
                 noise_nu_dbm=self.noise_dbm, noise_eta_dbm=self.noise_dbm)
        return scenario.NetworkGeometry(**g)

    def budget(self, P_T_dbm=None):
        P_T = float(scenario.dbm_to_watt(self.P_T_dbm if P_T_dbm is None else P_T_dbm))
        return model.PowerBudget.from_total(P_T, self.source_ratio, self.relay_sum_ratio,
                                            self.per_relay_ratio)

    def instance(self, seed, value):
        """(channels, budget) of cell ``(value, seed)``."""
        if self.sweep_axis == "M":
            return scenario.generate(self.network(int(value)), seed), self.budget()
        return scenario.generate(self.network(), seed), self.budget(value)

    def to_dict(self):
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["sweep_values"] = list(self.sweep_values)
        d["seeds"] = list(self.seeds)
        return d

    def digest(self):
        """SHA-256 of the canonical JSON form, output directory excluded."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ResultRecord:
    """One (method, seed, sweep value) outcome."""

    method: str
    seed: int
    sweep_axis: str
    sweep_value: float
    min_snr: float
    runtime_s: float
    iterations: int = 0
    sdr_rank: int = None
    status: str = "ok"

    @property
    def min_snr_db(self):
        return 10.0 * math.log10(self.min_snr) if self.min_snr > 0 else -math.inf

    @property
    def min_rate(self):
        return rate(self.min_snr, self.method)

    def sort_key(self):
        return (float(self.sweep_value), self.seed, METHODS.index(self.method))

    def row(self):
        def num(x):
            return "nan" if x is None or not np.isfinite(x) else f"{x:.10g}"
        return {
            "sweep_axis": self.sweep_axis,
            "sweep_value": f"{self.sweep_value:g}",
            "seed": self.seed,
            "method": self.method,
            "min_snr_db": num(self.min_snr_db) if self.min_snr > 0 else "nan",
            "min_rate": num(self.min_rate),
            "iterations": self.iterations,
            "sdr_rank": "" if self.sdr_rank is None else self.sdr_rank,
            "status": self.status,
            "runtime_s": f"{self.runtime_s:.3f}",
        }


# -- profiles and config files -----------------------------------------------

PROFILES = {
    "smoke": dict(relay_count=4, destination_count=8, P_T_dbm=20.0, sweep_axis="P_T",
                  sweep_values=(20.0,), seeds=(0, 1, 2),
                  options=MethodOptions(grid_size=50, n_candidates=100, n_starts=2,
                                        trace_starts=3, trace_iterations=5)),
    "desk": dict(relay_count=10, destination_count=10, P_T_dbm=5.0, sweep_axis="M",
                 sweep_values=(10, 25, 50), seeds=tuple(range(20)),
                 options=MethodOptions()),
    "full": dict(relay_count=10, destination_count=100, P_T_dbm=5.0, sweep_axis="M",
                 sweep_values=(10, 40, 70, 100, 130), seeds=tuple(range(20)),
                 options=MethodOptions()),
}


def profile(name, **overrides):
    """Built-in configuration ``name`` with keyword overrides."""
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    kw = dict(PROFILES[name])
    kw.update(overrides)
    return ExperimentConfig(**kw)


def config_from_dict(data, base=None, source="<dict>", lines=None):
    """Overlay a parsed mapping on ``base`` (default: the desk profile).

    ``lines`` maps top-level (and ``options.``-prefixed) keys to line
    numbers for diagnostics.
    """
    lines = lines or {}
    base = base if base is not None else profile("desk")

    def fail(key, msg):
        where = f"{source}:{lines[key]}" if key in lines else source
        raise ConfigError(f"{where}: field '{key}': {msg}")

    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    top = {f.name for f in fields(ExperimentConfig)}
    opt_names = {f.name for f in fields(MethodOptions)}
    kw = {}
    for key, value in data.items():
        if key not in top:
            fail(key, f"unknown field; expected one of {sorted(top)}")
        if key == "options":
            if not isinstance(value, dict):
                fail(key, "must be a mapping")
            for ok in value:
                if ok not in opt_names:
                    fail(f"options.{ok}", f"unknown option; expected one of {sorted(opt_names)}")
            try:
                kw["options"] = replace(base.options, **value)
            except (TypeError, ValueError) as exc:
                fail(key, str(exc))
        else:
            kw[key] = value
    # validate field by field so the failing key can be reported
    cfg = base
    for key, value in kw.items():
        try:
            cfg = replace(cfg, **{key: value})
        except (TypeError, ValueError) as exc:
            fail(key, str(exc))
    return cfg


def load_config(path, base=None):
    """Read a YAML configuration file.

    Raises
    ------
    ConfigError
        With ``path:line`` of the offending field.
    """
    import yaml

    with open(path) as fh:
        text = fh.read()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            lines[k.value] = k.start_mark.line + 1
            if k.value == "options" and isinstance(v, yaml.MappingNode):
                for ok, _ in v.value:
                    lines[f"options.{ok.value}"] = ok.start_mark.line + 1
    return config_from_dict(data, base, str(path), lines)


# -- methods -----------------------------------------------------------------

def rate(snr, method):
    """Achievable rate in bits/slot/Hz: relay schemes use four slots per pair."""
    if not snr > 0:
        return 0.0
    factor = 1.0 if method == "DSD" else 0.5
    return factor * math.log2(1.0 + snr)


def dsd_power(budget):
    """Per-symbol transmit power of the direct-only baseline."""
    caps = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    if not caps:
        raise ValueError("direct transmission needs a source or total budget")
    return min(caps) / 4.0


def run_dsd(data, budget):
    """Minimum SNR of direct source-destination transmission."""
    return float(np.min(dsd_power(budget) * data.d_sq / data.sigma_nu_sq))


def _cccp_options(opts, seed, rank, **kw):
    return cccp.CccpOptions(epsilon=opts.epsilon, max_iter=opts.max_iter, seed=seed,
                            n_starts=opts.n_starts, rank=rank, **kw)


def run_r1(data, budget, opts=None, seed=0):
    """Rank-one CCCP; the second weight block is identically zero.

    Returns the :class:`~relaycast.cccp.CccpReport` of the best start.
    """
    opts = opts or MethodOptions()
    return cccp.run(data, budget, _cccp_options(opts, seed, 1))


def run_r2(data, budget, opts=None, seed=0, r1=None):
    """Rank-two CCCP from ``n_starts`` random starts plus the R1 solution.

    Starting from a rank-one point keeps the result at least as good as
    the rank-one scheme.
    """
    opts = opts or MethodOptions()
    if r1 is None:
        return cccp.run(data, budget, _cccp_options(opts, seed, 2))
    sol = r1.solution
    o = _cccp_options(opts, seed, 2, initial=(sol.w, sol.a))
    o = replace(o, n_starts=opts.n_starts + 1)
    return cccp.run(data, budget, o)


def _record(cfg, method, seed, value, snr, runtime, **kw):
    return ResultRecord(method, seed, cfg.sweep_axis, float(value), float(snr), runtime, **kw)


def _failed(cfg, method, seed, value, runtime, exc):
    msg = f"error: {type(exc).__name__}"
    return _record(cfg, method, seed, value, math.nan, runtime, status=msg)


def _trace_rows(cfg, data, budget, seed, value):
    """Highest and lowest min SNR over starts after every iteration."""
    o = cfg.options
    rep = cccp.run(data, budget, cccp.CccpOptions(epsilon=0.0, max_iter=o.trace_iterations,
                                                  seed=seed, n_starts=o.trace_starts))
    K = o.trace_iterations
    table = np.empty((len(rep.traces), K + 1))
    for i, tr in enumerate(rep.traces):
        vals = [e.min_snr_db for e in tr]
        # a start that stopped early keeps its final value
        table[i] = vals[: K + 1] + [vals[-1]] * (K + 1 - len(vals))
    rows = [{"sweep_value": f"{value:g}", "seed": seed, "k": k,
             "highest_min_snr_db": f"{table[:, k].max():.10g}",
             "lowest_min_snr_db": f"{table[:, k].min():.10g}"} for k in range(K + 1)]
    return rep, rows


def run_cell(cfg, seed, value, artifacts=None):
    """Run every configured method on one instance.

    ``artifacts``, when a dict, receives the intermediate objects: the
    problem ``data`` and ``budget``, the relaxed search outcome ``sdr`` and
    the CCCP reports ``r1`` and ``r2`` (whichever were computed).

    Returns
    -------
    records : list of ResultRecord
    trace_rows : list of dict
        Non-empty in trace mode only.
    """
    channels, budget = cfg.instance(seed, value)
    data = model.build(channels)
    o = cfg.options
    want = set(cfg.methods)
    out, trace_rows = [], []
    keep = artifacts if artifacts is not None else {}
    keep.update(data=data, budget=budget)

    if want & set(SDR_METHODS):
        t0 = time.perf_counter()
        try:
            res = sdr.search(data, budget, grid_size=o.grid_size, eps=o.epsilon)
        except Exception as exc:  # noqa: BLE001  recorded, not fatal
            res = exc
        t_search = time.perf_counter() - t0
        keep["sdr"] = res
        for method, mode in (("R2-SDR2D", "rank2"), ("R1-SDR2D", "rank1")):
            if method not in want:
                continue
            if isinstance(res, Exception):
                out.append(_failed(cfg, method, seed, value, t_search, res))
                continue
            t1 = time.perf_counter()
            try:
                sol, how = sdr.recover(res, data, budget, mode, o.n_candidates, seed)
                snr, _ = model.min_snr(sol.w, sol.a, data)
                rec = _record(cfg, method, seed, value, snr,
                              t_search + time.perf_counter() - t1, iterations=res.n_sdp,
                              sdr_rank=res.rank, status=how)
            except Exception as exc:  # noqa: BLE001
                rec = _failed(cfg, method, seed, value, t_search + time.perf_counter() - t1, exc)
            out.append(rec)
        if "SDR2D-UB" in want:
            if isinstance(res, Exception):
                out.append(_failed(cfg, "SDR2D-UB", seed, value, t_search, res))
            else:
                out.append(_record(cfg, "SDR2D-UB", seed, value, res.bound_snr, t_search,
                                   iterations=res.n_sdp, sdr_rank=res.rank, status=res.status))

    r1, t_r1 = None, 0.0
    if "R1-CCCP" in want or ("R2-CCCP" in want and cfg.sweep_axis != "trace"):
        t0 = time.perf_counter()
        try:
            r1 = run_r1(data, budget, o, seed)
            keep["r1"] = r1
            rec = _record(cfg, "R1-CCCP", seed, value, model.min_snr(r1.solution.w, r1.solution.a,
                                                                     data)[0],
                          time.perf_counter() - t0, iterations=r1.iterations, status=r1.reason)
        except Exception as exc:  # noqa: BLE001
            rec = _failed(cfg, "R1-CCCP", seed, value, time.perf_counter() - t0, exc)
        t_r1 = rec.runtime_s
        if "R1-CCCP" in want:
            out.append(rec)

    if "R2-CCCP" in want:
        # the rank-one run that seeds R2 is part of its end-to-end time
        t0 = time.perf_counter() - (t_r1 if r1 is not None else 0.0)
        try:
            if cfg.sweep_axis == "trace":
                r2, trace_rows = _trace_rows(cfg, data, budget, seed, value)
            else:
                r2 = run_r2(data, budget, o, seed, r1)
            keep["r2"] = r2
            snr, _ = model.min_snr(r2.solution.w, r2.solution.a, data)
            rec = _record(cfg, "R2-CCCP", seed, value, snr, time.perf_counter() - t0,
                          iterations=r2.iterations, status=r2.reason)
        except Exception as exc:  # noqa: BLE001
            rec = _failed(cfg, "R2-CCCP", seed, value, time.perf_counter() - t0, exc)
        out.append(rec)

    if "DSD" in want:
        t0 = time.perf_counter()
        out.append(_record(cfg, "DSD", seed, value, run_dsd(data, budget),
                           time.perf_counter() - t0))
    return out, trace_rows


def _cell_job(args):
    cfg, seed, value = args
    return run_cell(cfg, seed, value)


def prepare_output_dir(out):
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out!r} is not writable")


def sweep(cfg, jobs=1, out=None, write=True):
    """Run the whole grid of cells.

    Parameters
    ----------
    cfg : ExperimentConfig
    jobs : int
        Worker processes; 1 runs in-process.
    out : str, optional
        Output directory (default ``cfg.out``).
    write : bool
        Write ``results.csv``, ``traces.csv`` (trace mode) and
        ``manifest.json``.

    Returns
    -------
    records : list of ResultRecord
        Sorted by (sweep value, seed, method).
    trace_rows : list of dict
    """
    out = cfg.out if out is None else out
    if write:
        prepare_output_dir(out)
    cells = [(cfg, seed, value) for value in cfg.sweep_values for seed in cfg.seeds]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, cells))
    else:
        results = [_cell_job(c) for c in cells]
    records = sorted((r for recs, _ in results for r in recs), key=ResultRecord.sort_key)
    trace_rows = sorted((row for _, rows in results for row in rows),
                        key=lambda r: (float(r["sweep_value"]), r["seed"], r["k"]))
    if write:
        write_results_csv(records, os.path.join(out, "results.csv"))
        files = ["results.csv"]
        if cfg.sweep_axis == "trace":
            write_traces_csv(trace_rows, os.path.join(out, "traces.csv"))
            files.append("traces.csv")
        write_manifest(cfg, os.path.join(out, "manifest.json"), verb="sweep", files=files)
    return records, trace_rows


# -- output --------------------------------------------------------------------

def write_results_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def write_traces_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _versions():
    import scipy

    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:  # noqa: BLE001  running from a source tree
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "artifact": pkg}


def write_manifest(cfg, path, verb, files=(), extra=None):
    """Machine-readable run description (config, digest, seeds, versions)."""
    doc = {
        "verb": verb,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seeds": list(cfg.seeds),
        "files": list(files),
        "versions": _versions(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
