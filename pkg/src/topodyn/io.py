"""File formats: run configs, scenarios, states, trajectories, events and summaries.

Every index written to or read from a file is 1-based.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis
from .dynamics import SimConfig, Trajectory, rhs
from .perturbation_lab import KINDS, METRIC, TOPOLOGICAL, ExperimentReport, Scenario
from .topology import OpinionState

SCHEMA_VERSION = 1
OUT_ENV = "TOPODYN_OUT"
ARTIFACTS = ("trajectory", "events", "summary", "plot")


class ConfigError(ValueError):
    """A config, scenario or state document is malformed."""

    def __init__(self, source, message, field=None, line=None):
        self.source = str(source)
        self.field = field
        self.line = line
        where = self.source
        if line is not None:
            where += f":{line}"
        if field is not None:
            where += f": field '{field}'"
        super().__init__(f"{where}: {message}")


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, f"cannot read file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"{exc.msg} (column {exc.colno})", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigError(path, "top level must be an object")
    return doc


class _Fields:
    """Typed access to a JSON object with error messages naming the field path."""

    def __init__(self, source, doc, prefix=""):
        self.source = source
        self.doc = doc
        self.prefix = prefix

    def path(self, key):
        return f"{self.prefix}{key}"

    def fail(self, key, msg):
        raise ConfigError(self.source, msg, field=self.path(key))

    def has(self, key):
        return key in self.doc

    def get(self, key, kind, default=None, required=False):
        if key not in self.doc:
            if required:
                self.fail(key, "is required")
            return default
        v = self.doc[key]
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(key, f"expected an integer, got {v!r}")
        elif kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(key, f"expected a number, got {v!r}")
            v = float(v)
        elif kind is str:
            if not isinstance(v, str):
                self.fail(key, f"expected a string, got {v!r}")
        elif kind is list:
            if not isinstance(v, list):
                self.fail(key, f"expected a list, got {v!r}")
        elif kind is dict:
            if not isinstance(v, dict):
                self.fail(key, f"expected an object, got {v!r}")
        return v

    def sub(self, key, required=False):
        d = self.get(key, dict, required=required)
        return None if d is None else _Fields(self.source, d, f"{self.path(key)}.")


def parse_opinion(v):
    """A number, or a rational written as a string such as ``"2/5"``."""
    if isinstance(v, bool):
        raise ValueError(f"not an opinion: {v!r}")
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        return Fraction(v)
    raise ValueError(f"not an opinion: {v!r}")


def _opinions(f: _Fields, key):
    raw = f.get(key, list, required=True)
    if not raw:
        f.fail(key, "must not be empty")
    try:
        vals = [parse_opinion(v) for v in raw]
    except (ValueError, ZeroDivisionError) as exc:
        f.fail(key, str(exc))
    if any(isinstance(v, Fraction) for v in vals):
        if any(isinstance(v, float) for v in vals):
            f.fail(key, "cannot mix exact rationals with floating-point numbers")
        arr = np.empty(len(vals), dtype=object)
        arr[:] = [Fraction(v) for v in vals]
        return arr
    return np.array(vals, dtype=np.float64)


def random_opinions(count: int, seed: int) -> np.ndarray:
    """Uniform [0, 1) opinions from numpy's PCG64 generator seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed)).uniform(0.0, 1.0, count)


def _sim_config(f: _Fields | None, base: SimConfig | None = None) -> SimConfig:
    base = base or SimConfig()
    if f is None:
        return base
    kw = {}
    for key in ("step", "t_max", "conv_tol", "stall_window", "record_every"):
        v = f.get(key, float)
        if v is not None:
            kw[key] = v
    m = f.get("method", str)
    if m is not None:
        kw["method"] = m
    try:
        return SimConfig(**{**base.__dict__, **kw})
    except ValueError as exc:
        raise ConfigError(f.source, str(exc), field=f.prefix.rstrip(".") or "sim") from exc


@dataclass
class RunConfig:
    model: str
    state: OpinionState
    sim: SimConfig
    radius: float | None = None
    outputs: tuple = ARTIFACTS
    eps: float = 1e-6
    tol: float = 1e-9
    out: str | None = None
    seed: int | None = None
    source: str = "<memory>"
    init: dict = field(default_factory=dict)


def _schema(f: _Fields):
    v = f.get("schema_version", int, default=SCHEMA_VERSION)
    if v != SCHEMA_VERSION:
        f.fail("schema_version", f"unsupported version {v}; this build reads {SCHEMA_VERSION}")


def _model(f: _Fields):
    model = f.get("model", str, default=TOPOLOGICAL)
    if model not in (TOPOLOGICAL, METRIC):
        f.fail("model", f"must be '{TOPOLOGICAL}' or '{METRIC}'")
    radius = f.get("radius", float)
    if model == METRIC and (radius is None or radius <= 0):
        f.fail("radius", "metric model needs a positive radius")
    return model, radius


def _initial_state(f: _Fields, k_field: _Fields, base_dir: Path, seed_override=None):
    init = f.sub("init", required=True)
    sources = [s for s in ("opinions", "random", "file") if init.has(s)]
    if len(sources) != 1:
        f.fail("init", "needs exactly one of 'opinions', 'random', 'file'")
    src = sources[0]
    k = k_field.get("k", int)
    seed = None
    if src == "opinions":
        x = _opinions(init, "opinions")
    elif src == "random":
        r = init.sub("random")
        count = r.get("count", int, required=True)
        if count < 2:
            r.fail("count", "must be at least 2")
        seed = r.get("seed", int, default=0)
        if seed_override is not None:
            seed = seed_override
        x = random_opinions(count, seed)
    else:
        rel = init.get("file", str)
        path = base_dir / rel
        if not path.exists():
            init.fail("file", f"referenced file {rel!r} does not exist")
        state = read_state(path)
        x = state.x
        if k is None:
            k = state.k
    if k is None:
        k_field.fail("k", "is required")
    try:
        state = OpinionState.from_values(x, k)
    except ValueError as exc:
        k_field.fail("k", str(exc))
    return state, src, seed


def load_run_config(path, seed=None, out=None) -> RunConfig:
    path = Path(path)
    f = _Fields(path, load_document(path))
    _schema(f)
    model, radius = _model(f)
    state, src, used_seed = _initial_state(f, f, path.parent, seed)
    sim = _sim_config(f.sub("sim"))
    outputs = tuple(f.get("outputs", list, default=list(ARTIFACTS)))
    for o in outputs:
        if o not in ARTIFACTS:
            f.fail("outputs", f"unknown artifact {o!r}; expected some of {list(ARTIFACTS)}")
    a = f.sub("analysis")
    eps = a.get("eps", float, default=1e-6) if a else 1e-6
    tol = a.get("tol", float, default=sim.conv_tol) if a else sim.conv_tol
    return RunConfig(
        model=model,
        state=state,
        sim=sim,
        radius=radius,
        outputs=outputs,
        eps=eps,
        tol=tol,
        out=out or f.get("out", str),
        seed=used_seed,
        source=str(path),
        init={"source": src, "seed": used_seed},
    )


def load_scenario(path):
    """Read a scenario document; returns ``(Scenario, SimConfig, outputs)``."""
    path = Path(path)
    f = _Fields(path, load_document(path))
    _schema(f)
    kind = f.get("scenario", str, required=True)
    if kind not in KINDS:
        f.fail("scenario", f"must be one of {list(KINDS)}")
    models = f.get("models", list, default=[TOPOLOGICAL])
    for m in models:
        if m not in (TOPOLOGICAL, METRIC):
            f.fail("models", f"unknown model {m!r}")
    radius = f.get("radius", float)
    if (METRIC in models or kind == "contrast") and (radius is None or radius <= 0):
        f.fail("radius", "metric runs need a positive radius")
    k = f.get("k", int, required=True)

    clusters = f.get("clusters", list)
    if clusters is not None:
        if f.has("init"):
            f.fail("init", "give either 'clusters' or 'init', not both")
        sizes, values = [], []
        for n_c, c in enumerate(clusters):
            if not isinstance(c, dict):
                f.fail("clusters", "entries must be objects")
            cf = _Fields(path, c, f"clusters[{n_c}].")
            sizes.append(cf.get("size", int, required=True))
            values.append(cf.get("value", float, required=True))
        base = analysis.clusterization(sizes, values, k)
    else:
        base, _, _ = _initial_state(f, f, path.parent)

    def one_based(key):
        v = f.get(key, int)
        if v is None:
            return None
        if not 1 <= v <= base.n:
            f.fail(key, f"agent index {v} outside 1..{base.n}")
        return v - 1

    cluster = f.get("cluster", list)
    if cluster is not None:
        if not all(isinstance(c, int) and 1 <= c <= base.n for c in cluster):
            f.fail("cluster", f"agent indices must be integers in 1..{base.n}")
        cluster = tuple(c - 1 for c in cluster)
    kw = dict(
        kind=kind,
        base=base,
        models=tuple(models),
        radius=radius,
        magnitude=f.get("magnitude", float, default=0.0),
        seed=f.get("seed", int, default=0),
        opinion=f.get("opinion", float),
        agent=one_based("agent"),
        cluster=cluster,
        eps=f.get("eps", float, default=0.01),
        eps_cluster=f.get("eps_cluster", float, default=1e-6),
        tol=f.get("tol", float, default=1e-9),
    )
    try:
        sc = Scenario(**kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    outputs = tuple(f.get("outputs", list, default=["summary"]))
    return sc, _sim_config(f.sub("sim")), outputs


def read_state(path, k=None) -> OpinionState:
    """A JSON state ``{"k": .., "opinions": [..]}`` or the last row of a trajectory CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        times, values = read_trajectory(path)
        if k is None:
            raise ConfigError(path, "a trajectory file carries no k; pass it explicitly")
        return OpinionState.from_values(values[-1], k)
    f = _Fields(path, load_document(path))
    _schema(f)
    x = _opinions(f, "opinions")
    kk = k if k is not None else f.get("k", int, required=True)
    try:
        return OpinionState.from_values(x, kk)
    except ValueError as exc:
        raise ConfigError(path, str(exc), field="k") from exc


def _opinion_json(v):
    if isinstance(v, Fraction):
        return str(v)
    return float(v)


def write_state(path, state: OpinionState):
    doc = {"schema_version": SCHEMA_VERSION, "k": state.k, "opinions": [_opinion_json(v) for v in state.x]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_trajectory(path, traj: Trajectory):
    n = traj.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)])
        for t, row in zip(traj.times, traj.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_trajectory(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(path, "empty trajectory file")
    header = rows[0]
    if not header or header[0] != "t":
        raise ConfigError(path, "header must start with 't'", line=1)
    n = len(header) - 1
    times, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + 1:
            raise ConfigError(path, f"expected {n + 1} columns, got {len(row)}", line=lineno)
        try:
            times.append(float(row[0]))
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ConfigError(path, str(exc), line=lineno) from exc
    return np.array(times), np.array(values).reshape(len(values), n)


def write_events(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "agent", "before", "after"])
        for e in events:
            w.writerow([
                repr(float(e.t)),
                e.agent + 1,
                " ".join(str(j + 1) for j in e.before),
                " ".join(str(j + 1) for j in e.after),
            ])


def read_events(path):
    """``(t, agent)`` pairs from an events CSV, agents 0-based."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(float(r[0]), int(r[1]) - 1) for r in rows[1:]]


def partition_doc(p: analysis.ClusterPartition):
    return [
        {"value": _opinion_json(v), "size": len(m), "members": sorted(i + 1 for i in m)}
        for v, m in p.clusters
    ]


def class_doc(sc: analysis.StateClass, k: int, metric: bool = False):
    doc = {
        "kind": sc.kind,
        "cluster_count": len(sc.partition),
        "cluster_sizes": sc.partition.sizes,
        "clusters": partition_doc(sc.partition),
    }
    if not metric and min(sc.partition.sizes) >= k + 1:
        doc["structurally_stable"] = analysis.is_structurally_stable(sc.partition, k)
        doc["removal_stable"] = analysis.is_removal_stable(sc.partition, k)
    else:
        doc["structurally_stable"] = None
        doc["removal_stable"] = None
    return doc


def simulation_summary(cfg: RunConfig, traj: Trajectory, sc: analysis.StateClass):
    return {
        "schema_version": SCHEMA_VERSION,
        "model": cfg.model,
        "n": traj.n,
        "k": cfg.state.k,
        "radius": cfg.radius,
        "init": cfg.init,
        "status": traj.status,
        "t_final": traj.t_final,
        "convergence_time": traj.t_final if traj.converged else None,
        "event_count": len(traj.events),
        "eps": cfg.eps,
        "tol": cfg.tol,
        "final": class_doc(sc, cfg.state.k, metric=cfg.model == METRIC),
    }


def analysis_summary(state: OpinionState, sc: analysis.StateClass, eps, tol, source=None):
    sup = max(abs(v) for v in rhs(state))
    return {
        "schema_version": SCHEMA_VERSION,
        "source": None if source is None else str(source),
        "n": state.n,
        "k": state.k,
        "exact": state.exact,
        "eps": eps,
        "tol": tol,
        "rhs_sup": _opinion_json(sup),
        "diameter": _opinion_json(analysis.diameter(state)),
        **class_doc(sc, state.k),
    }


def report_doc(report: ExperimentReport, scenario: Scenario):
    runs = []
    for r in report.runs:
        metric = r.model == METRIC
        runs.append({
            "model": r.model,
            "status": r.status,
            "t_final": r.t_final,
            "event_count": r.event_count,
            "original_agents_moved": r.original_agents_moved,
            "partition_preserved": r.partition_preserved,
            "initial_rhs_sup": r.initial_rhs_sup,
            "base": class_doc(r.base, scenario.base.k, metric),
            "initial": class_doc(r.initial, scenario.base.k, metric),
            "final": class_doc(r.final, scenario.base.k, metric),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": report.scenario,
        "k": scenario.base.k,
        "radius": scenario.radius,
        "newcomer_index": None if report.newcomer_index is None else report.newcomer_index + 1,
        "perturbation_magnitude": report.perturbation_magnitude,
        "partition_preserved": report.partition_preserved,
        "original_agents_moved": report.original_agents_moved,
        "runs": runs,
    }


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def output_dir(flag=None, configured=None) -> Path:
    """Flag, then config value, then ``$TOPODYN_OUT``, then the working directory."""
    chosen = flag or configured or os.environ.get(OUT_ENV) or "."
    p = Path(chosen)
    p.mkdir(parents=True, exist_ok=True)
    return p
