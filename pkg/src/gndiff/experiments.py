"""Configuration, presets, reproduction runs and drift-order studies."""
from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import numerics as nx
from .attention import freeze_softmax, similarity
from .charges import charge_y, commutes, skew_basis
from .dynamics import Model, hamiltonian
from .errors import ConfigError, GndiffError, UnknownPreset, UnsupportedVariant
from .graph_model import ActivationFn, AttentionParams, Graph, PhaseVector, assemble_W, validate_graph
from .integrators import GridSpec, SolverConfig, Trajectory, integrate, prepare_state, step

NAMED_W = {
    "W1": np.diag([1e-3, 1e-3, 1e-3, 1e-3]),
    "W2": np.diag([1e-3, 1e-3, 1.0, 1.0]),
}
X0_REFERENCE = [[0.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]
PRESETS = ("fig1-fe", "fig1-im", "fig2-fe", "fig2-im")


def load_schema() -> dict:
    text = resources.files("gndiff").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def preset(name: str) -> "ExperimentConfig":
    """The reference three-node experiments.

    ``fig1-*`` use ``W = 1e-3 I_4`` and ``fig2-*`` use ``W = diag(1e-3,
    1e-3, 1, 1)``; ``*-fe`` is forward Euler, ``*-im`` the left-point
    (modified) implicit midpoint rule.
    """
    if name not in PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; expected one of {PRESETS}", preset=name)
    fig, meth = name.split("-")
    raw = {
        "name": name,
        "graph": {"n": 3, "edges": "complete"},
        "d": 4,
        "epsilon": 0.1,
        "grid": {"t0": 0.0, "t1": 1.0, "N": 50},
        "solver": {"method": "fe" if meth == "fe" else "im-left"},
        "attention": {
            "variant": "scaled-dot",
            "activation": "softmax",
            "normalization": "symmetric",
            "W": "W1" if fig == "fig1" else "W2",
        },
        "initial": {"x": copy.deepcopy(X0_REFERENCE), "p": "zero"},
        "charges": "all",
        "seed": 0,
    }
    return ExperimentConfig.from_dict(raw)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A validated configuration document (see ``data/config.schema.json``)."""

    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as err:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {err.message}", path=where) from None
        cfg = cls(copy.deepcopy(raw))
        cfg._check()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as err:
            raise ConfigError(f"cannot read {path}: {err.strerror}", path=str(path)) from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})", path=str(path)) from None
        raw.setdefault("name", path.stem)
        return cls.from_dict(raw)

    def with_overrides(self, **solver) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.setdefault("solver", {}).update({k: v for k, v in solver.items() if v is not None})
        return ExperimentConfig.from_dict(raw)

    # --- accessors ---

    @property
    def name(self) -> str:
        return self.raw.get("name", "run")

    @property
    def n(self) -> int:
        return self.raw["graph"]["n"]

    @property
    def d(self) -> int:
        return self.raw["d"]

    @property
    def epsilon(self) -> float:
        return float(self.raw["epsilon"])

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def graph(self) -> Graph:
        edges = self.raw["graph"].get("edges", "complete")
        g = Graph.complete(self.n) if edges == "complete" else Graph.from_edges(self.n, edges)
        return validate_graph(g)

    def grid(self) -> GridSpec:
        gr = self.raw["grid"]
        return GridSpec(float(gr["t0"]), float(gr["t1"]), int(gr["N"]))

    def solver(self) -> SolverConfig:
        return SolverConfig(**self.raw.get("solver", {}))

    def W(self) -> np.ndarray:
        att = self.raw["attention"]
        if "W" in att:
            W = att["W"]
            return NAMED_W[W].copy() if isinstance(W, str) else np.asarray(W, dtype=float)
        return assemble_W(self._base_params(None))

    def x0(self) -> np.ndarray:
        return np.asarray(self.raw["initial"]["x"], dtype=float)

    def p0(self) -> np.ndarray:
        p = self.raw["initial"].get("p", "zero")
        if p == "zero":
            return np.zeros((self.n, self.d))
        if p == "random":
            return np.random.default_rng(self.seed).standard_normal((self.n, self.d))
        return np.asarray(p, dtype=float)

    def initial_state(self) -> PhaseVector:
        return PhaseVector(self.x0(), self.p0(), self.grid().t0, self.epsilon)

    def _base_params(self, W) -> AttentionParams:
        att = self.raw["attention"]
        return AttentionParams(
            W_K=None if "W_K" not in att else np.asarray(att["W_K"], dtype=float),
            W_Q=None if "W_Q" not in att else np.asarray(att["W_Q"], dtype=float),
            variant=att.get("variant", "scaled-dot"),
            sigma_scale=float(att.get("sigma_scale", 1.0)),
            W_sym=W,
        )

    def params(self) -> AttentionParams:
        att = self.raw["attention"]
        p = self._base_params(self.W())
        tag = att.get("activation", "softmax")
        norm = att.get("normalization", "symmetric")
        clamp = att.get("clamp")
        if tag == "frozen-softmax":
            f = freeze_softmax(similarity(self.x0(), p, self.graph()), self.graph(), norm, clamp)
        else:
            f = ActivationFn(tag, normalization=norm, clamp=clamp)
        return p.with_activation(f)

    def model(self) -> Model:
        return Model(self.graph(), self.params())

    def generators(self):
        basis = skew_basis(self.d)
        sel = self.raw.get("charges", "all")
        if sel == "all":
            return basis
        wanted = {tuple(ab) for ab in sel}
        return [R for R in basis if (R.a, R.b) in wanted]

    # --- semantic checks not expressible in the schema ---

    def _check(self):
        n, d, raw = self.n, self.d, self.raw
        gr = raw["grid"]
        if not gr["t1"] > gr["t0"]:
            raise ConfigError("grid: t1 must exceed t0", path="grid")
        edges = raw["graph"].get("edges", "complete")
        if edges != "complete":
            for i, j in edges:
                if i >= n or j >= n:
                    raise ConfigError(f"graph: edge ({i}, {j}) outside 0..{n - 1}", path="graph/edges")
                if i == j:
                    raise ConfigError(f"graph: self loop at node {i}", path="graph/edges")
        for key in ("x", "p"):
            v = raw["initial"].get(key)
            if isinstance(v, list) and np.shape(v) != (n, d):
                raise ConfigError(f"initial/{key}: shape {np.shape(v)} != ({n}, {d})", path=f"initial/{key}")
        att = raw["attention"]
        if ("W_K" in att) != ("W_Q" in att):
            raise ConfigError("attention: W_K and W_Q must be given together", path="attention")
        if "W" not in att and "W_K" not in att:
            raise ConfigError("attention: need W or W_K/W_Q", path="attention")
        if att.get("variant", "scaled-dot") != "scaled-dot":
            raise UnsupportedVariant(
                f"attention/variant: the dynamics need scaled-dot similarity, got {att['variant']!r}",
                path="attention/variant",
            )
        if "W_K" in att:
            K, Q = np.asarray(att["W_K"], float), np.asarray(att["W_Q"], float)
            if K.ndim != 2 or K.shape != Q.shape or K.shape[1] != d:
                raise ConfigError(f"attention: W_K {K.shape} and W_Q {Q.shape} must both be d' x {d}", path="attention")
        if "W" in att:
            W = self.W()
            if W.shape != (d, d):
                raise ConfigError(f"attention/W: shape {W.shape} != ({d}, {d})", path="attention/W")
            if np.max(np.abs(W - W.T)) > 0:
                raise ConfigError("attention/W: matrix is not symmetric", path="attention/W")
            if "W_K" in att:
                W_kq = assemble_W(self._base_params(None))
                if np.max(np.abs(W_kq - W)) > 1e-12:
                    raise ConfigError("attention: W disagrees with W_K^T W_Q + W_Q^T W_K", path="attention/W")
        sel = raw.get("charges", "all")
        if sel != "all":
            for a, b in sel:
                if not 1 <= b < a <= d:
                    raise ConfigError(f"charges: ({a}, {b}) is not a generator index for d={d}", path="charges")
        try:
            self.graph()
            self.solver()
        except GndiffError as err:
            raise ConfigError(str(err), path="graph") from None
        except ValueError as err:
            raise ConfigError(f"solver: {err}", path="solver") from None


# --- runs ------------------------------------------------------------------------

def fmt(v) -> str:
    return f"{float(v):.17g}"


def csv_header(n: int, d: int) -> list[str]:
    m = d * (d - 1) // 2
    cols = ["step", "t"] + [f"Q{k}" for k in range(1, m + 1)] + ["H", "dH_dt"]
    cols += [f"x{i}_{c}" for i in range(n) for c in range(d)]
    cols += [f"p{i}_{c}" for i in range(n) for c in range(d)]
    return cols


def trace_rows(traj: Trajectory, model: Model) -> list[list[str]]:
    """One CSV row per grid point (charges of the full basis, H, dH/dt, x, p)."""
    basis = skew_basis(model.d)
    rows = []
    with nx.precision(traj.dps):
        for k, s in enumerate(traj.states):
            Q = [charge_y(s, R) for R in basis]
            H, dH = hamiltonian(s, model.graph, model.params)
            row = [str(k), fmt(s.t)] + [fmt(q) for q in Q] + [fmt(H), fmt(dH)]
            row += [fmt(v) for v in np.asarray(s.x).reshape(-1)]
            row += [fmt(v) for v in np.asarray(s.m).reshape(-1)]
            rows.append(row)
    return rows


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_trace(path) -> dict:
    """Columns of a trace CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = np.array([[float(v) for v in row] for row in rd])
    return {h: data[:, j] for j, h in enumerate(header)}


def drifts_from_columns(cols: dict, labels) -> dict:
    return {lab: float(np.max(np.abs(cols[lab] - cols[lab][0]))) for lab in labels}


@dataclass
class RunArtifacts:
    csv_path: Path
    svg_paths: list
    summary: dict = field(default_factory=dict)
    trajectory: Trajectory | None = None


def run(cfg: ExperimentConfig, out_dir=None, plots: bool | None = None) -> RunArtifacts:
    """Integrate, write the trace CSV (and SVG plots) and build the summary."""
    out = Path(out_dir if out_dir is not None else cfg.raw.get("output", {}).get("dir", "out"))
    if plots is None:
        plots = cfg.raw.get("output", {}).get("plots", True)
    model = cfg.model()
    solver = cfg.solver()
    grid = cfg.grid()

    t_start = time.perf_counter()
    traj = integrate(cfg.initial_state(), grid, solver, model)
    wall = time.perf_counter() - t_start

    header = csv_header(model.n, model.d)
    rows = trace_rows(traj, model)
    csv_path = out / f"{cfg.name}.csv"
    write_csv(csv_path, header, rows)

    basis = skew_basis(model.d)
    labels = {(R.a, R.b): f"Q{k + 1}" for k, R in enumerate(basis)}
    tracked = cfg.generators()
    cols = {h: np.array([float(r[j]) for r in rows]) for j, h in enumerate(header)}
    drift = drifts_from_columns(cols, [labels[(R.a, R.b)] for R in tracked])
    W = model.params.W_sym
    comm = {}
    for R in tracked:
        ok, res = commutes(W, R)
        comm[labels[(R.a, R.b)]] = {"generator": R.label, "commutes": ok, "residual": res}

    act = model.params.activation
    summary = {
        "name": cfg.name,
        "method": solver.method,
        "xi_choice": solver.xi_choice if "midpoint" in solver.method else None,
        "dps": solver.dps,
        "steps": grid.N,
        "h": grid.h,
        "epsilon": cfg.epsilon,
        "drift": drift,
        "commutes": comm,
        "max_fixed_point_iterations": max((dg.iterations for dg in traj.diagnostics), default=0),
        "max_condition": max((dg.condition for dg in traj.diagnostics), default=1.0),
        "wall_time_s": wall,
    }
    if act.tag == "frozen-softmax":
        summary["frozen_denominators"] = [float(v) for v in act.denominators]

    svgs = []
    if plots:
        from .plotting import plot_charges, plot_hamiltonian

        svgs.append(plot_charges(out / f"{cfg.name}_charges.svg", cols, tracked, labels, drift, comm, cfg.name))
        svgs.append(plot_hamiltonian(out / f"{cfg.name}_hamiltonian.svg", cols, cfg.name))
    return RunArtifacts(csv_path, svgs, summary, traj)


# --- drift-order study --------------------------------------------------------------

CONSERVATION_BOUND = 1e-10


def parse_fraction_list(text: str) -> list[float]:
    """``"1/50,1/100,0.1"`` -> [0.02, 0.01, 0.1]."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            if "/" in tok:
                num, den = tok.split("/")
                val = float(num) / float(den)
            else:
                val = float(tok)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot parse {tok!r} as a number or fraction", value=tok) from None
        if not val > 0:
            raise ConfigError(f"{tok!r} must be positive", value=tok)
        out.append(val)
    if not out:
        raise ConfigError("empty value list")
    return out


@dataclass
class DriftStudy:
    method: str
    rows: list  # (epsilon, h, label, commutes, drift)
    slopes_h: dict  # epsilon -> slope or None
    slopes_eps: dict  # h -> slope or None

    def metric(self, eps, h) -> float:
        """Largest one-step drift over the commuting charges."""
        return max(r[4] for r in self.rows if r[0] == eps and r[1] == h and r[3])


def _slope(xs, ys):
    if len(xs) < 2 or min(ys) < CONSERVATION_BOUND:
        return None
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def probe_state(cfg: ExperimentConfig, epsilon: float) -> PhaseVector:
    """Initial positions with the configured momenta, or seeded normal momenta if those vanish.

    A zero-momentum start has no first-step charge change, so it cannot
    reveal the order of the violation.
    """
    p = cfg.p0()
    if not np.any(p):
        p = np.random.default_rng(cfg.seed).standard_normal(p.shape)
    return PhaseVector(cfg.x0(), p, cfg.grid().t0, epsilon)


def drift_study(cfg: ExperimentConfig, hs, epss, method: str | None = None) -> DriftStudy:
    """One-step charge drift ``|Q(t0 + h) - Q(t0)|`` over an (h, eps) grid with log-log slopes."""
    if method is not None:
        cfg = cfg.with_overrides(method=method)
    solver = cfg.solver()
    model = cfg.model()
    basis = skew_basis(cfg.d)
    comm = [commutes(model.params.W_sym, R)[0] for R in basis]
    rows = []
    with nx.precision(solver.dps):
        for eps in epss:
            s0 = probe_state(cfg, eps)
            s0 = prepare_state(s0, GridSpec(s0.t, s0.t + 1.0, 1), solver)
            q0 = [charge_y(s0, R) for R in basis]
            for h in hs:
                s1, _ = step(s0, h, model, solver)
                for k, R in enumerate(basis):
                    dq = abs(float(charge_y(s1, R) - q0[k]))
                    rows.append((eps, h, f"Q{k + 1}", comm[k], dq))
    study = DriftStudy(solver.method, rows, {}, {})
    conserving = "midpoint" in solver.method
    for eps in epss:
        ys = [study.metric(eps, h) for h in hs]
        study.slopes_h[eps] = None if conserving else _slope(hs, ys)
    for h in hs:
        ys = [study.metric(eps, h) for eps in epss]
        study.slopes_eps[h] = None if conserving else _slope(epss, ys)
    return study


def write_study(study: DriftStudy, out_dir, name: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    drift_path = out / f"{name}_drift.csv"
    write_csv(
        drift_path,
        ["method", "epsilon", "h", "charge", "commutes", "drift"],
        [[study.method, fmt(e), fmt(h), lab, str(c).lower(), fmt(v)] for e, h, lab, c, v in study.rows],
    )
    slope_path = out / f"{name}_slopes.csv"
    rows = [[study.method, "h", "epsilon", fmt(e), "n/a" if s is None else fmt(s)] for e, s in study.slopes_h.items()]
    rows += [[study.method, "epsilon", "h", fmt(h), "n/a" if s is None else fmt(s)] for h, s in study.slopes_eps.items()]
    write_csv(slope_path, ["method", "slope_in", "fixed", "fixed_value", "slope"], rows)
    return drift_path, slope_path
