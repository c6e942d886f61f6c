"""End-to-end experiment drivers.

Covers observation synthesis, point-source reconstruction with cluster
lumping, spatial/temporal refinement studies of the optimal state, a
pointwise rate study for the plain forward solver, and order-of-
convergence bookkeeping. Every driver is deterministic for a fixed
configuration and seed; noise uses numpy's PCG64 generator so seeds are
portable across machines.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import pdap
from .errors import ConfigError
from .fem import (
    NodalField,
    eval_field,
    field_to_csv,
    interpolation_matrix,
    l2_norm,
    l2_project,
)
from .measures import DiscreteMeasure, lump_clusters, match_supports, save_measure
from .mesh import build_uniform, refine
from .pdap import PdapConfig
from .timestepping import HeatModel, TimeGrid, forward_dirac, forward_field

LUMP_RADIUS_FACTOR = 2.0  # lumping radius in units of the mesh size
MATCH_RADIUS = 0.15


@dataclass
class SmoothingSpec:
    x0: tuple = (0.5, 0.5)
    sweep: str = "time"

    def __post_init__(self):
        if self.sweep not in ("time", "space"):
            raise ValueError("sweep must be 'time' or 'space'")


@dataclass
class ExperimentConfig:
    """Parameters of one experiment on the unit square.

    mesh_n and time_steps are single values or ascending lists; studies
    interpret the finest entry of the swept parameter as the reference.
    """

    T: float = 0.1
    truth: DiscreteMeasure = field(default_factory=DiscreteMeasure)
    mesh_n: object = 32
    time_steps: object = 64
    dg_order: int = 0
    alpha: float = 1e-3
    noise_level: float = 0.0
    seed: int = 0
    pdap: PdapConfig = None
    output_dir: str = None
    smoothing: SmoothingSpec = None

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.noise_level < 0:
            raise ValueError("noise level must be nonnegative")
        for name in ("mesh_n", "time_steps"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple)):
                if len(v) >= 2 and any(b <= a for a, b in zip(v, v[1:])):
                    raise ValueError(f"{name} list must be ascending")
        if self.pdap is None:
            self.pdap = PdapConfig(alpha=self.alpha)


@dataclass
class EocRow:
    param: float
    error: float
    eoc: float = None  # None on the first row and for skipped pairs


@dataclass
class EocTable:
    """Refinement table: (parameter, error, order) rows plus a fitted slope."""

    rows: list
    slope: float
    skipped: list = field(default_factory=list)

    @property
    def params(self):
        return [r.param for r in self.rows]

    @property
    def errors(self):
        return [r.error for r in self.rows]

    @property
    def eocs(self):
        return [r.eoc for r in self.rows[1:]]

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("param,error,eoc\n")
            for r in self.rows:
                eoc = "" if r.eoc is None else f"{r.eoc:.17g}"
                f.write(f"{r.param:.17g},{r.error:.17g},{eoc}\n")


def _fit_slope(params, errors):
    """Least-squares slope of ln(error) against ln(param)."""
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    good = e > 0
    if good.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(p[good]), np.log(e[good]), 1)[0])


def compute_eoc(params, errors):
    """Order table for a refinement sequence.

    params must be positive and strictly decreasing; pairs with a
    nonpositive error are skipped (no EOC) and reported in `skipped`.
    """
    params = [float(p) for p in params]
    errors = [float(e) for e in errors]
    if len(params) != len(errors) or len(params) < 2:
        raise ValueError("need equally long lists with at least two entries")
    if any(p <= 0 for p in params) or any(b >= a for a, b in zip(params, params[1:])):
        raise ValueError("params must be positive and strictly decreasing")
    rows = [EocRow(params[0], errors[0])]
    skipped = []
    for i in range(1, len(params)):
        e_prev, e_cur = errors[i - 1], errors[i]
        if e_prev <= 0 or e_cur <= 0:
            rows.append(EocRow(params[i], e_cur))
            skipped.append(i)
            continue
        rows.append(
            EocRow(
                params[i],
                e_cur,
                np.log(e_prev / e_cur) / np.log(params[i - 1] / params[i]),
            )
        )
    return EocTable(rows=rows, slope=_fit_slope(params, errors), skipped=skipped)


def _reference_biased_table(params, errors):
    """EOC table for errors measured against the finest-level reference.

    The error next to the reference is biased small, so the headline
    slope is fitted without the last point whenever three or more error
    rows are available; the full table keeps every row. A healthy study
    decays monotonically up to at most one inversion; anything worse is
    flagged with a warning.
    """
    table = compute_eoc(params, errors)
    if len(params) >= 3:
        table.slope = _fit_slope(params[:-1], errors[:-1])
    inversions = sum(b > a for a, b in zip(errors, errors[1:]))
    if inversions > 1:
        warnings.warn(
            f"error sequence has {inversions} inversions; study may be unhealthy",
            stacklevel=3,
        )
    return table


def make_observation(model, q_truth, noise_level, seed):
    """Synthesize the observed terminal state S(q_truth) plus scaled noise.

    The noise is an independent standard normal value per node drawn from
    numpy's PCG64 generator with the given seed, rescaled so its L2 norm
    equals noise_level times the norm of the clean state. Zero noise
    returns the clean state bit for bit.
    """
    u = forward_dirac(model, q_truth)
    if noise_level == 0.0:
        return u
    rng = np.random.default_rng(seed)
    delta = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    scale = noise_level * l2_norm(model.mass, u) / l2_norm(model.mass, delta)
    return NodalField(model.mesh, u.values + scale * delta.values)


@dataclass
class ReconstructionReport:
    measure: DiscreteMeasure
    lumped: DiscreteMeasure
    match: object  # SupportMatch against the truth, or None
    adjoint_max: float
    objective: float
    gap: float
    converged: bool
    log: pdap.IterationLog


def _single(value, name):
    if isinstance(value, (list, tuple)):
        raise ConfigError(f"{name} must be a single value for this driver")
    return int(value)


def _ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)


def reconstruct(cfg):
    """Recover the initial measure from the configured observation.

    Runs the active-point solver, lumps clustered atoms within twice the
    mesh size, and matches the lumped measure against the configured
    truth. Artifacts (measure.json, measure_lumped.json, log.csv,
    field.csv) go to cfg.output_dir when set. Solver non-convergence is
    reported in the result, not raised.
    """
    n = _single(cfg.mesh_n, "mesh_n")
    M = _single(cfg.time_steps, "time_steps")
    mesh = build_uniform(n)
    model = HeatModel(mesh, TimeGrid.uniform(cfg.T, M), cfg.dg_order)
    u_d = make_observation(model, cfg.truth, cfg.noise_level, cfg.seed)
    result = pdap.run(model, u_d, cfg.pdap)
    lumped = lump_clusters(result.measure, LUMP_RADIUS_FACTOR * mesh.h)
    match = None
    if len(cfg.truth) > 0:
        match = match_supports(cfg.truth, lumped, MATCH_RADIUS)
    report = ReconstructionReport(
        measure=result.measure,
        lumped=lumped,
        match=match,
        adjoint_max=float(np.abs(result.adjoint.values).max()),
        objective=result.objective,
        gap=result.gap,
        converged=result.converged,
        log=result.log,
    )
    if cfg.output_dir:
        _ensure_dir(cfg.output_dir)
        save_measure(result.measure, os.path.join(cfg.output_dir, "measure.json"))
        save_measure(lumped, os.path.join(cfg.output_dir, "measure_lumped.json"))
        result.log.write_csv(os.path.join(cfg.output_dir, "log.csv"))
        field_to_csv(
            forward_dirac(model, result.measure),
            os.path.join(cfg.output_dir, "field.csv"),
        )
    return report


def _nested_meshes(ns):
    """Meshes for the ascending resolutions ns, nested by refinement."""
    if len(ns) < 3:
        raise ConfigError("refinement studies need at least three levels")
    for a, b in zip(ns, ns[1:]):
        if b != 2 * a:
            raise ConfigError("mesh resolutions must double between levels")
    meshes = [build_uniform(ns[0])]
    for _ in ns[1:]:
        meshes.append(refine(meshes[-1]))
    return meshes


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def study_space(cfg, workers=1):
    """Spatial refinement study of the optimal terminal state.

    Solves the control problem on each mesh level against data fixed on
    the finest level (carried to coarse levels by the mass-orthogonal
    projection, which leaves the optimality system unchanged on nested
    meshes) and compares optimal states on the reference mesh via exact
    nodal interpolation. Returns the EOC table over the coarse levels.
    """
    ns = list(cfg.mesh_n) if isinstance(cfg.mesh_n, (list, tuple)) else [cfg.mesh_n]
    meshes = _nested_meshes(ns)
    M = _single(cfg.time_steps, "time_steps")
    grid = TimeGrid.uniform(cfg.T, M)

    ref_mesh = meshes[-1]
    ref_model = HeatModel(ref_mesh, grid, cfg.dg_order)
    u_d_ref = make_observation(ref_model, cfg.truth, cfg.noise_level, cfg.seed)
    ref_result = pdap.run(ref_model, u_d_ref, cfg.pdap)
    u_ref = forward_dirac(ref_model, ref_result.measure)
    ud_ref_m = ref_model.mass.mat @ u_d_ref.values

    def solve_level(mesh):
        model = HeatModel(mesh, grid, cfg.dg_order)
        interp = interpolation_matrix(mesh, ref_mesh)
        # Same L2 data, represented on the coarse mesh.
        u_d = NodalField(mesh, model.mass.solve(interp.T @ ud_ref_m))
        result = pdap.run(model, u_d, cfg.pdap)
        state = forward_dirac(model, result.measure)
        lifted = NodalField(ref_mesh, interp @ state.values)
        err = l2_norm(
            ref_model.mass, NodalField(ref_mesh, lifted.values - u_ref.values)
        )
        return err, result.converged

    outcomes = _map(solve_level, meshes[:-1], workers)
    errors = [e for e, _ in outcomes]
    all_converged = all(ok for _, ok in outcomes) and ref_result.converged
    params = [m.h for m in meshes[:-1]]
    table = _reference_biased_table(params, errors)
    if cfg.output_dir:
        _ensure_dir(cfg.output_dir)
        table.write_csv(os.path.join(cfg.output_dir, "errors.csv"))
    return table, all_converged


def study_time(cfg, workers=1):
    """Temporal refinement study of the optimal terminal state.

    The data is the clean discrete terminal state of the truth measure on
    the finest time grid (plus configured noise, default none); each
    coarser grid solves the control problem on the same mesh, so states
    compare directly. Returns the EOC table over the coarse grids.
    """
    Ms = (
        list(cfg.time_steps)
        if isinstance(cfg.time_steps, (list, tuple))
        else [cfg.time_steps]
    )
    if len(Ms) < 3:
        raise ConfigError("refinement studies need at least three levels")
    n = _single(cfg.mesh_n, "mesh_n")
    mesh = build_uniform(n)

    ref_model = HeatModel(mesh, TimeGrid.uniform(cfg.T, Ms[-1]), cfg.dg_order)
    u_d = make_observation(ref_model, cfg.truth, cfg.noise_level, cfg.seed)
    ref_result = pdap.run(ref_model, u_d, cfg.pdap)
    u_ref = forward_dirac(ref_model, ref_result.measure)

    def solve_level(M):
        model = HeatModel(mesh, TimeGrid.uniform(cfg.T, M), cfg.dg_order)
        result = pdap.run(model, u_d, cfg.pdap)
        state = forward_dirac(model, result.measure)
        err = l2_norm(model.mass, NodalField(mesh, state.values - u_ref.values))
        return err, result.converged

    outcomes = _map(solve_level, Ms[:-1], workers)
    errors = [e for e, _ in outcomes]
    all_converged = all(ok for _, ok in outcomes) and ref_result.converged
    params = [cfg.T / M for M in Ms[:-1]]
    table = _reference_biased_table(params, errors)
    if cfg.output_dir:
        _ensure_dir(cfg.output_dir)
        table.write_csv(os.path.join(cfg.output_dir, "errors.csv"))
    return table, all_converged


def first_eigenmode(x, y):
    """Lowest Dirichlet Laplacian eigenfunction of the unit square."""
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def study_smoothing(cfg, v0=first_eigenmode, workers=1):
    """Pointwise rate study for the plain forward solver at an interior point.

    Sweeps either the time grid (fixed mesh) or the mesh (fixed time
    grid), measuring |v_ref(T, x0) - v_level(T, x0)| against the finest
    level of the swept parameter. Since the reference shares the fixed
    discretization axis, the sweep isolates one error component: the
    expected slopes are 2r+1 in time and 2 (up to a log factor) in space.
    x0 must stay well inside the domain: dist(x0, boundary) > 4h.
    """
    if cfg.smoothing is None:
        raise ConfigError("smoothing study needs a smoothing block")
    x0 = tuple(cfg.smoothing.x0)
    dist = min(x0[0], 1.0 - x0[0], x0[1], 1.0 - x0[1])

    if cfg.smoothing.sweep == "time":
        n = _single(cfg.mesh_n, "mesh_n")
        mesh = build_uniform(n)
        if dist <= 4.0 * mesh.h:
            raise ConfigError("x0 is too close to the boundary for this mesh")
        v0h = l2_project(mesh, v0)
        Ms = list(cfg.time_steps)
        if len(Ms) < 3:
            raise ConfigError("need at least three time-grid levels")

        def value(M):
            model = HeatModel(mesh, TimeGrid.uniform(cfg.T, M), cfg.dg_order)
            return eval_field(mesh, forward_field(model, v0h), x0)

        values = _map(value, Ms, workers)
        errors = [abs(v - values[-1]) for v in values[:-1]]
        params = [cfg.T / M for M in Ms[:-1]]
    else:
        ns = list(cfg.mesh_n)
        meshes = _nested_meshes(ns)
        if dist <= 4.0 * meshes[0].h:
            raise ConfigError("x0 is too close to the boundary for this mesh")
        M = _single(cfg.time_steps, "time_steps")
        grid = TimeGrid.uniform(cfg.T, M)

        def value(mesh):
            model = HeatModel(mesh, grid, cfg.dg_order)
            u = forward_field(model, l2_project(mesh, v0))
            return eval_field(mesh, u, x0)

        values = _map(value, meshes, workers)
        errors = [abs(v - values[-1]) for v in values[:-1]]
        params = [m.h for m in meshes[:-1]]

    table = _reference_biased_table(params, errors)
    if cfg.output_dir:
        _ensure_dir(cfg.output_dir)
        table.write_csv(os.path.join(cfg.output_dir, "errors.csv"))
    return table


# -- configuration files -----------------------------------------------

_TOP_KEYS = {
    "T",
    "truth",
    "mesh_n",
    "time_steps",
    "dg_order",
    "alpha",
    "noise_level",
    "seed",
    "pdap",
    "output_dir",
    "smoothing",
}
_PDAP_KEYS = {
    "tol",
    "tol_mode",
    "max_outer_iterations",
    "subproblem_tol",
    "subproblem_max_iterations",
    "prune_threshold",
}
_SMOOTHING_KEYS = {"x0", "sweep"}


def config_from_dict(data):
    """Build an ExperimentConfig from a JSON-style dict; unknown keys fail."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("T", "alpha", "noise_level"):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ("dg_order", "seed"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("mesh_n", "time_steps"):
        if key in data:
            v = data[key]
            kwargs[key] = [int(x) for x in v] if isinstance(v, list) else int(v)
    if "output_dir" in data and data["output_dir"] is not None:
        kwargs["output_dir"] = str(data["output_dir"])
    if "truth" in data:
        atoms = data["truth"]
        if not isinstance(atoms, list):
            raise ConfigError("truth must be a list of atoms")
        positions, betas = [], []
        for atom in atoms:
            extra = set(atom) - {"x", "beta"}
            if extra:
                raise ConfigError(f"unknown atom keys: {sorted(extra)}")
            positions.append([float(atom["x"][0]), float(atom["x"][1])])
            betas.append(float(atom["beta"]))
        kwargs["truth"] = DiscreteMeasure(positions, betas)
    if "smoothing" in data and data["smoothing"] is not None:
        block = data["smoothing"]
        unknown = set(block) - _SMOOTHING_KEYS
        if unknown:
            raise ConfigError(f"unknown smoothing keys: {sorted(unknown)}")
        kwargs["smoothing"] = SmoothingSpec(
            x0=tuple(float(v) for v in block.get("x0", (0.5, 0.5))),
            sweep=str(block.get("sweep", "time")),
        )
    pdap_block = data.get("pdap", {})
    unknown = set(pdap_block) - _PDAP_KEYS
    if unknown:
        raise ConfigError(f"unknown pdap keys: {sorted(unknown)}")
    try:
        kwargs["pdap"] = PdapConfig(alpha=kwargs.get("alpha", 1e-3), **pdap_block)
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    """Load and validate a JSON experiment configuration."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def override_config(cfg, output_dir=None, seed=None, tol=None):
    """Apply command-line overrides, returning a new config."""
    updates = {}
    if output_dir is not None:
        updates["output_dir"] = output_dir
    if seed is not None:
        updates["seed"] = int(seed)
    if tol is not None:
        updates["pdap"] = replace(cfg.pdap, tol=float(tol))
    return replace(cfg, **updates) if updates else cfg
