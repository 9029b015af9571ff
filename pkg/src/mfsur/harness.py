"""Experiment runner: initial design, pilot noise estimation, hyper-parameter
freeze, budgeted sequential loop, repetitions, metrics, persistence.

Protocol per repetition: build the nested initial design on the lowest
fidelity levels and simulate it; fit the posterior with the frozen kernel;
then loop fit -> record metrics -> select (single-level or multi-fidelity)
-> simulate -> charge cost, until no affordable level remains. The budget
covers only sequential points; a point is selected only if its cost fits the
remaining budget, so the charged total never exceeds the budget.

Shared state (noise table, frozen kernel hyper-parameters) depends only on
the master seed, never on the strategy, so runs with equal seeds share
initial designs and pilot tables and differ only by selection policy.
Metrics are recorded after every sequential observation, plus one row for
the post-initial-design state at cost zero.

Model-state file (JSON, schema_version 1): master_seed, fidelity_grid,
kernel {variance, input_lengthscales, fidelity_lengthscale}, noise_table
{levels, omega0_axis, zeta_axis, tables}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import minimize
from scipy.linalg import solve_triangular

from mfsur import persist, streams
from mfsur.design import DOMAIN_BOUNDS, generate_nested_design
from mfsur.exceedance import ExceedanceField, QuadratureMeasure, ThresholdSpec
from mfsur.gp import (KernelSpec, NoiseFunction, ObservationSet, fit_posterior,
                      joint, _cholesky_with_jitter)
from mfsur.oscillator import OscillatorInput, pilot_noise_table, simulate
from mfsur.selection import CandidateSet, CostModel, select_msur, select_sur

logger = logging.getLogger(__name__)

DEFAULT_FIDELITY_GRID = (1.0, 0.5, 0.33, 0.25, 0.2, 0.17, 0.1, 0.05, 0.02, 0.01)
DEFAULT_DESIGN_SIZES = (180, 60, 20, 10, 5)
BUDGET_EPS = 1e-12
# negligible-variance nodes are skipped in the sequential loop's criterion
# evaluations; each J value moves by at most this fraction of H_n
CRITERION_DROP_MASS = 1e-7


@dataclass(frozen=True)
class Strategy:
    """Selection policy: multi-fidelity, or single-level at a fixed step."""

    kind: str                  # "msur" or "sl"
    level: float | None = None

    def __str__(self) -> str:
        return "msur" if self.kind == "msur" else f"sl:{self.level:g}"

    @property
    def slug(self) -> str:
        return str(self).replace(":", "_")


def parse_strategy(text: str) -> Strategy:
    text = text.strip()
    if text == "msur":
        return Strategy("msur")
    if text.startswith("sl:"):
        return Strategy("sl", float(text[3:]))
    raise ValueError(f"strategy must be 'msur' or 'sl:<dt>', got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; defaults follow the benchmark protocol."""

    out_dir: str
    master_seed: int
    strategy: str = "msur"
    budget: float = 20.0
    repetitions: int = 12
    candidates_per_level: int = 500
    quadrature_shape: tuple[int, int] = (50, 50)
    fidelity_grid: tuple = DEFAULT_FIDELITY_GRID
    design_sizes: tuple = DEFAULT_DESIGN_SIZES
    bounds: tuple = DOMAIN_BOUNDS
    z_crit: float = -3.0
    cost_a: float = 0.0098
    cost_b: float = 0.02
    pilot_shape: tuple[int, int] = (5, 5)
    pilot_replications: int = 50
    reference_path: str | None = None
    reference_replications: int = 2000
    model_state_path: str | None = None
    write_audit: bool = False

    def __post_init__(self):
        grid = tuple(float(t) for t in self.fidelity_grid)
        if any(grid[i] <= grid[i + 1] for i in range(len(grid) - 1)):
            raise ValueError("fidelity grid must be strictly decreasing")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        sizes = tuple(int(s) for s in self.design_sizes)
        if len(sizes) > len(grid):
            raise ValueError("more design sizes than fidelity levels")
        if any(sizes[i] < sizes[i + 1] for i in range(len(sizes) - 1)):
            raise ValueError("design sizes must be nonincreasing")
        object.__setattr__(self, "fidelity_grid", grid)
        object.__setattr__(self, "design_sizes", sizes)
        object.__setattr__(self, "quadrature_shape", tuple(self.quadrature_shape))
        object.__setattr__(self, "pilot_shape", tuple(self.pilot_shape))
        object.__setattr__(self, "bounds",
                           tuple(tuple(float(v) for v in ax) for ax in self.bounds))
        parse_strategy(self.strategy)

    @property
    def t_hf(self) -> float:
        return self.fidelity_grid[-1]

    def strategy_obj(self) -> Strategy:
        return parse_strategy(self.strategy)

    def resolved_model_state_path(self) -> Path:
        if self.model_state_path:
            return Path(self.model_state_path)
        return Path(self.out_dir) / "model_state.json"


_CONFIG_ALIASES = {
    "seed": "master_seed",
    "reps": "repetitions",
    "out": "out_dir",
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from a flat mapping (YAML document or CLI overrides)."""
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in doc.items():
        name = _CONFIG_ALIASES.get(key, key)
        if name not in known:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[name] = value
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Load a YAML config file; overrides (CLI flags) win over file values."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    schema = doc.pop("schema", 1)
    if schema != 1:
        raise ValueError(f"{path}: unsupported config schema {schema!r}")
    doc.update(overrides or {})
    return config_from_dict(doc)


def dump_config(config: ExperimentConfig, path) -> None:
    doc = {"schema": 1}
    for f in fields(ExperimentConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        doc[f.name] = v
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# shared state: pilot noise table + frozen hyper-parameters

_HYPER_BOUNDS = {
    "log_variance": (math.log(1e-4), math.log(1e4)),
    "log_input": (math.log(0.02), math.log(10.0)),
    "log_fidelity": (math.log(0.05), math.log(50.0)),
}


def fit_hyperparameters(data: ObservationSet, bounds, rng: np.random.Generator,
                        n_starts: int = 3) -> KernelSpec:
    """Maximize the constant-mean-integrated Gaussian likelihood, then freeze.

    The improper-uniform prior on the mean integrates out exactly, leaving
    0.5 * (r' A^-1 r + log det A + log 1' A^-1 1) to minimize over
    (variance, x lengthscales, fidelity lengthscale) on the log scale.
    """
    z = data.values

    def nll(logp):
        var = math.exp(logp[0])
        kern = KernelSpec(var, (math.exp(logp[1]), math.exp(logp[2])),
                          math.exp(logp[3]), bounds)
        a = kern.cross(data.points, data.points)
        a[np.diag_indices(len(a))] += data.noise_vars
        try:
            chol, _ = _cholesky_with_jitter(a, var)
        except Exception:
            return 1e12
        w = solve_triangular(chol, np.ones(len(a)), lower=True, check_finite=False)
        uz = solve_triangular(chol, z, lower=True, check_finite=False)
        s = w @ w
        mhat = (w @ uz) / s
        ur = uz - mhat * w
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        return 0.5 * float(ur @ ur + logdet + np.log(s))

    lb = [_HYPER_BOUNDS["log_variance"][0], _HYPER_BOUNDS["log_input"][0],
          _HYPER_BOUNDS["log_input"][0], _HYPER_BOUNDS["log_fidelity"][0]]
    ub = [_HYPER_BOUNDS["log_variance"][1], _HYPER_BOUNDS["log_input"][1],
          _HYPER_BOUNDS["log_input"][1], _HYPER_BOUNDS["log_fidelity"][1]]
    base = np.array([math.log(max(z.var(), 1e-3)), math.log(0.3), math.log(0.3),
                     math.log(2.0)])
    best_x, best_f = None, np.inf
    for k in range(n_starts):
        x0 = base if k == 0 else base + rng.uniform(-1.0, 1.0, size=4)
        x0 = np.clip(x0, lb, ub)
        res = minimize(nll, x0, method="L-BFGS-B", bounds=list(zip(lb, ub)))
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    var, l1, l2, lt = np.exp(best_x)
    logger.info("frozen hyper-parameters: variance=%.4g lengthscales=(%.4g, %.4g) "
                "fidelity=%.4g (nll %.4g)", var, l1, l2, lt, best_f)
    return KernelSpec(float(var), (float(l1), float(l2)), float(lt), bounds)


def initial_observations(config: ExperimentConfig, noise: NoiseFunction, rep: int):
    """Nested initial design plus its simulated observations for one repetition."""
    rng = streams.rng(config.master_seed, streams.TAG_DESIGN, rep)
    design_levels = generate_nested_design(config.design_sizes, config.bounds, rng)
    levels = config.fidelity_grid[:len(design_levels)]
    pts, vals, nvars = [], [], []
    for li, (dt, xs) in enumerate(zip(levels, design_levels)):
        lam = noise.at(xs, dt)
        for pi, x in enumerate(xs):
            run_rng = streams.rng(config.master_seed, streams.TAG_INITIAL_SIM,
                                  rep, li, pi)
            vals.append(simulate(OscillatorInput(x[0], x[1], dt), run_rng))
            pts.append((x[0], x[1], dt))
            nvars.append(lam[pi])
    data = ObservationSet(np.array(pts), np.array(vals), np.array(nvars))
    return data, levels, design_levels


def ensure_model_state(config: ExperimentConfig):
    """Load or build the shared noise table and frozen kernel; persist it."""
    path = config.resolved_model_state_path()
    if path.exists():
        kernel_params, noise, seed, grid = persist.read_model_state(path)
        if seed != config.master_seed:
            raise ValueError(f"{path}: model state was built for seed {seed}, "
                             f"config uses {config.master_seed}")
        if not np.allclose(grid, config.fidelity_grid, rtol=1e-12):
            raise ValueError(f"{path}: fidelity grid mismatch")
        kernel = KernelSpec(kernel_params["variance"],
                            tuple(kernel_params["input_lengthscales"]),
                            kernel_params["fidelity_lengthscale"], config.bounds)
        return kernel, noise
    logger.info("building pilot noise table (%dx%d nodes, %d replications, "
                "%d levels)", *config.pilot_shape, config.pilot_replications,
                len(config.fidelity_grid))
    levels, ax, bx, tables = pilot_noise_table(
        config.bounds, config.pilot_shape, levels=config.fidelity_grid,
        replications=config.pilot_replications, master_seed=config.master_seed)
    noise = NoiseFunction(levels, ax, bx, tables)
    data, _, _ = initial_observations(config, noise, rep=0)
    kernel = fit_hyperparameters(
        data, config.bounds, streams.rng(config.master_seed, streams.TAG_HYPERFIT))
    persist.write_model_state(
        path,
        kernel_params={"variance": kernel.variance,
                       "input_lengthscales": list(kernel.input_lengthscales),
                       "fidelity_lengthscale": kernel.fidelity_lengthscale},
        noise=noise, master_seed=config.master_seed,
        fidelity_grid=config.fidelity_grid)
    return kernel, noise


def load_reference(config: ExperimentConfig, measure: QuadratureMeasure):
    """Reference map matching the quadrature nodes; explicit error if absent."""
    if not config.reference_path or not Path(config.reference_path).exists():
        raise FileNotFoundError(
            f"reference map {config.reference_path!r} not found; generate it first "
            f"with: mfsur reference --out <dir> --seed <seed> "
            f"--grid {config.quadrature_shape[0]}x{config.quadrature_shape[1]}")
    ref = persist.read_reference_map(config.reference_path)
    if not np.isclose(ref.dt, config.t_hf, rtol=1e-9):
        raise ValueError(f"reference was built at dt={ref.dt}, config t_hf={config.t_hf}")
    if ref.nodes.shape != measure.nodes.shape or not np.allclose(
            ref.nodes, measure.nodes, rtol=0, atol=1e-9):
        raise ValueError("reference map nodes do not match the quadrature grid; "
                         "rebuild the reference at the configured grid size")
    return ref


# ---------------------------------------------------------------------------
# sequential loop

def _strategy_code(strategy: Strategy, grid) -> int:
    if strategy.kind == "msur":
        return 0
    idx = [i for i, t in enumerate(grid) if np.isclose(t, strategy.level, rtol=1e-9)]
    if not idx:
        raise ValueError(f"single-level strategy at dt={strategy.level} is not on "
                         f"the fidelity grid {grid}")
    return 1 + idx[0]


def run_repetition(config: ExperimentConfig, kernel: KernelSpec,
                   noise: NoiseFunction, measure: QuadratureMeasure,
                   ref_field: np.ndarray, ref_global: float, rep: int):
    """One repetition of the sequential loop; returns metrics and audit rows."""
    strategy = config.strategy_obj()
    scode = _strategy_code(strategy, config.fidelity_grid)
    grid = np.asarray(config.fidelity_grid)
    cost = CostModel(config.cost_a, config.cost_b)
    threshold = ThresholdSpec(config.z_crit, config.t_hf)
    data, levels, design_levels = initial_observations(config, noise, rep)

    rows, audit_rows = [], []
    spent, it = 0.0, 0
    while True:
        gp = fit_posterior(kernel, noise, data)
        field = ExceedanceField(gp, noise, threshold)
        stats = field.evaluate(measure)
        phat = float(measure.weights @ stats.prob_mean)
        ise = float(measure.weights @ (stats.prob_mean - ref_field) ** 2)
        rows.append((spent, phat, (phat - ref_global) ** 2, ise, stats.H,
                     it, rep, str(strategy)))

        remaining = config.budget - spent
        cand_rng = streams.rng(config.master_seed, streams.TAG_CANDIDATES,
                               rep, scode, it)
        if strategy.kind == "sl":
            level_cost = float(cost(strategy.level))
            if level_cost > remaining + BUDGET_EPS:
                break
            cands = CandidateSet.draw([strategy.level], config.candidates_per_level,
                                      config.bounds, cand_rng)
            sel = select_sur(field, strategy.level, cands, measure,
                             drop_mass=CRITERION_DROP_MASS)
            charged = level_cost
        else:
            active = cost(grid) <= remaining + BUDGET_EPS
            if not active.any():
                break
            cands = CandidateSet.draw(grid, config.candidates_per_level,
                                      config.bounds, cand_rng)
            sel = select_msur(field, cands, cost, measure, active=active,
                              drop_mass=CRITERION_DROP_MASS)
            charged = float(cost(sel.t))
        if config.write_audit:
            for entry in sel.audit:
                for ci in range(len(entry.points)):
                    audit_rows.append((it, entry.level, ci, entry.points[ci, 0],
                                       entry.points[ci, 1], entry.j_values[ci],
                                       entry.gains[ci], entry.cost, entry.scores[ci]))
        obs_rng = streams.rng(config.master_seed, streams.TAG_OBSERVATION,
                              rep, scode, it)
        z = simulate(OscillatorInput(sel.x[0], sel.x[1], sel.t), obs_rng)
        lam = float(noise.at(sel.x.reshape(1, 2), sel.t)[0])
        data = data.append((sel.x[0], sel.x[1], sel.t), z, lam)
        spent += charged
        it += 1
    return rows, audit_rows, (levels, design_levels)


def run_experiment(config: ExperimentConfig):
    """Run one strategy for all repetitions; write metrics and design files.

    Returns the metrics rows (list of tuples in persist.METRICS_COLUMNS
    order). Deterministic given the configuration: a second run produces
    byte-identical files.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    measure = QuadratureMeasure.regular_grid(config.bounds, config.quadrature_shape)
    ref = load_reference(config, measure)
    ref_global = float(measure.weights @ ref.estimate)
    kernel, noise = ensure_model_state(config)
    dump_config(config, out / "config_resolved.yaml")

    all_rows = []
    for rep in range(config.repetitions):
        rows, audit_rows, (levels, design_levels) = run_repetition(
            config, kernel, noise, measure, ref.estimate, ref_global, rep)
        all_rows.extend(rows)
        persist.write_design(out / f"design_rep{rep}.csv", levels, design_levels)
        if config.write_audit:
            persist.write_audit(out / f"audit_rep{rep}.csv", audit_rows)
        logger.info("strategy %s rep %d: %d sequential points, cost %.4g",
                    config.strategy, rep, rows[-1][5], rows[-1][0])
    persist.write_metrics(out / "metrics.csv", all_rows)
    return all_rows


# ---------------------------------------------------------------------------
# multi-strategy comparison

def _step_curve(costs, values, grid):
    idx = np.searchsorted(costs, grid, side="right") - 1
    idx = np.clip(idx, 0, len(values) - 1)
    return values[idx]


def strategy_curve(metrics: dict):
    """Mean-over-repetitions RMSE curves on the pooled cost grid."""
    reps = np.unique(metrics["rep"])
    grid = np.unique(metrics["cost"])
    sq_p, sq_field = [], []
    for rep in reps:
        m = metrics["rep"] == rep
        order = np.argsort(metrics["cost"][m], kind="stable")
        costs = metrics["cost"][m][order]
        sq_p.append(_step_curve(costs, metrics["sqerr_P"][m][order], grid))
        sq_field.append(_step_curve(costs, metrics["ise_p"][m][order], grid))
    rmse_p = np.sqrt(np.mean(sq_p, axis=0))
    rmse_field = np.sqrt(np.mean(sq_field, axis=0))
    return grid, rmse_p, rmse_field


def compare_strategies(configs: list[ExperimentConfig]):
    """Run several strategies sharing seed/budget/grids; aggregate curves.

    Writes per-strategy metrics under <out>/<strategy-slug>/ and the
    aggregated curves.csv and summary.csv at <out>. Returns the summary rows.
    The best single-level strategy is flagged on the final field RMSE.
    """
    if not configs:
        raise ValueError("no configurations to compare")
    base = configs[0]
    for cfg in configs[1:]:
        same = (cfg.master_seed == base.master_seed and cfg.budget == base.budget
                and cfg.quadrature_shape == base.quadrature_shape
                and cfg.reference_path == base.reference_path
                and cfg.fidelity_grid == base.fidelity_grid
                and cfg.repetitions == base.repetitions)
        if not same:
            raise ValueError("compared configurations must share seed, budget, "
                             "grids, repetitions and reference")
    out = Path(base.out_dir)
    curve_rows, final = [], {}
    for cfg in configs:
        strategy = cfg.strategy_obj()
        sub = replace(cfg, out_dir=str(out / strategy.slug),
                      model_state_path=str(base.resolved_model_state_path()))
        run_experiment(sub)
        metrics = persist.read_metrics(Path(sub.out_dir) / "metrics.csv")
        grid, rmse_p, rmse_field = strategy_curve(metrics)
        curve_rows.extend((str(strategy), c, rp, rf)
                          for c, rp, rf in zip(grid, rmse_p, rmse_field))
        final[str(strategy)] = (float(rmse_p[-1]), float(rmse_field[-1]))
    sl_final = {s: v[1] for s, v in final.items() if s.startswith("sl:")}
    best_sl = min(sl_final, key=sl_final.get) if sl_final else None
    summary_rows = [(s, final[s][0], final[s][1], int(s == best_sl)) for s in final]
    persist.write_curves(out / "curves.csv", curve_rows)
    persist.write_summary(out / "summary.csv", summary_rows)
    if best_sl is not None:
        logger.info("best single-level strategy by final field RMSE: %s", best_sl)
    return summary_rows


# ---------------------------------------------------------------------------
# audit runs (criterion table dumps without needing a reference map)

def run_audit(config: ExperimentConfig, iterations: int = 1):
    """Run the loop for a fixed number of selections, dumping criterion tables."""
    cfg = replace(config, write_audit=True,
                  budget=float("inf") if config.budget == 0 else config.budget)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    measure = QuadratureMeasure.regular_grid(cfg.bounds, cfg.quadrature_shape)
    kernel, noise = ensure_model_state(cfg)
    strategy = cfg.strategy_obj()
    scode = _strategy_code(strategy, cfg.fidelity_grid)
    grid = np.asarray(cfg.fidelity_grid)
    cost = CostModel(cfg.cost_a, cfg.cost_b)
    threshold = ThresholdSpec(cfg.z_crit, cfg.t_hf)
    data, _, _ = initial_observations(cfg, noise, rep=0)
    audit_rows = []
    for it in range(iterations):
        gp = fit_posterior(kernel, noise, data)
        field = ExceedanceField(gp, noise, threshold)
        cand_rng = streams.rng(cfg.master_seed, streams.TAG_CANDIDATES, 0, scode, it)
        if strategy.kind == "sl":
            cands = CandidateSet.draw([strategy.level], cfg.candidates_per_level,
                                      cfg.bounds, cand_rng)
            sel = select_sur(field, strategy.level, cands, measure,
                             drop_mass=CRITERION_DROP_MASS)
        else:
            cands = CandidateSet.draw(grid, cfg.candidates_per_level,
                                      cfg.bounds, cand_rng)
            sel = select_msur(field, cands, cost, measure)
        for entry in sel.audit:
            for ci in range(len(entry.points)):
                audit_rows.append((it, entry.level, ci, entry.points[ci, 0],
                                   entry.points[ci, 1], entry.j_values[ci],
                                   entry.gains[ci], entry.cost, entry.scores[ci]))
        obs_rng = streams.rng(cfg.master_seed, streams.TAG_OBSERVATION, 0, scode, it)
        z = simulate(OscillatorInput(sel.x[0], sel.x[1], sel.t), obs_rng)
        data = data.append((sel.x[0], sel.x[1], sel.t), z,
                           float(noise.at(sel.x.reshape(1, 2), sel.t)[0]))
    path = out / "audit_rep0.csv"
    persist.write_audit(path, audit_rows)
    return path
