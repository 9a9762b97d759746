"""Differential-evolution search over the joint integrator/network space.

Generation-synchronous rand/1/bin DE on the integer design-point
encoding: mutants are sanitized back onto the parameter grids before
evaluation and an offspring replaces its parent only on strictly lower
cost.  Every candidate's randomness is derived from (master seed,
generation, slot), so serial and parallel schedules produce identical
results.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .costmodel import (A_MAX_DEFAULT, L_MAX_DEFAULT, CalibrationModel,
                        CostReport, CostWeights, area_estimate, composite_cost,
                        latency_estimate)
from .dataset import Dataset
from .design import DEFAULT_GRIDS, FIELD_NAMES, DesignPoint, Grids, sanitize
from .errors import (ConfigurationError, FeatureOverflowError,
                     InfeasibleTopologyError, MetricError, SearchError,
                     TrainingError)
from .integrator import feature_word_width
from .lutnet import build_topology, extract_tables, fidelity, train

SENTINEL_COST = 1.0e9  # finite, larger than any feasible composite cost


@dataclass
class SearchConfig:
    np_size: int = 75
    f_de: float = 0.7
    cr: float = 0.8
    g_max: int = 150
    patience: int = 40
    weights: CostWeights = field(default_factory=lambda: CostWeights(0.1, 0.1, 0.8))
    search_epochs: int = 5
    search_batch: int = 512
    lr: float = 0.1  # search-stage rate; diverged candidates get the sentinel cost
    a_max: float = A_MAX_DEFAULT
    l_max: float = L_MAX_DEFAULT
    jobs: int = 1
    master_seed: int = 0
    grids: Grids = field(default_factory=lambda: DEFAULT_GRIDS)

    def validate(self) -> None:
        if not (0 < self.f_de <= 2):
            raise ConfigurationError("F_DE must be in (0, 2]")
        if not (0 <= self.cr <= 1):
            raise ConfigurationError("CR must be in [0, 1]")
        if self.patience > self.g_max:
            raise ConfigurationError("patience must not exceed G_max")


def candidate_seed(master_seed: int, generation: int, slot: int) -> int:
    """Deterministic per-candidate seed, independent of evaluation order."""
    ss = np.random.SeedSequence([master_seed, generation, slot])
    return int(ss.generate_state(1)[0])


def random_design(rng: np.random.Generator, grids: Grids) -> DesignPoint:
    vals = {}
    for name in ("beta_in", "beta_hidden", "beta_out"):
        vals[name] = int(rng.choice(grids.beta))
    for name in FIELD_NAMES:
        if name in vals:
            continue
        beta = vals["beta_hidden"] if name == "gamma_hidden" else \
            vals["beta_out"] if name == "gamma_out" else None
        vals[name] = int(rng.choice(grids.grid_for(name, beta)))
    return DesignPoint(**vals)


def mutate(members: list[DesignPoint], i: int, f_de: float,
           rng: np.random.Generator) -> np.ndarray:
    """rand/1 mutant: v_a + F * (v_b - v_c) over the integer encodings."""
    if len(members) < 4:
        raise ConfigurationError("mutation needs a population of at least 4")
    pool = [j for j in range(len(members)) if j != i]
    a, b, c = rng.choice(pool, size=3, replace=False)
    va = np.array(members[a].to_vector(), dtype=np.float64)
    vb = np.array(members[b].to_vector(), dtype=np.float64)
    vc = np.array(members[c].to_vector(), dtype=np.float64)
    return va + f_de * (vb - vc)


def crossover(mutant: np.ndarray, parent: DesignPoint, cr: float,
              rng: np.random.Generator) -> np.ndarray:
    """Binomial crossover with one forced mutant component."""
    pv = np.array(parent.to_vector(), dtype=np.float64)
    k = int(rng.integers(len(pv)))
    take = rng.random(len(pv)) < cr
    take[k] = True
    return np.where(take, mutant, pv)


def evaluate(dp: DesignPoint, ds: Dataset, cfg: SearchConfig,
             calib: CalibrationModel, candidate_seed: int) -> CostReport:
    """Full candidate pipeline; failures become a sentinel-cost report.

    The area prune bound is applied before any training so oversized
    candidates cost nothing to reject.
    """
    T = ds.trace_len
    try:
        area, integ_luts, net_luts = area_estimate(dp, calib, T)
        latency = latency_estimate(dp, T)
        if area > cfg.a_max:
            return CostReport(area_luts=area, latency_cycles=latency, fidelity=0.0,
                              composite=SENTINEL_COST, integrator_luts=integ_luts,
                              network_luts=net_luts, feasible=False)
        ww = feature_word_width(dp.integrator, T)
        topo = build_topology(dp, feature_bits=2 * dp.num_windows * ww,
                              seed=candidate_seed, word_width=ww)
        net = train(topo, ds, dp.integrator, epochs=cfg.search_epochs,
                    batch_size=cfg.search_batch, lr=cfg.lr, seed=candidate_seed)
        ttn = extract_tables(net)
        fid = fidelity(ttn, dp.integrator, ds)
    except (InfeasibleTopologyError, TrainingError, FeatureOverflowError,
            ConfigurationError, MetricError):
        return CostReport(area_luts=0.0, latency_cycles=0, fidelity=0.0,
                          composite=SENTINEL_COST, feasible=False)
    cost = composite_cost(area, latency, fid, cfg.weights, cfg.a_max, cfg.l_max)
    from .integrator import integrator_cycles
    return CostReport(area_luts=area, latency_cycles=latency, fidelity=fid,
                      composite=cost, integrator_luts=integ_luts,
                      network_luts=net_luts,
                      integrator_cycles=integrator_cycles(dp.integrator, T),
                      network_cycles=dp.num_stages)


# Worker-side globals so forked processes reuse the parent's dataset pages
# instead of pickling 20+ MB per task.
_WORK = {}


def _init_worker(ds, cfg, calib):
    _WORK["ds"], _WORK["cfg"], _WORK["calib"] = ds, cfg, calib


def _eval_task(args):
    dp, seed = args
    return evaluate(dp, _WORK["ds"], _WORK["cfg"], _WORK["calib"], seed)


def _evaluate_all(dps, seeds, ds, cfg, calib) -> list[CostReport]:
    if cfg.jobs <= 1 or len(dps) <= 1:
        return [evaluate(dp, ds, cfg, calib, s) for dp, s in zip(dps, seeds)]
    with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker,
                             initargs=(ds, cfg, calib)) as pool:
        return list(pool.map(_eval_task, zip(dps, seeds), chunksize=1))


@dataclass
class Population:
    members: list[DesignPoint]
    reports: list[CostReport]
    generation: int = 0
    no_improve: int = 0

    @property
    def costs(self) -> list[float]:
        return [r.composite for r in self.reports]

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.costs))

    @property
    def best(self) -> tuple[DesignPoint, CostReport]:
        i = self.best_index
        return self.members[i], self.reports[i]


@dataclass
class SearchResult:
    best_point: DesignPoint
    best_report: CostReport
    trajectory: list[float]           # best cost after each generation (incl. init)
    log_rows: list[tuple]             # (generation, member, cost, area, latency, fidelity)
    generations_run: int = 0
    stopped_early: bool = False


def _passes_prune(dp: DesignPoint, calib: CalibrationModel, T: int,
                  a_max: float) -> bool:
    """Area prune; configs invalid for this trace length fail it too."""
    try:
        area, _, _ = area_estimate(dp, calib, T)
    except ConfigurationError:
        return False
    return area <= a_max


def _init_population(ds, cfg: SearchConfig, calib: CalibrationModel) -> Population:
    """Random on-grid members, resampled until they pass the area prune."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0xA11]))
    members = []
    attempts = 0
    while len(members) < cfg.np_size:
        attempts += 1
        if attempts > 200 * cfg.np_size:
            raise SearchError("could not find enough design points under the area bound")
        dp = random_design(rng, cfg.grids)
        if _passes_prune(dp, calib, ds.trace_len, cfg.a_max):
            members.append(dp)
    seeds = [candidate_seed(cfg.master_seed, 0, i) for i in range(cfg.np_size)]
    reports = _evaluate_all(members, seeds, ds, cfg, calib)
    return Population(members=members, reports=reports)


def run_search(ds: Dataset, cfg: SearchConfig,
               calib: CalibrationModel | None = None) -> SearchResult:
    cfg.validate()
    if calib is None:
        calib = CalibrationModel()
    y_train = ds.labels[ds.train_idx]
    y_test = ds.labels[ds.test_idx]
    for name, y in (("train", y_train), ("test", y_test)):
        if not (np.any(y == 0) and np.any(y == 1)):
            raise SearchError(f"{name} split must contain both classes")

    pop = _init_population(ds, cfg, calib)
    log_rows = [(0, i, r.composite, r.area_luts, r.latency_cycles, r.fidelity)
                for i, r in enumerate(pop.reports)]
    best_cost = min(pop.costs)
    if best_cost >= SENTINEL_COST:
        raise SearchError("no feasible candidate in the initial population")
    trajectory = [best_cost]

    op_rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0xDE]))
    generations = 0
    stopped_early = False
    for g in range(1, cfg.g_max + 1):
        # draw all DE randomness up front so evaluation order cannot matter
        offspring = []
        for i in range(cfg.np_size):
            m = mutate(pop.members, i, cfg.f_de, op_rng)
            o = crossover(m, pop.members[i], cfg.cr, op_rng)
            offspring.append(sanitize(o, cfg.grids))
        seeds = [candidate_seed(cfg.master_seed, g, i) for i in range(cfg.np_size)]
        reports = _evaluate_all(offspring, seeds, ds, cfg, calib)

        for i in range(cfg.np_size):
            log_rows.append((g, i, reports[i].composite, reports[i].area_luts,
                             reports[i].latency_cycles, reports[i].fidelity))
            if reports[i].composite < pop.reports[i].composite:
                pop.members[i] = offspring[i]
                pop.reports[i] = reports[i]

        pop.generation = g
        generations = g
        new_best = min(pop.costs)
        if new_best < best_cost:
            best_cost = new_best
            pop.no_improve = 0
        else:
            pop.no_improve += 1
        trajectory.append(best_cost)
        if pop.no_improve >= cfg.patience:
            stopped_early = True
            break

    best_point, best_report = pop.best
    return SearchResult(best_point=best_point, best_report=best_report,
                        trajectory=trajectory, log_rows=log_rows,
                        generations_run=generations, stopped_early=stopped_early)


def random_probe(n: int, ds: Dataset, cfg: SearchConfig,
                 calib: CalibrationModel | None = None
                 ) -> list[tuple[DesignPoint, CostReport]]:
    """Uniform on-grid samples (area-pruned, resampled) fully evaluated."""
    if n < 1:
        raise ConfigurationError("probe count must be >= 1")
    if calib is None:
        calib = CalibrationModel()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0xB0]))
    points = []
    attempts = 0
    while len(points) < n:
        attempts += 1
        if attempts > 200 * n:
            raise SearchError("could not find enough design points under the area bound")
        dp = random_design(rng, cfg.grids)
        if _passes_prune(dp, calib, ds.trace_len, cfg.a_max):
            points.append(dp)
    seeds = [candidate_seed(cfg.master_seed, 0x9E0BE, i) for i in range(n)]
    reports = _evaluate_all(points, seeds, ds, cfg, calib)
    return list(zip(points, reports))


def write_trajectory_csv(path, trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "best_cost"])
        for g, c in enumerate(trajectory):
            w.writerow([g, f"{c:.6f}"])


def write_log_csv(path, log_rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "member", "cost", "area", "latency", "fidelity"])
        for g, i, cost, area, lat, fid in log_rows:
            w.writerow([g, i, f"{cost:.6f}", f"{area:.1f}", lat, f"{fid:.6f}"])
