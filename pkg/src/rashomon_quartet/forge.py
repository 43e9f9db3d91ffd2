"""Search for data-generating parameters and seeds that tie the four families.

A candidate is a (GenConfig, seed) pair. Evaluating it generates the data,
fits the linear model, the depth-limited tree, the forest and the network,
and scores all four on the candidate's own test set. The objective is the
spread, max - min of the four test R^2 values.

The network is the only family whose fit depends strongly on its starting
point, so each candidate tries ``n_inits`` initialisations and keeps the one
that gives the smallest spread (lowest init index on ties). Non-converged
initialisations are skipped; if none converges the run is ``invalid``.

``prune_above`` is an exact shortcut for sweeps aimed at a spread target:
the spread of four models is at least the spread of any three, so when the
linear, tree and forest R^2 already differ by more than the target the
network is never trained and the run is recorded as ``pruned`` with that
three-model spread as a lower bound.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import explain
from ._parallel import pmap, resolve_threads
from .evaluation import PerfReport, Scores, evaluate, score
from .learners import fit_forest, fit_linear, fit_network, fit_tree
from .learners.network import DEFAULT_MAX_EPOCHS
from .synth import GenConfig, generate

OK = "ok"
PRUNED = "pruned"
INVALID = "invalid"


@dataclass(frozen=True)
class FamilyParams:
    tree_max_depth: int = 3
    tree_min_split: int = 250
    forest_n_trees: int = 100
    forest_mtry: int | None = None
    forest_min_node: int = 5
    network_hidden: tuple[int, ...] = (8, 4)
    network_threshold: float = 0.05
    network_max_epochs: int = DEFAULT_MAX_EPOCHS

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["network_hidden"] = list(self.network_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FamilyParams":
        d = dict(d)
        if "network_hidden" in d:
            d["network_hidden"] = tuple(d["network_hidden"])
        return cls(**d)


@dataclass(frozen=True)
class Quartet:
    linear: object
    tree: object
    forest: object
    network: object

    def models(self) -> list:
        return [self.linear, self.tree, self.forest, self.network]


def fit_quartet(train, seed: int, network_init: int = 0, params: FamilyParams = FamilyParams()) -> Quartet:
    """The four models with the given hyperparameters; every random stream derives from ``seed``."""
    return Quartet(
        fit_linear(train),
        fit_tree(train, params.tree_max_depth, params.tree_min_split),
        fit_forest(train, params.forest_n_trees, params.forest_mtry, params.forest_min_node, seed=seed),
        fit_network(
            train, params.network_hidden, params.network_threshold, params.network_max_epochs, seed=seed, init=network_init
        ),
    )


@dataclass(frozen=True, eq=False)
class QuartetRun:
    config: GenConfig
    seed: int
    status: str
    spread: float
    perf: PerfReport
    network_init: int | None = None
    models: Quartet | None = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        return self.status == OK

    def key(self):
        return (self.spread, self.seed)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "seed": int(self.seed),
            "status": self.status,
            "spread": self.spread,
            "network_init": self.network_init,
            "perf": self.perf.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuartetRun":
        return cls(
            GenConfig.from_dict(d["config"]),
            int(d["seed"]),
            d["status"],
            float(d["spread"]),
            PerfReport.from_dict(d["perf"]),
            d.get("network_init"),
        )

    def same_result(self, other: "QuartetRun") -> bool:
        return self.to_dict() == other.to_dict()


def _spread(values: Iterable[float]) -> float:
    values = list(values)
    return max(values) - min(values)


def evaluate_candidate(
    config: GenConfig,
    seed: int | None = None,
    params: FamilyParams = FamilyParams(),
    n_inits: int = 5,
    prune_above: float | None = None,
    keep_models: bool = False,
) -> QuartetRun:
    """Generate, fit and score one candidate. ``seed`` overrides ``config.seed``."""
    if seed is not None:
        config = replace(config, seed=int(seed))
    seed = int(config.seed)
    train, test = generate(config)
    lm = fit_linear(train)
    dt = fit_tree(train, params.tree_max_depth, params.tree_min_split)
    rf = fit_forest(train, params.forest_n_trees, params.forest_mtry, params.forest_min_node, seed=seed)
    base = evaluate([lm, dt, rf], test)
    base_spread = base.spread
    if prune_above is not None and base_spread > prune_above:
        return QuartetRun(config, seed, PRUNED, base_spread, base)

    best = None  # (spread, init, model, scores)
    for init in range(n_inits):
        nn = fit_network(
            train, params.network_hidden, params.network_threshold, params.network_max_epochs, seed=seed, init=init
        )
        if not nn.converged:
            continue
        s = score(test.y, nn.predict(test))
        spread = _spread([*base.r2().values(), s.r2])
        if best is None or spread < best[0]:
            best = (spread, init, nn, s)
        if spread <= base_spread:
            break  # cannot be beaten: four-model spread >= three-model spread
    if best is None:
        return QuartetRun(config, seed, INVALID, math.inf, base)
    spread, init, nn, s = best
    perf = PerfReport({**base.scores, nn.label: s}, test.n_rows)
    models = Quartet(lm, dt, rf, nn) if keep_models else None
    return QuartetRun(config, seed, OK, spread, perf, init, models)


@dataclass(frozen=True)
class SearchPlan:
    theta1: tuple[float, ...] = (0.6,)
    theta2: tuple[float, ...] = (1.0 / 3.0,)
    rho: tuple[float, ...] = (0.9,)
    seeds: tuple[int, ...] = tuple(range(1, 2001))
    budget: int = 2000
    sigma_eps: float = 1.0 / 3.0
    n_train: int = 1000
    n_test: int = 10000
    params: FamilyParams = FamilyParams()
    n_inits: int = 5
    prune_above: float | None = None
    n_threads: int | None = None

    def __post_init__(self):
        for name in ("theta1", "theta2", "rho", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"{name} grid is empty")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    def grid(self) -> list[tuple[float, float, float]]:
        return list(itertools.product(self.theta1, self.theta2, self.rho))

    def config(self, theta1: float, theta2: float, rho: float, seed: int = 0) -> GenConfig:
        return GenConfig(
            theta1=theta1,
            theta2=theta2,
            rho=rho,
            sigma_eps=self.sigma_eps,
            n_train=self.n_train,
            n_test=self.n_test,
            seed=seed,
        )


def rank(runs: Sequence[QuartetRun]) -> list[QuartetRun]:
    """Valid runs by (spread, seed)."""
    return sorted((r for r in runs if r.valid), key=QuartetRun.key)


def seed_sweep(
    plan: SearchPlan,
    theta: tuple[float, float, float] | None = None,
    budget: int | None = None,
    on_run: Callable[[QuartetRun], None] | None = None,
    done: dict[int, QuartetRun] | None = None,
) -> list[QuartetRun]:
    """Evaluate the first ``budget`` seeds of the plan at one theta point; valid runs ranked.

    ``theta`` defaults to the plan's grid when it has exactly one point.
    ``done`` maps seeds to runs already evaluated (a resumed sweep); those are
    reused instead of recomputed. ``on_run`` sees every newly evaluated run in
    seed order, pruned and invalid ones included.
    """
    if theta is None:
        grid = plan.grid()
        if len(grid) != 1:
            raise ValueError("plan has several theta points; pass theta or use theta_grid_search")
        theta = grid[0]
    budget = plan.budget if budget is None else budget
    seeds = list(plan.seeds[:budget])
    done = done or {}
    todo = [s for s in seeds if s not in done]

    def run(seed):
        return evaluate_candidate(plan.config(*theta, seed=seed), None, plan.params, plan.n_inits, plan.prune_above)

    # evaluate in chunks so progress is reported (and persisted) in seed order
    chunk = 4 * resolve_threads(plan.n_threads)
    by_seed = dict(done)
    for i in range(0, len(todo), chunk):
        for r in pmap(run, todo[i : i + chunk], plan.n_threads):
            by_seed[r.seed] = r
            if on_run is not None:
                on_run(r)
    return rank([by_seed[s] for s in seeds])


@dataclass(frozen=True)
class GridPoint:
    theta1: float
    theta2: float
    rho: float
    best_spread: float
    best_seed: int | None
    n_valid: int
    runs: tuple[QuartetRun, ...] = field(default=(), repr=False)


def theta_grid_search(plan: SearchPlan, on_run: Callable[[QuartetRun], None] | None = None) -> list[GridPoint]:
    """Short seed sweep at every theta point, points ranked by their best spread.

    The budget is split evenly: each point gets max(1, budget // n_points)
    seeds, taken from the front of the plan's seed list. Ties keep grid order.
    """
    grid = plan.grid()
    inner = max(1, plan.budget // len(grid))
    points = []
    for theta in grid:
        runs = seed_sweep(plan, theta, inner, on_run)
        best = runs[0] if runs else None
        points.append(
            GridPoint(
                *theta,
                best_spread=best.spread if best else math.inf,
                best_seed=best.seed if best else None,
                n_valid=len(runs),
                runs=tuple(runs),
            )
        )
    order = sorted(range(len(points)), key=lambda i: (points[i].best_spread, i))
    return [points[i] for i in order]


# --- JSON lines persistence ---------------------------------------------------


def run_to_json(run: QuartetRun) -> str:
    return json.dumps(run.to_dict(), sort_keys=True, allow_nan=True)


def append_run(path, run: QuartetRun) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(run_to_json(run) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_runs(path) -> list[QuartetRun]:
    """Runs from a JSON lines file; a truncated final line (interrupted write) is ignored."""
    if not os.path.exists(path):
        return []
    runs = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            runs.append(QuartetRun.from_dict(json.loads(line)))
        except json.JSONDecodeError:
            if i == len(lines) - 1 or all(not x.strip() for x in lines[i + 1 :]):
                break
            raise
    return runs


def resume_key(config: GenConfig) -> tuple:
    d = config.to_dict()
    d.pop("seed")
    return tuple(sorted(d.items()))


# --- explanation checks -------------------------------------------------------

FAMILIES = ("linear", "tree", "forest", "network")


def story_checks(quartet: Quartet, test, seed: int, min_residual_corr: float = 0.8) -> dict[str, bool]:
    """Whether a fitted quartet tells the intended four different stories.

    The checks are about explanations, not accuracy: the linear slope on x1
    dominates x2 and x3 is not significant, the tree uses x1 alone, x1 is the
    top permutation importance everywhere while the forest (unlike the tree)
    still credits x3, the network's profile in x3 changes direction, and the
    residuals of all four models stay strongly correlated.
    """
    lm, dt, rf, nn = quartet.models()
    b = lm.coefficients
    p3 = lm.fit.p_values[3] if len(b) > 2 else 1.0
    imp = {m.label: explain.permutation_importance(m, test, 1, seed).importance() for m in quartet.models()}
    top_x1 = all(max(d, key=d.get) == "x1" for d in imp.values())
    prof = explain.pdp(nn, test, "x3").pd
    steps = np.diff(prof)
    tol = 1e-6
    non_monotone = bool(np.any(steps > tol) and np.any(steps < -tol))
    C = explain.residual_correlation(explain.residual_table(quartet.models(), test))
    return {
        "linear: beta1 > 3 beta2": bool(b[0] > 3.0 * b[1]),
        "linear: x3 not significant (p > 0.05)": bool(p3 > 0.05),
        "tree: splits only on x1": set(dt.split_features()) == {"x1"},
        "importance: x1 ranked first by every model": top_x1,
        "forest: x3 importance > 0": imp[rf.label]["x3"] > 0,
        "tree: x3 importance == 0": imp[dt.label]["x3"] == 0.0,
        "network: x3 profile non-monotonic": non_monotone,
        f"residual correlations >= {min_residual_corr}": bool(np.nanmin(C) >= min_residual_corr),
    }

