"""Command-line entry point: ``rashomon-quartet <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error. Every output file is
written to a temporary sibling and renamed into place, and every subcommand
that writes files leaves a ``*.manifest.json`` next to them recording the
argument vector, so ``rashomon-quartet rerun <manifest>`` repeats the run.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, explain, forge, svg
from .couple import COUPLE_ALPHA, best_linear, best_stump, couple_table, find_couple_exponent, quad_best_linear, quad_best_stump
from .evaluation import evaluate
from .learners import fit_forest, fit_linear, fit_network, fit_tree, load_model, dumps_model
from .learners.network import DEFAULT_MAX_EPOCHS
from .synth import DEFAULT_SEED, GenConfig, format_csv, generate, read_csv

MODEL_FILES = {"linear": "linear.json", "tree": "tree.json", "forest": "forest.json", "network": "network.json"}


_UMASK = os.umask(0)
os.umask(_UMASK)


class UsageError(Exception):
    pass


# --- output plumbing ----------------------------------------------------------


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    config: dict
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    tool_version: str = __version__
    wall_clock_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


class Outputs:
    """Collects rendered outputs and commits them only after the command succeeded."""

    def __init__(self):
        self.pending: list[tuple[Path, str]] = []

    def add(self, path, text: str) -> None:
        self.pending.append((Path(path), text))

    def commit(self) -> list[str]:
        for path, text in self.pending:
            write_atomic(path, text)
        return [str(p) for p, _ in self.pending]


def _existing(path: str) -> str:
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    return path


def _load_models(paths):
    # shell globs over a model directory also match the run manifest
    keep = [p for p in paths if not p.endswith(".manifest.json")]
    if len(keep) < len(paths):
        print(f"note: skipped {len(paths) - len(keep)} manifest file(s)", file=sys.stderr)
    if not keep:
        raise UsageError("no model files given")
    return [load_model(_existing(p)) for p in keep]


def _load_data(path):
    return read_csv(_existing(path))


def _floats(text: str) -> list[float]:
    """Comma-separated values; an item ``start:stop:step`` expands to an inclusive range."""
    out: list[float] = []
    try:
        for item in (t.strip() for t in text.split(",")):
            if not item:
                continue
            if ":" in item:
                start, stop, step = (eval_fraction(v) for v in item.split(":"))
                if step <= 0:
                    raise ValueError("step must be positive")
                k = int(math.floor((stop - start) / step + 1e-9))
                out.extend(round(start + i * step, 12) for i in range(k + 1))
            else:
                out.append(eval_fraction(item))
    except ValueError as e:
        raise UsageError(f"bad number list {text!r}: {e}") from None
    if not out:
        raise UsageError(f"empty number list {text!r}")
    return out


def eval_fraction(t: str) -> float:
    t = t.strip()
    if "/" in t:
        a, b = t.split("/", 1)
        return float(a) / float(b)
    return float(t)


# --- subcommands ----------------------------------------------------------------


def _gen_config(a) -> GenConfig:
    return GenConfig(
        theta1=eval_fraction(a.theta1),
        theta2=eval_fraction(a.theta2),
        rho=eval_fraction(a.rho),
        sigma_eps=eval_fraction(a.sigma_eps),
        n_train=a.n_train,
        n_test=a.n_test,
        seed=a.seed,
    )


def cmd_generate(a, out: Outputs) -> dict:
    cfg = _gen_config(a)
    train, test = generate(cfg)
    d = Path(a.out_dir)
    out.add(d / "rq_train.csv", format_csv(train))
    out.add(d / "rq_test.csv", format_csv(test))
    print(f"train: {train.n_rows} rows, test: {test.n_rows} rows, seed {cfg.seed}")
    return {"config": cfg.to_dict(), "seed": cfg.seed}


def _fit_all(train, a):
    families = a.families
    models = {}
    if "linear" in families:
        models["linear"] = fit_linear(train)
    if "tree" in families:
        models["tree"] = fit_tree(train, a.max_depth, a.min_split)
    if "forest" in families:
        models["forest"] = fit_forest(train, a.n_trees, a.mtry, a.min_node, seed=a.seed)
    if "network" in families:
        models["network"] = fit_network(
            train, a.hidden, a.grad_threshold, a.max_epochs, seed=a.seed, init=a.network_init
        )
    return models


def cmd_train(a, out: Outputs) -> dict:
    train = _load_data(a.train)
    models = _fit_all(train, a)
    for fam, m in models.items():
        out.add(Path(a.out_dir) / MODEL_FILES[fam], dumps_model(m))
        print(m.report())
        print()
    return {"seed": a.seed, "inputs": [a.train]}


def cmd_eval(a, out: Outputs) -> dict:
    models = _load_models(a.models)
    test = _load_data(a.test)
    perf = evaluate(models, test)
    print(perf.table(), end="")
    if a.out:
        out.add(a.out, perf.to_json())
    else:
        sys.stdout.write(perf.to_json())
    return {"inputs": [*a.models, a.test]}


def _features(models, wanted):
    names = list(models[0].feature_names)
    if wanted:
        for f in wanted:
            if f not in names:
                raise UsageError(f"unknown feature {f!r}; have {names}")
        return wanted
    return names


def cmd_pdp(a, out: Outputs) -> dict:
    models = _load_models(a.models)
    data = _load_data(a.data)
    profiles = []
    for m in models:
        for f in _features(models, a.features):
            if a.n_boot > 0:
                profiles.append(explain.pdp_ci(m, data, f, a.n_boot, a.ci_level, a.seed, a.grid_size))
            else:
                profiles.append(explain.pdp(m, data, f, a.grid_size))
    out.add(a.out, explain.format_pdp_csv(profiles))
    if a.svg:
        out.add(a.svg, svg.pdp_grid(profiles))
    print(f"{len(profiles)} profiles")
    return {"seed": a.seed, "inputs": [*a.models, a.data]}


def cmd_importance(a, out: Outputs) -> dict:
    models = _load_models(a.models)
    test = _load_data(a.test)
    reports = [explain.permutation_importance(m, test, a.n_permutations, a.seed) for m in models]
    for r in reports:
        print(r.model + ": " + ", ".join(f"{k}={v:.4f}" for k, v in r.importance().items()))
    out.add(a.out, explain.format_importance_csv(reports))
    return {"seed": a.seed, "inputs": [*a.models, a.test]}


def cmd_residuals(a, out: Outputs) -> dict:
    models = _load_models(a.models)
    test = _load_data(a.test)
    rt = explain.residual_table(models, test)
    C = explain.residual_correlation(rt)
    print("residual correlation")
    for label, row in zip(rt.labels, C):
        print(f"{label:>20s} " + " ".join(f"{v:7.4f}" for v in row))
    out.add(a.out, explain.format_residuals_csv(rt))
    if a.svg:
        out.add(a.svg, svg.residual_parcoord(rt, a.max_lines))
    return {"inputs": [*a.models, a.test]}


def cmd_forge(a, out: Outputs) -> dict:
    if a.seed_stop < a.seed_start:
        raise UsageError("--seed-stop must be >= --seed-start")
    plan = forge.SearchPlan(
        theta1=_floats(a.theta1),
        theta2=_floats(a.theta2),
        rho=_floats(a.rho),
        seeds=range(a.seed_start, a.seed_stop + 1),
        budget=a.budget,
        sigma_eps=eval_fraction(a.sigma_eps),
        n_train=a.n_train,
        n_test=a.n_test,
        n_inits=a.n_inits,
        prune_above=a.prune_above,
        n_threads=a.threads,
    )
    jsonl = Path(a.out)
    jsonl.parent.mkdir(parents=True, exist_ok=True)
    previous = forge.load_runs(jsonl) if a.resume else []
    if not a.resume and jsonl.exists():
        jsonl.unlink()
    grid = plan.grid()
    summary: dict = {"plan": {"grid": grid, "seeds": [a.seed_start, a.seed_stop], "budget": a.budget}}
    on_run = lambda r: forge.append_run(jsonl, r)
    if len(grid) == 1:
        key = forge.resume_key(plan.config(*grid[0]))
        done = {r.seed: r for r in previous if forge.resume_key(r.config) == key}
        ranked = forge.seed_sweep(plan, on_run=on_run, done=done)
        for r in ranked[: a.top]:
            print(f"seed {r.seed:6d}  spread {r.spread:.5f}  init {r.network_init}  " + "  ".join(f"{v:.4f}" for v in r.perf.r2().values()))
        summary["ranked"] = [r.to_dict() for r in ranked]
    else:
        points = forge.theta_grid_search(plan, on_run=on_run)
        for p in points[: a.top]:
            print(f"theta1={p.theta1:g} theta2={p.theta2:g} rho={p.rho:g}  best spread {p.best_spread:.5f} (seed {p.best_seed})")
        summary["grid_ranking"] = [
            {"theta1": p.theta1, "theta2": p.theta2, "rho": p.rho, "best_spread": p.best_spread, "best_seed": p.best_seed, "n_valid": p.n_valid}
            for p in points
        ]
    out.add(jsonl.with_suffix(".summary.json"), json.dumps(summary, indent=1, allow_nan=True) + "\n")
    return {"plan": summary["plan"], "outputs_extra": [str(jsonl)]}


def cmd_select(a, out: Outputs) -> dict:
    """First run in spread order whose refitted quartet passes every story check."""
    runs = forge.rank(forge.load_runs(_existing(a.runs)))
    if not runs:
        raise UsageError(f"{a.runs} holds no valid runs")
    tried = []
    chosen = None
    for r in runs[: a.max_candidates]:
        if a.max_spread is not None and r.spread > a.max_spread:
            break
        train, test = generate(r.config)
        q = forge.fit_quartet(train, r.seed, r.network_init)
        checks = forge.story_checks(q, test, r.seed)
        # the refit must reproduce the recorded scores exactly
        if evaluate(q.models(), test).to_dict() != r.perf.to_dict():
            raise RuntimeError(f"seed {r.seed}: refit does not reproduce the recorded run")
        failed = [k for k, v in checks.items() if not v]
        print(f"seed {r.seed:6d}  spread {r.spread:.5f}  " + ("all checks pass" if not failed else "fails: " + "; ".join(failed)))
        tried.append({"seed": r.seed, "spread": r.spread, "network_init": r.network_init, "checks": checks})
        if not failed:
            chosen = r
            break
    if chosen is None:
        raise RuntimeError("no candidate passed every check")
    doc = {
        "seed": chosen.seed,
        "network_init": chosen.network_init,
        "spread": chosen.spread,
        "config": chosen.config.to_dict(),
        "params": forge.FamilyParams().to_dict(),
        "performance": chosen.perf.to_dict(),
        "candidates_checked": tried,
    }
    out.add(a.out, json.dumps(doc, indent=1) + "\n")
    return {"seed": chosen.seed, "inputs": [a.runs]}


def cmd_couple(a, out: Outputs) -> dict:
    alpha_star = find_couple_exponent()
    alphas = _floats(a.alphas) if a.alphas else [0.0, 0.25, alpha_star, 0.5, 1.0]
    print(f"{'alpha':>10s} {'b1':>12s} {'b0':>12s} {'mse_linear':>14s} {'mse_stump':>14s}")
    for row in couple_table(alphas):
        print(f"{row['alpha']:10.6f} {row['b1']:12.8f} {row['b0']:12.8f} {row['mse_linear']:14.10f} {row['mse_stump']:14.10f}")
    b1, ml = best_linear(alpha_star)
    b0, ms = best_stump(alpha_star)
    qb1, qml = quad_best_linear(alpha_star)
    qb0, qms = quad_best_stump(alpha_star)
    print(f"\ntie exponent alpha* = {alpha_star:.12f} (sqrt(3)-1)/2 = {COUPLE_ALPHA:.12f}")
    print(f"b1 = {b1:.10f}, b0 = {b0:.10f}, mse_linear = {ml:.12f}, mse_stump = {ms:.12f}")
    print(f"quadrature: b1 = {qb1:.10f}, b0 = {qb0:.10f}, mse_linear = {qml:.12f}, mse_stump = {qms:.12f}")
    if a.svg:
        out.add(a.svg, svg.couple_curves(alpha_star, b1, b0))
    return {}


def cmd_plot(a, out: Outputs) -> dict:
    if a.kind == "pdp_grid":
        text = Path(_existing(a.inputs[0])).read_text(encoding="utf-8")
        doc = svg.pdp_grid(explain.parse_pdp_csv(text))
    elif a.kind == "residual_parcoord":
        text = Path(_existing(a.inputs[0])).read_text(encoding="utf-8")
        doc = svg.residual_parcoord(explain.parse_residuals_csv(text), a.max_lines)
    elif a.kind == "pairs_matrix":
        sets = [_load_data(p) for p in a.inputs]
        labels = a.labels.split(",") if a.labels else [Path(p).stem for p in a.inputs]
        if len(labels) != len(sets):
            raise UsageError("--labels needs one label per input")
        doc = svg.pairs_matrix(sets, labels, a.max_points)
    else:
        alpha = eval_fraction(a.inputs[0]) if a.inputs else find_couple_exponent()
        doc = svg.couple_curves(alpha, best_linear(alpha)[0], best_stump(alpha)[0])
    out.add(a.out, doc)
    return {"inputs": list(a.inputs)}


def cmd_quartet(a, out: Outputs) -> dict:
    """Data, the four models, metrics and every explanation for one seed."""
    cfg = _gen_config(a)
    train, test = generate(cfg)
    d = Path(a.out_dir)
    out.add(d / "rq_train.csv", format_csv(train))
    out.add(d / "rq_test.csv", format_csv(test))
    q = forge.fit_quartet(train, cfg.seed, a.network_init)
    models = q.models()
    if a.save_models:
        for fam, m in zip(forge.FAMILIES, models):
            out.add(d / MODEL_FILES[fam], dumps_model(m))
    for m in models:
        print(m.report())
        print()
    perf = evaluate(models, test)
    print(perf.table())
    out.add(d / "performance.json", perf.to_json())
    profiles = [explain.pdp_ci(m, test, f, a.n_boot, 0.95, cfg.seed) for m in models for f in test.feature_names]
    out.add(d / "pdp.csv", explain.format_pdp_csv(profiles))
    out.add(d / "pdp.svg", svg.pdp_grid(profiles))
    reports = [explain.permutation_importance(m, test, 1, cfg.seed) for m in models]
    out.add(d / "importance.csv", explain.format_importance_csv(reports))
    rt = explain.residual_table(models, test)
    out.add(d / "residuals.csv", explain.format_residuals_csv(rt))
    out.add(d / "residuals.svg", svg.residual_parcoord(rt, a.max_lines))
    out.add(d / "pairs.svg", svg.pairs_matrix([train, test], ["train", "test"]))
    checks = forge.story_checks(q, test, cfg.seed)
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    return {"config": cfg.to_dict(), "seed": cfg.seed, "network_init": a.network_init, "stories": checks}


def cmd_rerun(a, out: Outputs) -> dict:
    m = json.loads(Path(_existing(a.manifest)).read_text(encoding="utf-8"))
    return {"rerun": m["argv"]}


# --- parser ---------------------------------------------------------------------


def _add_gen(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed (default 1568)")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--theta1", default="0.6")
    p.add_argument("--theta2", default="1/3")
    p.add_argument("--rho", default="0.9")
    p.add_argument("--sigma-eps", default="1/3", help="noise standard deviation")


def _add_learners(p):
    p.add_argument("--families", nargs="+", default=list(MODEL_FILES), choices=list(MODEL_FILES))
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--min-split", type=int, default=250)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--min-node", type=int, default=5)
    p.add_argument("--hidden", type=int, nargs="+", default=[8, 4])
    p.add_argument("--grad-threshold", type=float, default=0.05)
    p.add_argument("--max-epochs", type=int, default=DEFAULT_MAX_EPOCHS)
    p.add_argument("--network-init", type=int, default=0, help="index of the network initialisation substream")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rashomon-quartet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write rq_train.csv and rq_test.csv")
    _add_gen(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit models and save them as JSON")
    p.add_argument("--train", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_learners(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="R^2 / RMSE / MSE table on a test set")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pdp", help="partial dependence profiles (with bootstrap bands if --n-boot > 0)")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--features", nargs="*")
    p.add_argument("--n-boot", type=int, default=100)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--grid-size", type=int, default=explain.DEFAULT_GRID_SIZE)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_pdp)

    p = sub.add_parser("importance", help="permutation importance")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--n-permutations", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("residuals", help="residual table, correlations, parallel-coordinate plot")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--max-lines", type=int, default=None)
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("forge", help="seed sweep (one theta point) or theta grid search")
    p.add_argument("--theta1", default="0.6", help="comma-separated values or start:stop:step")
    p.add_argument("--theta2", default="1/3")
    p.add_argument("--rho", default="0.9")
    p.add_argument("--sigma-eps", default="1/3")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--seed-start", type=int, default=1)
    p.add_argument("--seed-stop", type=int, default=2000)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--n-inits", type=int, default=5)
    p.add_argument("--prune-above", type=float, default=None)
    p.add_argument("--threads", type=int, default=None, help="default: $RQ_THREADS or 1")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--resume", action="store_true", help="reuse runs already in --out")
    p.add_argument("--out", required=True, help="JSON lines file, one run per line")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("select", help="pick the best-ranked forge run whose quartet passes the explanation checks")
    p.add_argument("--runs", required=True, help="forge JSON lines file")
    p.add_argument("--max-candidates", type=int, default=50)
    p.add_argument("--max-spread", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("couple", help="the analytic two-model tie")
    p.add_argument("--alphas", help="comma-separated exponents for the table")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("plot", help="render an SVG from exported files")
    p.add_argument("kind", choices=["pdp_grid", "residual_parcoord", "pairs_matrix", "couple_curves"])
    p.add_argument("inputs", nargs="*")
    p.add_argument("--labels")
    p.add_argument("--max-lines", type=int, default=None)
    p.add_argument("--max-points", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("quartet", help="data, models, metrics and explanations for one seed")
    _add_gen(p)
    p.add_argument("--network-init", type=int, default=0)
    p.add_argument("--n-boot", type=int, default=100)
    p.add_argument("--max-lines", type=int, default=None)
    p.add_argument("--save-models", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_quartet)

    p = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return ap


def _manifest_path(a, outputs: list[str]) -> Path | None:
    if getattr(a, "out_dir", None):
        return Path(a.out_dir) / f"{a.command}.manifest.json"
    if outputs:
        return Path(outputs[0]).with_suffix(".manifest.json")
    return None


def run(argv: list[str]) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    if a.command == "rerun":
        try:
            info = cmd_rerun(a, Outputs())
        except UsageError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        return run(info["rerun"])
    out = Outputs()
    t0 = time.perf_counter()
    try:
        info = a.func(a, out) or {}
        written = out.commit()
        written += info.pop("outputs_extra", [])
        mpath = _manifest_path(a, written)
        if mpath is not None:
            config = {k: v for k, v in vars(a).items() if k not in ("func",)}
            config.update({k: v for k, v in info.items() if k not in ("inputs", "seed")})
            manifest = RunManifest(
                subcommand=a.command,
                argv=list(argv),
                config=json.loads(json.dumps(config, default=str)),
                inputs=info.get("inputs", []),
                outputs=written,
                seed=info.get("seed", getattr(a, "seed", None)),
                wall_clock_s=round(time.perf_counter() - t0, 3),
            )
            write_atomic(mpath, manifest.to_json())
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI reports every failure as exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
