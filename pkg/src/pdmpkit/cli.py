"""Command line runner.

    python3 -m pdmpkit SUBCOMMAND --config FILE --seed N --out DIR

Exit status is 0 when every verdict passes, 1 when some verdict fails and
2 on errors.  Each run writes ``manifest.json`` listing the inputs and the
SHA-256 of every output file; ``--replay MANIFEST`` reruns a manifest and
compares digests.  Set ``PDMPSIM_WORKERS`` to use more worker threads.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import datetime
import json
import os
import sys
import traceback

import numpy as np
import scipy

from . import __version__
from ._rng import make_rng
from .config import build_from_config, default_state, parse_config_text, BUDGET_KEYS, _parse
from .core import HybridState, derive_constants, sample_states, validate_spec, verify_assumptions
from .coupling import coupling_time_kappa, geometric_tail, verify_B_conditions
from .errors import ConfigError
from .ergodic import (check_P_equals_GW, check_relation_G, convergence_experiment,
                      equal_times, estimate_invariant_chain, estimate_invariant_pdmp,
                      invariant_ensemble, short_time_check, slln_chain, slln_pdmp)
from .io import (file_digest, read_measure, write_measure, write_record, write_result,
                 write_series, write_trajectory)
from .metrics import fm_distance_exact, fm_distance_subsampled, lyapunov_moment
from .reports import Verdict, verdict_pairs
from .samplers import simulate_chain, simulate_pdmp

SUBCOMMANDS = ("simulate-chain", "simulate-pdmp", "derive-constants", "check-assumptions",
               "verify-coupling", "fm-distance", "invariant", "relation-gw", "slln-chain",
               "slln-pdmp", "short-time", "converge", "operon-demo")


def workers():
    try:
        return max(1, int(os.environ.get("PDMPSIM_WORKERS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map over independent tasks; results keep the input order."""
    items = list(items)
    n = workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def f_bounded(ref):
    return lambda y, r: np.minimum(1.0, np.linalg.norm(y - ref, axis=1))


class Run:
    """Context handed to each subcommand; collects files and verdicts."""

    def __init__(self, spec, inputs, plan, seed, out):
        self.spec, self.inputs, self.plan, self.seed, self.out = spec, inputs, plan, seed, out
        self.files, self.verdicts, self.streams = [], [], []
        self.meta = {"spec_hash": spec.spec_hash(), "seed": seed}
        self._consts = None

    def rng(self, k):
        self.streams.append(k)
        return make_rng(self.seed, k)

    def get(self, key, default):
        return self.plan.get(key, default)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def consts(self):
        if self._consts is None:
            self._consts = derive_constants(self.spec, self.inputs, self.rng(1000),
                                            self.get("grid", 200), self.get("mc", 2000))
        return self._consts

    def result(self, res):
        self.files += write_result(self.out, res, self.meta)
        self.verdicts += res.verdicts


def cmd_simulate_chain(run):
    x0 = default_state(run.spec, run.plan)
    traj = simulate_chain(run.spec, run.rng(0), x0, run.get("steps", 1000))
    write_trajectory(run.path("trajectory.csv"), traj, run.meta["spec_hash"], run.seed)


def cmd_simulate_pdmp(run):
    x0 = default_state(run.spec, run.plan)
    horizon = run.get("horizon", 100.0)
    path = simulate_pdmp(run.spec, run.rng(0), x0, horizon)
    write_trajectory(run.path("trajectory.csv"), path.traj, run.meta["spec_hash"], run.seed)
    t = np.linspace(0, horizon, run.get("samples", 1000) + 1)
    ys, regs = path.at(t)
    series = {"t": t, **{f"y{j}": ys[:, j] for j in range(ys.shape[1])}, "regime": regs}
    write_series(run.path("path.csv"), series, run.meta)


def cmd_derive_constants(run):
    c = run.consts()
    write_record(run.path("constants.txt"), c.to_pairs(), run.meta)


def cmd_check_assumptions(run):
    validate_spec(run.spec, run.rng(1))
    c = run.consts()
    rep = verify_assumptions(run.spec, c, run.rng(2), run.get("pairs", 200))
    write_record(run.path("constants.txt"), c.to_pairs(), run.meta)
    write_record(run.path("assumptions.txt"), rep.to_pairs(), run.meta)
    run.verdicts += rep.verdicts


def cmd_verify_coupling(run):
    c = run.consts()
    rep = verify_B_conditions(run.spec, c, run.rng(1), run.get("pairs", 50),
                              run.get("draws", 10**4), run.get("states", 50),
                              run.get("draws", 10**4))
    write_record(run.path("coupling.txt"), rep.to_pairs(), run.meta)
    keys = ["pair", "i1", "i2", "rho", "mass", "mass_se", "contraction", "contraction_se",
            "u_mass", "u_se"]
    series = {k: np.array([r[k] for r in rep.pairs]) for k in keys}
    write_series(run.path("coupling_pairs.csv"), series, run.meta)
    run.verdicts += rep.verdicts
    # coupling times from starts with V(x1) + V(x2) below R
    n = run.get("replicas", 1000)
    rng = run.rng(2)
    y1 = sample_states(run.spec, rng, n, c.R / 2)
    y2 = sample_states(run.spec, rng, n, c.R / 2)
    r1 = rng.integers(0, run.spec.regime_count, n)
    r2 = rng.integers(0, run.spec.regime_count, n)
    kappa, cens = coupling_time_kappa(run.spec, c, rng, y1, r1, y2, r2,
                                      run.get("max_steps", 200), convention="N")
    tail, best = geometric_tail(kappa, cens)
    pairs = [("starts", n), ("convention", "N"), ("median", float(np.median(kappa))),
             ("censored", int(cens.sum())), ("smallest_stable_zeta", best)]
    for row in tail:
        pairs += [(f"zeta_{row['zeta']}.{k}", row[k]) for k in ("mean", "se", "stable")]
    write_record(run.path("kappa.txt"), pairs, run.meta)
    run.verdicts.append(Verdict("kappa_tail", best is not None, best or 0.0, 1.0, n))


def _two_measures(run):
    a, b = run.get("measure_a", None), run.get("measure_b", None)
    c = run.get("c", None) or run.consts().c
    if a and b:
        return read_measure(a, c), read_measure(b, c)
    x0 = default_state(run.spec, run.plan)
    n = run.get("samples", 250)
    kw = dict(burn_in=run.get("burn_in", 1000), n=n, thin=run.get("thin", 5))
    return (estimate_invariant_chain(run.spec, run.rng(1), x0, c, **kw),
            estimate_invariant_chain(run.spec, run.rng(2), x0, c, **kw))


def cmd_fm_distance(run):
    mu1, mu2 = _two_measures(run)
    if len(mu1) + len(mu2) <= 500:
        d, spread, how = fm_distance_exact(mu1, mu2), 0.0, "exact"
    else:
        d, spread = fm_distance_subsampled(mu1, mu2, run.rng(3), 500, run.get("seeds", 5))
        how = "subsampled"
    pairs = [("distance", d), ("spread", spread), ("method", how),
             ("size_a", len(mu1)), ("size_b", len(mu2)), ("c", mu1.c)]
    tol = run.get("tolerance", None)
    if tol is not None:
        v = Verdict("distance", d <= tol, d, tol, len(mu1) + len(mu2))
        run.verdicts.append(v)
        pairs += verdict_pairs([v])
    write_record(run.path("distance.txt"), pairs, run.meta)


def cmd_invariant(run):
    c = run.consts()
    x0 = default_state(run.spec, run.plan)
    n = run.get("samples", 10**4)
    mu = estimate_invariant_chain(run.spec, run.rng(1), x0, c.c, run.get("burn_in", 1000), n,
                                  run.get("thin", 5))
    horizon = run.get("horizon", float(n))
    tb = run.get("time_burn_in", horizon / 100)
    nu = estimate_invariant_pdmp(run.spec, run.rng(2), x0, horizon, equal_times(tb, horizon, n),
                                 c.c)
    write_measure(run.path("invariant_chain.csv"), mu, run.meta)
    write_measure(run.path("invariant_pdmp.csv"), nu, run.meta)
    ref = run.spec.reference_point
    v = np.linalg.norm(mu.ys - ref, axis=1)
    m = lyapunov_moment(mu, ref)
    bound = float(np.linalg.norm(x0.y - ref)) + c.b / (1 - c.a) + 3 * v.std(ddof=1) / np.sqrt(n)
    verdict = Verdict("moment_bound", m <= bound, m, bound, n)
    run.verdicts.append(verdict)
    pairs = [("chain_moment", m), ("pdmp_moment", lyapunov_moment(nu, ref)),
             ("chain_mean", mu.ys.mean(axis=0)), ("pdmp_mean", nu.ys.mean(axis=0))]
    write_record(run.path("invariant.txt"), pairs + verdict_pairs([verdict]), run.meta)


def cmd_relation_gw(run):
    c = run.consts()
    x0 = default_state(run.spec, run.plan)
    n = run.get("samples", 10**4)
    mu = estimate_invariant_chain(run.spec, run.rng(1), x0, c.c, run.get("burn_in", 1000), n,
                                  run.get("thin", 1))
    horizon = run.get("horizon", float(n) / run.spec.jump_rate)
    tb = run.get("time_burn_in", horizon / 100)
    nu = estimate_invariant_pdmp(run.spec, run.rng(2), x0, horizon, equal_times(tb, horizon, n),
                                 c.c)
    run.result(check_relation_G(run.spec, run.rng(3), mu, nu, run.get("per_point", 16),
                                run.get("tolerance", None), run.get("block", 2500)))
    res = check_P_equals_GW(run.spec, run.rng(4), x0, run.get("draws", 10**4), c=c.c)
    run.result(res)


def cmd_slln_chain(run):
    x0 = default_state(run.spec, run.plan)
    f = f_bounded(run.spec.reference_point)
    ref = invariant_ensemble(run.spec, run.rng(1), 1.0, 1000, run.get("samples", 1000)).integrate(f)
    res = slln_chain(run.spec, run.rng(2), f, x0, run.get("steps", 10**4),
                     replicas=run.get("replicas", 16), reference=ref,
                     tol=run.get("tolerance", 0.02))
    run.result(res)


def cmd_slln_pdmp(run):
    c = run.consts()
    x0 = default_state(run.spec, run.plan)
    f = f_bounded(run.spec.reference_point)
    horizon = run.get("horizon", 10**3 / run.spec.jump_rate)
    long = 10 * horizon
    nu = estimate_invariant_pdmp(run.spec, run.rng(1), x0, long,
                                 equal_times(long / 100, long, run.get("samples", 10**5)), c.c)
    res = slln_pdmp(run.spec, c, run.rng(2), f, x0, horizon, replicas=run.get("replicas", 8),
                    reference=nu.integrate(f), tol=run.get("tolerance", 0.03))
    run.result(res)


def cmd_short_time(run):
    x0 = default_state(run.spec, run.plan)
    lam = run.spec.jump_rate
    grid = np.asarray(run.get("t_grid", [0.02, 0.05, 0.1, 0.2]), dtype=float) / lam
    draws, seeds = run.get("draws", 10**5), run.get("seeds", 5)
    tasks = [("one", lambda y, r: np.ones(len(y)), 1), ("lipschitz", f_bounded(x0.y), 2)]

    def job(task):
        name, f, k = task
        res = short_time_check(run.spec, make_rng(run.seed, k), f, x0, grid, draws, seeds)
        res.name = f"short_time_{name}"
        return res

    run.streams += [1, 2]
    for res in parallel_map(job, tasks):
        run.result(res)


def cmd_converge(run):
    c = run.consts()
    xa = default_state(run.spec, run.plan)
    yb = run.get("start_b", [5.0] * run.spec.dim)
    xb = HybridState(yb, run.get("regime", 0))
    cps = run.get("checkpoints", [1, 2, 4, 8, 16, 32])
    res = convergence_experiment(run.spec, run.seed, xa, xb, c.c, [int(k) for k in cps],
                                 run.get("replicas", 10**4), run.get("subsample", 250))
    run.result(res)


def cmd_operon_demo(run):
    from .gene import operon_demo, OperonModel
    p = run.spec.params
    if p.get("family") != "operon":
        raise ConfigError("operon-demo needs [model] family = operon")
    m = OperonModel(d=p["d"], rates=tuple(p["rates"]), jump_rate=p["jump_rate"],
                    width=p["width"], density=p["density"], beta_min=p["beta_min"],
                    beta_max=p["beta_max"], eps=p["eps"], perturbation=p["perturbation"])
    horizon = run.get("horizon", 2000.0)
    out = operon_demo(m, run.seed, horizon=horizon,
                      burn_in=run.get("time_burn_in", min(100.0, horizon / 10)),
                      samples=run.get("samples", 10**4), replicas=run.get("replicas", 2000))
    for key in ("invariant", "slln_pdmp", "convergence"):
        run.result(out[key])


COMMANDS = {name: globals()["cmd_" + name.replace("-", "_")] for name in SUBCOMMANDS}


def execute(subcommand, config_text, seed, out_dir, overrides=None, source="<config>"):
    """Run one subcommand; returns ``(exit_status, manifest)``."""
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = {"subcommand": subcommand, "seed": seed, "config_text": config_text,
                "overrides": overrides or {}, "started": started,
                "versions": {"pdmpkit": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "python": sys.version.split()[0]}}
    try:
        cfg = parse_config_text(config_text, source)
        cfg.setdefault("budget", {}).update(overrides or {})
        spec, inputs, plan = build_from_config(cfg, source)
        run = Run(spec, inputs, plan, seed, out_dir)
        manifest.update({"spec_hash": spec.spec_hash(), "budgets": plan})
        COMMANDS[subcommand](run)
        status = 0 if all(v.passed is not False for v in run.verdicts) else 1
        manifest["replica_streams"] = sorted(set(run.streams))
        manifest["outputs"] = {n: file_digest(os.path.join(out_dir, n)) for n in run.files}
        manifest["verdicts"] = {v.name: v.status for v in run.verdicts}
    except Exception as exc:
        status = 2
        with open(os.path.join(out_dir, "error.txt"), "w") as fh:
            fh.write(f"error = {type(exc).__name__}\nmessage = {exc}\n")
            fh.write("".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    manifest["status"] = status
    manifest["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return status, manifest


def replay(manifest_path, out_dir):
    """Rerun a manifest into ``out_dir``; returns ``(match, differences)``."""
    with open(manifest_path) as fh:
        m = json.load(fh)
    status, new = execute(m["subcommand"], m["config_text"], m["seed"], out_dir, m["overrides"])
    old, cur = m.get("outputs", {}), new.get("outputs", {})
    diffs = sorted(k for k in set(old) | set(cur) if old.get(k) != cur.get(k))
    return (not diffs and status == m["status"]), diffs


def _budget_override(text):
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or key not in BUDGET_KEYS:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE with KEY in {sorted(BUDGET_KEYS)}")
    return key, _parse(value, BUDGET_KEYS[key], f"--budget {key}")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="pdmpkit", description=__doc__.split("\n")[0])
    ap.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="configuration file")
    ap.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--replicas", type=int, help="replica count")
    ap.add_argument("--budget", type=_budget_override, action="append", default=[],
                    help="budget override KEY=VALUE (repeatable)")
    ap.add_argument("--replay", metavar="MANIFEST", help="rerun a manifest and compare digests")
    args = ap.parse_args(argv)
    if args.replay:
        try:
            ok, diffs = replay(args.replay, args.out)
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print("replay: identical" if ok else "replay: differs in " + ", ".join(diffs))
        return 0 if ok else 1
    if not args.subcommand or not args.config:
        ap.print_usage(sys.stderr)
        print("error: subcommand and --config are required", file=sys.stderr)
        return 2
    if not 0 <= args.seed < 2 ** 64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    overrides = dict(args.budget)
    if args.replicas is not None:
        overrides["replicas"] = args.replicas
    status, m = execute(args.subcommand, text, args.seed, args.out, overrides, args.config)
    if status == 2:
        print(f"error: {m.get('error')}", file=sys.stderr)
    else:
        for name, st in m.get("verdicts", {}).items():
            print(f"{name}: {st}")
    return status
