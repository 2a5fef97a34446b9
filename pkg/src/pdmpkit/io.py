"""Text formats for trajectories, measures, records and results.

Every file starts with ``#`` comment lines carrying the model hash and the
seed.  Floats are written with ``repr`` so a reread is exact.
"""

import csv
import hashlib
import json
import os

import numpy as np

from .metrics import EmpiricalMeasure
from .reports import fmt, to_record
from .samplers import ChainTrajectory


def _header(fh, meta):
    for k, v in meta.items():
        fh.write(f"# {k} = {fmt(v)}\n")


def _read_header(lines):
    meta, body = {}, []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    return meta, body


def write_trajectory(path, traj, spec_hash, seed):
    """One row per state: k, tau, dtau, theta, h, y, regime.

    Row 0 has no marks; its theta and h cells are empty.
    """
    d, k = traj.ys.shape[1], traj.thetas.shape[1]
    cols = (["k", "tau", "dtau"] + [f"theta{j}" for j in range(k)]
            + [f"h{j}" for j in range(d)] + [f"y{j}" for j in range(d)] + ["regime"])
    with open(path, "w", newline="") as fh:
        _header(fh, {"spec_hash": spec_hash, "seed": seed})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for m in range(len(traj)):
            dt = traj.times[m] - traj.times[m - 1] if m else 0.0
            marks = ([""] * (k + d) if m == 0 else
                     [fmt(v) for v in traj.thetas[m - 1]] + [fmt(v) for v in traj.hs[m - 1]])
            w.writerow([m, fmt(traj.times[m]), fmt(dt)] + marks
                       + [fmt(v) for v in traj.ys[m]] + [int(traj.regs[m])])


def read_trajectory(path):
    with open(path) as fh:
        meta, body = _read_header(fh.read().splitlines())
    rows = list(csv.reader(body))
    cols = rows[0]
    k = sum(c.startswith("theta") for c in cols)
    d = sum(c.startswith("y") for c in cols)
    data = rows[1:]
    times = np.array([float(r[1]) for r in data])
    ys = np.array([[float(v) for v in r[3 + k + d:3 + k + 2 * d]] for r in data]).reshape(-1, d)
    regs = np.array([int(r[-1]) for r in data])
    thetas = np.array([[float(v) for v in r[3:3 + k]] for r in data[1:]]).reshape(-1, k)
    hs = np.array([[float(v) for v in r[3 + k:3 + k + d]] for r in data[1:]]).reshape(-1, d)
    return ChainTrajectory(ys, regs, times, thetas, hs), meta


def write_measure(path, mu, meta):
    d = mu.ys.shape[1]
    with open(path, "w", newline="") as fh:
        _header(fh, {**meta, "c": mu.c})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"y{j}" for j in range(d)] + ["regime", "weight"])
        for y, r, p in zip(mu.ys, mu.regs, mu.weights):
            w.writerow([fmt(v) for v in y] + [int(r), fmt(p)])


def read_measure(path, c=None):
    with open(path) as fh:
        meta, body = _read_header(fh.read().splitlines())
    rows = list(csv.reader(body))[1:]
    ys = np.array([[float(v) for v in r[:-2]] for r in rows])
    regs = np.array([int(r[-2]) for r in rows])
    w = np.array([float(r[-1]) for r in rows])
    c = float(meta.get("c", 1.0)) if c is None else c
    return EmpiricalMeasure(ys, regs, w / w.sum(), c)


def write_record(path, pairs, meta):
    with open(path, "w") as fh:
        _header(fh, meta)
        fh.write(to_record(pairs))


def write_series(path, series, meta):
    keys = list(series)
    cols = [np.ravel(np.asarray(series[k])) for k in keys]
    n = max((len(c) for c in cols), default=0)
    with open(path, "w", newline="") as fh:
        _header(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for m in range(n):
            w.writerow([fmt(c[m]) if m < len(c) else "" for c in cols])


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    return v


def result_document(result, meta=None):
    return json.dumps(_plain({
        "meta": dict(meta or {}), "name": result.name, "digest": result.digest, "passed": result.passed,
        "scalars": result.scalars,
        "verdicts": [{"name": v.name, "status": v.status, "value": v.value,
                      "bound": v.bound, "n": v.n} for v in result.verdicts],
    }), indent=2, sort_keys=True) + "\n"


def write_result(out_dir, result, meta):
    """Structured document plus a CSV with the series; returns the file names."""
    names = [f"{result.name}.json"]
    with open(os.path.join(out_dir, names[0]), "w") as fh:
        fh.write(result_document(result, meta))
    if result.series:
        names.append(f"{result.name}_series.csv")
        write_series(os.path.join(out_dir, names[1]), result.series,
                     {**meta, **{k: v for k, v in result.digest.items() if np.ndim(v) == 0}})
    return names


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
