"""Verdict records and flat key-value serialization."""

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass
class Verdict:
    """Outcome of one numerical check.

    ``passed`` is ``None`` when the check could not be decided.
    """

    name: str
    passed: object
    value: float = math.nan
    bound: float = math.nan
    n: int = 0
    detail: dict = field(default_factory=dict)

    @property
    def status(self):
        if self.passed is None:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def line(self):
        return (f"{self.name}: {self.status} (value={fmt(self.value)}, "
                f"bound={fmt(self.bound)}, n={self.n})")


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(fmt(x) for x in np.ravel(np.asarray(v, dtype=object)))
    return str(v)


def to_record(pairs):
    """Serialize ``(key, value)`` pairs as ``key = value`` lines."""
    return "".join(f"{k} = {fmt(v)}\n" for k, v in pairs)


def parse_record(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def verdict_pairs(verdicts, prefix=""):
    pairs = []
    for v in verdicts:
        key = prefix + v.name
        pairs += [(key + ".status", v.status), (key + ".value", v.value),
                  (key + ".bound", v.bound), (key + ".n", v.n)]
        for k, x in v.detail.items():
            if np.ndim(x) == 0 or len(np.ravel(x)) <= 16:
                pairs.append((f"{key}.{k}", x))
    return pairs
