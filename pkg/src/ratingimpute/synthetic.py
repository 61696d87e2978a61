"""Synthetic rating matrices with controlled correlation and missingness.

A latent multivariate normal sample is binned into five rating categories
per column. Entries are then deleted column by column with low ratings
more likely to go, and any row left empty gets one value back.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .data import RatingMatrix, load_csv, round_half_away, save_csv
from .exceptions import GenerationError

BAND = 0.2
LATENT_CUTS = np.array([-1.5, -0.5, 0.5, 1.5])   # five equal bins over [-2.5, 2.5]
_REPAIR_ITERS = 200
_REPAIR_SLACK = 0.05


@dataclass(frozen=True)
class SynthSpec:
    """Generator inputs. ``seed`` is mandatory for reproducibility."""

    m: int
    n: int
    s: float
    r: float
    seed: int

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError("m and n must be at least 2")
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if self.s - BAND <= -1.0 or self.s + BAND >= 1.0:
            raise ValueError(f"band [{self.s - BAND:.2f}, {self.s + BAND:.2f}] "
                             "is not a valid correlation range")
        if not 0.0 <= self.r < 1.0:
            raise ValueError("r must lie in [0, 1)")


@dataclass(frozen=True)
class SynthInstance:
    truth: RatingMatrix
    observed: RatingMatrix
    spec: SynthSpec
    correlation: np.ndarray
    deletions_per_column: tuple
    rescued: tuple

    def sidecar(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "generator": {
                "correlation": f"uniform off-diagonals in [s-{BAND}, s+{BAND}], "
                               "repaired by eigenvalue clipping and unit-diagonal rescaling",
                "sampling": "zero-mean multivariate normal via Cholesky factor",
                "conversion": "equal-width bins over [-2.5, 2.5], cuts "
                              f"{LATENT_CUTS.tolist()}",
                "deletion": "round(r*m) per column without replacement, weight 6 - x",
                "rng": "numpy default_rng(seed)",
            },
            "deletions_per_column": list(self.deletions_per_column),
            "rescued": [list(e) for e in self.rescued],
        }

    def save(self, directory, prefix="synth"):
        """Write ``<prefix>_truth.csv``, ``<prefix>_observed.csv`` and ``<prefix>_spec.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = (d / f"{prefix}_truth.csv", d / f"{prefix}_observed.csv", d / f"{prefix}_spec.json")
        save_csv(self.truth, paths[0])
        save_csv(self.observed, paths[1])
        paths[2].write_text(json.dumps(self.sidecar(), indent=2) + "\n", encoding="utf-8")
        return paths


def load_instance(sidecar_path) -> SynthInstance:
    """Regenerate an instance from its JSON sidecar."""
    meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    return generate(SynthSpec(**meta["spec"]))


def load_pair(truth_path, observed_path):
    truth, _ = load_csv(truth_path)
    observed, _ = load_csv(observed_path)
    return truth, observed


def _off_band_excess(C, lo, hi):
    off = C[~np.eye(len(C), dtype=bool)]
    return float(max(0.0, (lo - off).max(), (off - hi).max()))


def _psd_repair(C, floor=1e-10):
    vals, vecs = np.linalg.eigh((C + C.T) / 2)
    vals = np.maximum(vals, floor)
    R = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(R))
    R = R / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return (R + R.T) / 2


def random_correlation(n: int, s: float, rng) -> np.ndarray:
    """Band-limited random correlation matrix.

    Off-diagonals are drawn uniformly from ``[s - 0.2, s + 0.2]``. When the
    draw is not positive semidefinite, eigenvalue clipping and re-clipping
    to the band alternate until the repaired matrix sits within 0.05 of the
    band.
    """
    lo, hi = s - BAND, s + BAND
    if lo <= -1.0 or hi >= 1.0:
        raise ValueError(f"band [{lo:.2f}, {hi:.2f}] is not a valid correlation range")
    C = np.eye(n)
    iu = np.triu_indices(n, 1)
    C[iu] = rng.uniform(lo, hi, size=len(iu[0]))
    C = C + np.triu(C, 1).T
    if np.linalg.eigvalsh(C).min() > 0:
        return C
    for _ in range(_REPAIR_ITERS):
        R = _psd_repair(C)
        if _off_band_excess(R, lo, hi) <= 1e-6:
            return R
        C = np.clip(R, lo, hi)
        np.fill_diagonal(C, 1.0)
    if _off_band_excess(R, lo, hi) <= _REPAIR_SLACK:
        return R
    raise GenerationError("positive semidefinite repair did not settle inside the band")


def to_ratings(Z) -> np.ndarray:
    """Bin latent standard-normal values into ratings 1..5."""
    return 1.0 + np.searchsorted(LATENT_CUTS, Z, side="right")


def generate(spec: SynthSpec) -> SynthInstance:
    """Draw one instance; identical specs give identical instances."""
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    for _ in range(10):
        try:
            corr = random_correlation(n, spec.s, rng)
            break
        except GenerationError:
            continue
    else:
        raise GenerationError("could not draw a valid correlation matrix in 10 attempts")
    L = np.linalg.cholesky(corr)
    Z = rng.standard_normal((m, n)) @ L.T
    X_true = to_ratings(Z)

    X = X_true.copy()
    k = int(round_half_away(spec.r * m))
    for j in range(n):
        if k == 0:
            break
        omega = 6.0 - X_true[:, j]
        drop = rng.choice(m, size=k, replace=False, p=omega / omega.sum())
        X[drop, j] = np.nan
    rescued = []
    for i in np.nonzero(np.isnan(X).all(axis=1))[0]:
        j = int(rng.integers(n))
        X[i, j] = X_true[i, j]
        rescued.append((int(i), j))
    truth = RatingMatrix(X_true)
    observed = RatingMatrix(X)
    return SynthInstance(truth, observed, spec, corr, (k,) * n, tuple(rescued))


def _floor_rm(r, m):
    return int(math.floor(r * m + 1e-9))


def _log_comb(a, b):
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def edge_probability(r: float, m: int) -> float:
    """Chance two columns, each missing ``floor(r m)`` random rows, share a rated row."""
    if not 0.0 <= r < 1.0 or m < 1:
        raise ValueError("need 0 <= r < 1 and m >= 1")
    k = _floor_rm(r, m)
    if k < m / 2:
        return 1.0
    return float(1.0 - math.exp(_log_comb(k, 2 * k - m) - _log_comb(m, k)))


def _batch_connected(adj: np.ndarray) -> np.ndarray:
    """Connectivity of a stack of adjacency matrices by repeated squaring."""
    n = adj.shape[-1]
    R = (adj | np.eye(n, dtype=bool)).astype(np.float32)
    for _ in range(max(1, math.ceil(math.log2(max(n - 1, 1))))):
        R = (np.matmul(R, R) > 0).astype(np.float32)
    return (R[:, 0, :] > 0).all(axis=1)


EDGE_MODELS = ("ordered-pairs", "undirected")


def effective_edge_probability(p_edge: float, edge_model: str = "ordered-pairs") -> float:
    """Per-pair edge chance under ``edge_model``.

    ``undirected`` draws each unordered pair once (plain G(n, p)).
    ``ordered-pairs`` draws ``(u, v)`` and ``(v, u)`` independently and keeps
    the edge if either succeeds, so the chance is ``1 - (1 - p)^2``; this is
    the model that reproduces the published connectivity table.
    """
    if edge_model == "undirected":
        return p_edge
    if edge_model == "ordered-pairs":
        return 1.0 - (1.0 - p_edge) ** 2
    raise ValueError(f"unknown edge model {edge_model!r}; choose from {EDGE_MODELS}")


def connectivity_probability(p_edge: float, n: int, trials: int = 10_000, rng=None,
                             edge_model: str = "ordered-pairs", batch: int = 2000):
    """Monte Carlo share of connected random graphs on ``n`` nodes.

    Returns ``(estimate, standard_error)``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError("p_edge must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    iu = np.triu_indices(n, 1)
    hits = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        draws = rng.random((b, len(iu[0]))) < p_edge
        if edge_model == "ordered-pairs":
            draws |= rng.random((b, len(iu[0]))) < p_edge
        elif edge_model != "undirected":
            raise ValueError(f"unknown edge model {edge_model!r}; choose from {EDGE_MODELS}")
        adj = np.zeros((b, n, n), dtype=bool)
        adj[:, iu[0], iu[1]] = draws
        adj |= adj.transpose(0, 2, 1)
        hits += int(_batch_connected(adj).sum()) if n > 1 else b
        done += b
    est = hits / trials
    return est, math.sqrt(est * (1.0 - est) / trials)


def connectivity_probability_exact(p_edge: float, n: int, edge_model: str = "ordered-pairs") -> float:
    """Exact connectivity via the standard recurrence over one node's component."""
    q = 1.0 - effective_edge_probability(p_edge, edge_model)
    conn = [0.0, 1.0]
    for k in range(2, n + 1):
        miss = sum(math.comb(k - 1, t - 1) * conn[t] * q ** (t * (k - t)) for t in range(1, k))
        conn.append(1.0 - miss)
    return conn[n]


TABLE_C1_R = (0.6, 0.7, 0.8, 0.9, 0.95)
TABLE_C1_M = (50, 100, 500, 1000, 5000)
TABLE_C2_P = (0.1, 0.2, 0.3, 0.4, 0.5)
TABLE_C2_N = (4, 8, 12, 16, 20, 50)


def appendix_c_tables(trials=10_000, seed=0, edge_model="ordered-pairs",
                      r_values=TABLE_C1_R, m_values=TABLE_C1_M,
                      p_values=TABLE_C2_P, n_values=TABLE_C2_N) -> dict:
    """Edge and connectivity probability grids.

    One generator seeded with ``seed`` serves every connectivity cell in
    row-major order, so the tables are reproducible.
    """
    rng = np.random.default_rng(seed)
    edge = [[edge_probability(r, m) for m in m_values] for r in r_values]
    conn, stderr = [], []
    for p in p_values:
        row, se_row = [], []
        for n in n_values:
            est, se = connectivity_probability(p, n, trials, rng, edge_model)
            row.append(est)
            se_row.append(se)
        conn.append(row)
        stderr.append(se_row)
    return {"r": list(r_values), "m": list(m_values), "p_edge": edge,
            "p": list(p_values), "n": list(n_values), "p_connect": conn,
            "p_connect_stderr": stderr, "trials": trials, "seed": seed,
            "edge_model": edge_model}
