"""Permutation-distribution representation of time series, pairwise
divergence matrices, k-medoids (PAM) and fuzzy (FANNY-style) clustering,
and silhouette diagnostics.

A series is embedded as the frequency vector of ordinal patterns over
sliding windows of ``m`` values spaced ``delay`` apart: each window is
reduced to the permutation that sorts it (ties broken toward the earlier
index), so the representation is invariant under any positive affine
transform of the values and under the sampling rate of the series. Two
series are compared by the squared Hellinger distance between their
pattern distributions, which is symmetric and bounded by 2. The embedding
is computed in one pass per series, so building an N x N matrix is linear
in total series length for fixed N and m.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

_FACTORIAL = (1, 1, 2, 6, 24, 120, 720, 5040)
MIN_EMBED_DIM = 2
MAX_EMBED_DIM = 7

DEFAULT_EMBED_DIM = 5
DEFAULT_CLUSTER_COUNT = 3
DEFAULT_MEMBERSHIP_EXPONENT = 1.15


@dataclass(frozen=True)
class PermDistribution:
    """Normalized ordinal-pattern frequencies of one series."""

    m: int
    delay: int
    freqs: np.ndarray = field(repr=False)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.float64)
        if f.shape != (_FACTORIAL[self.m],):
            raise ValueError(f"expected {_FACTORIAL[self.m]} frequencies for m={self.m}")
        if (f < 0).any() or abs(f.sum() - 1.0) > 1e-12:
            raise ValueError("frequencies must be non-negative and sum to 1")
        f.setflags(write=False)
        object.__setattr__(self, "freqs", f)

    def entropy(self) -> float:
        """Pattern entropy normalized to [0, 1] by log(m!)."""
        f = self.freqs[self.freqs > 0]
        return float(-(f * np.log(f)).sum() / math.log(_FACTORIAL[self.m]))


def min_series_length(m: int, delay: int = 1) -> int:
    return (m - 1) * delay + 1


def _pattern_ranks(x: np.ndarray, m: int, delay: int) -> np.ndarray:
    """Lexicographic rank of the sorting permutation of every window."""
    n_windows = x.size - (m - 1) * delay
    idx = np.arange(n_windows)[:, None] + np.arange(m)[None, :] * delay
    perms = np.argsort(x[idx], axis=1, kind="stable")
    ranks = np.zeros(n_windows, dtype=np.int64)
    for j in range(m - 1):
        smaller_after = np.zeros(n_windows, dtype=np.int64)
        for l in range(j + 1, m):
            smaller_after += perms[:, l] < perms[:, j]
        ranks += smaller_after * _FACTORIAL[m - 1 - j]
    return ranks


def perm_distribution(series, m: int = DEFAULT_EMBED_DIM, delay: int = 1) -> PermDistribution:
    """Ordinal pattern distribution of a series.

    Each window of ``m`` values spaced ``delay`` apart contributes the
    permutation that sorts it ascending, ties broken by earlier index
    first (a constant window yields the identity pattern). Frequencies
    are pattern counts over the number of windows.
    """
    if not MIN_EMBED_DIM <= m <= MAX_EMBED_DIM:
        raise ValueError(f"embedding dimension m must be in [{MIN_EMBED_DIM},{MAX_EMBED_DIM}]")
    if delay < 1:
        raise ValueError("delay must be at least 1")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.isfinite(x).all():
        raise ValueError("series values must be finite")
    if x.size < min_series_length(m, delay):
        raise ValueError(
            f"series of length {x.size} too short for m={m}, delay={delay} "
            f"(needs >= {min_series_length(m, delay)})"
        )
    ranks = _pattern_ranks(x, m, delay)
    freqs = np.bincount(ranks, minlength=_FACTORIAL[m]) / ranks.size
    return PermDistribution(m, delay, freqs)


def pd_divergence(p: PermDistribution, q: PermDistribution) -> float:
    """Squared Hellinger distance sum((sqrt(p)-sqrt(q))^2), in [0, 2]."""
    if p.m != q.m or p.delay != q.delay:
        raise ValueError(
            f"distributions not comparable: m={p.m},delay={p.delay} "
            f"vs m={q.m},delay={q.delay}"
        )
    d = np.sqrt(p.freqs) - np.sqrt(q.freqs)
    return float((d * d).sum())


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric divergence matrix with zero diagonal, entries in [0, 2]."""

    ids: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if v.shape != (n, n):
            raise ValueError(f"matrix shape {v.shape} does not match {n} ids")
        if not np.array_equal(v, v.T):
            raise ValueError("matrix must be symmetric")
        if np.diagonal(v).any():
            raise ValueError("diagonal must be zero")
        if (v < 0).any() or (v > 2).any():
            raise ValueError("divergences must lie in [0, 2]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.ids)


def distance_matrix(
    series_set: Sequence,
    m: int = DEFAULT_EMBED_DIM,
    delay: int = 1,
    ids: Sequence[str] | None = None,
) -> DissimilarityMatrix:
    """All-pairs squared Hellinger divergence between pattern distributions.

    Each series is embedded exactly once (one linear pass), then the pair
    divergences come from a Gram product of the root-frequency matrix.
    """
    if len(series_set) == 0:
        raise ValueError("need at least one series")
    if ids is None:
        ids = tuple(f"s{i}" for i in range(len(series_set)))
    else:
        ids = tuple(ids)
        if len(ids) != len(series_set):
            raise ValueError("ids length does not match series count")

    roots = np.empty((len(series_set), _FACTORIAL[m]))
    for i, series in enumerate(series_set):
        roots[i] = np.sqrt(perm_distribution(series, m, delay).freqs)
    gram = roots @ roots.T
    d = 2.0 - 2.0 * gram
    d = np.triu(d, k=1)
    d = np.clip(d + d.T, 0.0, 2.0)
    return DissimilarityMatrix(ids, d)


def min_entropy_dimension(
    series_set: Sequence,
    m_values: Iterable[int] = range(MIN_EMBED_DIM, MAX_EMBED_DIM + 1),
    delay: int = 1,
) -> int:
    """Pick the embedding dimension minimizing mean normalized pattern
    entropy across the series set (ties go to the smaller m).

    Dimensions too large for the shortest series are dropped; an empty
    candidate range is an error.
    """
    ms = sorted(set(m_values))
    if not ms:
        raise ValueError("empty embedding dimension range")
    if any(not MIN_EMBED_DIM <= m <= MAX_EMBED_DIM for m in ms):
        raise ValueError(f"dimensions must lie in [{MIN_EMBED_DIM},{MAX_EMBED_DIM}]")
    if len(series_set) == 0:
        raise ValueError("need at least one series")
    shortest = min(len(s) for s in series_set)
    usable = [m for m in ms if min_series_length(m, delay) <= shortest]
    if not usable:
        raise ValueError(
            f"shortest series (length {shortest}) cannot support any m in {ms}"
        )
    best_m, best_h = usable[0], math.inf
    for m in usable:
        h = np.mean([perm_distribution(s, m, delay).entropy() for s in series_set])
        if h < best_h - 1e-15:
            best_m, best_h = m, float(h)
    return best_m


def _as_dissimilarity(matrix) -> np.ndarray:
    if isinstance(matrix, DissimilarityMatrix):
        return matrix.values
    d = np.asarray(matrix, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T, atol=1e-9):
        raise ValueError("dissimilarity matrix must be symmetric")
    if (d < 0).any():
        raise ValueError("dissimilarities must be non-negative")
    return d


def _tie_argmin(values: np.ndarray, rng: np.random.Generator) -> int:
    ties = np.flatnonzero(values == values.min())
    return int(ties[0] if ties.size == 1 else rng.choice(ties))


def _tie_argmax(values: np.ndarray, rng: np.random.Generator) -> int:
    ties = np.flatnonzero(values == values.max())
    return int(ties[0] if ties.size == 1 else rng.choice(ties))


@dataclass(frozen=True)
class PamResult:
    medoids: tuple[int, ...]
    labels: np.ndarray = field(repr=False)
    cost: float = 0.0


def pam(matrix, k: int, seed: int = 0) -> PamResult:
    """Partitioning around medoids: greedy BUILD then best-improvement
    SWAP to a local optimum of total dissimilarity to the nearest medoid.

    Deterministic for a given matrix; the seed only breaks exact ties.
    """
    d = _as_dissimilarity(matrix)
    n = d.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)

    if k == n:
        medoids = tuple(range(n))
        return PamResult(medoids, np.arange(n), 0.0)

    # BUILD: start from the most central point, then repeatedly add the
    # candidate with the largest total reduction in nearest-medoid cost.
    first = _tie_argmin(d.sum(axis=1), rng)
    selected = [first]
    nearest = d[:, first].copy()
    while len(selected) < k:
        gains = np.full(n, -np.inf)
        for cand in range(n):
            if cand in selected:
                continue
            gains[cand] = np.maximum(nearest - d[:, cand], 0.0).sum()
        pick = _tie_argmax(gains, rng)
        selected.append(pick)
        nearest = np.minimum(nearest, d[:, pick])

    # SWAP: replace (medoid, non-medoid) while total cost strictly drops.
    medoid_set = set(selected)
    cost = float(np.min(d[:, selected], axis=1).sum())
    improved = True
    while improved:
        improved = False
        best = (0.0, None, None)
        for mi in list(medoid_set):
            others = [m for m in medoid_set if m != mi]
            for h in range(n):
                if h in medoid_set:
                    continue
                trial = others + [h]
                trial_cost = float(np.min(d[:, trial], axis=1).sum())
                delta = trial_cost - cost
                if delta < best[0] - 1e-12:
                    best = (delta, mi, h)
        if best[1] is not None:
            medoid_set.discard(best[1])
            medoid_set.add(best[2])
            cost += best[0]
            improved = True

    medoids = tuple(sorted(medoid_set))
    labels = np.argmin(d[:, medoids], axis=1)
    cost = float(d[np.arange(n), np.asarray(medoids)[labels]].sum())
    return PamResult(medoids, labels, cost)


@dataclass(frozen=True)
class FuzzyResult:
    """Fuzzy membership clustering of a dissimilarity matrix."""

    k: int
    r: float
    memberships: np.ndarray = field(repr=False)
    objective: float
    crisp: np.ndarray = field(repr=False)
    converged: bool
    n_iter: int
    objective_trace: tuple[float, ...] = field(repr=False)


def _fanny_objective(d: np.ndarray, powers: np.ndarray) -> float:
    s = powers.sum(axis=0)
    t = d @ powers
    num = np.einsum("iv,iv->v", powers, t)
    # a cluster with no membership mass contributes nothing (0/0 limit)
    alive = s > 1e-100
    return float((num[alive] / (2.0 * s[alive])).sum())


def fanny(
    matrix,
    k: int = DEFAULT_CLUSTER_COUNT,
    r: float = DEFAULT_MEMBERSHIP_EXPONENT,
    tol: float = 1e-9,
    max_iter: int = 500,
    seed: int = 0,
) -> FuzzyResult:
    """Medoid-free fuzzy clustering by minimizing

        sum_v [ sum_ij u_iv^r u_jv^r d(i,j) ] / [ 2 sum_j u_jv^r ]

    over row-stochastic memberships, one object at a time. Memberships
    start from the PAM partition softened to 0.9 / 0.1 over the rest, so
    runs are reproducible for a given seed. Iteration stops when the
    relative objective change falls below ``tol``; the recorded objective
    sequence never increases (a sweep that would increase it due to
    numerical noise is rolled back and treated as converged).
    """
    d = _as_dissimilarity(matrix)
    n = d.shape[0]
    if not 2 <= k < n:
        raise ValueError(f"k must be in [2, {n - 1}], got {k}")
    if r <= 1.0:
        raise ValueError("membership exponent must exceed 1")

    u = np.full((n, k), 0.1 / (k - 1))
    u[np.arange(n), pam(d, k, seed).labels] = 0.9

    powers = u**r
    s = powers.sum(axis=0)
    t = d @ powers
    num = np.einsum("iv,iv->v", powers, t)
    objective = _fanny_objective(d, powers)
    trace = [objective]
    sharp = 1.0 / (r - 1.0)

    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        u_before = u.copy()
        for i in range(n):
            # per-cluster attraction; a starved cluster is never preferred
            # (the floor keeps s*s out of the underflow-to-zero range)
            alive = s > 1e-100
            a = np.full(k, np.inf)
            a[alive] = t[i, alive] / s[alive] - num[alive] / (2.0 * s[alive] * s[alive])
            amin = a.min()
            if amin <= 0:
                row = np.zeros(k)
                finite = a[np.isfinite(a)]
                if finite.max() - amin <= 1e-15 and finite.size == k:
                    row[:] = 1.0 / k  # fully degenerate: no direction preferred
                else:
                    row[int(np.argmin(a))] = 1.0
            else:
                w = np.where(np.isfinite(a), (amin / a) ** sharp, 0.0)
                row = w / w.sum()
            delta = row**r - powers[i]
            num += 2.0 * delta * t[i]
            s += delta
            t += np.outer(d[:, i], delta)
            powers[i] = row**r
            u[i] = row

        # refresh aggregates to kill incremental drift, then evaluate
        powers = u**r
        s = powers.sum(axis=0)
        t = d @ powers
        num = np.einsum("iv,iv->v", powers, t)
        new_objective = _fanny_objective(d, powers)

        if new_objective > objective + 1e-12 * max(1.0, abs(objective)):
            u = u_before  # numerical floor reached; keep the better state
            powers = u**r
            converged = True
            break
        trace.append(new_objective)
        change = objective - new_objective
        objective = new_objective
        if change <= tol * max(1.0, abs(objective)):
            converged = True
            break

    u = u / u.sum(axis=1, keepdims=True)
    u.setflags(write=False)
    crisp = np.argmax(u, axis=1)
    crisp.setflags(write=False)
    return FuzzyResult(k, r, u, trace[-1], crisp, converged, sweeps, tuple(trace))


@dataclass(frozen=True)
class SilhouetteResult:
    widths: np.ndarray = field(repr=False)
    average: float = 0.0


def silhouette(matrix, assignment) -> SilhouetteResult:
    """Per-point silhouette widths s = (b - a) / max(a, b) and their mean.

    a is the mean dissimilarity to the point's own cluster (excluding the
    point), b the smallest mean dissimilarity to any other cluster.
    Members of singleton clusters score 0.
    """
    d = _as_dissimilarity(matrix)
    labels = np.asarray(assignment)
    if labels.shape != (d.shape[0],):
        raise ValueError("assignment length does not match matrix size")
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")

    onehot = (labels[:, None] == clusters[None, :]).astype(np.float64)
    sizes = onehot.sum(axis=0)
    totals = d @ onehot  # totals[i, c] = sum of d(i, members of c)
    own = np.searchsorted(clusters, labels)

    widths = np.zeros(d.shape[0])
    for i in range(d.shape[0]):
        c = own[i]
        if sizes[c] <= 1:
            continue
        a = totals[i, c] / (sizes[c] - 1)
        other = np.delete(totals[i] / sizes, c)
        b = float(other.min())
        denom = max(a, b)
        widths[i] = 0.0 if denom == 0 else (b - a) / denom
    widths.setflags(write=False)
    return SilhouetteResult(widths, float(widths.mean()))


@dataclass(frozen=True)
class ClusterSummary:
    cluster: int
    size: int
    mean_of_series_means: float
    variance_of_series_means: float
    mean_duration_s: float
    facets: dict[str, int]


@dataclass(frozen=True)
class ClusterReport:
    clusters: tuple[ClusterSummary, ...]
    average_silhouette: float

    @property
    def total(self) -> int:
        return sum(c.size for c in self.clusters)


def cluster_report(
    series_set: Sequence,
    assignment,
    matrix,
    labels: Sequence[tuple] | None = None,
) -> ClusterReport:
    """Describe each cluster: size, mean and variance of the member series
    means, mean series duration, and counts faceted by (tier, outcome)
    when labels are supplied; plus the average silhouette width."""
    crisp = np.asarray(getattr(assignment, "crisp", getattr(assignment, "labels", assignment)))
    values = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in series_set]
    if len(values) != crisp.size:
        raise ValueError("assignment length does not match series count")
    if labels is not None and len(labels) != len(values):
        raise ValueError("labels length does not match series count")

    # a single cluster has no silhouette; report 0 rather than failing
    if np.unique(crisp).size >= 2:
        avg_sil = silhouette(matrix, crisp).average
    else:
        avg_sil = 0.0
    summaries = []
    for c in np.unique(crisp).tolist():
        members = np.flatnonzero(crisp == c)
        means = np.array([values[i].mean() for i in members])
        durations = np.array([values[i].size - 1 for i in members], dtype=np.float64)
        facets: Counter[str] = Counter()
        if labels is not None:
            for i in members:
                tier, won = labels[i]
                facets[f"{tier}/{'win' if won else 'loss'}"] += 1
        summaries.append(
            ClusterSummary(
                cluster=int(c),
                size=int(members.size),
                mean_of_series_means=float(means.mean()),
                variance_of_series_means=float(means.var(ddof=1)) if members.size > 1 else 0.0,
                mean_duration_s=float(durations.mean()),
                facets=dict(sorted(facets.items())),
            )
        )
    return ClusterReport(tuple(summaries), avg_sil)


def write_matrix_csv(out: TextIO, matrix: DissimilarityMatrix) -> None:
    """Row-major CSV with a header row of series ids."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(matrix.ids)
    for row in matrix.values:
        w.writerow([repr(v) for v in row.tolist()])


def read_matrix_csv(inp: TextIO) -> DissimilarityMatrix:
    reader = csv.reader(inp)
    ids = tuple(next(reader))
    rows = [[float(v) for v in row] for row in reader]
    return DissimilarityMatrix(ids, np.asarray(rows, dtype=np.float64))
