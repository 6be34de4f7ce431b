"""Sites of Z^d with king-move adjacency: connected sets, passage times and searches.

Two sites are adjacent when they differ and their Chebyshev distance is 1.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

from .metricfield import MetricField, cube_extremes_grid

Site = tuple[int, ...]


class ResourceGuardError(RuntimeError):
    """An exact search would exceed its configured size budget."""


class MissingSiteError(KeyError):
    pass


@lru_cache(maxsize=None)
def star_offsets(d: int) -> tuple[Site, ...]:
    return tuple(o for o in product((-1, 0, 1), repeat=d) if any(o))


def star_adjacent(z, w) -> bool:
    if len(z) != len(w):
        raise ValueError("sites have different dimensions")
    diff = [abs(a - b) for a, b in zip(z, w)]
    return any(diff) and max(diff) <= 1


def star_neighbors(z: Site) -> list[Site]:
    return [tuple(a + b for a, b in zip(z, o)) for o in star_offsets(len(z))]


def is_star_connected(sites) -> bool:
    s = {tuple(int(v) for v in z) for z in sites}
    if len(s) <= 1:
        return True
    start = next(iter(s))
    seen = {start}
    queue = deque([start])
    while queue:
        z = queue.popleft()
        for w in star_neighbors(z):
            if w in s and w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(s)


@dataclass(frozen=True)
class StarSet:
    sites: frozenset
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "sites", frozenset(tuple(int(v) for v in z) for z in self.sites))
        if any(len(z) != self.dim for z in self.sites):
            raise ValueError("site dimension mismatch")

    @classmethod
    def of(cls, sites, dim: int | None = None) -> "StarSet":
        sites = [tuple(int(v) for v in z) for z in sites]
        if dim is None:
            if not sites:
                raise ValueError("dimension needed for an empty set")
            dim = len(sites[0])
        return cls(frozenset(sites), dim)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(sorted(self.sites))

    def __contains__(self, z) -> bool:
        return tuple(z) in self.sites

    @property
    def connected(self) -> bool:
        return is_star_connected(self.sites)


@dataclass(frozen=True, eq=False)
class SiteField:
    """Nonnegative values X_z on the box of sites ``origin .. origin + shape - 1``."""

    values: np.ndarray
    origin: Site
    R: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != len(self.origin):
            raise ValueError("origin dimension does not match the value array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("site values must be finite and nonnegative")
        if self.R < 1:
            raise ValueError("dependence range must be >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(int(c) for c in self.origin))

    @classmethod
    def constant(cls, value: float, lo, hi, R: int = 1) -> "SiteField":
        shape = tuple(int(b - a + 1) for a, b in zip(lo, hi))
        return cls(np.full(shape, float(value)), tuple(lo), R)

    @property
    def dim(self) -> int:
        return len(self.origin)

    def index(self, z):
        idx = tuple(int(a) - o for a, o in zip(z, self.origin))
        if any(i < 0 or i >= n for i, n in zip(idx, self.values.shape)):
            return None
        return idx

    def __contains__(self, z) -> bool:
        return self.index(z) is not None

    def __getitem__(self, z) -> float:
        idx = self.index(z)
        if idx is None:
            raise MissingSiteError(tuple(z))
        return float(self.values[idx])

    def sites(self):
        for idx in np.ndindex(*self.values.shape):
            yield tuple(i + o for i, o in zip(idx, self.origin))


def passage_time(gamma, X: SiteField) -> float:
    """Sum of X over the sites of gamma."""
    sites = gamma.sites if isinstance(gamma, StarSet) else gamma
    return float(sum(X[z] for z in sites))


# ---------------------------------------------------------------------------
# enumeration


def _redelmeier_rooted(root: Site, n: int, allowed, counts: list[int], visit=None):
    """Count connected sets containing ``root`` (and only ``allowed`` cells) by size.

    Every connected set containing the root is produced exactly once.
    ``visit(cells)`` is called for each set when given.
    """
    offsets = star_offsets(len(root))
    seen = {root}
    cells = []

    def rec(untried: list):
        while untried:
            c = untried.pop()
            cells.append(c)
            counts[len(cells)] += 1
            if visit is not None:
                visit(cells)
            if len(cells) < n:
                new = []
                for o in offsets:
                    w = tuple(a + b for a, b in zip(c, o))
                    if w not in seen and allowed(w):
                        seen.add(w)
                        new.append(w)
                rec(untried + new)
                for w in new:
                    seen.discard(w)
            cells.pop()

    rec([root])


def _lex_nonnegative(w: Site) -> bool:
    # cells that may join an animal whose lexicographically smallest cell is the origin
    for v in w:
        if v != 0:
            return v > 0
    return True


@dataclass
class EnumerationReport:
    dim: int
    counts: tuple[int, ...]    # S_1..S_n: connected sets of size k containing the origin
    animals: tuple[int, ...]   # A_1..A_n: the same sets up to translation

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def sigma_hat(self) -> float:
        return max(s ** (1.0 / k) for k, s in enumerate(self.counts, 1))

    def S(self, k: int) -> int:
        return self.counts[k - 1]

    def fekete_pairs(self, seq: str = "S") -> list[tuple[int, int, float, float, bool]]:
        """(n, m, log X_{n+m}, log X_n + log X_m, holds) for X = S (subadditive form)."""
        vals = self.counts if seq == "S" else self.animals
        out = []
        for a in range(1, self.n + 1):
            for b in range(a, self.n + 1 - a):
                lhs = math.log(vals[a + b - 1])
                rhs = math.log(vals[a - 1]) + math.log(vals[b - 1])
                out.append((a, b, lhs, rhs, lhs <= rhs))
        return out

    @property
    def fekete_subadditive(self) -> bool:
        """log S_{n+m} <= log S_n + log S_m for every tabulated pair."""
        return all(p[4] for p in self.fekete_pairs("S"))

    @property
    def animals_superadditive(self) -> bool:
        """log A_{n+m} >= log A_n + log A_m (concatenation of translation classes)."""
        return all(p[2] >= p[3] for p in self.fekete_pairs("A"))

    @property
    def sigma_bound_holds(self) -> bool:
        s = self.sigma_hat
        return all(c <= s**k * (1 + 1e-12) for k, c in enumerate(self.counts, 1))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "S_n", "A_n", "sigma_hat"])
            for k, (s, a) in enumerate(zip(self.counts, self.animals), 1):
                w.writerow([k, s, a, repr(self.sigma_hat)])
        return path


def estimate_set_count(n: int, d: int) -> float:
    """Rough count of size-n sets for the guard: exact for n <= 2, then growth (3^d - 1) * e."""
    nb = 3**d - 1
    if n <= 1:
        return 1.0
    return n * float(nb) * (nb * math.e) ** (n - 2)


def enumerate_connected_sets(n: int, d: int = 2, guard: float = 1e8) -> EnumerationReport:
    """Exact S_k for k <= n via Redelmeier's algorithm on translation classes.

    Each fixed animal is generated once with its lexicographically smallest
    cell at the origin; a class of size k contains the origin in k
    translations, so S_k = k * A_k.  The walk visits sum_k A_k nodes, so
    the guard extrapolates A_n from the last computed ratio.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    root = (0,) * d
    animals = [0] * (n + 1)
    # walk size grows one step at a time so the guard can stop before blowing up;
    # the repeated walks cost a geometric fraction of the last one
    for size in range(1, n + 1):
        if size >= 3:
            ratio = animals[size - 1] / max(animals[size - 2], 1)
            est = animals[size - 1] * ratio * 1.2
            if est * size > guard:
                raise ResourceGuardError(f"estimated {est * size:.3g} sets of size {size} exceeds guard {guard:.3g}")
        counts = [0] * (size + 1)
        _redelmeier_rooted(root, size, _lex_nonnegative, counts)
        animals[: size + 1] = counts
    A = tuple(animals[1:])
    return EnumerationReport(d, tuple(k * a for k, a in enumerate(A, 1)), A)


def count_connected_sets_naive(n: int, d: int = 2) -> tuple[int, ...]:
    """S_1..S_n by growing explicit sets one neighbour at a time (no canonical ordering).

    Independent of the Redelmeier walk; every set of size k + 1 containing
    the origin arises from some set of size k by adding an adjacent site,
    and duplicates are removed by hashing.
    """
    level = {frozenset([(0,) * d])}
    out = [1]
    for _ in range(n - 1):
        nxt = set()
        for s in level:
            for z in s:
                for w in star_neighbors(z):
                    if w not in s:
                        nxt.add(s | {w})
        level = nxt
        out.append(len(level))
    return tuple(out[:n])


# ---------------------------------------------------------------------------
# proof constructions


def spiral_order(anchor, radius: int) -> list[Site]:
    """All sites within Chebyshev distance ``radius`` of anchor, shell by shell.

    In 2D each shell is walked counterclockwise starting east of the anchor;
    in higher dimensions shells are ordered lexicographically.
    """
    anchor = tuple(int(v) for v in anchor)
    d = len(anchor)
    out = [anchor]
    for r in range(1, radius + 1):
        if d == 2:
            ring = []
            x, y = r, -r + 1
            for _ in range(2 * r - 1):
                ring.append((x, y)); y += 1
            for _ in range(2 * r):
                ring.append((x, y)); x -= 1
            for _ in range(2 * r):
                ring.append((x, y)); y -= 1
            for _ in range(2 * r + 1):
                ring.append((x, y)); x += 1
            out.extend((anchor[0] + a, anchor[1] + b) for a, b in ring)
        else:
            shell = [o for o in product(range(-r, r + 1), repeat=d) if max(abs(v) for v in o) == r]
            out.extend(tuple(a + b for a, b in zip(anchor, o)) for o in shell)
    return out


def rsep_subset(gamma, R: float, order=None, anchor=None) -> set:
    """Greedy subset of gamma whose points are pairwise more than R apart (Euclidean).

    Sites are scanned in ``order`` (default: spiral from ``anchor``, itself
    defaulting to the smallest site); a site is kept when it is farther than R
    from every site kept before.
    """
    sites = gamma.sites if isinstance(gamma, StarSet) else {tuple(z) for z in gamma}
    if not sites:
        return set()
    if order is None:
        anchor = min(sites) if anchor is None else tuple(anchor)
        rad = max(max(abs(a - b) for a, b in zip(z, anchor)) for z in sites)
        order = spiral_order(anchor, rad)
    chosen: list[Site] = []
    R2 = R * R
    for z in order:
        z = tuple(z)
        if z not in sites:
            continue
        if all(sum((a - b) ** 2 for a, b in zip(z, c)) > R2 for c in chosen):
            chosen.append(z)
    missing = sites.difference(order) if len(order) < len(sites) else set()
    if missing:
        raise ValueError("order does not enumerate every site of gamma")
    return set(chosen)


def residue_partition(gamma, R: int) -> list[set]:
    """Split gamma by site residues modulo R; R^d parts in lexicographic residue order."""
    if R < 1:
        raise ValueError("R must be >= 1")
    sites = gamma.sites if isinstance(gamma, StarSet) else {tuple(z) for z in gamma}
    d = gamma.dim if isinstance(gamma, StarSet) else (len(next(iter(sites))) if sites else 2)
    keys = list(product(range(R), repeat=d))
    parts = {k: set() for k in keys}
    for z in sites:
        parts[tuple(v % R for v in z)].add(z)
    return [parts[k] for k in keys]


def _site_of(p: np.ndarray) -> Site:
    return tuple(int(v) for v in np.floor(p + 0.5))


def curve_site_lengths(curve) -> dict:
    """Euclidean length of a polyline inside each cube [z - 1/2, z + 1/2)^d."""
    pts = np.atleast_2d(np.asarray(curve, dtype=float))
    out: dict = {}
    for a, b in zip(pts[:-1], pts[1:]):
        delta = b - a
        seg = float(np.linalg.norm(delta))
        if seg == 0:
            continue
        cuts = [0.0, 1.0]
        for ax in range(len(a)):
            if delta[ax] == 0:
                continue
            lo, hi = sorted((a[ax], b[ax]))
            ks = np.arange(math.ceil(lo - 0.5), math.floor(hi - 0.5) + 1) + 0.5
            cuts.extend(((ks - a[ax]) / delta[ax]).tolist())
        cuts = np.unique(np.clip(cuts, 0.0, 1.0))
        for s0, s1 in zip(cuts[:-1], cuts[1:]):
            if s1 - s0 <= 0:
                continue
            z = _site_of(a + 0.5 * (s0 + s1) * delta)
            out[z] = out.get(z, 0.0) + (s1 - s0) * seg
    return out


def curve_to_sites(curve, threshold: float = 0.25) -> StarSet:
    """Sites whose cube holds at least ``threshold`` of the curve's Euclidean length."""
    pts = np.atleast_2d(np.asarray(curve, dtype=float))
    lengths = curve_site_lengths(pts)
    return StarSet.of([z for z, L in lengths.items() if L >= threshold], pts.shape[1])


# ---------------------------------------------------------------------------
# exact and greedy searches over connected sets containing an anchor


class _Search:
    """Rooted enumeration of connected sets inside the SiteField box, with pruning."""

    def __init__(self, X: SiteField, anchor: Site, node_limit: int):
        if anchor not in X:
            raise MissingSiteError(anchor)
        self.X = X
        self.anchor = tuple(anchor)
        self.offsets = star_offsets(X.dim)
        self.node_limit = node_limit
        self.nodes = 0

    def run(self, max_size: int, prune, on_set):
        """Depth-first Redelmeier walk; ``prune(size, total)`` cuts subtrees."""
        X = self.X
        seen = {self.anchor}
        cells: list[Site] = []

        def rec(untried: list, total: float):
            while untried:
                c = untried.pop()
                t = total + X[c]
                self.nodes += 1
                if self.nodes > self.node_limit:
                    raise ResourceGuardError(f"search exceeded {self.node_limit} nodes")
                cells.append(c)
                on_set(cells, t)
                if len(cells) < max_size and not prune(len(cells), t):
                    new = []
                    for o in self.offsets:
                        w = tuple(a + b for a, b in zip(c, o))
                        if w not in seen and w in X:
                            seen.add(w)
                            new.append(w)
                    rec(untried + new, t)
                    for w in new:
                        seen.discard(w)
                cells.pop()

        rec([self.anchor], 0.0)


def _reachable_values(X: SiteField, anchor: Site, radius: int) -> np.ndarray:
    sl = []
    for a, o, n in zip(anchor, X.origin, X.values.shape):
        i = a - o
        sl.append(slice(max(0, i - radius), min(n, i + radius + 1)))
    return np.sort(X.values[tuple(sl)].ravel())


@dataclass(frozen=True)
class SearchResult:
    value: float
    witness: StarSet
    mode: str
    nodes: int = 0


def _greedy_grow(X: SiteField, anchor: Site, stop):
    """Priority-first growth: repeatedly add the cheapest frontier site until ``stop``."""
    cells = [anchor]
    members = {anchor}
    total = X[anchor]
    heap = []
    pushed = {anchor}

    def push(c):
        for w in star_neighbors(c):
            if w not in pushed and w in X:
                pushed.add(w)
                heapq.heappush(heap, (X[w], w))

    push(anchor)
    while heap:
        v, w = heap[0]
        if stop(len(cells), total, v):
            break
        heapq.heappop(heap)
        cells.append(w)
        members.add(w)
        total += v
        push(w)
    return cells, total


def min_passage_connected(m: int, anchor, X: SiteField, mode: str = "exact", max_exact: int = 10,
                          node_limit: int = 50_000_000) -> SearchResult:
    """Minimum of X(gamma) over connected gamma containing anchor with |gamma| = m."""
    anchor = tuple(int(v) for v in anchor)
    if m < 1:
        raise ValueError("m must be >= 1")
    if mode == "greedy":
        cells, total = _greedy_grow(X, anchor, lambda size, tot, v: size >= m)
        if len(cells) < m:
            raise ValueError("site box too small for the requested size")
        return SearchResult(total, StarSet.of(cells, X.dim), "greedy")
    if mode != "exact":
        raise ValueError("mode must be exact or greedy")
    if m > max_exact:
        raise ResourceGuardError(f"exact search limited to m <= {max_exact}")
    sorted_vals = _reachable_values(X, anchor, m - 1)
    prefix = np.concatenate([[0.0], np.cumsum(sorted_vals)])
    ub_cells, ub = _greedy_grow(X, anchor, lambda size, tot, v: size >= m)
    best = {"value": ub if len(ub_cells) == m else math.inf,
            "cells": list(ub_cells) if len(ub_cells) == m else None}

    def prune(size, total):
        # the remaining sites cost at least the sum of the smallest values nearby
        return total + prefix[min(m - size, len(prefix) - 1)] >= best["value"]

    def on_set(cells, total):
        if len(cells) == m and total < best["value"]:
            best["value"] = total
            best["cells"] = list(cells)

    search = _Search(X, anchor, node_limit)
    search.run(m, prune, on_set)
    if best["cells"] is None:
        raise ValueError("no connected set of the requested size fits the site box")
    return SearchResult(float(best["value"]), StarSet.of(best["cells"], X.dim), "exact", search.nodes)


def max_passage(size_cap: int, anchor, X: SiteField, mode: str = "exact", max_exact: int = 10,
                node_limit: int = 50_000_000) -> SearchResult:
    """Maximum of X(gamma) over connected gamma containing anchor with |gamma| <= size_cap."""
    anchor = tuple(int(v) for v in anchor)
    if size_cap < 1:
        return SearchResult(0.0, StarSet.of([], X.dim), mode)
    if mode == "greedy":
        # largest-first growth gives a lower bound on the maximum
        negX = SiteField(X.values.max() - X.values, X.origin, X.R)
        cells, _ = _greedy_grow(negX, anchor, lambda size, tot, v: size >= size_cap)
        return SearchResult(passage_time(cells, X), StarSet.of(cells, X.dim), "greedy")
    if size_cap > max_exact:
        raise ResourceGuardError(f"exact search limited to sizes <= {max_exact}")
    top = _reachable_values(X, anchor, size_cap - 1)[::-1]
    prefix = np.concatenate([[0.0], np.cumsum(top)])
    best = {"value": -1.0, "cells": None}

    def prune(size, total):
        return total + prefix[min(size_cap - size, len(prefix) - 1)] <= best["value"]

    def on_set(cells, total):
        if total > best["value"]:
            best["value"] = total
            best["cells"] = list(cells)

    search = _Search(X, anchor, node_limit)
    search.run(size_cap, prune, on_set)
    return SearchResult(float(best["value"]), StarSet.of(best["cells"], X.dim), "exact", search.nodes)


def max_size_under_budget(A: float, n: int, anchor, X: SiteField, mode: str = "exact",
                          max_exact: int = 14, node_limit: int = 50_000_000) -> int:
    """Largest |gamma| over connected gamma containing anchor with X(gamma) <= A * n."""
    anchor = tuple(int(v) for v in anchor)
    budget = A * n
    if X[anchor] > budget:
        return 0
    if mode == "greedy":
        cells, _ = _greedy_grow(X, anchor, lambda size, tot, v: tot + v > budget)
        return len(cells)
    if mode != "exact":
        raise ValueError("mode must be exact or greedy")
    # a set of size s lies within Chebyshev distance s - 1 of the anchor and
    # costs at least the sum of the s smallest values there
    cap = 1
    while True:
        near = _reachable_values(X, anchor, cap)
        if cap + 1 > near.size or near[: cap + 1].sum() > budget:
            break
        cap += 1
        if cap > max_exact:
            raise ResourceGuardError(f"budget admits sets larger than {max_exact}")
    prefix = np.cumsum(_reachable_values(X, anchor, cap - 1))
    best = {"size": 1}

    def prune(size, total):
        if total > budget:
            return True
        room = int(np.searchsorted(prefix, budget - total, side="right"))
        return size + room <= best["size"]

    def on_set(cells, total):
        if total <= budget and len(cells) > best["size"]:
            best["size"] = len(cells)

    _Search(X, anchor, node_limit).run(max(cap, 1), prune, on_set)
    return best["size"]


# ---------------------------------------------------------------------------
# site fields from metrics and verification tables


def dependence_range(metric: MetricField) -> int:
    """Sites at least this far apart see independent field values (oracle metrics: 1)."""
    if not metric.fields:
        return 1
    rng = max(f.covariance.range for f in metric.fields)
    return int(math.ceil(rng)) + 1


def lattice_from_metric(metric: MetricField, which: str = "lambda", lo_site=None, hi_site=None,
                        samples_per_axis: int = 16) -> SiteField:
    """X_z = lambda_z (cube minimum eigenvalue) or Lambda_z (cube maximum)."""
    if which not in ("lambda", "Lambda"):
        raise ValueError("which must be 'lambda' or 'Lambda'")
    w = metric.window
    if lo_site is None:
        lo_site = np.ceil(w.lo + 0.5 - 1e-9).astype(int)
    if hi_site is None:
        hi_site = np.floor(w.hi - 0.5 + 1e-9).astype(int)
    lo_site = np.asarray(lo_site, dtype=int)
    hi_site = np.asarray(hi_site, dtype=int)
    if np.any(hi_site < lo_site):
        raise ValueError("window too small for any unit cube")
    lam, Lam = cube_extremes_grid(metric, lo_site, hi_site, samples_per_axis)
    vals = lam if which == "lambda" else Lam
    return SiteField(vals, tuple(lo_site.tolist()), dependence_range(metric),
                     {"which": which, "samples_per_axis": samples_per_axis})


def defb_interval(r: float, p: float, A: float) -> tuple[float, float]:
    """Admissible open interval for the size constant B, given r > 0, 0 < p < 1, A > 0."""
    if not (r > 0 and 0 < p < 1 and A > 0):
        raise ValueError("need r > 0, 0 < p < 1, A > 0")
    return r * A / math.log(1 / p), r * A / math.log((1 + p) / (2 * p))


def zero_probability(samples) -> tuple[float, float]:
    """Empirical P(X = 0) and its binomial standard error."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    p = float(np.mean(x == 0))
    return p, math.sqrt(max(p * (1 - p), 1.0 / x.size) / x.size)


@dataclass
class VerificationTable:
    kind: str
    constant: float
    rows: list  # (n, budget or size cap, result)

    @property
    def slope(self) -> float:
        """Least-squares slope through the origin of result against n."""
        n = np.array([r[0] for r in self.rows], dtype=float)
        y = np.array([r[2] for r in self.rows], dtype=float)
        return float(np.dot(n, y) / np.dot(n, n))

    def to_csv(self, path) -> Path:
        path = Path(path)
        label = "max_size" if self.kind == "passstep" else "max_passage"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "budget", label])
            for n, b, v in self.rows:
                w.writerow([n, repr(float(b)), repr(float(v)) if isinstance(v, float) else v])
        return path


def passstep_table(X: SiteField, A: float, n_list, anchor=None, mode: str = "exact", **kw) -> VerificationTable:
    """max |gamma| subject to X(gamma) <= A n, for each n; slope estimates B."""
    anchor = tuple(anchor) if anchor is not None else _center_site(X)
    rows = [(int(n), A * n, max_size_under_budget(A, int(n), anchor, X, mode, **kw)) for n in n_list]
    return VerificationTable("passstep", A, rows)


def upbound_table(X: SiteField, B: float, n_list, anchor=None, mode: str = "exact", **kw) -> VerificationTable:
    """max X(gamma) subject to |gamma| <= B n, for each n; slope estimates C."""
    anchor = tuple(anchor) if anchor is not None else _center_site(X)
    rows = []
    for n in n_list:
        cap = int(math.floor(B * n))
        rows.append((int(n), cap, max_passage(cap, anchor, X, mode, **kw).value))
    return VerificationTable("upbound", B, rows)


def _center_site(X: SiteField) -> Site:
    return tuple(o + s // 2 for o, s in zip(X.origin, X.values.shape))
