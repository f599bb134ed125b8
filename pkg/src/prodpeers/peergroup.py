"""Peer groups and company networks from shared product/service strings."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence, Union

import numpy as np

from .corpus import AnnotatedDocument, ProductSet
from .extractors import ExtractionResult, Status


@dataclass(frozen=True)
class PeerMatch:
    target_page_id: int
    candidate_page_id: int
    candidate_name: str
    matched: ProductSet
    count: int


def match_products(target: Iterable[str], candidate: Iterable[str]) -> tuple[ProductSet, int]:
    """Exact-string intersection, in the target's item order."""
    candidate = set(candidate)
    matched = ProductSet(item for item in target if item in candidate)
    return matched, len(matched)


def _usable(universe: Iterable[ExtractionResult]) -> list[ExtractionResult]:
    return [r for r in universe if r.status is Status.OK and r.predicted]


def rank_peers(
    target: Union[AnnotatedDocument, ExtractionResult],
    universe: Sequence[ExtractionResult],
    top_n: int,
) -> list[PeerMatch]:
    """Candidates sharing at least one product, most shared first.

    An annotated target is matched through its gold set, an extracted one
    through its predicted set. Ties go to the lower page id.
    """
    if isinstance(target, AnnotatedDocument):
        if target.gold is None:
            raise ValueError(f"target page {target.page_id} has no gold annotation")
        products, target_id = target.gold, target.page_id
    else:
        products, target_id = target.predicted, target.page_id
    if top_n <= 0:
        return []
    matches = []
    for cand in _usable(universe):
        if cand.page_id == target_id:
            continue
        matched, count = match_products(products, cand.predicted)
        if count:
            matches.append(PeerMatch(target_id, cand.page_id, cand.name, matched, count))
    matches.sort(key=lambda m: (-m.count, m.candidate_page_id))
    return matches[:top_n]


@dataclass(frozen=True)
class SimilarityNetwork:
    nodes: frozenset[int]
    edges: tuple[tuple[int, int, int], ...]  # (a, b, strength) with a < b, sorted


def build_network(universe: Sequence[ExtractionResult]) -> SimilarityNetwork:
    """One edge per company pair sharing products; strength = shared count.

    Pairs are counted through an item -> companies index, so only pairs
    that share something are ever visited.
    """
    usable = _usable(universe)
    ids = [r.page_id for r in usable]
    if len(set(ids)) != len(ids):
        dupes = sorted(k for k, v in Counter(ids).items() if v > 1)
        raise ValueError(f"duplicate page ids in universe: {dupes[:5]}")
    holders: dict[str, list[int]] = defaultdict(list)
    for r in usable:
        for item in r.predicted:
            holders[item].append(r.page_id)
    strengths: Counter = Counter()
    for members in holders.values():
        for a, b in combinations(sorted(members), 2):
            strengths[(a, b)] += 1
    edges = tuple(sorted((a, b, s) for (a, b), s in strengths.items()))
    return SimilarityNetwork(nodes=frozenset(ids), edges=edges)


def incident_strengths(net: SimilarityNetwork, page_id: int) -> dict[int, int]:
    out = {}
    for a, b, s in net.edges:
        if a == page_id:
            out[b] = s
        elif b == page_id:
            out[a] = s
    return out


def strength_distribution(net: SimilarityNetwork) -> list[tuple[int, int]]:
    """(k, s): how many edges have strength exactly k, ascending in k."""
    return sorted(Counter(s for _, _, s in net.edges).items())


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    intercept: float  # ln of the prefactor
    r_squared: float
    support: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    intercept: float
    r_squared: float
    support: tuple[tuple[float, float], ...]


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    x_mean, y_mean = x.mean(), y.mean()
    sxx = float(((x - x_mean) ** 2).sum())
    if sxx == 0:
        raise ValueError("need at least two distinct k values")
    slope = float(((x - x_mean) * (y - y_mean)).sum()) / sxx
    intercept = float(y_mean - slope * x_mean)
    ss_res = float(((y - (intercept + slope * x)) ** 2).sum())
    ss_tot = float(((y - y_mean) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, min(1.0, max(0.0, r2))


def _support(dist: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    points = tuple((k, s) for k, s in dist if k >= 1 and s >= 1)
    if len(points) < 2:
        raise ValueError("need at least 2 points with k >= 1 and s >= 1")
    return points


def fit_power_law(dist: Iterable[tuple[float, float]]) -> PowerLawFit:
    """Least squares on (ln k, ln s) for s ~ k^(-gamma)."""
    support = _support(dist)
    k = np.array([p[0] for p in support], dtype=float)
    s = np.array([p[1] for p in support], dtype=float)
    slope, intercept, r2 = _ols(np.log(k), np.log(s))
    return PowerLawFit(gamma=-slope, intercept=intercept, r_squared=r2, support=support)


def fit_exponential(dist: Iterable[tuple[float, float]]) -> ExponentialFit:
    """Least squares on (k, ln s) for s ~ exp(-rate * k)."""
    support = _support(dist)
    k = np.array([p[0] for p in support], dtype=float)
    s = np.array([p[1] for p in support], dtype=float)
    slope, intercept, r2 = _ols(k, np.log(s))
    return ExponentialFit(rate=-slope, intercept=intercept, r_squared=r2, support=support)


def format_peer_table(matches: Sequence[PeerMatch]) -> str:
    rows = [("Comparable company", "Page ID", "Product/services match", "Count")]
    for m in matches:
        rows.append((m.candidate_name, str(m.candidate_page_id), repr(list(m.matched)), str(m.count)))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = []
    for r in rows:
        lines.append(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:<{widths[2]}}  {r[3]:>{widths[3]}}".rstrip())
    return "\n".join(lines) + "\n"


def format_fit_summary(power: PowerLawFit, expo: ExponentialFit) -> str:
    better = "power law" if power.r_squared >= expo.r_squared else "exponential"
    return (
        f"power law   s ~ k^-gamma: gamma={power.gamma:.6f} ln_C={power.intercept:.6f} r2={power.r_squared:.6f}\n"
        f"exponential s ~ e^-rate*k: rate={expo.rate:.6f} ln_C={expo.intercept:.6f} r2={expo.r_squared:.6f}\n"
        f"better fit (r2): {better}\n"
    )
