"""Complete-subset enumeration and uniform sampling of instrument subsets."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEFAULT_R = 100
DEFAULT_SEED = 2022
# Hard ceiling on explicit enumeration regardless of r.
ENUMERATION_LIMIT = 10**6


@dataclass(frozen=True)
class SubsetPlan:
    """Index subsets (rows of ``subsets``) defining the averaged models for one k."""

    K: int
    k: int
    subsets: np.ndarray
    M_exact_capped: int
    sampled: bool
    seed: int | None

    @property
    def M(self) -> int:
        return self.subsets.shape[0]

    def as_lists(self) -> list[list[int]]:
        return self.subsets.tolist()


def binomial_capped(K: int, k: int, cap: int) -> int:
    """``min(C(K, k), cap)`` with early exit once the running count passes ``cap``."""
    if k < 0 or K < 0 or k > K:
        raise ValueError(f"binomial_capped needs 0 <= k <= K, got K={K}, k={k}")
    k = min(k, K - k)
    c = 1
    for i in range(1, k + 1):
        # c == C(K - k + i - 1, i - 1); the sequence is nondecreasing in i
        c = c * (K - k + i) // i
        if c > cap:
            return cap
    return min(c, cap)


def enumerate_k_subsets(K: int, k: int) -> np.ndarray:
    """All size-k subsets of ``range(K)`` in lexicographic order, one per row."""
    if k > K:
        raise ValueError(f"subset size k={k} exceeds K={K}")
    if k < 1:
        raise ValueError("subset size must be at least 1")
    if binomial_capped(K, k, ENUMERATION_LIMIT + 1) > ENUMERATION_LIMIT:
        raise ValueError(f"C({K},{k}) exceeds the enumeration limit {ENUMERATION_LIMIT}")
    combos = itertools.combinations(range(K), k)
    return np.array(list(combos), dtype=np.int64).reshape(-1, k)


def plan_rng(seed: int, k: int) -> np.random.Generator:
    """Independent stream per subset size, so the k-grid never shifts other draws."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


def sample_k_subsets(K: int, k: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """``r`` distinct size-k subsets drawn uniformly without replacement.

    Each candidate is the first k entries of a random permutation (sorted),
    which is uniform over subsets; duplicates are rejected and redrawn.
    """
    total = binomial_capped(K, k, r + 1)
    if total < r:
        raise ValueError(f"cannot draw {r} distinct subsets from C({K},{k}) = {total}")
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < r:
        need = r - len(out)
        draws = np.sort(np.argsort(rng.random((need, K)), axis=1)[:, :k], axis=1)
        for row in draws:
            key = tuple(row.tolist())
            if key not in seen:
                seen.add(key)
                out.append(key)
    return np.array(out, dtype=np.int64).reshape(r, k)


def build_subset_plan(K: int, k: int, r: int = DEFAULT_R, seed: int = DEFAULT_SEED) -> SubsetPlan:
    if not 1 <= k <= K:
        raise ValueError(f"subset size must satisfy 1 <= k <= K, got k={k}, K={K}")
    if r < 1:
        raise ValueError(f"r must be positive, got {r}")
    capped = binomial_capped(K, k, r + 1)
    if capped <= r:
        return SubsetPlan(K, k, enumerate_k_subsets(K, k), capped, sampled=False, seed=None)
    subsets = sample_k_subsets(K, k, r, plan_rng(seed, k))
    return SubsetPlan(K, k, subsets, capped, sampled=True, seed=int(seed))
