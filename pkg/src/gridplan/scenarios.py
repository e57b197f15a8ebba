"""Contingency scenarios, their support set, the moment ambiguity set, sampling.

A scenario is a 0/1 matrix ``z[line, period]`` with ``1`` meaning in service.
Support: at most ``n_z`` lines out in any period, and a line that is out at
``t`` stays out for the following ``tau_rst`` periods. Whether a line is
built is deliberately not part of the support (failing an unbuilt line has no
effect on shedding, so the restriction can be dropped without loss).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .grid import NetworkInstance
from .rng import substream


class ScenarioExplosion(RuntimeError):
    def __init__(self, count: int, limit: int, exact: bool = True):
        self.count = count
        self.limit = limit
        rel = "" if exact else "at least "
        super().__init__(f"{rel}{count} admissible scenarios exceed limit {limit}")


@dataclass(frozen=True, eq=False)
class ContingencyScenario:
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int8, copy=True)
        if z.ndim != 2 or not np.isin(z, (0, 1)).all():
            raise ValueError("z must be a 0/1 matrix (lines x periods)")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @cached_property
    def key(self) -> str:
        """Flattened line-major bit string; identity for dedup and ordering."""
        return "".join(map(str, self.z.ravel().tolist()))

    def __eq__(self, other) -> bool:
        return isinstance(other, ContingencyScenario) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __lt__(self, other: "ContingencyScenario") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        return f"ContingencyScenario(failed={self.failures})"

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape

    @property
    def failures(self) -> list[tuple[int, int]]:
        return [tuple(x) for x in np.argwhere(self.z == 0).tolist()]

    @property
    def n_failures(self) -> int:
        return int((self.z == 0).sum())

    @classmethod
    def all_ones(cls, n_lines: int, periods: int) -> "ContingencyScenario":
        return cls(np.ones((n_lines, periods), dtype=np.int8))

    @classmethod
    def from_failures(cls, n_lines: int, periods: int, failed) -> "ContingencyScenario":
        z = np.ones((n_lines, periods), dtype=np.int8)
        for e, t in failed:
            z[e, t] = 0
        return cls(z)

    def describe(self, instance: NetworkInstance) -> str:
        """Affected lines with their outage periods, e.g. ``2-3@0-1; 4-5@1``."""
        parts = []
        for e in range(self.z.shape[0]):
            ts = np.flatnonzero(self.z[e] == 0).tolist()
            if ts:
                span = f"{ts[0]}" if len(ts) == 1 else f"{ts[0]}-{ts[-1]}"
                if len(ts) > 1 and ts != list(range(ts[0], ts[-1] + 1)):
                    span = ",".join(map(str, ts))
                parts.append(f"{instance.lines[e].label}@{span}")
        return "; ".join(parts) or "none"


def _check_dims(z: ContingencyScenario, instance: NetworkInstance) -> None:
    if z.shape != (instance.n_lines, instance.periods):
        raise ValueError(f"scenario shape {z.shape} != ({instance.n_lines}, {instance.periods})")


def restoration_ok(pattern, tau: int) -> bool:
    """Outage at t implies outage for the next ``tau`` periods."""
    T = len(pattern)
    for t in range(T):
        if pattern[t] == 0:
            for s in range(t + 1, min(t + tau, T - 1) + 1):
                if pattern[s] != 0:
                    return False
    return True


def is_admissible(z: ContingencyScenario, instance: NetworkInstance) -> bool:
    _check_dims(z, instance)
    out = 1 - z.z
    if (out.sum(axis=0) > instance.n_z).any():
        return False
    return all(restoration_ok(z.z[e], int(instance.tau_rst[e])) for e in range(instance.n_lines))


# -- enumeration --------------------------------------------------------------

def line_patterns(periods: int, tau: int, limit: int | None = None) -> list[tuple[int, ...]]:
    """All admissible availability patterns of one line, ascending."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], forced_until: int):
        t = len(prefix)
        if t == periods:
            out.append(tuple(prefix))
            if limit is not None and len(out) > limit:
                raise ScenarioExplosion(len(out), limit, exact=False)
            return
        choices = (0,) if t <= forced_until else (0, 1)
        for v in choices:
            rec(prefix + [v], t + tau if v == 0 else forced_until)

    rec([], -1)
    return out


def _patterns(instance: NetworkInstance, limit: int | None) -> list[list[tuple[int, ...]]]:
    cache: dict[int, list] = {}
    out = []
    for e in range(instance.n_lines):
        tau = int(instance.tau_rst[e])
        if tau not in cache:
            cache[tau] = line_patterns(instance.periods, tau, limit)
        out.append(cache[tau])
    return out


def count_scenarios(instance: NetworkInstance, limit: int | None = None) -> int:
    """Size of the support, by dynamic programming over lines."""
    T, nz = instance.periods, instance.n_z
    states: dict[tuple[int, ...], int] = {(0,) * T: 1}
    for pats in _patterns(instance, limit):
        nxt: dict[tuple[int, ...], int] = {}
        for state, cnt in states.items():
            for p in pats:
                s = tuple(a + 1 - b for a, b in zip(state, p))
                if max(s) <= nz:
                    nxt[s] = nxt.get(s, 0) + cnt
        states = nxt
        if limit is not None and len(states) > limit:
            raise ScenarioExplosion(len(states), limit, exact=False)
    return sum(states.values())


def iter_scenarios(instance: NetworkInstance) -> Iterator[ContingencyScenario]:
    """Admissible scenarios in lexicographic order of their bit strings."""
    pats = _patterns(instance, None)
    L, T, nz = instance.n_lines, instance.periods, instance.n_z
    rows: list[tuple[int, ...]] = [()] * L

    def rec(e: int, used: tuple[int, ...]):
        if e == L:
            yield ContingencyScenario(np.array(rows, dtype=np.int8).reshape(L, T))
            return
        for p in pats[e]:
            u = tuple(a + 1 - b for a, b in zip(used, p))
            if max(u) <= nz:
                rows[e] = p
                yield from rec(e + 1, u)

    yield from rec(0, (0,) * T)


def enumerate_scenarios(instance: NetworkInstance, limit: int = 100_000) -> list[ContingencyScenario]:
    count = count_scenarios(instance, limit)
    if count > limit:
        raise ScenarioExplosion(count, limit)
    return list(iter_scenarios(instance))


def single_line_scenarios(instance: NetworkInstance, limit: int = 100_000) -> list[ContingencyScenario]:
    """Admissible scenarios in which exactly one line ever fails, sorted."""
    if instance.n_z < 1:
        return []
    L, T = instance.n_lines, instance.periods
    out = []
    for e, pats in enumerate(_patterns(instance, limit)):
        for p in pats:
            if min(p) == 1:
                continue
            z = np.ones((L, T), dtype=np.int8)
            z[e] = p
            out.append(ContingencyScenario(z))
            if len(out) > limit:
                raise ScenarioExplosion(len(out), limit, exact=False)
    return sorted(out)


# -- ambiguity set and finite distributions -----------------------------------

@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    """Distributions on the support with marginal outage probabilities <= mu_max."""

    mu_max: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu_max, dtype=float, copy=True)
        if mu.ndim != 2 or (mu < 0).any() or (mu > 1).any():
            raise ValueError("mu_max must be a (lines x periods) matrix in [0,1]")
        mu.setflags(write=False)
        object.__setattr__(self, "mu_max", mu)

    @classmethod
    def from_instance(cls, instance: NetworkInstance, mu_max=None) -> "AmbiguitySet":
        mu = instance.mu_max if mu_max is None else mu_max
        return cls(np.broadcast_to(np.asarray(mu, dtype=float), (instance.n_lines, instance.periods)))

    def check(self, instance: NetworkInstance) -> None:
        if self.mu_max.shape != (instance.n_lines, instance.periods):
            raise ValueError("ambiguity set does not match instance dimensions")


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    support: tuple[ContingencyScenario, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True)
        if len(p) != len(self.support) or (p < 0).any():
            raise ValueError("probabilities must be nonnegative, one per support scenario")
        p.setflags(write=False)
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "probs", p)

    def outage_marginals(self) -> np.ndarray:
        """E[1 - z] per (line, period)."""
        if not self.support:
            return np.zeros((0, 0))
        return sum(p * (1 - s.z) for p, s in zip(self.probs, self.support))

    def problems(self, instance: NetworkInstance, ambiguity: AmbiguitySet | None = None, tol: float = 1e-9) -> list[str]:
        out = []
        if abs(self.probs.sum() - 1.0) > tol:
            out.append(f"probabilities sum to {self.probs.sum():.12g}")
        for s in self.support:
            if not is_admissible(s, instance):
                out.append(f"inadmissible support scenario {s.failures}")
        if ambiguity is not None and self.support:
            excess = self.outage_marginals() - ambiguity.mu_max
            if (excess > tol).any():
                out.append(f"moment bound exceeded by {excess.max():.3g}")
        return out

    @classmethod
    def point_mass(cls, scenario: ContingencyScenario) -> "FiniteDistribution":
        return cls((scenario,), np.array([1.0]))


def _repaired_draw(probs: np.ndarray, u: np.ndarray, tau: np.ndarray, nz: int) -> np.ndarray:
    """One scenario from independent draws ``u < probs``, forced into the support.

    Periods are processed in order: outages still inside their restoration
    window are kept; new outages are admitted by decreasing failure
    probability until ``nz`` lines are out.
    """
    L, T = probs.shape
    z = np.ones((L, T), dtype=np.int8)
    for t in range(T):
        forced = [e for e in range(L) if any(z[e, s] == 0 for s in range(max(0, t - tau[e]), t))]
        fresh = [e for e in range(L) if u[e, t] < probs[e, t] and e not in forced]
        fresh.sort(key=lambda e: (-probs[e, t], e))
        keep = forced + fresh[: max(0, nz - len(forced))]
        z[keep, t] = 0
    return z


def sample_distribution(
    ambiguity: AmbiguitySet, instance: NetworkInstance, seed: int, draws: int = 2000
) -> FiniteDistribution:
    """Empirical member of the ambiguity set built from repaired Bernoulli draws.

    Per-(line, period) outage probabilities are drawn uniformly in
    ``[0, mu_max]``; draws are repaired into the support, and if the empirical
    outage frequency still exceeds ``mu_max`` somewhere, whole-line outages are
    removed from randomly chosen draws until it does not.
    """
    ambiguity.check(instance)
    rng = substream(seed, "sampler")
    mu = ambiguity.mu_max
    L, T = mu.shape
    probs = rng.uniform(0.0, 1.0, size=(L, T)) * mu
    tau = instance.tau_rst
    zs = np.ones((draws, L, T), dtype=np.int8)
    if (probs > 0).any():
        for k in range(draws):
            u = rng.uniform(size=(L, T))
            if (u < probs).any():
                zs[k] = _repaired_draw(probs, u, tau, instance.n_z)
    # thinning: restoring a line for the whole horizon keeps a draw admissible
    for e in range(L):
        for t in range(T):
            cap = int(np.floor(mu[e, t] * draws + 1e-9))
            hit = np.flatnonzero(zs[:, e, t] == 0)
            if len(hit) > cap:
                drop = rng.choice(hit, size=len(hit) - cap, replace=False)
                zs[np.sort(drop), e, :] = 1
    counts: dict[bytes, int] = {}
    for k in range(draws):
        b = zs[k].tobytes()
        counts[b] = counts.get(b, 0) + 1
    support = sorted(ContingencyScenario(np.frombuffer(b, dtype=np.int8).reshape(L, T)) for b in counts)
    probs_out = np.array([counts[s.z.tobytes()] / draws for s in support])
    return FiniteDistribution(tuple(support), probs_out)


def sample_scenario(dist: FiniteDistribution, seed: int) -> ContingencyScenario:
    rng = substream(seed, "scenario")
    p = dist.probs / dist.probs.sum()
    return dist.support[int(rng.choice(len(dist.support), p=p))]


def sample_scenarios(dist: FiniteDistribution, seed: int, n: int) -> list[ContingencyScenario]:
    rng = substream(seed, "scenario")
    p = dist.probs / dist.probs.sum()
    return [dist.support[i] for i in rng.choice(len(dist.support), size=n, p=p)]


# -- serialization ------------------------------------------------------------

def scenario_to_dict(z: ContingencyScenario, instance: NetworkInstance) -> dict:
    return {"failed": [[instance.lines[e].label, t] for e, t in z.failures]}


def scenario_from_dict(d: dict, instance: NetworkInstance) -> ContingencyScenario:
    index = {l.label: e for e, l in enumerate(instance.lines)}
    return ContingencyScenario.from_failures(
        instance.n_lines, instance.periods, [(index[label], int(t)) for label, t in d["failed"]]
    )


def distribution_to_dict(dist: FiniteDistribution, instance: NetworkInstance) -> dict:
    return {
        "support": [
            {"probability": float(p), **scenario_to_dict(s, instance)} for s, p in zip(dist.support, dist.probs)
        ]
    }


def distribution_from_dict(d: dict, instance: NetworkInstance) -> FiniteDistribution:
    items = d["support"]
    return FiniteDistribution(
        tuple(scenario_from_dict(x, instance) for x in items), np.array([x["probability"] for x in items])
    )


def brute_force_scenarios(instance: NetworkInstance) -> list[ContingencyScenario]:
    """Filter all 2^(L*T) bit matrices; test oracle for tiny instances only."""
    L, T = instance.n_lines, instance.periods
    out = []
    for bits in itertools.product((0, 1), repeat=L * T):
        z = ContingencyScenario(np.array(bits, dtype=np.int8).reshape(L, T))
        if is_admissible(z, instance):
            out.append(z)
    return out
