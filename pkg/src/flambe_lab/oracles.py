"""The two oracles FLAMBE relies on: maximum likelihood over a finite class, and successor sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataModelMismatchError, DomainError, InvariantViolation
from .mdp import clean_density, sample_next_states

LIKELIHOOD_FLOOR = 1e-12


class TransitionDataset:
    """Append-only per-step collections of ``(s, a, s')`` triples with provenance."""

    def __init__(self, H: int, n_states: int, m: int):
        self.H, self.n_states, self.m = int(H), int(n_states), int(m)
        self._parts = [[] for _ in range(self.H)]

    def add(self, h: int, s, a, s_next, iteration: int = 0, seed: int = 0) -> None:
        s = np.asarray(s, dtype=int).ravel()
        s_next = np.asarray(s_next, dtype=int).ravel()
        a = np.asarray(a, dtype=float).reshape(-1, self.m)
        if not (len(s) == len(s_next) == len(a)):
            raise DomainError("triples must have matching lengths")
        if np.any((s < 0) | (s >= self.n_states) | (s_next < 0) | (s_next >= self.n_states)):
            raise DomainError("state index out of range")
        if np.any((a < 0) | (a > 1)):
            raise DomainError("actions must lie in [0, 1]^m")
        tag = np.full(len(s), iteration, dtype=int), np.full(len(s), seed, dtype=np.int64)
        self._parts[h].append((s, a, s_next, *tag))

    def size(self, h: int) -> int:
        return sum(len(p[0]) for p in self._parts[h])

    def triples(self, h: int):
        """Arrays ``(s, a, s_next)`` for step h, in insertion order."""
        if not self._parts[h]:
            return np.zeros(0, int), np.zeros((0, self.m)), np.zeros(0, int)
        s, a, sn, _, _ = (np.concatenate(x) for x in zip(*self._parts[h]))
        return s, a, sn

    def rows(self):
        for h in range(self.H):
            for s, a, sn, it, sd in self._parts[h]:
                for i in range(len(s)):
                    yield h, int(s[i]), a[i], int(sn[i]), int(it[i]), int(sd[i])

    def to_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["h", "s"] + [f"a_{j + 1}" for j in range(self.m)] + ["s_next", "iter", "seed"])
            for h, s, a, sn, it, sd in self.rows():
                w.writerow([h, s] + [repr(float(x)) for x in a] + [sn, it, sd])

    @classmethod
    def from_csv(cls, path, H: int, n_states: int) -> "TransitionDataset":
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        m = sum(1 for c in header if c.startswith("a_"))
        data = cls(H, n_states, m)
        for row in reader:
            h, s = int(row[0]), int(row[1])
            a = [float(x) for x in row[2:2 + m]]
            data.add(h, [s], [a], [int(row[2 + m])], int(row[3 + m]), int(row[4 + m]))
        return data


@dataclass
class MLEResult:
    phi_idx: int
    psi_idx: int
    log_likelihood: float
    table: np.ndarray  # (|Phi|, |Psi|) log likelihoods
    feasible: np.ndarray  # pairs that give every sample positive density


def log_likelihoods(s, a, s_next, Phi, Psi):
    """Floored log likelihood of each class pair, summed with exact rounding."""
    table = np.empty((len(Phi), len(Psi)))
    feasible = np.empty((len(Phi), len(Psi)), dtype=bool)
    for i, phi in enumerate(Phi):
        F = phi(s, a)
        for j, psi in enumerate(Psi):
            p = np.einsum("nd,nd->n", F, psi[s_next])
            feasible[i, j] = bool(np.all(p > 0))
            # fsum is correctly rounded, so the total does not depend on sample order
            table[i, j] = math.fsum(np.log(np.clip(p, 0.0, None) + LIKELIHOOD_FLOOR))
    return table, feasible


def mle_fit(data, hc, h: int = 0, true_pair=None) -> MLEResult:
    """Exhaustive maximum likelihood over ``Phi x Psi`` for the triples of step ``h``.

    ``data`` is a :class:`TransitionDataset` or a tuple ``(s, a, s_next)``.
    Ties go to the lowest ``(phi, psi)`` index. When ``true_pair`` is given the
    selected pair is checked to be at least as likely as the truth.
    """
    s, a, s_next = data.triples(h) if isinstance(data, TransitionDataset) else data
    s = np.asarray(s, dtype=int)
    s_next = np.asarray(s_next, dtype=int)
    if len(s) == 0:
        raise DomainError("cannot fit an empty dataset")
    a = np.asarray(a, dtype=float).reshape(len(s), -1)
    table, feasible = log_likelihoods(s, a, s_next, hc.Phi, hc.Psi)
    if not feasible.any():
        raise DataModelMismatchError("every class pair assigns zero density to some observed transition")
    i, j = np.unravel_index(int(np.argmax(table)), table.shape)
    if true_pair is not None and table[i, j] < table[true_pair]:
        raise InvariantViolation("selected pair is less likely than the true pair")
    return MLEResult(int(i), int(j), float(table[i, j]), table, feasible)


def samp(phi, psi, s: int, a, seed=None, rng=None, size: int | None = None):
    """Draw successor states from ``phi(s, a) . psi(.)``; reproducible from ``seed``."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    p = clean_density(np.asarray(phi(s, np.asarray(a, dtype=float))) @ np.asarray(psi).T, f" at (s={s})")
    n = 1 if size is None else size
    draws = sample_next_states(np.broadcast_to(p, (n, p.size)), rng)
    return int(draws[0]) if size is None else draws
