"""Hölder-norm estimation and numerical verifiers for the smoothness-based bounds.

Grid functions are arrays of shape ``(G,) * m`` (optionally with a trailing
vector axis) sampled on the node grid ``linspace(0, 1, G)`` in every dimension.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DomainError
from .grid import nodes, trapezoid_weights
from .mdp import hellinger_distance, tv_distance, value_exact
from .policies import FiniteMixture, MarkovPolicy, Policy, Smoothed


@dataclass
class SmoothnessProfile:
    """Smoothness exponents and scales; derived exponents are computed on access."""

    m: int
    alpha_E: float | None = None
    L_E: float | None = None
    alpha_T: float | None = None
    L_T: float | None = None
    alpha_R: float | None = None
    L_R: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("action dimension must be positive")
        for name in ("alpha_E", "alpha_T", "alpha_R"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("alpha_T", "alpha_R"):
            v = getattr(self, name)
            if v is not None and v > 1:
                raise DomainError(f"{name} must lie in (0, 1]")
        for name in ("L_E", "L_T", "L_R"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DomainError(f"{name} must be nonnegative")

    def _need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DomainError(f"smoothness profile lacks {', '.join(missing)}")

    @property
    def tau(self) -> float:
        self._need("alpha_E")
        return self.m / self.alpha_E

    @property
    def kappa(self) -> float:
        self._need("alpha_E")
        return self.m / (self.m + self.alpha_E)

    @property
    def sigma(self) -> float:
        self._need("alpha_T", "alpha_R")
        return self.m / min(self.alpha_T, self.alpha_R)

    @property
    def L(self) -> float:
        self._need("L_T", "L_R")
        return max(self.L_T, self.L_R)

    @property
    def alpha(self) -> float:
        """Common exponent used by the policy-smoothing bound."""
        self._need("alpha_T", "alpha_R")
        return min(self.alpha_T, self.alpha_R, 1.0)


# --- Hölder estimation ---------------------------------------------------------------


def _offsets(m: int, window: int):
    """Lattice offsets in a half-space (each unordered pair once)."""
    for off in itertools.product(range(-window, window + 1), repeat=m):
        nz = [o for o in off if o != 0]
        if nz and nz[0] > 0:
            yield off


def holder_seminorm(values, alpha: float, m: int, window: int | None = 4, ord: int = 2) -> float:
    """Largest ``|f(a) - f(a')| / ||a - a'||_2**alpha`` over node-grid pairs.

    Parameters
    ----------
    values : array
        Shape ``(G,) * m`` or ``(G,) * m + (k,)``; a trailing axis is treated as
        a vector and differences are measured in the ``ord``-norm (Euclidean by default).
    window : int or None
        Only pairs at most ``window`` cells apart per coordinate are compared;
        ``None`` compares all pairs.
    """
    values = np.asarray(values, dtype=float)
    vector = values.ndim == m + 1
    if not vector:
        values = values[..., None]
    G = values.shape[0]
    step = 1.0 / (G - 1)
    window = G - 1 if window is None else min(window, G - 1)
    if alpha == 1 and m == 1:
        # on a line, the triangle inequality makes adjacent pairs attain the all-pairs maximum
        window = 1
    if window == G - 1 and G**m <= 4096:
        return _all_pairs(values.reshape(G**m, -1), nodes(G, m), alpha, ord)
    best = 0.0
    for off in _offsets(m, window):
        src = tuple(slice(max(0, -o), G - max(0, o)) for o in off)
        dst = tuple(slice(max(0, o), G + min(0, o)) for o in off)
        diff = np.linalg.norm(values[dst] - values[src], ord=ord, axis=-1)
        if diff.size:
            dist = step * np.sqrt(sum(o * o for o in off))
            best = max(best, float(diff.max()) / dist**alpha)
    return best


def _all_pairs(vals, pts, alpha, ord):
    diff = pdist(vals, "euclidean" if ord == 2 else "cityblock")
    dist = pdist(pts)
    mask = dist > 0
    return float((diff[mask] / dist[mask] ** alpha).max()) if mask.any() else 0.0


@dataclass
class HolderEstimate:
    """Grid estimate of a Hölder norm; always a lower bound on the true norm."""

    value: float
    seminorm: float
    sup: float
    G: int
    alpha: float
    lower_bound: bool = True


def holder_norm_estimate(values, alpha: float, m: int | None = None, window: int = 4) -> HolderEstimate:
    """Estimate the Hölder-``alpha`` norm (``max(sup |f|, seminorm)``) of a node-grid function."""
    values = np.asarray(values, dtype=float)
    m = values.ndim if m is None else m
    G = values.shape[0]
    if G < 16:
        raise DomainError("need at least 16 grid points per dimension")
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    semi = holder_seminorm(values, alpha, m, window)
    sup = float(np.max(np.abs(values)))
    return HolderEstimate(max(sup, semi), semi, sup, G, alpha)


# --- uniform bound (sup versus mean) -------------------------------------------------


@dataclass
class UniformBoundResult:
    sup: float
    mean: float
    bound: float
    holds: bool
    ratio: float
    tolerance: float


def uniform_bound_check(values, alpha: float, L: float, m: int, c_cal: float = 1.0) -> UniformBoundResult:
    """Compare ``sup f`` with ``c_cal * L**(m/(m+alpha)) * mean(f)**(alpha/(m+alpha))``.

    ``values`` holds f on the node grid; the mean uses trapezoid weights. The
    decision allows the per-cell variation ``2 L (sqrt(m)/G)**min(alpha, 1)``.
    """
    values = np.asarray(values, dtype=float)
    if values.min() < -1e-12:
        raise DomainError("f must be nonnegative on the grid")
    values = np.clip(values, 0.0, None)
    G = values.shape[0]
    sup = float(values.max())
    mean = float(trapezoid_weights(G, m) @ values.ravel())
    scale = L ** (m / (m + alpha)) * mean ** (alpha / (m + alpha))
    bound = c_cal * scale
    tol = 2.0 * L * (np.sqrt(m) / G) ** min(alpha, 1.0)
    ratio = sup / scale if scale > 0 else (0.0 if sup == 0 else np.inf)
    holds = sup <= bound * (1 + 1e-12) + tol
    return UniformBoundResult(sup, mean, bound, bool(holds), float(ratio), float(tol))


@dataclass
class BatteryFunction:
    name: str
    m: int
    alpha: float
    L: float
    values: np.ndarray
    family: str
    param: float | None = None


def _node_mesh(G: int, m: int):
    pts = np.linspace(0.0, 1.0, G)
    return np.meshgrid(*([pts] * m), indexing="ij")


def bump(m: int, alpha: float, r: float, L: float = 1.0, G: int | None = None) -> BatteryFunction:
    """Interior bump ``L * max(0, r - ||a - c||)**alpha`` centred at the cube's midpoint."""
    G = G or (2**14 + 1 if m == 1 else 1025)
    mesh = _node_mesh(G, m)
    dist = np.sqrt(sum((x - 0.5) ** 2 for x in mesh))
    vals = L * np.maximum(0.0, r - dist) ** alpha
    return BatteryFunction(f"bump_m{m}_a{alpha}_r{r:g}", m, alpha, L, vals, "bump", r)


def trig(m: int, alpha: float, k, A: float = 1.0, G: int | None = None) -> BatteryFunction:
    """``A (1 + cos(2 pi k . a)) / 2`` with a Hölder-``alpha`` constant that covers it."""
    G = G or (2049 if m == 1 else 257)
    k = np.asarray(k, dtype=float)
    mesh = _node_mesh(G, m)
    phase = sum(kj * x for kj, x in zip(k, mesh))
    vals = A * (1.0 + np.cos(2 * np.pi * phase)) / 2.0
    lip = A * np.pi * np.linalg.norm(k)
    L = max(lip, A) if alpha == 1 else max(np.sqrt(lip * A), A)
    return BatteryFunction(f"trig_m{m}_a{alpha}_k{'-'.join(str(int(x)) for x in k)}", m, alpha, L, vals, "trig")


def constant(m: int, alpha: float, c: float, G: int = 65) -> BatteryFunction:
    vals = np.full((G,) * m, float(c))
    return BatteryFunction(f"const_m{m}_a{alpha}_c{c:g}", m, alpha, max(float(c), 1.0), vals, "constant", c)


BUMP_RADII = tuple(2.0**-k for k in range(2, 7))


def default_battery() -> list[BatteryFunction]:
    """The declared test battery: constants, interior bumps and cosines for m in {1, 2}, alpha in {0.5, 1}."""
    out = []
    for m in (1, 2):
        for alpha in (0.5, 1.0):
            out += [constant(m, alpha, c) for c in (0.25, 1.0)]
            out += [bump(m, alpha, r) for r in BUMP_RADII]
            ks = [(1,), (2,), (3,)] if m == 1 else [(1, 0), (1, 1), (2, 1)]
            out += [trig(m, alpha, k) for k in ks]
    return out


def calibrate_constant(battery) -> float:
    """Smallest c for which the uniform bound holds on every battery member."""
    c = 0.0
    for f in battery:
        res = uniform_bound_check(f.values, f.alpha, f.L, f.m)
        if np.isfinite(res.ratio):
            c = max(c, res.ratio)
    return c


def bump_slope(m: int, alpha: float, radii=BUMP_RADII, L: float = 1.0) -> float:
    """Log-log regression slope of grid sup against grid mean over the bump family."""
    sups, means = [], []
    for r in radii:
        res = uniform_bound_check(bump(m, alpha, r, L).values, alpha, L, m)
        sups.append(res.sup)
        means.append(res.mean)
    return float(np.polyfit(np.log(means), np.log(sups), 1)[0])


# --- policy smoothing ----------------------------------------------------------------


def smooth_policy(base: Policy, K: float, m: int | None = None) -> Policy:
    """Box-kernel smoothing; mixtures are smoothed component by component."""
    if m is not None and base.m != m:
        raise DomainError(f"policy acts in dimension {base.m}, expected {m}")
    if isinstance(base, FiniteMixture):
        return FiniteMixture([smooth_policy(p, K) for p in base.policies], base.weights)
    return Smoothed(base, K)


ROUNDING_SLACK = 1e-12  # absorbs float error when the bound itself is zero


def quadrature_tolerance(L: float, m: int, G: int, alpha: float) -> float:
    return 2.0 * L * (np.sqrt(m) / G) ** alpha


@dataclass
class PolicyGapResult:
    gap: float
    bound: float
    tolerance: float
    holds: bool
    K: float
    K_eff: float


def policy_gap_check(env, base: Policy, K: float, reward, profile: SmoothnessProfile, G: int) -> PolicyGapResult:
    """Exact value gap between ``base`` and its smoothed version against the smoothing bound."""
    if reward.alpha is None or reward.L is None:
        raise DomainError("reward carries no smoothness metadata")
    alpha, L, m = profile.alpha, profile.L, env.m
    smoothed = smooth_policy(base, K, m)
    gap = abs(value_exact(env, base, reward, G) - value_exact(env, smoothed, reward, G))
    bound = 2.0 * np.sqrt(m) * L * env.H * K ** (-alpha / m)
    tol = quadrature_tolerance(L, m, G, alpha)
    K_eff = smoothed.max_density(0, env.n_states, env.H)
    return PolicyGapResult(float(gap), float(bound), float(tol), bool(gap <= bound + tol + ROUNDING_SLACK), float(K), float(K_eff))


@dataclass
class ExpectationGapResult:
    gap: float
    bound: float
    tolerance: float
    holds: bool


def expectation_gap_check(base: MarkovPolicy, f, alpha: float, L: float, K: float, G: int, h: int = 0, s: int = 0) -> ExpectationGapResult:
    """``E_{pi_K}[f] - E_pi[f]`` at one (h, s) against ``sqrt(m) L K**(-alpha/m)``.

    ``f`` maps an ``(N, m)`` array of actions to ``N`` values.
    """
    m = base.m
    pts, w = base.atoms(h, s, G)
    spts, sw = Smoothed(base, K).atoms(h, s, G)
    gap = float(sw @ f(spts) - w @ f(pts))
    bound = np.sqrt(m) * L * K ** (-alpha / m)
    tol = quadrature_tolerance(L, m, G, alpha)
    return ExpectationGapResult(gap, float(bound), float(tol), bool(gap <= bound + tol + ROUNDING_SLACK))


def holder_test_functions(m: int, rng: np.random.Generator, n: int = 8):
    """Seeded functions ``A -> [0, 1]`` with known Hölder exponent and constant.

    Returns a list of ``(f, alpha, L)``; ``f`` acts on ``(N, m)`` arrays.
    """
    out = []
    for i in range(n):
        alpha = 1.0 if i % 2 == 0 else 0.5
        centre = rng.uniform(0, 1, m)
        r = rng.uniform(0.1, 0.5)
        slope = rng.uniform(0.5, 1.0) / r**alpha  # keeps values in [0, 1]
        f = (lambda a, c=centre, r=r, sl=slope, al=alpha:
             sl * np.maximum(0.0, r - np.linalg.norm(np.atleast_2d(a) - c, axis=1)) ** al)
        out.append((f, alpha, float(slope)))
        k = rng.integers(1, 4, m).astype(float)
        A = rng.uniform(0.3, 1.0)
        lip = A * np.pi * np.linalg.norm(k)
        L = lip if alpha == 1 else np.sqrt(lip * A)
        g = lambda a, k=k, A=A: A * (1 + np.cos(2 * np.pi * np.atleast_2d(a) @ k)) / 2
        out.append((g, alpha, float(L)))
    return out


# --- discrete importance sampling ----------------------------------------------------


@dataclass
class ISCheck:
    lhs: Fraction
    rhs: Fraction
    holds: bool


def discrete_is_check(policy_probs, f, rho) -> ISCheck:
    """Exact check of ``E_{rho, pi}[f] <= |A| E_{rho, unif}[f]`` over a finite action set.

    ``policy_probs`` and ``f`` have shape ``(n_states, n_actions)``; ``f >= 0``.
    Floats are converted to exact rationals, so no rounding enters the comparison.
    """
    P = [[Fraction(x) for x in row] for row in np.asarray(policy_probs, dtype=object)]
    F = [[Fraction(x) for x in row] for row in np.asarray(f, dtype=object)]
    R = [Fraction(x) for x in np.asarray(rho, dtype=object)]
    n_actions = len(P[0])
    if any(x < 0 for row in F for x in row):
        raise DomainError("f must be nonnegative")
    lhs = sum(r * sum(p * v for p, v in zip(prow, frow)) for r, prow, frow in zip(R, P, F))
    rhs = n_actions * sum(r * sum(frow) / n_actions for r, frow in zip(R, F))
    return ISCheck(lhs, rhs, lhs <= rhs)


# --- error functionals ---------------------------------------------------------------


def error_functional(p, q, kind: str = "tv") -> float:
    if kind == "tv":
        return tv_distance(p, q)
    if kind == "hellinger":
        return hellinger_distance(p, q)
    raise DomainError(f"unknown error functional {kind!r}")


def bracketing_check(p, q, kind: str = "tv") -> tuple[bool, bool]:
    """Whether ``TV <= E`` and ``E <= sqrt(2) * Hellinger`` hold for the chosen functional."""
    e = error_functional(p, q, kind)
    tv, hd = tv_distance(p, q), hellinger_distance(p, q)
    return bool(tv <= e + 1e-15), bool(e <= np.sqrt(2) * hd + 1e-15)


def action_grid_values(fn, G: int, m: int) -> np.ndarray:
    """Evaluate ``fn`` on the node grid; returns shape ``(G,) * m + trailing``."""
    vals = np.asarray(fn(nodes(G, m)))
    return vals.reshape((G,) * m + vals.shape[1:])
