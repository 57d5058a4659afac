"""Analytical latency / area / energy models and design-space sweeps.

A stored word of n_word inequalities is evaluated by n_par parallel cells in
n_seq sequential steps, aborting at the first step that detects a mismatch.
Latency grows with n_seq, area with n_par (the latch amortizes over n_seq
elements), and expected energy follows a truncated geometric search depth, so
a weighted cost over the swept configurations trades the three against each
other.
"""

import math
from dataclasses import dataclass

import numpy as np

from .luts import TechParams

# Per-step mismatch probability used for the shipped design-space default.
# Calibrated together with the a_latch / a_1t1r split so the default sweep for
# a 32-inequality word bottoms out at n_seq = 8.
DEFAULT_P_MM = 0.006
DEFAULT_WEIGHTS = (0.45, 0.05, 0.5)

# Below this the direct ratio loses precision to cancellation; switch to the
# log1p/expm1 form, which is continuous against the exact p -> 0 limit.
_P_TINY = 1e-8


class ArchError(ValueError):
    """Invalid architecture configuration or weights."""


@dataclass(frozen=True)
class ArchConfig:
    n_seq: int
    n_par: int
    n_word: int

    def __post_init__(self):
        for name in ("n_seq", "n_par", "n_word"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ArchError("%s must be an integer >= 1, got %r" % (name, v))
            object.__setattr__(self, name, int(v))
        if self.n_word > self.n_seq * self.n_par:
            raise ArchError("n_word = %d exceeds n_seq * n_par = %d"
                            % (self.n_word, self.n_seq * self.n_par))


@dataclass(frozen=True)
class CostWeights:
    w_e: float
    w_l: float
    w_a: float

    def __post_init__(self):
        for name in ("w_e", "w_l", "w_a"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0):
                raise ArchError("%s must be a non-negative finite number" % name)
            object.__setattr__(self, name, v)
        if abs(self.w_e + self.w_l + self.w_a - 1.0) > 1e-9:
            raise ArchError("weights must sum to 1, got %r" % (self.w_e + self.w_l + self.w_a))


@dataclass(frozen=True)
class DesignPoint:
    cfg: ArchConfig
    t_word: float
    a_word: float
    e_word: float
    t_norm: float
    a_norm: float
    e_norm: float
    cost: float


def latency(cfg: ArchConfig, tech: TechParams) -> float:
    """Word evaluation time: one latch period per sequential step."""
    return cfg.n_seq * tech.t_latch


def area(cfg: ArchConfig, tech: TechParams) -> float:
    """Word area: n_par slices, each one latch plus n_seq 1T1R elements."""
    return cfg.n_par * (tech.a_latch + cfg.n_seq * tech.a_1t1r)


def p_mm_par(p_mm: float, n_par: int) -> float:
    """Probability that a step of n_par independent cells contains a mismatch."""
    if not (0.0 <= p_mm <= 1.0):
        raise ArchError("p_mm must lie in [0, 1]")
    if n_par < 1:
        raise ArchError("n_par must be >= 1")
    return 1.0 - (1.0 - p_mm) ** n_par


def expected_depth(p_step: float, n_seq: int) -> float:
    """Expected number of executed steps of a truncated geometric search.

    Equals (1 - (1 - p)^n) / p, with the p -> 0 limit returned as exactly
    n_seq and a cancellation-safe branch for tiny positive p.
    """
    if not (0.0 <= p_step <= 1.0):
        raise ArchError("p_step must lie in [0, 1]")
    if n_seq < 1:
        raise ArchError("n_seq must be >= 1")
    if p_step == 0.0:
        return float(n_seq)
    if p_step < _P_TINY:
        return -math.expm1(n_seq * math.log1p(-p_step)) / p_step
    return (1.0 - (1.0 - p_step) ** n_seq) / p_step


def expected_energy(cfg: ArchConfig, tech: TechParams, p_mm: float) -> float:
    """Expected word energy per lookup with early termination."""
    depth = expected_depth(p_mm_par(p_mm, cfg.n_par), cfg.n_seq)
    return cfg.n_par * tech.e_cell * depth


_MC_CHUNK = 200_000


def monte_carlo_energy(cfg: ArchConfig, tech: TechParams, p_mm: float,
                       trials: int, seed: int):
    """Direct simulation of the early-terminating search; returns (mean, stderr).

    Every trial draws one Bernoulli mismatch per cell per step, executes steps
    until the first one containing a mismatch (or all n_seq), and accumulates
    n_par * e_cell per executed step. Deterministic for a fixed seed; the
    chunk size is fixed so results do not depend on available memory.
    """
    if trials < 1:
        raise ArchError("trials must be >= 1")
    if not (0.0 <= p_mm <= 1.0):
        raise ArchError("p_mm must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    e_step = cfg.n_par * tech.e_cell
    # Accumulate step counts (small integers, exact in float64) and scale to
    # Joules at the end: avoids cancellation in the variance at fJ magnitudes.
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        m = min(_MC_CHUNK, trials - done)
        draws = rng.random((m, cfg.n_seq, cfg.n_par))
        step_mm = np.any(draws < p_mm, axis=2)
        any_mm = np.any(step_mm, axis=1)
        first = np.argmax(step_mm, axis=1)
        steps = np.where(any_mm, first + 1, cfg.n_seq)
        total += float(np.sum(steps))
        total_sq += float(np.sum(steps * steps))
        done += m
    mean_steps = total / trials
    var_steps = max(total_sq / trials - mean_steps * mean_steps, 0.0)
    mean = mean_steps * e_step
    stderr = math.sqrt(var_steps / trials) * e_step
    return mean, stderr


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = float(np.min(values))
    hi = float(np.max(values))
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def sweep(n_word: int, tech: TechParams, weights: CostWeights, p_mm: float):
    """Enumerate n_seq in [1, n_word] with n_par = ceil(n_word / n_seq).

    Raw latency/area/energy are min-max normalized over the swept set and
    combined as cost = w_e * E + w_l * T + w_a * A. Returns (points, best);
    cost ties resolve toward the smaller n_seq.
    """
    if n_word < 1:
        raise ArchError("n_word must be >= 1")
    cfgs = [ArchConfig(n_seq=s, n_par=-(-n_word // s), n_word=n_word)
            for s in range(1, n_word + 1)]
    t = np.array([latency(c, tech) for c in cfgs])
    a = np.array([area(c, tech) for c in cfgs])
    e = np.array([expected_energy(c, tech, p_mm) for c in cfgs])
    t_n, a_n, e_n = _minmax(t), _minmax(a), _minmax(e)
    cost = weights.w_e * e_n + weights.w_l * t_n + weights.w_a * a_n
    points = [DesignPoint(cfg=c, t_word=float(t[i]), a_word=float(a[i]), e_word=float(e[i]),
                          t_norm=float(t_n[i]), a_norm=float(a_n[i]), e_norm=float(e_n[i]),
                          cost=float(cost[i]))
              for i, c in enumerate(cfgs)]
    best = points[0]
    for p in points[1:]:
        if p.cost < best.cost:
            best = p
    return points, best


SWEEP_CSV_HEADER = "n_seq,n_par,t_word_s,a_word_um2,e_word_J,t_norm,a_norm,e_norm,cost"


def sweep_to_csv(points, path):
    with open(path, "w") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for p in points:
            fh.write("%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                     % (p.cfg.n_seq, p.cfg.n_par, p.t_word, p.a_word, p.e_word,
                        p.t_norm, p.a_norm, p.e_norm, p.cost))
