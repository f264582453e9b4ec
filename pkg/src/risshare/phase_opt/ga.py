"""Generational genetic search over the phases of one surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import TWO_PI, wrap_phase
from .hop import HopProblem


@dataclass(frozen=True)
class GaParams:
    population: int = 64
    generations: int = 200
    tournament: int = 3
    mutation_sigma: float = 0.1   # rad
    mutation_rate: float = 0.05   # per gene
    elite: int = 2

    def __post_init__(self):
        if self.population < 2 or self.generations < 0 or self.tournament < 1:
            raise ValueError("GA needs population >= 2, generations >= 0, tournament >= 1")
        if not 0 <= self.elite < self.population:
            raise ValueError("elite count must be below the population size")


def _circular_diff(b, a):
    """Signed angle from a to b in (-π, π]."""
    return np.angle(np.exp(1j * (b - a)))


def ga_hop(problem: HopProblem, params: GaParams | None = None, seed=0, init=None) -> np.ndarray:
    """Maximize min_m zeta_m |gain_m|^2 over the phases of one surface.

    Tournament selection, per-gene blend crossover along the shorter arc
    between parents, Gaussian mutation and elitism.  ``init`` (e.g. the
    surface's current phases) is placed in the initial population so the
    result is never worse than it.  Returns the best individual ever seen.
    """
    p = params or GaParams()
    rng = np.random.default_rng(seed)
    n = problem.n_elements
    pop = rng.uniform(0.0, TWO_PI, (p.population, n))
    if init is not None:
        pop[0] = init
    fit = problem.value(pop)
    best_i = int(np.argmax(fit))
    best, best_fit = pop[best_i].copy(), fit[best_i]

    for _ in range(p.generations):
        order = np.argsort(-fit, kind="stable")
        elite = pop[order[:p.elite]]
        n_kids = p.population - p.elite

        contest = rng.integers(0, p.population, (2 * n_kids, p.tournament))
        winners = contest[np.arange(2 * n_kids), np.argmax(fit[contest], axis=1)]
        pa, pb = pop[winners[:n_kids]], pop[winners[n_kids:]]
        u = rng.uniform(0.0, 1.0, pa.shape)
        kids = pa + u * _circular_diff(pb, pa)

        mutate = rng.uniform(0.0, 1.0, kids.shape) < p.mutation_rate
        kids = kids + mutate * rng.normal(0.0, p.mutation_sigma, kids.shape)

        pop = np.vstack([elite, np.mod(kids, TWO_PI)])
        fit = problem.value(pop)
        i = int(np.argmax(fit))
        if fit[i] > best_fit:
            best, best_fit = pop[i].copy(), fit[i]
    return wrap_phase(best)
