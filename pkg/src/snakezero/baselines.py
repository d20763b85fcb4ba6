"""Comparison strategies: uniform random, Hamiltonian cycle, naive tree search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env, search
from .errors import ContractViolation, NoCycleError


@dataclass(frozen=True)
class HamiltonianCycle:
    """A cyclic visiting order of all n*n cells, consecutive cells adjacent."""

    n: int
    order: np.ndarray
    index: np.ndarray

    def successor(self, cell):
        return int(self.order[(self.index[cell] + 1) % (self.n * self.n)])


def build_hamiltonian_cycle(n):
    """Deterministic boustrophedon cycle on an even n x n grid.

    Rows 0..n-1 are traversed over columns 1..n-1 in alternating direction,
    then the cycle returns to the start along column 0. The game's initial
    placement (tail (0,0), head (0,1)) sits on consecutive cycle positions.
    """
    if n % 2 != 0 or n < 4:
        raise NoCycleError(f"boustrophedon cycle needs an even board >= 4, got {n}")
    cells = []
    for r in range(n):
        cols = range(1, n) if r % 2 == 0 else range(n - 1, 0, -1)
        cells.extend(r * n + c for c in cols)
    cells.extend(r * n for r in range(n - 1, -1, -1))
    order = np.array(cells, dtype=np.int64)
    index = np.empty(n * n, dtype=np.int64)
    index[order] = np.arange(n * n)
    cycle = HamiltonianCycle(n=n, order=order, index=index)
    _validate_cycle(cycle)
    return cycle


def _validate_cycle(cycle):
    n, order = cycle.n, cycle.order
    if sorted(order.tolist()) != list(range(n * n)):
        raise NoCycleError("cycle is not a permutation of the board")
    for pos in range(n * n):
        a, b = int(order[pos]), int(order[(pos + 1) % (n * n)])
        if abs(a // n - b // n) + abs(a % n - b % n) != 1:
            raise NoCycleError(f"cycle positions {pos},{pos + 1} are not adjacent")


def action_toward(n, src, dst):
    """The action moving a head at src onto the orthogonally adjacent dst."""
    delta = (dst // n - src // n, dst % n - src % n)
    for action, step_delta in enumerate(env.DELTAS):
        if delta == tuple(step_delta):
            return action
    raise ContractViolation(f"cells {src} and {dst} are not adjacent")


def hamiltonian_agent(state, cycle):
    """Follow the cycle: move the head onto its cycle successor.

    Requires the body to lie on a contiguous arc of the cycle ending at the
    head, which holds inductively from the aligned initial placement.
    """
    if state.n != cycle.n:
        raise ContractViolation("cycle built for a different board size")
    n2 = state.n * state.n
    head_pos = int(cycle.index[state.head])
    for i, cell in enumerate(state.cells):
        if cycle.index[cell] != (head_pos - i) % n2:
            raise ContractViolation("snake body is not a contiguous arc of the cycle")
    return action_toward(state.n, state.head, cycle.successor(state.head))


def random_agent(state, rng):
    """Uniform choice over the legal actions."""
    legal = env.legal_actions(state)
    return legal[int(rng.integers(len(legal)))]


def naive_search_agent(state, budget=10_000, config=None):
    """Tree search with uniform priors and zero leaf value.

    Only discounted environment rewards inform Q; the move with the most
    visits wins, lowest action index on ties. Configurations with a finite
    time limit route through the compiled kernel, which produces the exact
    same visit counts as the reference search.
    """
    cfg = config if config is not None else search.SearchConfig(budget=budget)
    if cfg.time_limit is not None and cfg.dirichlet is None:
        from . import kernel

        stats = kernel.naive_search_stats(state, cfg)
        if stats is not None:
            return search.choose_move(stats.visits, mode="argmax")
    result = search.run_search(state, cfg, search.uniform_evaluator)
    return search.choose_move(result.visits, mode="argmax")
