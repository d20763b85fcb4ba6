"""Chance-node Monte Carlo tree search with PUCT selection.

The tree alternates decision nodes, where the agent picks an action by
the PUCT rule, and chance nodes, where apple respawn outcomes are explored
round-robin so their visit counts never differ by more than one. Forced
single-action spans are compressed onto links: each link stores the
elapsed primitive steps and the rewards collected along it, and backups
discount through the span by gamma**elapsed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import env
from .errors import ContractViolation, InvalidConfiguration

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class SearchConfig:
    c_puct: float = 0.5
    tau: float = 0.5
    budget: int = 200
    gamma: float = 0.98
    # Optional root exploration noise as (alpha, mix fraction).
    dirichlet: tuple[float, float] | None = None
    time_limit: int | None = None


class _TerminalNode:
    """Sentinel leaf: episode over, value zero, nothing beyond."""

    def __repr__(self) -> str:
        return "TERMINAL"


TERMINAL = _TerminalNode()


class Edge:
    """Decision edge: an action plus the forced span it compresses."""

    __slots__ = ("action", "prior", "visits", "value_sum", "elapsed", "events", "child")

    def __init__(self, action: int, prior: float):
        self.action = action
        self.prior = prior
        self.visits = 0
        self.value_sum = 0.0
        self.elapsed = 0
        self.events: tuple[tuple[int, float], ...] = ()
        self.child = None  # None until materialized

    @property
    def q(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0


class DecisionNode:
    __slots__ = ("state", "edges", "expanded")

    def __init__(self, state: env.GameState):
        self.state = state
        self.edges: list[Edge] = []
        self.expanded = False


class ChanceNode:
    """Pending eating move: one outcome per possible apple respawn cell.

    Outcomes are stored in (row, col) order of the respawn cell and
    materialized lazily on first selection.
    """

    __slots__ = ("state", "action", "cells", "counts", "children", "elapsed", "events")

    def __init__(self, state: env.GameState, action: int):
        self.state = state
        self.action = action
        target = state.apple  # eating means the move lands on the apple
        occ = state.occupied
        self.cells = [c for c in range(state.n * state.n) if not occ[c] and c != target]
        m = len(self.cells)
        self.counts = [0] * m
        self.children: list = [None] * m
        self.elapsed = [0] * m
        self.events: list[tuple[tuple[int, float], ...]] = [()] * m


@dataclass(slots=True)
class SearchResult:
    visits: np.ndarray  # int64 per action, zero on illegal actions
    root: DecisionNode


def uniform_evaluator(state: env.GameState) -> tuple[np.ndarray, float]:
    """Uniform priors and zero leaf value: search on rollout-free rewards."""
    return np.full(4, 0.25), 0.0


def run_search(
    state: env.GameState,
    config: SearchConfig,
    evaluator,
    rng: np.random.Generator | None = None,
) -> SearchResult:
    """Run config.budget leaf evaluations from a decision state.

    Each simulation walks the tree by PUCT at decision nodes and
    round-robin at chance nodes, expands one new leaf (terminal leaves
    count too, with value zero), and backs the discounted value up the
    path. The root is expanded up front and not counted against the
    budget, so root visit counts sum to exactly config.budget.
    """
    if state.terminal:
        raise ContractViolation("run_search on a terminal state")
    _check_config(config)
    root = DecisionNode(state)
    _expand(root, evaluator)
    if config.dirichlet is not None:
        if rng is None:
            raise ContractViolation("dirichlet noise needs an rng")
        alpha, frac = config.dirichlet
        noise = rng.dirichlet([alpha] * len(root.edges))
        for edge, eta in zip(root.edges, noise):
            edge.prior = (1.0 - frac) * edge.prior + frac * float(eta)
    for _ in range(config.budget):
        _simulate(root, config, evaluator)
    visits = np.zeros(4, dtype=np.int64)
    for edge in root.edges:
        visits[edge.action] = edge.visits
    return SearchResult(visits=visits, root=root)


def visits_to_policy(visits, tau: float) -> np.ndarray:
    """Temperature-sharpened visit distribution: pi(a) proportional to N(a)**(1/tau)."""
    if tau <= 0:
        raise InvalidConfiguration(f"tau must be positive, got {tau}")
    counts = np.asarray(visits, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ContractViolation("visits_to_policy on all-zero visit counts")
    scaled = (counts / counts.max()) ** (1.0 / tau)
    return scaled / scaled.sum()


def choose_move(policy, mode: str = "sample", rng: np.random.Generator | None = None) -> int:
    """Pick an action from a policy vector: sample it, or take the argmax
    (lowest index on ties)."""
    pi = np.asarray(policy, dtype=np.float64)
    if mode == "argmax":
        return int(np.argmax(pi))
    if mode != "sample":
        raise InvalidConfiguration(f"unknown move mode {mode!r}")
    if rng is None:
        raise ContractViolation("sampling a move needs an rng")
    return int(rng.choice(4, p=pi))


def _check_config(config: SearchConfig) -> None:
    if config.budget < 1:
        raise InvalidConfiguration(f"budget must be at least 1, got {config.budget}")
    if not 0.0 < config.gamma <= 1.0:
        raise InvalidConfiguration(f"gamma must be in (0, 1], got {config.gamma}")
    if config.c_puct < 0:
        raise InvalidConfiguration(f"c_puct must be non-negative, got {config.c_puct}")


def _expand(node: DecisionNode, evaluator) -> float:
    """Attach prior-weighted edges for the legal actions; return the leaf value."""
    policy, value = evaluator(node.state)
    acts = env.legal_actions(node.state)
    policy = np.asarray(policy, dtype=np.float64)
    legal_mass = float(policy[list(acts)].sum())
    if not np.isfinite(policy).all() or (policy < 0).any() or legal_mass <= 0.0:
        logger.warning("degenerate policy from evaluator; using uniform priors")
        priors = [1.0 / len(acts)] * len(acts)
    else:
        priors = [float(policy[a]) / legal_mass for a in acts]
    node.edges = [Edge(a, p) for a, p in zip(acts, priors)]
    node.expanded = True
    return float(value)


def _select_edge(node: DecisionNode, config: SearchConfig) -> Edge:
    """PUCT: argmax of Q + c * prior * sqrt(total) / (1 + visits).

    Unvisited edges count as Q = 0. Ties go to the higher prior, then the
    lower action index (edges are stored in ascending action order).
    """
    sqrt_total = math.sqrt(sum(e.visits for e in node.edges))
    best = None
    best_score = best_prior = -math.inf
    for edge in node.edges:
        q = edge.value_sum / edge.visits if edge.visits else 0.0
        score = q + config.c_puct * edge.prior * sqrt_total / (1 + edge.visits)
        if score > best_score or (score == best_score and edge.prior > best_prior):
            best, best_score, best_prior = edge, score, edge.prior
    return best


def _select_outcome(node: ChanceNode) -> int:
    """Round-robin: least-visited outcome, lowest (row, col) cell on ties."""
    best = 0
    best_count = node.counts[0]
    for i in range(1, len(node.counts)):
        if node.counts[i] < best_count:
            best, best_count = i, node.counts[i]
    return best


def _eat_link(state, action, base_elapsed, base_events):
    """Link tail for an eating move pending at a boundary state."""
    if len(state.cells) + 1 == state.n * state.n:
        out = env.step(state, action, None)  # winning eat, no respawn
        return base_elapsed + 1, base_events + ((base_elapsed, out.reward),), TERMINAL
    return base_elapsed, base_events, ChanceNode(state, action)


def _link_from_chain(adv: env.AdvanceOutcome):
    """Turn a settled forced chain into (elapsed, events, child)."""
    if adv.terminal:
        return adv.elapsed, adv.events, TERMINAL
    if adv.at_chance:
        action = env.legal_actions(adv.state)[0]
        return _eat_link(adv.state, action, adv.elapsed, adv.events)
    return adv.elapsed, adv.events, DecisionNode(adv.state)


def _materialize_edge(state: env.GameState, edge: Edge, config: SearchConfig) -> None:
    if env.would_eat(state, edge.action):
        edge.elapsed, edge.events, edge.child = _eat_link(state, edge.action, 0, ())
        return
    adv = env.advance(state, edge.action, env.ENUMERATE, config.time_limit)
    edge.elapsed, edge.events, edge.child = _link_from_chain(adv)


def _materialize_outcome(node: ChanceNode, idx: int, config: SearchConfig) -> None:
    out = env.step(node.state, node.action, node.cells[idx])
    if out.terminal:
        link = (1, ((0, out.reward),), TERMINAL)
    else:
        cont = env.forced_chain(out.state, env.ENUMERATE, config.time_limit)
        shifted = env.AdvanceOutcome(
            state=cont.state,
            events=((0, out.reward),) + tuple((1 + off, r) for off, r in cont.events),
            elapsed=1 + cont.elapsed,
            terminal=cont.terminal,
            at_chance=cont.at_chance,
        )
        link = _link_from_chain(shifted)
    node.elapsed[idx], node.events[idx], node.children[idx] = link


def _simulate(root: DecisionNode, config: SearchConfig, evaluator) -> None:
    node = root
    path = []  # (elapsed, events, edge or None) per link walked
    while True:
        if node is TERMINAL:
            value = 0.0
            break
        if isinstance(node, DecisionNode):
            if not node.expanded:
                value = _expand(node, evaluator)
                break
            edge = _select_edge(node, config)
            if edge.child is None:
                _materialize_edge(node.state, edge, config)
            path.append((edge.elapsed, edge.events, edge))
            node = edge.child
        else:
            idx = _select_outcome(node)
            node.counts[idx] += 1
            if node.children[idx] is None:
                _materialize_outcome(node, idx, config)
            path.append((node.elapsed[idx], node.events[idx], None))
            node = node.children[idx]
    _backup(path, value, config.gamma)


def _backup(path, value: float, gamma: float) -> None:
    """Fold the leaf value up the walked path, discounting each link.

    Statistics accrue on decision edges only; chance outcome counts were
    already bumped during selection.
    """
    for elapsed, events, edge in reversed(path):
        carried = gamma**elapsed * value
        for offset, reward in events:
            carried += gamma**offset * reward
        value = carried
        if edge is not None:
            edge.visits += 1
            edge.value_sum += value
