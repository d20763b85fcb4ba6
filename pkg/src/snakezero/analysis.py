"""Closed-form results for the Hamiltonian strategy and behavioral metrics.

The closed forms model the win time as T = sum of X_i, X_i ~ Unif{1..i}
for i = 1..n^2-2: following the cycle, the apple lands uniformly on the
empty arc ahead of the head. The behavioral metrics quantify how an agent
plays (perimeter use, reachability, path lengths, board fragmentation,
turning) over states whose snake size falls in a fixed window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import env
from .baselines import build_hamiltonian_cycle, hamiltonian_agent
from .env import _shift
from .errors import ContractViolation, InvalidConfiguration


def ham_win_stats(n):
    """Exact mean and variance of the Hamiltonian strategy's win time."""
    if n < 3:
        raise InvalidConfiguration(f"win-time model needs n >= 3, got {n}")
    m = n * n - 2
    mean = m * (m + 3) / 4.0
    variance = (m * (m + 1) * (2 * m + 1) // 6 - m) / 12.0
    return mean, variance


def ham_win_prob_clt(n, limit):
    """Normal approximation of P[win time <= limit].

    Evaluated as erfc(-z/sqrt(2))/2, which stays accurate in the far left
    tail where 1 - Phi(-z) underflows. No continuity correction.
    """
    if limit <= 0:
        raise InvalidConfiguration(f"limit must be positive, got {limit}")
    mean, variance = ham_win_stats(n)
    z = (limit - mean) / math.sqrt(variance)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def ham_worst_case(n):
    """Maximum possible win time: 1 + 2 + ... + (n^2 - 2)."""
    if n < 3:
        raise InvalidConfiguration(f"win-time model needs n >= 3, got {n}")
    m = n * n - 2
    return m * (m + 1) // 2


def optimal_lower_bound(n):
    """No strategy wins faster than n^2 (n-1) / 2 steps in expectation-free terms."""
    if n < 2:
        raise InvalidConfiguration(f"lower bound needs n >= 2, got {n}")
    return n * n * (n - 1) // 2


def travel_distance_lower_bound(n):
    """Travel-distance bound (n^2/2 - 2) * floor(n/4) for even boards."""
    if n < 4:
        raise InvalidConfiguration(f"travel bound argument needs n >= 4, got {n}")
    if n % 2 != 0:
        raise InvalidConfiguration(f"travel bound needs an even board, got {n}")
    return (n * n // 2 - 2) * (n // 4)


def adversarial_win_time(n):
    """Play the Hamiltonian agent against worst-case apple placement.

    After every eat the apple respawns on the cell just behind the tail
    along the cycle (cycle distance n^2 - body length ahead of the head),
    forcing a full traversal of the empty arc per apple. Returns the win
    time; it achieves ham_worst_case(n) exactly.
    """
    cycle = build_hamiltonian_cycle(n)
    n2 = n * n

    def far_cell(head, body_len):
        return int(cycle.order[(cycle.index[head] - body_len) % n2])

    state = env.new_game(n, apple_cell=far_cell(1, 2))
    while not state.terminal:
        action = hamiltonian_agent(state, cycle)
        target = _shift(n, state.head, action)
        source = None
        if target == state.apple and len(state.cells) + 1 < n2:
            source = far_cell(target, len(state.cells) + 1)
        state = env.step(state, action, source).state
    if state.status is not env.Status.WON:
        raise ContractViolation("adversarial replay ended without a win")
    return state.time_index


def perimeter_fraction(trajectory):
    """Fraction of states whose head lies on a border cell."""
    states = list(trajectory)
    if not states:
        raise ContractViolation("perimeter_fraction on an empty trajectory")
    return sum(_on_perimeter(s) for s in states) / len(states)


def _on_perimeter(state):
    n = state.n
    row, col = state.head // n, state.head % n
    return row in (0, n - 1) or col in (0, n - 1)


def reachability(state, target):
    """Whether a body-avoiding path connects the head to the apple or tail.

    Breadth-first search over free cells, body held static; the target
    cell itself counts as reached when any visited free cell (or the head)
    touches it.
    """
    if target == "apple":
        goal = state.apple
    elif target == "tail":
        goal = state.cells[-1]
    else:
        raise InvalidConfiguration(f"unknown reachability target {target!r}")
    if goal is None:
        return False
    n = state.n
    seen = bytearray(n * n)
    seen[state.head] = 1
    frontier = [state.head]
    while frontier:
        nxt = []
        for cell in frontier:
            for action in env.ACTIONS:
                t = _shift(n, cell, action)
                if t < 0 or seen[t]:
                    continue
                if t == goal:
                    return True
                seen[t] = 1
                if not state.occupied[t]:
                    nxt.append(t)
        frontier = nxt
    return False


def _distances_from_apple(state):
    """BFS distance to the apple over free cells; -1 where unreachable."""
    n = state.n
    dist = [-1] * (n * n)
    dist[state.apple] = 0
    frontier = [state.apple]
    while frontier:
        nxt = []
        for cell in frontier:
            for action in env.ACTIONS:
                t = _shift(n, cell, action)
                if t >= 0 and dist[t] < 0 and not state.occupied[t]:
                    dist[t] = dist[cell] + 1
                    nxt.append(t)
        frontier = nxt
    return dist


def dynamic_distance(state):
    """Steps to the apple when greedily following shortest body-avoiding paths.

    Each step recomputes the shortest path against the current body and
    moves the head one cell along it (ties broken by action index); the
    body advances normally. Returns None when no path exists at some step
    or after n^4 steps (undefined).
    """
    if state.terminal or state.apple is None:
        raise ContractViolation("dynamic_distance needs an ongoing state with an apple")
    n = state.n
    cap = n ** 4
    steps = 0
    while steps < cap:
        dist = _distances_from_apple(state)
        best_action, best_target, best_dist = -1, -1, -1
        for action in env.ACTIONS:
            t = _shift(n, state.head, action)
            if t < 0:
                continue
            if t == state.apple:
                return steps + 1
            if not state.occupied[t] and dist[t] >= 0:
                if best_dist < 0 or dist[t] < best_dist:
                    best_action, best_target, best_dist = action, t, dist[t]
        if best_action < 0:
            return None
        state = env.step(state, best_action).state
        steps += 1
        if state.terminal:
            return None
    return None


def complement_components(state):
    """Number of 4-connected components among cells not covered by the body."""
    n = state.n
    seen = bytearray(state.occupied)
    count = 0
    for start in range(n * n):
        if seen[start]:
            continue
        count += 1
        seen[start] = 1
        stack = [start]
        while stack:
            cell = stack.pop()
            for action in env.ACTIONS:
                t = _shift(n, cell, action)
                if t >= 0 and not seen[t]:
                    seen[t] = 1
                    stack.append(t)
    return count


def turn_fraction(moves):
    """Fraction of consecutive move pairs whose directions differ."""
    seq = list(moves)
    if len(seq) < 2:
        raise ContractViolation("turn_fraction needs at least two moves")
    changes = sum(a != b for a, b in zip(seq, seq[1:]))
    return changes / (len(seq) - 1)


def perimeter_sample(state):
    return float(_on_perimeter(state))


def reach_tail_sample(state):
    return float(reachability(state, "tail"))


def reach_apple_sample(state):
    return float(reachability(state, "apple"))


def dynamic_distance_sample(state):
    d = dynamic_distance(state)
    return None if d is None else float(d)


def components_sample(state):
    return float(complement_components(state))


def turn_sample(state):
    return float(state.dirs[0] != state.dirs[1])


METRIC_SAMPLERS = {
    "perimeter": perimeter_sample,
    "reach_tail": reach_tail_sample,
    "reach_apple": reach_apple_sample,
    "dynamic_distance": dynamic_distance_sample,
    "components": components_sample,
    "turn": turn_sample,
}


@dataclass(frozen=True)
class SeriesPoint:
    """One bucket: mean and spread of the metric over its in-window states."""

    game_index: int
    mean: float
    std: float
    count: int


@dataclass
class MetricSeries:
    metric: str
    window: tuple
    bucket: int
    points: list


def windowed_series(trajectories, metric, window=(40, 60), bucket=50):
    """Aggregate a per-state metric over buckets of consecutive games.

    Only states whose body length falls inside `window` contribute. Each
    completed bucket of `bucket` games yields one point (mean, population
    std, sample count); buckets with no in-window samples are still
    emitted, with count 0. A trailing partial bucket is emitted when the
    game count is not a multiple of the bucket size.

    `metric` is a sampler name from METRIC_SAMPLERS or a callable
    state -> float (None skips the state).
    """
    if isinstance(metric, str):
        name, sampler = metric, METRIC_SAMPLERS[metric]
    else:
        name, sampler = getattr(metric, "__name__", "custom"), metric
    lo, hi = window
    points = []
    samples = []
    games_in_bucket = 0
    games_seen = 0

    def flush():
        if samples:
            mean = sum(samples) / len(samples)
            var = sum((x - mean) ** 2 for x in samples) / len(samples)
            points.append(SeriesPoint(games_seen, mean, math.sqrt(var), len(samples)))
        else:
            points.append(SeriesPoint(games_seen, math.nan, math.nan, 0))

    for trajectory in trajectories:
        for state in trajectory:
            if lo <= len(state.cells) <= hi:
                value = sampler(state)
                if value is not None:
                    samples.append(value)
        games_in_bucket += 1
        games_seen += 1
        if games_in_bucket == bucket:
            flush()
            samples = []
            games_in_bucket = 0
    if games_in_bucket:
        flush()
    return MetricSeries(metric=name, window=(lo, hi), bucket=bucket, points=points)
