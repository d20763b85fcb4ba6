"""Shared test helpers: hand-built states and random playout drivers."""

import numpy as np

from snakezero import env


def make_state(n, cells, dirs, apple, time_index=0, status=env.Status.ONGOING):
    """Build a GameState from explicit fields and check its consistency."""
    occ = bytearray(n * n)
    for cell in cells:
        occ[cell] = 1
    state = env.GameState(
        n=n,
        cells=tuple(cells),
        dirs=tuple(dirs),
        apple=apple,
        time_index=time_index,
        status=status,
        occupied=bytes(occ),
    )
    env.validate_state(state)
    return state


def random_playout(seed, n=6, max_steps=400, collect=True):
    """Play uniformly random legal moves; return the visited states.

    The returned list starts at the initial state and includes the final
    (possibly terminal) state.
    """
    rng = np.random.default_rng(seed)
    state = env.new_game(n, rng)
    states = [state] if collect else []
    for _ in range(max_steps):
        if state.terminal:
            break
        acts = env.legal_actions(state)
        action = int(acts[rng.integers(len(acts))])
        state = env.step(state, action, rng).state
        if collect:
            states.append(state)
    return states


def expectimax_action_value(state, action, gamma, time_limit, memo):
    """Discounted expectimax of one action by exhaustive recursion.

    Walks raw primitive steps (no forced-span compression), averaging
    uniformly over apple respawn outcomes; truncation at time_limit and
    terminal states are worth zero onward.
    """
    if env.would_eat(state, action):
        outcomes = env.enumerate_chance_outcomes(state, action)
        if not outcomes:  # winning eat
            return env.step(state, action, None).reward
        values = [
            out.reward + gamma * expectimax_value(out.state, gamma, time_limit, memo)
            for _, out in outcomes
        ]
        return sum(values) / len(values)
    out = env.step(state, action)
    return out.reward + gamma * expectimax_value(out.state, gamma, time_limit, memo)


def expectimax_value(state, gamma, time_limit, memo):
    if state.terminal or state.time_index >= time_limit:
        return 0.0
    cached = memo.get(state)
    if cached is not None:
        return cached
    value = max(
        expectimax_action_value(state, a, gamma, time_limit, memo)
        for a in env.legal_actions(state)
    )
    memo[state] = value
    return value
