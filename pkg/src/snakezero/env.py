"""Grid environment: single-player snake as a discounted stochastic MDP.

Cells are flat indices ``cell = row * n + col`` on an n-by-n board. The
snake is an ordered tuple of distinct cells, head first. Each primitive
step moves the head one cell; eating the apple grows the body by one and
respawns the apple uniformly on the empty cells, which is the only source
of randomness. States are immutable values: every transition builds a new
state.

States where exactly one action is legal are "forced" and can be skipped
wholesale with :func:`advance`, which reports elapsed time and the rewards
collected along the way so that search and training can discount across
the compressed span.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractViolation, InvalidChanceOutcome, InvalidConfiguration

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, LEFT, RIGHT)
ACTION_NAMES = ("up", "down", "left", "right")
# Row/col deltas, indexed by action.
DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

APPLE_REWARD = 1.0
LOSS_REWARD = -10.0
WIN_REWARD = 10.0

FEATURE_PLANES = 7


class Status(IntEnum):
    ONGOING = 0
    WON = 1
    LOST = 2
    TRUNCATED = 3


class _EnumerateSource:
    """Sentinel apple source: stop at eating moves instead of sampling."""

    def __repr__(self) -> str:
        return "ENUMERATE"


ENUMERATE = _EnumerateSource()


@dataclass(frozen=True, slots=True)
class GameState:
    """Immutable snapshot of a game.

    ``cells`` holds the body as flat indices, head first; ``dirs[i]`` is
    the action that last moved the segment now at ``cells[i]``. ``occupied``
    is a length n*n byte mask kept in sync with ``cells``.
    """

    n: int
    cells: tuple[int, ...]
    dirs: tuple[int, ...]
    apple: int | None
    time_index: int
    status: Status
    occupied: bytes

    @property
    def head(self) -> int:
        return self.cells[0]

    @property
    def tail(self) -> int:
        return self.cells[-1]

    @property
    def score(self) -> int:
        return len(self.cells)

    @property
    def terminal(self) -> bool:
        return self.status is not Status.ONGOING

    def to_payload(self) -> dict:
        """JSON-friendly dict; the occupied mask is derived on load."""
        return {
            "n": self.n,
            "cells": list(self.cells),
            "dirs": list(self.dirs),
            "apple": self.apple,
            "time_index": self.time_index,
            "status": self.status.name,
        }

    @staticmethod
    def from_payload(payload: dict) -> "GameState":
        n = int(payload["n"])
        cells = tuple(int(c) for c in payload["cells"])
        occ = bytearray(n * n)
        for cell in cells:
            occ[cell] = 1
        apple = payload["apple"]
        return GameState(
            n=n,
            cells=cells,
            dirs=tuple(int(d) for d in payload["dirs"]),
            apple=None if apple is None else int(apple),
            time_index=int(payload["time_index"]),
            status=Status[payload["status"]],
            occupied=bytes(occ),
        )


@dataclass(frozen=True, slots=True)
class StepOutcome:
    state: GameState
    reward: float
    ate_apple: bool
    terminal: bool


@dataclass(frozen=True, slots=True)
class AdvanceOutcome:
    """Result of skipping forced single-action states.

    ``events`` lists (offset, reward) pairs with strictly increasing
    offsets measured in primitive steps from the starting state; ``elapsed``
    is the total number of primitive steps taken. ``at_chance`` means the
    chain stopped because the single legal action would eat the apple while
    enumerating, so the caller owns the chance event.
    """

    state: GameState
    events: tuple[tuple[int, float], ...]
    elapsed: int
    terminal: bool
    at_chance: bool


def cell_index(n: int, row: int, col: int) -> int:
    return row * n + col


def cell_rc(n: int, cell: int) -> tuple[int, int]:
    return divmod(cell, n)


def _shift(n: int, cell: int, action: int) -> int:
    """Target cell of a move, or -1 if it leaves the board."""
    row, col = divmod(cell, n)
    dr, dc = DELTAS[action]
    row += dr
    col += dc
    if 0 <= row < n and 0 <= col < n:
        return row * n + col
    return -1


def _any_legal(occupied, n: int, head: int, tail: int) -> bool:
    for action in ACTIONS:
        target = _shift(n, head, action)
        if target >= 0 and (not occupied[target] or target == tail):
            return True
    return False


def new_game(
    n: int,
    rng: np.random.Generator | None = None,
    *,
    apple_cell: int | None = None,
) -> GameState:
    """Canonical start: tail (0,0), head (0,1), both facing Right.

    The first apple is drawn uniformly from the empty cells via ``rng``,
    or placed at ``apple_cell`` when given.
    """
    if n < 3:
        raise InvalidConfiguration(f"board size must be at least 3, got {n}")
    n2 = n * n
    occ = bytearray(n2)
    occ[0] = 1
    occ[1] = 1
    if apple_cell is None:
        if rng is None:
            raise ContractViolation("an rng is required when apple_cell is not given")
        # Empty cells are exactly 2..n2-1, already in (row, col) order.
        apple = 2 + int(rng.integers(n2 - 2))
    else:
        apple = int(apple_cell)
        if not 0 <= apple < n2 or occ[apple]:
            raise InvalidChanceOutcome(f"apple cell {apple} is not an empty cell")
    return GameState(
        n=n,
        cells=(1, 0),
        dirs=(RIGHT, RIGHT),
        apple=apple,
        time_index=0,
        status=Status.ONGOING,
        occupied=bytes(occ),
    )


def legal_actions(state: GameState) -> tuple[int, ...]:
    """Actions that neither leave the board nor hit the body, ascending.

    Moving into the current tail cell is legal on non-eating moves because
    the tail vacates in the same step. The apple is never on the body, so
    the rule reduces to: target in bounds and (empty or equal to the tail).
    """
    if state.terminal:
        raise ContractViolation("legal_actions on a terminal state")
    occ = state.occupied
    tail = state.cells[-1]
    out = []
    for action in ACTIONS:
        target = _shift(state.n, state.head, action)
        if target >= 0 and (not occ[target] or target == tail):
            out.append(action)
    return tuple(out)


def would_eat(state: GameState, action: int) -> bool:
    """True if the action moves the head onto the apple."""
    return state.apple is not None and _shift(state.n, state.head, action) == state.apple


def _respawn_apple(occupied: bytearray, n2: int, source) -> int:
    if isinstance(source, (int, np.integer)):
        cell = int(source)
        if not 0 <= cell < n2 or occupied[cell]:
            raise InvalidChanceOutcome(f"apple cell {cell} is not empty after the move")
        return cell
    if not isinstance(source, np.random.Generator):
        raise ContractViolation("eating move needs an apple source (rng or explicit cell)")
    empties = [cell for cell in range(n2) if not occupied[cell]]
    return empties[int(source.integers(len(empties)))]


def step(state: GameState, action: int, apple_source=None) -> StepOutcome:
    """Apply one primitive action.

    ``apple_source`` supplies the respawned apple after an eating move: an
    rng draws uniformly from the empty cells, an int places it explicitly
    (it must be empty after the move), and None is valid only when no
    respawn happens. Rewards: +1 apple, -10 loss, +10 win; events landing
    on the same step compose into a single reward.
    """
    if state.terminal:
        raise ContractViolation("step on a terminal state")
    n = state.n
    n2 = n * n
    target = _shift(n, state.head, action)
    if target < 0:
        raise ContractViolation(f"action {ACTION_NAMES[action]} leaves the board")
    eating = state.apple is not None and target == state.apple
    if state.occupied[target] and (eating or target != state.cells[-1]):
        raise ContractViolation(f"action {ACTION_NAMES[action]} hits the body")
    occ = bytearray(state.occupied)
    if eating:
        occ[target] = 1
        cells = (target,) + state.cells
        dirs = (action,) + state.dirs
    else:
        occ[state.cells[-1]] = 0
        occ[target] = 1
        cells = (target,) + state.cells[:-1]
        dirs = (action,) + state.dirs[:-1]
    reward = 0.0
    apple = state.apple
    status = Status.ONGOING
    if eating:
        reward += APPLE_REWARD
        if len(cells) == n2:
            status = Status.WON
            apple = None
            reward += WIN_REWARD
        else:
            apple = _respawn_apple(occ, n2, apple_source)
    if status is not Status.WON and not _any_legal(occ, n, cells[0], cells[-1]):
        status = Status.LOST
        reward += LOSS_REWARD
    next_state = GameState(
        n=n,
        cells=cells,
        dirs=dirs,
        apple=apple,
        time_index=state.time_index + 1,
        status=status,
        occupied=bytes(occ),
    )
    return StepOutcome(
        state=next_state,
        reward=reward,
        ate_apple=eating,
        terminal=status is not Status.ONGOING,
    )


def enumerate_chance_outcomes(state: GameState, action: int) -> list[tuple[int, StepOutcome]]:
    """All (apple_cell, outcome) pairs of an eating move, (row, col) ascending.

    Empty when the move fills the board: no respawn happens and
    :func:`step` produces the Won outcome directly.
    """
    if state.terminal:
        raise ContractViolation("enumerate_chance_outcomes on a terminal state")
    if not would_eat(state, action):
        raise ContractViolation("enumerate_chance_outcomes on a non-eating action")
    n2 = state.n * state.n
    if len(state.cells) + 1 == n2:
        return []
    target = _shift(state.n, state.head, action)
    occ = state.occupied
    return [
        (cell, step(state, action, cell))
        for cell in range(n2)
        if not occ[cell] and cell != target
    ]


def advance(state: GameState, action: int, apple_source, time_limit: int | None = None) -> AdvanceOutcome:
    """Apply ``action``, then skip forced states until a decision point.

    The chain stops at a state with two or more legal actions, at a
    terminal state, or at the time limit (truncating). Under ENUMERATE the
    entry action must not eat (the caller owns that chance event, see
    :func:`enumerate_chance_outcomes`) and the chain additionally stops
    just before a forced eating move, flagged ``at_chance``. An explicit
    int apple cell covers only the entry step.
    """
    if apple_source is ENUMERATE and would_eat(state, action):
        raise ContractViolation(
            "eating entry action under ENUMERATE; expand the chance event instead"
        )
    out = step(state, action, apple_source)
    events = [(0, out.reward)] if out.reward else []
    chain_source = None if isinstance(apple_source, (int, np.integer)) else apple_source
    return _run_chain(out.state, chain_source, time_limit, events, 1)


def forced_chain(state: GameState, apple_source=ENUMERATE, time_limit: int | None = None) -> AdvanceOutcome:
    """Follow forced states from ``state`` without an entry action.

    Same stopping rules as :func:`advance`; ``elapsed`` may be zero.
    """
    return _run_chain(state, apple_source, time_limit, [], 0)


def _run_chain(state, source, time_limit, events, elapsed) -> AdvanceOutcome:
    while True:
        if state.terminal:
            return AdvanceOutcome(state, tuple(events), elapsed, True, False)
        if time_limit is not None and state.time_index >= time_limit:
            state = dataclasses.replace(state, status=Status.TRUNCATED)
            return AdvanceOutcome(state, tuple(events), elapsed, True, False)
        acts = legal_actions(state)
        if len(acts) != 1:
            return AdvanceOutcome(state, tuple(events), elapsed, False, False)
        action = acts[0]
        if source is ENUMERATE and would_eat(state, action):
            return AdvanceOutcome(state, tuple(events), elapsed, False, True)
        out = step(state, action, source)
        if out.reward:
            events.append((elapsed, out.reward))
        state = out.state
        elapsed += 1


def encode_features(state: GameState, expected_n: int | None = None) -> np.ndarray:
    """Seven binary planes: per-direction body marks, head, tail, apple.

    Planes 0-3 mark each segment on the plane of the direction it last
    moved (action indexing), plane 4 the head, plane 5 the tail, plane 6
    the apple (all zeros once the board is full).
    """
    if expected_n is not None and state.n != expected_n:
        raise InvalidConfiguration(
            f"state is {state.n}x{state.n}, expected {expected_n}x{expected_n}"
        )
    n = state.n
    planes = np.zeros((FEATURE_PLANES, n * n), dtype=np.float32)
    for cell, direction in zip(state.cells, state.dirs):
        planes[direction, cell] = 1.0
    planes[4, state.cells[0]] = 1.0
    planes[5, state.cells[-1]] = 1.0
    if state.apple is not None:
        planes[6, state.apple] = 1.0
    return planes.reshape(FEATURE_PLANES, n, n)


def validate_state(state: GameState) -> None:
    """Raise ContractViolation if the state breaks a structural invariant."""
    n = state.n
    n2 = n * n
    body_len = len(state.cells)
    if not 2 <= body_len <= n2:
        raise ContractViolation(f"body length {body_len} out of range")
    if len(state.dirs) != body_len:
        raise ContractViolation("dirs length differs from body length")
    if len(set(state.cells)) != body_len:
        raise ContractViolation("body cells are not distinct")
    occ = bytearray(n2)
    for cell in state.cells:
        if not 0 <= cell < n2:
            raise ContractViolation(f"cell {cell} out of bounds")
        occ[cell] = 1
    if bytes(occ) != state.occupied:
        raise ContractViolation("occupied mask out of sync with cells")
    for i in range(body_len - 1):
        if _shift(n, state.cells[i + 1], state.dirs[i]) != state.cells[i]:
            raise ContractViolation(f"segment {i} not adjacent along its direction")
    if state.apple is None:
        if state.status is not Status.WON:
            raise ContractViolation("missing apple on a non-won state")
    elif not 0 <= state.apple < n2 or occ[state.apple]:
        raise ContractViolation("apple out of bounds or on the body")
    if state.time_index < 0:
        raise ContractViolation("negative time index")
    if state.status is Status.WON and body_len != n2:
        raise ContractViolation("won status with a partial body")
    if state.status is Status.ONGOING and not _any_legal(occ, n, state.cells[0], state.cells[-1]):
        raise ContractViolation("ongoing status with no legal action")


def render(state: GameState) -> str:
    """ASCII board: H head, o body, t tail, a apple, . empty."""
    n = state.n
    grid = ["."] * (n * n)
    for cell in state.cells[1:-1]:
        grid[cell] = "o"
    grid[state.cells[-1]] = "t"
    grid[state.cells[0]] = "H"
    if state.apple is not None:
        grid[state.apple] = "a"
    return "\n".join("".join(grid[r * n : (r + 1) * n]) for r in range(n))
