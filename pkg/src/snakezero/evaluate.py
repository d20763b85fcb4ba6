"""Evaluation harness: seeded game batches per strategy, comparison tables.

Each game gets its own rng seeded consecutively from the base seed, so
any table entry reproduces exactly. Reflex strategies (random, cycle)
act at every primitive step; search strategies act at decision points
with forced spans auto-advanced. Score is the final body length; a win
is a Won status within the time limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import env, net, search
from .baselines import build_hamiltonian_cycle, hamiltonian_agent, random_agent
from .config import RunConfig
from .errors import ContractViolation, InvalidConfiguration

DISPLAY_NAMES = {
    "random": "Random policy",
    "hamiltonian": "Hamiltonian cycle strategy",
    "naive": "Naive tree search",
    "alphazero": "AlphaZero-style agent",
}

TABLE_HEADER = "strategy,avg_score,wins,games"


@dataclass(frozen=True)
class GameResult:
    """One evaluation game: its seed and final outcome."""

    seed: int
    score: int
    win: bool
    steps: int


@dataclass(frozen=True)
class EvalReport:
    """Aggregate of an agent's evaluation batch."""

    agent: str
    games: int
    results: tuple
    avg_score: float
    wins: int
    score_band: float  # two standard errors of the mean score

    @classmethod
    def from_results(cls, agent, results):
        results = tuple(results)
        games = len(results)
        scores = [r.score for r in results]
        avg = float(np.mean(scores)) if games else math.nan
        band = (
            2.0 * float(np.std(scores, ddof=1)) / math.sqrt(games)
            if games > 1
            else math.nan
        )
        return cls(
            agent=agent,
            games=games,
            results=results,
            avg_score=avg,
            wins=sum(r.win for r in results),
            score_band=band,
        )


def _play_reflex(policy, n, rng, time_limit):
    """Drive a per-primitive-step policy to the end of one game."""
    state = env.new_game(n, rng)
    while not state.terminal and (time_limit is None or state.time_index < time_limit):
        state = env.step(state, policy(state), rng).state
    return state


def _play_searching(policy, n, rng, time_limit):
    """Drive a decision-point policy, auto-advancing forced spans."""
    state = env.new_game(n, rng)
    while not state.terminal:
        adv = env.advance(state, policy(state), rng, time_limit)
        state = adv.state
    return state


def build_agent(name, cfg: RunConfig):
    """Construct (per-state policy, stepping mode) for an agent name.

    Modes: "reflex" policies act every primitive step, "search" policies
    act at decision points only.
    """
    if name == "random":
        def policy(state, rng):
            return random_agent(state, rng)

        return policy, "reflex"
    if name == "hamiltonian":
        cycle = build_hamiltonian_cycle(cfg.board)

        def policy(state, rng):
            return hamiltonian_agent(state, cycle)

        return policy, "reflex"
    if name == "naive":
        search_cfg = search.SearchConfig(
            c_puct=cfg.c_puct,
            tau=cfg.tau,
            budget=cfg.budget,
            gamma=cfg.gamma,
            time_limit=cfg.time_limit,
        )

        def policy(state, rng):
            from .baselines import naive_search_agent

            return naive_search_agent(state, config=search_cfg)

        return policy, "search"
    if name == "alphazero":
        if cfg.checkpoint is None:
            raise InvalidConfiguration("the alphazero agent needs --checkpoint")
        from . import checkpoint as ckpt

        params = ckpt.load_params(cfg.checkpoint)
        if params.n != cfg.board:
            raise InvalidConfiguration(
                f"checkpoint is for a {params.n}x{params.n} board, config says {cfg.board}"
            )
        evaluator = net.make_evaluator(params)
        if cfg.budget == 0:
            # Raw policy head: argmax over legal actions, no search.
            def policy(state, rng):
                probs, _ = evaluator(state)
                legal = env.legal_actions(state)
                return max(legal, key=lambda action: (probs[action], -action))

            return policy, "search"
        search_cfg = search.SearchConfig(
            c_puct=cfg.c_puct,
            tau=cfg.tau,
            budget=cfg.budget,
            gamma=cfg.gamma,
            time_limit=cfg.time_limit,
        )

        def policy(state, rng):
            result = search.run_search(state, search_cfg, evaluator)
            return search.choose_move(result.visits, mode="argmax")

        return policy, "search"
    raise InvalidConfiguration(f"unknown agent {name!r}")


def evaluate(agent, cfg: RunConfig) -> EvalReport:
    """Play cfg games with consecutive seeds; aggregate into an EvalReport."""
    policy, mode = build_agent(agent, cfg)
    games = cfg.resolved_games()
    results = []
    for i in range(games):
        seed = cfg.seed + i
        rng = np.random.default_rng(seed)

        def bound_policy(state):
            return policy(state, rng)

        if mode == "reflex":
            final = _play_reflex(bound_policy, cfg.board, rng, cfg.time_limit)
        else:
            final = _play_searching(bound_policy, cfg.board, rng, cfg.time_limit)
        results.append(
            GameResult(
                seed=seed,
                score=len(final.cells),
                win=final.status is env.Status.WON,
                steps=final.time_index,
            )
        )
    return EvalReport.from_results(agent, results)


def _fmt(value, decimals=3):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "—"
    if isinstance(value, float):
        return f"{value:.{decimals}f}"
    return str(value)


def emit_table(reports):
    """Human-readable comparison table: strategy, average score, wins/games."""
    if not reports:
        raise ContractViolation("emit_table needs at least one report")
    rows = [("Strategy", "Average score", "Win rate")]
    for report in reports:
        wins = f"{report.wins}/{report.games}" if report.games else "—"
        rows.append(
            (
                DISPLAY_NAMES.get(report.agent, report.agent),
                _fmt(report.avg_score),
                wins,
            )
        )
    widths = [max(len(row[col]) for row in rows) for col in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[col] for col in range(3)))
    return "\n".join(lines)


def emit_csv(reports):
    """Machine-readable table; parse_csv restores the numbers exactly."""
    lines = [TABLE_HEADER]
    for report in reports:
        avg = "" if math.isnan(report.avg_score) else repr(report.avg_score)
        lines.append(f"{report.agent},{avg},{report.wins},{report.games}")
    return "\n".join(lines) + "\n"


def parse_csv(text):
    """Parse emit_csv output into (agent, avg_score, wins, games) tuples."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != TABLE_HEADER:
        raise ContractViolation("not a comparison table")
    out = []
    for line in lines[1:]:
        agent, avg, wins, games = line.split(",")
        out.append((agent, float(avg) if avg else math.nan, int(wins), int(games)))
    return out
