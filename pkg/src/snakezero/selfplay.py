"""Self-play data generation, discounted return targets, and the training loop.

A game is recorded as its decision points only: forced single-action
spans are compressed into (elapsed, events, apples) segments, mirroring
the search tree's link structure. Targets z are the observed discounted
returns to episode end; truncation ends the recursion with no bootstrap,
so the value head regresses on exactly what the rollout earned.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env, net, search
from .config import RunConfig
from .errors import ContractViolation, NumericError

logger = logging.getLogger(__name__)

DEFAULT_TIME_LIMIT = 1200
METRICS_HEADER = "game_index,score,win,steps,mean_loss"


@dataclass(frozen=True)
class DecisionPoint:
    """One searched state: its policy target and the segment that followed.

    elapsed counts primitive steps to the next decision point (or episode
    end); events are that segment's (offset, reward) pairs; apples are the
    respawn cells drawn along it, in order, so the segment replays exactly.
    """

    state: env.GameState
    pi: np.ndarray
    action: int
    elapsed: int
    events: tuple
    apples: tuple


@dataclass(frozen=True)
class GameRecord:
    """A finished self-play game: decision points plus final outcome."""

    seed: int | None
    n: int
    points: tuple
    status: env.Status
    score: int
    steps: int


@dataclass(frozen=True)
class TrainingExample:
    """One (features, pi, z) supervised target."""

    features: np.ndarray
    pi: np.ndarray
    z: float


def _play_segment(state, action, rng, time_limit):
    """Apply action, then forced moves until the game settles or branches.

    Equivalent to env.advance with an rng apple source, additionally
    reporting the respawn cells drawn. Returns (state, elapsed, events,
    apples).
    """
    events = []
    apples = []
    elapsed = 0
    current = action
    while True:
        eating = env.would_eat(state, current)
        out = env.step(state, current, rng if eating else None)
        if out.reward:
            events.append((elapsed, out.reward))
        elapsed += 1
        state = out.state
        if eating and state.apple is not None:
            apples.append(state.apple)
        if state.terminal:
            break
        if time_limit is not None and state.time_index >= time_limit:
            state = dataclasses.replace(state, status=env.Status.TRUNCATED)
            break
        acts = env.legal_actions(state)
        if len(acts) != 1:
            break
        current = acts[0]
    return state, elapsed, tuple(events), tuple(apples)


def play_selfplay_game(params, config=None, rng=None, seed=None, n=None):
    """Play one self-play game with tree-search moves; return its record.

    At each decision point: run_search under `config`, sharpen visits with
    tau, sample the move, then advance through any forced span with rng
    apple placement. Stops at a terminal state or the time limit.
    """
    if config is None:
        config = search.SearchConfig(time_limit=DEFAULT_TIME_LIMIT)
    if rng is None:
        rng = np.random.default_rng(seed)
    board = params.n if n is None else n
    evaluator = net.make_evaluator(params)
    state = env.new_game(board, rng)
    points = []
    while not state.terminal:
        result = search.run_search(state, config, evaluator, rng)
        pi = search.visits_to_policy(result.visits, config.tau)
        action = search.choose_move(pi, mode="sample", rng=rng)
        state_after, elapsed, events, apples = _play_segment(state, action, rng, config.time_limit)
        points.append(
            DecisionPoint(
                state=state, pi=pi, action=action, elapsed=elapsed, events=events, apples=apples
            )
        )
        state = state_after
    return GameRecord(
        seed=seed,
        n=board,
        points=tuple(points),
        status=state.status,
        score=len(state.cells),
        steps=state.time_index,
    )


def compute_z_targets(record, gamma=0.98):
    """Observed discounted return from each decision point to episode end.

    Backward pass: the last point's z is its own segment's discounted
    rewards; earlier points add gamma**elapsed times the next z. A
    truncated episode simply ends the sum (no value bootstrap).
    """
    zs = [0.0] * len(record.points)
    z_next = 0.0
    for i in range(len(record.points) - 1, -1, -1):
        point = record.points[i]
        z = gamma**point.elapsed * z_next
        for offset, reward in point.events:
            z += gamma**offset * reward
        zs[i] = z
        z_next = z
    return zs


def examples_from_record(record, gamma=0.98):
    """Training examples (features, pi, z) for each decision point."""
    zs = compute_z_targets(record, gamma)
    out = []
    for point, z in zip(record.points, zs):
        features = env.encode_features(point.state)
        out.append(TrainingExample(features=features, pi=point.pi, z=float(z)))
    return out


class ReplayBuffer:
    """Examples from the most recent games, capacity counted in games."""

    def __init__(self, capacity_games=2000):
        if capacity_games < 1:
            raise ContractViolation(f"buffer capacity must be positive, got {capacity_games}")
        self.capacity_games = capacity_games
        self._games = collections.deque(maxlen=capacity_games)
        self._flat = None

    def __len__(self):
        return sum(len(game) for game in self._games)

    @property
    def games(self):
        return len(self._games)

    def add_game(self, examples):
        if not examples:
            raise ContractViolation("a game contributes at least one example")
        self._games.append(tuple(examples))
        self._flat = None

    def _flatten(self):
        if self._flat is None:
            self._flat = [example for game in self._games for example in game]
        return self._flat

    def sample_arrays(self, batch_size, rng):
        """One uniform-with-replacement minibatch as stacked arrays."""
        flat = self._flatten()
        if not flat:
            raise ContractViolation("sampling from an empty replay buffer")
        picks = rng.integers(0, len(flat), size=batch_size)
        features = np.stack([flat[i].features for i in picks])
        pis = np.stack([flat[i].pi for i in picks])
        zs = np.array([flat[i].z for i in picks], dtype=np.float64)
        return features, pis, zs

    def games_snapshot(self):
        """The stored games, oldest first, for checkpointing."""
        return tuple(self._games)

    @classmethod
    def from_games(cls, games, capacity_games=2000):
        buffer = cls(capacity_games)
        for game in games:
            buffer.add_game(game)
        return buffer


def train_iteration(params, buffer, rng, batches=30, batch_size=100, lr=net.DEFAULT_LR,
                    momentum=net.DEFAULT_MOMENTUM, c_l2=net.DEFAULT_C_L2):
    """Run the per-game training schedule; return the mean batch loss.

    Each batch is drawn uniformly with replacement from the buffer and
    applies one momentum SGD step. A numeric error rolls the parameters
    and momentum back to the pre-iteration snapshot, then propagates.
    """
    snapshot = params.copy()
    losses = []
    try:
        for _ in range(batches):
            features, pis, zs = buffer.sample_arrays(batch_size, rng)
            grads, loss = net.backward(params, features, pis, zs, c_l2=c_l2)
            net.sgd_update(params, grads, lr=lr, momentum=momentum)
            losses.append(loss)
    except NumericError:
        for name in params.tensors:
            params.tensors[name] = snapshot.tensors[name]
            params.momentum[name] = snapshot.momentum[name]
        raise
    return float(np.mean(losses))


def _format_float(value):
    """Shortest round-trip decimal form, nan spelled plainly."""
    if math.isnan(value):
        return "nan"
    return repr(float(value))


def training_loop(cfg: RunConfig, out_dir, resume=None, progress=None):
    """Alternate self-play and training for cfg.train_games games.

    Writes three things under out_dir: metrics.csv (one row per game),
    records.jsonl (one replayable game record per line), and numbered
    checkpoints every cfg.checkpoint_every games (checkpoint_latest.json
    tracks the newest). `resume` names a checkpoint to continue from;
    the continued trajectory is bit-identical to an uninterrupted run.
    Returns the path of the final checkpoint.
    """
    from . import checkpoint as ckpt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    records_path = out / "records.jsonl"

    if resume is not None:
        state = ckpt.load_checkpoint(resume)
        if state.params.n != cfg.board:
            raise ContractViolation(
                f"checkpoint is for a {state.params.n}x{state.params.n} board, config says {cfg.board}"
            )
        params, rng, buffer, start_game = state.params, state.rng, state.buffer, state.game_count
        if buffer is None:
            raise ContractViolation("checkpoint has no replay buffer; cannot resume training")
    else:
        params = net.init_params(cfg.seed, cfg.board)
        rng = np.random.default_rng(cfg.seed)
        buffer = ReplayBuffer(cfg.buffer_games)
        start_game = 0
    if not metrics_path.exists():
        metrics_path.write_text(METRICS_HEADER + "\n", encoding="utf-8")

    noise = None
    if cfg.dirichlet_alpha is not None:
        noise = (cfg.dirichlet_alpha, cfg.dirichlet_frac)
    search_cfg = search.SearchConfig(
        c_puct=cfg.c_puct,
        tau=cfg.tau,
        budget=cfg.budget,
        gamma=cfg.gamma,
        time_limit=cfg.time_limit,
        dirichlet=noise,
    )
    hyper = {
        "gamma": cfg.gamma,
        "tau": cfg.tau,
        "c_puct": cfg.c_puct,
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "c_l2": cfg.c_l2,
        "budget": cfg.budget,
        "time_limit": cfg.time_limit,
        "dirichlet_alpha": cfg.dirichlet_alpha,
        "dirichlet_frac": cfg.dirichlet_frac,
    }

    def save(game_index):
        state = ckpt.TrainingState(
            params=params, rng=rng, buffer=buffer, game_count=game_index, hyperparameters=hyper
        )
        path = out / f"checkpoint_{game_index:06d}.json"
        ckpt.save_checkpoint(state, path)
        ckpt.save_checkpoint(state, out / "checkpoint_latest.json")
        return path

    last_path = None
    with metrics_path.open("a", encoding="utf-8") as metrics, records_path.open(
        "a", encoding="utf-8"
    ) as records:
        for game_index in range(start_game + 1, cfg.train_games + 1):
            record = play_selfplay_game(params, search_cfg, rng)
            buffer.add_game(examples_from_record(record, cfg.gamma))
            try:
                mean_loss = train_iteration(
                    params,
                    buffer,
                    rng,
                    batches=cfg.batches,
                    batch_size=cfg.batch_size,
                    lr=cfg.lr,
                    momentum=cfg.momentum,
                    c_l2=cfg.c_l2,
                )
            except NumericError:
                logger.warning("numeric error in training at game %d; update skipped", game_index)
                mean_loss = float("nan")
            win = int(record.status is env.Status.WON)
            metrics.write(
                f"{game_index},{record.score},{win},{record.steps},{_format_float(mean_loss)}\n"
            )
            metrics.flush()
            records.write(record_to_json(record) + "\n")
            records.flush()
            if game_index % cfg.checkpoint_every == 0 or game_index == cfg.train_games:
                last_path = save(game_index)
            if progress is not None:
                progress(game_index, record, mean_loss)
    if last_path is None:
        last_path = save(start_game)
    return last_path


# ---------------------------------------------------------------------------
# Game record serialization and replay verification.
# ---------------------------------------------------------------------------


def _state_to_doc(state):
    return {
        "cells": list(state.cells),
        "dirs": list(state.dirs),
        "apple": state.apple,
        "time": state.time_index,
    }


def _state_from_doc(doc, n):
    occ = bytearray(n * n)
    for cell in doc["cells"]:
        occ[cell] = 1
    return env.GameState(
        n=n,
        cells=tuple(doc["cells"]),
        dirs=tuple(doc["dirs"]),
        apple=doc["apple"],
        time_index=doc["time"],
        status=env.Status.ONGOING,
        occupied=bytes(occ),
    )


def record_to_json(record):
    """One-line JSON document for a game record."""
    doc = {
        "seed": record.seed,
        "n": record.n,
        "status": record.status.name,
        "score": record.score,
        "steps": record.steps,
        "points": [
            {
                "state": _state_to_doc(point.state),
                "pi": [float(p) for p in point.pi],
                "action": point.action,
                "elapsed": point.elapsed,
                "events": [[offset, reward] for offset, reward in point.events],
                "apples": list(point.apples),
            }
            for point in record.points
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def record_from_json(line):
    doc = json.loads(line)
    n = doc["n"]
    points = tuple(
        DecisionPoint(
            state=_state_from_doc(p["state"], n),
            pi=np.array(p["pi"], dtype=np.float64),
            action=p["action"],
            elapsed=p["elapsed"],
            events=tuple((offset, reward) for offset, reward in p["events"]),
            apples=tuple(p["apples"]),
        )
        for p in doc["points"]
    )
    return GameRecord(
        seed=doc["seed"],
        n=n,
        points=points,
        status=env.Status[doc["status"]],
        score=doc["score"],
        steps=doc["steps"],
    )


def replay_record(record):
    """Re-simulate a record segment by segment and verify every transition.

    Raises ContractViolation on any illegal or inconsistent step; returns
    the number of primitive steps verified.
    """
    verified = 0
    for i, point in enumerate(record.points):
        env.validate_state(point.state)
        if abs(float(np.sum(point.pi)) - 1.0) > 1e-9 or (point.pi < 0).any():
            raise ContractViolation(f"point {i}: pi is not a distribution")
        legal = env.legal_actions(point.state)
        if len(legal) < 2:
            raise ContractViolation(f"point {i}: decision state has {len(legal)} legal actions")
        for action in env.ACTIONS:
            if point.pi[action] > 0 and action not in legal:
                raise ContractViolation(f"point {i}: pi puts mass on illegal action {action}")
        if point.action not in legal:
            raise ContractViolation(f"point {i}: recorded action {point.action} is illegal")
        state = point.state
        apples = iter(point.apples)
        current = point.action
        events = []
        elapsed = 0
        while True:
            eating = env.would_eat(state, current)
            source = None
            if eating and len(state.cells) + 1 < state.n * state.n:
                source = next(apples, None)
                if source is None:
                    raise ContractViolation(f"point {i}: missing recorded apple respawn")
            out = env.step(state, current, source)
            if out.reward:
                events.append((elapsed, out.reward))
            elapsed += 1
            verified += 1
            state = out.state
            if state.terminal:
                break
            if elapsed >= point.elapsed:
                break
            acts = env.legal_actions(state)
            if len(acts) != 1:
                raise ContractViolation(f"point {i}: segment branched before recorded elapsed")
            current = acts[0]
        if next(apples, None) is not None:
            raise ContractViolation(f"point {i}: extra recorded apple respawns")
        if elapsed != point.elapsed or tuple(events) != tuple(point.events):
            raise ContractViolation(f"point {i}: segment does not match its record")
        if i + 1 < len(record.points):
            nxt = record.points[i + 1].state
            if state.terminal or _state_to_doc(state) != _state_to_doc(nxt):
                raise ContractViolation(f"point {i}: segment does not reach the next point")
        else:
            final_status = state.status
            if not state.terminal:
                if state.time_index >= record.steps and record.status is env.Status.TRUNCATED:
                    final_status = env.Status.TRUNCATED
                else:
                    raise ContractViolation("record ends on a non-terminal state")
            if final_status is not record.status:
                raise ContractViolation(
                    f"final status {final_status.name} != recorded {record.status.name}"
                )
            if len(state.cells) != record.score or state.time_index != record.steps:
                raise ContractViolation("final score/steps do not match the record")
    return verified
