"""Run configuration: one flat set of key/value fields shared by every command.

Values come from three layers, later ones winning: built-in defaults,
a config file of `key = value` lines, and command-line flags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidConfiguration

AGENTS = ("alphazero", "random", "hamiltonian", "naive")


@dataclass(frozen=True)
class RunConfig:
    """Every knob a run can turn, defaulting to the reference values."""

    board: int = 10
    time_limit: int | None = 1200
    games: int | None = None  # per-agent default: see resolved_games
    seed: int = 0
    agent: str = "alphazero"
    budget: int = 200
    checkpoint: str | None = None
    out: str | None = None
    gamma: float = 0.98
    tau: float = 0.5
    c_puct: float = 0.5
    lr: float = 0.001
    momentum: float = 0.7
    c_l2: float = 1e-4
    train_games: int = 6000
    checkpoint_every: int = 100
    buffer_games: int = 2000
    batches: int = 30
    batch_size: int = 100
    # Root exploration noise for self-play only; evaluation always runs
    # noise-free. Off unless both are set.
    dirichlet_alpha: float | None = None
    dirichlet_frac: float | None = None

    def resolved_games(self) -> int:
        """Game count for evaluation: explicit value, else the per-agent default.

        The naive tree search evaluates over 100 games, the other
        strategies over 1,000.
        """
        if self.games is not None:
            return self.games
        return 100 if self.agent == "naive" else 1000

    def validate(self) -> "RunConfig":
        if self.board < 3:
            raise InvalidConfiguration(f"board size must be at least 3, got {self.board}")
        if self.agent not in AGENTS:
            raise InvalidConfiguration(f"unknown agent {self.agent!r}, expected one of {AGENTS}")
        if self.time_limit is not None and self.time_limit < 0:
            raise InvalidConfiguration(f"time limit must be non-negative, got {self.time_limit}")
        if self.games is not None and self.games < 0:
            raise InvalidConfiguration(f"games must be non-negative, got {self.games}")
        if self.budget < 0:
            raise InvalidConfiguration(f"budget must be non-negative, got {self.budget}")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfiguration(f"gamma must be in (0, 1], got {self.gamma}")
        if self.tau <= 0:
            raise InvalidConfiguration(f"tau must be positive, got {self.tau}")
        for field in ("train_games", "checkpoint_every", "buffer_games", "batches", "batch_size"):
            if getattr(self, field) < 1:
                raise InvalidConfiguration(f"{field} must be positive, got {getattr(self, field)}")
        if (self.dirichlet_alpha is None) != (self.dirichlet_frac is None):
            raise InvalidConfiguration(
                "dirichlet_alpha and dirichlet_frac must be set together or not at all"
            )
        if self.dirichlet_alpha is not None and self.dirichlet_alpha <= 0:
            raise InvalidConfiguration(
                f"dirichlet_alpha must be positive, got {self.dirichlet_alpha}"
            )
        if self.dirichlet_frac is not None and not 0.0 < self.dirichlet_frac <= 1.0:
            raise InvalidConfiguration(
                f"dirichlet_frac must be in (0, 1], got {self.dirichlet_frac}"
            )
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_NONE_WORDS = ("none", "null", "")
_OPTIONAL_INT = ("time_limit", "games")
_OPTIONAL_FLOAT = ("dirichlet_alpha", "dirichlet_frac")
_OPTIONAL_STR = ("checkpoint", "out")


def _coerce(key: str, raw: str):
    if key in _OPTIONAL_STR:
        return None if raw.lower() in _NONE_WORDS else raw
    if key in (*_OPTIONAL_INT, *_OPTIONAL_FLOAT) and raw.lower() in _NONE_WORDS:
        return None
    kind = _FIELDS[key].type
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise InvalidConfiguration(f"config key {key!r} expects a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; # starts a comment, blank lines are skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidConfiguration(f"config line {lineno} is not key = value: {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise InvalidConfiguration(f"unknown config key {key!r} on line {lineno}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path) -> dict:
    """Read a config file into a field/value mapping."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Layer defaults, file values, and overrides into a validated RunConfig.

    Override entries that are None mean "not given" and are skipped.
    """
    merged = dict(file_values or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise InvalidConfiguration(f"unknown config key {key!r}")
        merged[key] = value
    return RunConfig(**merged).validate()
