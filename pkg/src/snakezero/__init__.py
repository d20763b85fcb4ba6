"""Snake as a discounted MDP: environment, search, training, and evaluation."""

__version__ = "0.1.0"

from .analysis import (
    adversarial_win_time,
    ham_win_prob_clt,
    ham_win_stats,
    ham_worst_case,
    optimal_lower_bound,
    travel_distance_lower_bound,
)
from .checkpoint import (
    TrainingState,
    load_checkpoint,
    load_params,
    save_checkpoint,
    save_params,
)
from .config import RunConfig, build_config, load_config
from .env import (
    ACTIONS,
    GameState,
    Status,
    advance,
    encode_features,
    legal_actions,
    new_game,
    step,
    validate_state,
)
from .errors import (
    CheckpointIntegrityError,
    CheckpointVersionError,
    ContractViolation,
    InvalidChanceOutcome,
    InvalidConfiguration,
    NoCycleError,
    NumericError,
    SnakezeroError,
)
from .evaluate import EvalReport, GameResult, build_agent, evaluate
from .net import backward, forward, gradient_check, init_params, make_evaluator
from .search import (
    SearchConfig,
    SearchResult,
    choose_move,
    run_search,
    uniform_evaluator,
    visits_to_policy,
)
from .selfplay import GameRecord, ReplayBuffer, compute_z_targets, replay_record, training_loop

__all__ = [
    "ACTIONS",
    "CheckpointIntegrityError",
    "CheckpointVersionError",
    "ContractViolation",
    "EvalReport",
    "GameRecord",
    "GameResult",
    "GameState",
    "InvalidChanceOutcome",
    "InvalidConfiguration",
    "NoCycleError",
    "NumericError",
    "ReplayBuffer",
    "RunConfig",
    "SearchConfig",
    "SearchResult",
    "SnakezeroError",
    "Status",
    "TrainingState",
    "advance",
    "adversarial_win_time",
    "backward",
    "build_agent",
    "build_config",
    "choose_move",
    "compute_z_targets",
    "encode_features",
    "evaluate",
    "forward",
    "gradient_check",
    "ham_win_prob_clt",
    "ham_win_stats",
    "ham_worst_case",
    "init_params",
    "legal_actions",
    "load_checkpoint",
    "load_config",
    "load_params",
    "make_evaluator",
    "new_game",
    "optimal_lower_bound",
    "replay_record",
    "run_search",
    "save_checkpoint",
    "save_params",
    "step",
    "training_loop",
    "travel_distance_lower_bound",
    "uniform_evaluator",
    "validate_state",
    "visits_to_policy",
    "__version__",
]
