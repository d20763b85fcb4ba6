"""Command-line surface: train, eval, analyze, metrics, replay, selfcheck.

Exit codes: 0 on success, 1 on usage errors (bad flags, bad config
values), 2 on runtime errors (missing files, corrupt data, failed
checks). Every subcommand accepts --config FILE plus individual flags;
flags override file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import analysis, config as config_mod, env, net, search
from .errors import InvalidConfiguration, SnakezeroError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

METRICS_TABLE_HEADER = "metric,game_index,mean,std,count"


def _time_limit(text):
    """Flag parser for --time-limit: a positive int, or 'none' to disable."""
    if text.strip().lower() in ("none", "off"):
        return "none"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'none', got {text!r}")


def _add_common_flags(sub):
    sub.add_argument("--config", metavar="FILE", help="key=value config file")
    sub.add_argument("--seed", type=int, help="base rng seed")
    sub.add_argument("--board", type=int, metavar="N", help="board side length")
    sub.add_argument("--games", type=int, metavar="N", help="number of games")
    sub.add_argument(
        "--time-limit",
        type=_time_limit,
        metavar="N",
        help="episode step limit, or 'none' for unlimited",
    )
    sub.add_argument("--budget", type=int, metavar="N", help="search simulations per move")
    sub.add_argument("--checkpoint", metavar="PATH", help="network checkpoint to load")
    sub.add_argument("--out", metavar="PATH", help="output file or directory")
    sub.add_argument(
        "--agent",
        choices=config_mod.AGENTS,
        help="strategy to run",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snakezero",
        description="Train, evaluate, and analyze snake-playing agents.",
    )
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    train = subs.add_parser("train", help="run the self-play training loop")
    _add_common_flags(train)

    ev = subs.add_parser("eval", help="play seeded games and report the comparison table")
    _add_common_flags(ev)

    an = subs.add_parser("analyze", help="print the closed-form cycle-strategy results")
    _add_common_flags(an)

    metrics = subs.add_parser("metrics", help="windowed behavioral series from a game log")
    metrics.add_argument("records", metavar="RECORDS", help="records.jsonl from a training run")
    metrics.add_argument(
        "--metric",
        action="append",
        choices=sorted(analysis.METRIC_SAMPLERS),
        help="sampler to aggregate (repeatable; default: all)",
    )
    metrics.add_argument(
        "--window",
        default="40,60",
        metavar="LO,HI",
        help="body-length window of contributing states (default 40,60)",
    )
    metrics.add_argument(
        "--bucket", type=int, default=50, metavar="N", help="games per series point"
    )
    _add_common_flags(metrics)

    replay = subs.add_parser("replay", help="re-simulate a game log and verify every step")
    replay.add_argument("records", metavar="RECORDS", help="records.jsonl to verify")
    _add_common_flags(replay)

    selfcheck = subs.add_parser(
        "selfcheck", help="gradient check plus search oracles; exit 0 iff all pass"
    )
    _add_common_flags(selfcheck)

    return parser


def _config_from_args(args, games_field="games"):
    """Build a RunConfig from file values plus flag overrides.

    `games_field` names the config field --games feeds: the eval game
    count normally, the self-play game count under `train`.
    """
    file_values = config_mod.load_config(args.config) if args.config else {}
    overrides = {}
    for key in ("seed", "board", "budget", "checkpoint", "out", "agent"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "games", None) is not None:
        overrides[games_field] = args.games
    limit = getattr(args, "time_limit", None)
    if limit is not None and limit != "none":
        overrides["time_limit"] = limit
    cfg = config_mod.build_config(file_values, overrides)
    if limit == "none":
        # An explicit 'none' must beat any finite value from the file.
        cfg = dataclasses.replace(cfg, time_limit=None).validate()
    return cfg


def _write_or_print(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_train(args):
    cfg = _config_from_args(args, games_field="train_games")
    if cfg.out is None:
        raise InvalidConfiguration("train needs --out DIR for checkpoints and logs")
    from .selfplay import training_loop

    def progress(game_index, record, mean_loss):
        win = " (win)" if record.status is env.Status.WON else ""
        print(
            f"game {game_index}: score {record.score}, steps {record.steps}, "
            f"loss {mean_loss:.4f}{win}"
        )

    final = training_loop(cfg, cfg.out, resume=cfg.checkpoint, progress=progress)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config_from_args(args)
    from .evaluate import emit_csv, emit_table, evaluate

    report = evaluate(cfg.agent, cfg)
    print(emit_table([report]))
    if cfg.out is not None:
        _write_or_print(emit_csv([report]), cfg.out)
    return EXIT_OK


def cmd_analyze(args):
    cfg = _config_from_args(args)
    n = cfg.board
    if cfg.time_limit is None:
        raise InvalidConfiguration("analyze needs a finite --time-limit")
    mean, variance = analysis.ham_win_stats(n)
    values = {
        "board": n,
        "time_limit": cfg.time_limit,
        "clt_win_probability": analysis.ham_win_prob_clt(n, cfg.time_limit),
        "worst_case": analysis.ham_worst_case(n),
        "optimal_lower_bound": analysis.optimal_lower_bound(n),
        "ham_mean_win_time": mean,
        "ham_win_time_variance": variance,
    }
    if n >= 4 and n % 2 == 0:
        values["travel_bound"] = analysis.travel_distance_lower_bound(n)
    for key, value in values.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    if cfg.out is not None:
        _write_or_print(json.dumps(values, indent=2) + "\n", cfg.out)
    return EXIT_OK


def _load_records(path):
    from .selfplay import record_from_json

    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise SnakezeroError(f"{path}:{lineno}: malformed record ({exc})")
    return records


def _fmt_cell(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def cmd_metrics(args):
    cfg = _config_from_args(args)
    try:
        lo, hi = (int(part) for part in args.window.split(","))
    except ValueError:
        raise InvalidConfiguration(f"--window expects LO,HI, got {args.window!r}")
    if args.bucket <= 0:
        raise InvalidConfiguration(f"--bucket must be positive, got {args.bucket}")
    records = _load_records(args.records)
    trajectories = [[point.state for point in record.points] for record in records]
    names = args.metric or sorted(analysis.METRIC_SAMPLERS)
    lines = [METRICS_TABLE_HEADER]
    for name in names:
        series = analysis.windowed_series(trajectories, name, (lo, hi), args.bucket)
        for point in series.points:
            lines.append(
                f"{name},{point.game_index},{_fmt_cell(point.mean)},"
                f"{_fmt_cell(point.std)},{point.count}"
            )
    _write_or_print("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK


def cmd_replay(args):
    from .selfplay import replay_record

    records = _load_records(args.records)
    total_steps = 0
    for i, record in enumerate(records):
        try:
            total_steps += replay_record(record)
        except SnakezeroError as exc:
            raise SnakezeroError(f"{args.records}: record {i}: {exc}")
    print(f"verified {len(records)} games, {total_steps} steps, no illegal transitions")
    return EXIT_OK


def _selfcheck_gradients(rng):
    """Gradient check on a small board: analytic vs central differences.

    Uses continuous inputs and perturbed biases so no ReLU pre-activation
    sits at its kink, where central differences are unreliable.
    """
    params = net.init_params(seed=17, n=6)
    for name, tensor in params.tensors.items():
        if name.endswith("_b"):
            tensor[...] = rng.normal(scale=0.05, size=tensor.shape).astype(tensor.dtype)
    features = rng.normal(size=(6, env.FEATURE_PLANES, 6, 6))
    pis = rng.dirichlet(np.ones(4), size=6)
    zs = rng.normal(size=6)
    err = net.gradient_check(params, features, pis, zs, samples=240, rng=rng)
    return err, err < 1e-4


def _search_oracles():
    checks = []

    def make_state(n, cells, dirs, apple):
        occ = bytearray(n * n)
        for cell in cells:
            occ[cell] = 1
        return env.GameState(
            n=n,
            cells=tuple(cells),
            dirs=tuple(dirs),
            apple=apple,
            time_index=0,
            status=env.Status.ONGOING,
            occupied=bytes(occ),
        )

    # Winning eat: head at 7, apple at 8 completes the 3x3 board. The
    # +11 reward one step out backs up to root Q exactly 11.
    win = make_state(
        3,
        cells=(7, 6, 3, 4, 5, 2, 1, 0),
        dirs=(env.RIGHT, env.DOWN, env.LEFT, env.LEFT, env.DOWN, env.RIGHT, env.RIGHT, env.RIGHT),
        apple=8,
    )
    def edge_for(result, action):
        return next(edge for edge in result.root.edges if edge.action == action)

    cfg = search.SearchConfig(budget=25, time_limit=200)
    result = search.run_search(win, cfg, search.uniform_evaluator)
    edge = edge_for(result, env.RIGHT)
    q = edge.value_sum / edge.visits
    checks.append(("winning_eat_q", q, abs(q - 11.0) <= 1e-9))

    # Eat into a dead end: the apple sits in a corner pocket, eating
    # there leaves no legal move, so that edge's Q is exactly 1 - 10.
    trap = make_state(
        3,
        cells=(5, 4, 7, 6, 3, 0),
        dirs=(env.RIGHT, env.UP, env.RIGHT, env.DOWN, env.DOWN, env.DOWN),
        apple=8,
    )
    result = search.run_search(trap, cfg, search.uniform_evaluator)
    edge = edge_for(result, env.DOWN)
    q = edge.value_sum / edge.visits
    checks.append(("trap_eat_q", q, abs(q - (-9.0)) <= 1e-9))

    # Visit conservation: the budget is spent entirely on root edges.
    opening = env.new_game(6, np.random.default_rng(0))
    result = search.run_search(opening, search.SearchConfig(budget=160), search.uniform_evaluator)
    total = sum(edge.visits for edge in result.root.edges)
    checks.append(("visit_conservation", total, total == 160))
    return checks


def cmd_selfcheck(args):
    _config_from_args(args)  # validates config/flags even though values are fixed
    rng = np.random.default_rng(2024)
    failures = 0

    err, ok = _selfcheck_gradients(rng)
    print(f"gradient_check: max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
    failures += not ok

    for name, value, ok in _search_oracles():
        print(f"search_oracle[{name}]: {value} {'ok' if ok else 'FAIL'}")
        failures += not ok
    if failures:
        print(f"selfcheck: {failures} check(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    print("selfcheck: all checks passed")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "metrics": cmd_metrics,
    "replay": cmd_replay,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage problems.
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except InvalidConfiguration as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SnakezeroError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
