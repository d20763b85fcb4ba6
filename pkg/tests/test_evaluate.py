"""Evaluation harness tests: seeding, aggregation, table formatting."""

import math

import numpy as np
import pytest

from snakezero import checkpoint, env, net
from snakezero.config import RunConfig
from snakezero.errors import ContractViolation, InvalidConfiguration
from snakezero.evaluate import (
    EvalReport,
    GameResult,
    emit_csv,
    emit_table,
    evaluate,
    parse_csv,
)


def small_cfg(**kw):
    base = dict(board=6, games=5, seed=11, time_limit=200)
    base.update(kw)
    return RunConfig(**base).validate()


class TestAggregation:
    def test_report_recomputes_from_rows(self):
        # [DERIVED] avg and win count recompute exactly from per-game rows
        report = evaluate("random", small_cfg(games=20))
        assert report.games == 20
        assert len(report.results) == 20
        assert report.avg_score == float(np.mean([r.score for r in report.results]))
        assert report.wins == sum(r.win for r in report.results)

    def test_seeds_are_consecutive(self):
        # [DERIVED] game i runs with seed base+i, so any row reproduces alone
        report = evaluate("random", small_cfg(games=6, seed=40))
        assert [r.seed for r in report.results] == list(range(40, 46))
        solo = evaluate("random", small_cfg(games=1, seed=43))
        assert solo.results[0] == report.results[3]

    def test_zero_games_is_empty_not_error(self):
        # [TRIVIAL] vacuous run
        report = evaluate("random", small_cfg(games=0))
        assert report.games == 0
        assert report.results == ()
        assert report.wins == 0
        assert math.isnan(report.avg_score)

    def test_deterministic_across_runs(self):
        # [TRIVIAL] identical config+seed => identical report
        a = evaluate("random", small_cfg(games=10))
        b = evaluate("random", small_cfg(games=10))
        assert a == b

    def test_score_band_is_two_standard_errors(self):
        # [TRIVIAL]
        report = evaluate("random", small_cfg(games=12))
        scores = [r.score for r in report.results]
        expected = 2.0 * float(np.std(scores, ddof=1)) / math.sqrt(12)
        assert report.score_band == pytest.approx(expected, rel=0, abs=0)

    def test_single_game_band_is_nan(self):
        # [TRIVIAL] no spread estimate from one sample
        report = evaluate("random", small_cfg(games=1))
        assert math.isnan(report.score_band)


class TestAgents:
    def test_hamiltonian_unlimited_always_wins(self):
        # [DERIVED] the cycle strategy wins every unlimited game; score n^2
        report = evaluate("hamiltonian", small_cfg(games=4, time_limit=None))
        assert report.wins == 4
        assert all(r.score == 36 and r.win for r in report.results)

    def test_hamiltonian_tight_limit_never_wins(self):
        # [DERIVED] a sub-win-time limit truncates every game
        report = evaluate("hamiltonian", small_cfg(games=4, time_limit=30))
        assert report.wins == 0
        assert all(r.steps == 30 for r in report.results)

    def test_win_requires_won_status(self):
        # [TRIVIAL] random play on 6x6 within 200 steps never fills the board
        report = evaluate("random", small_cfg(games=10))
        assert report.wins == 0
        assert all(not r.win for r in report.results)

    def test_naive_agent_runs_and_is_deterministic(self):
        # [TRIVIAL]
        cfg = small_cfg(games=2, budget=60, agent="naive")
        a = evaluate("naive", cfg)
        b = evaluate("naive", cfg)
        assert a == b
        assert all(r.score >= 2 for r in a.results)

    def test_alphazero_needs_checkpoint(self):
        # [TRIVIAL]
        with pytest.raises(InvalidConfiguration, match="checkpoint"):
            evaluate("alphazero", small_cfg(games=1))

    def test_alphazero_board_mismatch_rejected(self, tmp_path):
        # [TRIVIAL]
        path = tmp_path / "p.json"
        checkpoint.save_params(net.init_params(0, n=8), path)
        with pytest.raises(InvalidConfiguration, match="8x8"):
            evaluate("alphazero", small_cfg(games=1, checkpoint=str(path)))

    def test_alphazero_raw_policy_budget_zero(self, tmp_path):
        # [DERIVED] budget 0 plays the raw policy argmax over legal actions
        path = tmp_path / "p.json"
        params = net.init_params(3, n=6)
        checkpoint.save_params(params, path)
        cfg = small_cfg(games=3, budget=0, checkpoint=str(path))
        report = evaluate("alphazero", cfg)
        assert report.games == 3
        # replay game 0 by hand: argmax of the policy over legal actions
        evaluator = net.make_evaluator(params)
        rng = np.random.default_rng(cfg.seed)
        state = env.new_game(6, rng)
        probs, _ = evaluator(state)
        legal = env.legal_actions(state)
        expected = max(legal, key=lambda a: (probs[a], -a))
        adv = env.advance(state, expected, rng, cfg.time_limit)
        assert adv.state.time_index >= 1  # the chosen move was legal and applied

    def test_alphazero_search_mode(self, tmp_path):
        # [TRIVIAL] budget > 0 searches; report is deterministic
        path = tmp_path / "p.json"
        checkpoint.save_params(net.init_params(3, n=6), path)
        cfg = small_cfg(games=2, budget=15, checkpoint=str(path))
        assert evaluate("alphazero", cfg) == evaluate("alphazero", cfg)

    def test_unknown_agent_rejected(self):
        # [TRIVIAL]
        with pytest.raises(InvalidConfiguration, match="unknown agent"):
            evaluate("minimax", small_cfg())


class TestTable:
    def report(self, agent="random", scores=(6, 7), wins=0):
        results = tuple(
            GameResult(seed=i, score=s, win=i < wins, steps=100)
            for i, s in enumerate(scores)
        )
        return EvalReport.from_results(agent, results)

    def test_paper_style_row(self):
        # [PAPER] row format: strategy, average to 3 decimals, wins/games
        report = EvalReport(
            agent="random",
            games=1000,
            results=(),
            avg_score=6.277,
            wins=0,
            score_band=0.1,
        )
        table = emit_table([report])
        assert "Random policy" in table
        assert "6.277" in table
        assert "0/1000" in table

    def test_empty_fields_render_as_dash(self):
        # [TRIVIAL]
        table = emit_table([EvalReport.from_results("naive", ())])
        row = table.splitlines()[-1]
        assert row.count("—") == 2

    def test_display_names(self):
        # [PAPER] table strategy labels
        table = emit_table(
            [
                self.report("random"),
                self.report("hamiltonian"),
                self.report("naive"),
                self.report("alphazero"),
            ]
        )
        assert "Random policy" in table
        assert "Hamiltonian cycle strategy" in table
        assert "Naive tree search" in table
        assert "AlphaZero-style agent" in table

    def test_emit_table_needs_reports(self):
        # [TRIVIAL]
        with pytest.raises(ContractViolation):
            emit_table([])

    def test_csv_round_trip(self):
        # [TRIVIAL] machine-readable output parses back exactly
        reports = [self.report("random", scores=(5, 8, 9), wins=1), self.report("naive", ())]
        rows = parse_csv(emit_csv(reports))
        assert rows[0] == ("random", reports[0].avg_score, 1, 3)
        assert rows[1][0] == "naive"
        assert math.isnan(rows[1][1])
        assert rows[1][2:] == (0, 0)

    def test_csv_rejects_foreign_text(self):
        # [TRIVIAL]
        with pytest.raises(ContractViolation):
            parse_csv("hello,world\n1,2\n")
