"""Numba fast paths for the heavy simulation workloads.

Two compiled kernels, each a drop-in for a pure-Python path:

- a Hamiltonian-cycle game simulator for large win-time samples, matching
  env.new_game/env.step driven by the cycle agent draw for draw,
- the uniform-prior tree search, matching run_search with
  uniform_evaluator: same visit counts, same value sums.

Both mirror the reference implementations operation for operation,
including float evaluation order (backups index a table of gamma powers
computed by the host interpreter), so equivalence tests assert exact
equality rather than tolerances. The search kernel requires a finite
time limit: forced chains are only guaranteed to terminate under one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import env, search
from .errors import ContractViolation, InvalidConfiguration

# Mirror env.Status values (asserted below) so kernels avoid enum objects.
ONGOING = 0
WON = 1
LOST = 2
TRUNCATED = 3

assert (int(env.Status.ONGOING), int(env.Status.WON), int(env.Status.LOST), int(env.Status.TRUNCATED)) == (
    ONGOING,
    WON,
    LOST,
    TRUNCATED,
)

# Child kinds on materialized links.
_DEC = 1
_CHANCE = 2
_TERM = 3


@njit(cache=True)
def _shift_k(n, cell, action):
    """Target cell of a move, or -1 if it leaves the board."""
    row = cell // n
    col = cell % n
    if action == 0:
        row -= 1
    elif action == 1:
        row += 1
    elif action == 2:
        col -= 1
    else:
        col += 1
    if 0 <= row < n and 0 <= col < n:
        return row * n + col
    return -1


@njit(cache=True)
def _any_legal_k(n, occ, head, tail):
    for action in range(4):
        target = _shift_k(n, head, action)
        if target >= 0 and (occ[target] == 0 or target == tail):
            return True
    return False


@njit(cache=True)
def _legal_k(n, occ, head, tail, acts):
    """Fill acts with the legal actions ascending; return the count."""
    count = 0
    for action in range(4):
        target = _shift_k(n, head, action)
        if target >= 0 and (occ[target] == 0 or target == tail):
            acts[count] = action
            count += 1
    return count


# ---------------------------------------------------------------------------
# Hamiltonian-cycle game simulator.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _ham_games(order, index, n, games, time_limit, rng, out_steps, out_scores, out_status):
    """Play full games along the cycle, one rng streamed across all of them.

    Per game the draws are exactly those of the reference loop: one initial
    apple draw, then one respawn draw per non-winning apple (the index of
    the new apple among the empty cells in ascending order).
    """
    n2 = n * n
    occ = np.zeros(n2, np.uint8)
    for g in range(games):
        occ[:] = 0
        occ[0] = 1
        occ[1] = 1
        length = 2
        head_pos = index[1]
        apple = 2 + int(rng.integers(0, n2 - 2))
        steps = 0
        status = ONGOING
        while True:
            if time_limit >= 0 and steps >= time_limit:
                status = TRUNCATED
                break
            nxt = head_pos + 1
            if nxt == n2:
                nxt = 0
            target = order[nxt]
            if target == apple:
                occ[target] = 1
                length += 1
                head_pos = nxt
                steps += 1
                if length == n2:
                    status = WON
                    break
                draw = int(rng.integers(0, n2 - length))
                count = -1
                for cell in range(n2):
                    if occ[cell] == 0:
                        count += 1
                        if count == draw:
                            apple = cell
                            break
            else:
                tail_pos = head_pos - (length - 1)
                if tail_pos < 0:
                    tail_pos += n2
                occ[order[tail_pos]] = 0
                occ[target] = 1
                head_pos = nxt
                steps += 1
        out_steps[g] = steps
        out_scores[g] = length
        out_status[g] = status


def hamiltonian_batch(n, games, rng=None, time_limit=None):
    """Play complete Hamiltonian-cycle games; return (steps, scores, statuses).

    Stream-compatible with playing each game through env.new_game and
    env.step under the cycle agent: a shared seed reproduces the exact
    same games and leaves the rng in the same state. Status codes follow
    env.Status; without a time limit every game is Won.
    """
    from .baselines import build_hamiltonian_cycle

    cycle = build_hamiltonian_cycle(int(n))
    games = int(games)
    if games < 0:
        raise InvalidConfiguration(f"games must be non-negative, got {games}")
    if time_limit is not None and int(time_limit) < 0:
        raise InvalidConfiguration(f"time limit must be non-negative, got {time_limit}")
    if rng is None:
        rng = np.random.default_rng()
    steps = np.empty(games, np.int64)
    scores = np.empty(games, np.int64)
    statuses = np.empty(games, np.int64)
    limit = -1 if time_limit is None else int(time_limit)
    _ham_games(cycle.order, cycle.index, int(n), games, limit, rng, steps, scores, statuses)
    return steps, scores, statuses


# ---------------------------------------------------------------------------
# Uniform-prior tree search.
#
# Node states live in flat pools. A state is (occ, buf, hp, length, apple,
# time): buf is a circular body buffer ordered tail to head, hp the head
# slot, so the tail slot is hp - length + 1 (mod n*n). Scratch state adds
# a status word. Links store at most two (offset, reward) events: the
# entry step's and a terminal loss's; chains stop before any further eat.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _step_k(n, occ, buf, sc, action, respawn):
    """Apply one legal primitive action to a scratch state; return the reward.

    sc holds (head slot, length, apple or -1, time, status). Respawn is the
    explicit apple cell after a non-winning eat, -1 otherwise.
    """
    n2 = n * n
    head = buf[sc[0]]
    target = _shift_k(n, head, action)
    eating = sc[2] >= 0 and target == sc[2]
    if eating:
        occ[target] = 1
        hp = sc[0] + 1
        if hp == n2:
            hp = 0
        buf[hp] = target
        sc[0] = hp
        sc[1] += 1
    else:
        tail_pos = sc[0] - (sc[1] - 1)
        if tail_pos < 0:
            tail_pos += n2
        occ[buf[tail_pos]] = 0
        occ[target] = 1
        hp = sc[0] + 1
        if hp == n2:
            hp = 0
        buf[hp] = target
        sc[0] = hp
    reward = 0.0
    if eating:
        reward += 1.0
        if sc[1] == n2:
            sc[4] = WON
            sc[2] = -1
            reward += 10.0
        else:
            sc[2] = respawn
    sc[3] += 1
    if sc[4] != WON:
        tail_pos = sc[0] - (sc[1] - 1)
        if tail_pos < 0:
            tail_pos += n2
        if not _any_legal_k(n, occ, buf[sc[0]], buf[tail_pos]):
            sc[4] = LOST
            reward += -10.0
    return reward


@njit(cache=True)
def _chain_k(n, occ, buf, sc, time_limit, ev_off, ev_r, ev_n, elapsed, acts):
    """Advance a scratch state through forced steps until the chain settles.

    Returns (kind, forced_action, elapsed, ev_n): kind 0 terminal (status
    set on sc), 1 decision point, 2 pending eat (scratch is the pre-eat
    state and forced_action the eating move). Events append to ev_off/ev_r.
    """
    n2 = n * n
    while True:
        if sc[4] != ONGOING:
            return 0, -1, elapsed, ev_n
        if sc[3] >= time_limit:
            sc[4] = TRUNCATED
            return 0, -1, elapsed, ev_n
        tail_pos = sc[0] - (sc[1] - 1)
        if tail_pos < 0:
            tail_pos += n2
        count = _legal_k(n, occ, buf[sc[0]], buf[tail_pos], acts)
        if count != 1:
            return 1, -1, elapsed, ev_n
        action = acts[0]
        if sc[2] >= 0 and _shift_k(n, buf[sc[0]], action) == sc[2]:
            if sc[1] + 1 == n2:
                reward = _step_k(n, occ, buf, sc, action, -1)
                ev_off[ev_n] = elapsed
                ev_r[ev_n] = reward
                ev_n += 1
                elapsed += 1
                return 0, -1, elapsed, ev_n
            return 2, action, elapsed, ev_n
        reward = _step_k(n, occ, buf, sc, action, -1)
        if reward != 0.0:
            ev_off[ev_n] = elapsed
            ev_r[ev_n] = reward
            ev_n += 1
        elapsed += 1


@njit(cache=True)
def _spawn_child(
    kind,
    forced_action,
    n,
    occ_s,
    buf_s,
    sc,
    d_occ,
    d_buf,
    d_sc,
    d_expanded,
    c_occ,
    c_buf,
    c_sc,
    c_action,
    c_m,
    c_cells,
    c_counts,
    c_ctype,
    d_count,
    c_count,
):
    """Commit the settled scratch state as a new child node.

    Returns (ctype, child, d_count, c_count, ok); ok goes false when a
    pool is full, which aborts the whole search.
    """
    if kind == 0:
        return _TERM, -1, d_count, c_count, True
    if kind == 1:
        if d_count >= d_occ.shape[0]:
            return 0, -1, d_count, c_count, False
        did = d_count
        d_count += 1
        d_occ[did, :] = occ_s
        d_buf[did, :] = buf_s
        d_sc[did, 0] = sc[0]
        d_sc[did, 1] = sc[1]
        d_sc[did, 2] = sc[2]
        d_sc[did, 3] = sc[3]
        d_expanded[did] = 0
        return _DEC, did, d_count, c_count, True
    if c_count >= c_occ.shape[0]:
        return 0, -1, d_count, c_count, False
    cid = c_count
    c_count += 1
    n2 = n * n
    c_occ[cid, :] = occ_s
    c_buf[cid, :] = buf_s
    c_sc[cid, 0] = sc[0]
    c_sc[cid, 1] = sc[1]
    c_sc[cid, 2] = sc[2]
    c_sc[cid, 3] = sc[3]
    c_action[cid] = forced_action
    m = 0
    for cell in range(n2):
        if occ_s[cell] == 0 and cell != sc[2]:
            c_cells[cid, m] = cell
            m += 1
    c_m[cid] = m
    for j in range(m):
        c_counts[cid, j] = 0
        c_ctype[cid, j] = 0
    return _CHANCE, cid, d_count, c_count, True


@njit(cache=True)
def _search_naive(n, occ0, buf0, hp0, len0, apple0, time0, budget, c_puct, time_limit, pow_table):
    """Tree search with uniform priors and zero leaf value.

    Returns (visits, value_sums, ok) with per-action root statistics; on
    ok false a pool or the path buffer overflowed and the caller should
    fall back to the reference implementation.
    """
    n2 = n * n
    dcap = budget + 16
    ccap = 2 * budget + 32
    pcap = 2 * max(time_limit - time0, 0) + 64

    # Decision pool: per-node state plus up to four edges.
    d_occ = np.empty((dcap, n2), np.uint8)
    d_buf = np.empty((dcap, n2), np.int16)
    d_sc = np.empty((dcap, 4), np.int64)
    d_expanded = np.empty(dcap, np.uint8)
    d_ne = np.empty(dcap, np.int64)
    d_act = np.empty((dcap, 4), np.int64)
    d_prior = np.empty((dcap, 4), np.float64)
    d_visits = np.empty((dcap, 4), np.int64)
    d_vsum = np.empty((dcap, 4), np.float64)
    d_ctype = np.empty((dcap, 4), np.int8)
    d_child = np.empty((dcap, 4), np.int64)
    d_elapsed = np.empty((dcap, 4), np.int64)
    d_evn = np.empty((dcap, 4), np.int8)
    d_evoff = np.empty((dcap, 4, 2), np.int64)
    d_evr = np.empty((dcap, 4, 2), np.float64)

    # Chance pool: pre-eat state plus one outcome slot per respawn cell.
    c_occ = np.empty((ccap, n2), np.uint8)
    c_buf = np.empty((ccap, n2), np.int16)
    c_sc = np.empty((ccap, 4), np.int64)
    c_action = np.empty(ccap, np.int64)
    c_m = np.empty(ccap, np.int64)
    c_cells = np.empty((ccap, n2), np.int16)
    c_counts = np.empty((ccap, n2), np.int32)
    c_ctype = np.empty((ccap, n2), np.int8)
    c_child = np.empty((ccap, n2), np.int32)
    c_elapsed = np.empty((ccap, n2), np.int32)
    c_evn = np.empty((ccap, n2), np.int8)
    c_evoff = np.empty((ccap, n2, 2), np.int16)
    c_evr = np.empty((ccap, n2, 2), np.float64)

    # Walked path per simulation, decision edges flagged by p_node >= 0.
    p_elapsed = np.empty(pcap, np.int64)
    p_evn = np.empty(pcap, np.int64)
    p_evoff = np.empty((pcap, 2), np.int64)
    p_evr = np.empty((pcap, 2), np.float64)
    p_node = np.empty(pcap, np.int64)
    p_edge = np.empty(pcap, np.int64)

    occ_s = np.empty(n2, np.uint8)
    buf_s = np.empty(n2, np.int16)
    sc = np.empty(5, np.int64)
    acts = np.empty(4, np.int64)
    ev_off = np.empty(2, np.int64)
    ev_r = np.empty(2, np.float64)

    visits_out = np.zeros(4, np.int64)
    vsum_out = np.zeros(4, np.float64)

    d_occ[0, :] = occ0
    d_buf[0, :] = buf0
    d_sc[0, 0] = hp0
    d_sc[0, 1] = len0
    d_sc[0, 2] = apple0
    d_sc[0, 3] = time0
    d_expanded[0] = 0
    d_count = 1
    c_count = 0

    for sim in range(budget + 1):
        # Simulation 0 expands the root and is not counted: root visits
        # then sum to exactly budget, as in the reference.
        depth = 0
        ntype = _DEC
        nid = 0
        value = 0.0
        ok = True
        while True:
            if ntype == _TERM:
                value = 0.0
                break
            if ntype == _DEC:
                if d_expanded[nid] == 0:
                    tail_pos = d_sc[nid, 0] - (d_sc[nid, 1] - 1)
                    if tail_pos < 0:
                        tail_pos += n2
                    ne = _legal_k(n, d_occ[nid], d_buf[nid, d_sc[nid, 0]], d_buf[nid, tail_pos], acts)
                    prior = 1.0 / ne
                    for i in range(ne):
                        d_act[nid, i] = acts[i]
                        d_prior[nid, i] = prior
                        d_visits[nid, i] = 0
                        d_vsum[nid, i] = 0.0
                        d_ctype[nid, i] = 0
                    d_ne[nid] = ne
                    d_expanded[nid] = 1
                    value = 0.0
                    break
                ne = d_ne[nid]
                total = 0
                for i in range(ne):
                    total += d_visits[nid, i]
                sqrt_total = math.sqrt(total)
                best_i = -1
                best_score = -math.inf
                best_prior = -math.inf
                for i in range(ne):
                    v = d_visits[nid, i]
                    if v > 0:
                        q = d_vsum[nid, i] / v
                    else:
                        q = 0.0
                    score = q + c_puct * d_prior[nid, i] * sqrt_total / (1 + v)
                    if score > best_score or (score == best_score and d_prior[nid, i] > best_prior):
                        best_i = i
                        best_score = score
                        best_prior = d_prior[nid, i]
                ei = best_i
                if d_ctype[nid, ei] == 0:
                    occ_s[:] = d_occ[nid]
                    buf_s[:] = d_buf[nid]
                    sc[0] = d_sc[nid, 0]
                    sc[1] = d_sc[nid, 1]
                    sc[2] = d_sc[nid, 2]
                    sc[3] = d_sc[nid, 3]
                    sc[4] = ONGOING
                    a = d_act[nid, ei]
                    ev_n = 0
                    elapsed = 0
                    if sc[2] >= 0 and _shift_k(n, buf_s[sc[0]], a) == sc[2]:
                        if sc[1] + 1 == n2:
                            reward = _step_k(n, occ_s, buf_s, sc, a, -1)
                            ev_off[0] = 0
                            ev_r[0] = reward
                            ev_n = 1
                            elapsed = 1
                            kind = 0
                            fa = -1
                        else:
                            kind = 2
                            fa = a
                    else:
                        reward = _step_k(n, occ_s, buf_s, sc, a, -1)
                        if reward != 0.0:
                            ev_off[0] = 0
                            ev_r[0] = reward
                            ev_n = 1
                        kind, fa, elapsed, ev_n = _chain_k(
                            n, occ_s, buf_s, sc, time_limit, ev_off, ev_r, ev_n, 1, acts
                        )
                    ctype, child, d_count, c_count, ok = _spawn_child(
                        kind, fa, n, occ_s, buf_s, sc,
                        d_occ, d_buf, d_sc, d_expanded,
                        c_occ, c_buf, c_sc, c_action, c_m, c_cells, c_counts, c_ctype,
                        d_count, c_count,
                    )
                    if not ok:
                        break
                    d_ctype[nid, ei] = ctype
                    d_child[nid, ei] = child
                    d_elapsed[nid, ei] = elapsed
                    d_evn[nid, ei] = ev_n
                    for e in range(ev_n):
                        d_evoff[nid, ei, e] = ev_off[e]
                        d_evr[nid, ei, e] = ev_r[e]
                if depth >= pcap:
                    ok = False
                    break
                p_elapsed[depth] = d_elapsed[nid, ei]
                p_evn[depth] = d_evn[nid, ei]
                for e in range(p_evn[depth]):
                    p_evoff[depth, e] = d_evoff[nid, ei, e]
                    p_evr[depth, e] = d_evr[nid, ei, e]
                p_node[depth] = nid
                p_edge[depth] = ei
                depth += 1
                ntype = d_ctype[nid, ei]
                nid = d_child[nid, ei]
            else:
                m = c_m[nid]
                bj = 0
                bc = c_counts[nid, 0]
                for j in range(1, m):
                    if c_counts[nid, j] < bc:
                        bj = j
                        bc = c_counts[nid, j]
                c_counts[nid, bj] += 1
                if c_ctype[nid, bj] == 0:
                    occ_s[:] = c_occ[nid]
                    buf_s[:] = c_buf[nid]
                    sc[0] = c_sc[nid, 0]
                    sc[1] = c_sc[nid, 1]
                    sc[2] = c_sc[nid, 2]
                    sc[3] = c_sc[nid, 3]
                    sc[4] = ONGOING
                    reward = _step_k(n, occ_s, buf_s, sc, c_action[nid], c_cells[nid, bj])
                    ev_off[0] = 0
                    ev_r[0] = reward
                    ev_n = 1
                    kind, fa, elapsed, ev_n = _chain_k(
                        n, occ_s, buf_s, sc, time_limit, ev_off, ev_r, ev_n, 1, acts
                    )
                    ctype, child, d_count, c_count, ok = _spawn_child(
                        kind, fa, n, occ_s, buf_s, sc,
                        d_occ, d_buf, d_sc, d_expanded,
                        c_occ, c_buf, c_sc, c_action, c_m, c_cells, c_counts, c_ctype,
                        d_count, c_count,
                    )
                    if not ok:
                        break
                    c_ctype[nid, bj] = ctype
                    c_child[nid, bj] = child
                    c_elapsed[nid, bj] = elapsed
                    c_evn[nid, bj] = ev_n
                    for e in range(ev_n):
                        c_evoff[nid, bj, e] = ev_off[e]
                        c_evr[nid, bj, e] = ev_r[e]
                if depth >= pcap:
                    ok = False
                    break
                p_elapsed[depth] = c_elapsed[nid, bj]
                p_evn[depth] = c_evn[nid, bj]
                for e in range(p_evn[depth]):
                    p_evoff[depth, e] = c_evoff[nid, bj, e]
                    p_evr[depth, e] = c_evr[nid, bj, e]
                p_node[depth] = -1
                p_edge[depth] = -1
                depth += 1
                ntype = c_ctype[nid, bj]
                nid = c_child[nid, bj]
        if not ok:
            return visits_out, vsum_out, False
        for k in range(depth - 1, -1, -1):
            carried = pow_table[p_elapsed[k]] * value
            for e in range(p_evn[k]):
                carried += pow_table[p_evoff[k, e]] * p_evr[k, e]
            value = carried
            if p_node[k] >= 0:
                d_visits[p_node[k], p_edge[k]] += 1
                d_vsum[p_node[k], p_edge[k]] += value

    for i in range(d_ne[0]):
        a = d_act[0, i]
        visits_out[a] = d_visits[0, i]
        vsum_out[a] = d_vsum[0, i]
    return visits_out, vsum_out, True


@dataclass(frozen=True)
class KernelSearchStats:
    """Root statistics of a kernel search: per-action visits and value sums."""

    visits: np.ndarray
    value_sums: np.ndarray


def naive_search_stats(state, config):
    """Compiled equivalent of run_search with uniform priors.

    Returns KernelSearchStats with the exact visit counts and value sums
    the reference search would produce, or None when the configuration is
    outside the kernel's domain (no time limit, root noise requested) or
    a preallocated pool overflows.
    """
    if config.time_limit is None or config.dirichlet is not None:
        return None
    if state.terminal:
        raise ContractViolation("run_search on a terminal state")
    search._check_config(config)
    n = state.n
    n2 = n * n
    occ0 = np.frombuffer(state.occupied, dtype=np.uint8).copy()
    buf0 = np.zeros(n2, np.int16)
    length = len(state.cells)
    for i, cell in enumerate(state.cells):
        buf0[length - 1 - i] = cell
    apple0 = -1 if state.apple is None else int(state.apple)
    # Backups discount via this table so the floats match the reference's
    # gamma ** k exactly; exponents never exceed the remaining horizon + 1.
    horizon = max(int(config.time_limit) - int(state.time_index), 0) + 4
    gamma = float(config.gamma)
    pow_table = np.empty(horizon, np.float64)
    for k in range(horizon):
        pow_table[k] = gamma**k
    visits, vsums, ok = _search_naive(
        n,
        occ0,
        buf0,
        length - 1,
        length,
        apple0,
        int(state.time_index),
        int(config.budget),
        float(config.c_puct),
        int(config.time_limit),
        pow_table,
    )
    if not ok:
        return None
    return KernelSearchStats(visits=visits, value_sums=vsums)
