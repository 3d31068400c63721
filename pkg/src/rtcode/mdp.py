"""Belief-state dynamic programming for the infinite-memory decoder.

With a decoder that remembers every received index, the encoder's action at
stage t is a map a_t: X -> Y chosen as a function of the public posterior
s_t = P(x_t | y^{t-1}) (with side information, the posterior over
(x_t, z^w_{t-1})). Backward induction over the finitely many reachable
posteriors gives the optimal cost and a Markov deterministic policy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, SpecError
from .length import huffman_cost
from .model import ProblemSpec, require_si
from .system import (
    TRACKING,
    DecoderPolicy,
    EncoderPolicy,
    bayes_decoder,
    channel,
    default_decoder,
    prefix_tree,
)

#: States are interned after rounding each coordinate to this many decimals.
STATE_DECIMALS = 9
NEAR_COLLISION_TOL = 1e-6
DEFAULT_STATE_BUDGET = 10**6


@dataclass(frozen=True)
class MdpAction:
    mapping: tuple

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(int(y) for y in self.mapping))

    def __call__(self, x: int) -> int:
        return self.mapping[x]


@dataclass(frozen=True, eq=False)
class MdpState:
    """Posterior over X (or X x Z^w) before stage ``stage``; ``key`` interns it."""

    belief: np.ndarray
    stage: int
    key: tuple = field(default=())

    @classmethod
    def of(cls, belief, stage):
        b = np.asarray(belief, dtype=float)
        key = tuple(float(v) for v in np.round(b.ravel(), STATE_DECIMALS) + 0.0)
        return cls(b, stage, key)

    @property
    def has_si(self) -> bool:
        return self.belief.ndim == 2


@dataclass
class ValueTable:
    """Per-stage optimal cost-to-go and action for every reachable state."""

    states: list                 # per stage: list of MdpState
    values: list                 # per stage: {key: u_t*}
    actions: list                # per stage: {key: MdpAction}
    near_collisions: int = 0

    def value(self, state: MdpState) -> float:
        return self.values[state.stage][state.key]

    def action(self, state: MdpState) -> MdpAction:
        return self.actions[state.stage][state.key]


def all_actions(spec: ProblemSpec) -> list:
    """Every map X -> Y, in lexicographic order of the output tuple."""
    return [MdpAction(m) for m in itertools.product(range(spec.y_size), repeat=spec.x_size)]


def _action_array(spec):
    return np.array(list(itertools.product(range(spec.y_size), repeat=spec.x_size)),
                    dtype=int).reshape(-1, spec.x_size)


def bayes_response(posterior, rho) -> tuple:
    """Minimum-expected-distortion reproduction and its value (the Bayes envelope).

    Ties go to the smallest reproduction index.
    """
    p = np.asarray(posterior, dtype=float)
    values = p @ np.asarray(rho, dtype=float)
    k = int(np.argmin(np.round(values, 12)))
    return k, float(values[k])


def initial_state(spec: ProblemSpec) -> MdpState:
    if not spec.has_si:
        return MdpState.of(spec.initial_dist, 0)
    b = np.zeros((spec.x_size, spec.zw_size))
    b[:, 0] = spec.initial_dist
    return MdpState.of(b, 0)


def _as_si(spec, state):
    return state.belief if state.has_si else state.belief[:, None]


def _si_tables(spec, si_next_state):
    if not spec.has_si:
        return None
    if si_next_state is None:
        si_next_state = default_decoder(spec).si_next_state
    return [np.asarray(t, dtype=int) for t in si_next_state]


def _joint(spec, state, mapping):
    """R[x, zw, y] = s(x, zw) 1{a(x) = y}."""
    s = _as_si(spec, state)
    return s[:, :, None] * np.eye(spec.y_size)[np.asarray(mapping)][:, None, :]


def _next_belief(spec, stage, R, y, rw):
    C = channel(spec)
    K = spec.kernel(stage)
    if rw is None:
        nxt = R[:, 0, y] @ K
        return nxt, float(R[:, 0, y].sum())
    # (x, zw, w) mass for output y, routed to zw' through r^w
    M = R[:, :, y][:, :, None] * C[:, None, :]
    route = np.eye(spec.zw_size)[rw[stage][:, y, :]]            # (w, zw, zw')
    nxt = np.einsum("xvw,wvc,xa->ac", M, route, K)
    return nxt, float(M.sum())


def belief_update(spec: ProblemSpec, state: MdpState, action, y: int,
                  si_next_state=None) -> MdpState:
    """Posterior before the next stage after observing ``y`` under ``action``.

    Raises:
        SpecError: if ``y`` has zero probability under (state, action), or the
            state is already at the last stage.
    """
    if state.stage >= spec.horizon - 1:
        raise SpecError("stage", "no transition after the last stage")
    mapping = action.mapping if isinstance(action, MdpAction) else tuple(action)
    rw = _si_tables(spec, si_next_state)
    R = _joint(spec, state, mapping)
    nxt, mass = _next_belief(spec, state.stage, R, y, rw)
    if mass <= 0:
        raise SpecError("y", f"observation {y} has zero probability under this action")
    return MdpState.of(nxt / nxt.sum(), state.stage + 1)


def _stage_costs(spec, state, actions):
    """gamma_t for a batch of action tables ``(n, x_size)``."""
    s = _as_si(spec, state)
    C = channel(spec)
    rho = spec.distortion[state.stage]
    R = s[None, :, :, None] * np.eye(spec.y_size)[actions][:, :, None, :]   # (n, x, zw, y)
    A = np.einsum("nxvy,xw,xk->nwyvk", R, C, rho)
    dist = A.min(axis=-1).sum(axis=(1, 2, 3))
    length = huffman_cost(R.sum(axis=(1, 2)))
    return dist + spec.lam * length


def stage_cost(spec: ProblemSpec, state: MdpState, action) -> float:
    """Bayes-envelope distortion plus lambda times the Huffman length of P(y)."""
    mapping = action.mapping if isinstance(action, MdpAction) else tuple(action)
    return float(_stage_costs(spec, state, np.array([mapping]))[0])


def _transitions(spec, state, mapping, rw):
    """[(P(y), next state)] over outputs with positive probability."""
    R = _joint(spec, state, mapping)
    out = []
    for y in range(spec.y_size):
        nxt, mass = _next_belief(spec, state.stage, R, y, rw)
        if mass > 0:
            out.append((mass, MdpState.of(nxt / nxt.sum(), state.stage + 1)))
    return out


def near_collisions(states, tol: float = NEAR_COLLISION_TOL) -> int:
    """Pairs of distinct interned states closer than ``tol`` in max norm."""
    if len(states) < 2:
        return 0
    V = np.array([np.ravel(s.belief) for s in states])
    d = np.abs(V[:, None, :] - V[None, :, :]).max(axis=-1)
    iu = np.triu_indices(len(states), 1)
    return int((d[iu] < tol).sum())


def enumerate_reachable(spec: ProblemSpec, si_next_state=None,
                        budget: int = DEFAULT_STATE_BUDGET) -> list:
    """Reachable states per stage, closing belief_update over actions and outputs."""
    rw = _si_tables(spec, si_next_state)
    actions = _action_array(spec)
    layer = {initial_state(spec).key: initial_state(spec)}
    out = [list(layer.values())]
    total = 1
    for _ in range(spec.horizon - 1):
        nxt = {}
        for state in layer.values():
            for a in actions:
                for _, st in _transitions(spec, state, a, rw):
                    nxt.setdefault(st.key, st)
        total += len(nxt)
        if total > budget:
            raise BudgetExceeded("enumerate_reachable", total, budget)
        layer = nxt
        out.append(list(layer.values()))
    return out


def _solve(spec, rw, budget):
    layers = enumerate_reachable(spec, None if rw is None else rw, budget)
    actions = _action_array(spec)
    T = spec.horizon
    values = [dict() for _ in range(T)]
    chosen = [dict() for _ in range(T)]
    for t in range(T - 1, -1, -1):
        for state in layers[t]:
            q = _stage_costs(spec, state, actions)
            if t < T - 1:
                for i, a in enumerate(actions):
                    q[i] += sum(p * values[t + 1][st.key] for p, st in _transitions(spec, state, a, rw))
            best = int(np.argmin(np.round(q, 12)))
            values[t][state.key] = float(q[best])
            chosen[t][state.key] = MdpAction(actions[best])
    table = ValueTable(layers, values, chosen,
                       near_collisions=sum(near_collisions(layer) for layer in layers))
    return table, values[0][initial_state(spec).key] / T


def solve_backward(spec: ProblemSpec, budget: int = DEFAULT_STATE_BUDGET):
    """Backward induction over posteriors P(x_t | y^{t-1}).

    Returns:
        ``(ValueTable, cost)`` where ``cost`` is the optimal per-stage average.
        Action ties go to the lexicographically smallest map.
    """
    require_si(spec, False)
    return _solve(spec, None, budget)


def solve_backward_si(spec: ProblemSpec, si_next_state=None,
                      budget: int = DEFAULT_STATE_BUDGET):
    """Backward induction over posteriors P(x_t, z^w_{t-1} | y^{t-1}).

    ``si_next_state`` holds the decoder's fixed r^w tables (default: those of
    :func:`rtcode.system.default_decoder`).
    """
    require_si(spec)
    return _solve(spec, _si_tables(spec, si_next_state), budget)


def policy_system(spec: ProblemSpec, table: ValueTable, si_next_state=None):
    """Run the MD policy as a tracking encoder on the prefix-tree decoder.

    Returns ``(spec', encoder, decoder)`` with Bayes reproduction, ready for
    the exact evaluator. Prefixes of zero probability get action 0.
    """
    rw = _si_tables(spec, si_next_state)
    ext, r = prefix_tree(spec)
    Y, T = spec.y_size, spec.horizon
    size = ext.zy_size
    tables = [np.zeros((spec.x_size, size), dtype=int) for _ in range(T)]
    frontier = [(0, initial_state(spec))]          # (prefix state index, posterior)
    for t in range(T):
        nxt = []
        for z, state in frontier:
            a = table.action(state)
            tables[t][:, z] = a.mapping
            if t + 1 < T:
                for y in range(Y):
                    R = _joint(spec, state, a.mapping)
                    b, mass = _next_belief(spec, t, R, y, rw)
                    if mass > 0:
                        nxt.append((int(r[t][y, z]), MdpState.of(b / b.sum(), t + 1)))
        frontier = nxt
    encoder = EncoderPolicy(TRACKING, tables)
    decoder = bayes_decoder(ext, encoder, r, rw)
    return ext, encoder, decoder


def value_table_to_dict(table: ValueTable) -> dict:
    stages = []
    for t, layer in enumerate(table.states):
        stages.append([
            {"state": np.asarray(s.belief).tolist(), "stage": t,
             "cost_to_go": table.values[t][s.key],
             "action": list(table.actions[t][s.key].mapping)}
            for s in layer
        ])
    return {"stages": stages, "near_collisions": table.near_collisions}
