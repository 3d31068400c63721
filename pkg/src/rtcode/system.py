"""Encoder/decoder/memory policies and exact evaluation of the Lagrangian cost.

Every evaluation reduces to per-stage joint tables ``R[x, zy, zw, y]`` giving
P(X_t = x, Z^y_{t-1} = zy, Z^w_{t-1} = zw, Y_t = y). Without side information
the SI axes are singletons and the channel is the all-ones column, so both
settings share one code path. The decoder starts every run in state 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, SpecError
from .length import huffman_cost, huffman_lengths
from .model import COMPARE_TOL, ProblemSpec, require_si

TRACKING = "tracking_deterministic"
STOCHASTIC = "tracking_stochastic"
FULL_HISTORY = "full_history_deterministic"
SI_BELIEF = "si_belief_deterministic"
ENCODER_KINDS = (TRACKING, STOCHASTIC, FULL_HISTORY, SI_BELIEF)

#: Beliefs are keyed after rounding each coordinate to this many decimals.
BELIEF_DECIMALS = 9
DEFAULT_HISTORY_BUDGET = 10**6


# -- policies ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EncoderPolicy:
    """Per-stage encoder tables.

    ``tables[s]`` depends on ``kind``:

    * tracking_deterministic: int array ``(x_size, zy_size)`` of outputs.
    * tracking_stochastic: float array ``(x_size, zy_size, y_size)`` of P(y|x, z).
    * full_history_deterministic: dict ``{(x_prefix, y_prefix): y}`` with
      ``len(x_prefix) == s + 1`` and ``len(y_prefix) == s``.
    * si_belief_deterministic: dict ``{(belief_key, x, zy): y}`` where
      ``belief_key`` is :attr:`Belief.key` of the encoder's belief about the
      decoder's SI sub-state before the stage.
    """

    kind: str
    tables: tuple

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise SpecError("encoder.kind", f"unknown kind {self.kind!r}")
        object.__setattr__(self, "tables", tuple(self.tables))

    @property
    def is_tracking(self) -> bool:
        return self.kind in (TRACKING, STOCHASTIC)

    def stochastic_tables(self, y_size: int) -> list:
        """Tracking tables as conditional distributions ``(x, zy, y)``."""
        if self.kind == STOCHASTIC:
            return [np.asarray(t, dtype=float) for t in self.tables]
        if self.kind == TRACKING:
            return [np.eye(y_size)[np.asarray(t, dtype=int)] for t in self.tables]
        raise SpecError("encoder.kind", f"{self.kind} is not a tracking encoder")


@dataclass(frozen=True, eq=False)
class DecoderPolicy:
    """Per-stage decoder tables.

    Attributes:
        next_state: ``(y_size, zy_size)`` int tables, z' = r_t(y, z).
        reproduction: ``(y_size, zy_size)`` tables without SI, or
            ``(w_size, y_size, zw_size, zy_size)`` tables with SI.
        si_next_state: ``(w_size, y_size, zw_size)`` tables, SI only.
    """

    next_state: tuple
    reproduction: tuple
    si_next_state: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "next_state",
                           tuple(np.asarray(t, dtype=int) for t in self.next_state))
        object.__setattr__(self, "reproduction",
                           tuple(np.asarray(t, dtype=int) for t in self.reproduction))
        if self.si_next_state is not None:
            object.__setattr__(self, "si_next_state",
                               tuple(np.asarray(t, dtype=int) for t in self.si_next_state))

    def reproduction_si(self) -> list:
        """Reproduction tables in the 4-axis ``(w, y, zw, zy)`` layout."""
        if self.si_next_state is not None:
            return list(self.reproduction)
        return [g[None, :, None, :] for g in self.reproduction]

    def si_tables(self, spec: ProblemSpec) -> list:
        if self.si_next_state is not None:
            return list(self.si_next_state)
        return [np.zeros((1, spec.y_size, 1), dtype=int)] * spec.horizon


@dataclass(frozen=True)
class Belief:
    """Encoder belief over the decoder's SI sub-state, keyed for table lookups."""

    probs: tuple
    key: tuple

    @classmethod
    def of(cls, vec) -> "Belief":
        v = np.asarray(vec, dtype=float)
        key = tuple(float(a) for a in np.round(v, BELIEF_DECIMALS) + 0.0)
        return cls(tuple(float(a) for a in v), key)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.probs)


@dataclass
class JointState:
    """Exact law of (x, zy) or (x, zy, zw) at the start of a stage."""

    stage: int
    table: np.ndarray


@dataclass
class StageCost:
    distortion: float
    length: float
    cost: float


@dataclass
class CostReport:
    per_stage: list
    total: float
    avg_distortion: float
    avg_length: float
    lam: float

    def as_dict(self) -> dict:
        return {
            "per_stage": [vars(s) for s in self.per_stage],
            "cost": self.total,
            "avg_distortion": self.avg_distortion,
            "avg_length": self.avg_length,
            "lambda": self.lam,
        }


# -- validation --------------------------------------------------------------


def _zw(spec):
    return max(spec.zw_size, 1)


def channel(spec: ProblemSpec) -> np.ndarray:
    """P(w|x) as ``(x_size, w)``; a single always-observed symbol without SI."""
    if spec.si_channel is None:
        return np.ones((spec.x_size, 1))
    return np.asarray(spec.si_channel)


def _check_index_table(name, table, shape, bound):
    t = np.asarray(table)
    if t.shape != shape:
        raise SpecError(name, f"expected shape {shape}, got {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= bound):
        raise SpecError(name, f"entries must lie in [0, {bound})")


def check_decoder(spec: ProblemSpec, decoder: DecoderPolicy) -> None:
    T = spec.horizon
    if len(decoder.next_state) != T or len(decoder.reproduction) != T:
        raise SpecError("decoder", f"expected {T} stage tables")
    for s in range(T):
        _check_index_table(f"next_state[{s}]", decoder.next_state[s],
                           (spec.y_size, spec.zy_size), spec.zy_size)
        if spec.has_si:
            shape = (spec.w_size, spec.y_size, spec.zw_size, spec.zy_size)
        else:
            shape = (spec.y_size, spec.zy_size)
        _check_index_table(f"reproduction[{s}]", decoder.reproduction[s], shape, spec.xhat_size)
    if spec.has_si:
        if decoder.si_next_state is None or len(decoder.si_next_state) != T:
            raise SpecError("si_next_state", f"expected {T} stage tables with SI")
        for s in range(T):
            _check_index_table(f"si_next_state[{s}]", decoder.si_next_state[s],
                               (spec.w_size, spec.y_size, spec.zw_size), spec.zw_size)
    elif decoder.si_next_state is not None:
        raise SpecError("si_next_state", "given for a spec without SI")


def check_encoder(spec: ProblemSpec, encoder: EncoderPolicy) -> None:
    if len(encoder.tables) != spec.horizon:
        raise SpecError("encoder", f"expected {spec.horizon} stage tables")
    for s, t in enumerate(encoder.tables):
        if encoder.kind == TRACKING:
            _check_index_table(f"encoder[{s}]", t, (spec.x_size, spec.zy_size), spec.y_size)
        elif encoder.kind == STOCHASTIC:
            a = np.asarray(t, dtype=float)
            if a.shape != (spec.x_size, spec.zy_size, spec.y_size):
                raise SpecError(f"encoder[{s}]", f"bad shape {a.shape}")
            if np.any(a < 0) or np.any(np.abs(a.sum(-1) - 1) > 1e-12):
                raise SpecError(f"encoder[{s}]", "rows must be probability vectors")
        else:
            for y in t.values():
                if not 0 <= int(y) < spec.y_size:
                    raise SpecError(f"encoder[{s}]", f"output {y} out of range")


# -- belief recursion and modified distortion --------------------------------


def encoder_belief_update(spec: ProblemSpec, belief, x: int, y: int, si_next_state) -> Belief:
    """Push the encoder's belief on Z^w through one stage.

    b_t(z) = sum over (w, z_prev) with r^w(w, y, z_prev) = z of
    P(w | x) b_{t-1}(z_prev).
    """
    require_si(spec)
    b = belief.vector if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
    rw = np.asarray(si_next_state)
    if b.shape != (spec.zw_size,):
        raise SpecError("belief", f"expected length {spec.zw_size}")
    return Belief.of(_belief_step(spec.si_channel, b, x, y, rw))


def _belief_step(C, b, x, y, rw):
    out = np.zeros(len(b))
    np.add.at(out, rw[:, y, :], C[x][:, None] * b[None, :])
    return out


def modified_distortion(spec: ProblemSpec, stage: int, belief, x: int, y: int, zy: int,
                        reproduction) -> float:
    """Expected distortion of (x, y, zy) averaged over the SI and the unknown sub-state."""
    require_si(spec)
    b = belief.vector if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
    if b.shape != (spec.zw_size,):
        raise SpecError("belief", f"expected length {spec.zw_size}")
    g = np.asarray(reproduction)
    rho = spec.distortion[stage]
    xhat = g[:, y, :, zy]
    return float(np.sum(spec.si_channel[x][:, None] * b[None, :] * rho[x][xhat]))


# -- stage joints ------------------------------------------------------------


def advance(spec, s, R, next_state, si_next_state):
    """Law of (x, zy, zw) at stage ``s + 1`` from the stage-``s`` joint ``R``."""
    X, Y = spec.x_size, spec.y_size
    C = channel(spec)
    ry = np.eye(spec.zy_size)[next_state]               # (y, zy, zy')
    rw = np.eye(_zw(spec))[si_next_state]               # (w, y, zw, zw')
    S = np.einsum("xzvy,xw,xa->zvywa", R, C, spec.kernel(s))
    return np.einsum("zvywa,yzb,wyvc->abc", S, ry, rw)


def _tracking_joints(spec, encoder, decoder):
    tables = encoder.stochastic_tables(spec.y_size)
    rw = decoder.si_tables(spec)
    P = np.zeros((spec.x_size, spec.zy_size, _zw(spec)))
    P[:, 0, 0] = spec.initial_dist
    out = []
    for s in range(spec.horizon):
        R = P[..., None] * tables[s][:, :, None, :]
        out.append(R)
        if s + 1 < spec.horizon:
            P = advance(spec, s, R, decoder.next_state[s], rw[s])
    return out


def _history_joints(spec, encoder, decoder, budget):
    C = channel(spec)
    rw = decoder.si_tables(spec)
    zw = _zw(spec)
    start = np.zeros(zw)
    start[0] = 1.0
    # (prob, x_prefix, y_prefix, zy, belief)
    hist = [(float(p), (x,), (), 0, start) for x, p in enumerate(spec.initial_dist) if p > 0]
    out = []
    for s in range(spec.horizon):
        if len(hist) > budget:
            raise BudgetExceeded("full-history expansion", len(hist), budget)
        R = np.zeros((spec.x_size, spec.zy_size, zw, spec.y_size))
        table = encoder.tables[s]
        outputs = []
        for prob, xs, ys, zy, b in hist:
            key = (xs, ys)
            if key not in table:
                raise SpecError(f"encoder[{s}]", f"no output for reachable history {key}")
            y = int(table[key])
            outputs.append(y)
            R[xs[-1], zy, :, y] += prob * b
        out.append(R)
        if s + 1 == spec.horizon:
            break
        K = spec.kernel(s)
        nxt = []
        for (prob, xs, ys, zy, b), y in zip(hist, outputs):
            x = xs[-1]
            b2 = _belief_step(C, b, x, y, rw[s])
            z2 = int(decoder.next_state[s][y, zy])
            for x2 in range(spec.x_size):
                if K[x, x2] > 0:
                    nxt.append((prob * K[x, x2], xs + (x2,), ys + (y,), z2, b2))
        hist = nxt
    return out


def _belief_joints(spec, encoder, decoder):
    C = channel(spec)
    rw = decoder.si_tables(spec)
    start = Belief.of(np.eye(_zw(spec))[0])
    states = {(start.key, x, 0): (float(p), start) for x, p in enumerate(spec.initial_dist) if p > 0}
    out = []
    for s in range(spec.horizon):
        R = np.zeros((spec.x_size, spec.zy_size, _zw(spec), spec.y_size))
        table = encoder.tables[s]
        nxt = {}
        for key, (prob, b) in states.items():
            if key not in table:
                raise SpecError(f"encoder[{s}]", f"no output for reachable key {key}")
            y = int(table[key])
            _, x, zy = key
            R[x, zy, :, y] += prob * b.vector
            if s + 1 == spec.horizon:
                continue
            b2 = Belief.of(_belief_step(C, b.vector, x, y, rw[s]))
            z2 = int(decoder.next_state[s][y, zy])
            for x2, q in enumerate(spec.kernel(s)[x]):
                if q > 0:
                    k2 = (b2.key, x2, z2)
                    p0 = nxt.get(k2, (0.0, b2))[0]
                    nxt[k2] = (p0 + prob * q, b2)
        out.append(R)
        states = nxt
    return out


def stage_joints(spec: ProblemSpec, encoder: EncoderPolicy, decoder: DecoderPolicy,
                 budget: int = DEFAULT_HISTORY_BUDGET) -> list:
    """Per-stage tables ``R[x, zy, zw, y]`` induced by the encoder and decoder memory."""
    check_encoder(spec, encoder)
    if encoder.is_tracking:
        return _tracking_joints(spec, encoder, decoder)
    if encoder.kind == FULL_HISTORY:
        return _history_joints(spec, encoder, decoder, budget)
    require_si(spec)
    return _belief_joints(spec, encoder, decoder)


def stage_cost_terms(spec, s, R, g4):
    """(distortion, length) of stage ``s`` for joint ``R`` and reproduction ``g4``."""
    C = channel(spec)
    rho = spec.distortion[s]
    # ρ(x, g[w, y, zw, zy]) as (x, w, y, zw, zy)
    d = rho[:, g4]
    dist = np.einsum("xzvy,xw,xwyvz->", R, C, d)
    length = huffman_cost(R.sum(axis=(0, 2))).sum()
    return float(dist), float(length)


def bayes_tables(spec, s, R):
    """Bayes-response reproduction ``(w, y, zw, zy)`` for the stage joint ``R``."""
    C = channel(spec)
    # expected distortion of each candidate, unnormalized: (w, y, zw, zy, xhat)
    A = np.einsum("xzvy,xw,xk->wyvzk", R, C, spec.distortion[s])
    return np.argmin(np.round(A, 12), axis=-1)


def _report(spec, parts):
    per = [StageCost(d, l, d + spec.lam * l) for d, l in parts]
    T = spec.horizon
    return CostReport(
        per_stage=per,
        total=sum(p.cost for p in per) / T,
        avg_distortion=sum(p.distortion for p in per) / T,
        avg_length=sum(p.length for p in per) / T,
        lam=spec.lam,
    )


def _evaluate(spec, encoder, decoder, budget):
    check_decoder(spec, decoder)
    joints = stage_joints(spec, encoder, decoder, budget)
    g4 = decoder.reproduction_si()
    return _report(spec, [stage_cost_terms(spec, s, R, g4[s]) for s, R in enumerate(joints)])


def evaluate_cost(spec: ProblemSpec, encoder: EncoderPolicy, decoder: DecoderPolicy,
                  budget: int = DEFAULT_HISTORY_BUDGET) -> CostReport:
    """Exact expected Lagrangian cost of a system without side information."""
    require_si(spec, False)
    if encoder.kind == SI_BELIEF:
        raise SpecError("encoder.kind", "belief encoders need side information")
    return _evaluate(spec, encoder, decoder, budget)


def evaluate_cost_si(spec: ProblemSpec, encoder: EncoderPolicy, decoder: DecoderPolicy,
                     budget: int = DEFAULT_HISTORY_BUDGET) -> CostReport:
    """Exact expected cost with decoder side information.

    The length term conditions on the SI-independent sub-state only.
    """
    require_si(spec)
    return _evaluate(spec, encoder, decoder, budget)


def propagate_joint(spec: ProblemSpec, encoder: EncoderPolicy, decoder: DecoderPolicy) -> list:
    """Exact law of (x, zy[, zw]) at every stage for a tracking encoder."""
    if not encoder.is_tracking:
        raise SpecError("encoder.kind", "propagate_joint needs a tracking encoder")
    check_decoder(spec, decoder)
    check_encoder(spec, encoder)
    out = []
    for s, R in enumerate(_tracking_joints(spec, encoder, decoder)):
        table = R.sum(axis=-1)
        out.append(JointState(s, table if spec.has_si else table[:, :, 0]))
    return out


def bayes_decoder(spec: ProblemSpec, encoder: EncoderPolicy, next_state,
                  si_next_state=None, budget: int = DEFAULT_HISTORY_BUDGET) -> DecoderPolicy:
    """Decoder whose reproduction is the Bayes response at every reachable cell.

    Unreachable cells get reproduction 0; distortion ties go to the smallest index.
    """
    placeholder = [np.zeros((spec.w_size, spec.y_size, spec.zw_size, spec.zy_size), dtype=int)
                   if spec.has_si else np.zeros((spec.y_size, spec.zy_size), dtype=int)
                   ] * spec.horizon
    memory = DecoderPolicy(next_state, placeholder, si_next_state)
    check_decoder(spec, memory)
    joints = stage_joints(spec, encoder, memory, budget)
    g = [bayes_tables(spec, s, R) for s, R in enumerate(joints)]
    if not spec.has_si:
        g = [t[0, :, 0, :] for t in g]
    return DecoderPolicy(next_state, g, si_next_state)


def conditional_length_tables(spec: ProblemSpec, joints: list) -> list:
    """Huffman lengths ``(zy, y)`` of the realized index given the decoder state.

    Lengths come from the exact conditional law of Y_t given Z^y_{t-1}; the
    symbol of a degenerate conditional costs 0 and impossible symbols ``inf``.
    """
    out = []
    for R in joints:
        py = R.sum(axis=(0, 2))
        out.append(np.array([huffman_lengths(row) if row.sum() > 0
                             else (np.inf,) * spec.y_size for row in py], dtype=float))
    return out


# -- standard decoder memories -----------------------------------------------


def prefix_tree(spec: ProblemSpec):
    """Infinite-memory decoder memory: the state indexes the received prefix.

    Returns ``(spec', next_state)`` where ``spec'`` has ``zy_size =
    y_size ** (horizon - 1)`` and state ``z`` before stage ``s`` is the base-Y
    number of ``y_1 .. y_s``.
    """
    Y = spec.y_size
    size = Y ** (spec.horizon - 1)
    ext = spec.replace(zy_size=size)
    tables = []
    for s in range(spec.horizon):
        r = (np.arange(size)[None, :] * Y + np.arange(Y)[:, None]) % size
        if s == spec.horizon - 1:
            r = np.zeros_like(r)
        tables.append(r)
    return ext, tables


def window_state_size(y_size: int, length: int, null: bool = True) -> int:
    return (y_size + 1) ** length if null else y_size ** length


def window_next_state(spec: ProblemSpec, length: int, null: bool = True) -> list:
    """Sliding-window memory of the last ``length`` indices.

    With ``null`` the window is padded with a reserved symbol (digit 0,
    real indices shifted by one), giving ``(y_size + 1) ** length`` states;
    otherwise padding reuses index 0 and there are ``y_size ** length``
    states. State 0 is the empty window in both encodings.
    """
    base = spec.y_size + 1 if null else spec.y_size
    size = base ** length
    shift = 1 if null else 0
    r = (np.arange(size)[None, :] * base + np.arange(spec.y_size)[:, None] + shift) % size
    return [r.copy() for _ in range(spec.horizon)]


def default_decoder(spec: ProblemSpec) -> DecoderPolicy:
    """Fixed decoder used when none is supplied: z' = y mod |Z|, x̂ = y mod |X̂|."""
    ys = np.arange(spec.y_size)
    r = np.repeat((ys % spec.zy_size)[:, None], spec.zy_size, axis=1)
    g = np.repeat((ys % spec.xhat_size)[:, None], spec.zy_size, axis=1)
    if not spec.has_si:
        return DecoderPolicy([r] * spec.horizon, [g] * spec.horizon)
    g4 = np.broadcast_to(g[None, :, None, :],
                         (spec.w_size, spec.y_size, spec.zw_size, spec.zy_size)).copy()
    rw = np.broadcast_to((np.arange(spec.w_size) % spec.zw_size)[:, None, None],
                         (spec.w_size, spec.y_size, spec.zw_size)).copy()
    return DecoderPolicy([r] * spec.horizon, [g4] * spec.horizon, [rw] * spec.horizon)


# -- JSON --------------------------------------------------------------------


def _key_str(parts):
    return ",".join(str(int(p)) for p in parts)


def encoder_to_dict(encoder: EncoderPolicy) -> dict:
    doc = {"kind": encoder.kind}
    if encoder.kind in (TRACKING, STOCHASTIC):
        doc["tables"] = [np.asarray(t).tolist() for t in encoder.tables]
    elif encoder.kind == FULL_HISTORY:
        doc["tables"] = [
            {f"{_key_str(xs)}|{_key_str(ys)}": int(y) for (xs, ys), y in sorted(t.items())}
            for t in encoder.tables
        ]
    else:
        stages = []
        for t in encoder.tables:
            beliefs = sorted({k[0] for k in t})
            ids = {b: i for i, b in enumerate(beliefs)}
            stages.append({
                "beliefs": [list(b) for b in beliefs],
                "table": {f"{ids[b]},{x},{z}": int(y) for (b, x, z), y in sorted(t.items())},
            })
        doc["tables"] = stages
    return doc


def _parse_ints(text):
    return tuple(int(p) for p in text.split(",")) if text else ()


def encoder_from_dict(doc: dict) -> EncoderPolicy:
    kind = doc["kind"]
    if kind == TRACKING:
        tables = [np.asarray(t, dtype=int) for t in doc["tables"]]
    elif kind == STOCHASTIC:
        tables = [np.asarray(t, dtype=float) for t in doc["tables"]]
    elif kind == FULL_HISTORY:
        tables = []
        for t in doc["tables"]:
            stage = {}
            for key, y in t.items():
                xs, ys = key.split("|")
                stage[(_parse_ints(xs), _parse_ints(ys))] = int(y)
            tables.append(stage)
    elif kind == SI_BELIEF:
        tables = []
        for t in doc["tables"]:
            beliefs = [tuple(float(v) for v in b) for b in t["beliefs"]]
            stage = {}
            for key, y in t["table"].items():
                bid, x, z = _parse_ints(key)
                stage[(beliefs[bid], x, z)] = int(y)
            tables.append(stage)
    else:
        raise SpecError("encoder.kind", f"unknown kind {kind!r}")
    return EncoderPolicy(kind, tables)


def decoder_to_dict(decoder: DecoderPolicy) -> dict:
    doc = {
        "next_state": [t.tolist() for t in decoder.next_state],
        "reproduction": [t.tolist() for t in decoder.reproduction],
    }
    if decoder.si_next_state is not None:
        doc["si_next_state"] = [t.tolist() for t in decoder.si_next_state]
    return doc


def decoder_from_dict(doc: dict) -> DecoderPolicy:
    return DecoderPolicy(doc["next_state"], doc["reproduction"], doc.get("si_next_state"))
