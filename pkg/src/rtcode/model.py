"""Problem instances: alphabets, horizon, Markov source, distortion and SI channel.

Stages are 0-based internally: stage ``s`` encodes source symbol ``X_{s+1}``.
``transitions[s]`` is the kernel carrying stage ``s`` to stage ``s + 1`` and
``distortion[s]`` is the table used at stage ``s``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import SpecError

#: Tolerance used when validating probability rows.
VALIDATION_TOL = 1e-12
#: Tolerance used when comparing derived quantities downstream.
COMPARE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A fully specified real-time coding instance.

    Attributes:
        x_size: size of the source alphabet X.
        y_size: size of the index set Y.
        zy_size: size of the decoder state alphabet (the SI-independent
            sub-state when side information is enabled).
        zw_size: size of the SI-driven decoder sub-state alphabet, 0 without SI.
        w_size: size of the SI alphabet, 0 without SI.
        xhat_size: size of the reproduction alphabet.
        horizon: number of stages T.
        lam: rate/distortion tradeoff (``"lambda"`` in JSON).
        initial_dist: P(x_1), shape ``(x_size,)``.
        transitions: ``horizon - 1`` row-stochastic ``(x_size, x_size)`` kernels.
        distortion: ``horizon`` nonnegative ``(x_size, xhat_size)`` tables.
        si_channel: row-stochastic ``(x_size, w_size)`` channel P(w|x) or None.
    """

    x_size: int
    y_size: int
    zy_size: int
    xhat_size: int
    horizon: int
    lam: float
    initial_dist: np.ndarray
    transitions: tuple
    distortion: tuple
    zw_size: int = 0
    w_size: int = 0
    si_channel: Optional[np.ndarray] = None

    @property
    def has_si(self) -> bool:
        return self.si_channel is not None

    def kernel(self, s: int) -> np.ndarray:
        """Transition matrix from stage ``s`` to stage ``s + 1``."""
        return self.transitions[s]

    def replace(self, **changes) -> "ProblemSpec":
        return validate_spec(dataclasses.replace(self, **changes))


def _as_stages(value, count, shape, field):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == len(shape):
        stages = [arr.copy() for _ in range(count)]
    elif arr.ndim == len(shape) + 1:
        if arr.shape[0] != count:
            raise SpecError(field, f"expected {count} per-stage tables, got {arr.shape[0]}")
        stages = [a.copy() for a in arr]
    else:
        raise SpecError(field, f"bad dimensionality {arr.ndim}")
    for a in stages:
        if a.shape != shape:
            raise SpecError(field, f"expected shape {shape}, got {a.shape}")
        a.setflags(write=False)
    return tuple(stages)


def make_spec(
    *,
    x_size,
    y_size,
    zy_size,
    horizon,
    lam,
    initial,
    distortion,
    transitions=None,
    xhat_size=None,
    si_channel=None,
    zw_size=None,
    w_size=None,
) -> ProblemSpec:
    """Build and validate a spec, broadcasting single tables to every stage."""
    if xhat_size is None:
        xhat_size = x_size
    horizon = int(horizon)
    if horizon < 1:
        raise SpecError("horizon", "must be >= 1")
    if transitions is None:
        if horizon > 1:
            raise SpecError("transitions", "required when horizon > 1")
        trans = ()
    elif horizon == 1:
        trans = ()
    else:
        trans = _as_stages(transitions, horizon - 1, (x_size, x_size), "transitions")
    dist = _as_stages(distortion, horizon, (x_size, xhat_size), "distortion")
    init = np.array(initial, dtype=float)
    init.setflags(write=False)
    channel = None
    if si_channel is not None:
        channel = np.array(si_channel, dtype=float)
        channel.setflags(write=False)
        if w_size is None:
            w_size = channel.shape[1] if channel.ndim == 2 else 0
        if zw_size is None:
            zw_size = 1
    spec = ProblemSpec(
        x_size=int(x_size),
        y_size=int(y_size),
        zy_size=int(zy_size),
        xhat_size=int(xhat_size),
        horizon=horizon,
        lam=float(lam),
        initial_dist=init,
        transitions=trans,
        distortion=dist,
        zw_size=int(zw_size or 0),
        w_size=int(w_size or 0),
        si_channel=channel,
    )
    return validate_spec(spec)


def _check_stochastic(field, arr, axis=-1):
    if not np.all(np.isfinite(arr)):
        raise SpecError(field, "non-finite probability")
    if np.any(arr < 0):
        raise SpecError(field, "negative probability")
    sums = arr.sum(axis=axis)
    bad = np.abs(sums - 1.0) > VALIDATION_TOL
    if np.any(bad):
        worst = float(np.asarray(sums)[bad].flat[0])
        raise SpecError(field, f"row sums to {worst!r}, not 1")


def validate_spec(raw: ProblemSpec) -> ProblemSpec:
    """Return ``raw`` unchanged if every invariant holds, else raise SpecError."""
    for name in ("x_size", "y_size", "zy_size", "xhat_size", "horizon"):
        if getattr(raw, name) < 1:
            raise SpecError(name, "must be >= 1")
    if not np.isfinite(raw.lam) or raw.lam < 0:
        raise SpecError("lambda", f"must be a finite nonnegative number, got {raw.lam}")
    if raw.initial_dist.shape != (raw.x_size,):
        raise SpecError("initial", f"expected shape ({raw.x_size},)")
    _check_stochastic("initial", raw.initial_dist)
    if len(raw.transitions) != raw.horizon - 1:
        raise SpecError("transitions", f"expected {raw.horizon - 1} stage kernels")
    for s, k in enumerate(raw.transitions):
        if k.shape != (raw.x_size, raw.x_size):
            raise SpecError("transitions", f"stage {s + 1}: bad shape {k.shape}")
        _check_stochastic(f"transitions[{s}]", k)
    if len(raw.distortion) != raw.horizon:
        raise SpecError("distortion", f"expected {raw.horizon} stage tables")
    for s, d in enumerate(raw.distortion):
        if d.shape != (raw.x_size, raw.xhat_size):
            raise SpecError("distortion", f"stage {s}: bad shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise SpecError(f"distortion[{s}]", "entries must be finite and >= 0")
    if raw.si_channel is None:
        if raw.zw_size or raw.w_size:
            raise SpecError("si_channel", "zw_size/w_size must be 0 without a channel")
    else:
        if raw.w_size < 1 or raw.zw_size < 1:
            raise SpecError("si_channel", "w_size and zw_size must be >= 1 with SI")
        if raw.si_channel.shape != (raw.x_size, raw.w_size):
            raise SpecError("si_channel", f"expected shape ({raw.x_size}, {raw.w_size})")
        _check_stochastic("si_channel", raw.si_channel)
        if np.any(raw.si_channel <= 0):
            raise SpecError("si_channel", "entries must be strictly positive (P(w|x) > 0)")
    return raw


def require_si(spec: ProblemSpec, enabled: bool = True) -> None:
    if enabled and not spec.has_si:
        raise SpecError("si_channel", "operation needs a spec with side information")
    if not enabled and spec.has_si:
        raise SpecError("si_channel", "operation needs a spec without side information")


# -- k-order sources ---------------------------------------------------------


def _digits(index, base, k):
    out = []
    for _ in range(k):
        out.append(index % base)
        index //= base
    return tuple(reversed(out))


def lift_korder(
    spec: ProblemSpec,
    k: int,
    korder_transitions,
    initial_block=None,
) -> ProblemSpec:
    """Lift a k-order Markov source to a first-order source over X^k.

    The lifted symbol at stage ``s`` is the block ``(X_{s+1}, ..., X_{s+k})``,
    encoded in mixed radix with the oldest symbol most significant. The lifted
    horizon is ``horizon - k + 1`` and the distortion of a block reads its
    last (newest) coordinate.

    Args:
        spec: base instance; supplies alphabets, distortion, SI channel and,
            when ``initial_block`` is omitted, the warm-up law of the first k
            symbols (``initial_dist`` followed by the first-order kernels).
        k: source order.
        korder_transitions: array of shape ``(x_size,) * (k + 1)`` giving
            P(x_t | x_{t-k}, ..., x_{t-1}) with the new symbol on the last
            axis, or a sequence of ``horizon - k`` such arrays.
        initial_block: optional joint law of ``(X_1, ..., X_k)`` with shape
            ``(x_size,) * k``.
    """
    n = spec.x_size
    if k < 1:
        raise SpecError("k", "order must be >= 1")
    if k > spec.horizon:
        raise SpecError("k", f"order {k} exceeds horizon {spec.horizon}")
    new_horizon = spec.horizon - k + 1
    kshape = (n,) * (k + 1)
    arr = np.asarray(korder_transitions, dtype=float)
    if arr.shape == kshape:
        kernels = [arr] * (new_horizon - 1)
    elif arr.ndim == k + 2 and arr.shape[0] == new_horizon - 1:
        kernels = list(arr)
    else:
        raise SpecError("korder_transitions", f"expected shape {kshape} or "
                        f"{new_horizon - 1} such kernels, got {arr.shape}")
    for a in kernels:
        if a.shape != kshape:
            raise SpecError("korder_transitions", f"expected shape {kshape}, got {a.shape}")
        _check_stochastic("korder_transitions", a.reshape(-1, n))

    if initial_block is None:
        block = spec.initial_dist.copy()
        for s in range(k - 1):
            block = block[..., :, None] * spec.kernel(s)
    else:
        block = np.asarray(initial_block, dtype=float)
    if block.shape != (n,) * k:
        raise SpecError("initial_block", f"expected shape {(n,) * k}, got {block.shape}")
    _check_stochastic("initial_block", block.reshape(1, -1))

    size = n ** k
    lifted_trans = []
    for a in kernels:
        flat = a.reshape(size, n)
        m = np.zeros((size, size))
        for i in range(size):
            tail = (i % (n ** (k - 1))) * n
            m[i, tail:tail + n] = flat[i]
        lifted_trans.append(m)
    last = np.arange(size) % n
    dist = [spec.distortion[s + k - 1][last] for s in range(new_horizon)]
    channel = None if spec.si_channel is None else spec.si_channel[last]
    return make_spec(
        x_size=size,
        y_size=spec.y_size,
        zy_size=spec.zy_size,
        xhat_size=spec.xhat_size,
        horizon=new_horizon,
        lam=spec.lam,
        initial=block.reshape(size),
        transitions=lifted_trans if new_horizon > 1 else None,
        distortion=dist,
        si_channel=channel,
        zw_size=spec.zw_size if channel is not None else None,
        w_size=spec.w_size if channel is not None else None,
    )


def block_digits(index: int, x_size: int, k: int) -> tuple:
    """Decode a lifted symbol into its k source symbols (oldest first)."""
    return _digits(index, x_size, k)


# -- JSON --------------------------------------------------------------------

_SIZE_KEYS = ("x_size", "y_size", "zy_size", "xhat_size", "zw_size", "w_size")


def spec_from_dict(doc: dict) -> ProblemSpec:
    """Build a validated spec from the documented JSON layout."""
    try:
        kwargs = dict(
            x_size=doc["x_size"],
            y_size=doc["y_size"],
            zy_size=doc.get("zy_size", 1),
            horizon=doc["horizon"],
            lam=doc["lambda"],
            initial=doc["initial"],
            distortion=doc["distortion"],
            transitions=doc.get("transitions"),
            xhat_size=doc.get("xhat_size"),
            si_channel=doc.get("si_channel"),
        )
    except KeyError as exc:
        raise SpecError(exc.args[0], "missing required key") from None
    if doc.get("si_channel") is not None:
        kwargs["zw_size"] = doc.get("zw_size", 1)
        kwargs["w_size"] = doc.get("w_size")
    elif doc.get("zw_size") or doc.get("w_size"):
        raise SpecError("si_channel", "zw_size/w_size given without si_channel")
    return make_spec(**kwargs)


def spec_to_dict(spec: ProblemSpec) -> dict:
    doc = {name: getattr(spec, name) for name in _SIZE_KEYS}
    doc.update(
        horizon=spec.horizon,
        **{"lambda": spec.lam},
        initial=spec.initial_dist.tolist(),
        transitions=[t.tolist() for t in spec.transitions],
        distortion=[d.tolist() for d in spec.distortion],
    )
    if spec.si_channel is not None:
        doc["si_channel"] = spec.si_channel.tolist()
    return doc


def load_spec(path) -> ProblemSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError("json", str(exc)) from None
    if not isinstance(doc, dict):
        raise SpecError("json", "top level must be an object")
    return spec_from_dict(doc)


def save_spec(spec: ProblemSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n")


def hamming(x_size: int, xhat_size: Optional[int] = None) -> np.ndarray:
    """Hamming distortion table; reproduction symbols beyond X always cost 1."""
    xhat_size = x_size if xhat_size is None else xhat_size
    return (np.arange(x_size)[:, None] != np.arange(xhat_size)[None, :]).astype(float)


def source_marginals(spec: ProblemSpec) -> Sequence[np.ndarray]:
    """Marginal law of X_t for every stage."""
    out = [spec.initial_dist.copy()]
    for s in range(spec.horizon - 1):
        out.append(out[-1] @ spec.kernel(s))
    return out
