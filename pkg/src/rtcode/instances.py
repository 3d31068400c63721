"""Seeded random instances and policies for experiments and tests."""

from __future__ import annotations

import numpy as np

from .model import ProblemSpec, hamming, make_spec
from .system import STOCHASTIC, TRACKING, DecoderPolicy, EncoderPolicy


def simplex(rng: np.random.Generator, shape) -> np.ndarray:
    """Rows drawn uniformly from the probability simplex (flat Dirichlet)."""
    shape = tuple(np.atleast_1d(shape))
    g = rng.exponential(size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def random_spec(
    rng: np.random.Generator,
    *,
    x_size=2,
    y_size=2,
    zy_size=2,
    horizon=3,
    lam=1.0,
    xhat_size=None,
    distortion="hamming",
    si=False,
    w_size=2,
    zw_size=2,
    memoryless=False,
) -> ProblemSpec:
    """A random Markov source with the requested alphabets.

    ``distortion`` is ``"hamming"`` or ``"random"`` (uniform entries in [0, 1)
    drawn once and shared by all stages).
    """
    xhat_size = x_size if xhat_size is None else xhat_size
    init = simplex(rng, x_size)
    if memoryless:
        trans = np.repeat(simplex(rng, x_size)[None, :], x_size, axis=0)
    else:
        trans = simplex(rng, (x_size, x_size))
    if distortion == "hamming":
        rho = hamming(x_size, xhat_size)
    else:
        rho = rng.random((x_size, xhat_size))
    channel = None
    if si:
        # keep entries away from zero so the channel stays strictly positive
        channel = 0.05 + 0.9 * simplex(rng, (x_size, w_size))
        channel /= channel.sum(axis=1, keepdims=True)
    return make_spec(
        x_size=x_size, y_size=y_size, zy_size=zy_size, xhat_size=xhat_size,
        horizon=horizon, lam=lam, initial=init,
        transitions=trans if horizon > 1 else None,
        distortion=rho, si_channel=channel,
        zw_size=zw_size if si else None, w_size=w_size if si else None,
    )


def random_decoder(rng: np.random.Generator, spec: ProblemSpec) -> DecoderPolicy:
    T = spec.horizon
    r = [rng.integers(spec.zy_size, size=(spec.y_size, spec.zy_size)) for _ in range(T)]
    if not spec.has_si:
        g = [rng.integers(spec.xhat_size, size=(spec.y_size, spec.zy_size)) for _ in range(T)]
        return DecoderPolicy(r, g)
    g = [rng.integers(spec.xhat_size, size=(spec.w_size, spec.y_size, spec.zw_size, spec.zy_size))
         for _ in range(T)]
    rw = [rng.integers(spec.zw_size, size=(spec.w_size, spec.y_size, spec.zw_size))
          for _ in range(T)]
    return DecoderPolicy(r, g, rw)


def random_tracking_encoder(rng: np.random.Generator, spec: ProblemSpec) -> EncoderPolicy:
    return EncoderPolicy(TRACKING, [rng.integers(spec.y_size, size=(spec.x_size, spec.zy_size))
                                    for _ in range(spec.horizon)])


def random_stochastic_encoder(rng: np.random.Generator, spec: ProblemSpec) -> EncoderPolicy:
    return EncoderPolicy(STOCHASTIC, [simplex(rng, (spec.x_size, spec.zy_size, spec.y_size))
                                      for _ in range(spec.horizon)])
