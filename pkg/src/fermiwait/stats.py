"""Integrals and moments over the waiting-time densities.

All improper time integrals are reduced to certified finite ones: every
density carries the uniform decay envelope rate * e^{-Gamma t} * (bounded
matrix factor), so a cutoff T with envelope mass below tol/10 turns
integral truncation into a quantified error term.  The adaptive quadrature
on [0, T] is QUADPACK's interval-subdivision scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .model import (
    CHANNEL_ORDER,
    Channel,
    GaussianState,
    SingleParticleSet,
    channels_from_single_particle,
)
from .wtd import wtd_density, wtd_density_matrix

DEFAULT_TOL = 1e-8

#: Channel probabilities below this are treated as "this sequence never
#: happens" and conditional moments are undefined.
EPS_PROBABILITY = 1e-12


class QuadratureError(Exception):
    """Adaptive refinement failed or the tail cannot be bounded."""


@dataclass(frozen=True)
class QuadratureResult:
    """Integral value with error and truncation accounting."""

    value: float
    abs_error_estimate: float
    evaluations: int
    truncation_tail_bound: float
    t_cut: float


@dataclass(frozen=True)
class ChannelStats:
    """Channel-resolved summary tables, indexed by CHANNEL_ORDER.

    ``p_kq[a, b]`` is the probability that a click in channel
    CHANNEL_ORDER[b] is followed by one in CHANNEL_ORDER[a]; ``mean`` and
    ``variance`` are the conditional waiting-time moments of that pair
    (NaN where the pair has vanishing probability); ``p_q`` are the
    steady-state relative click frequencies.
    """

    p_kq: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    p_q: np.ndarray
    order: tuple[str, ...] = CHANNEL_ORDER


def integrate_semiinfinite(
    f,
    tol: float = DEFAULT_TOL,
    *,
    decay_rate: float,
    amplitude: float = 1.0,
    poly_degree: int = 0,
    t_cut: float | None = None,
    limit: int = 400,
) -> QuadratureResult:
    """Integrate f over [0, inf) given an exponential tail envelope.

    ``decay_rate`` is the guaranteed exponential rate of f's tail and
    ``amplitude`` an a-priori scale of its prefactor, so the initial
    cutoff satisfies amplitude * e^{-rate * T} / rate < tol / 10.  After
    integrating, the tail bound is re-estimated from f at the cutoff
    (assuming the envelope, with a polynomial correction of degree
    ``poly_degree`` for moment integrands) and the cutoff is extended
    until the bound drops below tol / 10.  Passing ``t_cut`` pins the
    cutoff, bypassing the extension loop (useful to demonstrate that the
    audit catches truncation).
    """
    if decay_rate <= 0.0:
        raise QuadratureError(
            "cannot bound the tail: the system has no dissipative decay scale "
            "(total injection rate is zero)"
        )
    fixed_cut = t_cut is not None
    if t_cut is None:
        amp = max(amplitude, tol)
        t_cut = np.log(10.0 * amp / (tol * decay_rate)) / decay_rate
        t_cut = max(t_cut, (poly_degree + 2.0) / decay_rate)
    if t_cut <= 0.0:
        raise ValueError("t_cut must be positive")

    for _ in range(8):
        out = quad(f, 0.0, t_cut, epsabs=0.5 * tol, epsrel=1e-10, limit=limit, full_output=True)
        if len(out) > 3:
            raise QuadratureError(f"adaptive refinement did not converge: {out[3]}")
        value, abs_err, info = out[0], out[1], out[2]
        evals = int(info["neval"])

        edge = max(float(f(t_cut)), 0.0)
        slack = decay_rate * t_cut
        if slack <= poly_degree + 1:
            tail = np.inf
        else:
            tail = (edge / decay_rate) / (1.0 - poly_degree / slack)
        if fixed_cut or tail <= tol / 10.0:
            return QuadratureResult(value, abs_err, evals, tail, t_cut)
        t_cut *= 1.6
    raise QuadratureError(
        f"tail bound {tail:.3e} still above {tol / 10:.1e} after extending the cutoff"
    )


def _max_rate(sp: SingleParticleSet) -> float:
    return max(c.rate for c in channels_from_single_particle(sp).values())


def channel_probability(
    k: Channel,
    q: Channel,
    state: GaussianState,
    sp: SingleParticleSet,
    tol: float = DEFAULT_TOL,
) -> float:
    """Probability that a click in q is followed by one in k, any time later."""
    res = integrate_semiinfinite(
        lambda t: wtd_density(t, k, q, state, sp),
        tol,
        decay_rate=sp.gamma_total,
        amplitude=max(k.rate, tol),
    )
    if res.value < -tol or res.value > 1.0 + max(tol, 1e-6):
        raise QuadratureError(
            f"p({k.label}|{q.label}) = {res.value} outside [0, 1]"
        )
    return min(max(res.value, 0.0), 1.0)


def conditional_moments(
    k: Channel,
    q: Channel,
    state: GaussianState,
    sp: SingleParticleSet,
    tol: float = DEFAULT_TOL,
    eps_p: float = EPS_PROBABILITY,
) -> tuple[float, float]:
    """Mean and variance of the waiting time given the click sequence q -> k."""
    p = channel_probability(k, q, state, sp, tol)
    if p <= eps_p:
        raise ValueError(
            f"sequence {q.label} -> {k.label} has probability {p:.3e}; "
            "conditional law undefined"
        )
    amp = max(k.rate, tol)
    m1 = integrate_semiinfinite(
        lambda t: t * wtd_density(t, k, q, state, sp),
        tol,
        decay_rate=sp.gamma_total,
        amplitude=amp,
        poly_degree=1,
    ).value
    m2 = integrate_semiinfinite(
        lambda t: t * t * wtd_density(t, k, q, state, sp),
        tol,
        decay_rate=sp.gamma_total,
        amplitude=amp,
        poly_degree=2,
    ).value
    mean = m1 / p
    var = m2 / p - mean**2
    if var < -max(tol, 1e-6) * max(mean**2, 1.0):
        raise QuadratureError(f"variance {var:.3e} is negative beyond tolerance")
    return mean, max(var, 0.0)


def jump_frequencies(state: GaussianState, sp: SingleParticleSet) -> np.ndarray:
    """Relative click frequencies p(q) in CHANNEL_ORDER, normalized to 1.

    Each raw weight is the jump expectation: rate times the occupation
    (extraction) or hole (injection) at the attached site.
    """
    ch = channels_from_single_particle(sp)
    occ = np.real(np.diagonal(state.C))
    raw = np.empty(4)
    for b, label in enumerate(CHANNEL_ORDER):
        c = ch[label]
        n = occ[c.site_index]
        raw[b] = c.rate * (n if c.sign == "-" else 1.0 - n)
    total = raw.sum()
    if total <= 0.0:
        raise ValueError("no channel has a nonzero click frequency")
    return raw / total


def natd(t: float, state: GaussianState, sp: SingleParticleSet) -> float:
    """Net activity time density: waiting time between any two clicks.

    Defined as the click-frequency mixture of all sixteen channel-resolved
    densities; only meaningful in the steady state, where the frequencies
    are stationary.
    """
    if state.kind != "steady":
        raise ValueError("net activity distribution is defined for the steady state")
    p_q = jump_frequencies(state, sp)
    m = wtd_density_matrix(t, state, sp)
    return float(m.sum(axis=0) @ p_q)


def natd_moments(
    state: GaussianState, sp: SingleParticleSet, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """Mean and variance of the time between consecutive clicks (steady state)."""
    if state.kind != "steady":
        raise ValueError("net activity distribution is defined for the steady state")
    amp = max(_max_rate(sp), tol)
    m1 = integrate_semiinfinite(
        lambda t: t * natd(t, state, sp),
        tol,
        decay_rate=sp.gamma_total,
        amplitude=amp,
        poly_degree=1,
    ).value
    m2 = integrate_semiinfinite(
        lambda t: t * t * natd(t, state, sp),
        tol,
        decay_rate=sp.gamma_total,
        amplitude=amp,
        poly_degree=2,
    ).value
    return m1, max(m2 - m1**2, 0.0)


def normalization_audit(
    q: Channel,
    state: GaussianState,
    sp: SingleParticleSet,
    tol: float = DEFAULT_TOL,
    t_cut: float | None = None,
) -> float:
    """Total probability sum_k p(k|q); should be 1 for any admissible q.

    The returned value is the diagnostic: a deficit beyond quadrature
    tolerance means lost tail mass or a broken density.  ``t_cut``
    deliberately truncates the integral (the audit then reports < 1).
    """
    occ = float(np.real(state.C[q.site_index, q.site_index]))
    weight = occ if q.sign == "-" else 1.0 - occ
    if q.rate * weight <= 0.0 and state.kind != "vacuum":
        raise ValueError(f"channel {q.label} never clicks; audit undefined")
    if state.kind == "vacuum" and q.sign == "-":
        raise ValueError("extraction from the vacuum never clicks; audit undefined")
    col = CHANNEL_ORDER.index(q.label)

    def total_density(t: float) -> float:
        return float(wtd_density_matrix(t, state, sp)[:, col].sum())

    res = integrate_semiinfinite(
        total_density,
        tol,
        decay_rate=sp.gamma_total,
        amplitude=max(4.0 * _max_rate(sp), tol),
        t_cut=t_cut,
    )
    return res.value


def channel_stats(
    state: GaussianState,
    sp: SingleParticleSet,
    tol: float = DEFAULT_TOL,
) -> ChannelStats:
    """Full 4x4 tables of channel probabilities and conditional moments.

    Columns for channels that never click from this state are NaN, as are
    moment entries of pairs with probability below EPS_PROBABILITY.
    """
    ch = channels_from_single_particle(sp)
    occ = np.real(np.diagonal(state.C))
    p_kq = np.full((4, 4), np.nan)
    mean = np.full((4, 4), np.nan)
    var = np.full((4, 4), np.nan)
    for b, ql in enumerate(CHANNEL_ORDER):
        cq = ch[ql]
        n = occ[cq.site_index]
        weight = n if cq.sign == "-" else 1.0 - n
        if cq.rate * weight <= EPS_PROBABILITY or (state.kind == "vacuum" and cq.sign == "-"):
            continue
        for a, kl in enumerate(CHANNEL_ORDER):
            p_kq[a, b] = channel_probability(ch[kl], cq, state, sp, tol)
            if p_kq[a, b] > EPS_PROBABILITY:
                mean[a, b], var[a, b] = conditional_moments(ch[kl], cq, state, sp, tol)
    p_q = jump_frequencies(state, sp)
    return ChannelStats(p_kq=p_kq, mean=mean, variance=var, p_q=p_q)
