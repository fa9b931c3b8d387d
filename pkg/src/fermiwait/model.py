"""Physical model construction for a fermionic chain driven at both ends.

A chain of L sites with quadratic Hamiltonian sum_ij h_ij c_i^dag c_j is
coupled to particle baths at sites 1 and L.  Bath i injects with rate
gamma_i * f_i and extracts with rate gamma_i * (1 - f_i).  Everything the
closed-form machinery needs is encoded in three L x L matrices and one
scalar:

    W = i h + (1/2) diag(gamma_1, 0, ..., 0, gamma_L)   drift
    F = diag(gamma_1 f_1, 0, ..., 0, gamma_L f_L)       injection
    Q = W - F                                           no-click generator
    gamma_total = gamma_1 f_1 + gamma_L f_L             uniform decay rate

Gaussian states are carried by their covariance matrix C_ij = <c_j^dag c_i>;
the exponent matrix of the Gibbs form is never materialized, only its
exponentials e^{+M} = (1-C) C^-1 and e^{-M} = C (1-C)^-1, which are rational
in C.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import LogDet, expm, lyapunov_solve

HERMITICITY_TOL = 1e-12

#: Occupation eigenvalues of non-vacuum states are clipped into
#: [OCC_CLIP, 1 - OCC_CLIP] before forming (1-C)/C ratios.
OCC_CLIP = 1e-12

#: Default regularization scale for the vacuum covariance C = lambda * I.
VACUUM_LAMBDA = 1e-10


@dataclass(frozen=True)
class ChainSpec:
    """Chain Hamiltonian plus the four bath parameters.

    ``h`` must be Hermitian L x L with L >= 2 (the two baths attach to
    distinct end sites).  ``gamma1``/``gammaL`` are bath coupling rates
    (nonnegative; the steady state additionally needs both positive) and
    ``f1``/``fL`` are the bath Fermi factors in [0, 1].
    """

    h: np.ndarray
    gamma1: float
    gammaL: float
    f1: float
    fL: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"h must be a square matrix, got shape {h.shape}")
        if h.shape[0] < 2:
            raise ValueError("chain needs L >= 2 sites")
        if not np.all(np.isfinite(h)):
            raise ValueError("h contains non-finite entries")
        if np.linalg.norm(h - h.conj().T) > HERMITICITY_TOL * max(1.0, np.linalg.norm(h)):
            raise ValueError("h must be Hermitian within 1e-12")
        object.__setattr__(self, "h", h)
        for name in ("gamma1", "gammaL"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("f1", "fL"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def L(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class Channel:
    """One of the four jump channels: inject/extract at site 1 or L.

    ``sign`` is "+" for injection (dissipator on c^dag) and "-" for
    extraction (dissipator on c).  ``site_index`` is the 0-based matrix
    index of the attached site.
    """

    site: int
    sign: str
    rate: float
    site_index: int

    @property
    def label(self) -> str:
        return ("1" if self.site == 1 else "L") + self.sign

    def __str__(self) -> str:
        return self.label


#: Canonical ordering of the four channel labels used in every table.
CHANNEL_ORDER = ("1-", "1+", "L-", "L+")


def channels(spec: ChainSpec) -> dict[str, Channel]:
    """The four jump channels of a spec, keyed by label "1-", "1+", "L-", "L+"."""
    L = spec.L
    return {
        "1-": Channel(1, "-", spec.gamma1 * (1.0 - spec.f1), 0),
        "1+": Channel(1, "+", spec.gamma1 * spec.f1, 0),
        "L-": Channel(L, "-", spec.gammaL * (1.0 - spec.fL), L - 1),
        "L+": Channel(L, "+", spec.gammaL * spec.fL, L - 1),
    }


@dataclass(frozen=True)
class SingleParticleSet:
    """Derived single-particle matrices W, F, Q and the decay scalar."""

    W: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    gamma_total: float

    @property
    def L(self) -> int:
        return self.W.shape[0]


def channels_from_single_particle(sp: SingleParticleSet) -> dict[str, Channel]:
    """Recover the four jump channels from the derived matrices alone.

    The Hermitian part of W is diag(gamma_1, 0, ..., 0, gamma_L) / 2 (the
    i*h part is anti-Hermitian), and F holds the injection rates, so no
    separate chain spec is needed.
    """
    L = sp.L
    gamma1 = 2.0 * float(np.real(sp.W[0, 0]))
    gammaL = 2.0 * float(np.real(sp.W[-1, -1]))
    in1 = float(np.real(sp.F[0, 0]))
    inL = float(np.real(sp.F[-1, -1]))
    return {
        "1-": Channel(1, "-", max(gamma1 - in1, 0.0), 0),
        "1+": Channel(1, "+", in1, 0),
        "L-": Channel(L, "-", max(gammaL - inL, 0.0), L - 1),
        "L+": Channel(L, "+", inL, L - 1),
    }


@dataclass(frozen=True)
class GaussianState:
    """Gaussian fermionic state held as a covariance matrix C_ij = <c_j^dag c_i>.

    ``kind`` is "steady", "vacuum" or "custom".  Vacuum states carry the
    regularized C = lam * I for inspection, but consumers use the exact
    lam -> 0 limit formulas, never lam itself.
    """

    C: np.ndarray
    kind: str = "custom"
    lam: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("steady", "vacuum", "custom"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        c = np.asarray(self.C, dtype=complex)
        if np.linalg.norm(c - c.conj().T) > 1e-10 * max(1.0, np.linalg.norm(c)):
            raise ValueError("covariance matrix must be Hermitian")
        evals = np.linalg.eigvalsh(c)
        if evals.min() < -1e-10 or evals.max() > 1.0 + 1e-10:
            raise ValueError(
                f"covariance eigenvalues must lie in [0, 1], got range "
                f"[{evals.min():.3e}, {evals.max():.3e}]"
            )
        object.__setattr__(self, "C", c)

    @property
    def L(self) -> int:
        return self.C.shape[0]


def build_tight_binding(L: int, V: float, J: float) -> np.ndarray:
    """Tridiagonal hopping matrix: on-site energy -V, hopping -J."""
    if L < 2:
        raise ValueError("chain needs L >= 2 sites")
    h = np.zeros((L, L), dtype=complex)
    np.fill_diagonal(h, -V)
    idx = np.arange(L - 1)
    h[idx, idx + 1] = -J
    h[idx + 1, idx] = -J
    return h


def derive_single_particle(spec: ChainSpec) -> SingleParticleSet:
    """Build the drift/injection/no-click matrices from a chain spec."""
    L = spec.L
    gamma_diag = np.zeros(L)
    gamma_diag[0] = spec.gamma1
    gamma_diag[-1] = spec.gammaL
    w = 1j * spec.h + 0.5 * np.diag(gamma_diag)

    f = np.zeros((L, L), dtype=complex)
    f[0, 0] = spec.gamma1 * spec.f1
    f[-1, -1] = spec.gammaL * spec.fL

    return SingleParticleSet(
        W=w,
        F=f,
        Q=w - f,
        gamma_total=spec.gamma1 * spec.f1 + spec.gammaL * spec.fL,
    )


def steady_state(spec: ChainSpec, cond_threshold: float = 1e8) -> GaussianState:
    """Steady-state covariance: the fixed point W C + C W^dag = F."""
    if spec.gamma1 <= 0 or spec.gammaL <= 0:
        raise ValueError("steady state requires gamma1 > 0 and gammaL > 0")
    sp = derive_single_particle(spec)
    c = lyapunov_solve(sp.W, sp.F, cond_threshold=cond_threshold)
    return GaussianState(C=c, kind="steady")


def vacuum_state(L: int, lam: float = VACUUM_LAMBDA) -> GaussianState:
    """Empty-chain initial state, regularized as C = lam * I.

    Downstream consumers recognize ``kind == "vacuum"`` and dispatch to the
    analytic lam -> 0 limit formulas.
    """
    if L < 2:
        raise ValueError("chain needs L >= 2 sites")
    if not 0.0 < lam <= 1e-8:
        raise ValueError("vacuum regularization lam must lie in (0, 1e-8]")
    return GaussianState(C=lam * np.eye(L, dtype=complex), kind="vacuum", lam=lam)


def evolve_covariance(spec: ChainSpec, state: GaussianState, t: float) -> GaussianState:
    """Propagate the covariance matrix for time t under the full dynamics.

    Uses the closed form C(t) = e^{-Wt} (C0 - C_ss) e^{-W^dag t} + C_ss,
    so it needs both bath rates positive for C_ss to exist.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    sp = derive_single_particle(spec)
    css = steady_state(spec).C
    g = expm(-sp.W * t)
    c = g @ (state.C - css) @ g.conj().T + css
    return GaussianState(C=c, kind="custom")


def gaussian_exponent_factors(
    state: GaussianState, eps_occ: float = OCC_CLIP
) -> tuple[np.ndarray, np.ndarray, LogDet]:
    """Exponentials of the Gibbs exponent and the log partition function.

    Returns (e^{+M}, e^{-M}, log Z) with e^{+M} = (1-C) C^-1,
    e^{-M} = C (1-C)^-1 and Z = 1/det(1-C), all computed from the
    eigendecomposition of C.  Occupation eigenvalues are clipped into
    [eps_occ, 1 - eps_occ] with a warning; exact vacuum states must use
    their dedicated analytic path instead.
    """
    if state.kind == "vacuum":
        raise ValueError(
            "vacuum states have no finite exponent factors; "
            "use the vacuum-limit formulas instead"
        )
    occ, u = np.linalg.eigh(state.C)
    if occ.min() < -1e-10 or occ.max() > 1.0 + 1e-10:
        raise ValueError(
            f"occupation eigenvalues outside [0, 1]: range "
            f"[{occ.min():.3e}, {occ.max():.3e}]; adjust eps_occ or use the vacuum path"
        )
    clipped = np.clip(occ, eps_occ, 1.0 - eps_occ)
    if np.any(clipped != occ):
        warnings.warn(
            f"occupation eigenvalues clipped to [{eps_occ:g}, 1-{eps_occ:g}]",
            RuntimeWarning,
            stacklevel=2,
        )
    ratio = (1.0 - clipped) / clipped
    eplus = (u * ratio) @ u.conj().T
    eminus = (u * (1.0 / ratio)) @ u.conj().T
    log_z = -float(np.sum(np.log1p(-clipped)))
    return eplus, eminus, LogDet(log_z, 1.0 + 0.0j)
