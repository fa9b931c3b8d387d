"""Brute-force many-body reference in the full 2^L Fock space.

Fermion operators are realized by a Jordan-Wigner chain of Pauli matrices
with site 1 as the leftmost tensor factor; every module shares this
ordering.  Density matrices are vectorized row-major, so a sandwich
A rho B becomes kron(A, B.T) acting on the flattened state.

Everything here scales as 4^L (superoperators) and exists to verify the
L x L closed forms at small L, not to be fast.  The hard cap is L <= 4
(superoperator dimension 256); L = 5 is allowed behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .linalg import expm
from .model import ChainSpec, Channel, CHANNEL_ORDER, channels
from . import tracedet

ORACLE_MAX_SITES = 4
ANTICOMM_TOL = 1e-13

_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # <0|c|1> = 1


def _check_size(L: int, allow_large: bool):
    cap = ORACLE_MAX_SITES + 1 if allow_large else ORACLE_MAX_SITES
    if not 1 <= L <= cap:
        raise ValueError(
            f"Fock oracle supports 1 <= L <= {cap} "
            f"(got L={L}; pass allow_large=True for L={ORACLE_MAX_SITES + 1})"
        )


def build_fermions(L: int, allow_large: bool = False) -> list[np.ndarray]:
    """Annihilation operators c_1..c_L as 2^L matrices (Jordan-Wigner).

    c_i = Z x ... x Z x s x I x ... x I with the lowering matrix s at slot
    i and site 1 leftmost.  Canonical anticommutation is verified at
    construction.
    """
    _check_size(L, allow_large)
    ops = []
    for i in range(L):
        mats = [_PAULI_Z] * i + [_LOWER] + [np.eye(2, dtype=complex)] * (L - i - 1)
        full = mats[0]
        for m in mats[1:]:
            full = np.kron(full, m)
        ops.append(full)

    dim = 2**L
    eye = np.eye(dim)
    for a in range(L):
        for b in range(L):
            acc = ops[a] @ ops[b].conj().T + ops[b].conj().T @ ops[a]
            target = eye if a == b else 0.0
            if np.max(np.abs(acc - target)) > ANTICOMM_TOL:
                raise AssertionError(f"anticommutator {{c_{a}, c_{b}^dag}} violated")
            acc2 = ops[a] @ ops[b] + ops[b] @ ops[a]
            if np.max(np.abs(acc2)) > ANTICOMM_TOL:
                raise AssertionError(f"anticommutator {{c_{a}, c_{b}}} violated")
    return ops


def quadratic_form_operator(x, c_ops: list[np.ndarray]) -> np.ndarray:
    """Many-body operator sum_ij x_ij c_i^dag c_j."""
    x = np.asarray(x, dtype=complex)
    L = len(c_ops)
    if x.shape != (L, L):
        raise ValueError(f"coefficient matrix must be {L}x{L}, got {x.shape}")
    dim = c_ops[0].shape[0]
    op = np.zeros((dim, dim), dtype=complex)
    for i in range(L):
        for j in range(L):
            if x[i, j] != 0.0:
                op += x[i, j] * (c_ops[i].conj().T @ c_ops[j])
    return op


def _spre(a) -> np.ndarray:
    return np.kron(a, np.eye(a.shape[0]))


def _spost(b) -> np.ndarray:
    return np.kron(np.eye(b.shape[0]), b.T)


def _sandwich(a, b) -> np.ndarray:
    return np.kron(a, b.T)


def _dissipator(a) -> np.ndarray:
    ada = a.conj().T @ a
    return _sandwich(a, a.conj().T) - 0.5 * (_spre(ada) + _spost(ada))


@dataclass
class LiouvillianParts:
    """Full generator, its no-click part, and the four jump superoperators."""

    full: np.ndarray
    no_click: np.ndarray
    jumps: dict[str, np.ndarray]


def build_liouvillian(spec: ChainSpec, allow_large: bool = False) -> LiouvillianParts:
    """Assemble the master-equation superoperators for a chain spec.

    The full generator, the no-click generator (built from the
    non-Hermitian effective Hamiltonian) and the four jump sandwiches are
    constructed independently; their sum rule full = no_click + sum(jumps)
    is then asserted, which cross-validates the effective-Hamiltonian
    decomposition.
    """
    _check_size(spec.L, allow_large)
    c_ops = build_fermions(spec.L, allow_large=allow_large)
    c1, cL = c_ops[0], c_ops[-1]
    ch = channels(spec)

    h_many = quadratic_form_operator(spec.h, c_ops)
    full = -1j * (_spre(h_many) - _spost(h_many))
    for op, site in ((c1, 1), (cL, spec.L)):
        gamma = spec.gamma1 if site == 1 else spec.gammaL
        f = spec.f1 if site == 1 else spec.fL
        full = full + gamma * (1.0 - f) * _dissipator(op)
        full = full + gamma * f * _dissipator(op.conj().T)

    jumps = {
        "1-": ch["1-"].rate * _sandwich(c1, c1.conj().T),
        "1+": ch["1+"].rate * _sandwich(c1.conj().T, c1),
        "L-": ch["L-"].rate * _sandwich(cL, cL.conj().T),
        "L+": ch["L+"].rate * _sandwich(cL.conj().T, cL),
    }

    h_eff = h_many - 0.5j * (
        ch["1-"].rate * (c1.conj().T @ c1)
        + ch["1+"].rate * (c1 @ c1.conj().T)
        + ch["L-"].rate * (cL.conj().T @ cL)
        + ch["L+"].rate * (cL @ cL.conj().T)
    )
    no_click = -1j * (_spre(h_eff) - np.kron(np.eye(h_eff.shape[0]), h_eff.conj()))

    recomposed = no_click + sum(jumps.values())
    scale = max(1.0, np.max(np.abs(full)))
    if np.max(np.abs(full - recomposed)) > 1e-12 * scale:
        raise AssertionError("generator decomposition full = no_click + jumps failed")
    return LiouvillianParts(full=full, no_click=no_click, jumps=jumps)


class _Propagator:
    """exp(G t) action by dense eigendecomposition, with expm fallback.

    The generator is generally non-Hermitian; if its eigenvector matrix is
    too ill-conditioned (exceptional points) or the reconstruction
    residual is poor, every application falls back to scaling-and-squaring.
    """

    def __init__(self, g: np.ndarray, cond_threshold: float = 1e10, method: str = "auto"):
        self.g = g
        self._eig = None
        if method not in ("auto", "expm"):
            raise ValueError("method must be 'auto' or 'expm'")
        if method == "expm":
            return
        w, v = np.linalg.eig(g)
        cond = np.linalg.cond(v)
        resid = np.linalg.norm(g @ v - v * w) / max(np.linalg.norm(g), 1e-300)
        if cond < cond_threshold and resid < 1e-10:
            self._eig = (w, v, np.linalg.inv(v))

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        if self._eig is None:
            return expm(self.g * t) @ vec
        w, v, vinv = self._eig
        return v @ (np.exp(w * t) * (vinv @ vec))


def _as_label(k) -> str:
    label = k.label if isinstance(k, Channel) else str(k)
    if label not in CHANNEL_ORDER:
        raise ValueError(f"unknown channel {label!r}, expected one of {CHANNEL_ORDER}")
    return label


class FockOracle:
    """Cached many-body machinery for one chain spec.

    Builds the fermion operators, the Liouvillian parts and the no-click
    propagator once; the per-call work of :meth:`wtd` is then two jump
    applications and one propagator action.
    """

    def __init__(self, spec: ChainSpec, allow_large: bool = False, method: str = "auto"):
        self.spec = spec
        self.c_ops = build_fermions(spec.L, allow_large=allow_large)
        self.parts = build_liouvillian(spec, allow_large=allow_large)
        self.propagator = _Propagator(self.parts.no_click, method=method)
        self.dim = 2**spec.L

    def _tr(self, vec: np.ndarray) -> complex:
        return complex(np.trace(vec.reshape(self.dim, self.dim)))

    def wtd(self, t: float, k, q, rho: np.ndarray) -> float:
        """Waiting-time density between a click in q (at 0) and k (at t).

        Direct evaluation: apply jump q to rho, evolve with the no-click
        generator for time t, apply jump k, take traces.
        """
        if t < 0:
            raise ValueError("time must be nonnegative")
        jk = self.parts.jumps[_as_label(k)]
        jq = self.parts.jumps[_as_label(q)]
        v = jq @ np.asarray(rho, dtype=complex).reshape(-1)
        denom = self._tr(v)
        if abs(denom) < 1e-14:
            raise ValueError(
                f"jump {_as_label(q)} is impossible from this state (tr J_q rho = 0)"
            )
        num = self._tr(jk @ self.propagator.apply(t, v))
        val = num / denom
        if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
            raise AssertionError(f"waiting-time density has imaginary part {val.imag:.3e}")
        return float(val.real)

    def steady_state(self) -> np.ndarray:
        """Unique trace-1 fixed point of the full generator, from its null space."""
        u, s, vh = np.linalg.svd(self.parts.full)
        if s[-2] <= 1e-10:
            raise ValueError(
                f"degenerate null space: second-smallest singular value {s[-2]:.3e}"
            )
        rho = vh[-1].conj().reshape(self.dim, self.dim)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr) < 1e-12:
            raise ValueError("null vector is traceless; not a state")
        rho = rho / tr
        if np.linalg.eigvalsh(rho).min() < -1e-8:
            raise ValueError("steady-state candidate is not positive semidefinite")
        return rho

    def covariance(self, rho: np.ndarray) -> np.ndarray:
        """Two-point matrix C_ij = <c_j^dag c_i> of a density matrix."""
        L = self.spec.L
        c = np.empty((L, L), dtype=complex)
        for i in range(L):
            for j in range(L):
                c[i, j] = np.trace(rho @ self.c_ops[j].conj().T @ self.c_ops[i])
        return c

    def gaussian_density(self, cov: np.ndarray) -> np.ndarray:
        """Many-body density matrix of the Gaussian state with covariance cov.

        Diagonalizes cov into independent normal modes and takes the
        product of per-mode mixtures; occupations of exactly 0 or 1 give
        exact projectors, so the vacuum needs no regularization here.
        """
        cov = np.asarray(cov, dtype=complex)
        occ, u = np.linalg.eigh(cov)
        if occ.min() < -1e-10 or occ.max() > 1.0 + 1e-10:
            raise ValueError("covariance eigenvalues must lie in [0, 1]")
        occ = np.clip(occ.real, 0.0, 1.0)
        rho = np.eye(self.dim, dtype=complex)
        for a in range(len(occ)):
            d_a = sum(u[i, a].conj() * self.c_ops[i] for i in range(self.spec.L))
            n_a = d_a.conj().T @ d_a
            rho = rho @ ((1.0 - occ[a]) * np.eye(self.dim) + (2.0 * occ[a] - 1.0) * n_a)
        return rho

    def vacuum_density(self) -> np.ndarray:
        return self.gaussian_density(np.zeros((self.spec.L, self.spec.L)))


def oracle_wtd(t: float, k, q, rho: np.ndarray, spec: ChainSpec) -> float:
    return FockOracle(spec).wtd(t, k, q, rho)


def oracle_steady_state(spec: ChainSpec) -> np.ndarray:
    return FockOracle(spec).steady_state()


def gaussian_density(cov: np.ndarray, allow_large: bool = False) -> np.ndarray:
    cov = np.asarray(cov, dtype=complex)
    L = cov.shape[0]
    _check_size(L, allow_large)
    c_ops = build_fermions(L, allow_large=allow_large)
    occ, u = np.linalg.eigh(cov)
    if occ.min() < -1e-10 or occ.max() > 1.0 + 1e-10:
        raise ValueError("covariance eigenvalues must lie in [0, 1]")
    occ = np.clip(occ.real, 0.0, 1.0)
    dim = 2**L
    rho = np.eye(dim, dtype=complex)
    for a in range(L):
        d_a = sum(u[i, a].conj() * c_ops[i] for i in range(L))
        n_a = d_a.conj().T @ d_a
        rho = rho @ ((1.0 - occ[a]) * np.eye(dim) + (2.0 * occ[a] - 1.0) * n_a)
    return rho


# ----------------------------------------------------------------------
# Randomized verification of the trace-determinant formula family.
# ----------------------------------------------------------------------


@dataclass
class VerificationEntry:
    name: str
    draws: int
    max_deviation: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.threshold)


@dataclass
class VerificationReport:
    seed: int
    entries: list[VerificationEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_text(self) -> str:
        lines = [
            f"{'identity':<28} {'draws':>5} {'max deviation':>15} {'threshold':>10} {'status':>7}",
            "-" * 70,
        ]
        for e in self.entries:
            lines.append(
                f"{e.name:<28} {e.draws:>5} {e.max_deviation:>15.3e} "
                f"{e.threshold:>10.0e} {'pass' if e.passed else 'FAIL':>7}"
            )
        lines.append("-" * 70)
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'} (seed {self.seed})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "entries": [
                {
                    "name": e.name,
                    "draws": e.draws,
                    "max_deviation": e.max_deviation,
                    "threshold": e.threshold,
                    "passed": e.passed,
                }
                for e in self.entries
            ],
        }


def _random_coeff(rng, L: int) -> np.ndarray:
    """Complex matrix with entries of magnitude <= 1."""
    return (rng.uniform(-1, 1, (L, L)) + 1j * rng.uniform(-1, 1, (L, L))) / np.sqrt(2)


def _rel_dev(lhs: complex, rhs: complex) -> float:
    scale = max(abs(lhs), abs(rhs))
    if scale < 1e-10:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / scale


_TWO_INSERT_PATTERNS = {
    # name -> (dagger pattern of outer pair, dagger pattern of inner pair)
    "adjacent": None,
    "split_mp": ("dag_first", "dag_first"),
    "split_pp": ("plain_first", "dag_first"),
    "split_mm": ("dag_first", "plain_first"),
    "split_pm": ("plain_first", "plain_first"),
}


def _fock_two_insert(kind, idx, exps, c_ops):
    """Many-body left-hand side of a two-insertion trace."""
    i, ip, j, jp = idx
    cd = [op.conj().T for op in c_ops]
    ex, ey, ez = exps
    if kind == "adjacent":
        op = cd[i] @ c_ops[ip] @ ex @ cd[j] @ c_ops[jp] @ ey @ ez
    elif kind == "split_mp":
        op = cd[i] @ c_ops[ip] @ ex @ cd[j] @ ey @ c_ops[jp] @ ez
    elif kind == "split_pp":
        op = c_ops[i] @ cd[ip] @ ex @ cd[j] @ ey @ c_ops[jp] @ ez
    elif kind == "split_mm":
        op = cd[i] @ c_ops[ip] @ ex @ c_ops[j] @ ey @ cd[jp] @ ez
    elif kind == "split_pm":
        op = c_ops[i] @ cd[ip] @ ex @ c_ops[j] @ ey @ cd[jp] @ ez
    else:
        raise ValueError(kind)
    return complex(np.trace(op))


def verify_tracedet(
    seed: int = 0,
    draws: int = 20,
    sizes: tuple[int, ...] = (2, 3),
    threshold: float = 1e-9,
) -> VerificationReport:
    """Randomized check of every trace-determinant identity against Fock space.

    For each identity and each draw: random complex coefficient matrices
    with entries of magnitude <= 1 and random insertion indices; the
    many-body trace (2^L space) is compared with the single-particle
    formula (L x L space).  Also re-derives the one-insertion trace
    through the finite-alpha factorization and checks the conjugation,
    Sylvester and Sherman-Morrison lemmas the derivations rest on.
    """
    rng = np.random.default_rng(seed)
    report = VerificationReport(seed=seed)

    dev_bss: dict[int, float] = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
    dev_one = 0.0
    dev_two = {kind: 0.0 for kind in tracedet.TWO_INSERT_KINDS}
    dev_alpha = 0.0
    dev_conj = 0.0
    dev_sylvester = 0.0
    dev_sherman = 0.0
    alphas = (0.1, 1.0, 10.0)

    for L in sizes:
        c_ops = build_fermions(L)
        for _ in range(draws):
            coeffs = [_random_coeff(rng, L) for _ in range(4)]
            many = [sla.expm(quadratic_form_operator(x, c_ops)) for x in coeffs]

            for n in (1, 2, 3, 4):
                chain = tracedet.QuadraticFormChain(coeffs[:n])
                lhs = complex(np.trace(np.linalg.multi_dot(many[:n]) if n > 1 else many[0]))
                dev_bss[n] = max(dev_bss[n], _rel_dev(lhs, tracedet.bss_trace(chain).value))

            chain3 = tracedet.QuadraticFormChain(coeffs[:3])
            exps3 = many[:3]
            i, ip, j, jp = rng.integers(0, L, size=4)
            lhs = complex(np.trace(
                c_ops[i].conj().T @ c_ops[ip] @ exps3[0] @ exps3[1] @ exps3[2]
            ))
            rhs = tracedet.trace_one_insert(i, ip, chain3)
            dev_one = max(dev_one, _rel_dev(lhs, rhs))

            for kind in tracedet.TWO_INSERT_KINDS:
                idx = tuple(rng.integers(0, L, size=4))
                lhs = _fock_two_insert(kind, idx, exps3, c_ops)
                rhs = tracedet.trace_two_insert_chain(kind, idx, chain3)
                dev_two[kind] = max(dev_two[kind], _rel_dev(lhs, rhs))

            d = int(rng.integers(0, L))
            base = tracedet.trace_one_insert(d, d, chain3)
            for alpha in alphas:
                via_alpha = tracedet.trace_one_insert_alpha_route(d, chain3, alpha)
                dev_alpha = max(dev_alpha, _rel_dev(base, via_alpha))

            dev_conj = max(dev_conj, tracedet.conjugation_residual(chain3))

            a = _random_coeff(rng, L) + 2.0 * np.eye(L)
            psi = rng.standard_normal(L) + 1j * rng.standard_normal(L)
            phi = rng.standard_normal(L) + 1j * rng.standard_normal(L)
            upd = a + np.outer(psi, phi)
            ainv = np.linalg.inv(a)
            syl = np.linalg.det(a) * (1.0 + phi @ ainv @ psi)
            dev_sylvester = max(dev_sylvester, _rel_dev(np.linalg.det(upd), syl))
            sm = ainv - np.outer(ainv @ psi, phi @ ainv) / (1.0 + phi @ ainv @ psi)
            dev_sherman = max(
                dev_sherman, float(np.max(np.abs(np.linalg.inv(upd) - sm)))
            )

    total = draws * len(sizes)
    for n in (1, 2, 3, 4):
        report.entries.append(
            VerificationEntry(f"bare_trace_{n}_factors", total, dev_bss[n], threshold)
        )
    report.entries.append(VerificationEntry("one_insertion", total, dev_one, threshold))
    for kind in tracedet.TWO_INSERT_KINDS:
        report.entries.append(
            VerificationEntry(f"two_insertion_{kind}", total, dev_two[kind], threshold)
        )
    report.entries.append(
        VerificationEntry("alpha_independence", total * len(alphas), dev_alpha, threshold)
    )
    report.entries.append(
        VerificationEntry("conjugation_identity", total, dev_conj, 1e-10)
    )
    report.entries.append(
        VerificationEntry("sylvester_lemma", total, dev_sylvester, 1e-10)
    )
    report.entries.append(
        VerificationEntry("sherman_morrison_lemma", total, dev_sherman, 1e-10)
    )
    return report
