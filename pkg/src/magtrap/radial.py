"""Rayleigh-Ritz diagonalization of the radial problem, sector by sector.

In the angular momentum sector m the radial Hamiltonian (energies in units
of hbar*omega_t) is

    h = (1/2) [ -d^2/drho^2 + V(rho) ]
    V(rho) = -m nu + a^2 rho^2 + (m^2 - 1/4)/rho^2 + 2b/rho,  a^2 = 1 + nu^2/4

It is diagonalized in the non-orthogonal radial Gaussian basis

    u_k(rho) = rho^(1/2 + |m| + k) exp(-alpha rho^2),   k = 0 .. K-1

whose matrix elements all reduce to half-line Gaussian moments

    M(p; beta) = int_0^inf rho^p exp(-beta rho^2) drho
               = Gamma((p+1)/2) / (2 beta^((p+1)/2)),   beta = 2 alpha.

Moments are evaluated in log-Gamma form and exponentiated entry by entry so
that large K + |m| does not overflow intermediate factorials.  The kinetic
term is combined with the centrifugal one before integration: acting on u_k,

    [-d^2/drho^2 + (m^2 - 1/4)/rho^2] u_k =
        (m^2 - (|m|+k)^2) rho^(s_k - 2) u_k / rho^(s_k)
        + 2 alpha (2 s_k + 1) u_k - 4 alpha^2 rho^2 u_k

with s_k = 1/2 + |m| + k.  The divergent rho^(-2) moments cancel exactly in
this combination (the k = 0 coefficient vanishes), which is what makes the
basis usable at the critical m = 0 coupling.

The generalized problem H c = E S c is reduced with a Cholesky factorization
S = L L^T and solved with a dense symmetric eigensolver; eigenvectors are
returned S-orthonormal.  The overlap matrix of this basis is severely
ill-conditioned (condition number growing roughly like 10^(1.2 K), losing
double-precision positive definiteness near K = 14), so the factorization
and the triangular transforms run in software extended precision sized to
the basis, while the reduced eigenproblem itself is solved in double
precision in inverted form B = L^T H^{-1} L: the eigenvalues of B are the
reciprocal energies, B's condition number is only E_max/E_0 of the
projected spectrum, and the bottom of the spectrum therefore keeps full
relative accuracy.  H is positive definite here (every sector energy is
positive for b >= 0 since a > nu/2), which is what makes the inverted form
available.  A factorization that fails even at the extended working
precision is reported as a basis conditioning error naming the offending K.
"""

from __future__ import annotations

import functools
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp
from scipy import linalg as sla
from scipy.special import gammaln

from .params import TrapParams

__all__ = [
    "RadialBasis",
    "RadialEigenSolution",
    "GroundStateRecord",
    "BasisConditioningError",
    "BracketingError",
    "overlap_and_hamiltonian_matrices",
    "solve_sector",
    "crude_variational_energy",
    "ground_state_scan",
    "find_crossing",
    "spectrum_sweep",
]

DEFAULT_BASIS_SIZE = 30
DEFAULT_M_RANGE = (-3, 6)

# ground energy movement under K -> K + 10 that triggers a convergence warning
_SENTINEL_SHIFT = 1e-7

# decimal digits carried through the Cholesky reduction: enough for the
# ~10^(1.2 K) overlap condition number plus a double-precision result, capped
# so that absurd basis sizes fail loudly instead of running forever
_DPS_CAP = 100

# the extended-precision library keeps its working precision in mutable
# process-global state, so fresh pencil solves must not overlap in time
_MP_LOCK = threading.Lock()


def _working_dps(size: int) -> int:
    return min(_DPS_CAP, max(50, int(1.6 * size) + 20))


class BasisConditioningError(RuntimeError):
    """Raised when the sector pencil cannot be factorized.

    At the extended working precision this only happens once the basis size
    exhausts the solver's precision budget (K a bit above 90 with the
    default cap); a failing Cholesky of either pencil matrix is reported the
    same way, since both matrices live in the same degenerating basis.
    """

    def __init__(self, size: int, m: int):
        super().__init__(
            f"overlap matrix lost positive definiteness at basis size "
            f"K={size} (sector m={m}); the monomial Gaussian basis is too "
            f"ill-conditioned at this size, reduce K")
        self.size = size
        self.m = m


class BracketingError(ValueError):
    """Raised when a requested level crossing does not exist in a bracket."""


@dataclass(frozen=True)
class RadialBasis:
    """Monomial radial Gaussians for one angular momentum sector.

    Functions are u_k(rho) = rho^(1/2 + |m| + k) exp(-alpha rho^2) for
    k = 0 .. size-1, unnormalized.  alpha = 1/2 is the exact width of the
    nu = 0, b = 0 ground state; pass alpha = gauss_width/2 to match the
    b = 0 state at finite nu.
    """

    m: int
    size: int
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("basis size must be at least 1")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive and finite")

    def powers(self) -> np.ndarray:
        """Exponents s_k = 1/2 + |m| + k of the basis monomials."""
        return 0.5 + abs(self.m) + np.arange(self.size, dtype=float)

    def value_matrix(self, rho: np.ndarray) -> np.ndarray:
        """Basis values u_k(rho_i), shape (len(rho), size)."""
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise ValueError("rho must be strictly positive")
        s = self.powers()
        log_u = np.outer(np.log(rho), s) - self.alpha * (rho ** 2)[:, None]
        return np.exp(log_u)


def _log_moment(p, beta: float):
    """log of M(p; beta) = int_0^inf rho^p exp(-beta rho^2) drho, p > -1."""
    p = np.asarray(p, dtype=float)
    return gammaln(0.5 * (p + 1.0)) - 0.5 * (p + 1.0) * math.log(beta) - math.log(2.0)


def overlap_and_hamiltonian_matrices(basis: RadialBasis, tp: TrapParams):
    """Assemble the raw overlap and Hamiltonian matrices (S, H).

    Entries refer to the unnormalized basis functions of `basis`; H is
    symmetrized to (H + H^T)/2 to remove the last-bit asymmetry of the
    one-sided kinetic formula.
    """
    m = basis.m
    alpha = basis.alpha
    beta = 2.0 * alpha
    s = basis.powers()
    k_idx = np.arange(basis.size, dtype=float)
    a2 = 1.0 + 0.25 * tp.nu * tp.nu

    p = s[:, None] + s[None, :]
    S = np.exp(_log_moment(p, beta))
    M_plus2 = np.exp(_log_moment(p + 2.0, beta))
    M_minus1 = np.exp(_log_moment(p - 1.0, beta))

    # combined kinetic + centrifugal coefficient of the rho^(p-2) moment;
    # it vanishes identically for k = 0, exactly where p - 2 hits -1
    c_sing = m * m - (abs(m) + k_idx) ** 2
    safe = p - 2.0 > -1.0 + 1e-12
    M_minus2 = np.where(safe, np.exp(_log_moment(np.where(safe, p - 2.0, 0.0), beta)), 0.0)

    H = 0.5 * (
        c_sing[None, :] * M_minus2
        + (2.0 * alpha * (2.0 * s[None, :] + 1.0)) * S
        + (a2 - 4.0 * alpha * alpha) * M_plus2
        - m * tp.nu * S
        + 2.0 * tp.b * M_minus1
    )
    H = 0.5 * (H + H.T)
    return S, H


def _equilibrated_pencil_mp(basis: RadialBasis, tp: TrapParams):
    """(Se, He, d) as object arrays of mpf at the active working precision.

    Same matrix elements as overlap_and_hamiltonian_matrices, evaluated
    exactly at extended precision and symmetrically scaled to unit overlap
    diagonal; d is the scaling vector, raw coefficients are d * equilibrated
    ones.  All moments are integer translates of one Gamma ladder, so only
    O(K) transcendental evaluations are needed.
    """
    K = basis.size
    m = basis.m
    alpha = mp.mpf(basis.alpha)
    beta = 2 * alpha
    nu = mp.mpf(tp.nu)
    a2 = 1 + nu * nu / 4
    p0 = 1 + 2 * abs(m)  # s_j + s_k = p0 + j + k

    # mom[t + 2] = M(p0 + t; beta) for t = -2 .. 2K; the only divergent case
    # (t = -2 at m = 0) is stored as 0 and killed by the vanishing k = 0
    # kinetic coefficient below
    mom = np.empty(2 * K + 3, dtype=object)
    for t in range(-2, 2 * K + 1):
        p = p0 + t
        if p <= -1:
            mom[t + 2] = mp.mpf(0)
        else:
            q = mp.mpf(p + 1) / 2
            mom[t + 2] = mp.gamma(q) / (2 * beta ** q)

    jk = np.add.outer(np.arange(K), np.arange(K))
    S = mom[jk + 2]
    M_plus2 = mom[jk + 4]
    M_minus1 = mom[jk + 1]
    M_minus2 = mom[jk]

    k_idx = np.arange(K)
    c_sing = np.array([m * m - (abs(m) + k) ** 2 for k in k_idx], dtype=object)
    s_k = np.array([mp.mpf(1) / 2 + abs(m) + k for k in k_idx], dtype=object)
    kin = (s_k * 2 + 1) * (2 * alpha)

    H = (M_minus2 * c_sing[None, :] + S * kin[None, :]
         + M_plus2 * (a2 - 4 * alpha * alpha) - S * (m * nu)
         + M_minus1 * (2 * mp.mpf(tp.b))) / 2
    H = (H + H.T) / 2

    d = np.array([1 / mp.sqrt(S[j, j]) for j in range(K)], dtype=object)
    scale = d[:, None] * d[None, :]
    return S * scale, H * scale, d


def _cholesky_mp(A, basis: RadialBasis):
    """Lower Cholesky factor of an object-array SPD matrix.

    A nonpositive pivot means the matrix is numerically degenerate at the
    active precision and is reported as a conditioning error.
    """
    K = A.shape[0]
    L = np.zeros((K, K), dtype=object)
    for j in range(K):
        pivot = A[j, j] - (L[j, :j] @ L[j, :j] if j else 0)
        if pivot <= 0:
            raise BasisConditioningError(basis.size, basis.m)
        root = mp.sqrt(pivot)
        L[j, j] = root
        if j + 1 < K:
            below = A[j + 1:, j] - (L[j + 1:, :j] @ L[j, :j] if j else 0)
            L[j + 1:, j] = below / root
    return L


@functools.lru_cache(maxsize=1024)
def _solve_pencil(m: int, size: int, alpha: float, nu: float, b: float):
    """Energies and raw S-orthonormal coefficients of one sector.

    Cached on the full parameter tuple; callers must copy the returned
    arrays before exposing them.  The extended-precision context is
    process-global state: a concurrent workdps exit would silently drop
    the precision mid-factorization, so the whole reduction holds a lock.
    Cache hits never touch it, which is what sweep worker threads mostly
    see; only fresh solves serialize.
    """
    basis = RadialBasis(m=m, size=size, alpha=alpha)
    tp = TrapParams(nu=nu, b=b)
    with _MP_LOCK, mp.workdps(_working_dps(size)):
        Se, He, d = _equilibrated_pencil_mp(basis, tp)
        L = _cholesky_mp(Se, basis)
        R = _cholesky_mp(He, basis)

        # G = R^-1 L, so B = G^T G = L^T He^-1 L has eigenvalues 1/E with
        # condition E_max/E_0 of the projected spectrum: tame in float64
        K = size
        G = np.empty((K, K), dtype=object)
        for i in range(K):
            acc = L[i] - (R[i, :i] @ G[:i] if i else 0)
            G[i] = acc / R[i, i]
        B = G.T @ G
        Bf = np.array([[float(x) for x in row] for row in B])

        lam, Y = sla.eigh(Bf)
        lam = lam[::-1]
        Y = Y[:, ::-1]
        # safety clamp only: the projected spectrum is bounded, so lam stays
        # well above eigensolver roundoff for any K the precision cap admits
        lam = np.maximum(lam, np.finfo(float).eps * lam[0])
        energies = 1.0 / lam

        # back-transform: c_tilde = L^-T y is exactly Se-orthonormal, then
        # undo the equilibration
        X = np.empty((K, K), dtype=object)
        for i in range(K - 1, -1, -1):
            acc = Y[i] - (L[i + 1:, i] @ X[i + 1:] if i + 1 < K else 0)
            X[i] = acc / L[i, i]
        coeff = np.array([[float(x) for x in row] for row in X * d[:, None]])

    return energies, coeff


@dataclass(frozen=True)
class RadialEigenSolution:
    """Eigenpairs of one (nu, b, m) sector.

    energies        ascending, in units of hbar*omega_t
    coefficients    (K, K); column j holds the raw-basis coefficients of
                    state j, S-orthonormalized: c_i^T S c_j = delta_ij
    """

    m: int
    params: TrapParams
    basis: RadialBasis
    energies: np.ndarray
    coefficients: np.ndarray


@dataclass(frozen=True)
class GroundStateRecord:
    """Winner of a ground-state scan over m at fixed (nu, b)."""

    nu: float
    b: float
    m_star: int
    energy: float
    solution: RadialEigenSolution = field(repr=False)


def solve_sector(tp: TrapParams, m: int, size: int = DEFAULT_BASIS_SIZE,
                 alpha: float = 0.5,
                 check_convergence: bool = False) -> RadialEigenSolution:
    """Diagonalize the m sector in a basis of `size` radial Gaussians.

    The generalized problem is symmetrically equilibrated (unit overlap
    diagonal) and reduced by extended-precision Cholesky factorizations of
    both pencil matrices; the reduced problem is solved densely in inverted
    form so the low spectrum is accurate in double precision (module
    docstring).  Coefficient columns are S-orthonormal by construction, but
    high columns carry entries of order 1e10 and beyond whose orthonormality
    cannot survive rounding to float64; the low, physically converged
    columns do.  With check_convergence=True the solve is repeated at
    size + 10 and a warning is emitted if the ground energy moves by more
    than 1e-7.
    """
    energies, coeff = _solve_pencil(m, size, float(alpha), tp.nu, tp.b)
    sol = RadialEigenSolution(m=m, params=tp,
                              basis=RadialBasis(m=m, size=size, alpha=alpha),
                              energies=energies.copy(),
                              coefficients=coeff.copy())

    if check_convergence:
        try:
            bigger = solve_sector(tp, m, size=size + 10, alpha=alpha,
                                  check_convergence=False)
        except BasisConditioningError:
            warnings.warn(
                f"convergence sentinel at K={size + 10} failed to factorize "
                f"(m={m}); ground energy unverified", RuntimeWarning)
        else:
            shift = abs(bigger.energies[0] - energies[0])
            if shift > _SENTINEL_SHIFT:
                warnings.warn(
                    f"ground energy moved by {shift:.3e} between K={size} "
                    f"and K={size + 10} (m={m}, nu={tp.nu}, b={tp.b}); "
                    f"increase the basis", RuntimeWarning)
    return sol


def crude_variational_energy(tp: TrapParams, m: int) -> float:
    """Single-Gaussian variational bound for the lowest level of sector m.

    Trial function chi_m = rho^(m + 1/2) exp(-a rho^2 / 2) with the b = 0
    width a = sqrt(1 + nu^2/4), for m >= 0.  All expectation values close in
    Gamma functions:

        E = a (m + 1) - m nu / 2 + b sqrt(a) Gamma(m + 1/2) / Gamma(m + 1)

    Exact at b = 0; an upper bound everywhere (it degrades badly once b
    pushes the true state into a ring far from the origin).
    """
    if m < 0:
        raise ValueError("crude trial state is defined for m >= 0")
    a = tp.gauss_width
    coul = tp.b * math.sqrt(a) * math.exp(gammaln(m + 0.5) - gammaln(m + 1.0))
    return a * (m + 1.0) - 0.5 * m * tp.nu + coul


def ground_state_scan(tp: TrapParams,
                      m_range: tuple[int, int] = DEFAULT_M_RANGE,
                      size: int = DEFAULT_BASIS_SIZE,
                      check_convergence: bool = False) -> GroundStateRecord:
    """Find the global ground state by scanning sectors m in m_range.

    m_range must contain 0 and cover at least [-2, +4] so that the known
    crossing sequence cannot silently escape the scan window.  Exact energy
    ties are broken toward smaller |m|, then toward positive m.
    """
    lo, hi = m_range
    if lo > -2 or hi < 4 or not (lo <= 0 <= hi):
        raise ValueError(
            f"m_range {m_range} must include 0 and cover at least [-2, 4]")

    best = None
    for m in range(lo, hi + 1):
        sol = solve_sector(tp, m, size=size,
                           check_convergence=check_convergence)
        key = (sol.energies[0], abs(m), 0 if m >= 0 else 1)
        if best is None or key < best[0]:
            best = (key, m, sol)
    _, m_star, sol = best
    return GroundStateRecord(nu=tp.nu, b=tp.b, m_star=m_star,
                             energy=float(sol.energies[0]), solution=sol)


def _ground_energy(b: float, m: int, nu: float, size: int) -> float:
    return float(solve_sector(TrapParams(nu=nu, b=b), m, size=size).energies[0])


def find_crossing(tp: TrapParams, m1: int, m2: int,
                  nu_bracket: tuple[float, float],
                  size: int = DEFAULT_BASIS_SIZE,
                  tol: float = 1e-10) -> float:
    """Field ratio nu* where the sector ground energies of m1 and m2 cross.

    Bisects E(m1; nu) - E(m2; nu) on nu_bracket until the gap is below tol
    (default 1e-10).  Raises BracketingError when the difference does not
    change sign over the bracket, e.g. for b = 0 where the m = 0 / m = 1
    gap a(nu) - nu/2 stays positive at every finite nu.
    """
    lo, hi = nu_bracket
    if not (0 <= lo < hi):
        raise ValueError("need 0 <= lo < hi in nu_bracket")

    def gap(nu: float) -> float:
        return (_ground_energy(tp.b, m1, nu, size)
                - _ground_energy(tp.b, m2, nu, size))

    f_lo, f_hi = gap(lo), gap(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise BracketingError(
            f"ground energies of m={m1} and m={m2} do not cross for "
            f"nu in [{lo}, {hi}] at b={tp.b}")

    while True:
        mid = 0.5 * (lo + hi)
        f_mid = gap(mid)
        if abs(f_mid) < tol:
            return mid
        if hi - lo < 4.0 * np.finfo(float).eps * max(1.0, abs(mid)):
            # interval exhausted without closing the gap below tol
            raise BracketingError(
                f"bisection stalled at nu={mid} with residual gap {f_mid:.3e}")
        if math.copysign(1.0, f_mid) == math.copysign(1.0, f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid


def spectrum_sweep(b: float, nu_values, m_values, size: int = DEFAULT_BASIS_SIZE,
                   n_levels: int = 1, workers: int = 1):
    """Sector energies on a (nu, m) grid, as rows (nu, m, level, energy).

    Sector solves are independent; with workers > 1 they are dispatched to a
    thread pool and the result is assembled in sorted (nu, m) order either
    way, so the output ordering never depends on scheduling.
    """
    tasks = [(float(nu), int(m)) for nu in nu_values for m in m_values]

    def solve(task):
        nu, m = task
        sol = solve_sector(TrapParams(nu=nu, b=b), m, size=size)
        return task, sol.energies[:n_levels].copy()

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(solve, tasks))
    else:
        results = dict(map(solve, tasks))

    rows = []
    for task in sorted(results):
        nu, m = task
        for level, energy in enumerate(results[task]):
            rows.append((nu, m, level, float(energy)))
    return rows
