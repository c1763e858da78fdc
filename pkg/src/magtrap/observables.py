"""Densities, probability currents and velocities of radial eigenstates.

A sector eigenstate psi(rho, phi) = chi(rho) exp(i m phi) / sqrt(rho) is
normalized over the plane, which fixes int_0^inf chi^2 drho = 1/(2 pi).
The gauge-invariant (kinetic) current of such a state is purely azimuthal,

    J(rho) = (m / rho - nu rho / 2) |psi(rho)|^2,   |psi|^2 = chi^2 / rho,

in units sqrt(mu omega_t / hbar) * omega_t; the two terms are the canonical
circulation and the diamagnetic drag of the vector potential.  Integrating
J over the plane gives the azimuthal velocity expectation

    <v_phi> = 2 pi int_0^inf (m / rho - nu rho / 2) chi^2 drho
            = <m / rho> - (nu / 2) <rho>

in units sqrt(hbar omega_t / mu).  For m = 0 this is -(nu/2)<rho> < 0: the
drag term always wins, and jumps of the ground-state velocity along a field
sweep mark the m -> m + 1 ground-state crossings.

Integrals are done with adaptive Gauss-Kronrod quadrature on (0, rho_max]
with rho_max chosen where chi^2 falls below 1e-16; non-convergence is
raised, not silenced.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .params import TrapParams
from .radial import DEFAULT_BASIS_SIZE, DEFAULT_M_RANGE, RadialEigenSolution, solve_sector

__all__ = [
    "RadialWavefunction",
    "CurrentField",
    "DensityProfile",
    "QuadratureConvergenceError",
    "current_density",
    "current_vector_field",
    "velocity_expectation",
    "ground_velocity_sweep",
    "density_profile",
]

# target normalization of the radial factor, 1/(2 pi)
_CHI_NORM = 1.0 / (2.0 * np.pi)


class QuadratureConvergenceError(RuntimeError):
    """Raised when an observable integral fails to converge."""


def _quad(f, lo: float, hi: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = integrate.quad(f, lo, hi, limit=400,
                                    epsabs=1e-13, epsrel=1e-12)
        except IntegrationWarning as w:
            raise QuadratureConvergenceError(
                f"quadrature on ({lo}, {hi}) did not converge: {w}") from w
    return val


class RadialWavefunction:
    """Radial factor chi(rho) of one sector eigenstate, plane-normalized.

    Construct via from_solution (coefficient expansion over the solver
    basis) or from_samples (cubic spline through tabulated values, which
    must behave like rho^(|m| + 1/2) near the origin).
    """

    def __init__(self, m: int, chi, rho_max: float):
        self.m = int(m)
        self._chi = chi
        self.rho_max = float(rho_max)

    @classmethod
    def from_solution(cls, solution: RadialEigenSolution,
                      level: int = 0) -> "RadialWavefunction":
        basis = solution.basis
        # S-orthonormal eigenvector => int chi^2 = 1; rescale to 1/(2 pi)
        coeff = solution.coefficients[:, level] * np.sqrt(_CHI_NORM)

        def chi(rho):
            rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
            vals = basis.value_matrix(rho_arr) @ coeff
            return vals if np.ndim(rho) else float(vals[0])

        # outermost radius where the state still carries weight; beyond the
        # classical turning point chi decays like a Gaussian
        grid = np.linspace(0.05, 60.0, 1200)
        vals = chi(grid) ** 2
        above = np.nonzero(vals > 1e-16 * vals.max())[0]
        rho_max = grid[above[-1]] + 1.0
        return cls(solution.m, chi, rho_max)

    @classmethod
    def from_samples(cls, rho: np.ndarray, chi_values: np.ndarray,
                     m: int) -> "RadialWavefunction":
        rho = np.asarray(rho, dtype=float)
        chi_values = np.asarray(chi_values, dtype=float)
        spline = CubicSpline(rho, chi_values, extrapolate=False)

        def raw(r):
            r_arr = np.atleast_1d(np.asarray(r, dtype=float))
            out = spline(r_arr)
            out = np.where(np.isnan(out), 0.0, out)
            return out if np.ndim(r) else float(out[0])

        norm = _quad(lambda r: raw(r) ** 2, rho[0], rho[-1])
        scale = np.sqrt(_CHI_NORM / norm)

        def chi(r):
            return scale * raw(r)

        return cls(m, chi, float(rho[-1]))

    def chi(self, rho):
        """Radial factor chi(rho)."""
        return self._chi(rho)

    def density(self, rho):
        """Radial probability density 2 pi chi^2 (integrates to 1)."""
        return 2.0 * np.pi * np.asarray(self._chi(rho)) ** 2

    def psi_squared(self, rho):
        """Planar probability density |psi|^2 = chi^2 / rho."""
        rho_arr = np.asarray(rho, dtype=float)
        if np.any(rho_arr <= 0):
            raise ValueError("rho must be strictly positive")
        return np.asarray(self._chi(rho)) ** 2 / rho_arr

    def norm_check(self) -> float:
        """2 pi int chi^2 drho; equals 1 for a healthy state."""
        return 2.0 * np.pi * _quad(lambda r: self._chi(r) ** 2,
                                   0.0, self.rho_max)

    def radial_moment(self, power: int) -> float:
        """<rho^power> = 2 pi int rho^power chi^2 drho."""
        return 2.0 * np.pi * _quad(
            lambda r: r ** power * self._chi(r) ** 2, 0.0, self.rho_max)


@dataclass(frozen=True)
class CurrentField:
    """Sampled azimuthal current profile J(rho) of one eigenstate.

    The radial component vanishes identically for stationary sector states;
    J carries the unit sqrt(mu omega_t / hbar) * omega_t.
    """

    rho: np.ndarray
    J: np.ndarray
    wavefunction: RadialWavefunction = field(repr=False)
    params: TrapParams = field(repr=False)

    def plane_integral(self) -> float:
        """int J d^2rho = 2 pi int J(rho) rho drho, the velocity expectation.

        Evaluated by quadrature of the same integrand as
        velocity_expectation, to which it is equal by construction.
        """
        return velocity_expectation(self.wavefunction, self.params)


def current_density(wf: RadialWavefunction, tp: TrapParams,
                    rho_grid: np.ndarray) -> CurrentField:
    """Azimuthal current J(rho) = (m/rho - nu rho/2) chi^2 / rho on a grid.

    For m > 0 and nu > 0 the canonical and diamagnetic terms compete and J
    changes sign exactly once, at rho = sqrt(2 m / nu), independent of b.
    """
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho grid must be strictly positive")
    dens = wf.psi_squared(rho)
    J = (wf.m / rho - 0.5 * tp.nu * rho) * dens
    return CurrentField(rho=rho, J=J, wavefunction=wf, params=tp)


def current_vector_field(wf: RadialWavefunction, tp: TrapParams,
                         half_extent: float, n: int):
    """Cartesian components of the current on a square grid.

    Returns (x, y, Jx, Jy) with Jx = -sin(phi) J, Jy = cos(phi) J; the
    reconstructed field is divergence-free because J is purely azimuthal
    and axisymmetric.  Grid points at the exact origin get J = 0 (the
    current vanishes there for |m| >= 1 states).
    """
    axis = np.linspace(-half_extent, half_extent, n)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    rho = np.hypot(x, y)
    safe = rho > 0
    jx = np.zeros_like(rho)
    jy = np.zeros_like(rho)
    r = rho[safe]
    dens = wf.psi_squared(r)
    j_phi = (wf.m / r - 0.5 * tp.nu * r) * dens
    jx[safe] = -y[safe] / r * j_phi
    jy[safe] = x[safe] / r * j_phi
    return x, y, jx, jy


def velocity_expectation(wf: RadialWavefunction, tp: TrapParams) -> float:
    """<v_phi> = <m/rho> - (nu/2) <rho>, in units sqrt(hbar omega_t / mu)."""
    if wf.m != 0:
        canonical = wf.m * 2.0 * np.pi * _quad(
            lambda r: wf.chi(r) ** 2 / r, 0.0, wf.rho_max)
    else:
        canonical = 0.0
    drag = 0.5 * tp.nu * wf.radial_moment(1)
    return canonical - drag


@dataclass(frozen=True)
class DensityProfile:
    """Radial probability density 2 pi chi^2 with its low moments."""

    rho: np.ndarray
    density: np.ndarray
    mean_rho: float
    rho_peak: float

    def integral(self) -> float:
        """Trapezoid integral of the sampled profile (should be ~1)."""
        return float(np.trapezoid(self.density, self.rho))


def density_profile(wf: RadialWavefunction,
                    rho_grid: np.ndarray | None = None) -> DensityProfile:
    """Sample 2 pi chi^2 and report <rho> and the density peak position.

    The peak is refined by bounded minimization around the best grid sample;
    in the strong-coupling ring regime it approaches the classical minimum
    of the effective potential.
    """
    if rho_grid is None:
        rho_grid = np.linspace(1e-3, wf.rho_max, 4000)
    rho = np.asarray(rho_grid, dtype=float)
    dens = wf.density(rho)
    mean_rho = wf.radial_moment(1)

    i_best = int(np.argmax(dens))
    lo = rho[max(i_best - 2, 0)]
    hi = rho[min(i_best + 2, len(rho) - 1)]
    res = minimize_scalar(lambda r: -wf.density(r), bounds=(lo, hi),
                          method="bounded",
                          options={"xatol": 1e-10})
    return DensityProfile(rho=rho, density=dens, mean_rho=mean_rho,
                          rho_peak=float(res.x))


def ground_velocity_sweep(b: float, nu_values,
                          size: int = DEFAULT_BASIS_SIZE,
                          m_range: tuple[int, int] = DEFAULT_M_RANGE,
                          workers: int = 1):
    """Ground-state velocity along a field sweep at fixed b.

    For each nu the ground sector is found by scanning m_range; rows are
    (nu, m_star, energy, velocity) in ascending nu order.  Sector scans are
    independent, so with workers > 1 they run on a thread pool and are
    merged back in deterministic nu order.
    """
    from .radial import ground_state_scan

    nu_list = [float(nu) for nu in nu_values]

    def one(nu: float):
        rec = ground_state_scan(TrapParams(nu=nu, b=b), m_range=m_range,
                                size=size)
        wf = RadialWavefunction.from_solution(rec.solution)
        vel = velocity_expectation(wf, TrapParams(nu=nu, b=b))
        return nu, (rec.m_star, rec.energy, vel)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(one, nu_list))
    else:
        results = dict(map(one, nu_list))

    return [(nu, *results[nu]) for nu in sorted(results)]
