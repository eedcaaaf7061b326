"""Adjoint Sturm-Liouville eigensystem of the column operator.

The observation side of the model is governed by the weighted eigenproblem

    -(k(z) mu(z) p')' = lambda * mu(z) * p,   p'(0) = p'(h) = 0,

whose modes evolve in time by pure exponential decay e^{-lambda t}. The
discretization mirrors the forward solver: a stiffness matrix with
face-averaged k*mu and the trapezoid/mu weights as the mass matrix, so the
generalized problem is symmetric and the modes come out orthogonal in the
discrete mu-inner product. The constant mode (lambda = 0) carries the
column total.

Modes are gauged so the surface value is exactly 1; weighted norms are
reported alongside so callers can form projections without re-deriving
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, NormalizationError
from .model import CoefficientProfile, mu_weight

__all__ = [
    "EigenSystem",
    "SynthesizedWeight",
    "MuntzSums",
    "eigensystem",
    "expand_weight",
    "expansion_residual",
    "synthesize_weight",
    "muntz_partial_sums",
]

#: Modes above n/RESOLUTION_FACTOR oscillate too fast for the grid to carry.
RESOLUTION_FACTOR = 8

#: Surface values below this, in the unit-sup-norm gauge, cannot be rescaled
#: to the surface-one convention without blowing up.
SURFACE_GAUGE_TOL = 1e-8


@dataclass(frozen=True)
class EigenSystem:
    """Leading modes of the adjoint column operator.

    Attributes
    ----------
    profile : CoefficientProfile
    eigenvalues : numpy.ndarray
        Nonnegative, increasing; the first is the constant mode's 0.
    modes : numpy.ndarray
        Shape (nz, n_modes); column n is the n-th mode, surface value 1.
    mu_norms : numpy.ndarray
        Squared mu-weighted norms of the columns (trapezoid quadrature).
    mu : numpy.ndarray
        Nodal samples of the weight mu = exp(int w/k).
    """

    profile: CoefficientProfile
    eigenvalues: np.ndarray
    modes: np.ndarray
    mu_norms: np.ndarray
    mu: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]


class SynthesizedWeight(NamedTuple):
    """Nodal weight assembled from mode coefficients, with a sign summary."""

    values: np.ndarray
    min_value: float
    is_nonnegative: bool


class MuntzSums(NamedTuple):
    """Mode-density diagnostic built from the eigenvalue sequence.

    ``reciprocal_sums[m]`` is sum_{n<=m} 1/(1+lambda_n); its finite limit is
    the obstruction to the decay family spanning everything.
    ``root_sums[m]`` is sum_{1<=n<=m} 1/sqrt(lambda_n), divergent like
    log(m)/sqrt(growth_rate); ``growth_rate`` is the fitted c in
    lambda_n ~ c n^2 and ``limit_estimate`` extrapolates the reciprocal sum
    to n = infinity with the integral tail of the fit.
    """

    reciprocal_sums: np.ndarray
    root_sums: np.ndarray
    growth_rate: float
    limit_estimate: float


def eigensystem(profile: CoefficientProfile, n_modes: int) -> EigenSystem:
    """Compute the lowest ``n_modes`` modes of the adjoint operator.

    Parameters
    ----------
    profile : CoefficientProfile
    n_modes : int
        How many modes to keep, counting the constant mode. Limited to an
        eighth of the node count so every kept mode stays well resolved.

    Returns
    -------
    EigenSystem

    Raises
    ------
    DomainError
        If ``n_modes`` is out of range for the grid.
    NormalizationError
        If a computed mode (nearly) vanishes at the surface, so the
        surface-one gauge cannot be applied.
    """
    grid = profile.grid
    n_modes = int(n_modes)
    if n_modes < 1 or n_modes > grid.n // RESOLUTION_FACTOR:
        msg = (
            f"n_modes must be between 1 and n//{RESOLUTION_FACTOR} = "
            f"{grid.n // RESOLUTION_FACTOR} for this grid, got {n_modes}"
        )
        raise DomainError(msg)

    dz = grid.spacing
    mu = mu_weight(profile)
    km = profile.k * mu
    face = 0.5 * (km[:-1] + km[1:]) / dz

    # stiffness A (Neumann) and diagonal mass B = trapezoid weights * mu
    a_diag = np.zeros(grid.n)
    a_diag[:-1] += face
    a_diag[1:] += face
    a_off = -face
    b = grid.weights * mu

    # similarity transform to an ordinary symmetric tridiagonal problem
    sqrt_b = np.sqrt(b)
    d_main = a_diag / b
    d_off = a_off / (sqrt_b[:-1] * sqrt_b[1:])
    vals, vecs = eigh_tridiagonal(
        d_main, d_off, select="i", select_range=(0, n_modes - 1)
    )

    # the operator is positive semidefinite with an exact null vector: the
    # stiffness rows sum to zero, so constants are annihilated in exact
    # arithmetic and the first eigenvalue is zero up to solver rounding.
    # Pin it, and treat anything beyond backward-error scale as a failure.
    tol = 100.0 * np.finfo(float).eps * max(float(np.abs(d_main).max()), 1.0)
    if abs(vals[0]) > tol:
        msg = f"constant-mode eigenvalue {vals[0]!r} exceeds rounding scale"
        raise NormalizationError(msg)
    vals = np.maximum(vals, 0.0)
    vals[0] = 0.0

    modes = vecs / sqrt_b[:, None]
    sup = np.max(np.abs(modes), axis=0)
    surface = modes[0] / sup
    small = np.abs(surface) < SURFACE_GAUGE_TOL
    if small.any():
        idx = int(np.argmax(small))
        msg = (
            f"mode {idx} has surface value {surface[idx]:.3e} of its sup "
            "norm; the surface-one gauge is ill-defined"
        )
        raise NormalizationError(msg)
    modes = modes / modes[0]

    mu_norms = (grid.weights * mu) @ (modes**2)
    for arr in (vals, modes, mu_norms, mu):
        arr.setflags(write=False)
    return EigenSystem(
        profile=profile, eigenvalues=vals, modes=modes, mu_norms=mu_norms, mu=mu
    )


def _mu_dot(eig: EigenSystem, f, g) -> np.ndarray:
    """Trapezoid mu-inner product; g may have trailing mode columns."""
    w = eig.profile.grid.weights * eig.mu
    return (w * np.asarray(f, dtype=float)) @ np.asarray(g, dtype=float)


def expand_weight(rho, eig: EigenSystem) -> np.ndarray:
    """Coefficients of a nodal weight in the mode basis.

    Orthogonality of the modes in the mu-inner product makes this a plain
    projection: a_n = <rho, p_n>_mu / <p_n, p_n>_mu.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (eig.profile.grid.n,):
        msg = f"weight needs {eig.profile.grid.n} nodal values, got {rho.shape}"
        raise ValueError(msg)
    return _mu_dot(eig, rho, eig.modes) / eig.mu_norms


def expansion_residual(rho, eig: EigenSystem) -> float:
    """Relative mu-norm of the part of ``rho`` outside the kept modes."""
    rho = np.asarray(rho, dtype=float)
    a = expand_weight(rho, eig)
    resid = rho - eig.modes @ a
    denom = _mu_dot(eig, rho, rho)
    if denom == 0.0:
        return 0.0
    return float(np.sqrt(_mu_dot(eig, resid, resid) / denom))


def synthesize_weight(a, eig: EigenSystem) -> SynthesizedWeight:
    """Assemble the nodal weight with the given mode coefficients.

    Truncated syntheses of sharply supported weights overshoot below zero
    near the support edges, so the sign summary is part of the result
    rather than an error: negative dips are expected and the caller decides
    whether they matter.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (eig.n_modes,):
        msg = f"need {eig.n_modes} coefficients, got shape {a.shape}"
        raise ValueError(msg)
    values = eig.modes @ a
    min_value = float(values.min())
    return SynthesizedWeight(
        values=values,
        min_value=min_value,
        is_nonnegative=bool(min_value >= 0.0),
    )


def muntz_partial_sums(eig: EigenSystem) -> MuntzSums:
    """Density diagnostic for the family of modal decay exponentials.

    The reciprocal partial sums converge (quadratic eigenvalue growth), and
    the extrapolated limit quantifies how far the family is from total: a
    finite value certifies that generic time profiles cannot be matched by
    the observable decays alone. The square-root sums grow like
    log(m)/sqrt(growth_rate), confirming the quadratic growth law itself.
    """
    lam = eig.eigenvalues
    m = lam.shape[0]
    if m < 4:
        msg = f"need at least 4 modes for the density diagnostic, got {m}"
        raise DomainError(msg)
    reciprocal = np.cumsum(1.0 / (1.0 + lam))
    roots = np.zeros(m)
    roots[1:] = np.cumsum(1.0 / np.sqrt(lam[1:]))

    # least-squares fit of lambda_n = c n^2 over the upper half of the modes
    n_idx = np.arange(m, dtype=float)
    upper = slice(m // 2, m)
    c = float(
        np.dot(lam[upper], n_idx[upper] ** 2) / np.dot(n_idx[upper] ** 2, n_idx[upper] ** 2)
    )
    sqrt_c = np.sqrt(c)
    tail = (np.pi / 2.0 - np.arctan(sqrt_c * (m - 0.5))) / sqrt_c
    return MuntzSums(
        reciprocal_sums=reciprocal,
        root_sums=roots,
        growth_rate=c,
        limit_estimate=float(reciprocal[-1] + tail),
    )
