"""Weighting functions, the scalar observation operator, and synthetic data.

An observation is a weighted vertical average u = int rho(z) q(z, t_i) dz
taken at a time node, optionally corrupted by Gaussian noise of standard
deviation r_i. The adjoint of the observation map is multiplication by the
weight, which is what the assimilation sweeps inject backward in time.

Noise generator
---------------
Synthetic data uses the Philox 4x64 counter-based generator keyed by the
user seed, one counter block per observation (the observation index in the
first counter word). Each draw turns two uniforms into one normal by the
Box-Muller map xi = sqrt(-2 log(1 - u1)) * cos(2 pi u2). Both the generator
and the map are spelled out here so another implementation can reproduce
the data stream bit for bit from (seed, i).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import CoefficientProfile
from .numerics import ColumnGrid, trapezoid
from .spectral import EigenSystem
from .transport import FluxSignal, solve_forward

__all__ = [
    "Weight",
    "ObservationSet",
    "apply_observation",
    "adjoint_observation",
    "canonical_weights",
    "synthesize_data",
    "observations_to_csv",
    "observations_to_json",
    "write_weight_csv",
]


@dataclass(frozen=True)
class Weight:
    """A vertical weighting function sampled on the column grid.

    The modeling assumption downstream (monotonicity analysis, canonical
    pairs) is that weights are nonnegative; truncated or synthesized
    weights can dip below zero, so that is recorded in ``is_nonnegative``
    rather than rejected here.

    Parameters
    ----------
    grid : ColumnGrid
    values : numpy.ndarray
    coefficients : numpy.ndarray, optional
        Mode-basis coefficients when the weight was built from (or expanded
        in) an eigensystem.
    label : str
    """

    grid: ColumnGrid
    values: np.ndarray
    coefficients: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            msg = f"weight needs {self.grid.n} nodal values, got shape {v.shape}"
            raise ValueError(msg)
        if not np.isfinite(v).all():
            raise ValueError("weight values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.coefficients is not None:
            c = np.ascontiguousarray(self.coefficients, dtype=float)
            c.setflags(write=False)
            object.__setattr__(self, "coefficients", c)

    @property
    def is_nonnegative(self) -> bool:
        return bool(self.values.min() >= 0.0)


@dataclass(frozen=True)
class ObservationSet:
    """Scalar observations (t_i, y_i, r_i) with strictly increasing times.

    Noise levels must be strictly positive for assimilation; zeros are
    accepted here so noiseless synthetic studies can round-trip through the
    same container. An empty set is allowed (prior-only estimation).
    """

    times: np.ndarray
    values: np.ndarray
    noise_levels: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        y = np.ascontiguousarray(self.values, dtype=float)
        r = np.ascontiguousarray(self.noise_levels, dtype=float)
        if not (t.ndim == 1 and t.shape == y.shape == r.shape):
            msg = (
                "times, values and noise_levels must be 1-d and equally "
                f"long, got {t.shape}, {y.shape}, {r.shape}"
            )
            raise ValueError(msg)
        for name, arr in (("times", t), ("values", y), ("noise_levels", r)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
        if not (np.diff(t) > 0).all():
            raise ValueError("observation times must be strictly increasing")
        if t.size and t[0] <= 0:
            raise ValueError("observation times must be positive")
        if (r < 0).any():
            raise ValueError("noise levels must be nonnegative")
        for arr in (t, y, r):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "noise_levels", r)

    def __len__(self) -> int:
        return self.times.size


def apply_observation(weight: Weight, column) -> float:
    """Weighted vertical average: trapezoid of rho * q over the column."""
    column = np.asarray(column, dtype=float)
    if column.shape != (weight.grid.n,):
        msg = (
            f"column has shape {column.shape}, expected ({weight.grid.n},) "
            "on the weight's grid"
        )
        raise ValueError(msg)
    return trapezoid(weight.values * column, weight.grid)


def adjoint_observation(weight: Weight, a: float) -> np.ndarray:
    """Adjoint of the observation map: the scalar a spread as a * rho.

    With the trapezoid inner product on the column this satisfies
    <Hq, a> = <q, a rho> exactly, since both sides reduce to the same
    quadrature sum.
    """
    return float(a) * weight.values


def canonical_weights(eig: EigenSystem) -> tuple[Weight, Weight]:
    """The two-mode reference pair rho_plus/rho_minus.

    rho_plus = p0 + p1 concentrates near the surface, rho_minus = p0 - p1
    near the top (it vanishes at the surface). Coefficient vectors (1, 1)
    and (1, -1) ride along. For variable coefficients the first mode can
    dip below the constant mode, making rho_minus negative somewhere; that
    is reported by the weights' ``is_nonnegative`` flag, not raised.
    """
    if eig.n_modes < 2:
        msg = f"canonical weights need at least 2 modes, got {eig.n_modes}"
        raise ValueError(msg)
    p0 = eig.modes[:, 0]
    p1 = eig.modes[:, 1]
    coeff = np.zeros(eig.n_modes)
    coeff[0] = 1.0
    coeff[1] = 1.0
    plus = Weight(
        grid=eig.profile.grid,
        values=p0 + p1,
        coefficients=coeff.copy(),
        label="rho_plus",
    )
    coeff[1] = -1.0
    minus = Weight(
        grid=eig.profile.grid,
        values=p0 - p1,
        coefficients=coeff,
        label="rho_minus",
    )
    return plus, minus


def _standard_normal(seed: int, index: int) -> float:
    """One reproducible N(0,1) draw from the (seed, observation) substream.

    Philox 4x64 keyed by the seed, counter block [index, 0, 0, 0]; two
    uniforms through Box-Muller (cosine branch). See the module docstring.
    """
    gen = np.random.Generator(np.random.Philox(key=seed, counter=[index, 0, 0, 0]))
    u = gen.random(2)
    return float(np.sqrt(-2.0 * np.log1p(-u[0])) * np.cos(2.0 * np.pi * u[1]))


def synthesize_data(
    profile: CoefficientProfile,
    true_flux: FluxSignal,
    q0,
    weights,
    times,
    noise_levels,
    seed: int,
) -> ObservationSet:
    """Generate observations of the forward solution driven by a known flux.

    Parameters
    ----------
    profile : CoefficientProfile
    true_flux : FluxSignal
        The flux generating the data.
    q0 : array_like
        Initial condition.
    weights : sequence of Weight
        One per observation time.
    times : array_like
        Strictly increasing observation times; each must be a node of the
        flux's time grid (the solver is never interpolated in time).
    noise_levels : array_like
        Standard deviations r_i >= 0 of the added Gaussian noise.
    seed : int
        Keys the counter-based generator; a fixed seed reproduces the exact
        byte stream of the serialized set.

    Returns
    -------
    ObservationSet
    """
    times = np.asarray(times, dtype=float)
    noise_levels = np.asarray(noise_levels, dtype=float)
    weights = list(weights)
    if not (len(weights) == times.size == noise_levels.size):
        msg = (
            f"got {len(weights)} weights, {times.size} times, "
            f"{noise_levels.size} noise levels; all must match"
        )
        raise ValueError(msg)
    indices = [true_flux.grid.index_of(t) for t in times]
    field = solve_forward(profile, true_flux, q0)
    y = np.empty(times.size)
    for i, (w, idx, r) in enumerate(zip(weights, indices, noise_levels)):
        clean = apply_observation(w, field.column(idx))
        y[i] = clean if r == 0.0 else clean + r * _standard_normal(seed, i)
    return ObservationSet(times=times, values=y, noise_levels=noise_levels)


def observations_to_csv(obs: ObservationSet) -> str:
    """Serialize as CSV with columns t, y, r (shortest round-trip floats)."""
    lines = ["t,y,r"]
    for t, y, r in zip(obs.times, obs.values, obs.noise_levels):
        lines.append(f"{float(t)!r},{float(y)!r},{float(r)!r}")
    return "\n".join(lines) + "\n"


def observations_to_json(obs: ObservationSet) -> str:
    """Serialize as JSON with sorted keys (deterministic bytes per content)."""
    payload = {
        "noise_levels": [float(r) for r in obs.noise_levels],
        "times": [float(t) for t in obs.times],
        "values": [float(y) for y in obs.values],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_weight_csv(weight: Weight, path) -> None:
    """Write a weight as CSV with columns z, rho."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z,rho\n")
        for z, v in zip(weight.grid.nodes, weight.values):
            fh.write(f"{float(z)!r},{float(v)!r}\n")
