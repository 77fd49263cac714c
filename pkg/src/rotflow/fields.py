"""Analytic initial-data families on periodic grids.

All solenoidal families are built from stream/vector potentials so that
divergence-freeness is exact (analytically for the Gaussian families,
spectrally for the randomized one).  Amplitudes are normalized to the
peak pointwise speed.
"""

from __future__ import annotations

import numpy as np

from .field_grid import Grid, ScalarField, VectorField

__all__ = [
    "gaussian_envelope", "gaussian_stream_field", "gradient_bump",
    "taylor_green", "random_solenoidal",
]


def _centered(grid: Grid, center) -> tuple:
    center = np.zeros(grid.d) if center is None else np.asarray(center, float)
    return tuple(c - center[i] for i, c in enumerate(grid.coords()))


def gaussian_envelope(grid: Grid, sigma: float, center=None,
                      amplitude: float = 1.0) -> ScalarField:
    """Isotropic Gaussian bump ``amplitude * exp(-|x - c|^2 / (2 sigma^2))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rel = _centered(grid, center)
    r2 = sum(c * c for c in rel)
    return ScalarField(grid, amplitude * np.exp(-r2 / (2.0 * sigma ** 2)))


def gaussian_stream_field(grid: Grid, sigma: float, center=None,
                          amplitude: float = 1.0) -> VectorField:
    """Divergence-free Gaussian vortex with peak speed ``amplitude``.

    Curl of a Gaussian stream function (about the third axis in 3D); the
    samples are exact analytic values, not spectral derivatives.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rel = _centered(grid, center)
    r2 = sum(c * c for c in rel)
    # stream amplitude sigma*sqrt(e) puts the peak speed at `amplitude`
    psi = amplitude * sigma * np.exp(0.5) * np.exp(-r2 / (2.0 * sigma ** 2))
    out = np.zeros((grid.d,) + grid.shape)
    out[0] = -(rel[1] / sigma ** 2) * psi
    out[1] = (rel[0] / sigma ** 2) * psi
    return VectorField(grid, out)


def gradient_bump(grid: Grid, sigma: float, center=None,
                  amplitude: float = 1.0) -> VectorField:
    """Pure gradient field (curl-free); useful as a non-solenoidal probe."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rel = _centered(grid, center)
    r2 = sum(c * c for c in rel)
    psi = amplitude * sigma * np.exp(0.5) * np.exp(-r2 / (2.0 * sigma ** 2))
    out = np.stack([-(rel[j] / sigma ** 2) * psi for j in range(grid.d)])
    return VectorField(grid, out)


def taylor_green(grid: Grid, mode: int = 1, amplitude: float = 1.0
                 ) -> VectorField:
    """Classical cellular vortex array, exactly periodic on the box."""
    if mode < 1:
        raise ValueError("mode must be a positive integer")
    k = mode * np.pi / grid.L
    c = grid.coords()
    out = np.zeros((grid.d,) + grid.shape)
    if grid.d == 2:
        out[0] = -amplitude * np.cos(k * c[0]) * np.sin(k * c[1])
        out[1] = amplitude * np.sin(k * c[0]) * np.cos(k * c[1])
    else:
        out[0] = amplitude * np.sin(k * c[0]) * np.cos(k * c[1]) * np.cos(k * c[2])
        out[1] = -amplitude * np.cos(k * c[0]) * np.sin(k * c[1]) * np.cos(k * c[2])
    return VectorField(grid, out)


def taylor_green_wavenumber(grid: Grid, mode: int = 1) -> float:
    return mode * np.pi / grid.L


def random_solenoidal(grid: Grid, seed: int, amplitude: float = 1.0,
                      slope: float = 0.0) -> VectorField:
    """Randomized divergence-free field with a tunable spectrum slope.

    A band-limited random potential is shaped like ``(1 + |xi| L / pi)^slope``,
    enveloped by a Gaussian of width ``L / 8`` so the field decays below
    1e-10 at the box boundary, and turned into a velocity by the spectral
    curl (hence exactly solenoidal on the grid).
    """
    rng = np.random.default_rng(seed)
    shape_factor = (1.0 + np.sqrt(grid.freq_sq()) * grid.L / np.pi) ** slope
    lowpass = np.abs(np.fft.fftfreq(grid.n, d=1.0 / grid.n))
    keep1d = lowpass <= grid.n // 6
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.d):
        shp = [1] * grid.d
        shp[ax] = grid.n
        mask &= keep1d.reshape(shp)
    env = gaussian_envelope(grid, grid.L / 8.0).values

    def potential():
        white = rng.standard_normal(grid.shape)
        hat = np.fft.fftn(white) * shape_factor * mask
        return np.fft.ifftn(hat).real * env

    ks = grid.deriv_freqs()
    if grid.d == 2:
        psi_hat = np.fft.fftn(potential())
        vals = np.stack([np.fft.ifftn(1j * ks[1] * psi_hat).real,
                         np.fft.ifftn(-1j * ks[0] * psi_hat).real])
    else:
        pots = [np.fft.fftn(potential()) for _ in range(3)]
        vals = np.stack([
            np.fft.ifftn(1j * ks[1] * pots[2] - 1j * ks[2] * pots[1]).real,
            np.fft.ifftn(1j * ks[2] * pots[0] - 1j * ks[0] * pots[2]).real,
            np.fft.ifftn(1j * ks[0] * pots[1] - 1j * ks[1] * pots[0]).real,
        ])
    speed = np.sqrt(np.sum(vals * vals, axis=0)).max()
    if speed > 0:
        vals *= amplitude / speed
    return VectorField(grid, vals)
