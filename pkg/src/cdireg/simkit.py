"""Synthetic diffraction data, SNR, and a translation-invariant error metric."""
from dataclasses import dataclass

import numpy as np

from .forward import forward_modulus
from .grid import dft2, idft2


@dataclass(frozen=True)
class NoiseModel:
    """Detector model acting on intensities scaled to ``max_intensity`` counts."""
    max_intensity: float = 100.0
    poisson: bool = False
    quantize: bool = False
    gaussian_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.max_intensity > 0:
            raise ValueError(f"max_intensity must be positive, got {self.max_intensity}")
        if self.gaussian_std < 0:
            raise ValueError(f"gaussian_std must be >= 0, got {self.gaussian_std}")

    @property
    def noiseless(self):
        return not (self.poisson or self.quantize or self.gaussian_std > 0)


def snr_db(ideal, measured):
    """``10 log10(|I| / |I - I_m|)``; ``inf`` when the two agree exactly."""
    noise = np.linalg.norm(np.asarray(ideal) - np.asarray(measured))
    if noise == 0.0:
        return float("inf")
    return float(10.0 * np.log10(np.linalg.norm(ideal) / noise))


def noisy_intensity(target, noise):
    """Ideal and measured intensities in counts, plus the count scale factor."""
    intensity = forward_modulus(target) ** 2
    scale = noise.max_intensity / intensity.max()
    ideal = intensity * scale
    rng = np.random.default_rng(noise.seed)
    measured = ideal
    if noise.poisson:
        measured = rng.poisson(measured).astype(float)
    if noise.gaussian_std > 0:
        measured = measured + rng.normal(0.0, noise.gaussian_std, size=measured.shape)
    if noise.quantize:
        measured = np.rint(measured)
    measured = np.maximum(measured, 0.0)
    return ideal, measured, scale


def simulate_measurement(target, noise):
    """Noisy far-field amplitudes of ``target`` and their SNR in dB.

    Noise acts on intensities scaled so the brightest pixel holds
    ``max_intensity`` counts; amplitudes are returned in the units of
    ``forward_modulus(target)``. The SNR is ``inf`` for noiseless models.
    """
    if noise.noiseless:
        return forward_modulus(target), float("inf")
    ideal, measured, scale = noisy_intensity(target, noise)
    return np.sqrt(measured / scale), snr_db(ideal, measured)


def calibrate_gaussian_std(target, noise, target_snr, tol=0.05, max_iter=60):
    """Gaussian std (counts) giving ``target_snr`` dB under ``noise``.

    Bisection on ``gaussian_std`` with the seed held fixed, which makes the
    SNR a monotone function of the std. Returns ``(std, achieved_snr)``.
    Raises ``ValueError`` when the target exceeds the SNR reachable with no
    Gaussian component.
    """
    def snr_at(std):
        return simulate_measurement(target, _with_std(noise, std))[1]

    base = snr_at(0.0)
    if base < target_snr:
        raise ValueError(f"SNR {target_snr} dB unreachable; noise floor gives {base:.2f} dB")
    lo, hi = 0.0, 1.0
    while snr_at(hi) > target_snr:
        hi *= 2.0
    achieved = snr_at(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = snr_at(mid)
        if s > target_snr:
            lo = mid
        else:
            hi, achieved = mid, s
        if abs(achieved - target_snr) <= tol:
            break
    return hi, achieved


def _with_std(noise, std):
    return NoiseModel(noise.max_intensity, noise.poisson, noise.quantize, std, noise.seed)


def point_inversion(f):
    """``f(-x)`` on the torus."""
    return np.roll(f[::-1, ::-1], 1, axis=(0, 1))


def align(recon, truth):
    """Best whole-pixel circular shift and optional inversion of ``recon`` onto ``truth``."""
    best = None
    T = dft2(truth)
    for cand in (recon, point_inversion(recon)):
        xcorr = np.real(idft2(T * np.conj(dft2(cand))))
        shift = np.unravel_index(np.argmax(xcorr), xcorr.shape)
        moved = np.roll(cand, shift, axis=(0, 1))
        score = xcorr[shift]
        if best is None or score > best[0]:
            best = (score, moved)
    return best[1]


def recon_error(recon, truth):
    """Normalized RMS error, minimized over shifts, twin image and gain.

    ``min |lam * T(recon) - truth| / |truth|`` over whole-pixel circular
    shifts, point inversion and a nonnegative gain ``lam``.
    """
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape:
        raise ValueError(f"shape mismatch {recon.shape} vs {truth.shape}")
    norm_t = np.linalg.norm(truth)
    if norm_t == 0.0:
        raise ValueError("truth image is identically zero")
    moved = align(recon, truth)
    denom = float(np.sum(moved * moved))
    lam = max(0.0, float(np.sum(moved * truth)) / denom) if denom > 0 else 0.0
    return float(np.linalg.norm(lam * moved - truth) / norm_t)
