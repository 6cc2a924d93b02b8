"""Error reduction / hybrid input-output phase retrieval with shrinkwrap."""
import logging
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .forward import forward_modulus, phase_factor
from .grid import dft2, idft2
from .simkit import recon_error
from .template import autocorrelation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionState:
    estimate: np.ndarray
    support: np.ndarray
    iteration: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ShrinkwrapConfig:
    threshold: float = 0.15
    every: int = 50
    sigma_start: float = 3.0
    sigma_decay: float = 0.99
    sigma_floor: float = 1.5

    def sigma_at(self, refresh):
        return max(self.sigma_floor, self.sigma_start * self.sigma_decay ** refresh)


@dataclass(frozen=True)
class Schedule:
    """Blocks of ``(algorithm, iterations)`` repeated ``repeats`` times."""
    blocks: tuple = (("ER", 50), ("HIO", 100))
    repeats: int = 20

    @property
    def total(self):
        return self.repeats * sum(n for _, n in self.blocks)

    def steps(self):
        for _ in range(self.repeats):
            for name, n in self.blocks:
                for _ in range(n):
                    yield name

    def __str__(self):
        return "".join(f"{a}{n}" for a, n in self.blocks) + f"x{self.repeats}"


_BLOCK = re.compile(r"(ER|HIO)(\d+)")


def parse_schedule(text):
    """Parse strings like ``ER50HIO100x20``."""
    body, _, reps = text.strip().upper().partition("X")
    blocks = _BLOCK.findall(body)
    if not blocks or "".join(a + n for a, n in blocks) != body:
        raise ValueError(f"cannot parse schedule {text!r}")
    repeats = int(reps) if reps else 1
    if repeats < 1:
        raise ValueError(f"schedule repeat count must be >= 1 in {text!r}")
    return Schedule(tuple((a, int(n)) for a, n in blocks), repeats)


def modulus_projection(estimate, b):
    """Replace Fourier moduli by ``b``, keeping the current phases."""
    return np.real(idft2(b * phase_factor(dft2(estimate))))


def er_step(state, b):
    y = modulus_projection(state.estimate, b)
    new = np.where(state.support & (y > 0), y, 0.0)
    return replace(state, estimate=new, iteration=state.iteration + 1)


def hio_step(state, b, beta=0.9):
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    x = state.estimate
    y = modulus_projection(x, b)
    keep = state.support & (y >= 0)
    new = np.where(keep, y, x - beta * y)
    return replace(state, estimate=new, iteration=state.iteration + 1)


def shrinkwrap_update(state, blur_sigma, threshold):
    """Support from the thresholded, periodically blurred magnitude.

    Returns ``(mask, ok)``; when the new mask would be empty the previous
    one is returned with ``ok = False``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    blurred = gaussian_filter(np.abs(state.estimate), blur_sigma, mode="wrap")
    peak = blurred.max()
    if not peak > 0:
        return state.support, False
    mask = blurred >= threshold * peak
    if not mask.any():
        return state.support, False
    return mask, True


def initial_support(b, threshold=0.04):
    """Centered box spanning half the extent of the thresholded autocorrelation."""
    auto = autocorrelation(b)
    mask = auto >= threshold * auto.max()
    rows, cols = b.shape
    out = np.zeros(b.shape, dtype=bool)
    spans = []
    for axis, n in ((1, rows), (0, cols)):
        idx = np.flatnonzero(mask.any(axis=axis))
        spans.append(idx.max() - idx.min() + 1)
    h = max(1, (spans[0] + 1) // 2)
    w = max(1, (spans[1] + 1) // 2)
    top = (rows - h) // 2
    left = (cols - w) // 2
    out[top:top + h, left:left + w] = True
    return out


def fidelity_error(estimate, b):
    return float(np.linalg.norm(forward_modulus(estimate) - b) / np.linalg.norm(b))


def finalize(state):
    """Support and positivity projection of the current iterate."""
    return np.where(state.support & (state.estimate > 0), state.estimate, 0.0)


def run_single(b, schedule, shrinkwrap, seed, beta=0.9, support=None):
    """One seeded reconstruction; returns ``(image, final_state)``."""
    rng = np.random.default_rng(seed)
    if support is None:
        support = initial_support(b)
    estimate = rng.random(b.shape) * support
    state = ProjectionState(estimate, support, 0, seed)
    refresh = 0
    for k, name in enumerate(schedule.steps(), start=1):
        state = er_step(state, b) if name == "ER" else hio_step(state, b, beta)
        if shrinkwrap is not None and k % shrinkwrap.every == 0:
            mask, ok = shrinkwrap_update(state, shrinkwrap.sigma_at(refresh),
                                         shrinkwrap.threshold)
            if not ok:
                log.warning("shrinkwrap produced an empty support at iteration %d", k)
            state = replace(state, support=mask)
            refresh += 1
    return finalize(state), state


@dataclass
class BaselineResult:
    best: np.ndarray
    best_index: int
    errors: list
    ranked_by: str
    iterations: int
    reconstructions: list = field(repr=False, default_factory=list)


def run_er_hio(b, schedule=None, shrinkwrap=None, n_restarts=20, seed=0, truth=None,
               beta=0.9):
    """Independent seeded restarts of the ER/HIO schedule.

    Restarts are ranked by :func:`~cdireg.simkit.recon_error` against
    ``truth`` when given, otherwise by amplitude fidelity.
    """
    b = np.asarray(b, dtype=float)
    schedule = schedule or Schedule()
    shrinkwrap = shrinkwrap if shrinkwrap is not None else ShrinkwrapConfig()
    support = initial_support(b)
    seeds = np.random.SeedSequence(seed).spawn(n_restarts)
    recons, errors = [], []
    for r, ss in enumerate(seeds):
        image, _ = run_single(b, schedule, shrinkwrap, ss, beta, support)
        err = recon_error(image, truth) if truth is not None else fidelity_error(image, b)
        recons.append(image)
        errors.append(err)
        log.info("restart %d: error %.4f", r, err)
    best = int(np.argmin(errors))
    return BaselineResult(recons[best], best, errors,
                          "recon_error" if truth is not None else "fidelity",
                          schedule.total, recons)
