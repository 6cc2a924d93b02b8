"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines inline; they
are also collected in the terminal summary.
"""
import os
import time

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from cdireg.actions import Action, pullback
from cdireg.baseline import Schedule, ShrinkwrapConfig, run_er_hio
from cdireg.cli import main
from cdireg.forward import SimilarityKind, cc_energy, forward_modulus, l2_energy
from cdireg.grid import dft2, identity, idft2
from cdireg.io import write_grid
from cdireg.lddmm import KernelParams, RunConfig, kernel_smooth, run_registration
from cdireg.simkit import (NoiseModel, calibrate_gaussian_std, recon_error, simulate_measurement,
                           snr_db)
from cdireg.template import THRESHOLD_CLEAN, autocorrelation, support_size

from conftest import brute_dft2, disk, fd_gradient_error, random_velocity, smooth_field

N64 = 64


def grid_ij(N):
    return np.meshgrid(np.arange(N), np.arange(N), indexing="ij")


def blob(N, c0, c1, w, a):
    ii, jj = grid_ij(N)
    return a * np.exp(-((ii - c0) ** 2 + (jj - c1) ** 2) / (2 * w * w))


def l_shape(N=N64):
    f = np.zeros((N, N))
    f[20:44, 22:30] = 1.0
    f[36:44, 30:42] = 1.0
    return f


@pytest.mark.criterion(1, "transform oracle")
def test_criterion_01_transform_oracle(criterion, rng):
    start = time.perf_counter()
    worst_dft = worst_parseval = worst_inv = 0.0
    for _ in range(3):
        f = rng.standard_normal((8, 8))
        ref = brute_dft2(f)
        F = dft2(f)
        worst_dft = max(worst_dft, np.linalg.norm(F - ref) / np.linalg.norm(ref))
        worst_parseval = max(worst_parseval, abs(np.sum(np.abs(F) ** 2) / 64 - np.sum(f * f)) / np.sum(f * f))
        worst_inv = max(worst_inv, np.linalg.norm(idft2(ref) - f) / np.linalg.norm(f))
    elapsed = time.perf_counter() - start
    ok = worst_dft <= 1e-10 and worst_parseval <= 1e-10 and worst_inv <= 1e-10 and elapsed < 1.0
    criterion.report(ok, f"dft rel {worst_dft:.1e}, idft rel {worst_inv:.1e}, "
                         f"parseval {worst_parseval:.1e}, {elapsed:.2f} s")


@pytest.mark.criterion(2, "gradient vs finite differences")
def test_criterion_02_gradient_fd(criterion):
    start = time.perf_counter()
    shape, n = (16, 16), 4
    worst = {}
    cases = [(a, s) for a in Action for s in SimilarityKind]
    for seed, (action, similarity) in enumerate(cases):
        rng = np.random.default_rng(seed)
        I0 = smooth_field(rng, shape, 1.5) + 1.5
        b = forward_modulus(smooth_field(rng, shape, 1.5) + 1.5)
        cfg = RunConfig(action=action, similarity=similarity, n_steps=n)
        v = random_velocity(rng, n, shape, 2.0, 0.05)
        errs = [fd_gradient_error(I0, b, v, cfg, random_velocity(rng, n, shape, 2.0, 0.05),
                                  eps_list=(1e-3, 1e-4, 1e-5, 1e-6))
                for _ in range(5)]
        worst[f"{action.value}/{similarity.value}"] = max(errs)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-3 and elapsed < 30
    detail = ", ".join(f"{k} {e:.1e}" for k, e in worst.items())
    criterion.report(ok, f"worst rel err {detail} (tol 1e-3), {elapsed:.1f} s")


@pytest.mark.criterion(3, "kernel properties")
def test_criterion_03_kernel(criterion, rng):
    kernel = KernelParams()
    a, b = rng.standard_normal((2, 2, 32, 32))
    lhs, rhs = np.sum(kernel_smooth(a, kernel) * b), np.sum(a * kernel_smooth(b, kernel))
    sym = abs(lhs - rhs) / abs(lhs)
    pd = min(np.sum(w * kernel_smooth(w, kernel)) for w in rng.standard_normal((20, 2, 32, 32)))
    ii, jj = grid_ij(32)
    eig_err = 0.0
    for k0, k1 in ((0, 0), (1, 2), (5, 11), (16, 16)):
        w = np.cos(2 * np.pi * (k0 * ii + k1 * jj) / 32)
        lam = 4 - 2 * np.cos(2 * np.pi * k0 / 32) - 2 * np.cos(2 * np.pi * k1 / 32)
        out = kernel_smooth(np.stack([w, w]), kernel)
        eig_err = max(eig_err, np.abs(out - (1 + 5e-3 * lam) ** -2 * np.stack([w, w])).max())
    ok = sym <= 1e-10 and pd > 0 and eig_err <= 1e-10
    criterion.report(ok, f"asymmetry {sym:.1e}, min <w,Kw> {pd:.3g}, eigenvalue err {eig_err:.1e}")


@pytest.mark.criterion(4, "mass preservation")
def test_criterion_04_mass(criterion):
    shape = (N64, N64)
    f = blob(N64, 30, 34, 6.0, 1.0) + blob(N64, 20, 18, 4.0, 0.5)
    worst, worst_disp = 0.0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u = np.stack([smooth_field(rng, shape, 6.0), smooth_field(rng, shape, 6.0)])
        u *= 3.0 / np.sqrt(np.sum(u * u, axis=0)).max()
        worst_disp = max(worst_disp, np.sqrt(np.sum(u * u, axis=0)).max())
        moved = pullback(f, identity(shape) + u, Action.MASS_PRESERVING)
        worst = max(worst, abs(moved.sum() - f.sum()) / f.sum())
    criterion.report(worst <= 0.01 and worst_disp <= 3.0 + 1e-9,
                     f"worst relative mass change {worst:.2e} over 10 warps, max |u| {worst_disp:.2f} px")


@pytest.mark.criterion(5, "translation invariance")
def test_criterion_05_translation(criterion, rng):
    worst = 0.0
    for _ in range(10):
        f = rng.uniform(size=(32, 32))
        b = forward_modulus(rng.uniform(size=(32, 32)))
        g = np.roll(f, tuple(rng.integers(-32, 32, size=2)), axis=(0, 1))
        for energy in (l2_energy, cc_energy):
            worst = max(worst, abs(energy(forward_modulus(g), b)[0] - energy(forward_modulus(f), b)[0]))
    criterion.report(worst <= 1e-10, f"max energy change {worst:.1e} (tol 1e-10)")


@pytest.mark.criterion(6, "geometric ratio")
def test_criterion_06_geometric_ratio(criterion):
    N = 128
    ii, jj = grid_ij(N)
    rect_G, tri_G = [], []
    for L in (40, 50, 60):
        rect = np.zeros((N, N))
        rect[40:40 + L, 40:40 + L // 2] = 1.0
        tri = ((ii >= 30) & (jj >= 30) & ((ii - 30) + (jj - 30) < L)).astype(float)
        for obj, out in ((rect, rect_G), (tri, tri_G)):
            A = support_size(autocorrelation(forward_modulus(obj)), THRESHOLD_CLEAN)
            out.append(A / obj.sum())
    ok = all(3.6 <= g <= 4.0 for g in rect_G) and all(5.4 <= g <= 6.6 for g in tri_G)
    criterion.report(ok, "rectangle G " + ", ".join(f"{g:.3f}" for g in rect_G)
                     + "; triangle G " + ", ".join(f"{g:.3f}" for g in tri_G))


@pytest.mark.slow
@pytest.mark.criterion(7, "in-orbit recovery")
def test_criterion_07_in_orbit(criterion):
    start = time.perf_counter()
    ii, jj = grid_ij(N64)
    I0 = gaussian_filter(disk((N64, N64), (32, 32), 12), 1.0, mode="wrap")
    warp = identity((N64, N64)) + np.stack([1.5 * np.sin(2 * np.pi * jj / N64),
                                            1.5 * np.cos(2 * np.pi * ii / N64)])
    target = np.roll(pullback(I0, warp, Action.GEOMETRIC), (5, -3), axis=(0, 1))
    res = run_registration(I0, forward_modulus(target), RunConfig())
    elapsed = time.perf_counter() - start
    err = recon_error(res.reconstruction, target)
    e2_first, e2_last = res.trace[0].e2, res.trace[-1].e2
    # gap to the optimum -1/2 must at least halve
    plateau = (e2_last + 0.5) <= 0.5 * (e2_first + 0.5)
    ok = err <= 0.05 and e2_last <= -0.49 and plateau and len(res.trace) <= 1000 and elapsed <= 300
    criterion.report(ok, f"recon_error {err:.4f}, E2 {e2_first:.5f} -> {e2_last:.5f}, "
                         f"{len(res.trace)} iterations, {elapsed:.0f} s")


def _mass_instance():
    target = blob(N64, 28, 24, 3.0, 2.0) + blob(N64, 36, 40, 4.5, 0.6)
    # equal-height blobs, displaced: reaching the 2.0 / 0.6 target needs a mass change
    template = blob(N64, 30, 26, 3.4, 1.0) + blob(N64, 34, 38, 3.4, 1.0)
    return target, template * target.sum() / template.sum()


@pytest.mark.slow
@pytest.mark.criterion(8, "mass-preserving recovery")
def test_criterion_08_mass_recovery(criterion):
    target, template = _mass_instance()
    cfg = RunConfig(action="mass", k_max=2000)
    errors, snrs = {}, {}
    for level in (28.0, 16.0):
        noise = NoiseModel(1e7, poisson=True, quantize=True, seed=3)
        std, _ = calibrate_gaussian_std(target, noise, level)
        b, snrs[level] = simulate_measurement(target, NoiseModel(1e7, True, True, std, seed=3))
        errors[level] = recon_error(run_registration(template, b, cfg).reconstruction, target)
    ok = errors[28.0] <= 0.10 and errors[16.0] > errors[28.0]
    criterion.report(ok, f"template error {recon_error(template, target):.3f}; "
                         f"SNR {snrs[28.0]:.1f} dB -> {errors[28.0]:.4f}, "
                         f"SNR {snrs[16.0]:.1f} dB -> {errors[16.0]:.4f}")


@pytest.mark.slow
@pytest.mark.criterion(9, "baseline sanity and noisy ordering")
def test_criterion_09_baseline(criterion):
    truth = l_shape()
    start = time.perf_counter()
    clean = run_er_hio(forward_modulus(truth), Schedule(), ShrinkwrapConfig(), 20, seed=0, truth=truth)
    elapsed = time.perf_counter() - start
    clean_best = min(clean.errors)

    noise = NoiseModel(100, seed=7)
    std, _ = calibrate_gaussian_std(truth, noise, 5.0)
    b, snr = simulate_measurement(truth, NoiseModel(100, gaussian_std=std, seed=7))
    noisy_best = min(run_er_hio(b, Schedule(), ShrinkwrapConfig(), 20, seed=0, truth=truth).errors)
    template = np.zeros_like(truth)
    template[21:43, 23:31] = 1.0
    template[35:43, 31:41] = 1.0
    template = gaussian_filter(template, 1.0, mode="wrap")
    template *= truth.sum() / template.sum()
    lddmm_err = recon_error(run_registration(template, b, RunConfig()).reconstruction, truth)
    ok = clean_best <= 0.02 and elapsed <= 300 and snr <= 5.0 and noisy_best > lddmm_err
    criterion.report(ok, f"noise-free best {clean_best:.2e} in {elapsed:.0f} s; at {snr:.2f} dB "
                         f"baseline best {noisy_best:.3f} vs registration {lddmm_err:.3f}")


@pytest.mark.criterion(10, "noise and SNR machinery")
def test_criterion_10_snr(criterion):
    I = np.random.default_rng(0).uniform(1, 2, size=(32, 32))
    closed = snr_db(I, I / 2)
    target, _ = _mass_instance()
    stds = (0.5, 1, 2, 4, 8)
    curve = [simulate_measurement(target, NoiseModel(100, gaussian_std=s, seed=1))[1] for s in stds]
    monotone = all(a > b for a, b in zip(curve, curve[1:]))
    band = simulate_measurement(target, NoiseModel(100, poisson=True, quantize=True, seed=1))[1]
    try:
        _, calibrated = calibrate_gaussian_std(target, NoiseModel(100, True, True, seed=1), 28.0)
    except ValueError:
        calibrated = float("nan")
    ok = (abs(closed - 10 * np.log10(2)) <= 1e-12 and monotone and 15 < band < 40
          and abs(calibrated - 28) <= 3)
    criterion.report(ok, f"closed form {closed:.4f} dB, monotone {monotone}, "
                         f"Poisson+quantization at max 100 {band:.2f} dB (band 15..40), "
                         f"calibrated to 28 dB at max 100: {calibrated:.2f}")


@pytest.mark.criterion(11, "CLI determinism")
def test_criterion_11_determinism(criterion, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_grid("truth.grid", disk((32, 32), (14, 17), 6))
    write_grid("template.grid", disk((32, 32), (16, 16), 6))
    commands = {
        "sim": ["simulate", "--target", "truth.grid", "--poisson", "--quantize", "--max-intensity",
                "1000", "--gaussian-std", "1.5", "--seed", "5"],
        "tpl": ["template", "--data", "sim/data.grid", "--mode", "geometric"],
        "ret": ["retrieve", "--data", "sim/data.grid", "--template", "template.grid", "--iters", "5",
                "--steps", "3"],
        "dir": ["register-direct", "--template", "template.grid", "--target", "truth.grid",
                "--iters", "5", "--steps", "3"],
        "eh": ["erhio", "--data", "sim/data.grid", "--schedule", "ER10HIO20x2", "--restarts", "3",
               "--seed", "2"],
        "cmp": ["compare", "--runs", "ret", "eh", "--truth", "truth.grid"],
    }
    mismatched = []
    for out, argv in commands.items():
        assert main(argv + ["--out", out]) == 0
        before = _snapshot(out)
        assert main(["rerun", os.path.join(out, "manifest.txt")]) == 0
        if _snapshot(out) != before:
            mismatched.append(out)
    criterion.report(not mismatched, f"{len(commands)} commands replayed, "
                                     f"mismatched: {', '.join(mismatched) or 'none'}")


def _snapshot(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for name in files:
            if name != "timing.txt":
                with open(os.path.join(root, name), "rb") as fh:
                    out[os.path.relpath(os.path.join(root, name), directory)] = fh.read()
    return out
