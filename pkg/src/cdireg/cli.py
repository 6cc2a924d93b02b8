"""Command-line front end.

Every command writes its outputs plus a ``manifest.txt`` into ``--out``.
A manifest doubles as a config file: ``--config manifest.txt`` loads its
values and any flags given on the command line override them. ``rerun``
replays a manifest.

Exit codes: 0 success, 2 usage, 3 input format, 4 numerical degeneracy.
"""
import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .actions import transported_template
from .baseline import ShrinkwrapConfig, parse_schedule, run_er_hio
from .forward import DegenerateInputError, forward_modulus
from .grid import displacement
from .io import (GridFormatError, ensure_dir, read_grid, read_manifest, sha256_file,
                 write_csv, write_grid, write_manifest, write_png)
from .lddmm import KernelParams, RunConfig, path_distance, run_registration
from .simkit import NoiseModel, calibrate_gaussian_std, recon_error, simulate_measurement
from .template import THRESHOLD_CLEAN, TemplateShape, estimate_template

log = logging.getLogger("cdireg")

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_DEGENERATE = 4

# manifest keys that are bookkeeping, not command options
_META_KEYS = {"command", "version"}


class UsageError(Exception):
    pass


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _inputs_hashes(args, names):
    out = {}
    for name in names:
        path = getattr(args, name, None)
        if path:
            out[f"sha256.{name}"] = sha256_file(path)
    return out


def _manifest(args, command, inputs=(), extra=None):
    entries = {"command": command, "version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "config", "verbose") or key.startswith("_"):
            continue
        entries[key] = value
    entries.update(_inputs_hashes(args, inputs))
    if extra:
        entries.update(extra)
    return entries


def _finish(args, command, inputs, extra, started):
    write_manifest(os.path.join(args.out, "manifest.txt"),
                   _manifest(args, command, inputs, extra))
    # wall time lives outside the manifest so reruns stay byte-identical
    with open(os.path.join(args.out, "timing.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"wall_time_s = {time.perf_counter() - started:.3f}\n")


def _read_snr(data_path):
    snr_file = os.path.join(os.path.dirname(os.path.abspath(data_path)), "snr.txt")
    if os.path.exists(snr_file):
        with open(snr_file, encoding="utf-8") as fh:
            return fh.read().strip()
    return ""


# -- commands ---------------------------------------------------------------

def cmd_simulate(args):
    started = time.perf_counter()
    target = read_grid(args.target)
    noise = NoiseModel(args.max_intensity, args.poisson, args.quantize, args.gaussian_std, args.seed)
    extra = {}
    if args.target_snr is not None:
        std, achieved = calibrate_gaussian_std(target, noise, args.target_snr)
        noise = NoiseModel(noise.max_intensity, noise.poisson, noise.quantize, std, noise.seed)
        extra = {"calibrated_gaussian_std": std, "calibrated_snr": achieved}
    b, snr = simulate_measurement(target, noise)
    ensure_dir(args.out)
    write_grid(os.path.join(args.out, "data.grid"), b)
    with open(os.path.join(args.out, "snr.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{snr!r}\n")
    write_png(os.path.join(args.out, "intensity.png"), np.fft.fftshift(b ** 2), log_scale=True)
    _finish(args, "simulate", ["target"], extra, started)
    log.info("simulated data with SNR %s dB", snr)


def cmd_template(args):
    started = time.perf_counter()
    b = read_grid(args.data)
    action = "geometric" if args.mode == "geometric" else "mass"
    template, report = estimate_template(b, action, G=args.G, shape=TemplateShape(args.shape),
                                         threshold=args.threshold, aspect=args.aspect)
    ensure_dir(args.out)
    write_grid(os.path.join(args.out, "template.grid"), template)
    write_manifest(os.path.join(args.out, "report.txt"), report)
    write_png(os.path.join(args.out, "template.png"), template)
    _finish(args, "template", ["data"], None, started)


def _run_config(args, mode, similarity):
    return RunConfig(sigma=args.sigma, kernel=KernelParams(args.eta, args.gamma),
                     n_steps=args.steps, cap=args.cap, k_max=args.iters,
                     action=args.action, similarity=similarity, mode=mode,
                     jacobian_power=args.jacobian_power, units=args.units)


def _write_registration(args, I0, result, cfg):
    out = ensure_dir(args.out)
    write_grid(os.path.join(out, "reconstruction.grid"), result.reconstruction)
    write_png(os.path.join(out, "reconstruction.png"), result.reconstruction)
    write_csv(os.path.join(out, "energy.csv"), ["iter", "E", "E1", "E2", "max_v"],
              [(r.iteration, r.energy, r.e1, r.e2, r.max_velocity) for r in result.trace])
    evo = ensure_dir(os.path.join(out, "evolution"))
    for j in range(result.path.n_steps + 1):
        write_grid(os.path.join(evo, f"estimate_t{j:02d}.grid"),
                   transported_template(I0, result.path, j, cfg.action, cfg.jacobian_power))
    u = displacement(result.path.phi_t0[-1])
    write_grid(os.path.join(out, "displacement_0.grid"), u[0])
    write_grid(os.path.join(out, "displacement_1.grid"), u[1])
    distance = path_distance(result.v, cfg.kernel_for(I0.shape))
    with open(os.path.join(out, "path_distance.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{distance!r}\n")
    return distance


def cmd_retrieve(args):
    started = time.perf_counter()
    b = read_grid(args.data)
    I0 = read_grid(args.template)
    if I0.shape != b.shape:
        raise UsageError(f"template shape {I0.shape} does not match data shape {b.shape}")
    cfg = _run_config(args, "indirect", args.similarity)
    result = run_registration(I0, b, cfg)
    distance = _write_registration(args, I0, result, cfg)
    _finish(args, "retrieve", ["data", "template"],
            {"status": result.status, "path_distance": distance,
             "iterations_run": len(result.trace), "data_snr": _read_snr(args.data)}, started)


def cmd_register_direct(args):
    started = time.perf_counter()
    I0 = read_grid(args.template)
    I1 = read_grid(args.target)
    if I0.shape != I1.shape:
        raise UsageError(f"template shape {I0.shape} does not match target shape {I1.shape}")
    cfg = _run_config(args, "direct", args.similarity)
    result = run_registration(I0, I1, cfg)
    distance = _write_registration(args, I0, result, cfg)
    _finish(args, "register-direct", ["template", "target"],
            {"status": result.status, "path_distance": distance,
             "iterations_run": len(result.trace)}, started)


def cmd_erhio(args):
    started = time.perf_counter()
    b = read_grid(args.data)
    truth = read_grid(args.truth) if args.truth else None
    schedule = parse_schedule(args.schedule)
    shrink = ShrinkwrapConfig(threshold=args.threshold, every=args.shrinkwrap_every)
    result = run_er_hio(b, schedule, shrink, args.restarts, args.seed, truth, args.beta)
    ensure_dir(args.out)
    write_grid(os.path.join(args.out, "best.grid"), result.best)
    write_png(os.path.join(args.out, "best.png"), result.best)
    write_csv(os.path.join(args.out, "errors.csv"), ["restart", "error"], enumerate(result.errors))
    _finish(args, "erhio", ["data", "truth"],
            {"ranked_by": result.ranked_by, "best_restart": result.best_index,
             "iterations_run": result.iterations, "data_snr": _read_snr(args.data)}, started)


_RESULT_FILES = {"retrieve": "reconstruction.grid", "register-direct": "reconstruction.grid",
                 "erhio": "best.grid"}


def _run_row(run_dir, truth):
    man = read_manifest(os.path.join(run_dir, "manifest.txt"))
    command = man.get("command", "")
    if command not in _RESULT_FILES:
        raise UsageError(f"{run_dir}: no reconstruction for command {command!r}")
    recon = read_grid(os.path.join(run_dir, _RESULT_FILES[command]))
    method = {"retrieve": f"lddmm-{man.get('action', '')}-{man.get('similarity', '')}",
              "register-direct": "lddmm-direct", "erhio": f"erhio-{man.get('schedule', '')}"}[command]
    wall = ""
    timing = os.path.join(run_dir, "timing.txt")
    if os.path.exists(timing):
        wall = read_manifest(timing).get("wall_time_s", "")
    return [os.path.basename(os.path.normpath(run_dir)), method, man.get("data_snr", ""),
            f"{recon_error(recon, truth):.6f}", man.get("iterations_run", ""), wall]


def cmd_compare(args):
    started = time.perf_counter()
    truth = read_grid(args.truth)
    header = ["run", "method", "snr", "error", "iterations", "wall_time_s"]
    rows = [_run_row(d, truth) for d in args.runs]
    ensure_dir(args.out)
    write_csv(os.path.join(args.out, "comparison.csv"), header, rows)
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    with open(os.path.join(args.out, "comparison.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for r in [header] + rows:
            fh.write("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    _finish(args, "compare", ["truth"], None, started)


# -- parser -----------------------------------------------------------------

def _add_registration_options(p, similarity_default):
    p.add_argument("--action", choices=["geometric", "mass"], default="geometric")
    p.add_argument("--similarity", choices=["l2", "cc"], default=similarity_default)
    p.add_argument("--sigma", type=_positive(float), default=1e-3)
    p.add_argument("--eta", type=float, default=5e-3)
    p.add_argument("--gamma", type=_positive(float), default=1.0)
    p.add_argument("--steps", type=_positive(int), default=10)
    p.add_argument("--cap", type=_positive(float), default=1.0 / 500.0)
    p.add_argument("--iters", type=_positive(int), default=1000)
    p.add_argument("--units", choices=["unit", "pixel"], default="unit",
                   help="length unit of velocities, eta and cap (default: unit domain)")
    p.add_argument("--jacobian-power", type=float, default=1.0,
                   help="exponent of |D phi| in the mass-preserving action")


def build_parser():
    parser = argparse.ArgumentParser(prog="cdireg", description="Phase retrieval by deformable-template registration, with an ER/HIO baseline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="manifest/config file supplying defaults")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        return p

    p = command("simulate", cmd_simulate, "simulate noisy diffraction amplitudes")
    p.add_argument("--target", required=True)
    p.add_argument("--max-intensity", type=_positive(float), default=100.0)
    p.add_argument("--poisson", action="store_true")
    p.add_argument("--quantize", action="store_true")
    p.add_argument("--gaussian-std", type=float, default=0.0)
    p.add_argument("--target-snr", type=float, default=None,
                   help="calibrate --gaussian-std to reach this SNR (dB)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("template", cmd_template, "estimate a template from amplitudes")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["geometric", "mass"], required=True)
    p.add_argument("--G", type=_positive(float), default=4.0)
    p.add_argument("--shape", choices=["disk", "rect"], default="disk")
    p.add_argument("--aspect", type=_positive(float), default=1.0)
    p.add_argument("--threshold", type=_fraction, default=THRESHOLD_CLEAN)
    p.add_argument("--out", required=True)

    p = command("retrieve", cmd_retrieve, "phase retrieval by indirect registration")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True)
    _add_registration_options(p, "cc")
    p.add_argument("--out", required=True)

    p = command("register-direct", cmd_register_direct, "direct image registration")
    p.add_argument("--template", required=True)
    p.add_argument("--target", required=True)
    _add_registration_options(p, "l2")
    p.add_argument("--out", required=True)

    p = command("erhio", cmd_erhio, "ER/HIO phase retrieval with shrinkwrap")
    p.add_argument("--data", required=True)
    p.add_argument("--schedule", default="ER50HIO100x20")
    p.add_argument("--threshold", type=_fraction, default=0.15)
    p.add_argument("--shrinkwrap-every", type=_positive(int), default=50)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--restarts", type=_positive(int), default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True)

    p = command("compare", cmd_compare, "tabulate reconstruction errors of runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the recorded one)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name!r}")


def manifest_argv(parser, manifest):
    """Command-line tokens reproducing the options stored in ``manifest``."""
    command = manifest.get("command")
    if not command:
        raise UsageError("manifest has no 'command' entry")
    sub = _subparser(parser, command)
    argv = [command]
    for action in sub._actions:
        if not action.option_strings or action.dest not in manifest:
            continue
        if action.dest in _META_KEYS or action.dest in ("config", "verbose", "help"):
            continue
        value = manifest[action.dest]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value == "true":
                argv.append(flag)
        elif action.nargs == "+":
            argv.append(flag)
            argv.extend(value.split())
        elif value != "":
            argv.extend([flag, value])
    return argv


def _split_config(argv):
    """Remove ``--config PATH`` from ``argv``; returns ``(path, rest)``."""
    rest, path = [], None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            path = next(it, None)
            if path is None:
                raise UsageError("--config needs a file argument")
        elif tok.startswith("--config="):
            path = tok.partition("=")[2]
        else:
            rest.append(tok)
    return path, rest


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    config, argv = _split_config(argv)
    if config and argv and not argv[0].startswith("-"):
        # manifest values become leading tokens; later flags override them
        manifest = read_manifest(config)
        manifest["command"] = argv[0]
        argv = manifest_argv(parser, manifest) + argv[1:]
    args = parser.parse_args(argv)
    if args.command == "rerun":
        manifest = read_manifest(args.manifest)
        replay = manifest_argv(parser, manifest)
        if args.out:
            replay += ["--out", args.out]
        if args.verbose:
            replay.append("-v")
        return parser.parse_args(replay)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except (UsageError, GridFormatError, OSError) as exc:
        print(f"cdireg: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT if isinstance(exc, GridFormatError) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"cdireg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GridFormatError as exc:
        print(f"cdireg: input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DegenerateInputError as exc:
        print(f"cdireg: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"cdireg: invalid input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE if "degenerate" in str(exc) else EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"cdireg: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return 0


if __name__ == "__main__":
    sys.exit(main())
