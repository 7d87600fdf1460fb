"""Command-line runner: canned or file-based experiment configs in, records
files, graymaps, raw dumps, and CSV reports out.

Exit codes: 0 success, 1 usage or config problem, 2 runtime failure
(sampling, missing data, mismatched inputs).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    collect_speckle_ensemble,
    sharpness,
    snr_curve,
    speckle_stats,
    theoretical_resolution,
)
from .config import (
    PRESET_NAMES,
    ExperimentConfig,
    load_config,
    preset_config,
    save_config,
)
from .errors import GhostSimError
from .field import GridSpec
from .io import (
    display_normalize,
    read_metadata,
    read_raw,
    write_csv,
    write_metadata,
    write_pgm,
    write_raw,
)
from .phase_retrieval import extract_intensities, gerchberg_saxton
from .reconstruct import (
    Fingerprint,
    PlaneRef,
    ReconstructionResult,
    config_from_records_header,
    config_matches_records,
    depth_stack,
    read_records,
    run_gd,
    run_gi,
    select_records,
    write_records,
)

ENV_OUTPUT_DIR = "GHOSTSIM_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse with the usage-error exit code pinned to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fail(code: int, exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return code


def _output_dir(args, config: ExperimentConfig | None = None) -> Path:
    """--output-dir beats the environment override beats the config field."""
    candidates = (
        getattr(args, "output_dir", None),
        os.environ.get(ENV_OUTPUT_DIR),
        config.output_dir if config is not None else "",
    )
    chosen = next((c for c in candidates if c), ".")
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_from_args(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise GhostSimError("give either --preset or --config, not both")
    if args.preset:
        config = preset_config(args.preset)
    elif args.config:
        config = load_config(args.config)
    else:
        raise GhostSimError("need --preset or --config")
    overrides = {}
    if getattr(args, "n_realizations", None) is not None:
        overrides["n_realizations"] = args.n_realizations
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "detector", None):
        overrides["detector"] = args.detector
    return dataclasses.replace(config, **overrides) if overrides else config


def _result_meta(result: ReconstructionResult) -> dict:
    fp = result.fingerprint
    meta = {
        "plane": result.plane.kind,
        "n_used": result.n_used,
        "grid": f"{result.grid.nx}x{result.grid.ny}@{result.grid.pitch!r}",
    }
    if result.plane.z is not None:
        meta["z"] = float(result.plane.z)
    if fp is not None:
        # the fingerprint grid is the source grid, which differs from the
        # reconstruction grid on the fourier plane
        meta.update(
            seed=fp.master_seed,
            wavelength=fp.wavelength,
            w0=fp.w0,
            source_grid=f"{fp.grid.nx}x{fp.grid.ny}@{fp.grid.pitch!r}",
        )
    return meta


def _write_result(out_dir: Path, stem: str, result: ReconstructionResult, raw: bool) -> None:
    write_pgm(out_dir / f"{stem}.pgm", display_normalize(result.G))
    write_metadata(out_dir / f"{stem}.meta", _result_meta(result))
    if raw:
        write_raw(out_dir / f"{stem}.raw", result.G)
    print(f"wrote {out_dir / stem}.pgm ({result.n_used} realizations)")


def _parse_grid(text: str) -> GridSpec:
    nxy, _, pitch = text.partition("@")
    nx, _, ny = nxy.partition("x")
    return GridSpec(nx=int(nx), ny=int(ny), pitch=float(pitch))


def _load_result(raw_path: str) -> ReconstructionResult:
    """Rebuild a ReconstructionResult from a raw dump plus its .meta sidecar."""
    path = Path(raw_path)
    G = read_raw(path)
    meta = read_metadata(path.with_suffix(".meta"))
    grid = _parse_grid(meta["grid"])
    fingerprint = None
    if "seed" in meta:
        fingerprint = Fingerprint(
            master_seed=int(meta["seed"]),
            wavelength=float(meta["wavelength"]),
            w0=float(meta["w0"]),
            grid=_parse_grid(meta["source_grid"]),
        )
    if meta["plane"] == "fourier":
        plane = PlaneRef(kind="fourier")
    else:
        plane = PlaneRef(kind="fresnel", z=float(meta["z"]))
    return ReconstructionResult(
        G=G, plane=plane, n_used=int(meta["n_used"]), grid=grid, fingerprint=fingerprint
    )


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        config = _config_from_args(args)
        out_dir = _output_dir(args, config)
    except (GhostSimError, OSError) as exc:
        return _fail(1, exc)
    try:
        result, records = run_gi(config, threads=args.threads)
        save_config(out_dir / "config.txt", config)
        kinds = ("bucket", "pinhole") if config.detector == "both" else (config.detector,)
        for kind in kinds:
            path = out_dir / f"records-{kind}.txt"
            write_records(path, records, config, kind)
            print(f"wrote {path} ({len(select_records(records, kind))} records)")
        _write_result(out_dir, "gi", result, args.raw)
    except (GhostSimError, OSError) as exc:
        return _fail(2, exc)
    return 0


def cmd_reconstruct(args) -> int:
    try:
        records, header = read_records(args.records)
        explicit_config = bool(args.preset or args.config)
        if explicit_config:
            config = _config_from_args(args)
            if not config_matches_records(config, header):
                raise GhostSimError(
                    "config does not match the records file header; "
                    "refusing to correlate mismatched geometry"
                )
        else:
            config = config_from_records_header(header, len(records))
        out_dir = _output_dir(args, config)
        if args.fourier and args.z is not None:
            raise GhostSimError("--fourier and --z are mutually exclusive")
        z_list = None
        if args.z is not None:
            z_list = [float(tok) for tok in args.z.split(",") if tok.strip()]
            if not z_list:
                raise GhostSimError("--z needs at least one plane, e.g. --z 0.11,0.13")
    except (GhostSimError, OSError, ValueError) as exc:
        return _fail(1, exc)
    try:
        if args.fourier:
            result = run_gd(records, config, threads=args.threads)
            _write_result(out_dir, "gd", result, args.raw)
            return 0
        if z_list is None:
            z_list = [config.L]
        results = depth_stack(records, z_list, config, threads=args.threads)
        for i, result in enumerate(results):
            _write_result(out_dir, f"g-{i:03d}-z{result.plane.z:g}", result, args.raw)
        if len(results) > 1:
            # with a known object, score focus on its support only; the
            # full-frame metric tracks speckle grain, not the image
            support = config.build_object().support if explicit_config else None
            rows = [(res.plane.z, sharpness(res.G, support)) for res in results]
            write_csv(
                out_dir / "sharpness.csv",
                rows,
                ("z_m", "sharpness"),
                header_lines=(f"records={args.records}", f"n={results[0].n_used}"),
            )
            print(f"wrote {out_dir / 'sharpness.csv'}")
    except (GhostSimError, OSError) as exc:
        return _fail(2, exc)
    return 0


def _default_checkpoints(n: int) -> list[int]:
    ladder = [c for c in (250, 500, 1000, 2000, 4000, 8000, 16000) if c <= n]
    if n >= 2 and n not in ladder:
        ladder.append(n)
    if len(ladder) < 2:
        ladder = sorted({max(2, n // 4), max(2, n // 2), n})
    return ladder


def cmd_analyze(args) -> int:
    try:
        records, header = read_records(args.records)
        config = _config_from_args(args)
        if not config_matches_records(config, header):
            raise GhostSimError("config does not match the records file header")
        out_dir = _output_dir(args, config)
        checkpoints = (
            [int(tok) for tok in args.checkpoints.split(",")]
            if args.checkpoints
            else _default_checkpoints(len(select_records(records, header.get("detector", "bucket"))))
        )
    except (GhostSimError, OSError, ValueError) as exc:
        return _fail(1, exc)
    try:
        res = theoretical_resolution(config.wavelength, config.w0, config.L)
        write_csv(
            out_dir / "resolution.csv",
            [
                ("coherence_width_m", res.dx),
                ("depth_of_focus_m", res.dz),
                ("far_field_width_rad_per_m", res.dk),
                ("width_product", res.product),
            ],
            ("quantity", "value"),
        )
        print(f"wrote {out_dir / 'resolution.csv'}")

        curve = snr_curve(records, config, tuple(checkpoints), config.build_object())
        write_csv(
            out_dir / "snr.csv",
            curve.points,
            ("N", "snr"),
            header_lines=(
                f"slope={curve.slope!r}",
                f"intercept={curve.intercept!r}",
                f"n_s_estimate={curve.n_s_estimate!r}",
            ),
        )
        print(f"wrote {out_dir / 'snr.csv'} (slope {curve.slope:.3f})")

        n_speckle = args.speckle_n or min(len(records), 1000)
        ensemble = collect_speckle_ensemble(config, z=config.L, n=n_speckle)
        stats = speckle_stats(ensemble)
        write_csv(
            out_dir / "speckle.csv",
            [
                ("contrast", stats.contrast),
                ("coherence_width_m", stats.coherence_width),
                ("exp_fit_pvalue", stats.exp_fit_pvalue),
                ("n_realizations", stats.n_realizations),
            ],
            ("metric", "value"),
        )
        print(f"wrote {out_dir / 'speckle.csv'}")
    except (GhostSimError, OSError) as exc:
        return _fail(2, exc)
    return 0


def cmd_retrieve(args) -> int:
    try:
        gi = _load_result(args.near)
        gd = _load_result(args.far)
        out_dir = _output_dir(args)
    except (GhostSimError, OSError, KeyError, ValueError) as exc:
        return _fail(1, exc)
    try:
        problem = extract_intensities(
            gi, gd, max_iterations=args.iterations, tolerance=args.tolerance
        )
        result = gerchberg_saxton(problem, seed=args.seed, restarts=args.restarts)
        write_pgm(out_dir / "amplitude.pgm", display_normalize(np.abs(result.estimate)))
        phase = (np.angle(result.estimate) + np.pi) / (2 * np.pi)
        write_pgm(out_dir / "phase.pgm", np.clip(phase, 0.0, 1.0))
        write_csv(
            out_dir / "gs-errors.csv",
            list(enumerate(result.errors)),
            ("iter", "error"),
        )
        write_metadata(
            out_dir / "retrieve.meta",
            {
                "converged": str(result.converged).lower(),
                "iterations": len(result.errors),
                "final_error": result.errors[-1],
                "restart_used": result.restart_used,
                "restarts": args.restarts,
                "seed": args.seed,
            },
        )
        print(
            f"wrote {out_dir / 'amplitude.pgm'}, phase.pgm, gs-errors.csv "
            f"(converged={result.converged}, final error {result.errors[-1]:.3e})"
        )
    except (GhostSimError, OSError) as exc:
        return _fail(2, exc)
    return 0


# --- parser ------------------------------------------------------------------

def _add_config_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESET_NAMES, help="canned experiment")
    p.add_argument("--config", help="config file path")


def _add_common_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", default=None, help=f"output directory (or ${ENV_OUTPUT_DIR})")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results identical)")
    p.add_argument("--raw", action="store_true", help="also dump raw float64 G arrays")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ghostsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="run an acquisition, write records and G")
    _add_config_source(p)
    p.add_argument("-N", "--n-realizations", type=int, default=None, help="override N")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument(
        "--detector", choices=("bucket", "pinhole", "both"), default=None, help="override detector"
    )
    _add_common_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="correlate a records file at chosen planes")
    p.add_argument("records", help="records file from simulate")
    _add_config_source(p)
    p.add_argument("--z", default=None, help="comma-separated plane distances in meters")
    p.add_argument("--fourier", action="store_true", help="ghost diffraction pattern instead")
    _add_common_output(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="SNR curve, speckle statistics, resolution report")
    p.add_argument("records", help="records file from simulate")
    _add_config_source(p)
    p.add_argument("--checkpoints", default=None, help="comma-separated N values for the SNR fit")
    p.add_argument("--speckle-n", type=int, default=None, help="ensemble size for speckle stats")
    _add_common_output(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("retrieve", help="Gerchberg-Saxton phase retrieval from GI+GD raw dumps")
    p.add_argument("--near", required=True, help="object-plane G raw dump (with .meta sidecar)")
    p.add_argument("--far", required=True, help="Fourier-plane G raw dump (with .meta sidecar)")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=2024)
    _add_common_output(p)
    p.set_defaults(func=cmd_retrieve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
