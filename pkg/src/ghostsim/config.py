"""Experiment configuration: flat key=value files, presets, and builders
for the beam, mask geometry, and object they describe."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from .errors import InvalidParameter, UnsupportedFormat
from .field import ComplexField, GridSpec, make_gaussian_input
from .scene import TransmissionObject, load_object, make_double_slit

DETECTOR_KINDS = ("bucket", "pinhole", "both")
OBJECT_KINDS = ("double-slit", "raster")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one simulated acquisition.

    All lengths are meters.  The grid pitch doubles as the SLM pixel pitch:
    one grid sample per SLM pixel, macro_factor^2 SLM pixels per random
    phase cell.
    """

    wavelength: float
    w0: float
    pitch: float
    nx: int
    ny: int
    mask_cx: int
    mask_cy: int
    macro_factor: int
    L: float
    detector: str
    n_realizations: int
    master_seed: int
    object_kind: str = "double-slit"
    slit_width: float = 170e-6
    slit_separation: float = 400e-6
    slit_height: float = 900e-6
    object_path: str = ""
    object_width: float = 0.0
    output_dir: str = ""

    def __post_init__(self):
        for name in ("wavelength", "w0", "pitch", "L"):
            value = getattr(self, name)
            if not value > 0.0:
                raise InvalidParameter(f"{name} must be positive, got {value}")
        if self.nx < 2 or self.ny < 2:
            raise InvalidParameter(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if self.mask_cx < 1 or self.mask_cy < 1 or self.macro_factor < 1:
            raise InvalidParameter("mask geometry values must be >= 1")
        if self.detector not in DETECTOR_KINDS:
            raise InvalidParameter(f"detector must be one of {DETECTOR_KINDS}")
        if self.object_kind not in OBJECT_KINDS:
            raise InvalidParameter(f"object must be one of {OBJECT_KINDS}")
        if self.n_realizations < 1:
            raise InvalidParameter(f"need at least 1 realization, got {self.n_realizations}")
        if self.master_seed < 0:
            raise InvalidParameter("master seed must be non-negative")
        if self.object_kind == "double-slit":
            if not (0 < self.slit_width < self.slit_separation):
                raise InvalidParameter("slit geometry: need 0 < width < separation")
            if self.slit_height <= 0:
                raise InvalidParameter("slit height must be positive")
        else:
            if not self.object_path:
                raise InvalidParameter("raster object needs object_path")
            if self.object_width <= 0:
                raise InvalidParameter("raster object needs a positive object_width")

    def grid(self) -> GridSpec:
        return GridSpec(nx=self.nx, ny=self.ny, pitch=self.pitch)

    def input_beam(self) -> ComplexField:
        return make_gaussian_input(self.grid(), w0=self.w0, wavelength=self.wavelength)

    def build_object(self) -> TransmissionObject:
        if self.object_kind == "double-slit":
            return make_double_slit(
                self.slit_width, self.slit_separation, self.slit_height, self.grid(), self.L
            )
        return load_object(self.object_path, self.object_width, self.L, self.grid())


_INT_KEYS = {"nx", "ny", "mask_cx", "mask_cy", "macro_factor", "n_realizations", "master_seed"}
_FLOAT_KEYS = {
    "wavelength",
    "w0",
    "pitch",
    "L",
    "slit_width",
    "slit_separation",
    "slit_height",
    "object_width",
}
_ALL_KEYS = {f.name for f in fields(ExperimentConfig)}


def serialize_config(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise UnsupportedFormat(f"config line {lineno}: expected key=value, got {raw!r}")
        if key not in _ALL_KEYS:
            raise UnsupportedFormat(f"config line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise UnsupportedFormat(f"config line {lineno}: bad value for {key}: {value!r}") from None
    missing = {"wavelength", "w0", "pitch", "nx", "ny", "L", "detector"} - values.keys()
    if missing:
        raise UnsupportedFormat(f"config missing required keys: {sorted(missing)}")
    defaults = dict(
        mask_cx=128, mask_cy=128, macro_factor=3, n_realizations=1000, master_seed=2024
    )
    for key, val in defaults.items():
        values.setdefault(key, val)
    return ExperimentConfig(**values)


def save_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(serialize_config(config))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    config = parse_config(path.read_text())
    if config.object_kind == "raster" and config.object_path:
        resolved = Path(config.object_path)
        if not resolved.is_absolute():
            config = replace(config, object_path=str(path.parent / resolved))
    return config


PRESET_NAMES = ("paper-fig2", "paper-fig3", "desk")


def preset_config(name: str) -> ExperimentConfig:
    """Load a packaged preset; raster paths resolve inside the package."""
    if name not in PRESET_NAMES:
        raise InvalidParameter(f"unknown preset {name!r}; available: {PRESET_NAMES}")
    root = resources.files("ghostsim").joinpath("presets")
    config = parse_config(root.joinpath(f"{name}.cfg").read_text())
    if config.object_kind == "raster" and not Path(config.object_path).is_absolute():
        config = replace(config, object_path=str(root.joinpath(config.object_path)))
    return config
