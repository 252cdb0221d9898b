"""Data model and bit-exact I/O for co-registered raster stacks.

A scene is 12 acquisitions (phase, coherence, amplitude), five ancillary
terrain grids and one lidar snow-depth target, all sharing one pixel grid.
Grids are float32 with NaN as the only nodata marker; on disk they are raw
little-endian float32, row-major, top-left origin (`.f32`), with the
dimensions carried only by the JSON manifest (`stack.json`).

Co-registration is asserted (equal shapes), never performed. All types are
immutable after construction; treat the wrapped arrays as read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadAcquisitionCount,
    DimensionMismatch,
    IoError,
    LengthMismatch,
    MissingFile,
    SchemaError,
    ValidationError,
)

N_ACQUISITIONS = 12
ANCILLARY_NAMES = ("incidence", "slope", "aspect", "elevation", "veg_height")


@dataclass(frozen=True)
class Grid:
    """One raster variable: 2-D float32, NaN marks nodata."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise DimensionMismatch(f"grid must be 2-D, got shape {v.shape}")
        if v.dtype != np.float32:
            v = v.astype(np.float32)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def valid_count(self) -> int:
        return int(np.isfinite(self.values).sum())


def _check_unit_interval(grid: Grid, what: str) -> None:
    v = grid.values
    finite = v[np.isfinite(v)]
    if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
        raise ValidationError(f"{what} values must lie in [0, 1]")


@dataclass(frozen=True)
class Acquisition:
    """One repeat-pass acquisition: unwrapped phase, coherence, amplitude."""

    index: int
    date_label: str
    phase: Grid
    coherence: Grid
    amplitude: Grid

    def __post_init__(self):
        if not (self.phase.shape == self.coherence.shape == self.amplitude.shape):
            raise DimensionMismatch(
                f"acquisition {self.index}: phase/coherence/amplitude shapes differ"
            )
        _check_unit_interval(self.coherence, f"acquisition {self.index} coherence")


@dataclass(frozen=True)
class SceneStack:
    """Co-registered bundle of 12 acquisitions, ancillary grids and target."""

    acquisitions: tuple[Acquisition, ...]
    incidence: Grid
    slope: Grid
    aspect: Grid
    elevation: Grid
    veg_height: Grid
    target: Grid
    pixel_spacing_m: float

    def __post_init__(self):
        object.__setattr__(self, "acquisitions", tuple(self.acquisitions))
        if len(self.acquisitions) != N_ACQUISITIONS:
            raise BadAcquisitionCount(
                f"expected {N_ACQUISITIONS} acquisitions, got {len(self.acquisitions)}"
            )
        shape = self.acquisitions[0].phase.shape
        for name, grid in self._named_grids():
            if grid.shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {grid.shape}, stack is {shape}"
                )
        t = self.target.values
        finite = t[np.isfinite(t)]
        if finite.size and finite.min() < 0.0:
            raise ValidationError("target snow depth must be >= 0")
        a = self.aspect.values
        finite = a[np.isfinite(a)]
        if finite.size and (finite.min() < 0.0 or finite.max() >= 360.0):
            raise ValidationError("aspect must lie in [0, 360) degrees")
        if not self.pixel_spacing_m > 0:
            raise ValidationError("pixel_spacing_m must be positive")

    def _named_grids(self):
        for acq in self.acquisitions:
            yield f"acquisition {acq.index} phase", acq.phase
            yield f"acquisition {acq.index} coherence", acq.coherence
            yield f"acquisition {acq.index} amplitude", acq.amplitude
        for name in ANCILLARY_NAMES:
            yield name, getattr(self, name)
        yield "target", self.target

    def grids(self):
        """All 41 grids of the stack, in a fixed order."""
        for _, grid in self._named_grids():
            yield grid

    @property
    def height(self) -> int:
        return self.target.height

    @property
    def width(self) -> int:
        return self.target.width


@dataclass(frozen=True)
class PixelMask:
    """Sorted flat row-major indices of pixels deemed valid."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValidationError("mask indices must be 1-D")
        if idx.size and (np.diff(idx) <= 0).any():
            raise ValidationError("mask indices must be strictly increasing")
        if idx.size and idx[0] < 0:
            raise ValidationError("mask indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)


# ---------------------------------------------------------------------------
# Grid files: raw little-endian float32, row-major
# ---------------------------------------------------------------------------


def save_grid(grid: Grid, path: Path | str) -> None:
    """Write raw `<f4` bytes; round-trips bit-exactly, NaN payloads included."""
    data = np.ascontiguousarray(grid.values, dtype="<f4")
    try:
        with open(path, "wb") as f:
            f.write(data.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write grid to {path}: {exc}") from exc


def load_grid(path: Path | str, width: int, height: int) -> Grid:
    """Read a raw `<f4` grid of the declared dimensions."""
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except FileNotFoundError as exc:
        raise MissingFile(f"grid file not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read grid from {path}: {exc}") from exc
    expected = 4 * width * height
    if len(buf) != expected:
        raise LengthMismatch(
            f"{path}: expected {expected} bytes for {width}x{height}, got {len(buf)}"
        )
    values = np.frombuffer(buf, dtype="<f4").reshape(height, width)
    return Grid(values.copy())


# ---------------------------------------------------------------------------
# Manifest (stack.json)
# ---------------------------------------------------------------------------

_TOP_KEYS = {"width", "height", "pixel_spacing_m", "acquisitions", "ancillary", "target"}
_ACQ_KEYS = {"date", "phase", "coherence", "amplitude"}
_ANC_KEYS = set(ANCILLARY_NAMES)


def _require_keys(obj: dict, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object")
    unknown = set(obj) - required
    if unknown:
        raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing fields {sorted(missing)}")


def load_stack(manifest_path: Path | str) -> SceneStack:
    """Load and validate a SceneStack from a stack.json manifest."""
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text()
    except FileNotFoundError as exc:
        raise MissingFile(f"manifest not found: {manifest_path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read manifest {manifest_path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{manifest_path}: invalid JSON: {exc}") from exc

    _require_keys(doc, _TOP_KEYS, "manifest")
    width, height = doc["width"], doc["height"]
    if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
        raise SchemaError("width/height must be positive integers")
    spacing = doc["pixel_spacing_m"]
    if not isinstance(spacing, (int, float)) or isinstance(spacing, bool) or spacing <= 0:
        raise SchemaError("pixel_spacing_m must be a positive number")
    acq_entries = doc["acquisitions"]
    if not isinstance(acq_entries, list):
        raise SchemaError("acquisitions must be an array")
    if len(acq_entries) != N_ACQUISITIONS:
        raise BadAcquisitionCount(
            f"manifest lists {len(acq_entries)} acquisitions, expected {N_ACQUISITIONS}"
        )
    base = manifest_path.parent

    def grid_for(rel: str, what: str) -> Grid:
        if not isinstance(rel, str):
            raise SchemaError(f"{what}: path must be a string")
        try:
            return load_grid(base / rel, width, height)
        except LengthMismatch as exc:
            # file does not hold width x height floats => grid shape differs
            raise DimensionMismatch(str(exc)) from exc

    acquisitions = []
    for k, entry in enumerate(acq_entries):
        _require_keys(entry, _ACQ_KEYS, f"acquisitions[{k}]")
        if not isinstance(entry["date"], str):
            raise SchemaError(f"acquisitions[{k}].date must be a string")
        acquisitions.append(
            Acquisition(
                index=k,
                date_label=entry["date"],
                phase=grid_for(entry["phase"], f"acquisitions[{k}].phase"),
                coherence=grid_for(entry["coherence"], f"acquisitions[{k}].coherence"),
                amplitude=grid_for(entry["amplitude"], f"acquisitions[{k}].amplitude"),
            )
        )
    _require_keys(doc["ancillary"], _ANC_KEYS, "ancillary")
    ancillary = {
        name: grid_for(doc["ancillary"][name], f"ancillary.{name}")
        for name in ANCILLARY_NAMES
    }
    target = grid_for(doc["target"], "target")
    return SceneStack(
        acquisitions=tuple(acquisitions),
        target=target,
        pixel_spacing_m=float(spacing),
        **ancillary,
    )


def save_stack(stack: SceneStack, out_dir: Path | str) -> Path:
    """Write all grids as .f32 plus a stack.json manifest; returns its path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc

    acq_entries = []
    for acq in stack.acquisitions:
        names = {
            "phase": f"acq{acq.index:02d}_phase.f32",
            "coherence": f"acq{acq.index:02d}_coherence.f32",
            "amplitude": f"acq{acq.index:02d}_amplitude.f32",
        }
        for field, fname in names.items():
            save_grid(getattr(acq, field), out_dir / fname)
        acq_entries.append({"date": acq.date_label, **names})
    anc_entry = {}
    for name in ANCILLARY_NAMES:
        fname = f"{name}.f32"
        save_grid(getattr(stack, name), out_dir / fname)
        anc_entry[name] = fname
    save_grid(stack.target, out_dir / "target.f32")

    manifest = {
        "width": stack.width,
        "height": stack.height,
        "pixel_spacing_m": stack.pixel_spacing_m,
        "acquisitions": acq_entries,
        "ancillary": anc_entry,
        "target": "target.f32",
    }
    path = out_dir / "stack.json"
    try:
        path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc
    return path


def valid_mask(stack: SceneStack) -> PixelMask:
    """Pixels where every one of the 41 grids is non-NaN, sorted ascending."""
    ok = np.ones(stack.target.shape, dtype=bool)
    for grid in stack.grids():
        ok &= np.isfinite(grid.values)
    return PixelMask(np.flatnonzero(ok.ravel()))
