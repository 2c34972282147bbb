"""File formats: binary PGM frames, FDM1 depth maps and CSV metric tables."""

from collections.abc import Sequence
import csv
import io
from pathlib import Path
import re

import numpy as np

from via_inspector.errors import (
    BadMagic,
    DimensionMismatch,
    InvalidParameter,
    MalformedHeader,
    TooFewImages,
    TruncatedPayload,
    UnsupportedMaxval,
)
from via_inspector.logger import logger
from via_inspector.metrology import ComparisonReport, ReferenceValue, TrialStatistics, ViaMeasurement
from via_inspector.rasters import DepthMap, ImageStack


PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")
FDM_MAGIC = b"FDM1"
MAX_PGM_VALUE = 65535

MEASUREMENT_COLUMNS = ["via_id", "level_um", "center_x_um", "center_y_um", "radius_um", "roundness_um"]
COMPARISON_COLUMNS = [
    "via_id",
    "ref_depth_um",
    "meas_depth_um",
    "depth_err_pct",
    "ref_diam_um",
    "meas_diam_um",
    "diam_err_pct",
]
SUMMARY_COLUMNS = ["via_id", "depth_um", "diameter_um"]
TRIAL_COLUMNS = ["via_id", "trials", "depth_mean_um", "depth_std_um", "diam_mean_um", "diam_std_um"]


def _number(value: float) -> str:
    return f"{value:.6g}"


def decode_pgm(data: bytes) -> np.ndarray:
    """
    Decode a binary (P5) graymap into linear intensities in [0, 1].

    Samples are 8-bit for ``maxval < 256`` and 16-bit big-endian otherwise;
    they are divided by ``maxval``.

    Raises
    ------
    MalformedHeader
        If the header cannot be parsed or a sample exceeds ``maxval``.
    UnsupportedMaxval
        If ``maxval`` is outside 1..65535.
    TruncatedPayload
        If the raster is shorter than announced.

    """
    match = PGM_HEADER.match(data)
    if match is None:
        raise MalformedHeader("not a binary PGM (P5) header")
    width, height, maxval = (int(token) for token in match.groups())
    if width == 0 or height == 0:
        raise MalformedHeader(f"PGM has an empty raster ({width}x{height})")
    if not 1 <= maxval <= MAX_PGM_VALUE:
        raise UnsupportedMaxval(f"PGM maxval {maxval} is outside 1..{MAX_PGM_VALUE}")

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    size = width * height * dtype.itemsize
    payload = data[match.end() : match.end() + size]
    if len(payload) < size:
        raise TruncatedPayload(f"PGM raster has {len(payload)} bytes, expected {size}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if samples.max() > maxval:
        raise MalformedHeader(f"PGM samples exceed maxval {maxval}")
    return samples.astype(np.float64) / maxval


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P5 file into a float raster, see :func:`decode_pgm`."""
    return decode_pgm(Path(path).read_bytes())


def encode_pgm(frame: np.ndarray, maxval: int = MAX_PGM_VALUE) -> bytes:
    """Quantize a [0, 1] raster to a P5 graymap of the given ``maxval``."""
    if not 1 <= maxval <= MAX_PGM_VALUE:
        raise UnsupportedMaxval(f"PGM maxval {maxval} is outside 1..{MAX_PGM_VALUE}")
    frame = np.asarray(frame, dtype=np.float64)
    dtype = ">u2" if maxval > 255 else "u1"
    samples = np.rint(np.clip(frame, 0.0, 1.0) * maxval).astype(dtype)
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n{maxval}\n".encode("ascii")
    return header + samples.tobytes()


def save_pgm(frame: np.ndarray, path: str | Path, maxval: int = MAX_PGM_VALUE) -> None:
    """Write one frame as a 16-bit (by default) P5 file."""
    Path(path).write_bytes(encode_pgm(frame, maxval))


def load_image_stack(paths: Sequence[str | Path], pixel_pitch: float = 1.0) -> ImageStack:
    """
    Load the frames of a photometric stereo acquisition.

    Parameters
    ----------
    paths : sequence of path
        P5 files in light order.
    pixel_pitch : float
        Micrometers per pixel.

    Returns
    -------
    ImageStack
        Frames normalized to [0, 1].

    Raises
    ------
    TooFewImages
        If fewer than three paths are given.
    DimensionMismatch
        If the files differ in size.

    """
    if len(paths) < 3:
        raise TooFewImages(f"photometric stereo needs at least 3 images, got {len(paths)}")
    frames = [read_pgm(path) for path in paths]
    for path, frame in zip(paths, frames, strict=True):
        if frame.shape != frames[0].shape:
            raise DimensionMismatch(f"{path} is {frame.shape[1]}x{frame.shape[0]}, expected "
                                    f"{frames[0].shape[1]}x{frames[0].shape[0]}")
    logger.debug(f"Loaded {len(frames)} frames of {frames[0].shape[1]}x{frames[0].shape[0]} pixels")
    return ImageStack(frames=np.stack(frames), pixel_pitch=pixel_pitch)


def encode_depth_map(depth: DepthMap) -> bytes:
    """
    Serialize a depth map as FDM1: four ASCII header lines then little-endian float32, row-major.

    The pitch is written as a positional decimal with the shortest digits that round-trip.
    """
    pitch = np.format_float_positional(float(depth.pixel_pitch), trim="0")
    header = f"FDM1\nwidth {depth.width}\nheight {depth.height}\npitch_um {pitch}\n"
    return header.encode("ascii") + depth.z.astype("<f4").tobytes()


def decode_depth_map(data: bytes) -> DepthMap:
    """
    Parse an FDM1 payload.

    Raises
    ------
    BadMagic
        If the data does not start with the FDM1 line.
    MalformedHeader
        If a header line is missing or unparsable.
    TruncatedPayload
        If fewer than ``width * height * 4`` payload bytes follow.

    """
    if not data.startswith(FDM_MAGIC + b"\n"):
        raise BadMagic("depth map does not start with FDM1")
    lines = data.split(b"\n", 4)
    if len(lines) < 5:
        raise MalformedHeader("FDM1 header must have four lines")
    fields = {}
    for line, key in zip(lines[1:4], ("width", "height", "pitch_um"), strict=True):
        name, _, value = line.decode("ascii", errors="replace").partition(" ")
        if name != key:
            raise MalformedHeader(f"expected FDM1 header field '{key}', got '{name}'")
        fields[key] = value
    try:
        width, height, pitch = int(fields["width"]), int(fields["height"]), float(fields["pitch_um"])
    except ValueError as exc:
        raise MalformedHeader(f"unparsable FDM1 header value: {exc}") from exc
    if width <= 0 or height <= 0 or pitch <= 0.0:
        raise MalformedHeader(f"FDM1 header has nonpositive values ({width}, {height}, {pitch})")

    payload = lines[4]
    size = width * height * 4
    if len(payload) < size:
        raise TruncatedPayload(f"FDM1 payload has {len(payload)} bytes, expected {size}")
    z = np.frombuffer(payload[:size], dtype="<f4").reshape(height, width).astype(np.float64)
    return DepthMap(z=z, pixel_pitch=pitch)


def save_depth_map(depth: DepthMap, path: str | Path) -> None:
    """Write a depth map to an FDM1 file."""
    Path(path).write_bytes(encode_depth_map(depth))
    logger.debug(f"Saved {depth.width}x{depth.height} depth map to {path}")


def load_depth_map(path: str | Path) -> DepthMap:
    """Read an FDM1 file."""
    return decode_depth_map(Path(path).read_bytes())


def _write_rows(columns: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def emit_metrics(item: ComparisonReport | ViaMeasurement | Sequence[ViaMeasurement]) -> str:
    """
    Render measurements or a comparison report as CSV text.

    Measurements give one row per slice profile
    (``via_id,level_um,center_x_um,center_y_um,radius_um,roundness_um``),
    a report one row per via
    (``via_id,ref_depth_um,meas_depth_um,depth_err_pct,ref_diam_um,meas_diam_um,diam_err_pct``)
    closed by a ``MAPE`` row holding the mean absolute percentage errors.
    Numbers carry 6 significant digits and the header is always written.
    """
    if isinstance(item, ComparisonReport):
        rows = [
            [
                row.via_id,
                _number(row.ref_depth),
                _number(row.meas_depth),
                _number(row.depth_error_pct),
                _number(row.ref_diameter),
                _number(row.meas_diameter),
                _number(row.diameter_error_pct),
            ]
            for row in item.rows
        ]
        rows.append(["MAPE", "", "", _number(item.depth_mape), "", "", _number(item.diameter_mape)])
        return _write_rows(COMPARISON_COLUMNS, rows)

    measurements = [item] if isinstance(item, ViaMeasurement) else list(item)
    rows = [
        [
            measurement.via_id,
            _number(profile.level),
            _number(profile.circle.cx),
            _number(profile.circle.cy),
            _number(profile.circle.r),
            _number(profile.roundness),
        ]
        for measurement in measurements
        for profile in measurement.profiles
    ]
    return _write_rows(MEASUREMENT_COLUMNS, rows)


def emit_summary(measurements: Sequence[ViaMeasurement]) -> str:
    """Render one ``via_id,depth_um,diameter_um`` row per via."""
    rows = [[m.via_id, _number(m.depth), _number(m.diameter)] for m in measurements]
    return _write_rows(SUMMARY_COLUMNS, rows)


def emit_trials(statistics: Sequence[TrialStatistics]) -> str:
    """Render one ``via_id,trials,depth_mean_um,depth_std_um,diam_mean_um,diam_std_um`` row per via."""
    rows = [
        [
            stat.via_id,
            str(stat.trials),
            _number(stat.depth_mean),
            _number(stat.depth_std),
            _number(stat.diameter_mean),
            _number(stat.diameter_std),
        ]
        for stat in statistics
    ]
    return _write_rows(TRIAL_COLUMNS, rows)


def parse_summary(text: str) -> list[ReferenceValue]:
    """
    Parse a ``via_id,depth_um,diameter_um`` table.

    Raises
    ------
    MalformedHeader
        If a column is missing.
    InvalidParameter
        If a value is not a positive number.

    """
    reader = csv.DictReader(io.StringIO(text))
    missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or [])
    if missing:
        raise MalformedHeader(f"summary table lacks columns {sorted(missing)}")
    values = []
    for line, row in enumerate(reader, start=2):
        try:
            values.append(
                ReferenceValue(via_id=row["via_id"], depth=float(row["depth_um"]), diameter=float(row["diameter_um"]))
            )
        except ValueError as exc:
            raise InvalidParameter(f"summary line {line}: depth and diameter must be positive numbers") from exc
    return values


def read_summary(path: str | Path) -> list[ReferenceValue]:
    """Read a summary CSV file, see :func:`parse_summary`."""
    return parse_summary(Path(path).read_text(encoding="utf-8"))
