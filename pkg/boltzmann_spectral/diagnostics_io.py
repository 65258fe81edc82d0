"""Physical-space reconstruction and serialization of tables, series and reports.

Coefficient table container (little endian):

    b"BSPT" | u32 header length | canonical JSON header | payload

The payload holds, per section in a fixed order, the int32 index keys followed by the
float64 values (complex values as interleaved re/im). The header records the section
layout and the blake2b digest of the payload. A path ending in `.json` selects the
plain JSON interchange form instead.
"""

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel

from .cascade import SpectralState
from .coefficients import FORMAT_VERSION, CoeffTable
from .errors import (
    AdmissibilityError,
    DigestMismatchError,
    MalformedFileError,
    VersionMismatchError,
)
from .models import KernelParams, ModeIndex, QuadratureSpec, SolveReport, VelocityGrid
from .specialfn import phi_eigenfunction, sqrt_maxwellian

MAGIC = b"BSPT"

# (name, key width, complex values)
_SECTIONS = (
    ("linear", 2, False),
    ("lin1", 2, False),
    ("lin2", 2, False),
    ("rad1", 3, False),
    ("rad2", 3, False),
    ("mu", 7, True),
)

_MONITOR_COLUMNS = ("l2_norm", "dissipation_integral", "weighted_norm", "decay_bound_margin")


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def table_digest(payload: bytes) -> str:
    return hashlib.blake2b(payload, digest_size=32).hexdigest()


def _encode_sections(table: CoeffTable) -> tuple[bytes, list[dict]]:
    chunks: list[bytes] = []
    layout: list[dict] = []
    for name, width, is_complex in _SECTIONS:
        entries = sorted(getattr(table, name).items())
        keys = np.array([key for key, _ in entries], dtype="<i4").reshape(len(entries), width)
        if is_complex:
            values = np.array([[v.real, v.imag] for _, v in entries], dtype="<f8").reshape(-1, 2)
        else:
            values = np.array([v for _, v in entries], dtype="<f8")
        chunks.append(keys.tobytes())
        chunks.append(values.tobytes())
        layout.append({"name": name, "key_width": width, "complex": is_complex, "count": len(entries)})
    return b"".join(chunks), layout


def _header(table: CoeffTable, digest: str, layout: list[dict]) -> dict:
    return {
        "format_version": table.version,
        "s": table.params.s,
        "kappa_beta": table.params.kappa_beta,
        "model": table.params.model,
        "n_max_energy": table.n_max_energy,
        "invariant_sources": table.invariant_sources,
        "quadrature": table.spec.model_dump(),
        "digest": digest,
        "sections": layout,
    }


def write_table(path: Path | str, table: CoeffTable) -> str:
    """Write a coefficient table; returns the content digest.

    Identical tables produce byte-identical files.
    """
    path = Path(path)
    payload, layout = _encode_sections(table)
    digest = table_digest(payload)
    header = _header(table, digest, layout)
    if path.suffix == ".json":
        body = {
            "header": header,
            "tables": {
                name: [
                    [*key, value.real, value.imag] if is_complex else [*key, value]
                    for key, value in sorted(getattr(table, name).items())
                ]
                for name, _, is_complex in _SECTIONS
            },
        }
        path.write_text(json.dumps(body, sort_keys=True, indent=1))
    else:
        encoded = _canonical_json(header)
        path.write_bytes(MAGIC + struct.pack("<I", len(encoded)) + encoded + payload)
    logger.info(f"Wrote coefficient table to {path} (digest {digest[:16]})")
    return digest


def _table_from_sections(header: dict, sections: dict[str, dict]) -> CoeffTable:
    try:
        return CoeffTable(
            params=KernelParams(s=header["s"], kappa_beta=header["kappa_beta"], model=header["model"]),
            spec=QuadratureSpec(**header["quadrature"]),
            n_max_energy=int(header["n_max_energy"]),
            invariant_sources=bool(header["invariant_sources"]),
            version=header["format_version"],
            **sections,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(f"Table header is incomplete: {e}") from e


def _check_version(header: dict, path: Path) -> None:
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"Table {path} has format version {version!r}, expected {FORMAT_VERSION!r}"
        )


def _read_binary(path: Path, raw: bytes) -> CoeffTable:
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise MalformedFileError(f"{path} is not a coefficient table")
    (header_length,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_length:
        raise MalformedFileError(f"{path} is truncated inside the header")
    try:
        header = json.loads(raw[8 : 8 + header_length])
    except json.JSONDecodeError as e:
        raise MalformedFileError(f"{path} has an unreadable header: {e}") from e
    _check_version(header, path)

    payload = raw[8 + header_length :]
    sections: dict[str, dict] = {}
    offset = 0
    try:
        for section in header["sections"]:
            count, width = int(section["count"]), int(section["key_width"])
            values_per = 2 if section["complex"] else 1
            key_bytes, value_bytes = 4 * count * width, 8 * count * values_per
            if offset + key_bytes + value_bytes > len(payload):
                raise MalformedFileError(f"{path} is truncated in section {section['name']}")
            keys = np.frombuffer(payload, dtype="<i4", count=count * width, offset=offset)
            offset += key_bytes
            values = np.frombuffer(payload, dtype="<f8", count=count * values_per, offset=offset)
            offset += value_bytes
            keys = keys.reshape(count, width)
            if section["complex"]:
                pairs = values.reshape(count, 2)
                decoded = {
                    tuple(int(i) for i in key): complex(re, im)
                    for key, (re, im) in zip(keys, pairs, strict=True)
                }
            else:
                decoded = {
                    tuple(int(i) for i in key): float(v) for key, v in zip(keys, values, strict=True)
                }
            sections[section["name"]] = decoded
    except (KeyError, TypeError) as e:
        raise MalformedFileError(f"{path} has an invalid section layout: {e}") from e
    if offset != len(payload):
        raise MalformedFileError(f"{path} has {len(payload) - offset} trailing bytes")

    if table_digest(payload) != header.get("digest"):
        raise DigestMismatchError(f"Content digest of {path} does not match its header")
    return _table_from_sections(header, sections)


def _read_json(path: Path, text: str) -> CoeffTable:
    try:
        body = json.loads(text)
        header = body["header"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise MalformedFileError(f"{path} is not a coefficient table: {e}") from e
    _check_version(header, path)
    sections: dict[str, dict] = {}
    try:
        for name, width, is_complex in _SECTIONS:
            rows = body["tables"][name]
            if is_complex:
                sections[name] = {tuple(row[:width]): complex(row[width], row[width + 1]) for row in rows}
            else:
                sections[name] = {tuple(row[:width]): float(row[width]) for row in rows}
    except (KeyError, IndexError, TypeError) as e:
        raise MalformedFileError(f"{path} has an invalid table section: {e}") from e
    table = _table_from_sections(header, sections)
    payload, _ = _encode_sections(table)
    if table_digest(payload) != header.get("digest"):
        raise DigestMismatchError(f"Content digest of {path} does not match its header")
    return table


def read_table(path: Path | str) -> CoeffTable:
    """Load a table written by `write_table`.

    Raises:
        MalformedFileError: On truncation or an unknown layout
        VersionMismatchError: On a different format version
        DigestMismatchError: If the payload does not hash to the stored digest
        OSError: If the file cannot be read
    """
    path = Path(path)
    if path.suffix == ".json":
        table = _read_json(path, path.read_text())
    else:
        table = _read_binary(path, path.read_bytes())
    logger.info(f"Loaded coefficient table {path}: N={table.n_max_energy}, s={table.params.s}")
    return table


def series_header(modes: list[ModeIndex]) -> list[str]:
    columns = ["t"]
    for mode in modes:
        columns += [f"re_{mode.n}_{mode.l}_{mode.m}", f"im_{mode.n}_{mode.l}_{mode.m}"]
    return columns + list(_MONITOR_COLUMNS)


def write_series(
    path: Path | str,
    report: SolveReport,
    trajectory: list[SpectralState],
    modes: list[ModeIndex] | None = None,
) -> None:
    """CSV with one row per output time: t, per-mode re/im columns, then the monitors."""
    if len(trajectory) != len(report.times):
        raise ValueError(f"Trajectory has {len(trajectory)} states for {len(report.times)} times")
    if modes is None:
        present = {mode for state in trajectory for mode in state.coeffs}
        modes = sorted(present, key=ModeIndex.sort_key)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(series_header(modes))
        for i, (t, state) in enumerate(zip(report.times, trajectory, strict=True)):
            row = [repr(float(t))]
            for mode in modes:
                value = state.get(mode)
                row += [repr(float(value.real)), repr(float(value.imag))]
            row += [repr(float(getattr(report, column)[i])) for column in _MONITOR_COLUMNS]
            writer.writerow(row)


def write_report(path: Path | str, report: BaseModel) -> None:
    Path(path).write_text(report.model_dump_json(indent=2))


def read_init(path: Path | str) -> SpectralState:
    """Load initial coefficients from JSON {"n,l,m": [re, im]}.

    Raises:
        AdmissibilityError: If a collision-invariant mode is nonzero
        ValueError: On unparsable keys or values
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"Initial data in {path} must be a JSON object")
    coeffs: dict[ModeIndex, complex] = {}
    for key, value in raw.items():
        mode = ModeIndex.parse(key)
        if isinstance(value, int | float):
            coeffs[mode] = complex(value)
        elif isinstance(value, list) and len(value) == 2:
            coeffs[mode] = complex(float(value[0]), float(value[1]))
        else:
            raise ValueError(f"Coefficient for {key} must be a number or [re, im], got {value!r}")

    state = SpectralState(coeffs=coeffs)
    offending = state.first_inadmissible_mode()
    if offending is not None:
        logger.error(f"Initial data is nonzero on the collision invariant {offending}")
        raise AdmissibilityError(
            f"Initial data must vanish on the collision invariants, found {coeffs[offending]!r} at {offending}"
        )
    scale = max((abs(v) for v in coeffs.values()), default=0.0)
    state.reality_flag = state.conjugation_defect() <= 1e-14 * max(scale, 1e-300)
    return state


def maxwellian(v) -> np.ndarray:
    """mu(v) = (2 pi)^(-3/2) exp(-|v|^2/2)."""
    return sqrt_maxwellian(v) ** 2


def grid_points(grid: VelocityGrid) -> np.ndarray:
    axis = grid.axis()
    return np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)


def reconstruct_f(state: SpectralState, grid: VelocityGrid) -> tuple[np.ndarray, float]:
    """f = mu + sqrt(mu) sum g_{n,l,m} phi_{n,l,m} on the grid.

    Returns:
        (real part of f, max |imaginary part|)
    """
    v = grid_points(grid)
    root = sqrt_maxwellian(v)
    perturbation = np.zeros(v.shape[:-1], dtype=complex)
    for mode, value in state.coeffs.items():
        if value != 0:
            perturbation += value * phi_eigenfunction(mode, v)
    f = root**2 + root * perturbation
    return f.real, float(np.max(np.abs(f.imag), initial=0.0))


def grid_mass(f: np.ndarray, grid: VelocityGrid) -> float:
    """Riemann sum of f over the grid."""
    return float(np.sum(f) * grid.cell_volume())


def write_field(path: Path | str, f: np.ndarray) -> None:
    np.save(Path(path), f)
