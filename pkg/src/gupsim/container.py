"""Columnar binary containers and CSV export for trajectories and slow series.

Layout: 4 magic bytes ("OMG1" for raw trajectories, "OMG2" for demodulated
slow-amplitude series), a little-endian uint32 header length, a UTF-8
``key = value`` header (parameter snapshot, seed, column names, row count),
then the columns as contiguous little-endian float64 blocks.
"""

from __future__ import annotations

import ast
import io
import struct

import numpy as np

from .errors import ConfigError
from .params import SystemParams
from .sde import IntegratorConfig, NoiseSettings, Trajectory

MAGIC_TRAJECTORY = b"OMG1"
MAGIC_SLOW = b"OMG2"


def _header_block(meta: dict) -> bytes:
    text = "".join(f"{k} = {v!r}\n" for k, v in meta.items())
    return text.encode("utf-8")


def _parse_header(blob: bytes) -> dict:
    out = {}
    for line in blob.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = ast.literal_eval(val.strip())
    return out


def _write(path, magic: bytes, meta: dict, columns: dict[str, np.ndarray]) -> None:
    meta = dict(meta)
    names = list(columns)
    rows = len(next(iter(columns.values()))) if columns else 0
    meta["columns"] = names
    meta["rows"] = rows
    header = _header_block(meta)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name in names:
            col = np.asarray(columns[name], dtype="<f8")
            if len(col) != rows:
                raise ConfigError("all columns must have the same length")
            fh.write(col.tobytes())


def _read(path, magic: bytes):
    with open(path, "rb") as fh:
        tag = fh.read(4)
        if tag != magic:
            raise ConfigError(f"bad magic {tag!r}; expected {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = _parse_header(fh.read(hlen))
        rows = int(meta["rows"])
        cols = {}
        for name in meta["columns"]:
            cols[name] = np.frombuffer(fh.read(8 * rows), dtype="<f8").astype(float)
    return meta, cols


def _complex_cols(prefix: str, series: np.ndarray) -> dict[str, np.ndarray]:
    return {f"{prefix}_re": series.real, f"{prefix}_im": series.imag}


def write_trajectory(path, traj: Trajectory) -> None:
    meta = {
        "seed": traj.noise.seed,
        "noise_enabled": traj.noise.enabled,
        "run_index": traj.run_index,
        "dt": traj.config.dt,
        "t_total": traj.config.t_total,
        "t_discard": traj.config.t_discard,
        "scheme": traj.config.scheme,
        "record_stride": traj.config.record_stride,
        "record_cavity": traj.a is not None,
        "params": {k: getattr(traj.params, k) for k in SystemParams.__dataclass_fields__},
    }
    cols: dict[str, np.ndarray] = {"t": traj.times}
    if traj.a is not None:
        cols.update(_complex_cols("a", traj.a))
    cols.update(_complex_cols("b1", traj.b1))
    if traj.b2 is not None:
        cols.update(_complex_cols("b2", traj.b2))
    _write(path, MAGIC_TRAJECTORY, meta, cols)


def read_trajectory(path) -> Trajectory:
    meta, cols = _read(path, MAGIC_TRAJECTORY)
    params = SystemParams(**meta["params"])
    noise = NoiseSettings(seed=meta["seed"], enabled=meta["noise_enabled"])
    config = IntegratorConfig(
        dt=meta["dt"],
        t_total=meta["t_total"],
        t_discard=meta["t_discard"],
        scheme=meta["scheme"],
        record_stride=meta["record_stride"],
        record_cavity=meta["record_cavity"],
    )

    def get(prefix):
        if f"{prefix}_re" not in cols:
            return None
        return cols[f"{prefix}_re"] + 1j * cols[f"{prefix}_im"]

    return Trajectory(
        times=cols["t"],
        a=get("a"),
        b1=get("b1"),
        b2=get("b2"),
        params=params,
        noise=noise,
        config=config,
        run_index=meta["run_index"],
    )


def write_slow_series(path, series) -> None:
    meta = {
        "frame_freq": series.frame_freq,
        "beta_offset1": (series.beta_offset1.real, series.beta_offset1.imag),
        "beta_offset2": (series.beta_offset2.real, series.beta_offset2.imag),
        "g1": series.g1,
        "g2": series.g2,
    }
    cols: dict[str, np.ndarray] = {"t": series.times}
    for name, data in (("a1", series.a1), ("a2", series.a2), ("ab", series.ab), ("ad", series.ad)):
        cols.update(_complex_cols(name, data))
    _write(path, MAGIC_SLOW, meta, cols)


def read_slow_series(path):
    from .modes import SlowAmplitudeSeries

    meta, cols = _read(path, MAGIC_SLOW)

    def cx(prefix):
        return cols[f"{prefix}_re"] + 1j * cols[f"{prefix}_im"]

    return SlowAmplitudeSeries(
        times=cols["t"],
        a1=cx("a1"),
        a2=cx("a2"),
        ab=cx("ab"),
        ad=cx("ad"),
        beta_offset1=complex(*meta["beta_offset1"]),
        beta_offset2=complex(*meta["beta_offset2"]),
        frame_freq=meta["frame_freq"],
        g1=meta["g1"],
        g2=meta["g2"],
    )


def trajectory_to_csv(path, traj: Trajectory) -> None:
    """Plain-text export (t plus Re/Im of each recorded variable)."""
    cols = [("t [1/omega_bar]", traj.times)]
    if traj.a is not None:
        cols += [("a_re", traj.a.real), ("a_im", traj.a.imag)]
    cols += [("b1_re", traj.b1.real), ("b1_im", traj.b1.imag)]
    if traj.b2 is not None:
        cols += [("b2_re", traj.b2.real), ("b2_im", traj.b2.imag)]
    buf = io.StringIO()
    buf.write(",".join(name for name, _ in cols) + "\n")
    data = np.column_stack([c for _, c in cols])
    for row in data:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
