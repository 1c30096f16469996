"""
Reading and writing run artifacts: JSON reports and field files via orjson,
CSV tables via numpy at 17 significant digits.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import orjson
from pydantic import BaseModel
from scipy.integrate import cumulative_trapezoid

from dyadic import coefficient_tables, rhs_psi
from evolve import Trajectory
from field import SpectralField
from lattice import Frequency, classify
from models import ModelKind, SimConfig, Termination
from physical import GeneralSpectralField, GridField

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


# -------------------------
# JSON
# -------------------------

def _default(obj):
    if isinstance(obj, BaseModel):
        return obj.model_dump()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj: Any) -> bytes:
    """Serialize reports, dicts and numpy arrays."""
    if isinstance(obj, BaseModel):
        obj = obj.model_dump()
    return orjson.dumps(obj, default=_default, option=JSON_OPTIONS)


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_json(obj))
    logger.info("Wrote JSON", extra={"path": str(path)})
    return path


def read_json(path: PathLike) -> Any:
    return orjson.loads(Path(path).read_bytes())


# -------------------------
# Field files
# -------------------------

def field_to_json(field: SpectralField) -> Dict[str, Any]:
    """
    One entry per k ∈ ℳ^+_{≤N}: {k, shell, kind, permutation, sign, re, im}.

    The amplitude is c_k in û(k) = c_k v^k.
    """
    entries = []
    for k, c in zip(field.table.frequencies(), field.flat):
        member = classify(k)
        entries.append({
            "k": list(k.components),
            "shell": member.shell,
            "kind": member.kind.value,
            "permutation": member.permutation,
            "sign": member.sign_label,
            "re": float(c.real),
            "im": float(c.imag),
        })
    return {"N": field.N, "modes": entries}


def field_from_json(data: Mapping[str, Any]) -> SpectralField:
    """
    Inverse of field_to_json; entries on ℳ^- are conjugated onto their partner.

    Raises:
        ValueError: an entry lies outside ℳ_{≤N}
    """
    N = int(data["N"])
    field = SpectralField.zeros(N)
    amps = np.array(field.flat)
    for entry in data["modes"]:
        k = Frequency.of(entry["k"])
        hit = field.table.lookup(k)
        if hit is None:
            raise ValueError(f"{k} is not a constraint frequency with shell <= {N}")
        idx, negative = hit
        c = complex(entry["re"], entry["im"])
        amps[idx] = np.conj(c) if negative else c
    return SpectralField.from_flat(N, amps)


def write_field(path: PathLike, field: SpectralField) -> Path:
    return write_json(path, field_to_json(field))


def read_field(path: PathLike) -> SpectralField:
    return field_from_json(read_json(path))


def general_field_to_json(field: GeneralSpectralField) -> Dict[str, Any]:
    """Modes as {k, re, im} with 3-vector amplitudes."""
    return {
        "modes": [
            {"k": k.tolist(), "re": u.real.tolist(), "im": u.imag.tolist()}
            for k, u in zip(field.frequencies, field.amplitudes)
        ]
    }


# -------------------------
# CSV tables
# -------------------------

def write_table(path: PathLike, columns: Mapping[str, np.ndarray]) -> Path:
    """Write equal-length columns as CSV with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[name], dtype=float) for name in names])
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(names), comments="")
    logger.info("Wrote table", extra={"path": str(path), "rows": int(data.shape[0]), "columns": len(names)})
    return path


def read_table(path: PathLike) -> Dict[str, np.ndarray]:
    """Columns of a CSV written by write_table."""
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, dtype=float))
    return {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}


def grid_table(grid: GridField) -> Dict[str, np.ndarray]:
    """Columns x, y, z, u1..u3, omega1..omega3, lambda1..lambda3, detS."""
    omega = grid.vorticity
    eig = grid.eigenvalues()
    columns = {"x": grid.points[:, 0], "y": grid.points[:, 1], "z": grid.points[:, 2]}
    for i in range(3):
        columns[f"u{i + 1}"] = grid.u[:, i]
    for i in range(3):
        columns[f"omega{i + 1}"] = omega[:, i]
    for i in range(3):
        columns[f"lambda{i + 1}"] = eig[:, i]
    columns["detS"] = grid.det_strain()
    return columns


def trajectory_from_table(table: Mapping[str, np.ndarray], alpha: float = 0.0, nu: float = 0.0,
                          gamma: Optional[float] = None) -> Trajectory:
    """
    Rebuild a dyadic trajectory from the t, psi_n columns of a run table.

    Derivatives are re-evaluated from the reduced system at each sample, so
    dense output and first-crossing searches work as on a live run.
    """
    shells = sorted(int(name.split("_", 1)[1]) for name in table if name.startswith("psi_"))
    if not shells:
        raise ValueError("table has no psi_n columns")
    N = shells[-1]
    times = np.asarray(table["t"], dtype=float)
    psi = np.column_stack([table[f"psi_{n}"] for n in range(N + 1)])
    model = ModelKind.HYPO if nu > 0.0 else ModelKind.EULER
    options = {} if gamma is None else {"gamma": gamma}
    config = SimConfig(model=model, alpha=alpha, nu=nu, shells=N,
                       t_end=max(float(times[-1]), 1e-300), **options)
    derivs = np.array([rhs_psi(p, alpha, nu) for p in psi])
    decay = coefficient_tables(N, alpha, nu).decay
    dissipated = cumulative_trapezoid(np.sum(decay * psi ** 2, axis=1), times, initial=0.0) \
        if times.size > 1 else np.zeros(1)
    return Trajectory(
        kind="dyadic",
        N=N,
        config=config,
        times=times,
        states=psi,
        derivatives=derivs,
        dissipated=dissipated,
        termination=Termination.REACHED_T_END,
        steps=max(times.size - 1, 0),
    )
