"""
State file persistence.

The file is JSON: a schema version, scalar fields by name and every matrix as
{"rows", "cols", "values"} in row-major order. SPD matrices are stored as
their lower Cholesky factors, so a reloaded state is bit-identical.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.basis.kernel_basis import BasisMap
from src.model.hyperparameters import Hyperparameters
from src.model.state import ComponentState, SufficientStats, VariationalState
from src.numstat.distributions import InvGammaParams, InvWishartParams
from src.numstat.linalg import SpdMatrix
from src.utils.exceptions import (
    CorruptStateFileError,
    MdpError,
    MissingInputError,
    StateDimensionError,
    StateVersionMismatchError,
)
from src.utils.logger import get_application_logger

logger = get_application_logger(__name__)

SCHEMA_VERSION = 1
FILE_FORMAT = "mdpreg-state"


def encode_matrix(a: np.ndarray) -> Dict[str, Any]:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "values": [float(v) for v in a.ravel()]}


def decode_matrix(block: Dict[str, Any], name: str, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    rows, cols, values = int(block["rows"]), int(block["cols"]), block["values"]
    if len(values) != rows * cols:
        raise StateDimensionError(f"{name}: {len(values)} values for declared {rows}x{cols}")
    if shape is not None and (rows, cols) != shape:
        raise StateDimensionError(f"{name}: declared {rows}x{cols}, expected {shape[0]}x{shape[1]}")
    return np.asarray(values, dtype=float).reshape(rows, cols)


def _encode_state(s: VariationalState) -> Dict[str, Any]:
    return {
        "seen": s.seen,
        "occupancy_threshold": s.occupancy_threshold,
        "sigma": {"dof": s.sigma.dof, "scale_chol": encode_matrix(s.sigma.scale.chol)},
        "tau": {"shape": float(s.tau.shape), "rate": float(s.tau.rate)},
        "omegas": {
            "shape": encode_matrix(np.asarray(s.omegas.shape)[:, None]),
            "rate": encode_matrix(np.asarray(s.omegas.rate)[:, None]),
        },
        "components": [
            {
                "mass": c.mass,
                "beta_hat": encode_matrix(c.beta_hat),
                "prec_chol": encode_matrix(c.prec.chol),
            }
            for c in s.components
        ],
        "suff_stats": None if s.suff_stats is None else [
            {"ee": encode_matrix(t.ee), "ey": encode_matrix(t.ey), "yy": encode_matrix(t.yy)}
            for t in s.suff_stats
        ],
    }


def _decode_state(data: Dict[str, Any], h: Hyperparameters) -> VariationalState:
    m, d = h.response_dim, h.design_dim
    components: List[ComponentState] = []
    for j, block in enumerate(data["components"]):
        components.append(ComponentState(
            beta_hat=decode_matrix(block["beta_hat"], f"components[{j}].beta_hat", (d, m)),
            prec=SpdMatrix.from_chol(decode_matrix(block["prec_chol"], f"components[{j}].prec_chol", (d, d))),
            mass=float(block["mass"]),
        ))
    if len(components) != h.trunc:
        raise StateDimensionError(f"{len(components)} components stored, trunc is {h.trunc}")

    suff = None
    if data.get("suff_stats") is not None:
        suff = tuple(
            SufficientStats(
                decode_matrix(b["ee"], "suff_stats.ee", (d, d)),
                decode_matrix(b["ey"], "suff_stats.ey", (d, m)),
                decode_matrix(b["yy"], "suff_stats.yy", (m, m)),
            )
            for b in data["suff_stats"]
        )
        if len(suff) != h.trunc:
            raise StateDimensionError("sufficient statistics disagree with trunc")

    return VariationalState(
        components=tuple(components),
        sigma=InvWishartParams(
            float(data["sigma"]["dof"]),
            SpdMatrix.from_chol(decode_matrix(data["sigma"]["scale_chol"], "sigma.scale_chol", (m, m))),
        ),
        tau=InvGammaParams(float(data["tau"]["shape"]), float(data["tau"]["rate"])),
        omegas=InvGammaParams(
            decode_matrix(data["omegas"]["shape"], "omegas.shape", (d, 1))[:, 0],
            decode_matrix(data["omegas"]["rate"], "omegas.rate", (d, 1))[:, 0],
        ),
        seen=int(data["seen"]),
        occupancy_threshold=float(data["occupancy_threshold"]),
        suff_stats=suff,
    )


def save_state(
    s: VariationalState,
    h: Hyperparameters,
    basis: BasisMap,
    path: Union[str, Path],
) -> None:
    """
    Write state, hyperparameters and basis to one self-describing file.

    Args:
        s: Fitted variational state
        h: Hyperparameters the state was fitted under
        basis: Design map used for fitting
        path: Output path
    """
    if basis.design_dim != s.design_dim:
        raise StateDimensionError(f"basis design dim {basis.design_dim} != state design dim {s.design_dim}")
    payload = {
        "format": FILE_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "hyperparameters": h.to_dict(),
        "basis": basis.to_dict(),
        "state": _encode_state(s),
    }
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
    logger.info(f"State saved to {path}")


def load_state(path: Union[str, Path]) -> Tuple[VariationalState, Hyperparameters, BasisMap]:
    """
    Read a state file written by save_state.

    Raises:
        MissingInputError: Path does not exist
        CorruptStateFileError: Unparseable or structurally broken file
        StateVersionMismatchError: Schema version differs
        StateDimensionError: Stored matrices disagree with their dimensions
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"state file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            payload = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptStateFileError(f"corrupt file {path}: {e}") from e

    if not isinstance(payload, dict) or payload.get("format") != FILE_FORMAT:
        raise CorruptStateFileError(f"corrupt file {path}: not a state file")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise StateVersionMismatchError(version, SCHEMA_VERSION)

    try:
        h = Hyperparameters.from_dict(payload["hyperparameters"])
        basis = BasisMap.from_dict(payload["basis"])
        s = _decode_state(payload["state"], h)
    except StateDimensionError:
        raise
    except MdpError as e:
        raise StateDimensionError(f"inconsistent state file {path}: {e}") from e
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise CorruptStateFileError(f"corrupt file {path}: {e}") from e

    if basis.design_dim != s.design_dim:
        raise StateDimensionError(f"basis design dim {basis.design_dim} != state design dim {s.design_dim}")
    logger.info(f"State loaded from {path}")
    return s, h, basis
