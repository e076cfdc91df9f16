"""JSON encodings of spaces, states, maps and models.

Matrices are ``{"rows": R, "cols": C, "re": [...], "im": [...]}`` in row-major
order; vectors are ``{"re": [...], "im": [...]}`` (a plain list of reals is
accepted on input). Pair indices ``(i, j)`` of two-body matrices map to row
``i * n + j``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from qflab.bhf import QuasifreeParams, TwoBodyHamiltonian
from qflab.bogoliubov import BogoliubovMap
from qflab.fock import ModeSpace, Statistics, build_space
from qflab.gaussian import GaussianData


class SchemaError(ValueError):
    """Input JSON does not follow the expected layout."""


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    return d[key]


def matrix_to_json(m) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": m.real.ravel().tolist(),
        "im": m.imag.ravel().tolist(),
    }


def matrix_from_json(d) -> np.ndarray:
    rows = int(_require(d, "rows", "matrix"))
    cols = int(_require(d, "cols", "matrix"))
    re = np.asarray(_require(d, "re", "matrix"), dtype=float)
    im = np.asarray(d.get("im", np.zeros(rows * cols)), dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise SchemaError(f"matrix: expected {rows * cols} entries")
    return (re + 1j * im).reshape(rows, cols)


def vector_to_json(v) -> dict:
    v = np.asarray(v, dtype=complex).ravel()
    return {"re": v.real.tolist(), "im": v.imag.tolist()}


def vector_from_json(d) -> np.ndarray:
    if isinstance(d, list):
        return np.asarray(d, dtype=complex)
    if isinstance(d, dict) and "rows" in d:
        return matrix_from_json(d).ravel()
    re = np.asarray(_require(d, "re", "vector"), dtype=float)
    im = np.asarray(d.get("im", np.zeros(re.size)), dtype=float)
    if im.size != re.size:
        raise SchemaError("vector: re and im differ in length")
    return re + 1j * im


def space_from_json(d, cutoff: int | None = None) -> ModeSpace:
    """Build a space; ``cutoff`` overrides the stored one when given."""
    n = int(_require(d, "n_modes", "space"))
    stats = Statistics.parse(_require(d, "statistics", "space"))
    cut = cutoff if cutoff is not None else d.get("cutoff")
    return build_space(n, stats, cut)


def gaussian_to_json(g: GaussianData) -> dict:
    return {
        "gamma": matrix_to_json(g.gamma),
        "alpha": matrix_to_json(g.alpha),
        "b": vector_to_json(g.b),
        "statistics": g.statistics.value,
    }


def gaussian_from_json(d) -> GaussianData:
    return GaussianData(
        matrix_from_json(_require(d, "gamma", "gaussian")),
        matrix_from_json(_require(d, "alpha", "gaussian")),
        vector_from_json(_require(d, "b", "gaussian")),
        _require(d, "statistics", "gaussian"),
    )


def bogoliubov_to_json(U: BogoliubovMap) -> dict:
    return {"u": matrix_to_json(U.u), "v": matrix_to_json(U.v), "statistics": U.statistics.value}


def bogoliubov_from_json(d) -> BogoliubovMap:
    return BogoliubovMap(
        matrix_from_json(_require(d, "u", "bogoliubov")),
        matrix_from_json(_require(d, "v", "bogoliubov")),
        _require(d, "statistics", "bogoliubov"),
    )


def params_to_json(p: QuasifreeParams) -> dict:
    return {
        "statistics": p.statistics.value,
        "bogoliubov": bogoliubov_to_json(p.bogoliubov),
        "displacement": vector_to_json(p.displacement),
        "mixing": p.mixing.tolist(),
        "slater": list(p.slater),
    }


def params_from_json(d) -> QuasifreeParams:
    stats = _require(d, "statistics", "params")
    U = bogoliubov_from_json(_require(d, "bogoliubov", "params"))
    n = U.n_modes
    disp = vector_from_json(d["displacement"]) if "displacement" in d else np.zeros(n)
    mixing = np.asarray(d.get("mixing", np.zeros(n)), dtype=float)
    return QuasifreeParams(stats, U, disp, mixing, tuple(d.get("slater", ())))


def model_to_json(H: TwoBodyHamiltonian) -> dict:
    out = {"h": matrix_to_json(H.h), "V": matrix_to_json(H.V), "species": H.statistics.value}
    if H.pairing is not None:
        out["extra_pairing"] = matrix_to_json(H.pairing)
    if H.drive is not None:
        out["drive"] = vector_to_json(H.drive)
    return out


def model_from_json(d) -> TwoBodyHamiltonian:
    pairing = d.get("extra_pairing")
    drive = d.get("drive")
    return TwoBodyHamiltonian(
        matrix_from_json(_require(d, "h", "model")),
        matrix_from_json(_require(d, "V", "model")),
        _require(d, "species", "model"),
        pairing=None if pairing is None else matrix_from_json(pairing),
        drive=None if drive is None else vector_from_json(drive),
    )


STATE_KINDS = ("density_matrix", "gaussian", "quasifree", "pdm")


def state_from_json(d) -> tuple[str, object]:
    """Decode a tagged state.

    Kinds: ``density_matrix`` (``{"rho": mat}``), ``gaussian`` (GaussianData
    fields), ``quasifree`` (``{"params": ...}``) and ``pdm``
    (``{"gamma": mat, "Gamma": mat, "N"?: number, "statistics": str}``).
    """
    kind = _require(d, "kind", "state")
    if kind == "density_matrix":
        return kind, matrix_from_json(_require(d, "rho", "state"))
    if kind == "gaussian":
        return kind, gaussian_from_json(d)
    if kind == "quasifree":
        return kind, params_from_json(_require(d, "params", "state"))
    if kind == "pdm":
        return kind, {
            "gamma": matrix_from_json(_require(d, "gamma", "state")),
            "Gamma": matrix_from_json(_require(d, "Gamma", "state")),
            "N": d.get("N"),
            "statistics": Statistics.parse(d.get("statistics", "boson")),
        }
    raise SchemaError(f"state: unknown kind {kind!r}; expected one of {STATE_KINDS}")


def density_matrix_to_json(rho) -> dict:
    return {"kind": "density_matrix", "rho": matrix_to_json(rho)}


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def dumps(obj) -> str:
    """Stable serialization used for reports and manifests."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
