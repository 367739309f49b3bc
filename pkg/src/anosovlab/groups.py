"""Example groups and the JSON group-file format."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from anosovlab.errors import InvalidInput, InvalidMatrix
from anosovlab.matgrp import FIELDS, ProjectiveMatrix, normalize
from anosovlab.reps import direct_sum_rep, sym_power, tensor_rep
from anosovlab.wordball import GeneratorSet

FORMAT_VERSION = 1
DET_TOL = 1e-9

SCHOTTKY_AXIS_DISTANCE = 2.0


def boost(t: float) -> np.ndarray:
    """Hyperbolic translation by t along the geodesic from -1 to 1."""
    c, s = np.cosh(t / 2), np.sinh(t / 2)
    return np.array([[c, s], [s, c]])


def cyclic_hyperbolic(lam: float = 2.0, field: str = "C") -> GeneratorSet:
    return GeneratorSet(("g",), (normalize(np.diag([lam, 1 / lam]), field),))


def cyclic_unipotent(field: str = "C") -> GeneratorSet:
    return GeneratorSet(("g",), (normalize(np.array([[1.0, 1.0], [0.0, 1.0]]), field),))


def schottky_pair(lam: float = 10.0, field: str = "C",
                  axis_distance: float = SCHOTTKY_AXIS_DISTANCE) -> GeneratorSet:
    """a = diag(lam, 1/lam) and b = h a h^-1, h = boost(axis_distance).

    The axes of a and b are at hyperbolic distance axis_distance with a
    common perpendicular through the geodesic (-1, 1); b fixes tanh(D/2)
    and coth(D/2). For D = 2 the pair plays ping-pong for lam >= 3.
    """
    a = np.diag([lam, 1 / lam])
    h = boost(axis_distance)
    b = h @ a @ np.linalg.inv(h)
    return GeneratorSet(("a", "b"), (normalize(a, field), normalize(b, field)))


def sym_image(gens: GeneratorSet, d: int) -> GeneratorSet:
    return gens.map(lambda g: sym_power(g, d))


def unitary_pair(field: str = "C") -> tuple[ProjectiveMatrix, ProjectiveMatrix]:
    """Two fixed elements of SU(2) of infinite order generating a dense subgroup."""
    t1, t2 = 1.0, np.sqrt(2.0)
    u1 = np.array([[np.exp(1j * t1), 0], [0, np.exp(-1j * t1)]])
    c, s = np.cos(t2), np.sin(t2)
    u2 = np.array([[c, -s], [s, c]], dtype=complex)
    return normalize(u1, "C"), normalize(u2, "C")


def tensor_with_unitary(gens: GeneratorSet, unitaries=None) -> GeneratorSet:
    """gamma -> rho(gamma) (x) u(gamma) for a unitary representation u."""
    unitaries = unitary_pair() if unitaries is None else unitaries
    if len(unitaries) != len(gens.names):
        raise InvalidInput("need one unitary per generator")
    return GeneratorSet(gens.names, tuple(tensor_rep(g, u) for g, u in zip(gens.matrices, unitaries)))


def block_rho_d(gens: GeneratorSet, d: int, rho: GeneratorSet | None = None) -> GeneratorSet:
    """gamma -> rho(gamma) (+) tau_d(gamma); rho defaults to the standard representation."""
    rho = gens if rho is None else rho
    return GeneratorSet(
        gens.names,
        tuple(direct_sum_rep(r, sym_power(g, d)) for g, r in zip(gens.matrices, rho.matrices)),
    )


def _encode_matrix(m: ProjectiveMatrix):
    a = m.entries
    if m.field == "R":
        return [[float(v) for v in row] for row in a.real]
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def _decode_matrix(data, field: str, dim: int, name: str) -> np.ndarray:
    try:
        a = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"generator {name}: entries are not numeric") from exc
    if field == "C":
        if a.shape != (dim, dim, 2):
            raise InvalidInput(f"generator {name}: expected {dim}x{dim} [re, im] pairs, got {a.shape}")
        return a[..., 0] + 1j * a[..., 1]
    if a.shape != (dim, dim):
        raise InvalidInput(f"generator {name}: expected a {dim}x{dim} real matrix, got {a.shape}")
    return a


def to_groupfile(gens: GeneratorSet, description: str = "", **metadata) -> dict:
    meta = {"description": description}
    meta.update(metadata)
    return {
        "version": FORMAT_VERSION,
        "field": gens.field,
        "dim": gens.dim,
        "generators": [
            {"name": n, "entries": _encode_matrix(m)} for n, m in zip(gens.names, gens.matrices)
        ],
        "metadata": meta,
    }


def det_tolerance(a) -> float:
    """DET_TOL, widened to the rounding sensitivity d * eps * cond(a) of the
    determinant of an ill-conditioned matrix stored in double precision."""
    d = a.shape[0]
    return max(DET_TOL, 8 * d * np.finfo(float).eps * float(np.linalg.cond(a)))


def from_groupfile(doc: dict) -> tuple[GeneratorSet, dict]:
    """Parse a group file. Generators must have determinant 1 within
    :func:`det_tolerance` (1e-9 for well-conditioned entries)."""
    if not isinstance(doc, dict):
        raise InvalidInput("group file must be a JSON object")
    if "version" not in doc:
        raise InvalidInput("group file lacks a version field")
    if doc["version"] != FORMAT_VERSION:
        raise InvalidInput(f"unsupported group file version {doc['version']!r}")
    field = doc.get("field")
    if field not in FIELDS:
        raise InvalidInput(f"field must be one of {FIELDS}, got {field!r}")
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim < 2:
        raise InvalidInput(f"dim must be an integer >= 2, got {dim!r}")
    gens = doc.get("generators")
    if not isinstance(gens, list) or not gens:
        raise InvalidInput("generators must be a nonempty list")
    names, mats = [], []
    for i, g in enumerate(gens):
        if not isinstance(g, dict) or "entries" not in g:
            raise InvalidInput(f"generator {i} lacks entries")
        name = str(g.get("name", f"g{i}"))
        a = _decode_matrix(g["entries"], field, dim, name)
        if not np.all(np.isfinite(a)):
            raise InvalidInput(f"generator {name} has non-finite entries")
        det = np.linalg.det(a)
        if abs(det - 1.0) > det_tolerance(a):
            raise InvalidInput(f"generator {name} has determinant {det:.6g}, expected 1")
        try:
            mats.append(normalize(a, field))
        except InvalidMatrix as exc:
            raise InvalidInput(f"generator {name}: {exc}") from exc
        names.append(name)
    try:
        out = GeneratorSet(tuple(names), tuple(mats))
    except InvalidMatrix as exc:
        raise InvalidInput(str(exc)) from exc
    return out, dict(doc.get("metadata", {}))


def load_group(path) -> tuple[GeneratorSet, dict]:
    """Load a group file from a path, or a bundled example by name."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        bundled = resources.files("anosovlab") / "data" / "groups" / f"{path}.json"
        if bundled.is_file():
            return from_groupfile(json.loads(bundled.read_text()))
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read group file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"malformed JSON in {path}: {exc}") from exc
    return from_groupfile(doc)


def bundled_names() -> list[str]:
    root = resources.files("anosovlab") / "data" / "groups"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_groups() -> dict[str, tuple[GeneratorSet, dict]]:
    """The shipped example corpus, built from the constructors above."""
    s3 = schottky_pair(3.0)
    s10 = schottky_pair(10.0)
    out = {
        "cyclic-hyperbolic": (cyclic_hyperbolic(2.0),
                              {"description": "cyclic group generated by diag(2, 1/2)"}),
        "cyclic-unipotent": (cyclic_unipotent(),
                             {"description": "cyclic group generated by [[1, 1], [0, 1]]"}),
        "schottky-3": (s3, {"description": "Schottky pair a = diag(3, 1/3), b = h a h^-1 with axes 2 apart",
                            "lambda": 3.0, "kleinian": True}),
        "schottky-10": (s10, {"description": "Schottky pair a = diag(10, 1/10), b = h a h^-1 with axes 2 apart",
                              "lambda": 10.0, "kleinian": True}),
    }
    for d in (3, 4, 5):
        out[f"sym{d}-schottky-3"] = (
            sym_image(s3, d), {"description": f"tau_{d} image of the Schottky pair with lambda 3"}
        )
    out["tensor-unitary-schottky-10"] = (
        tensor_with_unitary(s10),
        {"description": "Schottky pair (lambda 10) tensored with a dense pair in SU(2); "
                        "singular values repeat, so alpha_1 stays bounded"},
    )
    out["rho4-schottky-10"] = (
        block_rho_d(s10, 4),
        {"description": "block sum of the Schottky pair (lambda 10) and its tau_4 image"},
    )
    return out


def write_bundled(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (gens, meta) in bundled_groups().items():
        meta = dict(meta)
        desc = meta.pop("description", "")
        doc = to_groupfile(gens, desc, **meta)
        p = directory / f"{name}.json"
        p.write_text(json.dumps(doc, indent=1) + "\n")
        paths.append(p)
    return paths
