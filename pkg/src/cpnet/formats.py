"""Instance files (JSON), seeded instance generators, and SDPA sparse export."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import InstanceFormatError, ShapeError, UnknownSchemaError
from .linnet import ProblemInstance
from .relax_solver import RelaxationProblem

SCHEMA_VERSION = 1
GENERATORS = ("random-gaussian", "exact-fit", "low-rank-plus-noise")


def _matrix_field(data: dict, key: str, rows: int, cols: int, row_label: str) -> np.ndarray:
    if key not in data:
        raise InstanceFormatError("missing field", key)
    raw = data[key]
    if not isinstance(raw, list) or any(not isinstance(row, list) for row in raw):
        raise InstanceFormatError("must be a list of rows", key)
    if len(raw) != rows:
        raise InstanceFormatError(f"expected {rows} rows ({row_label}), got {len(raw)}", key)
    for i, row in enumerate(raw):
        if len(row) != cols:
            raise InstanceFormatError(f"expected {cols} columns (n), got {len(row)}", f"{key}[{i}]")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InstanceFormatError(f"not a number: {v!r}", f"{key}[{i}][{j}]")
            if not math.isfinite(v):
                raise InstanceFormatError(f"non-finite value {v!r}", f"{key}[{i}][{j}]")
    return np.array(raw, dtype=float).reshape(rows, cols)


def instance_from_dict(data: dict) -> ProblemInstance:
    if not isinstance(data, dict):
        raise InstanceFormatError("top level must be an object")
    if "version" not in data:
        raise InstanceFormatError("missing field", "version")
    if data["version"] != SCHEMA_VERSION:
        raise UnknownSchemaError(f"unsupported schema version {data['version']!r}", "version")
    widths = data.get("widths")
    if not isinstance(widths, list) or len(widths) < 2:
        raise InstanceFormatError("must be a list of at least two integers", "widths")
    for k, w in enumerate(widths):
        if isinstance(w, bool) or not isinstance(w, int) or w < 1:
            raise InstanceFormatError(f"must be a positive integer, got {w!r}", f"widths[{k}]")
    n = data.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InstanceFormatError(f"must be a positive integer, got {n!r}", "n")
    X = _matrix_field(data, "X", widths[0], n, "widths[0]")
    Y = _matrix_field(data, "Y", widths[-1], n, "widths[-1]")
    return ProblemInstance(X, Y, tuple(widths))


def parse_instance(source) -> ProblemInstance:
    """Read an instance from a path or from JSON text."""
    if isinstance(source, (str, os.PathLike)) and not str(source).lstrip().startswith("{"):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(source)
    try:
        data = json.loads(text, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data)


def instance_to_dict(inst: ProblemInstance, generator: dict | None = None) -> dict:
    out = {
        "version": SCHEMA_VERSION,
        "widths": list(inst.widths),
        "n": inst.n,
        "X": inst.X.tolist(),
        "Y": inst.Y.tolist(),
    }
    if generator is not None:
        out["generator"] = generator
    return out


def serialize_instance(inst: ProblemInstance, generator: dict | None = None) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(instance_to_dict(inst, generator), indent=1) + "\n"


def write_instance(inst: ProblemInstance, path, generator: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_instance(inst, generator))


def generate_instance(spec: dict, seed: int = 0) -> ProblemInstance:
    """Seeded instance from ``{"kind", "widths", "n", "noise"?}``.

    ``exact-fit`` plants a rank-r map ``U V^T`` and sets ``Y = U V^T X``;
    ``low-rank-plus-noise`` adds Gaussian noise of scale ``noise`` (default 0.1).
    """
    kind = spec.get("kind")
    if kind not in GENERATORS:
        raise ValueError(f"unknown generator {kind!r}; expected one of {GENERATORS}")
    widths = tuple(int(w) for w in spec["widths"])
    n = int(spec["n"])
    if len(widths) < 2 or min(widths) < 1 or n < 1:
        raise ShapeError(f"bad generator shape: widths={widths}, n={n}")
    rng = np.random.default_rng(seed)
    d_0, d_N, r = widths[0], widths[-1], min(widths)
    X = rng.standard_normal((d_0, n))
    if kind == "random-gaussian":
        Y = rng.standard_normal((d_N, n))
    else:
        M = rng.standard_normal((d_N, r)) @ rng.standard_normal((d_0, r)).T
        Y = M @ X
        if kind == "low-rank-plus-noise":
            Y = Y + float(spec.get("noise", 0.1)) * rng.standard_normal((d_N, n))
    return ProblemInstance(X, Y, widths)


# --- SDPA sparse format -------------------------------------------------------


@dataclass(frozen=True)
class SdpaData:
    """Contents of an SDPA sparse file: ``max <F0, Y>`` s.t. ``<F_k, Y> = c_k``, ``Y >= 0``."""

    block_struct: tuple[int, ...]
    c: np.ndarray
    entries: dict  # matno -> sorted tuple of (block, i, j, value), 1-based block/i/j

    @property
    def m(self) -> int:
        return self.c.size


def sdpa_from_relaxation(prob: RelaxationProblem) -> SdpaData:
    """Convert to SDPA conventions; the objective is negated because SDPA maximizes."""
    entries = {0: tuple(sorted((b + 1, i + 1, j + 1, -v) for b, i, j, v in prob.objective if v != 0.0))}
    for k, con in enumerate(prob.constraints, start=1):
        acc: dict[tuple[int, int, int], float] = {}
        for b, i, j, v in con.entries:
            key = (b + 1, i + 1, j + 1)
            acc[key] = acc.get(key, 0.0) + v
        entries[k] = tuple(sorted((*key, v) for key, v in acc.items() if v != 0.0))
    sizes = tuple(prob.block_sizes)
    return SdpaData(sizes, np.array([c.rhs for c in prob.constraints]), entries)


def format_sdpa(data: SdpaData, comment: str = "") -> str:
    lines = []
    for c in comment.splitlines():
        lines.append(f'" {c}')
    lines.append(str(data.m))
    lines.append(str(len(data.block_struct)))
    lines.append("{" + ", ".join(str(s) for s in data.block_struct) + "}")
    lines.append(" ".join(repr(float(v)) for v in data.c))
    for matno in sorted(data.entries):
        for b, i, j, v in data.entries[matno]:
            lines.append(f"{matno} {b} {i} {j} {float(v)!r}")
    return "\n".join(lines) + "\n"


def export_sdpa(f, relaxed: RelaxationProblem, path, comment: str | None = None) -> SdpaData:
    """Write the PSD relaxation to ``path`` in SDPA sparse format.

    Blocks are the bordered moment matrix, then three ``d x d`` copies of
    ``mat(z_k)``, then the 1 x 1 slack. ``f`` is the formulation the relaxation came from; its
    constant ``h`` is carried on the bordered ``[1, 1]`` entry.
    """
    data = sdpa_from_relaxation(relaxed)
    if comment is None:
        comment = f"PSD relaxation, d={relaxed.d}, r={relaxed.r}, h={f.h!r}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_sdpa(data, comment))
    return data


def _clean(line: str) -> list[str]:
    for ch in "{}(),":
        line = line.replace(ch, " ")
    return line.split()


def parse_sdpa(source) -> SdpaData:
    if isinstance(source, (str, os.PathLike)) and os.path.exists(str(source)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(source)
    lines = [ln for ln in text.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    if len(lines) < 4:
        raise InstanceFormatError("truncated SDPA file")
    m = int(_clean(lines[0])[0])
    nblocks = int(_clean(lines[1])[0])
    struct = tuple(int(t) for t in _clean(lines[2]))
    if len(struct) != nblocks:
        raise InstanceFormatError(f"nBLOCK={nblocks} but block structure lists {len(struct)} sizes")
    c = np.array([float(t) for t in _clean(lines[3])])
    if c.size != m:
        raise InstanceFormatError(f"mDIM={m} but {c.size} right-hand sides")
    entries: dict[int, list] = {k: [] for k in range(m + 1)}
    for ln in lines[4:]:
        tok = _clean(ln)
        if len(tok) != 5:
            raise InstanceFormatError(f"bad entry line: {ln!r}")
        matno, b, i, j = (int(t) for t in tok[:4])
        entries[matno].append((b, i, j, float(tok[4])))
    return SdpaData(struct, c, {k: tuple(sorted(v)) for k, v in entries.items()})


def sdpa_max_difference(a: SdpaData, b: SdpaData) -> float:
    """Largest absolute difference between two SDPA data sets (inf on structural mismatch)."""
    if a.block_struct != b.block_struct or a.m != b.m:
        return math.inf
    diff = float(np.max(np.abs(a.c - b.c))) if a.m else 0.0
    for k in range(a.m + 1):
        ea, eb = a.entries.get(k, ()), b.entries.get(k, ())
        if [e[:3] for e in ea] != [e[:3] for e in eb]:
            return math.inf
        for x, y in zip(ea, eb):
            diff = max(diff, abs(x[3] - y[3]))
    return diff
