"""Text export of flowpipes, validation reports and risk series.

Two layouts are supported: JSON lines ("records") with a leading header line,
and long-format CSV. Floats are written with ``repr`` so files round-trip
bit-exactly.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .reach import Flowpipe, FlowpipeSegment
from .sets import Zonotope

FORMAT_VERSION = 1


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _jsonl(header: dict, rows: list[dict]) -> str:
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r, sort_keys=True) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# flowpipes


def flowpipe_records(fp: Flowpipe) -> str:
    dim = fp.segments[0].zonotope.dim if fp.segments else 0
    header = {"kind": "flowpipe", "version": FORMAT_VERSION, "dim": dim, "segments": len(fp.segments)}
    rows = [
        {
            "k": s.k,
            "t": float(s.t),
            "center": _floats(s.zonotope.center),
            "generators": [_floats(col) for col in s.zonotope.generators.T],
        }
        for s in fp.segments
    ]
    return _jsonl(header, rows)


def read_flowpipe_records(text: str) -> Flowpipe:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("kind") != "flowpipe":
        raise ValueError("not a flowpipe file")
    dim = header["dim"]
    segs = []
    for ln in lines[1:]:
        r = json.loads(ln)
        G = np.array(r["generators"], dtype=float).reshape(-1, dim).T
        segs.append(FlowpipeSegment(int(r["k"]), float(r["t"]), Zonotope(r["center"], G)))
    return Flowpipe(segs)


def flowpipe_csv(fp: Flowpipe) -> str:
    dim = fp.segments[0].zonotope.dim if fp.segments else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t", "kind", "index"] + [f"v{i}" for i in range(dim)])
    for s in fp.segments:
        w.writerow([s.k, repr(float(s.t)), "center", 0] + [repr(v) for v in _floats(s.zonotope.center)])
        for j, col in enumerate(s.zonotope.generators.T):
            w.writerow([s.k, repr(float(s.t)), "generator", j] + [repr(v) for v in _floats(col)])
    return buf.getvalue()


def read_flowpipe_csv(text: str) -> Flowpipe:
    rows = list(csv.reader(io.StringIO(text)))
    dim = len(rows[0]) - 4
    centers: dict[int, tuple[float, list[float]]] = {}
    gens: dict[int, list[list[float]]] = {}
    for r in rows[1:]:
        k, t, kind = int(r[0]), float(r[1]), r[2]
        vals = [float(v) for v in r[4:4 + dim]]
        if kind == "center":
            centers[k] = (t, vals)
            gens.setdefault(k, [])
        else:
            gens.setdefault(k, []).append(vals)
    segs = []
    for k in sorted(centers):
        t, c = centers[k]
        G = np.array(gens[k], dtype=float).reshape(-1, dim).T
        segs.append(FlowpipeSegment(k, t, Zonotope(c, G)))
    return Flowpipe(segs)


# ---------------------------------------------------------------------------
# tabular reports


def table_records(kind: str, rows: list[dict], meta: dict | None = None) -> str:
    header = {"kind": kind, "version": FORMAT_VERSION, "rows": len(rows)}
    header.update(meta or {})
    return _jsonl(header, rows)


def table_csv(rows: list[dict]) -> str:
    """Flatten list-valued columns into ``name[i]`` columns."""
    if not rows:
        return ""
    flat = []
    for r in rows:
        out = {}
        for key, val in r.items():
            if isinstance(val, (list, tuple)):
                for i, v in enumerate(val):
                    out[f"{key}[{i}]"] = v
            else:
                out[key] = val
        flat.append(out)
    cols = list(flat[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in flat:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
