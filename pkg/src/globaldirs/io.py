"""File formats: JSON with 17-digit floats, 16-bit PGM, content hashes."""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .directions import CFResult, Direction, DirectionReport
from .numerics import MlpNet
from .proxy import ProxyDataset

SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- json

def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        raise FormatError(f"cannot serialize non-finite float {v}")
    return format(v, ".17g")


def dumps(obj, indent: int | None = 1, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits.

    Numeric arrays are written on one line regardless of ``indent``.
    """
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.number, list, tuple)) and not isinstance(v, bool) for v in obj) \
                and not any(isinstance(v, (list, tuple)) and v and isinstance(v[0], (dict, list)) for v in obj):
            return "[" + ",".join(dumps(v, None) for v in obj) + "]"
        return _block("[", "]", [dumps(v, indent, _level + 1) for v in obj], indent, _level)
    if isinstance(obj, dict):
        items = [json.dumps(str(k)) + ": " + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return _block("{", "}", items, indent, _level)
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def _block(open_, close, items, indent, level):
    if not items:
        return open_ + close
    if indent is None:
        return open_ + ", ".join(items) + close
    pad = " " * (indent * (level + 1))
    return open_ + "\n" + ",\n".join(pad + i for i in items) + "\n" + " " * (indent * level) + close


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _versioned(kind: str, body: dict) -> dict:
    return {"schema": SCHEMA_VERSION, "kind": kind, **body}


def _check(doc: dict, kind: str) -> dict:
    if doc.get("schema") != SCHEMA_VERSION or doc.get("kind") != kind:
        raise FormatError(f"expected {kind} schema {SCHEMA_VERSION}, got {doc.get('kind')} schema {doc.get('schema')}")
    return doc


# ---------------------------------------------------------------- domain objects

def image_to_dict(x) -> dict:
    x = np.asarray(x, dtype=np.float64)
    return {"w": x.shape[1], "h": x.shape[0], "px": x.reshape(-1)}


def image_from_dict(d: dict) -> np.ndarray:
    w, h = int(d["w"]), int(d["h"])
    px = np.asarray(d["px"], dtype=np.float64)
    if px.shape != (w * h,):
        raise FormatError(f"image payload has {px.size} pixels, expected {w}x{h}")
    return px.reshape(h, w)


def net_to_dict(net: MlpNet) -> dict:
    return _versioned("mlp", {
        "widths": net.widths,
        "hidden_activation": net.hidden_activation,
        "output_activations": list(net.output_activations),
        "layers": [{"weight": w.reshape(-1), "bias": b} for w, b in zip(net.weights, net.biases)],
    })


def net_from_dict(doc: dict) -> MlpNet:
    _check(doc, "mlp")
    widths = doc["widths"]
    ws, bs = [], []
    for i, layer in enumerate(doc["layers"]):
        ws.append(np.asarray(layer["weight"], dtype=np.float64).reshape(widths[i + 1], widths[i]))
        bs.append(np.asarray(layer["bias"], dtype=np.float64))
    return MlpNet(tuple(ws), tuple(bs), doc["hidden_activation"], tuple(doc["output_activations"]))


def dataset_to_dict(ds: ProxyDataset) -> dict:
    return _versioned("proxy-dataset", {
        "n": ds.n,
        "count": len(ds),
        "radius": ds.radius,
        "z_source": ds.z_source,
        "z_T": ds.z_T,
        "normalization": {"f": {"min": ds.f_norm.lo, "max": ds.f_norm.hi},
                          "s": {"min": ds.s_norm.lo, "max": ds.s_norm.hi}},
        "z_tilde": ds.z_tilde.reshape(-1),
        "f_values": ds.f_values,
        "s_values": ds.s_values,
    })


def dataset_from_dict(doc: dict) -> ProxyDataset:
    _check(doc, "proxy-dataset")
    n, count = int(doc["n"]), int(doc["count"])
    return ProxyDataset(np.asarray(doc["z_source"], dtype=np.float64), int(doc["z_T"]), float(doc["radius"]),
                        np.asarray(doc["z_tilde"], dtype=np.float64).reshape(count, n),
                        np.asarray(doc["f_values"], dtype=np.float64),
                        np.asarray(doc["s_values"], dtype=np.float64))


def direction_to_dict(d: Direction) -> dict:
    return _versioned("direction", {
        "name": d.name,
        "direction_kind": d.kind,
        "source_id": d.source_id,
        "lambda": d.lam,
        "eigen_rank": d.eigen_rank,
        "eigenvalue": d.eigenvalue,
        "vector": d.vector,
    })


def direction_from_dict(doc: dict) -> Direction:
    _check(doc, "direction")
    return Direction(np.asarray(doc["vector"], dtype=np.float64), doc["direction_kind"], doc["source_id"],
                     float(doc["lambda"]), doc["eigen_rank"], doc["eigenvalue"])


def save_direction(path, d: Direction) -> None:
    write_json(path, direction_to_dict(d))


def load_direction(path) -> Direction:
    return direction_from_dict(read_json(path))


def report_to_dict(rep: DirectionReport, results: list[CFResult | None]) -> dict:
    return _versioned("direction-report", {
        **rep.to_dict(),
        "results": [r.summary() if r is not None else None for r in results],
    })


def attribution_to_dict(attr, label: str) -> dict:
    return _versioned("attribution", {"label": label, **image_to_dict(attr)})


def attribution_from_dict(doc: dict) -> np.ndarray:
    _check(doc, "attribution")
    out = image_from_dict(doc)
    if not np.all(np.isfinite(out)):
        raise FormatError("attribution map contains non-finite values")
    return out


# ---------------------------------------------------------------- pgm

def write_pgm(path, img) -> None:
    """16-bit binary PGM (P5, maxval 65535) of an image with values in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError("PGM export takes a 2-D image")
    if not np.all(np.isfinite(img)):
        raise FormatError("image contains non-finite values")
    data = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos].decode("ascii"))
    pos += 1
    if fields[0] != "P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / maxval


# ---------------------------------------------------------------- manifests

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(root, paths) -> dict[str, str]:
    root = Path(root)
    return {str(Path(p).relative_to(root)): sha256(p) for p in sorted(map(Path, paths))}


def check_manifest(root, entries: dict[str, str]) -> list[str]:
    """Relative paths that are missing or whose hash changed."""
    bad = []
    for rel, digest in entries.items():
        p = Path(root) / rel
        if not p.is_file() or sha256(p) != digest:
            bad.append(rel)
    return bad


def files_under(path) -> list[Path]:
    return sorted(p for p in Path(path).rglob("*") if p.is_file()) if os.path.isdir(path) else []
