"""Run configuration, lattice loading and deterministic output writing."""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .instances import LINE_CASES, REFERENCE_CASES, line_case, reference_case
from .lattice import lattice_from_dict

OUT_ENV = "SPIKESTAB_OUT"
DEFAULT_OUT = "spikestab_out"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ json

def to_jsonable(obj):
    """Plain JSON types from numpy values, dataclasses and tuples.

    Non-finite floats become strings so the output stays strict JSON.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def metadata() -> dict:
    return {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "version": __version__}


# ------------------------------------------------------------ output

class OutputDir:
    """Collects outputs in memory and writes them together on ``commit``.

    Writability is checked on construction so that a run fails before any
    computation; a failure during commit removes the files already written.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.pending: dict[str, bytes] = {}
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(dir=self.root, prefix=".probe-"):
                pass
        except OSError as exc:
            raise PermissionError(f"cannot write to {self.root}: {exc}") from exc

    def add_json(self, name: str, payload: dict, with_metadata: bool = True):
        body = dict(payload)
        if with_metadata:
            body["metadata"] = metadata()
        self.pending[name] = dumps(body).encode()

    def add_csv(self, name: str, header, rows):
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self.pending[name] = buf.getvalue().encode()

    def add_text(self, name: str, text: str):
        self.pending[name] = text.encode()

    def add_field(self, name: str, array, header: dict):
        """Raw little-endian float64 dump plus a JSON header."""
        arr = np.ascontiguousarray(array, dtype="<f8")
        hdr = dict(header, shape=list(arr.shape), dtype="float64", byteorder="little",
                   data_file=f"{name}.bin")
        self.pending[f"{name}.bin"] = arr.tobytes()
        self.add_json(f"{name}.json", hdr, with_metadata=False)

    def commit(self) -> list:
        written = []
        try:
            for name, data in self.pending.items():
                target = self.root / name
                fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, target)
                written.append(target)
        except OSError as exc:
            for path in written:
                path.unlink(missing_ok=True)
            raise PermissionError(f"failed writing outputs: {exc}") from exc
        self.pending.clear()
        return written


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def output_root(cli_value: str | None) -> Path:
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


# ------------------------------------------------------------ config

def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def merge(file_cfg: dict, overrides: dict) -> dict:
    """File fields overridden by explicitly given command-line values."""
    out = dict(file_cfg)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def load_lattice(ref, base_dir: Path | None = None):
    """Lattice from an inline dict, a JSON path, ``case:NAME`` or ``line:NAME``."""
    if isinstance(ref, dict):
        return lattice_from_dict(ref)
    if not isinstance(ref, str):
        raise ConfigError("lattice must be a mapping or a string reference")
    if ref.startswith("case:"):
        name = ref[5:]
        if name not in REFERENCE_CASES:
            raise ConfigError(f"unknown case {name!r}; known: {sorted(REFERENCE_CASES)}")
        return reference_case(name)
    if ref.startswith("line:"):
        name = ref[5:]
        if name not in LINE_CASES:
            raise ConfigError(f"unknown line case {name!r}; known: {sorted(LINE_CASES)}")
        return line_case(name)
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return lattice_from_dict(load_config(path))


def check_lambdas(lams):
    lams = [float(x) for x in (lams if isinstance(lams, (list, tuple)) else [lams])]
    if not lams or any(not x > 0 for x in lams):
        raise ConfigError("lambda must be positive")
    return lams


def parse_grid(text: str):
    """``start:stop:count`` into an inclusive linspace."""
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n)).tolist()
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}; expected start:stop:count") from exc


def table(rows, header) -> str:
    """Fixed-width text table."""
    cells = [[str(h) for h in header]] + [[_cell(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)
