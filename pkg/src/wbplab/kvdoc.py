"""Plain-text key-value documents with sections.

Used for experiment configs, weight files and training checkpoints. Arrays
are written as ``[d0,d1] v0 v1 ...`` with ``repr`` floats so that values
round-trip exactly.
"""

from __future__ import annotations

import configparser
import io

import numpy as np


def format_array(a) -> str:
    a = np.asarray(a, dtype=float)
    shape = ",".join(str(d) for d in a.shape)
    return f"[{shape}] " + " ".join(repr(float(v)) for v in a.reshape(-1))


def parse_array(text: str) -> np.ndarray:
    text = text.strip()
    if not text.startswith("["):
        raise ValueError(f"not an array value: {text[:30]!r}")
    close = text.index("]")
    dims = [int(d) for d in text[1:close].split(",") if d.strip()]
    vals = np.array([float(v) for v in text[close + 1:].split()], dtype=float)
    return vals.reshape(dims)


def dumps(sections: dict[str, dict[str, object]]) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, items in sections.items():
        cp[name] = {}
        for key, val in items.items():
            if isinstance(val, np.ndarray):
                cp[name][key] = format_array(val)
            elif isinstance(val, (float, np.floating)):
                cp[name][key] = repr(float(val))
            elif isinstance(val, (list, tuple)):
                cp[name][key] = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in val)
            elif val is None:
                cp[name][key] = "none"
            else:
                cp[name][key] = str(val)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    return {s: dict(cp[s]) for s in cp.sections()}
