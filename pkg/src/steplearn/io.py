"""Plain-text artifact formats.

Every real number is written with 17 significant digits, which round-trips
IEEE doubles exactly. Files are line oriented: ``key value...`` headers,
then data rows.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .core import GridSpec
from .mra import ScalingFilter
from .stepreg import StepRegularizer

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _num(v) -> str:
    return "%.17g" % float(v)


def _row(vals) -> str:
    return " ".join(_num(v) for v in vals)


def _read_lines(path):
    lines = []
    for raw in Path(path).read_text().splitlines():
        raw = raw.strip()
        if raw and not raw.startswith("#"):
            lines.append(raw.split())
    return lines


def _expect(tok, key):
    if not tok or tok[0] != key:
        raise FormatError(f"expected '{key}' line, found {' '.join(tok) if tok else 'end of file'!r}")
    return tok[1:]


def _header(lines, kind):
    v = _expect(lines.pop(0), "version")
    if int(v[0]) != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {v[0]}")
    k = _expect(lines.pop(0), "kind")
    if k[0] != kind:
        raise FormatError(f"file holds a {k[0]!r} artifact, expected {kind!r}")


def _filter_lines(filt: ScalingFilter | None, levels: int):
    if filt is None:
        return ["transform identity"]
    return [f"transform pyramid {levels}",
            "offsets " + " ".join(str(k) for k in filt.offsets),
            "taps " + _row(filt.taps)]


def _read_filter(lines):
    t = _expect(lines.pop(0), "transform")
    if t[0] == "identity":
        return None, 0
    levels = int(t[1])
    offs = [int(v) for v in _expect(lines.pop(0), "offsets")]
    taps = [float(v) for v in _expect(lines.pop(0), "taps")]
    return ScalingFilter(taps, offs), levels


def write_regularizer(path, reg: StepRegularizer, filt: ScalingFilter | None = None, levels: int = 0):
    g = reg.grid
    out = ["# steplearn step regularizer", f"version {FORMAT_VERSION}", "kind step",
           f"grid {g.m1} {g.m2} {g.n} {_num(g.eps)}"]
    out += _filter_lines(filt, levels)
    out.append(f"coords {reg.n_coords} {g.n_bins}")
    out += [_row(row) for row in reg.coeffs]
    Path(path).write_text("\n".join(out) + "\n")


def read_regularizer(path):
    """``(StepRegularizer, filter or None, levels)``."""
    lines = _read_lines(path)
    try:
        _header(lines, "step")
        m1, m2, n, eps = _expect(lines.pop(0), "grid")
        grid = GridSpec(int(m1), int(m2), int(n), float(eps))
        filt, levels = _read_filter(lines)
        nc, nb = (int(v) for v in _expect(lines.pop(0), "coords"))
        rows = np.array([[float(v) for v in ln] for ln in lines])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if rows.shape != (nc, nb):
        raise FormatError(f"{path}: expected {nc}x{nb} coefficients, found {rows.shape}")
    return StepRegularizer(grid, rows), filt, levels


def write_lambdas(path, lambdas, exponents, weights, filt=None, levels=0):
    w = np.atleast_2d(weights)
    out = ["# steplearn penalty weights", f"version {FORMAT_VERSION}", "kind lambda"]
    out += _filter_lines(filt, levels)
    out += ["exponents " + _row(exponents), "lambdas " + _row(lambdas),
            f"weights {w.shape[0]} {w.shape[1]}"]
    out += [_row(r) for r in w]
    Path(path).write_text("\n".join(out) + "\n")


def read_lambdas(path):
    """``(lambdas, exponents, weights, filter or None, levels)``."""
    lines = _read_lines(path)
    try:
        _header(lines, "lambda")
        filt, levels = _read_filter(lines)
        p = np.array([float(v) for v in _expect(lines.pop(0), "exponents")])
        lam = np.array([float(v) for v in _expect(lines.pop(0), "lambdas")])
        nt, nc = (int(v) for v in _expect(lines.pop(0), "weights"))
        w = np.array([[float(v) for v in ln] for ln in lines])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if w.shape != (nt, nc) or len(p) != nt or len(lam) != nt:
        raise FormatError(f"{path}: inconsistent term counts")
    return lam, p, w, filt, levels


def write_filter(path, filt: ScalingFilter, levels: int = 0):
    out = ["# steplearn scaling filter", f"version {FORMAT_VERSION}", "kind filter"]
    out += _filter_lines(filt, levels)
    Path(path).write_text("\n".join(out) + "\n")


def read_filter(path):
    lines = _read_lines(path)
    try:
        _header(lines, "filter")
        return _read_filter(lines)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_array(path, a):
    """Numeric text: a shape line, then one row per line."""
    a = np.asarray(a, dtype=float)
    rows = a.reshape(1, -1) if a.ndim == 1 else a.reshape(a.shape[0], -1)
    out = ["shape " + " ".join(str(s) for s in a.shape)] + [_row(r) for r in rows]
    Path(path).write_text("\n".join(out) + "\n")


def read_array(path) -> np.ndarray:
    lines = _read_lines(path)
    shape = tuple(int(v) for v in _expect(lines.pop(0), "shape"))
    data = np.array([float(v) for ln in lines for v in ln])
    return data.reshape(shape)


def write_pgm(path, img):
    """8-bit binary PGM; values are clipped to [0, 1] before quantizing."""
    img = np.asarray(img, dtype=float)
    q = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    h, w = q.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + q.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, mx = (int(v) for v in m.groups())
    data = np.frombuffer(raw[m.end(): m.end() + w * h], dtype=np.uint8)
    return data.reshape(h, w) / mx


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        return header, [r for r in rd]


def write_monitor(path, history):
    write_csv(path, ["iteration", "step_norm", "objective", "surrogate"],
              [(h.iteration, h.step_norm, h.objective, h.surrogate) for h in history])
