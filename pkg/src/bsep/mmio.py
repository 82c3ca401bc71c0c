"""Matrix Market text I/O.

A small reader/writer kept local so parse failures carry line numbers and
the writer emits full 17-significant-digit precision (write-then-read
round-trips bit-identically through repr-exact decimals).  Supported:
``array`` and ``coordinate`` formats, real/complex/integer fields,
general/symmetric/hermitian/skew-symmetric storage; ``pattern`` matrices
are rejected.
"""

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, UnsupportedField

_FIELDS = {"real", "complex", "integer"}
_SYMMETRIES = {"general", "symmetric", "hermitian", "skew-symmetric"}


def _expand_symmetry(rows, cols, vals, symmetry):
    if symmetry == "general":
        return rows, cols, vals
    er, ec, ev = list(rows), list(cols), list(vals)
    for r, c, v in zip(rows, cols, vals):
        if r == c:
            continue
        er.append(c)
        ec.append(r)
        if symmetry == "symmetric":
            ev.append(v)
        elif symmetry == "hermitian":
            ev.append(np.conj(v))
        else:
            ev.append(-v)
    return er, ec, ev


def read_matrix_market(path):
    """Parse a Matrix Market file into a dense array or a CSR matrix."""
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket" or head[1].lower() != "matrix":
        raise ParseError("bad MatrixMarket header", line=1)
    fmt, field, symmetry = (w.lower() for w in head[2:5])
    if field == "pattern":
        raise UnsupportedField("pattern matrices carry no values")
    if field not in _FIELDS:
        raise ParseError("unknown field %r" % field, line=1)
    if fmt not in ("array", "coordinate"):
        raise ParseError("unknown format %r" % fmt, line=1)
    if symmetry not in _SYMMETRIES:
        raise ParseError("unknown symmetry %r" % symmetry, line=1)

    idx = 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise ParseError("missing size line", line=len(lines))
    size_line = idx + 1
    parts = lines[idx].split()

    def parse_value(words, lineno):
        try:
            if field == "complex":
                if len(words) != 2:
                    raise ValueError
                return complex(float(words[0]), float(words[1]))
            if len(words) != 1:
                raise ValueError
            return complex(float(words[0]))
        except ValueError:
            raise ParseError("malformed numeric data", line=lineno) from None

    if fmt == "coordinate":
        if len(parts) != 3:
            raise ParseError("coordinate size line needs 'rows cols nnz'",
                             line=size_line)
        try:
            nr, nc, nnz = (int(p) for p in parts)
        except ValueError:
            raise ParseError("bad sizes", line=size_line) from None
        rows, cols, vals = [], [], []
        lineno = size_line
        for raw in lines[idx + 1:]:
            lineno += 1
            s = raw.strip()
            if not s or s.startswith("%"):
                continue
            w = s.split()
            if len(w) < 2:
                raise ParseError("truncated entry", line=lineno)
            try:
                r, c = int(w[0]) - 1, int(w[1]) - 1
            except ValueError:
                raise ParseError("bad indices", line=lineno) from None
            if not (0 <= r < nr and 0 <= c < nc):
                raise ParseError("index out of range", line=lineno)
            rows.append(r)
            cols.append(c)
            vals.append(parse_value(w[2:], lineno))
        if len(vals) != nnz:
            raise ParseError("expected %d entries, found %d" % (nnz, len(vals)),
                             line=lineno)
        rows, cols, vals = _expand_symmetry(rows, cols, vals, symmetry)
        return sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc),
                             dtype=np.complex128).tocsr()

    if len(parts) != 2:
        raise ParseError("array size line needs 'rows cols'", line=size_line)
    try:
        nr, nc = (int(p) for p in parts)
    except ValueError:
        raise ParseError("bad sizes", line=size_line) from None
    data = []
    lineno = size_line
    for raw in lines[idx + 1:]:
        lineno += 1
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        data.append(parse_value(s.split(), lineno))
    M = np.zeros((nr, nc), dtype=np.complex128, order="F")
    if symmetry == "general":
        if len(data) != nr * nc:
            raise ParseError("expected %d entries, found %d" % (nr * nc, len(data)),
                             line=lineno)
        M[:] = np.asarray(data).reshape((nr, nc), order="F")
        return M
    # packed column-major lower triangle
    expected = nr * (nr + 1) // 2 if symmetry != "skew-symmetric" else nr * (nr - 1) // 2
    if nr != nc or len(data) != expected:
        raise ParseError("bad packed triangular data", line=lineno)
    it = iter(data)
    for c in range(nc):
        start = c + 1 if symmetry == "skew-symmetric" else c
        for r in range(start, nr):
            v = next(it)
            M[r, c] = v
            if r != c:
                if symmetry == "symmetric":
                    M[c, r] = v
                elif symmetry == "hermitian":
                    M[c, r] = np.conj(v)
                else:
                    M[c, r] = -v
    return M


def write_matrix_market(path, M, comment=None):
    """Write a dense array (array format) or sparse matrix (coordinate
    format) as complex general, with 17 significant digits."""
    fmt = "%.17g %.17g"
    with open(path, "w") as fh:
        if sp.issparse(M):
            C = sp.coo_matrix(M, dtype=np.complex128)
            fh.write("%%MatrixMarket matrix coordinate complex general\n")
            if comment:
                fh.write("%% %s\n" % comment)
            fh.write("%d %d %d\n" % (C.shape[0], C.shape[1], C.nnz))
            for r, c, v in zip(C.row, C.col, C.data):
                fh.write("%d %d " % (r + 1, c + 1) + fmt % (v.real, v.imag) + "\n")
        else:
            M = np.asarray(M, dtype=np.complex128)
            fh.write("%%MatrixMarket matrix array complex general\n")
            if comment:
                fh.write("%% %s\n" % comment)
            fh.write("%d %d\n" % M.shape)
            for c in range(M.shape[1]):
                for r in range(M.shape[0]):
                    fh.write(fmt % (M[r, c].real, M[r, c].imag) + "\n")
