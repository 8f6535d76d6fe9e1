"""Toric-code lattice, check families, logical operators and conversion matrices.

Qubit layout on an ``L x L`` torus (all coordinates mod ``L``):

* ``H(r, c)`` is the horizontal edge on the top side of plaquette ``(r, c)``,
  index ``r * L + c``.
* ``V(r, c)`` is the vertical edge on the left side of plaquette ``(r, c)``,
  index ``L * L + r * L + c``.

Plaquette ``(r, c)`` holds ``H(r,c), H(r+1,c), V(r,c), V(r,c+1)``; the star at
vertex ``(r, c)`` (top-left corner of plaquette ``(r, c)``) holds
``H(r,c), H(r,c-1), V(r,c), V(r-1,c)``.  Plaquettes and stars are the *cells*
from which every check family is built as a product.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import gf2

TIME = "TIME"


class InvalidParameter(ValueError):
    pass


class NotAGeneratingSet(ValueError):
    pass


class Family(str, enum.Enum):
    LOCAL = "Local"
    SQUARE_SS = "SquareSS"
    RECT_SS = "RectSS"
    CIRC_SS = "CircSS"
    SQUARE_VW = "SquareVW"
    NARROW_VW = "NarrowVW"
    WIDE_VW = "WideVW"
    TOP_FW = "TopFW"
    BOTTOM_FW = "BottomFW"
    FULL_FW = "FullFW"


@dataclass(frozen=True)
class TorusLattice:
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise InvalidParameter(f"lattice side must be >= 2, got {self.L}")

    @property
    def n_qubits(self) -> int:
        return 2 * self.L * self.L

    @property
    def n_cells(self) -> int:
        return self.L * self.L

    def h(self, r: int, c: int) -> int:
        L = self.L
        return (r % L) * L + (c % L)

    def v(self, r: int, c: int) -> int:
        L = self.L
        return L * L + (r % L) * L + (c % L)

    def qubit_coords(self, q: int) -> tuple[str, int, int]:
        L = self.L
        kind = "H" if q < L * L else "V"
        r, c = divmod(q % (L * L), L)
        return kind, r, c

    def cell_index(self, r: int, c: int) -> int:
        return (r % self.L) * self.L + (c % self.L)

    def cell_coords(self, i: int) -> tuple[int, int]:
        return divmod(i, self.L)

    def plaquette(self, r: int, c: int) -> tuple[int, ...]:
        return (self.h(r, c), self.h(r + 1, c), self.v(r, c), self.v(r, c + 1))

    def star(self, r: int, c: int) -> tuple[int, ...]:
        return (self.h(r, c), self.h(r, c - 1), self.v(r, c), self.v(r - 1, c))

    def cell(self, pauli: str, r: int, c: int) -> tuple[int, ...]:
        return self.plaquette(r, c) if pauli == "Z" else self.star(r, c)

    def cell_matrix(self, pauli: str) -> np.ndarray:
        """Local parity-check matrix, one row per plaquette (Z) or star (X)."""
        m = np.zeros((self.n_cells, self.n_qubits), dtype=np.uint8)
        for i in range(self.n_cells):
            m[i, list(self.cell(pauli, *self.cell_coords(i)))] = 1
        return m

    def block(self, r0: int, c0: int, rows: int, cols: int) -> tuple[int, ...]:
        """Cell indices of the ``rows x cols`` block whose top-left cell is ``(r0, c0)``."""
        return tuple(
            sorted(self.cell_index(r0 + i, c0 + j) for i in range(rows) for j in range(cols))
        )


@dataclass(frozen=True)
class Check:
    pauli: str
    support: tuple[int, ...]
    family: Family
    patch_origin: tuple[int, int] | None
    mapped_qubit: int | str | None
    # local cells whose product is this check
    cells: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.support:
            raise ValueError("identity checks must be removed before construction")
        if isinstance(self.mapped_qubit, int) and self.mapped_qubit not in self.support:
            raise ValueError("mapped qubit outside check support")

    @property
    def weight(self) -> int:
        return len(self.support)

    def vector(self, n_qubits: int) -> np.ndarray:
        v = np.zeros(n_qubits, dtype=np.uint8)
        v[list(self.support)] = 1
        return v

    def to_line(self) -> str:
        u, v = ("-", "-") if self.patch_origin is None else self.patch_origin
        m = self.mapped_qubit
        m = TIME if m == TIME else f"q{m}"
        qs = " ".join(f"q{q}" for q in self.support)
        return f"check {self.pauli} {self.family.value} u={u} v={v} map={m} {qs}"


def _support(lat: TorusLattice, pauli: str, cells: Iterable[int]) -> tuple[int, ...]:
    acc = np.zeros(lat.n_qubits, dtype=np.uint8)
    for i in cells:
        acc[list(lat.cell(pauli, *lat.cell_coords(i)))] ^= 1
    return tuple(int(q) for q in np.flatnonzero(acc))


@dataclass(frozen=True)
class CheckSet:
    """A family of same-type checks generating the local stabilizer group."""

    L: int
    pauli: str
    checks: tuple[Check, ...]

    def __len__(self):
        return len(self.checks)

    def __iter__(self):
        return iter(self.checks)

    def __getitem__(self, i):
        return self.checks[i]

    @property
    def lattice(self) -> TorusLattice:
        return TorusLattice(self.L)

    def matrix(self) -> np.ndarray:
        n = 2 * self.L * self.L
        if not self.checks:
            return np.zeros((0, n), dtype=np.uint8)
        return np.array([c.vector(n) for c in self.checks], dtype=np.uint8)

    def supports(self) -> set[tuple[int, ...]]:
        return {c.support for c in self.checks}

    @property
    def n_padded(self) -> int:
        return self.L * self.L - len(self.checks)

    def construction_matrix(self) -> np.ndarray:
        """``V`` with ``V @ P_local == P_tilde``, one row per check.

        Families with fewer than ``L^2`` checks (an identity product was
        removed) get the all-cells row appended, which keeps ``V`` square.
        """
        n = self.L * self.L
        rows = []
        for ch in self.checks:
            r = np.zeros(n, dtype=np.uint8)
            r[list(ch.cells)] = 1
            rows.append(r)
        for _ in range(self.n_padded):
            rows.append(np.ones(n, dtype=np.uint8))
        return np.array(rows, dtype=np.uint8).reshape(len(rows), n)

    @cached_property
    def conversion(self) -> np.ndarray:
        """``U`` with ``P_local = U @ P_tilde`` (padded columns last)."""
        if self.n_padded > 1:
            raise NotAGeneratingSet(f"{self.n_padded} checks missing from a {self.L}x{self.L} set")
        try:
            return gf2.inv(self.construction_matrix())
        except np.linalg.LinAlgError as exc:
            raise NotAGeneratingSet(str(exc)) from None

    def padded_matrix(self) -> np.ndarray:
        m = self.matrix()
        pad = np.zeros((self.n_padded, m.shape[1]), dtype=np.uint8)
        return np.vstack([m, pad])

    def to_text(self) -> str:
        lines = [f"# toric L={self.L} pauli={self.pauli}"]
        lines += [c.to_line() for c in self.checks]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, L: int | None = None) -> "CheckSet":
        checks = []
        pauli = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("L=") and L is None:
                        L = int(tok[2:])
                continue
            tok = line.split()
            if tok[0] != "check":
                raise ValueError(f"bad check line: {raw!r}")
            pauli = tok[1]
            fam = Family(tok[2])
            u, v = tok[3][2:], tok[4][2:]
            origin = None if u == "-" else (int(u), int(v))
            m = tok[5][4:]
            mapped = TIME if m == TIME else int(m[1:])
            support = tuple(int(t[1:]) for t in tok[6:])
            checks.append((pauli, support, fam, origin, mapped))
        if L is None:
            raise ValueError("lattice size unknown; pass L or include a '# toric L=' header")
        lat = TorusLattice(L)
        local = lat.cell_matrix(pauli or "Z")
        out = []
        for p, support, fam, origin, mapped in checks:
            vec = np.zeros(lat.n_qubits, dtype=np.uint8)
            vec[list(support)] = 1
            cells = _canonical_cells(local, vec, lat, origin)
            if cells is None:
                raise NotAGeneratingSet(f"check {support} is not a product of local checks")
            out.append(Check(p, support, fam, origin, mapped, cells))
        return cls(L, pauli or "Z", tuple(out))


def _canonical_cells(local, vec, lat, origin=None):
    x = gf2.solve_left(local, vec)
    if x is None:
        return None
    alt = x ^ 1  # the product of all cells is the identity
    prefer = lat.cell_index(*origin) if origin is not None else 0
    nx, na = int(x.sum()), int(alt.sum())
    if na < nx or (na == nx and alt[prefer] and not x[prefer]):
        x = alt
    return tuple(int(i) for i in np.flatnonzero(x))


def conversion_matrix(P_local, P_tilde, cells=None) -> np.ndarray:
    """Invertible ``U`` with ``P_local == U @ P_tilde`` over GF(2).

    ``cells`` optionally gives, per row of ``P_tilde``, the local rows whose
    product it is; otherwise the lighter of the two representations is
    taken.  Zero rows of ``P_tilde`` (removed identity checks) are treated
    as the product of all local checks.
    """
    P_local = gf2.as_bits(P_local)
    P_tilde = gf2.as_bits(P_tilde)
    n = P_local.shape[0]
    if P_tilde.shape[0] != n:
        raise InvalidParameter("both matrices need one row per local check")
    V = np.zeros((n, n), dtype=np.uint8)
    for i, row in enumerate(P_tilde):
        if cells is not None and cells[i] is not None:
            V[i, list(cells[i])] = 1
        elif not row.any():
            V[i] = 1
        else:
            x = gf2.solve_left(P_local, row)
            if x is None:
                raise NotAGeneratingSet(f"row {i} is outside the local stabilizer group")
            if int((x ^ 1).sum()) < int(x.sum()):
                x = x ^ 1
            V[i] = x
    if not np.array_equal(gf2.matmul(V, P_local), P_tilde):
        raise NotAGeneratingSet("supplied cells do not reproduce P_tilde")
    try:
        U = gf2.inv(V)
    except np.linalg.LinAlgError:
        raise NotAGeneratingSet("checks do not generate the local stabilizer group") from None
    return U


def _assign_mapped(lat: TorusLattice, pauli: str, raw) -> tuple[Check, ...]:
    """Build checks and derive each mapped qubit from the conversion matrix.

    A weight-1 column means the measurement error lands on one local check
    (a time edge); a weight-2 column means it looks like an error on the
    qubit the two local checks share.
    """
    provisional = CheckSet(
        lat.L,
        pauli,
        tuple(Check(pauli, _support(lat, pauli, cells), fam, org, None, cells) for fam, org, cells in raw),
    )
    U = provisional.conversion
    out = []
    for k, ch in enumerate(provisional.checks):
        col = np.flatnonzero(U[:, k])
        if col.size == 1:
            mapped = TIME
        elif col.size == 2:
            a = set(lat.cell(pauli, *lat.cell_coords(col[0])))
            b = set(lat.cell(pauli, *lat.cell_coords(col[1])))
            shared = sorted(a & b & set(ch.support))
            if not shared:
                raise ValueError(f"no shared qubit for check {k}")
            mapped = int(shared[0])
        else:
            raise ValueError(f"conversion column {k} has weight {col.size}")
        out.append(Check(pauli, ch.support, ch.family, ch.patch_origin, mapped, ch.cells))
    return tuple(out)


def _check_side(L: int):
    if L < 2:
        raise InvalidParameter(f"L must be >= 2, got {L}")


def _check_patch(L: int, l: int):
    _check_side(L)
    if l < 1 or L % l:
        raise InvalidParameter(f"patch size {l} does not divide L={L}")


def build_local_checks(L: int) -> tuple[CheckSet, CheckSet]:
    """Plaquette (Z) and star (X) checks."""
    _check_side(L)
    lat = TorusLattice(L)
    sets = []
    for pauli in ("Z", "X"):
        checks = tuple(
            Check(pauli, tuple(sorted(lat.cell(pauli, *lat.cell_coords(i)))), Family.LOCAL, None, TIME, (i,))
            for i in range(lat.n_cells)
        )
        sets.append(CheckSet(L, pauli, checks))
    return sets[0], sets[1]


def build_single_shot_checks(L: int, pauli: str = "Z") -> CheckSet:
    _check_side(L)
    lat = TorusLattice(L)
    raw = [(Family.SQUARE_SS, None, lat.block(0, i, 1, 1)) for i in range(L)]
    raw += [(Family.RECT_SS, None, lat.block(i, j, L - i, 1)) for i in range(2, L) for j in range(L)]
    raw += [(Family.CIRC_SS, None, lat.block(0, 0, L, i + 1)) for i in range(L - 1)]
    return CheckSet(L, pauli, _assign_mapped(lat, pauli, raw))


def even_origins(L: int, l: int, kind: str) -> list[tuple[int, int]]:
    if kind == "square":
        return [(a, b) for a in range(0, L, l) for b in range(0, L, l)]
    return [(a, c) for a in range(0, L, l) for c in range(L)]


def _vw_raw(lat: TorusLattice, l: int, origins):
    L = lat.L
    raw = []
    for u, v in origins:
        raw += [(Family.SQUARE_VW, (u, v), lat.block(u, v + i, 1, 1)) for i in range(l)]
        raw += [
            (Family.NARROW_VW, (u, v), lat.block(u + i, v + j, l - i, 1))
            for i in range(2, l)
            for j in range(l)
        ]
        if l > 1:
            for i in range(l):
                cells = lat.block(u, v + i, l, l - i)
                if len(cells) == L * L:
                    continue  # identity on the torus
                raw.append((Family.WIDE_VW, (u, v), cells))
    return raw


def build_variable_width_checks(
    L: int, l: int, origins: Sequence[tuple[int, int]] | None = None, pauli: str = "Z"
) -> CheckSet:
    _check_patch(L, l)
    lat = TorusLattice(L)
    if origins is None:
        origins = even_origins(L, l, "square")
    origins = [(u % L, v % L) for u, v in origins]
    if len(origins) != (L // l) ** 2:
        raise InvalidParameter("variable-width partition needs (L/l)^2 patch origins")
    return CheckSet(L, pauli, _assign_mapped(lat, pauli, _vw_raw(lat, l, origins)))


def build_fixed_width_checks(
    L: int, l: int, origins: Sequence[tuple[int, int]] | None = None, pauli: str = "Z"
) -> CheckSet:
    _check_patch(L, l)
    lat = TorusLattice(L)
    if origins is None:
        origins = even_origins(L, l, "strip")
    origins = [(u % L, v % L) for u, v in origins]
    if len(origins) != L * (L // l):
        raise InvalidParameter("fixed-width partition needs L*(L/l) strip origins")
    raw = []
    for u, v in origins:
        raw.append((Family.TOP_FW, (u, v), lat.block(u, v, 1, 1)))
        raw += [(Family.BOTTOM_FW, (u, v), lat.block(u + i, v, l - i, 1)) for i in range(2, l)]
        if l > 1:
            raw.append((Family.FULL_FW, (u, v), lat.block(u, v, l, 1)))
    return CheckSet(L, pauli, _assign_mapped(lat, pauli, raw))


@dataclass(frozen=True)
class LogicalOperators:
    L: int
    z: tuple[tuple[int, ...], tuple[int, ...]]
    x: tuple[tuple[int, ...], tuple[int, ...]]

    def matrix(self, pauli: str) -> np.ndarray:
        n = 2 * self.L * self.L
        m = np.zeros((2, n), dtype=np.uint8)
        for k, sup in enumerate(self.z if pauli == "Z" else self.x):
            m[k, list(sup)] = 1
        return m


def logical_operators(L: int) -> LogicalOperators:
    """Weight-``L`` loop representatives.

    ``Z[0]`` runs along the horizontal edges of row 0 and ``Z[1]`` along the
    vertical edges of column 0; ``X[k]`` anticommutes with ``Z[k]`` only.
    """
    _check_side(L)
    lat = TorusLattice(L)
    z1 = tuple(sorted(lat.h(0, c) for c in range(L)))
    z2 = tuple(sorted(lat.v(r, 0) for r in range(L)))
    x1 = tuple(sorted(lat.h(r, 0) for r in range(L)))
    x2 = tuple(sorted(lat.v(0, c) for c in range(L)))
    return LogicalOperators(L, (z1, z2), (x1, x2))


def displacement(L: int, a: int, b: int) -> int:
    """Signed shortest displacement from ``a`` to ``b`` on a cycle of length ``L``."""
    d = (b - a) % L
    return d - L if d > L // 2 else d


def chain_mask(L: int, a: tuple[int, int], b: tuple[int, int]) -> int:
    """Logical mask of the shortest X-chain joining plaquettes ``a`` and ``b``.

    Bit 0 flips when the chain crosses the row line carrying ``Z[0]``, bit 1
    when it crosses the column line carrying ``Z[1]``.
    """
    (r1, c1), (r2, c2) = a, b
    dr = displacement(L, r1, r2)
    dc = displacement(L, c1, c2)
    mask = 0
    if not 0 <= r1 + dr < L:
        mask |= 1
    if not 0 <= c1 + dc < L:
        mask |= 2
    return mask


def commutes(a: Check | Sequence[int], b: Check | Sequence[int]) -> bool:
    sa = set(a.support if isinstance(a, Check) else a)
    sb = set(b.support if isinstance(b, Check) else b)
    return len(sa & sb) % 2 == 0
