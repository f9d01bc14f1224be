"""Finite Coxeter groups of rank <= 3 as concrete orthogonal matrix groups.

A group is specified by its Coxeter matrix m, from which the bilinear form
B_ij = -cos(pi / m_ij) is built.  The form is positive definite exactly when
the group is finite; in that case the Tits reflection representation
conjugated by a Cholesky factor of B yields orthogonal generators.  Named
groups with an axis-aligned realization (products of A1, the dihedral groups
with mirrors on coordinate planes and diagonals, the full cube group) are
built from hand-picked signed-permutation generators instead, so that their
action on a symmetric grid is exact.

Elements are enumerated by breadth-first closure under generator
multiplication.  The sign character is the determinant, which equals -1 on
every reflection and is multiplicative, i.e. the parity of word length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapExceeded,
    NonPositiveDefinite,
    ParseError,
    PointOutsideChamber,
)

MATRIX_TOL = 1e-9
ELEMENT_CAP = 1024
RANK_CAP = 3


@dataclass(frozen=True)
class CoxeterMatrix:
    """Symmetric integer matrix with 1 on the diagonal and entries >= 2 off it."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=int)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParseError("Coxeter matrix must be square")
        k = m.shape[0]
        if k > RANK_CAP:
            raise ParseError(f"rank {k} exceeds the cap {RANK_CAP}")
        if k > 0:
            if not np.array_equal(m, m.T):
                raise ParseError("Coxeter matrix must be symmetric")
            if not np.all(np.diag(m) == 1):
                raise ParseError("Coxeter matrix diagonal must be 1")
            off = m[~np.eye(k, dtype=bool)]
            if off.size and off.min() < 2:
                raise ParseError("off-diagonal Coxeter entries must be >= 2")
        object.__setattr__(self, "entries", m)

    @property
    def rank(self) -> int:
        return self.entries.shape[0]

    def bilinear_form(self) -> np.ndarray:
        """Return B with B_ij = -cos(pi / m_ij)."""
        m = self.entries.astype(float)
        with np.errstate(divide="ignore"):
            return -np.cos(np.pi / m)


def _cholesky(b: np.ndarray, pivot_tol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor of b, raising if any pivot is <= pivot_tol."""
    k = b.shape[0]
    low = np.zeros_like(b)
    for i in range(k):
        pivot = b[i, i] - low[i, :i] @ low[i, :i]
        if pivot <= pivot_tol:
            raise NonPositiveDefinite(
                f"bilinear form pivot {pivot:.3e} at row {i}; group is infinite"
            )
        low[i, i] = math.sqrt(pivot)
        for j in range(i + 1, k):
            low[j, i] = (b[j, i] - low[j, :i] @ low[i, :i]) / low[i, i]
    return low


def _snap_signed_perm(g: np.ndarray, tol: float = MATRIX_TOL) -> np.ndarray:
    """Round g to an exact signed permutation matrix when it is within tol of one."""
    r = np.rint(g)
    if np.max(np.abs(g - r)) > tol:
        return g
    if not np.all(np.isin(r, (-1.0, 0.0, 1.0))):
        return g
    a = np.abs(r)
    if np.all(a.sum(axis=0) == 1) and np.all(a.sum(axis=1) == 1):
        return r
    return g


def is_signed_permutation(g: np.ndarray) -> bool:
    r = np.rint(g)
    if np.max(np.abs(g - r), initial=0.0) > 1e-12:
        return False
    a = np.abs(r)
    return bool(np.all(a.sum(axis=0) == 1) and np.all(a.sum(axis=1) == 1))


def _close_under_products(generators, cap: int):
    """Breadth-first closure of the generator set under multiplication.

    Matrices are deduplicated in max-norm with tolerance MATRIX_TOL; candidates
    close to a signed permutation are snapped first so exact subgroups do not
    accumulate rounding drift.
    """
    k = generators[0].shape[0] if generators else 0
    mats = [np.eye(k)]
    stack = np.eye(k)[None]
    frontier = [np.eye(k)]
    while frontier:
        new = []
        for m in frontier:
            for s in generators:
                c = _snap_signed_perm(m @ s)
                dist = np.abs(stack - c).reshape(len(mats), -1).max(axis=1)
                if dist.min() > MATRIX_TOL:
                    mats.append(c)
                    stack = np.concatenate([stack, c[None]])
                    new.append(c)
                    if len(mats) > cap:
                        raise CapExceeded(
                            f"group closure exceeded {cap} elements"
                        )
        frontier = new
    return mats


def _element_sign(g: np.ndarray) -> int:
    d = np.linalg.det(g) if g.shape[0] else 1.0
    s = int(round(d))
    if s not in (-1, 1) or abs(d - s) > 1e-6:
        raise ValueError(f"element determinant {d} is not +-1")
    return s


@dataclass(frozen=True)
class Orbit:
    """Orbit points of a vector, deduplicated, with extremal pairwise distances."""

    points: np.ndarray
    min_dist: float
    max_dist: float

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Subgroup:
    """Element list of a stabilizer, with its order and reflection rank."""

    matrices: np.ndarray
    signs: np.ndarray
    order: int
    rank: int


class CoxeterGroup:
    """Finite Coxeter group realized by orthogonal k x k matrices.

    Attributes
    ----------
    matrix : CoxeterMatrix
        Defining matrix (rank 0 for the trivial group).
    generators : list of ndarray
        Reflection matrices, one per node of the diagram.
    chamber_normals : ndarray, shape (k, k)
        Row i is the inward unit normal of the mirror of generator i; the
        closed fundamental chamber is the cone where all <x, n_i> >= 0.
    tag : str or None
        Name used to build the group, when it came from a named tag.
    """

    def __init__(self, matrix, generators, chamber_normals, tag=None,
                 element_cap=ELEMENT_CAP):
        self.matrix = matrix
        self.generators = [np.asarray(g, dtype=float) for g in generators]
        self.chamber_normals = np.asarray(chamber_normals, dtype=float)
        self.tag = tag
        mats = _close_under_products(self.generators, element_cap)
        self._mats = np.array(mats) if mats else np.eye(0)[None]
        self._signs = np.array([_element_sign(g) for g in mats], dtype=int)
        self.grid_exact = all(is_signed_permutation(g) for g in self.generators)

    @property
    def rank(self) -> int:
        return self.matrix.rank

    @property
    def order(self) -> int:
        return self._mats.shape[0]

    @property
    def elements(self):
        """List of (matrix, sign) pairs, identity first."""
        return list(zip(self._mats, self._signs))

    def element_matrices(self) -> np.ndarray:
        return self._mats

    def element_signs(self) -> np.ndarray:
        return self._signs

    def sign(self, g: np.ndarray) -> int:
        return _element_sign(np.asarray(g, dtype=float))

    def orbit(self, q: np.ndarray, tol: float = MATRIX_TOL) -> Orbit:
        """Deduplicated orbit G q with min and max pairwise distances.

        A singleton orbit reports infinite distances: no separation
        constraint binds a single bump.
        """
        q = np.asarray(q, dtype=float)
        pts = self._mats @ q if self.rank else np.zeros((1, 0))
        keep = []
        for p in pts:
            if not keep or min(np.linalg.norm(p - b) for b in keep) > tol:
                keep.append(p)
        pts = np.array(keep)
        if len(pts) < 2:
            return Orbit(pts, math.inf, math.inf)
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        iu = np.triu_indices(len(pts), k=1)
        return Orbit(pts, float(dist[iu].min()), float(dist[iu].max()))

    def isotropy(self, q: np.ndarray, tol: float = MATRIX_TOL) -> Subgroup:
        """Stabilizer subgroup S_q = {g : g q = q}."""
        q = np.asarray(q, dtype=float)
        scale = max(1.0, float(np.linalg.norm(q)))
        if self.rank == 0:
            return Subgroup(self._mats, self._signs, 1, 0)
        fix = np.linalg.norm(self._mats @ q - q, axis=1) <= tol * scale
        mats = self._mats[fix]
        rows = (mats - np.eye(self.rank)).reshape(-1, self.rank)
        rank = int(np.linalg.matrix_rank(rows, tol=1e-8)) if len(mats) else 0
        return Subgroup(mats, self._signs[fix], int(fix.sum()), rank)

    def chamber_stratum(self, q: np.ndarray, tol: float = MATRIX_TOL) -> int:
        """Number of chamber walls containing q, for q in the closed chamber."""
        q = np.asarray(q, dtype=float)
        if self.rank == 0:
            return 0
        scale = max(1.0, float(np.linalg.norm(q)))
        dots = self.chamber_normals @ q
        if np.any(dots < -tol * scale):
            raise PointOutsideChamber(
                f"point {q} has negative wall products {dots}"
            )
        return int(np.sum(np.abs(dots) <= tol * scale))

    def in_closed_chamber(self, q: np.ndarray, tol: float = MATRIX_TOL) -> bool:
        if self.rank == 0:
            return True
        q = np.asarray(q, dtype=float)
        scale = max(1.0, float(np.linalg.norm(q)))
        return bool(np.all(self.chamber_normals @ q >= -tol * scale))

    def chamber_interior_point(self) -> np.ndarray:
        """Unit vector with <q, n_i> > 0 for every wall normal."""
        if self.rank == 0:
            return np.zeros(0)
        q = np.linalg.solve(self.chamber_normals, np.ones(self.rank))
        return q / np.linalg.norm(q)

    def info_dict(self) -> dict:
        return {
            "tag": self.tag,
            "rank": self.rank,
            "order": self.order,
            "grid_exact": self.grid_exact,
            "generators": [g.tolist() for g in self.generators],
            "chamber_normals": self.chamber_normals.tolist(),
        }


def build_group(matrix: CoxeterMatrix, element_cap: int = ELEMENT_CAP,
                tag: str | None = None) -> CoxeterGroup:
    """Build a group from its Coxeter matrix via the Tits representation.

    The Tits reflections sigma_i(x) = x - 2 B(x, e_i) e_i preserve B; with
    B = L L^T they are conjugated by C = L^T into orthogonal matrices.  The
    image C e_i of the i-th basis vector is the -1 eigenvector of the i-th
    conjugated reflection and serves as the chamber normal.
    """
    k = matrix.rank
    if k == 0:
        return CoxeterGroup(matrix, [], np.zeros((0, 0)), tag=tag,
                            element_cap=element_cap)
    b = matrix.bilinear_form()
    c = _cholesky(b).T
    cinv = np.linalg.inv(c)
    gens = []
    for i in range(k):
        tits = np.eye(k) - 2.0 * np.outer(np.eye(k)[i], b[i])
        gens.append(_snap_signed_perm(c @ tits @ cinv))
    normals = c.T / np.linalg.norm(c, axis=0)  # row i = C e_i normalized
    return CoxeterGroup(matrix, gens, normals, tag=tag, element_cap=element_cap)


def _dihedral_realization(m: int):
    """Mirrors of I2(m) as the x1-axis line and the line at angle pi/m."""
    theta = np.pi / m
    r1 = np.array([[1.0, 0.0], [0.0, -1.0]])
    r2 = np.array([
        [math.cos(2 * theta), math.sin(2 * theta)],
        [math.sin(2 * theta), -math.cos(2 * theta)],
    ])
    gens = [r1, _snap_signed_perm(r2)]
    normals = np.array([
        [0.0, 1.0],
        [math.sin(theta), -math.cos(theta)],
    ])
    return gens, normals


def _embed_block(g: np.ndarray, k: int, offset: int) -> np.ndarray:
    out = np.eye(k)
    r = g.shape[0]
    out[offset:offset + r, offset:offset + r] = g
    return out


_SQ2 = math.sqrt(0.5)

_NAMED_MATRICES = {
    "trivial": np.zeros((0, 0), dtype=int),
    "A1": [[1]],
    "A1xA1": [[1, 2], [2, 1]],
    "A1xA1xA1": [[1, 2, 2], [2, 1, 2], [2, 2, 1]],
    "A3": [[1, 3, 2], [3, 1, 3], [2, 3, 1]],
    "B3": [[1, 3, 2], [3, 1, 4], [2, 4, 1]],
    "H3": [[1, 5, 2], [5, 1, 3], [2, 3, 1]],
}


def parse_tag(tag: str):
    """Parse a group tag into (canonical tag, CoxeterMatrix, dihedral order or None)."""
    tag = tag.strip()
    m = None
    if tag.startswith("I2:") or tag.startswith("A1xI2:"):
        head, _, tail = tag.partition(":")
        try:
            m = int(tail)
        except ValueError:
            raise ParseError(f"bad dihedral order in tag {tag!r}") from None
        if m < 2:
            raise ParseError(f"dihedral order must be >= 2, got {m}")
        if head == "I2":
            mat = [[1, m], [m, 1]]
        else:
            mat = [[1, 2, 2], [2, 1, m], [2, m, 1]]
        return tag, CoxeterMatrix(np.array(mat)), m
    if tag in _NAMED_MATRICES:
        return tag, CoxeterMatrix(np.array(_NAMED_MATRICES[tag])), None
    raise ParseError(f"unknown group tag {tag!r}")


def from_name(tag: str, element_cap: int = ELEMENT_CAP) -> CoxeterGroup:
    """Build a named group, preferring grid-exact realizations where they exist."""
    tag, matrix, m = parse_tag(tag)
    if tag == "trivial":
        return CoxeterGroup(matrix, [], np.zeros((0, 0)), tag=tag,
                            element_cap=element_cap)
    if tag == "A1":
        return CoxeterGroup(matrix, [np.array([[-1.0]])], np.array([[1.0]]),
                            tag=tag, element_cap=element_cap)
    if tag == "A1xA1" or (m is not None and tag.startswith("I2:")):
        gens, normals = _dihedral_realization(m if m is not None else 2)
        return CoxeterGroup(matrix, gens, normals, tag=tag,
                            element_cap=element_cap)
    if tag == "A1xA1xA1":
        gens = [np.diag([-1.0, 1, 1]), np.diag([1, -1.0, 1]), np.diag([1, 1, -1.0])]
        return CoxeterGroup(matrix, gens, np.eye(3), tag=tag,
                            element_cap=element_cap)
    if m is not None and tag.startswith("A1xI2:"):
        dg, dn = _dihedral_realization(m)
        gens = [np.diag([-1.0, 1, 1])] + [_embed_block(g, 3, 1) for g in dg]
        normals = np.zeros((3, 3))
        normals[0, 0] = 1.0
        normals[1:, 1:] = dn
        return CoxeterGroup(matrix, gens, normals, tag=tag,
                            element_cap=element_cap)
    if tag == "B3":
        swap01 = np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 1.0]])
        swap12 = np.array([[1.0, 0, 0], [0, 0, 1], [0, 1.0, 0]])
        flip2 = np.diag([1.0, 1.0, -1.0])
        normals = np.array([
            [_SQ2, -_SQ2, 0.0],
            [0.0, _SQ2, -_SQ2],
            [0.0, 0.0, 1.0],
        ])
        return CoxeterGroup(matrix, [swap01, swap12, flip2], normals, tag=tag,
                            element_cap=element_cap)
    # A3 and H3 have no signed-permutation realization; use the Tits route.
    return build_group(matrix, element_cap=element_cap, tag=tag)
