"""Standard-form conic programs.

A :class:`ConeProgram` is

    minimize    c^T x
    subject to  G x + s = h,   A x = b,   s in K

where ``K`` is an ordered product of cone blocks.  Each block owns a
contiguous run of slack entries:

    ``Cone.orthant(k)``  k nonnegative entries
    ``Cone.soc(k)``      (u0, u1) with ||u1|| <= u0, k entries
    ``Cone.rsoc(k)``     (u, v, z) with ||z||^2 <= u*v, u, v >= 0
    ``Cone.psd(n)``      svec of a symmetric n x n PSD matrix, n(n+1)/2 entries

Rotated blocks are lowered to ordinary second-order cones before solving.
"""

from dataclasses import dataclass, field

import numpy as np

from .cones import svec_size

__all__ = ["Cone", "ConeProgram", "ConeSolution", "Status"]


class Status:
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal-infeasible"
    DUAL_INFEASIBLE = "dual-infeasible"
    NUMERIC_LIMIT = "numeric-limit"


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    @classmethod
    def orthant(cls, k):
        return cls("orthant", int(k))

    @classmethod
    def soc(cls, k):
        return cls("soc", int(k))

    @classmethod
    def rsoc(cls, k):
        return cls("rsoc", int(k))

    @classmethod
    def psd(cls, n):
        return cls("psd", int(n))

    @property
    def size(self):
        """Number of slack entries owned by this block."""
        return svec_size(self.dim) if self.kind == "psd" else self.dim

    def __post_init__(self):
        if self.kind not in ("orthant", "soc", "rsoc", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind in ("soc",) and self.dim < 1:
            raise ValueError("soc blocks need at least one entry")
        if self.kind == "rsoc" and self.dim < 2:
            raise ValueError("rotated soc blocks need at least two entries")
        if self.kind in ("orthant", "psd") and self.dim < 1:
            raise ValueError(f"{self.kind} block of size {self.dim}")


@dataclass
class ConeSolution:
    status: str
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    primal_objective: float
    dual_objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    certificate: np.ndarray = None

    @property
    def optimal(self):
        return self.status == Status.OPTIMAL


class ConeProgram:
    """Container for a standard-form conic program.

    Parameters
    ----------
    c : (n,) array_like
    G : (m, n) array_like
    h : (m,) array_like
    cones : sequence of Cone
        Block structure of the slack vector; sizes must sum to ``m``.
    A : (p, n) array_like, optional
    b : (p,) array_like, optional
    """

    def __init__(self, c, G, h, cones, A=None, b=None):
        self.c = np.asarray(c, dtype=float).ravel()
        n = self.c.size
        self.G = np.asarray(G, dtype=float).reshape(-1, n)
        self.h = np.asarray(h, dtype=float).ravel()
        self.cones = list(cones)
        if A is None:
            A = np.zeros((0, n))
            b = np.zeros(0)
        self.A = np.asarray(A, dtype=float).reshape(-1, n)
        self.b = np.asarray(b, dtype=float).ravel()
        m = sum(cone.size for cone in self.cones)
        if self.G.shape[0] != m:
            raise ValueError(f"cone blocks cover {m} slack entries but G has {self.G.shape[0]} rows")
        if self.h.size != m:
            raise ValueError(f"h has {self.h.size} entries, expected {m}")
        if self.b.size != self.A.shape[0]:
            raise ValueError(f"b has {self.b.size} entries, A has {self.A.shape[0]} rows")
        for name, arr in (("c", self.c), ("G", self.G), ("h", self.h), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def n(self):
        return self.c.size

    @property
    def m(self):
        return self.h.size

    def block_offsets(self):
        offsets, off = [], 0
        for cone in self.cones:
            offsets.append(off)
            off += cone.size
        return offsets

    def lower(self):
        """Reorder and transform blocks into solver layout.

        Returns ``(G, h, dims, to_user_s, to_user_z)`` where ``dims`` is
        ``(l, soc_sizes, psd_orders)`` and the two callables map solver-layout
        slack/dual vectors back to this program's block layout.
        """
        offsets = self.block_offsets()
        orth, soc, psd = [], [], []
        for cone, off in zip(self.cones, offsets):
            rows = np.arange(off, off + cone.size)
            if cone.kind == "orthant":
                orth.append(rows)
            elif cone.kind in ("soc", "rsoc"):
                soc.append((cone, rows))
            else:
                psd.append((cone, rows))
        # stable sort of SOC blocks by size so that equal sizes are contiguous
        soc.sort(key=lambda item: item[0].dim)
        G_parts, h_parts, row_map, kinds = [], [], [], []
        if orth:
            rows = np.concatenate(orth)
            G_parts.append(self.G[rows])
            h_parts.append(self.h[rows])
            row_map.append(rows)
            kinds.append(("orthant", rows, None))
        soc_sizes = []
        for cone, rows in soc:
            Gb, hb = self.G[rows], self.h[rows]
            if cone.kind == "rsoc":
                T = _rsoc_transform(cone.dim)
                Gb, hb = T @ Gb, T @ hb
                kinds.append(("rsoc", rows, T))
            else:
                kinds.append(("soc", rows, None))
            G_parts.append(Gb)
            h_parts.append(hb)
            soc_sizes.append(cone.dim)
        psd_orders = []
        for cone, rows in psd:
            G_parts.append(self.G[rows])
            h_parts.append(self.h[rows])
            kinds.append(("psd", rows, None))
            psd_orders.append(cone.dim)
        l = int(sum(len(r) for r in orth))
        G = np.vstack(G_parts) if G_parts else np.zeros((0, self.n))
        h = np.concatenate(h_parts) if h_parts else np.zeros(0)

        def to_user(vec, dual):
            out = np.empty(self.m)
            pos = 0
            for kind, rows, T in kinds:
                k = len(rows)
                part = vec[pos:pos + k]
                if T is not None:
                    # slack: s_soc = T s_rsoc ; dual: z_rsoc = T^T z_soc
                    part = T.T @ part if dual else np.linalg.solve(T, part)
                out[rows] = part
                pos += k
            return out

        return G, h, (l, soc_sizes, psd_orders), (lambda v: to_user(v, False)), (lambda v: to_user(v, True))

    def dump(self, path_or_file):
        """Write the program in a plain-text triplet format.

        Layout::

            # relaycast cone program
            dims n m p
            cones <kind>:<dim> ...
            c <n values>
            h <m values>
            b <p values>
            G <row> <col> <value>      (one line per nonzero)
            A <row> <col> <value>
        """
        lines = ["# relaycast cone program", f"dims {self.n} {self.m} {self.A.shape[0]}"]
        lines.append("cones " + " ".join(f"{c.kind}:{c.dim}" for c in self.cones))
        for name, vec in (("c", self.c), ("h", self.h), ("b", self.b)):
            lines.append(name + "".join(f" {v:.17g}" for v in vec))
        for name, mat in (("G", self.G), ("A", self.A)):
            rr, cc = np.nonzero(mat)
            for r, c in zip(rr, cc):
                lines.append(f"{name} {r} {c} {mat[r, c]:.17g}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w") as fh:
                fh.write(text)

    @classmethod
    def load(cls, path_or_file):
        """Read a program written by :meth:`dump`."""
        if hasattr(path_or_file, "read"):
            text = path_or_file.read()
        else:
            with open(path_or_file) as fh:
                text = fh.read()
        vecs, trip = {}, {"G": [], "A": []}
        n = m = p = 0
        cones = []
        for raw in text.splitlines():
            if not raw.strip() or raw.startswith("#"):
                continue
            head, *rest = raw.split()
            if head == "dims":
                n, m, p = (int(v) for v in rest)
            elif head == "cones":
                for tok in rest:
                    kind, dim = tok.split(":")
                    cones.append(Cone(kind, int(dim)))
            elif head in ("c", "h", "b"):
                vecs[head] = np.array([float(v) for v in rest])
            elif head in ("G", "A"):
                trip[head].append((int(rest[0]), int(rest[1]), float(rest[2])))
            else:
                raise ValueError(f"unknown record {head!r}")
        G = np.zeros((m, n))
        A = np.zeros((p, n))
        for r, c, v in trip["G"]:
            G[r, c] = v
        for r, c, v in trip["A"]:
            A[r, c] = v
        return cls(vecs.get("c", np.zeros(n)), G, vecs.get("h", np.zeros(m)), cones,
                   A, vecs.get("b", np.zeros(p)))


def _rsoc_transform(k):
    """Map (u, v, z) with ||z||^2 <= uv onto (u+v, u-v, 2z) in the standard SOC."""
    T = np.zeros((k, k))
    T[0, 0] = T[0, 1] = 1.0
    T[1, 0] = 1.0
    T[1, 1] = -1.0
    T[2:, 2:] = 2.0 * np.eye(k - 2)
    return T
