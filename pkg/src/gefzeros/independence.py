"""Deterministic skeleton of the almost-independence coupling.

For compacts ``K_j`` with scales ``rho_j`` a net is built from the unit
lattice points ``C_j`` within ``1/sqrt(2)`` of ``K_j`` and ``ceil(A^2 rho_j^2)``
equidistant points on the unit circle around each of them.  The coupling
exists when the Gram matrix

    gamma(z, z)      = exp(-A^2 rho_j^2 / 5)
    gamma(z, zeta)   = 0                              (same bunch, z != zeta)
    gamma(z, zeta)   = -exp(z conj(zeta) - |z|^2/2 - |zeta|^2/2)   (different bunches)

is positive definite, which a positive Gershgorin margin certifies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .test_functions import TestFunction

DEFAULT_A = 5.0
NET_RADIUS = 1.0 / math.sqrt(2.0)
UNDERFLOW_FLOOR = 1e-300


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Compact:
    """A compact set given by a polygon (vertices) or a point cloud."""

    points: np.ndarray
    polygon: bool = False

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Compact":
        pts = np.array([x0 + 1j * y0, x1 + 1j * y0, x1 + 1j * y1, x0 + 1j * y1])
        return cls(pts, polygon=True)

    @classmethod
    def square(cls, center: complex, side: float) -> "Compact":
        c = complex(center)
        h = side / 2
        return cls.rectangle(c.real - h, c.imag - h, c.real + h, c.imag + h)

    @property
    def diameter(self) -> float:
        p = self.points
        if p.size < 2:
            return 0.0
        return float(np.max(np.abs(p[:, None] - p[None, :])))

    def distance(self, z: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point of ``z`` to the compact."""
        z = np.asarray(z, dtype=complex)
        if not self.polygon or self.points.size < 3:
            return np.min(np.abs(z[:, None] - self.points[None, :]), axis=1)
        verts = self.points
        inside = _points_in_polygon(z, verts)
        a = verts
        b = np.roll(verts, -1)
        ab = b - a
        t = np.clip(((z[:, None] - a[None, :]) * np.conj(ab)[None, :]).real / np.abs(ab) ** 2, 0.0, 1.0)
        d = np.min(np.abs(z[:, None] - (a[None, :] + t * ab[None, :])), axis=1)
        return np.where(inside, 0.0, d)

    def sample_boundary(self, n: int = 400) -> np.ndarray:
        if not self.polygon:
            return self.points
        verts = self.points
        out = []
        for a, b in zip(verts, np.roll(verts, -1)):
            out.append(a + (b - a) * np.linspace(0.0, 1.0, n, endpoint=False))
        return np.concatenate(out)

    def to_record(self) -> dict:
        key = "polygon" if self.polygon else "points"
        return {key: [[float(p.real), float(p.imag)] for p in self.points]}


def _points_in_polygon(z: np.ndarray, verts: np.ndarray) -> np.ndarray:
    x, y = z.real, z.imag
    inside = np.zeros(z.shape, dtype=bool)
    n = verts.size
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        cond = (a.imag > y) != (b.imag > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
        inside ^= cond & (x < xint)
    return inside


@dataclass(frozen=True, eq=False)
class CompactNet:
    compact_id: int
    lattice_points: np.ndarray
    circle_points: np.ndarray
    rho: float
    A: float
    compact: Compact = field(repr=False)

    @property
    def points_per_circle(self) -> int:
        return int(math.ceil(self.A**2 * self.rho**2))

    @property
    def diagonal(self) -> float:
        return math.exp(-self.A**2 * self.rho**2 / 5.0)


def minimal_rho(diameter: float) -> float:
    """``sqrt(log(3 + diam))``."""
    return math.sqrt(math.log(3.0 + diameter))


def build_net(
    compact: Compact,
    A: float = DEFAULT_A,
    rho: float | None = None,
    compact_id: int = 0,
    enforce_rho: bool = True,
) -> CompactNet:
    """Lattice points within ``1/sqrt 2`` of the compact plus circle points.

    ``rho`` defaults to the minimal admissible value ``sqrt(log(3 + diam))``
    (Euclidean diameter); smaller values are rejected unless
    ``enforce_rho=False``.
    """
    if compact.points.size == 0:
        raise ConfigurationError("empty compact")
    if A < 1:
        raise ConfigurationError("A must be at least 1")
    rho_min = minimal_rho(compact.diameter)
    if rho is None:
        rho = rho_min
    if enforce_rho and rho < rho_min * (1 - 1e-12):
        raise ConfigurationError(f"rho={rho} below sqrt(log(3 + diam)) = {rho_min}")
    p = compact.points
    lo = np.floor([p.real.min() - 1, p.imag.min() - 1]).astype(int)
    hi = np.ceil([p.real.max() + 1, p.imag.max() + 1]).astype(int)
    X, Y = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
    lattice = (X + 1j * Y).ravel().astype(complex)
    lattice = lattice[compact.distance(lattice) <= NET_RADIUS + 1e-12]
    if lattice.size == 0:
        # a point compact sitting at a cell centre: take the nearest lattice point
        c = p[0]
        lattice = np.array([complex(round(c.real), round(c.imag))])
    lattice = lattice[np.lexsort((lattice.imag, lattice.real))]
    m = int(math.ceil(A * A * rho * rho))
    ring = np.exp(2j * math.pi * np.arange(m) / m)
    circles = (lattice[:, None] + ring[None, :]).ravel()
    return CompactNet(int(compact_id), lattice, circles, float(rho), float(A), compact)


def covering_radius(net: CompactNet, n: int = 200) -> float:
    """Largest distance from a compact point (dense scan) to the lattice points."""
    c = net.compact
    if c.polygon:
        p = c.points
        xs = np.linspace(p.real.min(), p.real.max(), n)
        ys = np.linspace(p.imag.min(), p.imag.max(), n)
        X, Y = np.meshgrid(xs, ys)
        z = (X + 1j * Y).ravel()
        z = np.concatenate([z[c.distance(z) == 0], c.sample_boundary()])
    else:
        z = c.points
    tree = cKDTree(np.column_stack([net.lattice_points.real, net.lattice_points.imag]))
    return float(tree.query(np.column_stack([z.real, z.imag]))[0].max())


def _compact_distance(a: Compact, b: Compact) -> float:
    pa = a.sample_boundary() if a.polygon else a.points
    pb = b.sample_boundary() if b.polygon else b.points
    d = min(float(np.min(b.distance(pa))), float(np.min(a.distance(pb))))
    return d


def check_disjoint(nets) -> None:
    """Raise unless the ``A rho_j`` neighbourhoods of the compacts are disjoint."""
    for i, a in enumerate(nets):
        for b in nets[i + 1 :]:
            gap = _compact_distance(a.compact, b.compact)
            if gap < (a.A * a.rho + b.A * b.rho) * (1 - 1e-9):
                raise ConfigurationError(
                    f"A rho neighbourhoods of compacts {a.compact_id} and {b.compact_id} intersect "
                    f"(distance {gap:.4g})"
                )


def inner_product_abs(z, zeta) -> np.ndarray:
    """``|<v_z, v_zeta>| = exp(-|z - zeta|^2 / 2)`` (values below 1e-300 clamp to 0)."""
    v = np.exp(-0.5 * np.abs(np.asarray(z) - zeta) ** 2)
    return np.where(v < UNDERFLOW_FLOOR, 0.0, v)


def interaction_sum(z: complex, other_nets, check: bool = True, own=None) -> float:
    """``sum_{k != j} sum_{zeta in Z_k} |<v_z, v_zeta>|`` for ``z`` in ``Z_j``."""
    if check and own is not None:
        check_disjoint([own, *other_nets])
    total = 0.0
    for net in other_nets:
        total += float(np.sum(inner_product_abs(z, net.circle_points)))
    return total


def interaction_bound_holds(nets) -> bool:
    """Check ``interaction_sum(z) < exp(-A^2 rho_j^2 / 5)`` for every net point."""
    check_disjoint(nets)
    for j, net in enumerate(nets):
        others = [n for k, n in enumerate(nets) if k != j]
        if not others:
            continue
        pts = np.concatenate([o.circle_points for o in others])
        d2 = cdist(
            np.column_stack([net.circle_points.real, net.circle_points.imag]),
            np.column_stack([pts.real, pts.imag]),
            "sqeuclidean",
        )
        sums = np.exp(-0.5 * d2).sum(axis=1)
        if np.any(sums >= net.diagonal):
            return False
    return True


@dataclass(frozen=True, eq=False)
class CouplingGram:
    matrix: np.ndarray
    bunch_index: np.ndarray
    points: np.ndarray


def coupling_gram(nets) -> CouplingGram:
    """Assemble the Hermitian Gram matrix over all circle points of all nets."""
    pts = np.concatenate([n.circle_points for n in nets])
    bunch = np.concatenate([np.full(n.circle_points.size, j) for j, n in enumerate(nets)])
    diag = np.concatenate([np.full(n.circle_points.size, n.diagonal) for n in nets])
    # exp(z conj(zeta) - |z|^2/2 - |zeta|^2/2): modulus exp(-|z - zeta|^2/2)
    expo = pts[:, None] * np.conj(pts)[None, :] - 0.5 * np.abs(pts[:, None]) ** 2 - 0.5 * np.abs(pts[None, :]) ** 2
    G = -np.exp(expo)
    G[bunch[:, None] == bunch[None, :]] = 0.0
    G[np.diag_indices_from(G)] = diag
    G = 0.5 * (G + G.conj().T)  # exactly Hermitian after rounding
    return CouplingGram(G, bunch, pts)


def gershgorin_margin(gram: CouplingGram) -> float:
    """``min_z (gamma(z, z) - sum_{zeta != z} |gamma(z, zeta)|)``."""
    G = gram.matrix
    off = np.sum(np.abs(G), axis=1) - np.abs(np.diag(G))
    return float(np.min(np.diag(G).real - off))


def smallest_eigenvalue(gram: CouplingGram) -> float:
    return float(np.linalg.eigvalsh(gram.matrix)[0])


# -- configurations ------------------------------------------------------------------------


def random_configuration(rng: np.random.Generator, n_compacts: int = 3, A: float = DEFAULT_A, max_side: float = 1.5):
    """Random rectangles placed so that their ``A rho`` neighbourhoods are disjoint."""
    nets: list[CompactNet] = []
    placed = 0
    while placed < n_compacts:
        w, h = rng.uniform(0.2, max_side, size=2)
        comp0 = Compact.rectangle(0.0, 0.0, w, h)
        rho = minimal_rho(comp0.diameter) * rng.uniform(1.0, 1.3)
        for _ in range(200):
            if not nets:
                off = 0j
            else:
                ang = rng.uniform(0, 2 * math.pi)
                dist = rng.uniform(0.0, 1.0) * 4 * A * rho + 2 * A * rho
                base = nets[rng.integers(len(nets))].compact.points[0]
                off = base + dist * complex(math.cos(ang), math.sin(ang))
            comp = Compact(comp0.points + off, polygon=True)
            cand = build_net(comp, A, rho, compact_id=placed)
            try:
                check_disjoint([*nets, cand])
            except ConfigurationError:
                continue
            nets.append(cand)
            placed += 1
            break
        else:
            raise ConfigurationError("could not place compact")
    return nets


def nets_from_config(cfg: dict) -> list[CompactNet]:
    """``{"A": 5, "compacts": [{"rectangle": [x0, y0, x1, y1], "rho": r}, {"points": [[x, y], ...]}]}``."""
    A = float(cfg.get("A", DEFAULT_A))
    nets = []
    for j, c in enumerate(cfg["compacts"]):
        unknown = set(c) - {"rectangle", "polygon", "points", "rho"}
        if unknown:
            raise ConfigurationError(f"unknown compact keys {sorted(unknown)}")
        if "rectangle" in c:
            comp = Compact.rectangle(*map(float, c["rectangle"]))
        elif "polygon" in c:
            comp = Compact(np.array([complex(x, y) for x, y in c["polygon"]]), polygon=True)
        elif "points" in c:
            comp = Compact(np.array([complex(x, y) for x, y in c["points"]]))
        else:
            raise ConfigurationError("compact needs rectangle, polygon or points")
        nets.append(build_net(comp, A, c.get("rho"), compact_id=j))
    return nets


def net_summary(nets) -> dict:
    gram = coupling_gram(nets)
    return {
        "A": nets[0].A,
        "compacts": [
            {
                "id": n.compact_id,
                "rho": n.rho,
                "lattice_points": int(n.lattice_points.size),
                "circle_points": int(n.circle_points.size),
                "diagonal": n.diagonal,
            }
            for n in nets
        ],
        "gershgorin_margin": gershgorin_margin(gram),
        "smallest_eigenvalue": smallest_eigenvalue(gram),
    }


def tight_configuration(shapes, A: float, angle: float = 0.0) -> list[CompactNet]:
    """Rectangles ``(w, h, rho)`` placed along a line at the minimal admissible gaps.

    Consecutive compacts are ``A (rho_i + rho_{i+1})`` apart (plus a relative
    1e-9), the closest packing allowed by the disjointness hypothesis.
    """
    u = complex(math.cos(angle), math.sin(angle))
    nets: list[CompactNet] = []
    for j, (w, h, rho) in enumerate(shapes):
        comp = Compact.rectangle(0.0, 0.0, w, h)
        if nets:
            prev = nets[-1]
            # push along u until the gap reaches the admissible minimum
            need = A * (prev.rho + rho) * (1 + 1e-9)
            lo, hi = 0.0, need + 2 * (prev.compact.diameter + comp.diameter) + 1.0
            start = prev.compact.points.mean()
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                cand = Compact(comp.points - comp.points.mean() + start + mid * u, polygon=True)
                if _compact_distance(prev.compact, cand) >= need:
                    hi = mid
                else:
                    lo = mid
            comp = Compact(comp.points - comp.points.mean() + start + hi * u, polygon=True)
        nets.append(build_net(comp, A, rho, compact_id=j))
    return nets


def calibrate_A(templates, candidates=np.arange(1.0, 8.01, 0.25)) -> float:
    """Smallest ``A`` among ``candidates`` with positive margins on all templates.

    Each template is a list of ``(w, h, rho)`` rectangles, rebuilt for every
    candidate ``A`` by :func:`tight_configuration`; the interaction bound must
    hold as well.
    """
    for A in candidates:
        ok = True
        for shapes in templates:
            nets = tight_configuration(shapes, float(A))
            if gershgorin_margin(coupling_gram(nets)) <= 0 or not interaction_bound_holds(nets):
                ok = False
                break
        if ok:
            return float(A)
    return math.nan


def random_templates(rng: np.random.Generator, n_templates: int, n_compacts: int = 3, max_side: float = 1.5):
    """Random ``(w, h, rho)`` lists with ``rho`` between 1 and 1.3 times the minimum."""
    out = []
    for _ in range(n_templates):
        shapes = []
        for _ in range(n_compacts):
            w, h = rng.uniform(0.2, max_side, size=2)
            shapes.append((float(w), float(h), minimal_rho(math.hypot(w, h)) * float(rng.uniform(1.0, 1.3))))
        out.append(shapes)
    return out


# -- empirical decorrelation -----------------------------------------------------------------


def _square_statistic(zeros: np.ndarray, center: complex, side: float, h: TestFunction | None) -> float:
    rel = zeros - center
    if h is None:
        inside = (np.abs(rel.real) < side / 2) & (np.abs(rel.imag) < side / 2)
        return float(np.count_nonzero(inside))
    return float(math.fsum(h.evaluate(rel / (side / 2))))


def empirical_decorrelation(
    h: TestFunction | None,
    separation: float,
    side: float = 2.0,
    n_samples: int = 4000,
    master_seed: int = 0,
    threads: int = 1,
) -> float:
    """Correlation of statistics over two squares whose centres are ``separation`` apart.

    With ``h=None`` the statistic is the zero count in each square; otherwise
    ``sum_a h((a - c) / (side / 2))``.  ``separation = 0`` gives the same square
    twice (correlation 1); overlapping squares are allowed.
    """
    from .montecarlo import ensemble_values

    c1 = -0.5 * separation + 0j
    c2 = 0.5 * separation + 0j
    reach = 0.5 * separation + side / math.sqrt(2) * (1.0 if h is None else max(1.0, h.support_radius))
    vals, _ = ensemble_values(
        {
            "x": lambda s, zs: _square_statistic(zs.zeros, c1, side, h),
            "y": lambda s, zs: _square_statistic(zs.zeros, c2, side, h),
        },
        reach,
        n_samples,
        master_seed,
        threads,
    )
    x, y = vals["x"], vals["y"]
    if np.std(x) == 0 or np.std(y) == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1])


def margins_csv(rows) -> str:
    """``config_index,n_points,margin,smallest_eigenvalue,interaction_ok`` CSV text."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["config_index", "n_points", "margin", "smallest_eigenvalue", "interaction_ok"])
    for r in rows:
        w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), int(bool(r[4]))])
    return buf.getvalue()


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
