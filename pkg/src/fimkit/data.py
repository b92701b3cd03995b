"""Point clouds: CSV ingestion and seeded synthetic generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SWISS_U_RANGE = (1.5 * np.pi, 4.5 * np.pi)
SWISS_V_RANGE = (0.0, 21.0)


@dataclass
class PointCloud:
    """N observations in d dimensions, optionally with labels and latent coordinates."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    intrinsic: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty N x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite entries")
        self.points = pts
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (pts.shape[0],):
                raise ValueError(f"labels length {self.labels.shape} does not match N={pts.shape[0]}")
        if self.intrinsic is not None:
            intr = np.asarray(self.intrinsic, dtype=float)
            if intr.ndim == 1:
                intr = intr[:, None]
            if intr.shape[0] != pts.shape[0]:
                raise ValueError(f"intrinsic has {intr.shape[0]} rows, expected {pts.shape[0]}")
            self.intrinsic = intr

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subsample(self, size: int, seed: int) -> "PointCloud":
        """Random subset of ``size`` rows without replacement (kept in original order)."""
        if size >= self.n:
            return self
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(self.n, size=size, replace=False))
        return PointCloud(
            self.points[idx],
            None if self.labels is None else self.labels[idx],
            None if self.intrinsic is None else self.intrinsic[idx],
            self.name,
        )


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        val = float(cell)
    except ValueError:
        raise ValueError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not np.isfinite(val):
        raise ValueError(f"non-finite cell {cell!r} at row {row}, column {col}")
    return val


def load_csv(
    path,
    has_header: bool = False,
    label_column: Optional[str] = None,
    intrinsic_columns: Sequence[str] = (),
) -> PointCloud:
    """Read a comma-separated point cloud.

    Named columns (``label_column``, ``intrinsic_columns``) require a header row;
    every other column is a coordinate. Row and column numbers in error messages
    are 1-based and count the header line.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    first = 1
    if has_header:
        if not rows:
            raise ValueError("no data rows")
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        first = 2
    elif label_column is not None or intrinsic_columns:
        raise ValueError("named columns require has_header=True")
    if not rows:
        raise ValueError("no data rows")

    width = len(rows[0]) if header is None else len(header)
    label_idx = None
    intr_idx: list = []
    if header is not None:
        try:
            if label_column is not None:
                label_idx = header.index(label_column)
            intr_idx = [header.index(c) for c in intrinsic_columns]
        except ValueError as exc:
            raise ValueError(f"column not found in header: {exc}") from None
    skip = set(intr_idx) | ({label_idx} if label_idx is not None else set())
    coord_idx = [j for j in range(width) if j not in skip]
    if not coord_idx:
        raise ValueError("no coordinate columns")

    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        lineno = i + first
        if len(row) != width:
            raise ValueError(f"ragged row {lineno}: expected {width} cells, got {len(row)}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_float(cell.strip(), lineno, j + 1)

    labels = data[:, label_idx].astype(int) if label_idx is not None else None
    intrinsic = data[:, intr_idx] if intr_idx else None
    return PointCloud(data[:, coord_idx], labels, intrinsic, name=path.stem)


def save_csv(pc: PointCloud, path) -> None:
    """Write points (x0..), then ``label`` and intrinsic (z0..) columns, with a header."""
    cols = [pc.points]
    header = [f"x{j}" for j in range(pc.dim)]
    if pc.labels is not None:
        cols.append(pc.labels[:, None].astype(float))
        header.append("label")
    if pc.intrinsic is not None:
        cols.append(pc.intrinsic)
        header += [f"z{j}" for j in range(pc.intrinsic.shape[1])]
    table = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def gen_tree(
    n_branches: int,
    points_per_branch: int,
    dim: int,
    noise_sd: float = 0.0,
    seed: int = 0,
    branch_length: float = 1.0,
) -> PointCloud:
    """Random tree of straight branches.

    Branch 0 grows from the origin; each later branch grows from a uniformly chosen
    sample of an earlier branch. Sample k of a branch sits at arclength
    ``(k + 1) / points_per_branch * branch_length`` from the branch anchor.
    ``intrinsic`` holds (branch id, arclength); ``labels`` the branch id.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if n_branches < 1 or points_per_branch < 1:
        raise ValueError("n_branches and points_per_branch must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    s = branch_length * np.arange(1, points_per_branch + 1) / points_per_branch
    clean = np.empty((n_branches * points_per_branch, dim))
    for b in range(n_branches):
        if b == 0:
            anchor = np.zeros(dim)
        else:
            anchor = clean[rng.integers(0, b * points_per_branch)]
        direction = _unit_vector(rng, dim)
        clean[b * points_per_branch:(b + 1) * points_per_branch] = anchor + s[:, None] * direction
    labels = np.repeat(np.arange(n_branches), points_per_branch)
    intrinsic = np.column_stack([labels.astype(float), np.tile(s, n_branches)])
    points = clean + noise_sd * rng.standard_normal(clean.shape)
    return PointCloud(points, labels, intrinsic, name="tree")


def swiss_roll_arclength(u, u0: float = SWISS_U_RANGE[0]):
    """Arclength of the spiral (u cos u, u sin u) from ``u0`` to ``u``."""

    def prim(s):
        r = np.sqrt(1.0 + s * s)
        return 0.5 * (s * r + np.arcsinh(s))

    return prim(np.asarray(u, dtype=float)) - prim(u0)


def gen_swiss_roll(n: int, seed: int = 0, noise_sd: float = 0.0) -> PointCloud:
    """Swiss roll (u cos u, v, u sin u); intrinsic = (arclength(u), v), unrolled isometrically."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    u = rng.uniform(*SWISS_U_RANGE, size=n)
    v = rng.uniform(*SWISS_V_RANGE, size=n)
    points = np.column_stack([u * np.cos(u), v, u * np.sin(u)])
    if noise_sd > 0:
        points = points + noise_sd * rng.standard_normal(points.shape)
    intrinsic = np.column_stack([swiss_roll_arclength(u), v])
    return PointCloud(points, None, intrinsic, name="swiss_roll")


def swiss_roll_angle(arclength, u0: float = SWISS_U_RANGE[0], iters: int = 60):
    """Inverse of ``swiss_roll_arclength``: the angle u with the given arclength (Newton)."""
    target = np.asarray(arclength, dtype=float)
    # arclength grows like u^2 / 2, so this start is close for all but tiny s
    u = np.sqrt(np.maximum(u0 * u0 + 2.0 * target, 1e-12))
    for _ in range(iters):
        step = (swiss_roll_arclength(u, u0) - target) / np.sqrt(1.0 + u * u)
        u = u - step
        if np.all(np.abs(step) < 1e-13 * np.maximum(1.0, np.abs(u))):
            break
    return u


def swiss_roll_chart(coords) -> np.ndarray:
    """Map unrolled (arclength, height) rows onto the roll in 3-space."""
    c = np.atleast_2d(np.asarray(coords, dtype=float))
    u = swiss_roll_angle(c[:, 0])
    return np.column_stack([u * np.cos(u), c[:, 1], u * np.sin(u)])


def swiss_roll_chart_jacobian(coords) -> np.ndarray:
    """d(x, y, z) / d(arclength, height) for each row: (n, 3, 2)."""
    c = np.atleast_2d(np.asarray(coords, dtype=float))
    u = swiss_roll_angle(c[:, 0])
    du = 1.0 / np.sqrt(1.0 + u * u)  # d angle / d arclength
    J = np.zeros((len(c), 3, 2))
    J[:, 0, 0] = (np.cos(u) - u * np.sin(u)) * du
    J[:, 2, 0] = (np.sin(u) + u * np.cos(u)) * du
    J[:, 1, 1] = 1.0
    return J


def add_noise(pc: PointCloud, level: float, seed: int = 0) -> PointCloud:
    """Copy of ``pc`` with i.i.d. N(0, level^2) added to every coordinate."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return replace(pc, points=pc.points.copy())
    rng = np.random.default_rng(seed)
    return replace(pc, points=pc.points + level * rng.standard_normal(pc.points.shape))


def tree_landmarks(
    n_branches: int,
    points_per_branch: int,
    dim: int,
    seed: int = 0,
    branch_length: float = 1.0,
):
    """Branch points and leaf ends of the tree ``gen_tree`` builds with these arguments.

    Returns ``(junctions, tips)`` as arrays of positions. Junctions are the anchors of
    branches 1..; tips are the far end of every branch plus the origin, minus any
    end that another branch grows from.
    """
    clean = gen_tree(n_branches, points_per_branch, dim, 0.0, seed, branch_length).points
    per = points_per_branch
    first = clean[::per]
    last = clean[per - 1::per]
    step = branch_length / per
    direction = (last - first) / (branch_length - step) if per > 1 else None
    if direction is None:
        # single-sample branches: recover the anchor from the generator's own draws
        rng = np.random.default_rng(seed)
        anchors = [np.zeros(dim)]
        for b in range(n_branches):
            if b > 0:
                anchors.append(clean[rng.integers(0, b * per)])
            _unit_vector(rng, dim)
        anchors = np.asarray(anchors)
    else:
        anchors = first - step * direction
    junctions = anchors[1:]
    candidates = np.vstack([last, anchors[:1]])
    if len(junctions):
        gap = np.min(np.linalg.norm(candidates[:, None, :] - junctions[None, :, :], axis=2), axis=1)
        candidates = candidates[gap > 1e-9 * max(branch_length, 1.0)]
    return junctions, candidates


def tree_regions(points, junctions, tips, radius: float = 0.1, tip_fraction: float = 0.1):
    """Boolean masks for points near a branch junction and points nearest a branch tip.

    A point is in the junction region when it lies within ``radius`` of any junction;
    the tip region is the ``tip_fraction`` of points closest to their nearest tip.
    """
    P = np.asarray(points, dtype=float)
    near_junction = np.zeros(len(P), dtype=bool)
    if len(junctions):
        dj = np.min(np.linalg.norm(P[:, None, :] - np.asarray(junctions)[None], axis=2), axis=1)
        near_junction = dj < radius
    dt = np.min(np.linalg.norm(P[:, None, :] - np.asarray(tips)[None], axis=2), axis=1)
    near_tip = dt <= np.quantile(dt, tip_fraction)
    return near_junction, near_tip
