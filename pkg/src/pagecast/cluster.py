"""Structural-family clustering: k-means, 2-D projection, scatter plots.

Everything here is deterministic.  k-means++ seeding draws from the
xorshift64* generator in ``rng``; ties in assignment break toward the
lowest cluster id; empty clusters are repaired by reseeding from the point
farthest from its assigned centroid.  The 2-D projection is PCA by power
iteration (fixed 100 iterations, all-ones start, re-orthogonalization each
step) so plots are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, KTooLarge, TooFewPoints
from .rng import XorShift64Star

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-6

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
)


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # shape (k, d)
    seed: int
    inertia: float
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def _as_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("vectors must share a common dimension")
    return X


def _sq_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def _plusplus_init(X: np.ndarray, k: int, rng: XorShift64Star) -> np.ndarray:
    n = X.shape[0]
    chosen = [rng.next_index(n)]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = rng.next_index(n)
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans_fit(
    vectors: Sequence[Sequence[float]],
    k: int,
    seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding; deterministic per seed."""
    X = _as_matrix(vectors)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} with {n} points")
    rng = XorShift64Star(seed)
    centroids = _plusplus_init(X, k, rng)
    history: list[float] = []
    iterations = 0
    for _ in range(max_iters):
        d2 = _sq_distances(X, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                new_centroids[j] = X[labels == j].mean(axis=0)
        for j in range(k):
            if counts[j] == 0:
                point_d2 = d2[np.arange(n), labels]
                eligible = counts[labels] > 1
                if not eligible.any():
                    eligible = np.ones(n, dtype=bool)
                masked = np.where(eligible, point_d2, -np.inf)
                far = int(np.argmax(masked))
                new_centroids[j] = X[far]
                counts[labels[far]] -= 1
                labels[far] = j
                counts[j] = 1
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        iterations += 1
        if shift < tol:
            break
    d2 = _sq_distances(X, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    history.append(inertia)
    return ClusterModel(
        k=k,
        centroids=centroids,
        seed=seed,
        inertia=inertia,
        iterations_run=iterations,
        inertia_history=history,
    )


def kmeans_fit_restarts(
    vectors: Sequence[Sequence[float]],
    k: int,
    seeds: Iterable[int] = range(10),
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusterModel:
    """Restart harness: fit once per seed, keep the lowest-inertia model."""
    best: ClusterModel | None = None
    for seed in seeds:
        model = kmeans_fit(vectors, k, seed=seed, max_iters=max_iters, tol=tol)
        if best is None or model.inertia < best.inertia:
            best = model
    if best is None:
        raise KTooLarge("no seeds supplied")
    return best


def assign(model: ClusterModel, vector: Sequence[float]) -> tuple[int, float]:
    """Nearest centroid id and Euclidean distance; ties pick the lowest id."""
    v = np.asarray(vector, dtype=float)
    if v.shape != (model.dim,):
        raise DimensionMismatch(f"vector of dim {v.shape} against model dim {model.dim}")
    d2 = ((model.centroids - v) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return idx, math.sqrt(float(d2[idx]))


def project_2d(vectors: Sequence[Sequence[float]]) -> list[tuple[float, float]]:
    """Top-2 principal components by deterministic power iteration."""
    X = _as_matrix(vectors)
    if X.shape[0] < 2:
        raise TooFewPoints("need at least 2 vectors to project")
    X = X - X.mean(axis=0)
    d = X.shape[1]
    scale = float((X * X).sum())  # trace of the scatter matrix, Σ eigenvalues
    components: list[np.ndarray] = []
    for _ in range(2):
        v = np.ones(d) / math.sqrt(d)
        for _ in range(100):
            xv = (X * v[None, :]).sum(axis=1)
            w = (X * xv[:, None]).sum(axis=0)
            # deflation: project out already-found components after each
            # multiply, otherwise the dominant direction re-enters
            for u in components:
                w = w - (w * u).sum() * u
            norm = math.sqrt(float((w * w).sum()))
            if norm <= scale * 1e-12:
                v = np.zeros(d)
                break
            v = w / norm
        if v.any():
            lead = int(np.argmax(np.abs(v)))
            if v[lead] < 0:
                v = -v
        components.append(v)
    coords = np.stack([(X * c[None, :]).sum(axis=1) for c in components], axis=1)
    return [(float(x), float(y)) for x, y in coords]


# --- model file -----------------------------------------------------------
# Header "kmeans v1 k=<k> d=<d> seed=<seed>", then k centroid lines.

def save_model(model: ClusterModel, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"kmeans v1 k={model.k} d={model.dim} seed={model.seed}\n")
        for row in model.centroids:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def load_model(path: Path | str) -> ClusterModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = header.split()
        if len(fields) != 5 or fields[0] != "kmeans" or fields[1] != "v1":
            raise ValueError(f"not a kmeans v1 model file: {header!r}")
        k = int(fields[2].split("=")[1])
        d = int(fields[3].split("=")[1])
        seed = int(fields[4].split("=")[1])
        rows = []
        for _ in range(k):
            line = fh.readline().rstrip("\n")
            rows.append([float(v) for v in line.split("\t")])
    centroids = np.asarray(rows, dtype=float)
    if centroids.shape != (k, d):
        raise ValueError("centroid block does not match header dimensions")
    return ClusterModel(
        k=k, centroids=centroids, seed=seed, inertia=0.0, iterations_run=0
    )


# --- scatter plot ---------------------------------------------------------

_SVG_W, _SVG_H = 640.0, 480.0
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 50.0, 150.0, 20.0, 40.0


def render_scatter_svg(points: Sequence[tuple[float, float]], labels: Sequence[int]) -> str:
    """Byte-deterministic SVG scatter: one circle per point, legend per cluster."""
    if len(points) != len(labels):
        raise DimensionMismatch("points and labels must have equal length")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    plot_w = _SVG_W - _MARGIN_L - _MARGIN_R
    plot_h = _SVG_H - _MARGIN_T - _MARGIN_B

    def sx(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W:.0f}" '
        f'height="{_SVG_H:.0f}" viewBox="0 0 {_SVG_W:.0f} {_SVG_H:.0f}">',
        f'<rect x="0" y="0" width="{_SVG_W:.0f}" height="{_SVG_H:.0f}" fill="#ffffff"/>',
        f'<line x1="{_MARGIN_L:.2f}" y1="{_MARGIN_T + plot_h:.2f}" '
        f'x2="{_MARGIN_L + plot_w:.2f}" y2="{_MARGIN_T + plot_h:.2f}" stroke="#333333"/>',
        f'<line x1="{_MARGIN_L:.2f}" y1="{_MARGIN_T:.2f}" '
        f'x2="{_MARGIN_L:.2f}" y2="{_MARGIN_T + plot_h:.2f}" stroke="#333333"/>',
    ]
    for (x, y), label in zip(points, labels):
        color = PALETTE[label % len(PALETTE)]
        out.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="{color}" '
            f'fill-opacity="0.8"/>'
        )
    legend_x = _MARGIN_L + plot_w + 16
    for i, label in enumerate(sorted(set(labels))):
        color = PALETTE[label % len(PALETTE)]
        ly = _MARGIN_T + 10 + i * 20
        out.append(
            f'<rect x="{legend_x:.2f}" y="{ly:.2f}" width="12" height="12" fill="{color}"/>'
        )
        out.append(
            f'<text x="{legend_x + 18:.2f}" y="{ly + 10:.2f}" font-family="sans-serif" '
            f'font-size="12">cluster {label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_plot(
    points: Sequence[tuple[float, float]],
    labels: Sequence[int],
    out_path: Path | str,
) -> None:
    Path(out_path).write_bytes(render_scatter_svg(points, labels).encode("utf-8"))


def emit_scatter_png(
    points: Sequence[tuple[float, float]],
    labels: Sequence[int],
    out_path: Path | str,
) -> None:
    """Matplotlib rendering of the same scatter, for reports."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 6))
    for label in sorted(set(labels)):
        xs = [p[0] for p, l in zip(points, labels) if l == label]
        ys = [p[1] for p, l in zip(points, labels) if l == label]
        ax.scatter(xs, ys, s=24, color=PALETTE[label % len(PALETTE)], label=f"cluster {label}")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title("Structural families")
    if labels:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
