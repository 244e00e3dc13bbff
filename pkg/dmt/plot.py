"""SVG scatter plots and a small PCA for projecting layers onto a plane.

Output is plain SVG 1.1 built with ElementTree; coordinates are written with
fixed precision so identical inputs give identical bytes.
"""
import logging
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .errors import DataError
from .numerics import Matrix, make_rng

__all__ = "PALETTE", "UNLABELED_COLOR", "scatter_svg", "write_scatter", "pca_project", "top_eigenvectors",

logger = logging.getLogger(__name__)

# tab10
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
UNLABELED_COLOR = "#1f77b4"

WIDTH = 640
HEIGHT = 480
LEGEND_WIDTH = 110
MARGIN = 0.05
RADIUS = 2.0

POWER_ITERATIONS = 1000
POWER_TOL = 1e-13


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def scatter_svg(coords: Matrix, labels=None, *, title: str | None = None) -> str:
    """One circle per point, colored by label, fitted to the bounding box plus a 5% margin."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise DataError(f"scatter plots need 2-D coordinates, got shape {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise DataError("coordinates contain non-finite values")

    lo = coords.min(axis=0) if coords.size else np.zeros(2)
    hi = coords.max(axis=0) if coords.size else np.ones(2)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - MARGIN * span
    span = span * (1.0 + 2.0 * MARGIN)

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "version": "1.1",
        "width": str(WIDTH + LEGEND_WIDTH),
        "height": str(HEIGHT),
        "viewBox": f"0 0 {WIDTH + LEGEND_WIDTH} {HEIGHT}",
    })
    if title:
        ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "rect", {"x": "0", "y": "0", "width": str(WIDTH), "height": str(HEIGHT), "fill": "white", "stroke": "#cccccc"})

    x = (coords[:, 0] - lo[0]) / span[0] * WIDTH
    y = HEIGHT - (coords[:, 1] - lo[1]) / span[1] * HEIGHT

    points = ET.SubElement(svg, "g", {"id": "points"})
    for i in range(coords.shape[0]):
        color = UNLABELED_COLOR if labels is None else PALETTE[int(labels[i]) % len(PALETTE)]
        ET.SubElement(points, "circle", {"cx": _fmt(x[i]), "cy": _fmt(y[i]), "r": _fmt(RADIUS), "fill": color})

    if labels is not None:
        legend = ET.SubElement(svg, "g", {"id": "legend"})
        for row, label in enumerate(np.unique(labels)):
            top = 20 + 18 * row
            ET.SubElement(legend, "rect", {
                "x": str(WIDTH + 15), "y": str(top - 10), "width": "12", "height": "12",
                "fill": PALETTE[int(label) % len(PALETTE)],
            })
            ET.SubElement(legend, "text", {
                "x": str(WIDTH + 33), "y": str(top), "font-family": "sans-serif", "font-size": "12",
            }).text = str(int(label))

    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"


def write_scatter(path: Path | str, coords: Matrix, labels=None, *, title: str | None = None) -> Path:
    path = Path(path)
    try:
        path.write_text(scatter_svg(coords, labels, title=title), encoding="utf-8", newline="\n")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def top_eigenvectors(C: Matrix, n: int = 2, *, seed: int = 0) -> tuple[np.ndarray, Matrix]:
    """Leading eigenpairs of a symmetric PSD matrix by power iteration with deflation.

    Returns ``(eigenvalues, vectors)`` with vectors as columns, signs fixed so
    the largest-magnitude entry of each is positive.
    """
    C = np.array(C, dtype=np.float64)
    d = C.shape[0]
    rng = make_rng(seed)
    values = np.zeros(n)
    vectors = np.zeros((d, n))

    for k in range(min(n, d)):
        v = rng.normal(size=d)
        v /= np.linalg.norm(v)
        for _ in range(POWER_ITERATIONS):
            w = C @ v
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            w /= norm
            if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < POWER_TOL:
                v = w
                break
            v = w

        v = v * np.sign(v[np.argmax(np.abs(v))])
        values[k] = float(v @ C @ v)
        vectors[:, k] = v
        C -= values[k] * np.outer(v, v)

    return values, vectors


def pca_project(X: Matrix, n: int = 2, *, seed: int = 0) -> Matrix:
    """Centered ``X`` projected onto its top ``n`` principal axes."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] < n:
        raise DataError(f"cannot project {X.shape[1]}-D data onto {n} axes")

    centered = X - X.mean(axis=0)
    covariance = centered.T @ centered / max(1, X.shape[0] - 1)
    _, vectors = top_eigenvectors(covariance, n, seed=seed)
    return centered @ vectors
