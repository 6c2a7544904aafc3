"""Plot-ready outputs: a block summary table and a standalone SVG of spot clusters."""

from __future__ import annotations

import csv
from xml.sax.saxutils import escape

import numpy as np

PALETTE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
    "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a",
)


def write_block_table(path, mu, tau, c_delta):
    """One line per block with mean, tau, xi and tau / xi (1-based k, r)."""
    mu, tau = np.asarray(mu, dtype=float), np.asarray(tau, dtype=float)
    xi = c_delta - tau
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "r", "mu", "tau", "xi", "snr"])
        for k in range(mu.shape[0]):
            for r in range(mu.shape[1]):
                w.writerow([k + 1, r + 1, *(repr(float(v)) for v in (mu[k, r], tau[k, r], xi[k, r], tau[k, r] / xi[k, r]))])


def spot_scatter_svg(coords, labels, size=480, margin=24, title="column clusters") -> str:
    """SVG scatter of spots coloured by (1-based) cluster label, with a legend."""
    coords = np.asarray(coords, dtype=float)
    labels = np.asarray(labels, dtype=int)
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    scale = (size - 2 * margin) / span
    # y grows downward in SVG
    px = margin + (coords[:, 0] - lo[0]) * scale
    py = size - margin - (coords[:, 1] - lo[1]) * scale
    radius = max(1.5, min(6.0, 0.4 * scale * _typical_spacing(coords)))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 120}" height="{size}" viewBox="0 0 {size + 120} {size}">',
        f"<title>{escape(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for x, y, lab in zip(px, py, labels):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius:.2f}" fill="{PALETTE[(lab - 1) % len(PALETTE)]}"/>')
    for i, lab in enumerate(np.unique(labels)):
        y = margin + 18 * i
        colour = PALETTE[(lab - 1) % len(PALETTE)]
        parts.append(f'<rect x="{size + 10}" y="{y - 8}" width="10" height="10" fill="{colour}"/>')
        parts.append(f'<text x="{size + 26}" y="{y + 1}" font-size="12" font-family="sans-serif">cluster {lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _typical_spacing(coords):
    if len(coords) < 2:
        return 1.0
    sample = coords[: min(len(coords), 200)]
    d = np.sqrt(((sample[:, None, :] - sample[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return float(np.median(d.min(axis=1)))
