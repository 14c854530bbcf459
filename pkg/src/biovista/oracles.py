"""Slow reference implementations used to cross-check the fast paths.

Everything here is written with plain loops and none of it calls the
production code, so a test that compares the two routes exercises the
algorithm twice via independent derivations.  These run on small inputs
only; do not use them in the pipeline itself.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def erode_naive(mask: np.ndarray, element: np.ndarray) -> np.ndarray:
    """Binary erosion by shift-and-AND; cells beyond the border count as 0."""
    h, w = mask.shape
    eh, ew = element.shape
    cy, cx = eh // 2, ew // 2
    out = np.zeros_like(mask, dtype=bool)
    offs = [(i - cy, j - cx) for i in range(eh) for j in range(ew) if element[i, j]]
    for r in range(h):
        for c in range(w):
            ok = True
            for di, dj in offs:
                rr, cc = r + di, c + dj
                if rr < 0 or rr >= h or cc < 0 or cc >= w or not mask[rr, cc]:
                    ok = False
                    break
            out[r, c] = ok
    return out


def dilate_naive(mask: np.ndarray, element: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    eh, ew = element.shape
    cy, cx = eh // 2, ew // 2
    out = np.zeros_like(mask, dtype=bool)
    offs = [(i - cy, j - cx) for i in range(eh) for j in range(ew) if element[i, j]]
    for r in range(h):
        for c in range(w):
            hit = False
            for di, dj in offs:
                rr, cc = r + di, c + dj
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                    hit = True
                    break
            out[r, c] = hit
    return out


def opening_naive(mask: np.ndarray, element: np.ndarray) -> np.ndarray:
    return dilate_naive(erode_naive(mask, element), element)


def components_naive(mask: np.ndarray) -> list[set[tuple[int, int]]]:
    """4-connected components by BFS flood fill, in scan order."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps: list[set[tuple[int, int]]] = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            comp: set[tuple[int, int]] = set()
            queue = [(r, c)]
            seen[r, c] = True
            while queue:
                rr, cc = queue.pop()
                comp.add((rr, cc))
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    nr, nc = rr + dr, cc + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = True
                        queue.append((nr, nc))
            comps.append(comp)
    return comps


def circle_mask_count_exact(size: int, radius_m: float, pixel_size: float) -> int:
    """Count of pixels whose centre is within the disc, in exact rationals.

    Works for radius and pixel size that are exact binary fractions (the
    defaults 15.0 and 0.125 are), so there is no floating point boundary
    ambiguity at all.
    """
    r = Fraction(radius_m)
    ps = Fraction(pixel_size)
    half = Fraction(size, 2)
    r2 = r * r
    count = 0
    for i in range(size):
        di = (Fraction(2 * i + 1, 2) - half) * ps
        di2 = di * di
        if di2 > r2:
            continue
        for j in range(size):
            dj = (Fraction(2 * j + 1, 2) - half) * ps
            if di2 + dj * dj <= r2:
                count += 1
    return count


def macc_naive(labels: list[int], predictions: list[int]) -> float:
    """Mean of the two per-class accuracies; both classes must appear."""
    hits = {0: 0, 1: 0}
    totals = {0: 0, 1: 0}
    for t, p in zip(labels, predictions):
        totals[t] += 1
        if p == t:
            hits[t] += 1
    return 0.5 * (hits[0] / totals[0] + hits[1] / totals[1])


def ensemble_grid_naive(p2d: np.ndarray, p3d: np.ndarray,
                        labels: np.ndarray) -> tuple[float, float]:
    """Exhaustive weight search, 0.00 to 1.00 in steps of 0.01.

    Returns (best weight for the first modality, best balanced accuracy).
    Ties go to the smallest weight because the scan is ascending with a
    strict improvement test.
    """
    best_w, best_m = 0.0, -1.0
    lab = [int(v) for v in labels]
    for k in range(101):
        w = k / 100.0
        preds = []
        for i in range(len(lab)):
            p_low = w * p2d[i, 0] + (1.0 - w) * p3d[i, 0]
            p_high = w * p2d[i, 1] + (1.0 - w) * p3d[i, 1]
            preds.append(1 if p_high > p_low else 0)
        m = macc_naive(lab, preds)
        if m > best_m:
            best_m, best_w = m, w
    return best_w, best_m


def numeric_gradient(loss_fn, params: list[np.ndarray],
                     eps: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of a scalar loss over a parameter list."""
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        flat_g = g.reshape(-1)
        for i in range(p.size):
            flat_g[i] = numeric_gradient_at(loss_fn, p, i, eps)
        grads.append(g)
    return grads


def numeric_gradient_at(loss_fn, param: np.ndarray, flat_index: int,
                        eps: float = 1e-5) -> float:
    """Central difference of the loss wrt one coordinate, perturbed in place."""
    flat = param.reshape(-1)
    keep = flat[flat_index]
    flat[flat_index] = keep + eps
    up = loss_fn()
    flat[flat_index] = keep - eps
    down = loss_fn()
    flat[flat_index] = keep
    return (up - down) / (2.0 * eps)
