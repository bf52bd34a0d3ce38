"""Independent reference implementations used to check the library.

Deliberately naive: plain Python loops over lists, no shared code with the package.
"""
from __future__ import annotations

import math


def head_signals(nose, leye, reye, lear, rear):
    """Seven per-frame signals for one frame; inputs are (x, y) pairs."""
    lx, ly = lear[0] - nose[0], lear[1] - nose[1]
    rx, ry = rear[0] - nose[0], rear[1] - nose[1]
    eye_sep = math.hypot(leye[0] - reye[0], leye[1] - reye[1])
    ear_sep = math.hypot(lear[0] - rear[0], lear[1] - rear[1])
    a, b = math.hypot(lx, ly), math.hypot(rx, ry)
    sym = 1.0 if max(a, b) == 0 else min(a, b) / max(a, b)
    return [lx, ly, rx, ry, eye_sep, ear_sep, sym]


def window_features(frames):
    """frames: list of T dicts with keys nose, leye, reye, lear, rear -> 21 floats."""
    sig = [head_signals(f["nose"], f["leye"], f["reye"], f["lear"], f["rear"]) for f in frames]
    out = []
    for k in range(7):
        series = [row[k] for row in sig]
        vel = [series[t + 1] - series[t] for t in range(len(series) - 1)]
        mean = sum(vel) / len(vel)
        var = sum((v - mean) ** 2 for v in vel) / len(vel)
        out += [max(vel), min(vel), math.sqrt(var)]
    return out


def normalize(points):
    """COCO-17 (x, y) list -> shoulder-midpoint origin, torso length 1."""
    sx = (points[5][0] + points[6][0]) / 2
    sy = (points[5][1] + points[6][1]) / 2
    hx = (points[11][0] + points[12][0]) / 2
    hy = (points[11][1] + points[12][1]) / 2
    torso = math.hypot(sx - hx, sy - hy)
    return [((x - sx) / torso, (y - sy) / torso) for x, y in points]


def frame_features(pixel_frames):
    """21 features straight from raw pixel keypoints of T frames."""
    frames = []
    for pts in pixel_frames:
        n = normalize(pts)
        frames.append({"nose": n[0], "leye": n[1], "reye": n[2], "lear": n[3], "rear": n[4]})
    return window_features(frames)


# ------------------------------------------------------------- exact-split GBDT

def _sigmoid(z):
    return 1 / (1 + math.exp(-z)) if z >= 0 else math.exp(z) / (1 + math.exp(z))


def _build(rows, X, g, h, depth, max_depth, min_leaf, lr):
    G = sum(g[i] for i in rows)
    H = sum(h[i] for i in rows)
    leaf = {"value": -lr * G / H if H > 0 else 0.0}
    if depth >= max_depth or len(rows) < 2 * min_leaf:
        return leaf
    parent = G * G / H if H > 0 else 0.0
    best = None
    for j in range(len(X[0])):
        ordered = sorted(rows, key=lambda i: X[i][j])
        gl = hl = 0.0
        for pos in range(len(ordered) - 1):
            i = ordered[pos]
            gl += g[i]
            hl += h[i]
            a, b = X[i][j], X[ordered[pos + 1]][j]
            if a == b:
                continue
            nl = pos + 1
            if nl < min_leaf or len(ordered) - nl < min_leaf:
                continue
            gr, hr = G - gl, H - hl
            gain = (gl * gl / hl if hl > 0 else 0) + (gr * gr / hr if hr > 0 else 0) - parent
            if best is None or gain > best[0]:
                best = (gain, j, (a + b) / 2)
    if best is None or best[0] <= 1e-12:
        return leaf
    _, j, thr = best
    left = [i for i in rows if X[i][j] <= thr]
    right = [i for i in rows if X[i][j] > thr]
    return {"feature": j, "threshold": thr,
            "left": _build(left, X, g, h, depth + 1, max_depth, min_leaf, lr),
            "right": _build(right, X, g, h, depth + 1, max_depth, min_leaf, lr)}


def _predict_tree(node, x):
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["value"]


def exact_gbdt(X, y, rounds, max_depth, min_leaf, lr=0.1):
    """Logistic-loss boosting with exhaustive midpoint splits; returns a predict_proba callable."""
    X = [list(map(float, r)) for r in X]
    y = [int(v) for v in y]
    p0 = sum(y) / len(y)
    base = math.log(p0 / (1 - p0))
    raw = [base] * len(y)
    trees = []
    for _ in range(rounds):
        p = [_sigmoid(r) for r in raw]
        g = [p[i] - y[i] for i in range(len(y))]
        h = [p[i] * (1 - p[i]) for i in range(len(y))]
        tree = _build(list(range(len(y))), X, g, h, 0, max_depth, min_leaf, lr)
        trees.append(tree)
        raw = [raw[i] + _predict_tree(tree, X[i]) for i in range(len(y))]

    def proba(x):
        z = base + sum(_predict_tree(t, list(map(float, x))) for t in trees)
        return _sigmoid(z)

    return proba


def oracle_classifier(spec):
    """Probability 1 for windows holding the start of a scripted toward turn, else 0."""
    starts = {a.track_id: [h.time for h in a.head_script if h.direction == "toward"]
              for a in spec.actors}

    def clf(window):
        return float(any(window.start <= t < window.start + window.duration
                         for t in starts[window.track_id]))
    return clf
