"""Independent reference implementations the tests compare against.

Everything here is written on a different route from the library code:
explicit per-pixel loops instead of vectorized shifts, brute-force scans
instead of cumulative sums, direct per-window statistics instead of
filter banks. Slow and simple on purpose.
"""

import math

import numpy as np


def thin_reference(binary):
    """Loop-based two-subpass thinning plus 2x2-block dissolution.

    Mirrors the library contract on a different route: explicit per-pixel
    loops, a board flood fill for the foreground test, and circular run
    counting for the background test.
    """
    img = np.pad(np.asarray(binary, dtype=np.uint8), 1)

    def neighbors(p, y, x):
        # clockwise from north: n, ne, e, se, s, sw, w, nw
        return [p[y - 1, x], p[y - 1, x + 1], p[y, x + 1], p[y + 1, x + 1],
                p[y + 1, x], p[y + 1, x - 1], p[y, x - 1], p[y - 1, x - 1]]

    def subpass(p, first):
        marked = []
        for y in range(1, p.shape[0] - 1):
            for x in range(1, p.shape[1] - 1):
                if not p[y, x]:
                    continue
                nb = neighbors(p, y, x)
                count = sum(nb)
                if not 2 <= count <= 6:
                    continue
                ring = nb + [nb[0]]
                transitions = sum(ring[i] == 0 and ring[i + 1] == 1
                                  for i in range(8))
                if transitions != 1:
                    continue
                n, ne, e, se, s, sw, w, nw = nb
                if first:
                    if n * e * s == 0 and e * s * w == 0:
                        marked.append((y, x))
                else:
                    if n * e * w == 0 and n * s * w == 0:
                        marked.append((y, x))
        for y, x in marked:
            p[y, x] = 0
        return bool(marked)

    def removable(p, y, x):
        # Foreground side: with (y, x) cleared, its foreground neighbors
        # must all reach each other inside the 3x3 board (8-connected).
        board = p[y - 1:y + 2, x - 1:x + 2].copy()
        board[1, 1] = 0
        fg = [(i, j) for i in range(3) for j in range(3) if board[i, j]]
        if not fg:
            return False
        reached = {fg[0]}
        frontier = [fg[0]]
        while frontier:
            ci, cj = frontier.pop()
            for ni, nj in fg:
                if (ni, nj) not in reached and abs(ni - ci) <= 1 and abs(nj - cj) <= 1:
                    reached.add((ni, nj))
                    frontier.append((ni, nj))
        if len(reached) != len(fg):
            return False
        # Background side: exactly one circular run of zeros around the
        # ring may touch an edge neighbor (ring indices 0, 2, 4, 6).
        nb = neighbors(p, y, x)
        runs_with_edge = 0
        i = 0
        while i < 8:
            if nb[i] == 0 and nb[i - 1] == 1:  # run start (circular)
                j = i
                touches = False
                while nb[j % 8] == 0:
                    if j % 8 in (0, 2, 4, 6):
                        touches = True
                    j += 1
                runs_with_edge += touches
            i += 1
        if all(v == 0 for v in nb):  # single all-zero run
            runs_with_edge = 1
        return runs_with_edge == 1

    def dissolve(p):
        changed = False
        for y in range(1, p.shape[0] - 2):
            for x in range(1, p.shape[1] - 2):
                corners = [(y, x), (y, x + 1), (y + 1, x), (y + 1, x + 1)]
                if not all(p[c] for c in corners):
                    continue
                for cy, cx in corners:
                    if removable(p, cy, cx):
                        p[cy, cx] = 0
                        changed = True
                        break
        return changed

    changed = True
    while changed:
        changed = subpass(img, True)
        changed = subpass(img, False) or changed
        changed = dissolve(img) or changed
    return img[1:-1, 1:-1]


def otsu_reference(gray):
    """Brute-force 256-bin Otsu scan; returns the (t+1)/256 upper bin edge."""
    gray = np.asarray(gray, dtype=np.float64).ravel()
    bins = np.minimum((gray * 256).astype(int), 255)
    best_t, best_var = 0, -1.0
    total = bins.size
    for t in range(255):
        dark = bins[bins <= t]
        light = bins[bins > t]
        if dark.size == 0 or light.size == 0:
            continue
        w0 = dark.size / total
        w1 = light.size / total
        var = w0 * w1 * (dark.mean() - light.mean()) ** 2
        if var > best_var:  # strict: ties keep the lowest t
            best_var = var
            best_t = t
    return (best_t + 1) / 256


def count_components(binary):
    """8-connected foreground component count via flood fill."""
    b = np.asarray(binary, dtype=np.uint8).copy()
    h, w = b.shape
    count = 0
    for y0 in range(h):
        for x0 in range(w):
            if not b[y0, x0]:
                continue
            count += 1
            stack = [(y0, x0)]
            b[y0, x0] = 0
            while stack:
                y, x = stack.pop()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and b[yy, xx]:
                            b[yy, xx] = 0
                            stack.append((yy, xx))
    return count


def has_2x2_block(binary):
    b = np.asarray(binary, dtype=bool)
    return bool((b[:-1, :-1] & b[:-1, 1:] & b[1:, :-1] & b[1:, 1:]).any())


def ssim_reference(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct per-window SSIM: explicit loops, weighted moments per window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        if a.shape[-1] == 3:
            wts = np.array([0.299, 0.587, 0.114])
            a = a @ wts
            b = b @ wts
        else:
            a = a[..., 0]
            b = b[..., 0]
    ax = np.arange(window) - (window - 1) / 2
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    kern = np.outer(g, g)
    kern /= kern.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    h, w = a.shape
    vals = []
    for y in range(h - window + 1):
        for x in range(w - window + 1):
            wa = a[y:y + window, x:x + window]
            wb = b[y:y + window, x:x + window]
            mu_a = (kern * wa).sum()
            mu_b = (kern * wb).sum()
            va = (kern * (wa - mu_a) ** 2).sum()
            vb = (kern * (wb - mu_b) ** 2).sum()
            cov = (kern * (wa - mu_a) * (wb - mu_b)).sum()
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def psnr_reference(a, b, peak=1.0):
    err = (np.asarray(a, np.float64) - np.asarray(b, np.float64)).ravel()
    mse = float(err @ err) / err.size
    return math.inf if mse == 0 else 10 * math.log10(peak * peak / mse)


def softmax_rows(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention_reference(q, k, v, bias=None):
    """Numpy float64 evaluation of Softmax(QK^T/sqrt(d) + B)V."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    logits = q @ k.swapaxes(-2, -1) / math.sqrt(q.shape[-1])
    if bias is not None:
        logits = logits + np.asarray(bias, dtype=np.float64)
    return softmax_rows(logits) @ v


def binary_f1(pred, gt):
    pred = np.asarray(pred, dtype=bool).ravel()
    gt = np.asarray(gt, dtype=bool).ravel()
    tp = int((pred & gt).sum())
    fp = int((pred & ~gt).sum())
    fn = int((~pred & gt).sum())
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def sigma_estimate(noisy, clean, bg_level=0.9):
    """Per-image noise level on the 0-255 scale from background residuals.

    Uses the negative-side 15.87% quantile (one sigma for a centered
    normal), immune to the heavy clipping at 1.0 on light backgrounds,
    corrected for the multiplicative component acting on value v.
    """
    bg = clean[:, :, 0] >= bg_level
    resid = (noisy - clean)[bg]
    v = float(clean[:, :, 0][bg].mean())
    return float(-np.quantile(resid, 0.1587) * 255.0 / math.sqrt(1 + v * v))
