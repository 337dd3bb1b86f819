"""Slow, loop-based reference implementations used as test oracles.

These are written directly from the definitions and share no code with the
package.
"""
import math

import numpy as np

DIRECTIONS = [(math.cos(math.radians(45 * k)), math.sin(math.radians(45 * k))) for k in range(8)]


def central_diff(f, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def conv_loops(x, w, b, pad):
    c_in, t, n = x.shape
    c_out, _, kt, kn = w.shape
    pt, pn = pad
    out = np.zeros((c_out, t + 2 * pt - kt + 1, n + 2 * pn - kn + 1))
    for o in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                s = b[o]
                for c in range(c_in):
                    for di in range(kt):
                        for dj in range(kn):
                            ti, nj = i + di - pt, j + dj - pn
                            if 0 <= ti < t and 0 <= nj < n:
                                s += w[o, c, di, dj] * x[c, ti, nj]
                out[o, i, j] = s
    return out


def _sector(vx, vy):
    if math.sqrt(vx * vx + vy * vy) < 1e-6:
        return None
    # nearest of the eight compass directions
    return max(range(8), key=lambda k: vx * DIRECTIONS[k][0] + vy * DIRECTIONS[k][1])


def adjacency_loops(obs, spd_thres, omega_spd, omega_dir, dis_floor, eps_dist, half_angle,
                    t_pred=12, dt=0.4):
    n, t, _ = obs.shape
    vel = [[(0.0, 0.0)] * t for _ in range(n)]
    for i in range(n):
        for f in range(t):
            if t < 2:
                continue
            g = f if f >= 1 else 1
            vel[i][f] = ((obs[i, g, 0] - obs[i, g - 1, 0]) / dt, (obs[i, g, 1] - obs[i, g - 1, 1]) / dt)
    out = np.zeros((t, n, n))
    for f in range(t):
        for i in range(n):
            for j in range(n):
                if i == j:
                    out[f, i, j] = 1.0
                    continue
                xi, yi = obs[i, f]
                xj, yj = obs[j, f]
                dx, dy = xi - xj, yi - yj
                dist = math.sqrt(dx * dx + dy * dy)
                vi, vj = vel[i][f], vel[j][f]
                si = math.sqrt(vi[0] * vi[0] + vi[1] * vi[1])
                sj = math.sqrt(vj[0] * vj[0] + vj[1] * vj[1])
                scope = max(si, sj) * t_pred * dt
                if scope < dis_floor:
                    scope = dis_floor
                w_dis = 1.0 if dist <= scope else 0.0
                ki, kj = _sector(*vi), _sector(*vj)
                w_spd, w_dir = 1.0, 1.0
                if ki is not None and kj is not None:
                    if abs(ki - kj) == 4:
                        w_dir = omega_dir
                    for fa, sa, va, pa, sb, pb in ((i, si, vi, (xi, yi), sj, (xj, yj)),
                                                   (j, sj, vj, (xj, yj), si, (xi, yi))):
                        if sa >= spd_thres and sb < spd_thres:
                            ex, ey = pb[0] - pa[0], pb[1] - pa[1]
                            el = math.sqrt(ex * ex + ey * ey)
                            if el > 0:
                                cosang = max(-1.0, min(1.0, (ex * va[0] + ey * va[1]) / (el * sa)))
                                if math.degrees(math.acos(cosang)) <= half_angle:
                                    w_spd = omega_spd
                out[f, i, j] = (w_dis * w_spd * w_dir) / max(dist, eps_dist)
    return out


def ade_loops(pred, truth):
    total, count = 0.0, 0
    for i in range(pred.shape[0]):
        for t in range(pred.shape[1]):
            dx = pred[i, t, 0] - truth[i, t, 0]
            dy = pred[i, t, 1] - truth[i, t, 1]
            total += math.sqrt(dx * dx + dy * dy)
            count += 1
    return total / count


def fde_loops(pred, truth):
    total = 0.0
    for i in range(pred.shape[0]):
        dx = pred[i, -1, 0] - truth[i, -1, 0]
        dy = pred[i, -1, 1] - truth[i, -1, 1]
        total += math.sqrt(dx * dx + dy * dy)
    return total / pred.shape[0]


def random_scene(rng, n, t=8, stationary_share=0.25):
    """Random walkers in a 6 m box mixing standing, slow and fast pedestrians."""
    obs = np.zeros((n, t, 2))
    for i in range(n):
        start = rng.uniform(0, 6, 2)
        if rng.random() < stationary_share:
            obs[i] = start
            continue
        speed = rng.choice([rng.uniform(0.05, 0.45), rng.uniform(0.55, 2.0)])
        heading = rng.uniform(0, 2 * math.pi)
        step = speed * 0.4 * np.array([math.cos(heading), math.sin(heading)])
        jitter = rng.normal(0, 0.01, (t, 2))
        obs[i] = start + np.arange(t)[:, None] * step + jitter
    return obs
