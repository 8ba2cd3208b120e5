"""Independent reference solutions used to check the engines.

None of these share code paths with the package: the Godunov solver works on a
fine cell grid, the node reference is a scalar transcription of the allocation
loop and the probe integrates a vehicle with small explicit time steps.
"""

import numpy as np

from infoprop.models.fundamental_diagram import FundamentalDiagram


def godunov_riemann(
    fd: FundamentalDiagram,
    k_left: float,
    k_right: float,
    t_query: list[float],
    length: float = 1.0,
    cell: float = 0.0025,
    jump_at: float = 0.5,
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Cell densities of a Riemann problem at the query times.

    Transmissive boundaries hold the outer states, so answers are exact only
    until the first wave reaches an end.
    """
    n = int(round(length / cell))
    centres = (np.arange(n) + 0.5) * cell
    k = np.where(centres < jump_at, k_left, k_right).astype(float)
    dt_max = 0.9 * cell / fd.max_wave_speed
    flow = np.vectorize(fd.flow_at)
    kc, qmax = fd.critical_density, fd.max_flow

    def sending(x):
        return np.where(x <= kc, flow(np.clip(x, 0, fd.jam_density)), qmax)

    def receiving(x):
        return np.where(x <= kc, qmax, flow(np.clip(x, 0, fd.jam_density)))

    out = {}
    t = 0.0
    for target in sorted(t_query):
        while t < target - 1e-15:
            dt = min(dt_max, target - t)
            padded = np.concatenate(([k[0]], k, [k[-1]]))
            flux = np.minimum(sending(padded[:-1]), receiving(padded[1:]))
            k = k - dt / cell * (flux[1:] - flux[:-1])
            t += dt
        out[target] = (centres.copy(), k.copy())
    return out


def allocate_reference(D_I, turn_share, C_J, W) -> list[list[float]]:
    """Scalar allocation loop: priority shares of residual capacity among active feeders"""
    n_i, n_j = len(D_I), len(C_J)
    residual = [[D_I[i] * turn_share[i][j] for j in range(n_j)] for i in range(n_i)]
    cap = list(C_J)
    flows = [[0.0] * n_j for _ in range(n_i)]
    active = [sum(residual[i]) > 1e-9 for i in range(n_i)]
    for _ in range(10_000):
        if not any(active):
            break
        alphas = []
        for i in range(n_i):
            if not active[i]:
                alphas.append(0.0)
                continue
            alpha = 1.0
            for j in range(n_j):
                if residual[i][j] <= 1e-9:
                    continue
                column = sum(W[m][j] for m in range(n_i) if active[m])
                share = W[i][j] / column * cap[j] if column > 0 else 0.0
                alpha = min(alpha, share / residual[i][j])
            alphas.append(alpha)
        moved = 0.0
        for i in range(n_i):
            for j in range(n_j):
                step = alphas[i] * residual[i][j]
                flows[i][j] += step
                residual[i][j] -= step
                cap[j] = max(cap[j] - step, 0.0)
                moved = max(moved, step)
        previous = list(active)
        for i in range(n_i):
            if sum(residual[i]) <= 1e-9:
                active[i] = False
            elif any(residual[i][j] > 1e-9 and cap[j] <= 1e-9 for j in range(n_j)):
                active[i] = False
        if moved <= 1e-9 and active == previous:
            break
    return flows


def probe_exit_time(history, t_entry: float, step: float = 1e-5) -> float:
    """Explicit-step integration of a vehicle through a link's recorded density field"""
    t, x = t_entry, 0.0
    fd = history.fd
    while x < history.length:
        speed = fd.speed_at(history.density_at(t, min(x + 1e-9, history.length)))
        if speed <= 0:
            t += step
            continue
        remaining = (history.length - x) / speed
        if remaining <= step:
            return t + remaining
        x += speed * step
        t += step
    return t


def godunov_link(
    fd: FundamentalDiagram,
    length: float,
    inflow,
    exit_capacity,
    t_query: list[float],
    cell: float = 0.01,
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Cell densities of an initially empty triangular link fed at ``inflow(t)``.

    The exit passes at most ``exit_capacity(t)``; no vehicle waits outside the
    entrance, so callers keep the demand below what the link can take in.
    """
    n = int(round(length / cell))
    centres = (np.arange(n) + 0.5) * cell
    qmax, kc, kj = fd.max_flow, fd.critical_density, fd.jam_density
    vf, w = qmax / kc, qmax / (kj - kc)
    dt_max = 0.9 * cell / max(vf, w)
    k = np.zeros(n)

    out = {}
    t = 0.0
    for target in sorted(t_query):
        while t < target - 1e-15:
            dt = min(dt_max, target - t)
            sending = np.minimum(vf * k, qmax)
            receiving = np.minimum(qmax, w * (kj - k))
            flux = np.empty(n + 1)
            flux[1:-1] = np.minimum(sending[:-1], receiving[1:])
            flux[0] = min(inflow(t), receiving[0])
            flux[-1] = min(sending[-1], exit_capacity(t))
            k = k - dt / cell * (flux[1:] - flux[:-1])
            t += dt
        out[target] = (centres.copy(), k.copy())
    return out
