"""Compiled inner loops for the stochastic integrators.

Each kernel consumes a pre-drawn block of standard normals and returns when
the block is exhausted or the path terminates, so the Python driver can refill
noise from deterministic streams and resume.
"""

import math

import numba as nb
import numpy as np

RUNNING = 0
DONE = 1
FLOOR = 2
NONFINITE = 3


@nb.njit(cache=True)
def _pair_drift(x, coupling, cutoff, b):
    n = x.shape[0]
    min_r2 = np.inf
    for i in range(n):
        b[i, 0] = 0.0
        b[i, 1] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r2 = dx * dx + dy * dy
            if r2 < min_r2:
                min_r2 = r2
            if r2 >= cutoff and r2 > 0.0:
                fx = coupling * dx / r2
                fy = coupling * dy / r2
                b[i, 0] -= fx
                b[i, 1] -= fy
                b[j, 0] += fx
                b[j, 1] += fy
    return min_r2


@nb.njit(cache=True)
def particle_block(x, state, noise, noise_scale, coupling, cutoff, dt_base, floor, patience,
                   t_max, save_stride, frames, times):
    """Advance the regularized particle SDE over one noise block.

    ``state`` is a float array ``[t, step, floor_count, floor_start, min_dt]``
    updated in place. Returns ``(status, n_saved)``.
    """
    n = x.shape[0]
    b = np.empty((n, 2))
    prev = np.empty((n, 2))
    t = state[0]
    step = int(state[1])
    floor_count = int(state[2])
    floor_start = state[3]
    min_dt = state[4]
    n_saved = 0
    status = RUNNING
    for s in range(noise.shape[0]):
        min_r2 = _pair_drift(x, coupling, cutoff, b)
        raw = dt_base * min_r2
        if raw <= floor:
            if floor_count == 0:
                floor_start = t
            floor_count += 1
        else:
            floor_count = 0
        if floor_count > patience:
            status = FLOOR
            break
        dt = raw
        if dt < floor:
            dt = floor
        if dt > dt_base:
            dt = dt_base
        last = False
        if t + dt >= t_max:
            dt = t_max - t
            last = True
        if dt < min_dt:
            min_dt = dt
        sq = math.sqrt(dt) * noise_scale
        finite = True
        for i in range(n):
            for k in range(2):
                prev[i, k] = x[i, k]
                v = x[i, k] + b[i, k] * dt + sq * noise[s, i, k]
                if not math.isfinite(v):
                    finite = False
                x[i, k] = v
        if not finite:
            for i in range(n):
                for k in range(2):
                    x[i, k] = prev[i, k]
            status = NONFINITE
            break
        step += 1
        t = t_max if last else t + dt
        if last or step % save_stride == 0:
            frames[n_saved] = x
            times[n_saved] = t
            n_saved += 1
        if last:
            status = DONE
            break
    state[0] = t
    state[1] = step
    state[2] = floor_count
    state[3] = floor_start
    state[4] = min_dt
    return status, n_saved


@nb.njit(cache=True)
def sphere_block(u, state, noise, noise_scale, coupling, cutoff, dt_base, floor, patience,
                 t_max, save_stride, frames, times, max_violation):
    """Euler step of the spherical process followed by projection onto the sphere of H.

    ``max_violation`` (length 1) accumulates the largest pre-projection
    constraint violation after renormalization.
    """
    n = u.shape[0]
    b = np.empty((n, 2))
    g = np.empty((n, 2))
    t = state[0]
    step = int(state[1])
    floor_count = int(state[2])
    floor_start = state[3]
    min_dt = state[4]
    n_saved = 0
    status = RUNNING
    contraction = (2.0 * n - 3.0) / 2.0
    for s in range(noise.shape[0]):
        min_r2 = _pair_drift(u, coupling, cutoff, b)
        raw = dt_base * min_r2
        if raw <= floor:
            if floor_count == 0:
                floor_start = t
            floor_count += 1
        else:
            floor_count = 0
        if floor_count > patience:
            status = FLOOR
            break
        dt = raw
        if dt < floor:
            dt = floor
        if dt > dt_base:
            dt = dt_base
        last = False
        if t + dt >= t_max:
            dt = t_max - t
            last = True
        if dt < min_dt:
            min_dt = dt
        sq = math.sqrt(dt) * noise_scale
        mx = 0.0
        my = 0.0
        for i in range(n):
            g[i, 0] = b[i, 0] * dt + sq * noise[s, i, 0]
            g[i, 1] = b[i, 1] * dt + sq * noise[s, i, 1]
            mx += g[i, 0]
            my += g[i, 1]
        mx /= n
        my /= n
        dot = 0.0
        for i in range(n):
            g[i, 0] -= mx
            g[i, 1] -= my
            dot += u[i, 0] * g[i, 0] + u[i, 1] * g[i, 1]
        for i in range(n):
            for k in range(2):
                u[i, k] += g[i, k] - dot * u[i, k] - contraction * u[i, k] * dt
        # back onto H and the unit sphere
        mx = 0.0
        my = 0.0
        for i in range(n):
            mx += u[i, 0]
            my += u[i, 1]
        mx /= n
        my /= n
        norm2 = 0.0
        for i in range(n):
            u[i, 0] -= mx
            u[i, 1] -= my
            norm2 += u[i, 0] * u[i, 0] + u[i, 1] * u[i, 1]
        if not (norm2 > 0.0 and math.isfinite(norm2)):
            status = NONFINITE
            break
        inv = 1.0 / math.sqrt(norm2)
        sx = 0.0
        sy = 0.0
        norm2 = 0.0
        for i in range(n):
            u[i, 0] *= inv
            u[i, 1] *= inv
            sx += u[i, 0]
            sy += u[i, 1]
            norm2 += u[i, 0] * u[i, 0] + u[i, 1] * u[i, 1]
        viol = max(abs(sx), abs(sy), abs(math.sqrt(norm2) - 1.0))
        if viol > max_violation[0]:
            max_violation[0] = viol
        step += 1
        t = t_max if last else t + dt
        if last or step % save_stride == 0:
            frames[n_saved] = u
            times[n_saved] = t
            n_saved += 1
        if last:
            status = DONE
            break
    state[0] = t
    state[1] = step
    state[2] = floor_count
    state[3] = floor_start
    state[4] = min_dt
    return status, n_saved


@nb.njit(cache=True)
def comparison_block(state, noise, delta, a, b, dt, t_max, y, stop_on_hit, values, times):
    """Euler steps of ``dS = 2 sqrt|S(1-S)| dW + (delta + a sqrt(b+|S|)) dt``.

    ``state = [t, s, tau0, tau_y, step]`` with ``nan`` for unrecorded hitting
    times. A crossing of 0 is recorded before the value is clamped to 0.
    """
    t = state[0]
    s_val = state[1]
    tau0 = state[2]
    tau_y = state[3]
    step = int(state[4])
    sq = math.sqrt(dt)
    n_saved = 0
    status = RUNNING
    for k in range(noise.shape[0]):
        h = dt
        last = False
        if t + h >= t_max:
            h = t_max - t
            last = True
        sqh = sq if not last else math.sqrt(h)
        s_new = (s_val + 2.0 * math.sqrt(abs(s_val * (1.0 - s_val))) * sqh * noise[k]
                 + (delta + a * math.sqrt(b + abs(s_val))) * h)
        t = t_max if last else t + h
        step += 1
        if s_new <= 0.0:
            if math.isnan(tau0):
                tau0 = t
            s_new = 0.0
        if s_new >= y and math.isnan(tau_y):
            tau_y = t
        s_val = s_new
        values[n_saved] = s_val
        times[n_saved] = t
        n_saved += 1
        if last or (stop_on_hit and not (math.isnan(tau0) and math.isnan(tau_y))):
            status = DONE
            break
    state[0] = t
    state[1] = s_val
    state[2] = tau0
    state[3] = tau_y
    state[4] = step
    return status, n_saved


@nb.njit(cache=True)
def besq_euler_block(state, noise, delta, dt, t_max, absorb, values, times):
    """Euler steps of ``dZ = 2 sqrt(Z+) dW + delta dt``.

    With ``absorb`` the path stops at the first crossing of 0, otherwise an
    overshoot below 0 is reflected. ``state = [t, z, absorbed_at, step]``.
    """
    t = state[0]
    z = state[1]
    absorbed = state[2]
    step = int(state[3])
    n_saved = 0
    status = RUNNING
    for k in range(noise.shape[0]):
        h = dt
        last = False
        if t + h >= t_max:
            h = t_max - t
            last = True
        z_new = z + 2.0 * math.sqrt(max(z, 0.0)) * math.sqrt(h) * noise[k] + delta * h
        t = t_max if last else t + h
        step += 1
        if z_new <= 0.0:
            if absorb:
                z_new = 0.0
                absorbed = t
                last = True
            else:
                z_new = -z_new
        z = z_new
        values[n_saved] = z
        times[n_saved] = t
        n_saved += 1
        if last:
            status = DONE
            break
    state[0] = t
    state[1] = z
    state[2] = absorbed
    state[3] = step
    return status, n_saved
