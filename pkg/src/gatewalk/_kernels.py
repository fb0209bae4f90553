"""Compiled inner loops for the lattice engines and the finite-volume solver."""
from __future__ import annotations

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)


@nb.njit(cache=True, inline="always")
def _mix(key, ctr):
    z = key + _GOLDEN * (ctr + _ONE)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@nb.njit(cache=True)
def advance_counts(counts, scratch, key, t0, steps, sigma_bar, tau_bar):
    """Advance per-site occupancy ``counts`` by ``steps`` lattice steps in place.

    At step t the walkers consume, site by site from the left, consecutive bits
    of the stream ``mix(key, (t << 32) + w)``, w = 0, 1, ...; a set bit selects
    the first option of the site's rule (stay at site 1, left in the interior,
    exit or stay at site n). Returns (F, U, U_open) accumulated over the steps,
    with U sampled before each move.
    """
    n = counts.shape[0]
    exits = np.int64(0)
    occ = np.int64(0)
    occ_open = np.int64(0)
    cur = counts
    nxt = scratch
    for j in range(steps):
        t = t0 + j
        is_open = (t % tau_bar) < sigma_bar
        last = cur[n - 1]
        occ += last
        if is_open:
            occ_open += last
        for x in range(n):
            nxt[x] = 0
        base = np.uint64(t) << np.uint64(32)
        widx = np.uint64(0)
        word = np.uint64(0)
        rem = 0
        for x in range(n):
            c = cur[x]
            if c == 0:
                continue
            ones = np.int64(0)
            need = c
            while need > 0:
                if rem == 0:
                    word = _mix(key, base + widx)
                    widx += _ONE
                    rem = 64
                m = need if need < rem else rem
                if m == 64:
                    chunk = word
                    word = np.uint64(0)
                else:
                    chunk = word & ((_ONE << np.uint64(m)) - _ONE)
                    word = word >> np.uint64(m)
                ones += _popcount(chunk)
                rem -= m
                need -= m
            rest = c - ones
            if x == n - 1:
                if n > 1:
                    nxt[x - 1] += rest
                else:
                    nxt[x] += rest
                if is_open:
                    exits += ones
                else:
                    nxt[x] += ones
            elif x == 0:
                nxt[0] += ones
                nxt[1] += rest
            else:
                nxt[x - 1] += ones
                nxt[x + 1] += rest
        tmp = cur
        cur = nxt
        nxt = tmp
    if steps % 2 == 1:
        counts[:] = cur
    return exits, occ, occ_open


@nb.njit(cache=True)
def advance_expected(p, scratch, t0, steps, sigma_bar, tau_bar):
    """Evolve the one-walker occupation law ``p`` in place; returns (E[F], E[U]) per walker."""
    n = p.shape[0]
    exits = 0.0
    occ = 0.0
    cur = p
    nxt = scratch
    for j in range(steps):
        t = t0 + j
        is_open = (t % tau_bar) < sigma_bar
        occ += cur[n - 1]
        if n == 1:
            if is_open:
                exits += 0.5 * cur[0]
                nxt[0] = 0.5 * cur[0]
            else:
                nxt[0] = cur[0]
        else:
            nxt[0] = 0.5 * cur[0] + 0.5 * cur[1]
            for x in range(1, n - 1):
                nxt[x] = 0.5 * (cur[x - 1] + cur[x + 1])
            nxt[n - 1] = 0.5 * cur[n - 2]
            if is_open:
                exits += 0.5 * cur[n - 1]
            else:
                nxt[n - 1] += 0.5 * cur[n - 1]
        tmp = cur
        cur = nxt
        nxt = tmp
    if steps % 2 == 1:
        p[:] = cur
    return exits, occ


# boundary modes of the finite-volume solver
CLOSED = 0
OPEN = 1
ROBIN = 2


@nb.njit(cache=True, inline="always")
def _boundary_coeffs(mode, r, g):
    # (sub-diagonal, diagonal) of the last row of I - dt*A
    if mode == CLOSED:
        return -r, 1.0 + r
    if mode == OPEN:
        return -(r + r / 3.0), 1.0 + 4.0 * r
    return -(r + r * g), 1.0 + r + 9.0 * r * g


@nb.njit(cache=True)
def implicit_step(u, r, mode, g, cp, dp):
    """One backward-Euler step of the cell-centred scheme, solved by Thomas' algorithm.

    ``r = D*dt/h**2``; ``g = h*beta/(8 + 3*h*beta)`` for the Robin mode.
    """
    m = u.shape[0]
    b0 = 1.0 + r
    cp[0] = -r / b0
    dp[0] = u[0] / b0
    for i in range(1, m - 1):
        den = 1.0 + 2.0 * r + r * cp[i - 1]
        cp[i] = -r / den
        dp[i] = (u[i] + r * dp[i - 1]) / den
    a, b = _boundary_coeffs(mode, r, g)
    den = b - a * cp[m - 2]
    u[m - 1] = (u[m - 1] - a * dp[m - 2]) / den
    for i in range(m - 2, -1, -1):
        u[i] = dp[i] - cp[i] * u[i + 1]


@nb.njit(cache=True)
def explicit_step(u, r, mode, g, work):
    """One forward-Euler step of the same spatial operator (``work`` is scratch)."""
    m = u.shape[0]
    for i in range(m):
        work[i] = u[i]
    u[0] = work[0] + r * (work[1] - work[0])
    for i in range(1, m - 1):
        u[i] = work[i] + r * (work[i - 1] - 2.0 * work[i] + work[i + 1])
    a, b = _boundary_coeffs(mode, r, g)
    u[m - 1] = work[m - 1] - a * work[m - 2] - (b - 1.0) * work[m - 1]


@nb.njit(cache=True)
def face_flux(u, d_coef, h, mode, beta):
    """Outward flux -D u_x at x = L implied by the last two cell values."""
    m = u.shape[0]
    if mode == CLOSED:
        return 0.0
    u1 = u[m - 1]
    u2 = u[m - 2]
    if mode == OPEN:
        # quadratic through u_b = 0, u(L - h/2), u(L - 3h/2)
        return d_coef * (9.0 * u1 - u2) / (3.0 * h)
    # D*beta*u_b with u_b = (9u1 - u2) / (8 + 3 h beta)
    return d_coef * beta * (9.0 * u1 - u2) / (8.0 + 3.0 * h * beta)


@nb.njit(cache=True)
def run_phase(u, dts, d_coef, h, mode, beta, implicit, cp, dp):
    """Apply the steps ``dts`` with a fixed boundary mode.

    Returns time integrals of (outgoing flux, last-cell value, boundary value),
    each sampled at the new time level for implicit steps and the old one for
    explicit steps, which keeps the discrete mass balance exact.
    """
    flux = 0.0
    dens = 0.0
    bdens = 0.0
    g = 0.0
    if mode == ROBIN:
        g = h * beta / (8.0 + 3.0 * h * beta)
    m = u.shape[0]
    for k in range(dts.shape[0]):
        dt = dts[k]
        r = d_coef * dt / (h * h)
        if not implicit:
            f = face_flux(u, d_coef, h, mode, beta)
            flux += f * dt
            dens += u[m - 1] * dt
            bdens += _boundary_value(u, mode, g) * dt
            explicit_step(u, r, mode, g, cp)
        else:
            implicit_step(u, r, mode, g, cp, dp)
            f = face_flux(u, d_coef, h, mode, beta)
            flux += f * dt
            dens += u[m - 1] * dt
            bdens += _boundary_value(u, mode, g) * dt
    return flux, dens, bdens


@nb.njit(cache=True, inline="always")
def _boundary_value(u, mode, g):
    m = u.shape[0]
    if mode == OPEN:
        return 0.0
    u1 = u[m - 1]
    u2 = u[m - 2]
    if mode == CLOSED:
        return (9.0 * u1 - u2) / 8.0
    # g = h*beta/(8+3h*beta)  =>  u_b = g * (9u1 - u2) / (h*beta); written without beta
    return (9.0 * u1 - u2) * (1.0 - 3.0 * g) / 8.0
