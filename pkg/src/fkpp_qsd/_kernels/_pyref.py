"""Pure NumPy/Python reference backend.

Mirrors `_core` (the compiled backend) draw for draw: each function consumes
the shared bit stream in exactly the same order, so results are
byte-identical across backends for the same stream.  This backend exists for
portability and as an executable specification of the kernels; it is one to
three orders of magnitude slower on the event loops (see `fkpp-qsd bench`).
"""

from __future__ import annotations

import math

import numpy as np


def backend_name():
    return "fallback"


# ---------------------------------------------------------------------------
# stepping-stone field engine
# ---------------------------------------------------------------------------

def spde_evolve(k, M, mig_coeff, sel_coeff, n_steps, bit_generator):
    """See _core.spde_evolve.  Vectorised over sites; Generator.binomial
    consumes the stream element-wise in C order, matching the compiled
    per-site loop."""
    rng = np.random.Generator(bit_generator)
    L = k.shape[0]
    fullL = L * M
    dM = float(M)
    for step in range(n_steps):
        u = k / dM
        v = u + mig_coeff * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1))
        w = v + sel_coeff * v * (1.0 - v)
        np.clip(w, 0.0, 1.0, out=w)
        k[:] = rng.binomial(M, w)
        tot = int(k.sum())
        if tot == 0:
            return step, 0
        if tot == fullL:
            return step, 1
    return -1, -1


def euler_evolve(u, mig_coeff, sel_coeff, noise_coeff, n_steps, bit_generator):
    """See _core.euler_evolve."""
    rng = np.random.Generator(bit_generator)
    L = u.shape[0]
    for step in range(n_steps):
        z = rng.standard_normal(L)
        w = (u
             + mig_coeff * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1))
             + sel_coeff * u * (1.0 - u)
             + noise_coeff * np.sqrt(u * (1.0 - u)) * z)
        np.clip(w, 0.0, 1.0, out=w)
        u[:] = w
        if np.all(w == 0.0):
            return step, 0
        if np.all(w == 1.0):
            return step, 1
    return -1, -1


# ---------------------------------------------------------------------------
# event-driven lattice particle system
# ---------------------------------------------------------------------------

class _BitBuf:
    __slots__ = ("word", "left", "bg")

    def __init__(self, bit_generator):
        self.word = 0
        self.left = 0
        self.bg = bit_generator

    def next_bit(self):
        if self.left == 0:
            self.word = int(self.bg.random_raw())
            self.left = 64
        b = self.word & 1
        self.word >>= 1
        self.left -= 1
        return b


def _pair_walk_to_zero(D, L, buf):
    """Embedded +-1 difference chain to first zero; returns (0, steps)."""
    m = 0
    while D != 0:
        dist = D if D <= L - D else L - D
        if dist > 66 and buf.left == 0:
            w = int(buf.bg.random_raw())
            D = (D + 2 * bin(w).count("1") - 64) % L
            m += 64
        else:
            if buf.next_bit():
                D += 1
                if D == L:
                    D = 0
            else:
                D -= 1
                if D < 0:
                    D = L - 1
            m += 1
    return 0, m


def pair_meet_time(d0, L, alpha, bit_generator):
    """See _core.pair_meet_time."""
    rng = np.random.Generator(bit_generator)
    R = 2.0 * alpha * L * L
    D = d0 % L
    if D == 0:
        return 0.0
    buf = _BitBuf(bit_generator)
    _, m = _pair_walk_to_zero(D, L, buf)
    return float(rng.gamma(float(m), 1.0 / R))


def pair_endgame(d0, L, alpha, gamma, bit_generator):
    """See _core.pair_endgame; returns (tau_meet, tau_kill)."""
    rng = np.random.Generator(bit_generator)
    R = 2.0 * alpha * L * L
    kill_rate = gamma * L
    q0 = kill_rate / (R + kill_rate)
    buf = _BitBuf(bit_generator)
    D = d0 % L
    m_pre = m_zero = m_post = 0
    if D != 0:
        _, m_pre = _pair_walk_to_zero(D, L, buf)
    tau_meet = float(rng.gamma(float(m_pre), 1.0 / R)) if m_pre > 0 else 0.0
    while True:
        m_zero += 1
        if rng.random() < q0:
            break
        _, m = _pair_walk_to_zero(1, L, buf)
        m_post += m
    tau_kill = tau_meet + float(rng.gamma(float(m_zero), 1.0 / (R + kill_rate)))
    if m_post > 0:
        tau_kill += float(rng.gamma(float(m_post), 1.0 / R))
    return tau_meet, tau_kill


def lattice_walk_run(init_sites, init_colors, L, alpha, beta, gamma, t_max,
                     checkpoints, two_type, stop_at_tau_one, accelerate,
                     max_particles, bit_generator, max_events=0):
    """See _core.lattice_walk_run (executable reference implementation)."""
    rng = np.random.Generator(bit_generator)
    n0 = len(init_sites)
    if max_particles < n0:
        raise ValueError("max_particles smaller than the initial configuration")
    pos = [int(s) % L for s in init_sites]
    col = [int(c) for c in init_colors]
    counts = [0] * L
    for s in pos:
        counts[s] += 1
    n = n0
    n_red = sum(col)
    n_green = n - n_red
    pairs = sum(c * (c - 1) // 2 for c in counts)

    cps = [] if checkpoints is None else [float(c) for c in checkpoints]
    n_cp = len(cps)
    cp_green = np.zeros(n_cp, dtype=np.int64)
    cp_red = np.zeros(n_cp, dtype=np.int64)
    cp_dist = np.full(n_cp, -1, dtype=np.int64)

    jump_rate = alpha * L * L
    coal_rate = gamma * L
    t = 0.0
    tau_meet = tau_one = tau_kill = -1.0
    cp_idx = 0
    killed = False

    def pair_sitedist():
        d = abs(pos[0] - pos[1])
        return min(d, L - d)

    if n == 2 and pos[0] == pos[1]:
        tau_one = 0.0
        if two_type and n_green == 1 and n_red == 1:
            tau_meet = 0.0

    used_endgame = False
    events_done = 0
    while True:
        if max_events > 0 and events_done >= max_events:
            break
        if two_type and n_red == 0:
            killed = True
            tau_kill = t
            break
        if stop_at_tau_one and tau_one >= 0.0:
            break

        if (accelerate and beta == 0.0 and n == 2 and n_cp == 0
                and max_events == 0 and (two_type or stop_at_tau_one)):
            used_endgame = True
            d = pos[0] - pos[1]
            if two_type:
                g_meet, g_kill = _endgame_draws(d, L, alpha, gamma, rng,
                                                bit_generator)
                if tau_one < 0.0 and t + g_meet <= t_max:
                    tau_one = t + g_meet
                if tau_meet < 0.0 and t + g_meet <= t_max:
                    tau_meet = t + g_meet
                if t + g_kill <= t_max:
                    killed = True
                    tau_kill = t + g_kill
                    t = tau_kill
                    n_red = 0
                    n = 1
                else:
                    t = t_max
            else:
                g_meet = _meet_draws(d, L, alpha, rng, bit_generator)
                if tau_one < 0.0 and t + g_meet <= t_max:
                    tau_one = t + g_meet
                    t = tau_one
                else:
                    t = t_max
            break

        total = n * (jump_rate + beta) + coal_rate * pairs
        dt = -math.log(rng.random()) / total
        while cp_idx < n_cp and cps[cp_idx] < t + dt:
            cp_green[cp_idx] = n_green
            cp_red[cp_idx] = n_red
            if n == 2:
                cp_dist[cp_idx] = pair_sitedist()
            cp_idx += 1
        if t + dt > t_max:
            t = t_max
            break
        t = t + dt

        r = rng.random() * total
        if r < n * jump_rate:
            i = min(int(r // jump_rate), n - 1)
            frac = r - i * jump_rate
            s = pos[i]
            counts[s] -= 1
            pairs -= counts[s]
            s = (s - 1) % L if frac < 0.5 * jump_rate else (s + 1) % L
            pairs += counts[s]
            counts[s] += 1
            pos[i] = s
        else:
            r -= n * jump_rate
            if beta > 0.0 and r < n * beta:
                i = min(int(r // beta), n - 1)
                if n >= max_particles:
                    raise RuntimeError(
                        f"particle cap {max_particles} exceeded at t={t:g}")
                s = pos[i]
                pos.append(s)
                col.append(col[i])
                pairs += counts[s]
                counts[s] += 1
                if col[i]:
                    n_red += 1
                else:
                    n_green += 1
                n += 1
            else:
                r -= n * beta
                frac = r / coal_rate
                idx = min(int(frac), pairs - 1)
                frac -= idx
                acc = 0
                for s in range(L):
                    c = counts[s]
                    if c > 1:
                        p = c * (c - 1) // 2
                        if idx < acc + p:
                            k_in_site = idx - acc
                            break
                        acc += p
                at_site = [j for j in range(n) if pos[j] == s]
                m = len(at_site)
                a = 0
                while True:
                    cnt = m - 1 - a
                    if k_in_site < cnt:
                        b = a + 1 + k_in_site
                        break
                    k_in_site -= cnt
                    a += 1
                a, b = at_site[a], at_site[b]
                if two_type and col[a] != col[b]:
                    victim = a if col[a] else b
                else:
                    victim = a if frac < 0.5 else b
                counts[s] -= 1
                pairs -= counts[s]
                if col[victim]:
                    n_red -= 1
                else:
                    n_green -= 1
                n -= 1
                pos[victim] = pos[n]
                col[victim] = col[n]
                pos.pop()
                col.pop()

        if n == 2 and pos[0] == pos[1]:
            if tau_one < 0.0:
                tau_one = t
            if two_type and tau_meet < 0.0 and n_green == 1 and n_red == 1:
                tau_meet = t
        events_done += 1

    while cp_idx < n_cp:
        cp_green[cp_idx] = n_green
        cp_red[cp_idx] = n_red
        if not killed and n == 2:
            cp_dist[cp_idx] = pair_sitedist()
        cp_idx += 1

    import numpy as _np
    final_sites = final_cols = None
    if not used_endgame:
        final_sites = _np.asarray(pos[:n], dtype=_np.int64)
        final_cols = _np.asarray(col[:n], dtype=_np.uint8)

    inf = float("inf")
    return {
        "tau_kill": tau_kill if killed else inf,
        "tau_meet": tau_meet if tau_meet >= 0.0 else inf,
        "tau_one": tau_one if tau_one >= 0.0 else inf,
        "t_final": t,
        "n_green": n_green,
        "n_red": n_red,
        "cp_green": cp_green,
        "cp_red": cp_red,
        "cp_dist": cp_dist,
        "final_sites": final_sites,
        "final_cols": final_cols,
    }


def _meet_draws(d0, L, alpha, rng, bit_generator):
    R = 2.0 * alpha * L * L
    D = d0 % L
    if D == 0:
        return 0.0
    buf = _BitBuf(bit_generator)
    _, m = _pair_walk_to_zero(D, L, buf)
    return float(rng.gamma(float(m), 1.0 / R))


def _endgame_draws(d0, L, alpha, gamma, rng, bit_generator):
    R = 2.0 * alpha * L * L
    kill_rate = gamma * L
    q0 = kill_rate / (R + kill_rate)
    buf = _BitBuf(bit_generator)
    D = d0 % L
    m_pre = m_zero = m_post = 0
    if D != 0:
        _, m_pre = _pair_walk_to_zero(D, L, buf)
    tau_meet = float(rng.gamma(float(m_pre), 1.0 / R)) if m_pre > 0 else 0.0
    while True:
        m_zero += 1
        if rng.random() < q0:
            break
        _, m = _pair_walk_to_zero(1, L, buf)
        m_post += m
    tau_kill = tau_meet + float(rng.gamma(float(m_zero), 1.0 / (R + kill_rate)))
    if m_post > 0:
        tau_kill += float(rng.gamma(float(m_post), 1.0 / R))
    return tau_meet, tau_kill


# ---------------------------------------------------------------------------
# fixed-step continuous-space particle system
# ---------------------------------------------------------------------------

def continuous_walk_run(init_pos, init_colors, alpha, beta, gamma, delta,
                        t_max, checkpoints, two_type, coal_prob_table,
                        max_particles, bit_generator):
    """See _core.continuous_walk_run."""
    rng = np.random.Generator(bit_generator)
    n0 = len(init_pos)
    if max_particles < n0:
        raise ValueError("max_particles smaller than the initial configuration")
    pos = [float(x) % 1.0 for x in init_pos]
    col = [int(c) for c in init_colors]
    n = n0
    n_red = sum(col)
    n_green = n - n_red

    cps = [] if checkpoints is None else [float(c) for c in checkpoints]
    n_cp = len(cps)
    cp_green = np.zeros(n_cp, dtype=np.int64)
    cp_red = np.zeros(n_cp, dtype=np.int64)
    cp_dist = np.full(n_cp, -1.0, dtype=np.float64)

    tab = np.asarray(coal_prob_table, dtype=float)
    n_tab = len(tab)
    tab_scale = (n_tab - 1) / 0.5
    sig = math.sqrt(alpha * delta)
    p_branch = -math.expm1(-beta * delta)
    t = 0.0
    tau_meet = tau_kill = -1.0
    cp_idx = 0
    step = 0
    n_steps = int(math.floor(t_max / delta + 0.5))
    killed = False

    def dist(i, j):
        d = abs(pos[i] - pos[j])
        return min(d, 1.0 - d)

    if two_type and n == 2 and n_green == 1 and n_red == 1 and pos[0] == pos[1]:
        tau_meet = 0.0

    while step < n_steps and not killed:
        z = rng.standard_normal(n)
        for i in range(n):
            pos[i] = (pos[i] + sig * z[i]) % 1.0
        n_start = n
        alive = [True] * n
        n_pairs = n_start * (n_start - 1) // 2
        us = rng.random(n_pairs) if n_pairs else np.empty(0)
        ui = 0
        for i in range(n_start):
            for j in range(i + 1, n_start):
                u = us[ui]
                ui += 1
                if not (alive[i] and alive[j]):
                    continue
                d = dist(i, j)
                fidx = d * tab_scale
                lo = min(int(fidx), n_tab - 2)
                p = tab[lo] + (fidx - lo) * (tab[lo + 1] - tab[lo])
                if u < p:
                    if two_type and col[i] != col[j]:
                        victim = i if col[i] else j
                    else:
                        victim = i if (u / p) < 0.5 else j
                    alive[victim] = False
                    if col[victim]:
                        n_red -= 1
                    else:
                        n_green -= 1
        if p_branch > 0.0:
            ub = rng.random(n_start)
            for i in range(n_start):
                if alive[i] and ub[i] < p_branch:
                    if n >= max_particles:
                        raise RuntimeError(
                            f"particle cap {max_particles} exceeded at t={t:g}")
                    pos.append(pos[i])
                    col.append(col[i])
                    alive.append(True)
                    if col[i]:
                        n_red += 1
                    else:
                        n_green += 1
                    n += 1
        pos = [pos[i] for i in range(n) if alive[i]]
        col = [col[i] for i in range(n) if alive[i]]
        n = len(pos)

        step += 1
        t = step * delta
        while cp_idx < n_cp and cps[cp_idx] <= t + 1e-12:
            cp_green[cp_idx] = n_green
            cp_red[cp_idx] = n_red
            cp_dist[cp_idx] = dist(0, 1) if n == 2 else -1.0
            cp_idx += 1
        if two_type and n_red == 0:
            killed = True
            tau_kill = t

    while cp_idx < n_cp:
        cp_green[cp_idx] = n_green
        cp_red[cp_idx] = n_red
        cp_idx += 1

    import numpy as _np
    inf = float("inf")
    return {
        "tau_kill": tau_kill if killed else inf,
        "tau_meet": tau_meet if tau_meet >= 0.0 else inf,
        "t_final": t,
        "n_green": n_green,
        "n_red": n_red,
        "cp_green": cp_green,
        "cp_red": cp_red,
        "cp_dist": cp_dist,
        "final_pos": _np.asarray(pos, dtype=float),
        "final_cols": _np.asarray(col, dtype=_np.uint8),
    }


# ---------------------------------------------------------------------------
# ensemble-with-resampling (conditioned stationary estimator)
# ---------------------------------------------------------------------------

def resampled_ensemble_run(states, M, mig_coeff, sel_coeff, n_steps,
                           burn_steps, sample_every, probe_sites,
                           probe_offsets, bit_generator):
    """See _core.resampled_ensemble_run."""
    rng = np.random.Generator(bit_generator)
    n_rep, L = states.shape
    dM = float(M)
    fullL = L * M
    n_samples = 0
    if n_steps > burn_steps and sample_every > 0:
        n_samples = (n_steps - burn_steps) // sample_every
    onept = np.zeros((n_samples, len(probe_sites)))
    twopt = np.zeros((n_samples, len(probe_offsets)))
    meanstats = np.zeros((n_samples, 2))
    repl = np.zeros(n_samples, dtype=np.int64)
    replaced_after_burn = 0
    window_repl = 0

    for step in range(n_steps):
        fixated = np.zeros(n_rep, dtype=bool)
        for r in range(n_rep):
            u = states[r] / dM
            v = u + mig_coeff * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1))
            w = v + sel_coeff * v * (1.0 - v)
            np.clip(w, 0.0, 1.0, out=w)
            states[r] = rng.binomial(M, w)
            tot = int(states[r].sum())
            fixated[r] = tot == 0 or tot == fullL
        n_fix = int(fixated.sum())
        if n_fix > 0:
            if n_fix == n_rep:
                raise RuntimeError(
                    "all ensemble copies fixated in one step; raise n_replicas")
            survivors = np.flatnonzero(~fixated)
            for r in range(n_rep):
                if fixated[r]:
                    donor = survivors[int(rng.random() * len(survivors))]
                    states[r] = states[donor]
            if step >= burn_steps:
                replaced_after_burn += n_fix
                window_repl += n_fix
        if step >= burn_steps and sample_every > 0:
            if (step - burn_steps + 1) % sample_every == 0:
                j = (step - burn_steps + 1) // sample_every - 1
                if j < n_samples:
                    # sequential accumulation in the compiled backend's order,
                    # so sample statistics stay byte-identical across backends
                    for si, site in enumerate(probe_sites):
                        acc = 0.0
                        for r in range(n_rep):
                            acc += states[r, site] / dM
                        onept[j, si] = acc / n_rep
                    for si, off in enumerate(probe_offsets):
                        acc = 0.0
                        for r in range(n_rep):
                            for i in range(L):
                                ip = i + int(off)
                                if ip >= L:
                                    ip -= L
                                acc += (1.0 - states[r, i] / dM) * (states[r, ip] / dM)
                        twopt[j, si] = acc / (n_rep * L)
                    acc = 0.0
                    usum = 0.0
                    for r in range(n_rep):
                        v = 0.0
                        for i in range(L):
                            v += states[r, i] / dM
                        v /= L
                        usum += v
                        acc += v * v
                    meanstats[j, 0] = usum / n_rep
                    meanstats[j, 1] = acc / n_rep
                    repl[j] = window_repl
                    window_repl = 0

    return {
        "onept": onept,
        "twopt": twopt,
        "meanstats": meanstats,
        "repl": repl,
        "replaced_after_burn": replaced_after_burn,
    }
