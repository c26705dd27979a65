# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: stepping-stone field stepping, explicit-Euler field
stepping, event-driven lattice particle system (with an exact accelerated
two-particle endgame), fixed-step continuous-space particle system, and the
ensemble-with-resampling driver.

Draw discipline is part of each kernel's contract: the pure-Python reference
backend (`_pyref`) consumes the underlying bit stream in exactly the same
order, so both backends produce byte-identical results for the same stream.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, sqrt, exp, expm1, floor
from libc.stdint cimport uint64_t, int64_t
from libc.string cimport memset
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    binomial_t,
    random_binomial,
    random_gamma,
    random_standard_normal,
    random_standard_uniform,
)

cnp.import_array()

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define fq_popcount64(x) __builtin_popcountll(x)
    #else
    static inline int fq_popcount64(unsigned long long x)
    { int c = 0; while (x) { x &= x - 1; ++c; } return c; }
    #endif
    """
    int fq_popcount64(unsigned long long x) nogil


cdef bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def backend_name():
    return "compiled"


# ---------------------------------------------------------------------------
# stepping-stone field engine
# ---------------------------------------------------------------------------

def spde_evolve(cnp.int64_t[::1] k, int M, double mig_coeff, double sel_coeff,
                long n_steps, object bit_generator):
    """Advance the deme-count field in place by up to n_steps resampling steps.

    One step: conservative nearest-neighbour migration with coefficient
    mig_coeff = alpha*delta*L^2/2, deterministic selection tilt with
    sel_coeff = beta*delta, then per-site Binomial(M, w) resampling.

    Returns (absorbed_step, side): absorbed_step is the 0-based index of the
    step after which the field first became constant (-1 if it never did
    within n_steps), side is 0/1 (or -1).

    Draw order: sites ascending within each step.  Sites with w == 0 consume
    nothing and w == 1 consumes a single uniform (numpy random_binomial
    semantics), matching a vectorised Generator.binomial(M, w) call.
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t L = k.shape[0]
    cdef double[::1] u = np.empty(L, dtype=np.float64)
    cdef binomial_t binom
    memset(&binom, 0, sizeof(binom))
    cdef Py_ssize_t i, ip, im
    cdef long step
    cdef double v, w, dM = <double> M
    cdef int64_t kk, tot
    cdef int64_t fullL = (<int64_t> L) * M

    for step in range(n_steps):
        for i in range(L):
            u[i] = (<double> k[i]) / dM
        tot = 0
        for i in range(L):
            ip = i + 1 if i + 1 < L else 0
            im = i - 1 if i > 0 else L - 1
            v = u[i] + mig_coeff * (u[ip] - 2.0 * u[i] + u[im])
            w = v + sel_coeff * v * (1.0 - v)
            if w < 0.0:
                w = 0.0
            elif w > 1.0:
                w = 1.0
            kk = random_binomial(rng, w, M, &binom)
            k[i] = kk
            tot += kk
        if tot == 0:
            return step, 0
        if tot == fullL:
            return step, 1
    return -1, -1


def euler_evolve(double[::1] u, double mig_coeff, double sel_coeff,
                 double noise_coeff, long n_steps, object bit_generator):
    """Explicit Euler-Maruyama alternative on a dense real field, in place.

    Per-site update: u + mig_coeff*laplacian + sel_coeff*u*(1-u)
    + noise_coeff*sqrt(u*(1-u))*Z with noise_coeff = sqrt(gamma*delta*L),
    clamped to [0, 1] (documented boundary bias).  One standard normal per
    site per step, sites ascending; absorption when the clamped field is
    exactly constant 0 or 1.
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t L = u.shape[0]
    cdef double[::1] old = np.empty(L, dtype=np.float64)
    cdef Py_ssize_t i, ip, im
    cdef long step
    cdef double w, z
    cdef bint all0, all1

    for step in range(n_steps):
        for i in range(L):
            old[i] = u[i]
        all0 = True
        all1 = True
        for i in range(L):
            ip = i + 1 if i + 1 < L else 0
            im = i - 1 if i > 0 else L - 1
            z = random_standard_normal(rng)
            w = (old[i]
                 + mig_coeff * (old[ip] - 2.0 * old[i] + old[im])
                 + sel_coeff * old[i] * (1.0 - old[i])
                 + noise_coeff * sqrt(old[i] * (1.0 - old[i])) * z)
            if w < 0.0:
                w = 0.0
            elif w > 1.0:
                w = 1.0
            u[i] = w
            if w != 0.0:
                all0 = False
            if w != 1.0:
                all1 = False
        if all0:
            return step, 0
        if all1:
            return step, 1
    return -1, -1


# ---------------------------------------------------------------------------
# event-driven lattice particle system
# ---------------------------------------------------------------------------

cdef struct BitBuf:
    uint64_t word
    int left


cdef inline int _next_bit(BitBuf *buf, bitgen_t *rng) nogil:
    cdef int b
    if buf.left == 0:
        buf.word = rng.next_uint64(rng.state)
        buf.left = 64
    b = <int> (buf.word & 1)
    buf.word >>= 1
    buf.left -= 1
    return b


cdef void _pair_walk_to_zero(long *D_io, long L, long *steps_io,
                             BitBuf *buf, bitgen_t *rng) nogil:
    """Walk the signed site-difference +-1 chain until it hits 0 (mod L),
    accumulating embedded-step count.  Far from 0, when the bit buffer is
    empty, a full 64-step word is applied at once via popcount (the walk
    cannot reach 0 within 64 steps from distance > 66)."""
    cdef long D = D_io[0]
    cdef long m = 0
    cdef uint64_t w
    cdef long dist
    while D != 0:
        dist = D if D <= L - D else L - D
        if dist > 66 and buf.left == 0:
            w = rng.next_uint64(rng.state)
            D = (D + 2 * fq_popcount64(w) - 64) % L
            if D < 0:
                D += L
            m += 64
        else:
            if _next_bit(buf, rng):
                D += 1
                if D == L:
                    D = 0
            else:
                D -= 1
                if D < 0:
                    D = L - 1
            m += 1
    D_io[0] = 0
    steps_io[0] = steps_io[0] + m


cdef double _pair_meet_time_c(long d0, long L, double alpha,
                              bitgen_t *rng):
    """Exact first co-location time of two lattice walkers d0 sites apart:
    embedded chain via direction bits, elapsed time as one Gamma draw."""
    cdef double R = 2.0 * alpha * (<double> L) * (<double> L)
    cdef BitBuf buf
    buf.word = 0
    buf.left = 0
    cdef long D = d0 % L
    if D < 0:
        D += L
    cdef long m = 0
    if D == 0:
        return 0.0
    _pair_walk_to_zero(&D, L, &m, &buf, rng)
    return random_gamma(rng, <double> m, 1.0 / R)


cdef (double, double) _pair_endgame_c(long d0, long L, double alpha,
                                      double gamma, bitgen_t *rng):
    """Exact (first co-location time, pair-resolution time) for two lattice
    walkers with pair coalescence rate gamma*L while co-located, beta = 0.

    Holding times are iid exponentials independent of the jump chain, so the
    embedded chain is simulated with direction bits and the elapsed times are
    recovered as Gamma(count, 1/rate) sums: Gamma(m,1/R) off-zero holdings at
    total jump rate R = 2*alpha*L^2 and Gamma(m0, 1/(R+gamma*L)) holdings at
    zero, where each zero-visit resolves (kill) with probability
    gamma*L/(R+gamma*L).  From zero both escape targets are at distance 1, so
    no direction bit is consumed on escape.
    """
    cdef double R = 2.0 * alpha * (<double> L) * (<double> L)
    cdef double kill_rate = gamma * (<double> L)
    cdef double q0 = kill_rate / (R + kill_rate)
    cdef BitBuf buf
    buf.word = 0
    buf.left = 0
    cdef long D = d0 % L
    if D < 0:
        D += L
    cdef long m_pre = 0, m_zero = 0, m_post = 0
    cdef double tau_meet, tau_kill
    if D != 0:
        _pair_walk_to_zero(&D, L, &m_pre, &buf, rng)
    tau_meet = random_gamma(rng, <double> m_pre, 1.0 / R) if m_pre > 0 else 0.0
    while True:
        m_zero += 1
        if random_standard_uniform(rng) < q0:
            break
        D = 1
        _pair_walk_to_zero(&D, L, &m_post, &buf, rng)
    tau_kill = tau_meet + random_gamma(rng, <double> m_zero,
                                       1.0 / (R + kill_rate))
    if m_post > 0:
        tau_kill += random_gamma(rng, <double> m_post, 1.0 / R)
    return tau_meet, tau_kill


def pair_endgame(long d0, long L, double alpha, double gamma,
                 object bit_generator):
    """Python-visible wrapper of the exact two-particle endgame sampler;
    returns (tau_meet, tau_kill)."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef (double, double) out = _pair_endgame_c(d0, L, alpha, gamma, rng)
    return out[0], out[1]


def pair_meet_time(long d0, long L, double alpha, object bit_generator):
    """Python-visible wrapper of the exact first co-location sampler."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    return _pair_meet_time_c(d0, L, alpha, rng)


cdef inline Py_ssize_t _find_pair_site(long[::1] counts, Py_ssize_t L,
                                       long idx, long *k_out) nogil:
    """Locate the site holding global co-located-pair index idx; k_out gets
    the within-site pair rank."""
    cdef Py_ssize_t s
    cdef long c, pairs
    cdef long acc = 0
    for s in range(L):
        c = counts[s]
        if c > 1:
            pairs = c * (c - 1) // 2
            if idx < acc + pairs:
                k_out[0] = idx - acc
                return s
            acc += pairs
    k_out[0] = 0
    return L - 1


def lattice_walk_run(long[::1] init_sites, cnp.uint8_t[::1] init_colors,
                     long L, double alpha, double beta, double gamma,
                     double t_max, object checkpoints, bint two_type,
                     bint stop_at_tau_one, bint accelerate,
                     long max_particles, object bit_generator,
                     long max_events=0):
    """Event-driven branching/coalescing random walk on the L-site ring.

    Rates: each particle jumps one site at total rate alpha*L^2, branches
    (same site, same colour) at rate beta, and every unordered co-located
    pair coalesces at rate gamma*L.  In two-type mode a mixed pair kills the
    red, a same-colour pair kills a uniformly chosen member, and the run ends
    when no reds remain (tau_kill).  In colour-blind mode colours are ignored
    for coalescence and there is no killing.

    Records tau_meet (first state that is exactly one green plus one red,
    co-located), tau_one (first state with exactly two particles co-located,
    colours ignored), and optional checkpoint snapshots of (n_green, n_red,
    pair site-distance if exactly two particles remain, else -1).

    With accelerate=True, beta == 0 and no checkpoints, once two particles
    remain the residual dynamics are sampled exactly by the endgame samplers
    above (law-preserving; censoring at t_max applied afterwards).

    Event draw discipline: one uniform for the waiting time, one uniform for
    the event selector; the selector's within-slot fraction supplies the jump
    direction or the same-colour victim choice, so no extra draws occur.
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef long n0 = init_sites.shape[0]
    if max_particles < n0:
        raise ValueError("max_particles smaller than the initial configuration")

    pos_arr = np.empty(max_particles, dtype=np.int64)
    col_arr = np.zeros(max_particles, dtype=np.uint8)
    cdef long[::1] pos = pos_arr
    cdef cnp.uint8_t[::1] col = col_arr
    cdef long[::1] counts = np.zeros(L, dtype=np.int64)
    cdef long[::1] at_site = np.empty(max_particles, dtype=np.int64)

    cdef double[::1] cps = None
    cdef long n_cp = 0
    if checkpoints is not None:
        cps = np.ascontiguousarray(checkpoints, dtype=np.float64)
        n_cp = cps.shape[0]
    cp_green_arr = np.zeros(n_cp, dtype=np.int64)
    cp_red_arr = np.zeros(n_cp, dtype=np.int64)
    cp_dist_arr = np.full(n_cp, -1, dtype=np.int64)
    cdef long[::1] cp_green = cp_green_arr
    cdef long[::1] cp_red = cp_red_arr
    cdef long[::1] cp_dist = cp_dist_arr

    cdef long n = 0, n_red = 0, n_green = 0
    cdef long i, j, s
    cdef long c
    for i in range(n0):
        s = init_sites[i] % L
        if s < 0:
            s += L
        pos[n] = s
        col[n] = init_colors[i]
        counts[s] += 1
        if init_colors[i]:
            n_red += 1
        else:
            n_green += 1
        n += 1

    cdef long pairs = 0
    for s in range(L):
        c = counts[s]
        if c > 1:
            pairs += c * (c - 1) // 2

    cdef double jump_rate = alpha * (<double> L) * (<double> L)
    cdef double coal_rate = gamma * (<double> L)
    cdef double t = 0.0
    cdef double tau_meet = -1.0, tau_one = -1.0, tau_kill = -1.0
    cdef long cp_idx = 0
    cdef double total, r, dt, frac
    cdef long idx, k_in_site, a, b, victim, d
    cdef long m
    cdef bint killed = False
    cdef bint used_endgame = False
    cdef long events_done = 0
    cdef (double, double) eg
    cdef double g_meet

    if n == 2 and pos[0] == pos[1]:
        tau_one = 0.0
        if two_type and n_green == 1 and n_red == 1:
            tau_meet = 0.0

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
                # alive two-type pair is necessarily one green + one red
                eg = _pair_endgame_c(d, L, alpha, gamma, rng)
                if tau_one < 0.0 and t + eg[0] <= t_max:
                    tau_one = t + eg[0]
                if tau_meet < 0.0 and t + eg[0] <= t_max:
                    tau_meet = t + eg[0]
                if t + eg[1] <= t_max:
                    killed = True
                    tau_kill = t + eg[1]
                    t = tau_kill
                    n_red = 0
                    n = 1
                else:
                    t = t_max
            else:
                g_meet = _pair_meet_time_c(d, L, alpha, rng)
                if tau_one < 0.0 and t + g_meet <= t_max:
                    tau_one = t + g_meet
                    t = tau_one
                else:
                    t = t_max
            break

        total = (<double> n) * (jump_rate + beta) + coal_rate * (<double> pairs)
        dt = -log(random_standard_uniform(rng)) / total
        while cp_idx < n_cp and cps[cp_idx] < t + dt:
            cp_green[cp_idx] = n_green
            cp_red[cp_idx] = n_red
            if n == 2:
                d = pos[0] - pos[1]
                if d < 0:
                    d = -d
                if d > L - d:
                    d = L - d
                cp_dist[cp_idx] = d
            cp_idx += 1
        if t + dt > t_max:
            t = t_max
            break
        t = t + dt

        r = random_standard_uniform(rng) * total
        if r < (<double> n) * jump_rate:
            i = <long> floor(r / jump_rate)
            if i >= n:
                i = n - 1
            frac = r - (<double> i) * jump_rate
            s = pos[i]
            counts[s] -= 1
            pairs -= counts[s]
            if frac < 0.5 * jump_rate:
                s = s - 1 if s > 0 else L - 1
            else:
                s = s + 1 if s + 1 < L else 0
            pairs += counts[s]
            counts[s] += 1
            pos[i] = s
        else:
            r -= (<double> n) * jump_rate
            if beta > 0.0 and r < (<double> n) * beta:
                i = <long> floor(r / beta)
                if i >= n:
                    i = n - 1
                if n >= max_particles:
                    raise RuntimeError(
                        "particle cap %d exceeded at t=%g" % (max_particles, t))
                s = pos[i]
                pos[n] = s
                col[n] = col[i]
                pairs += counts[s]
                counts[s] += 1
                if col[i]:
                    n_red += 1
                else:
                    n_green += 1
                n += 1
            else:
                r -= (<double> n) * beta
                frac = r / coal_rate
                idx = <long> floor(frac)
                if idx >= pairs:
                    idx = pairs - 1
                frac = frac - (<double> idx)
                s = _find_pair_site(counts, L, idx, &k_in_site)
                m = 0
                for j in range(n):
                    if pos[j] == s:
                        at_site[m] = j
                        m += 1
                a = 0
                while True:
                    c = m - 1 - a
                    if k_in_site < c:
                        b = a + 1 + k_in_site
                        break
                    k_in_site -= c
                    a += 1
                a = at_site[a]
                b = at_site[b]
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
            d = pos[0] - pos[1]
            if d < 0:
                d = -d
            if d > L - d:
                d = L - d
            cp_dist[cp_idx] = d
        cp_idx += 1

    final_sites = None
    final_cols = None
    if not used_endgame:
        final_sites = pos_arr[:n].copy()
        final_cols = col_arr[:n].copy()

    return {
        "tau_kill": tau_kill if killed else float("inf"),
        "tau_meet": tau_meet if tau_meet >= 0.0 else float("inf"),
        "tau_one": tau_one if tau_one >= 0.0 else float("inf"),
        "t_final": t,
        "n_green": n_green,
        "n_red": n_red,
        "cp_green": cp_green_arr,
        "cp_red": cp_red_arr,
        "cp_dist": cp_dist_arr,
        "final_sites": final_sites,
        "final_cols": final_cols,
    }


# ---------------------------------------------------------------------------
# fixed-step continuous-space particle system
# ---------------------------------------------------------------------------

def continuous_walk_run(double[::1] init_pos, cnp.uint8_t[::1] init_colors,
                        double alpha, double beta, double gamma, double delta,
                        double t_max, object checkpoints, bint two_type,
                        double[::1] coal_prob_table, long max_particles,
                        object bit_generator):
    """Fixed-step engine: wrapped Gaussian increments of variance alpha*delta,
    per-pair coalescence with probability interpolated from coal_prob_table
    (uniform grid over distance in [0, 1/2]), branching with probability
    1 - exp(-beta*delta) per particle per step.

    tau_meet is only defined at t = 0 for an exactly co-located mixed pair
    (off-lattice co-location is otherwise a null event); kill and checkpoint
    times carry one-step resolution.

    Draw order per step: one standard normal per particle (ascending), one
    uniform per unordered pair of the pass-start population (lexicographic,
    drawn even if a member already died within the step), then one uniform
    per pass-start particle for branching when beta > 0.
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef long n0 = init_pos.shape[0]
    if max_particles < n0:
        raise ValueError("max_particles smaller than the initial configuration")
    pos_arr = np.empty(max_particles, dtype=np.float64)
    col_arr = np.zeros(max_particles, dtype=np.uint8)
    alive_arr = np.zeros(max_particles, dtype=np.uint8)
    cdef double[::1] pos = pos_arr
    cdef cnp.uint8_t[::1] col = col_arr
    cdef cnp.uint8_t[::1] alive = alive_arr
    cdef long i, j, n = 0, n_red = 0, n_green = 0
    for i in range(n0):
        pos[i] = init_pos[i] - floor(init_pos[i])
        col[i] = init_colors[i]
        alive[i] = 1
        if init_colors[i]:
            n_red += 1
        else:
            n_green += 1
        n += 1

    cdef double[::1] cps = None
    cdef long n_cp = 0
    if checkpoints is not None:
        cps = np.ascontiguousarray(checkpoints, dtype=np.float64)
        n_cp = cps.shape[0]
    cp_green_arr = np.zeros(n_cp, dtype=np.int64)
    cp_red_arr = np.zeros(n_cp, dtype=np.int64)
    cp_dist_arr = np.full(n_cp, -1.0, dtype=np.float64)
    cdef long[::1] cp_green = cp_green_arr
    cdef long[::1] cp_red = cp_red_arr
    cdef double[::1] cp_dist = cp_dist_arr

    cdef double sig = sqrt(alpha * delta)
    cdef double p_branch = -expm1(-beta * delta)
    cdef long n_tab = coal_prob_table.shape[0]
    cdef double tab_scale = (<double> (n_tab - 1)) / 0.5
    cdef double t = 0.0
    cdef double tau_meet = -1.0, tau_kill = -1.0
    cdef long cp_idx = 0, step = 0
    cdef long n_steps = <long> floor(t_max / delta + 0.5)
    cdef double d, u, p, fidx, z
    cdef long lo, n_start, victim
    cdef bint killed = False

    if two_type and n == 2 and n_green == 1 and n_red == 1 \
            and pos[0] == pos[1]:
        tau_meet = 0.0

    while step < n_steps and not killed:
        for i in range(n):
            z = random_standard_normal(rng)
            pos[i] = pos[i] + sig * z
            pos[i] = pos[i] - floor(pos[i])
        n_start = n
        for i in range(n_start):
            for j in range(i + 1, n_start):
                u = random_standard_uniform(rng)
                if not (alive[i] and alive[j]):
                    continue
                d = pos[i] - pos[j]
                if d < 0.0:
                    d = -d
                if d > 1.0 - d:
                    d = 1.0 - d
                fidx = d * tab_scale
                lo = <long> floor(fidx)
                if lo >= n_tab - 1:
                    lo = n_tab - 2
                p = coal_prob_table[lo] + (fidx - (<double> lo)) * (
                    coal_prob_table[lo + 1] - coal_prob_table[lo])
                if u < p:
                    if two_type and col[i] != col[j]:
                        victim = i if col[i] else j
                    else:
                        victim = i if (u / p) < 0.5 else j
                    alive[victim] = 0
                    if col[victim]:
                        n_red -= 1
                    else:
                        n_green -= 1
        if p_branch > 0.0:
            for i in range(n_start):
                u = random_standard_uniform(rng)
                if alive[i] and u < p_branch:
                    if n >= max_particles:
                        raise RuntimeError(
                            "particle cap %d exceeded at t=%g"
                            % (max_particles, t))
                    pos[n] = pos[i]
                    col[n] = col[i]
                    alive[n] = 1
                    if col[i]:
                        n_red += 1
                    else:
                        n_green += 1
                    n += 1
        j = 0
        for i in range(n):
            if alive[i]:
                if j != i:
                    pos[j] = pos[i]
                    col[j] = col[i]
                    alive[j] = 1
                j += 1
        for i in range(j, n):
            alive[i] = 0
        n = j

        step += 1
        t = step * delta
        while cp_idx < n_cp and cps[cp_idx] <= t + 1e-12:
            cp_green[cp_idx] = n_green
            cp_red[cp_idx] = n_red
            if n == 2:
                d = pos[0] - pos[1]
                if d < 0.0:
                    d = -d
                if d > 1.0 - d:
                    d = 1.0 - d
                cp_dist[cp_idx] = d
            else:
                cp_dist[cp_idx] = -1.0
            cp_idx += 1
        if two_type and n_red == 0:
            killed = True
            tau_kill = t

    while cp_idx < n_cp:
        cp_green[cp_idx] = n_green
        cp_red[cp_idx] = n_red
        cp_idx += 1

    return {
        "tau_kill": tau_kill if killed else float("inf"),
        "tau_meet": tau_meet if tau_meet >= 0.0 else float("inf"),
        "t_final": t,
        "n_green": n_green,
        "n_red": n_red,
        "cp_green": cp_green_arr,
        "cp_red": cp_red_arr,
        "cp_dist": cp_dist_arr,
        "final_pos": pos_arr[:n].copy(),
        "final_cols": col_arr[:n].copy(),
    }


# ---------------------------------------------------------------------------
# ensemble-with-resampling (conditioned stationary estimator)
# ---------------------------------------------------------------------------

def resampled_ensemble_run(cnp.int64_t[:, ::1] states, int M,
                           double mig_coeff, double sel_coeff,
                           long n_steps, long burn_steps, long sample_every,
                           long[::1] probe_sites, long[::1] probe_offsets,
                           object bit_generator):
    """Evolve n_rep stepping-stone copies in lock step; replace each copy that
    fixates with a duplicate of a uniformly chosen surviving copy.

    After burn_steps, every sample_every steps record ensemble averages of
    u at probe_sites, site-averaged (1-u(x))u(x+off) for each offset, and the
    spatial mean plus its square; replacement counts are recorded per sample
    window.  Raises RuntimeError if every copy fixates simultaneously.

    Draw order per step: replicas ascending (spde_evolve site order within
    each), then one uniform per fixated replica (ascending) for donor choice.
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t n_rep = states.shape[0]
    cdef Py_ssize_t L = states.shape[1]
    cdef binomial_t binom
    memset(&binom, 0, sizeof(binom))
    cdef double[::1] u = np.empty(L, dtype=np.float64)
    cdef Py_ssize_t r, i, ip, im
    cdef long step
    cdef double v, w, dM = <double> M
    cdef int64_t kk, tot, fullL = (<int64_t> L) * M
    cdef cnp.uint8_t[::1] fixated = np.zeros(n_rep, dtype=np.uint8)
    cdef long[::1] survivors = np.empty(n_rep, dtype=np.int64)

    cdef long n_samples = 0
    if n_steps > burn_steps and sample_every > 0:
        n_samples = (n_steps - burn_steps) // sample_every
    cdef Py_ssize_t n_ps = probe_sites.shape[0]
    cdef Py_ssize_t n_off = probe_offsets.shape[0]
    onept_arr = np.zeros((n_samples, n_ps), dtype=np.float64)
    twopt_arr = np.zeros((n_samples, n_off), dtype=np.float64)
    meanstats_arr = np.zeros((n_samples, 2), dtype=np.float64)
    repl_arr = np.zeros(n_samples, dtype=np.int64)
    cdef double[:, ::1] onept = onept_arr
    cdef double[:, ::1] twopt = twopt_arr
    cdef double[:, ::1] meanstats = meanstats_arr
    cdef long[::1] repl = repl_arr

    cdef long replaced_after_burn = 0, window_repl = 0
    cdef long n_fix, n_surv, donor
    cdef Py_ssize_t si
    cdef double usum, acc, uoff
    cdef Py_ssize_t sample_j

    for step in range(n_steps):
        n_fix = 0
        for r in range(n_rep):
            for i in range(L):
                u[i] = (<double> states[r, i]) / dM
            tot = 0
            for i in range(L):
                ip = i + 1 if i + 1 < L else 0
                im = i - 1 if i > 0 else L - 1
                v = u[i] + mig_coeff * (u[ip] - 2.0 * u[i] + u[im])
                w = v + sel_coeff * v * (1.0 - v)
                if w < 0.0:
                    w = 0.0
                elif w > 1.0:
                    w = 1.0
                kk = random_binomial(rng, w, M, &binom)
                states[r, i] = kk
                tot += kk
            fixated[r] = 1 if (tot == 0 or tot == fullL) else 0
            if fixated[r]:
                n_fix += 1
        if n_fix > 0:
            if n_fix == n_rep:
                raise RuntimeError(
                    "all ensemble copies fixated in one step; raise n_replicas")
            n_surv = 0
            for r in range(n_rep):
                if not fixated[r]:
                    survivors[n_surv] = r
                    n_surv += 1
            for r in range(n_rep):
                if fixated[r]:
                    donor = survivors[<long> floor(
                        random_standard_uniform(rng) * (<double> n_surv))]
                    for i in range(L):
                        states[r, i] = states[donor, i]
            if step >= burn_steps:
                replaced_after_burn += n_fix
                window_repl += n_fix
        if step >= burn_steps and sample_every > 0:
            if (step - burn_steps + 1) % sample_every == 0:
                sample_j = (step - burn_steps + 1) // sample_every - 1
                if sample_j < n_samples:
                    for si in range(n_ps):
                        acc = 0.0
                        for r in range(n_rep):
                            acc += (<double> states[r, probe_sites[si]]) / dM
                        onept[sample_j, si] = acc / (<double> n_rep)
                    for si in range(n_off):
                        acc = 0.0
                        for r in range(n_rep):
                            for i in range(L):
                                ip = i + probe_offsets[si]
                                if ip >= L:
                                    ip -= L
                                uoff = (<double> states[r, ip]) / dM
                                acc += (1.0 - (<double> states[r, i]) / dM) * uoff
                        twopt[sample_j, si] = acc / (<double> (n_rep * L))
                    acc = 0.0
                    usum = 0.0
                    for r in range(n_rep):
                        v = 0.0
                        for i in range(L):
                            v += (<double> states[r, i]) / dM
                        v /= (<double> L)
                        usum += v
                        acc += v * v
                    meanstats[sample_j, 0] = usum / (<double> n_rep)
                    meanstats[sample_j, 1] = acc / (<double> n_rep)
                    repl[sample_j] = window_repl
                    window_repl = 0

    return {
        "onept": onept_arr,
        "twopt": twopt_arr,
        "meanstats": meanstats_arr,
        "repl": repl_arr,
        "replaced_after_burn": replaced_after_burn,
    }
