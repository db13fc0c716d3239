"""Compiled hot loops (numba).

Design notes that matter for correctness:

* Every batch kernel takes a per-replicate seed array; replicate i calls
  np.random.seed(seeds[i]) before drawing anything, so results are identical
  under any chunking of replicates over workers.
* Pair kernels exploit a "safe block": if the ℓ∞ separation is s, the next
  floor((s-1)/R) jumps cannot make the walkers meet, so those jumps are
  applied without per-step checks.  Equivalence with the naive loop is
  covered by tests (same-seed equality and a pure-python oracle).
* The multi-walker engine keeps one live walker per block (the block's mark
  walker).  Site occupancy is an open-addressing hash (linear probing with
  tombstones).  Deleting on every jump fills the table with tombstones and
  degrades probing, so the table is rebuilt from the live walkers whenever
  the tombstone count passes size/4.
"""
from __future__ import annotations

import numpy as np
from numba import njit

HASH_MULT = np.int64(-7046029254386353131)  # fibonacci-style 64-bit mixer


# ---------------------------------------------------------------------------
# pair walks


@njit(cache=True)
def pair_meet_batch(z0, jumps, R, r_esc, step_cap, seeds):
    """Meeting indicator for independent walk pairs started z0 apart.

    Walk both walkers explicitly (one uniform walker choice + one uniform
    jump per event).  A replicate ends with a meet (separation 0), an escape
    (separation > r_esc) or the step cap.  Returns (n_meets, total_steps).
    """
    n = seeds.shape[0]
    K = jumps.shape[0]
    d = jumps.shape[1]
    meets = 0
    total_steps = 0
    x = np.zeros(d, np.int64)
    y = np.zeros(d, np.int64)
    for rep in range(n):
        np.random.seed(seeds[rep])
        for i in range(d):
            x[i] = 0
            y[i] = z0[i]
        steps = 0
        while True:
            sep = 0
            for i in range(d):
                a = x[i] - y[i]
                if a < 0:
                    a = -a
                if a > sep:
                    sep = a
            if sep == 0:
                meets += 1
                break
            if sep > r_esc or steps >= step_cap:
                break
            nb = (sep - 1) // R
            if nb < 1:
                nb = 1
            if nb > step_cap - steps:
                nb = step_cap - steps
            for _ in range(nb):
                j2 = np.random.randint(0, 2 * K)
                if j2 >= K:
                    j = j2 - K
                    for i in range(d):
                        y[i] += jumps[j, i]
                else:
                    for i in range(d):
                        x[i] += jumps[j2, i]
            steps += nb
        total_steps += steps
    return meets, total_steps


@njit(cache=True)
def pair_visit_tables(jumps, R, r_esc, step_cap, seeds, box_r):
    """Visit-count tables for the pair-separation walk started at 0.

    Per replicate, run the separation process S (one walker of the pair jumps
    per step, so S gains or loses one jump vector with equal probability) and
    count visits to every site of B(box_r) until |S|∞ > r_esc or the step cap.
    Returns (sum_v, sum_vv, sum_cross, n) where per site z:
        sum_v[z]    = Σ_rep visits_rep(z)
        sum_vv[z]   = Σ_rep visits_rep(z)^2
        sum_cross[z]= Σ_rep visits_rep(z) * visits_rep(0)
    The ratio mean(v_z)/mean(v_0) estimates the probability that a pair with
    separation z ever meets; the cross term feeds its delta-method stderr.
    """
    n = seeds.shape[0]
    K = jumps.shape[0]
    d = jumps.shape[1]
    side = 2 * box_r + 1
    m = side ** d
    sum_v = np.zeros(m, np.float64)
    sum_vv = np.zeros(m, np.float64)
    sum_cross = np.zeros(m, np.float64)
    local = np.zeros(m, np.int32)
    touched = np.empty(m, np.int64)
    s = np.zeros(d, np.int64)
    center = (m - 1) // 2
    for rep in range(n):
        np.random.seed(seeds[rep])
        for i in range(d):
            s[i] = 0
        ntouch = 0
        steps = 0
        while True:
            # record current position if inside the table box
            sep = 0
            for i in range(d):
                a = s[i]
                if a < 0:
                    a = -a
                if a > sep:
                    sep = a
            if sep <= box_r:
                idx = np.int64(0)
                for i in range(d):
                    idx = idx * side + (s[i] + box_r)
                if local[idx] == 0:
                    touched[ntouch] = idx
                    ntouch += 1
                local[idx] += 1
            if sep > r_esc or steps >= step_cap:
                break
            j2 = np.random.randint(0, 2 * K)
            if j2 >= K:
                j = j2 - K
                for i in range(d):
                    s[i] -= jumps[j, i]
            else:
                for i in range(d):
                    s[i] += jumps[j2, i]
            steps += 1
        c0 = np.float64(local[center])
        for q in range(ntouch):
            idx = touched[q]
            c = np.float64(local[idx])
            sum_v[idx] += c
            sum_vv[idx] += c * c
            sum_cross[idx] += c * c0
            local[idx] = 0
    return sum_v, sum_vv, sum_cross


# ---------------------------------------------------------------------------
# multi-walker engine (coalescence)


@njit(cache=True, inline="always")
def _pack_key(pos, w, d, bits, half):
    key = np.int64(0)
    for c in range(d):
        key = (key << bits) | (pos[w, c] + half)
    return key


@njit(cache=True)
def _rebuild(keys, vals, slot_of, pos, alive, n_alive, d, bits, half, mask):
    keys[:] = -1
    for q in range(n_alive):
        w = alive[q]
        key = _pack_key(pos, w, d, bits, half)
        h = (key * HASH_MULT) & mask
        while keys[h] >= 0:
            h = (h + 1) & mask
        keys[h] = key
        vals[h] = w
        slot_of[w] = h


@njit(cache=True)
def _qdist(qtab, rmax_tab, q_tail_exp, r):
    if r <= rmax_tab:
        return qtab[r]
    return qtab[rmax_tab] * (rmax_tab / r) ** q_tail_exp


@njit(cache=True)
def coalesce_run(A, jumps, qtab, q_tail_exp, eps_stop, t_max, max_events, seed,
                 check_every, pair_cutoff, sub_pairs):
    """One run of the merging-walk system started from one walker per row of A.

    Walkers jump at rate 1 (uniform spread-out jumps).  When a jump lands on
    an occupied site the two blocks merge: the odd-cardinality block's mark
    survives; on equal parity the lexicographically smaller mark point wins.
    The losing walker stops being simulated (its block rides the winner).

    Stop conditions, checked in this order every `check_every` events:
      * fewer than two walkers left                       -> reason 0
      * Σ_pairs q(separation) < eps_stop                  -> reason 0
      * next event would pass t_max (clock freezes there) -> reason 1
      * event budget exhausted                            -> reason 2
      * a coordinate left the packable range              -> reason 3

    Returns (parent, pos, t_end, n_events, n_merges, achieved_qsum, reason,
             log_t, log_a, log_b, log_surv, log_bothodd), where parent[i] is
    the walker index of the mark of i's block, pos[i] the final position of
    walker i (current for live marks, the merge site for absorbed walkers),
    and the log rows describe merges in time order: walker ids of the two
    pre-merge marks (a jumped onto b), the survivor, and whether both blocks
    had odd cardinality.
    """
    np.random.seed(seed)
    n, d = A.shape
    K = jumps.shape[0]
    rmax_tab = qtab.shape[0] - 1

    p = 3
    while (1 << p) < 4 * n:
        p += 1
    size = 1 << p
    mask = size - 1
    keys = np.full(size, np.int64(-1))
    vals = np.zeros(size, np.int32)
    bits = 63 // d
    half = np.int64(1) << (bits - 1)
    cmax = half - 2

    pos = A.copy()
    parent = np.arange(n, dtype=np.int32)
    bsize = np.ones(n, np.int64)
    alive = np.arange(n, dtype=np.int32)
    where = np.arange(n, dtype=np.int32)
    slot_of = np.zeros(n, np.int64)
    n_alive = n
    _rebuild(keys, vals, slot_of, pos, alive, n_alive, d, bits, half, mask)
    tombs = 0

    log_cap = n - 1 if n > 1 else 1
    log_t = np.zeros(log_cap, np.float64)
    log_a = np.zeros(log_cap, np.int32)
    log_b = np.zeros(log_cap, np.int32)
    log_surv = np.zeros(log_cap, np.int32)
    log_bothodd = np.zeros(log_cap, np.uint8)

    n_merges = 0
    t = 0.0
    n_events = 0
    reason = -1
    achieved = np.inf
    until_check = 0

    while True:
        if n_alive <= 1:
            reason = 0
            achieved = 0.0
            break
        if until_check <= 0:
            until_check = check_every
            npairs = n_alive * (n_alive - 1) // 2
            qsum = 0.0
            if npairs <= pair_cutoff:
                for ii in range(n_alive):
                    wi = alive[ii]
                    for jj in range(ii + 1, n_alive):
                        wj = alive[jj]
                        r = 0
                        for c in range(d):
                            a = pos[wi, c] - pos[wj, c]
                            if a < 0:
                                a = -a
                            if a > r:
                                r = a
                        qsum += _qdist(qtab, rmax_tab, q_tail_exp, r)
            else:
                hits = 0
                for _ in range(sub_pairs):
                    ii = np.random.randint(0, n_alive)
                    jj = np.random.randint(0, n_alive)
                    if ii == jj:
                        continue
                    hits += 1
                    wi = alive[ii]
                    wj = alive[jj]
                    r = 0
                    for c in range(d):
                        a = pos[wi, c] - pos[wj, c]
                        if a < 0:
                            a = -a
                        if a > r:
                            r = a
                    qsum += _qdist(qtab, rmax_tab, q_tail_exp, r)
                if hits > 0:
                    qsum = qsum / hits * npairs
                else:
                    qsum = np.inf
            achieved = qsum
            if qsum < eps_stop:
                reason = 0
                break
        if n_events >= max_events:
            reason = 2
            break
        dt = np.random.exponential(1.0 / n_alive)
        if t + dt > t_max:
            t = t_max
            reason = 1
            break
        t += dt
        n_events += 1
        until_check -= 1

        idx = np.random.randint(0, n_alive)
        w = alive[idx]
        keys[slot_of[w]] = -2
        tombs += 1
        j = np.random.randint(0, K)
        overflow = False
        for c in range(d):
            pos[w, c] += jumps[j, c]
            if pos[w, c] >= cmax or pos[w, c] <= -cmax:
                overflow = True
        if overflow:
            reason = 3
            break
        key = _pack_key(pos, w, d, bits, half)
        h = (key * HASH_MULT) & mask
        free = np.int64(-1)
        occupant = np.int32(-1)
        while True:
            k2 = keys[h]
            if k2 == key:
                occupant = vals[h]
                break
            if k2 == -1:
                if free < 0:
                    free = h
                break
            if k2 == -2 and free < 0:
                free = h
            h = (h + 1) & mask
        if occupant >= 0:
            v = occupant
            sw = bsize[w]
            sv = bsize[v]
            w_odd = (sw & 1) == 1
            v_odd = (sv & 1) == 1
            if w_odd and not v_odd:
                surv = w
            elif v_odd and not w_odd:
                surv = v
            else:
                # equal parity: lexicographically smaller mark point survives
                surv = w
                for c in range(d):
                    if A[w, c] < A[v, c]:
                        break
                    elif A[w, c] > A[v, c]:
                        surv = v
                        break
            lose = v if surv == w else w
            log_t[n_merges] = t
            log_a[n_merges] = w
            log_b[n_merges] = v
            log_surv[n_merges] = surv
            log_bothodd[n_merges] = 1 if (w_odd and v_odd) else 0
            n_merges += 1
            parent[lose] = surv
            bsize[surv] = sw + sv
            if lose == v:
                # occupant's slot now carries the jumper
                vals[h] = w
                slot_of[w] = h
            li = where[lose]
            last = alive[n_alive - 1]
            alive[li] = last
            where[last] = li
            n_alive -= 1
        else:
            if keys[free] == -2:
                tombs -= 1
            keys[free] = key
            vals[free] = w
            slot_of[w] = free
        if tombs > size >> 2:
            _rebuild(keys, vals, slot_of, pos, alive, n_alive, d, bits, half, mask)
            tombs = 0

    if reason != 0 and n_alive > 1:
        # refresh the q-sum bound for the state we actually stopped in
        npairs = n_alive * (n_alive - 1) // 2
        qsum = 0.0
        if npairs <= pair_cutoff:
            for ii in range(n_alive):
                wi = alive[ii]
                for jj in range(ii + 1, n_alive):
                    wj = alive[jj]
                    r = 0
                    for c in range(d):
                        a = pos[wi, c] - pos[wj, c]
                        if a < 0:
                            a = -a
                        if a > r:
                            r = a
                    qsum += _qdist(qtab, rmax_tab, q_tail_exp, r)
        else:
            hits = 0
            for _ in range(sub_pairs):
                ii = np.random.randint(0, n_alive)
                jj = np.random.randint(0, n_alive)
                if ii == jj:
                    continue
                hits += 1
                wi = alive[ii]
                wj = alive[jj]
                r = 0
                for c in range(d):
                    a = pos[wi, c] - pos[wj, c]
                    if a < 0:
                        a = -a
                    if a > r:
                        r = a
                qsum += _qdist(qtab, rmax_tab, q_tail_exp, r)
            if hits > 0:
                qsum = qsum / hits * npairs
            else:
                qsum = np.inf
        achieved = qsum

    # resolve every walker to its block's mark walker (path-halving find)
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        while parent[i] != r:
            nxt = parent[i]
            parent[i] = r
            i = nxt

    return (parent, pos, t, n_events, n_merges, achieved, reason,
            log_t[:n_merges], log_a[:n_merges], log_b[:n_merges],
            log_surv[:n_merges], log_bothodd[:n_merges])


@njit(cache=True)
def coalesce_batch_counts(A, jumps, qtab, q_tail_exp, eps_stop, t_max,
                          max_events, seeds, check_every, pair_cutoff,
                          sub_pairs):
    """Replicated runs keeping only the merge tallies the audits need.

    Returns per-replicate (n_absorbed, n_both_odd_merges, reason) plus the
    worst achieved q-sum bound across replicates.  n_absorbed = |starting
    points that are no longer marks at the end|; n_both_odd_merges counts
    merges of two odd blocks (each removes two points from the odd-block
    view).
    """
    nrep = seeds.shape[0]
    out_absorbed = np.zeros(nrep, np.int32)
    out_bothodd = np.zeros(nrep, np.int32)
    out_reason = np.zeros(nrep, np.int8)
    worst_q = 0.0
    for rep in range(nrep):
        res = coalesce_run(A, jumps, qtab, q_tail_exp, eps_stop, t_max,
                           max_events, seeds[rep], check_every, pair_cutoff,
                           sub_pairs)
        parent = res[0]
        n_merges = res[4]
        achieved = res[5]
        reason = res[6]
        bothodd = res[11]
        n = parent.shape[0]
        absorbed = 0
        for i in range(n):
            if parent[i] != i:
                absorbed += 1
        odd = 0
        for q in range(n_merges):
            odd += bothodd[q]
        out_absorbed[rep] = absorbed
        out_bothodd[rep] = odd
        out_reason[rep] = reason
        if achieved > worst_q and np.isfinite(achieved):
            worst_q = achieved
    return out_absorbed, out_bothodd, out_reason, worst_q


# ---------------------------------------------------------------------------
# forward voter dynamics on a torus


@njit(cache=True)
def voter_torus_run(state, dims, jumps, t_max, seed):
    """Evolve opinions in place for time t_max; rate-1 copy events per site.

    state: flat uint8 array over the torus with shape prod(dims); an event
    picks a uniform site x and a uniform jump v, then x copies the opinion of
    x+v (coordinates wrap).
    """
    np.random.seed(seed)
    n = state.shape[0]
    d = dims.shape[0]
    K = jumps.shape[0]
    t = 0.0
    coords = np.zeros(d, np.int64)
    while True:
        dt = np.random.exponential(1.0 / n)
        if t + dt > t_max:
            break
        t += dt
        u = np.random.randint(0, n)
        j = np.random.randint(0, K)
        rem = u
        for c in range(d - 1, -1, -1):
            coords[c] = rem % dims[c]
            rem //= dims[c]
        idx = np.int64(0)
        for c in range(d):
            cc = (coords[c] + jumps[j, c]) % dims[c]
            if cc < 0:
                cc += dims[c]
            idx = idx * dims[c] + cc
        state[u] = state[idx]
    return state


# ---------------------------------------------------------------------------
# grid cluster labeling and crossing search


@njit(cache=True)
def label_grid(mask, dims, offsets):
    """Union-find component labels of True sites under the given adjacency.

    mask: flat uint8 over a box with shape dims; offsets: (K, d) neighbor
    offsets (full symmetric set; only lexicographically-backward ones are
    used during the sweep).  Returns a flat int32 array: -1 on False sites,
    otherwise the flat index of the component's root site.
    """
    n = mask.shape[0]
    d = dims.shape[0]
    K = offsets.shape[0]
    parent = np.full(n, np.int32(-1))
    coords = np.zeros(d, np.int64)
    for u in range(n):
        if mask[u] == 0:
            continue
        parent[u] = u
        rem = u
        for c in range(d - 1, -1, -1):
            coords[c] = rem % dims[c]
            rem //= dims[c]
        for k in range(K):
            # only neighbors that precede u in the sweep
            back = False
            for c in range(d):
                o = offsets[k, c]
                if o < 0:
                    back = True
                    break
                if o > 0:
                    break
            if not back:
                continue
            vidx = np.int64(0)
            ok = True
            for c in range(d):
                cc = coords[c] + offsets[k, c]
                if cc < 0 or cc >= dims[c]:
                    ok = False
                    break
                vidx = vidx * dims[c] + cc
            if not ok or mask[vidx] == 0:
                continue
            # union roots of u and vidx
            ru = u
            while parent[ru] != ru:
                ru = parent[ru]
            rv = np.int64(vidx)
            while parent[rv] != rv:
                rv = parent[rv]
            if ru != rv:
                if ru < rv:
                    parent[rv] = ru
                else:
                    parent[ru] = rv
    for u in range(n):
        if parent[u] < 0:
            continue
        r = u
        while parent[r] != r:
            r = parent[r]
        i = u
        while parent[i] != r:
            nxt = parent[i]
            parent[i] = np.int32(r)
            i = nxt
    return parent


@njit(cache=True)
def crossing_bfs(good, seeds_mask, targets_mask, dims, offsets):
    """True iff a path of `good` sites joins a good seed site to a good target.

    All masks are flat uint8 over the dims box; adjacency from offsets.
    """
    n = good.shape[0]
    d = dims.shape[0]
    K = offsets.shape[0]
    seen = np.zeros(n, np.uint8)
    queue = np.empty(n, np.int64)
    qn = 0
    for u in range(n):
        if good[u] != 0 and seeds_mask[u] != 0:
            if targets_mask[u] != 0:
                return True
            seen[u] = 1
            queue[qn] = u
            qn += 1
    head = 0
    coords = np.zeros(d, np.int64)
    while head < qn:
        u = queue[head]
        head += 1
        rem = u
        for c in range(d - 1, -1, -1):
            coords[c] = rem % dims[c]
            rem //= dims[c]
        for k in range(K):
            vidx = np.int64(0)
            ok = True
            for c in range(d):
                cc = coords[c] + offsets[k, c]
                if cc < 0 or cc >= dims[c]:
                    ok = False
                    break
                vidx = vidx * dims[c] + cc
            if not ok or seen[vidx] != 0 or good[vidx] == 0:
                continue
            if targets_mask[vidx] != 0:
                return True
            seen[vidx] = 1
            queue[qn] = vidx
            qn += 1
    return False
