"""Compiled rotation search for the user/time-slot matching.

Every player holds exactly one slot. Players ``0..n-1`` are users, the rest
are dummies parked on empty slots (slot -1 marks a dummy with no empty slot
left). Per-slot bookkeeping is kept incremental:

* ``cnt[x]``     users in slot x
* ``ps[x]``      sum of pairwise cross influence inside slot x
* ``acc[u, x]``  cross influence between user u and the users of slot x (u excluded)
* ``fc[u, x]``   forbidden partners of u among the users of slot x
"""
from __future__ import annotations

import numba as nb
import numpy as np

_JIT = dict(cache=True, nogil=True)


@nb.njit(**_JIT)
def slot_value(count, pairsum, eps):
    if count == 0:
        return 0.0
    if count == 1:
        return eps
    return 2.0 * pairsum / count


@nb.njit(**_JIT)
def build_state(slot, n, n_slots, forb, infl):
    cnt = np.zeros(n_slots, np.int64)
    ps = np.zeros(n_slots)
    acc = np.zeros((n, n_slots))
    fc = np.zeros((n, n_slots), np.int64)
    for u in range(n):
        cnt[slot[u]] += 1
    for u in range(n):
        x = slot[u]
        for w in range(n):
            if w != u:
                acc[w, x] += infl[x, w, u]
                if forb[x, w, u]:
                    fc[w, x] += 1
    for u in range(n):
        for w in range(u + 1, n):
            if slot[u] == slot[w]:
                ps[slot[u]] += infl[slot[u], u, w]
    return cnt, ps, acc, fc


@nb.njit(**_JIT)
def total_value(cnt, ps, eps):
    tot = 0.0
    for x in range(cnt.shape[0]):
        tot += slot_value(cnt[x], ps[x], eps)
    return tot


@nb.njit(**_JIT)
def eval_shift(members, L, l, slot, n, forb, infl, cnt, ps, acc, fc, eps):
    """Return (valid, changed, delta) of shifting ``members`` by ``l``."""
    os = np.empty(L, np.int64)
    ns = np.empty(L, np.int64)
    mv = np.zeros(L, np.bool_)
    nmov = 0
    for t in range(L):
        if slot[members[t]] < 0:
            return False, False, 0.0
    for t in range(L):
        os[t] = slot[members[t]]
        ns[t] = slot[members[(t + l) % L]]
        if members[t] < n and ns[t] != os[t]:
            mv[t] = True
            nmov += 1
    if nmov == 0:
        return True, False, 0.0
    aff = np.empty(2 * L, np.int64)
    naff = 0
    for t in range(L):
        if mv[t]:
            for x in (os[t], ns[t]):
                seen = False
                for a in range(naff):
                    if aff[a] == x:
                        seen = True
                if not seen:
                    aff[naff] = x
                    naff += 1
    delta = 0.0
    for a in range(naff):
        x = aff[a]
        p = ps[x]
        nout = 0
        nin = 0
        for t in range(L):
            if not mv[t]:
                continue
            u = members[t]
            if os[t] == x:
                nout += 1
                p -= acc[u, x]
                for t2 in range(t + 1, L):
                    if mv[t2] and os[t2] == x:
                        p += infl[x, u, members[t2]]
            elif ns[t] == x:
                nin += 1
                p += acc[u, x]
                f = fc[u, x]
                for t2 in range(L):
                    if not mv[t2] or t2 == t:
                        continue
                    w = members[t2]
                    if os[t2] == x:
                        if forb[x, u, w]:
                            f -= 1
                        p -= infl[x, u, w]
                    elif ns[t2] == x:
                        if forb[x, u, w]:
                            f += 1
                        if t2 > t:
                            p += infl[x, u, w]
                if f > 0:
                    return False, True, 0.0
        delta += slot_value(cnt[x] - nout + nin, p, eps) - slot_value(cnt[x], ps[x], eps)
    return True, True, delta


@nb.njit(**_JIT)
def _move(u, b, slot, n, forb, infl, cnt, ps, acc, fc):
    a = slot[u]
    if u < n:
        ps[a] -= acc[u, a]
        cnt[a] -= 1
        for w in range(n):
            if w != u:
                acc[w, a] -= infl[a, w, u]
                if forb[a, w, u]:
                    fc[w, a] -= 1
        ps[b] += acc[u, b]
        cnt[b] += 1
        for w in range(n):
            if w != u:
                acc[w, b] += infl[b, w, u]
                if forb[b, w, u]:
                    fc[w, b] += 1
    slot[u] = b


@nb.njit(**_JIT)
def apply_shift(members, L, l, slot, n, forb, infl, cnt, ps, acc, fc):
    targets = np.empty(L, np.int64)
    for t in range(L):
        targets[t] = slot[members[(t + l) % L]]
    for t in range(L):
        if targets[t] != slot[members[t]]:
            _move(members[t], targets[t], slot, n, forb, infl, cnt, ps, acc, fc)


@nb.njit(**_JIT)
def repark(slot, n, n_players, cnt):
    """Put the dummies back on the lowest-index empty slots."""
    x = 0
    for d in range(n, n_players):
        while x < cnt.shape[0] and cnt[x] > 0:
            x += 1
        if x < cnt.shape[0]:
            slot[d] = x
            x += 1
        else:
            slot[d] = -1


@nb.njit(**_JIT)
def best_shift(members, L, slot, n, forb, infl, cnt, ps, acc, fc, eps, tol):
    """Optimal admissible proper shift (0 when the status quo is optimal)."""
    best_l = 0
    best_d = 0.0
    for l in range(1, L):
        ok, changed, d = eval_shift(members, L, l, slot, n, forb, infl, cnt, ps, acc, fc, eps)
        if ok and changed and (best_l == 0 or d < best_d):
            best_l = l
            best_d = d
    if best_l > 0 and best_d < -tol:
        return best_l, best_d
    return 0, 0.0


@nb.njit(**_JIT)
def _record(members, L, l, d, slot, n, tr_members, tr_size, tr_shift, tr_delta, n_tr):
    # dummies are logged as -(slot + 1) of the empty slot they stand for
    if n_tr >= tr_size.shape[0]:
        return
    for t in range(L):
        u = members[t]
        tr_members[n_tr, t] = u if u < n else -(slot[u] + 1)
    tr_size[n_tr] = L
    tr_shift[n_tr] = l
    tr_delta[n_tr] = d


@nb.njit(**_JIT)
def run_subsets(subsets, sizes, slot, n, forb, infl, cnt, ps, acc, fc, eps, tol,
                tr_members, tr_size, tr_shift, tr_delta, n_tr):
    """Try each given subset once, executing its optimal shift when it improves."""
    q = subsets.shape[1]
    members = np.empty(q, np.int64)
    for s in range(subsets.shape[0]):
        L = sizes[s]
        for t in range(L):
            members[t] = subsets[s, t]
        l, d = best_shift(members, L, slot, n, forb, infl, cnt, ps, acc, fc, eps, tol)
        if l > 0:
            _record(members, L, l, d, slot, n, tr_members, tr_size, tr_shift, tr_delta, n_tr)
            apply_shift(members, L, l, slot, n, forb, infl, cnt, ps, acc, fc)
            repark(slot, n, slot.shape[0], cnt)
            n_tr += 1
    return n_tr


@nb.njit(**_JIT)
def sweep(n_players, q_max, slot, n, forb, infl, cnt, ps, acc, fc, eps, tol,
          tr_members, tr_size, tr_shift, tr_delta, n_tr):
    """One lexicographic pass over all subsets of size 2..q_max, executing improvements in place."""
    idx = np.empty(q_max, np.int64)
    members = np.empty(q_max, np.int64)
    start = n_tr
    for L in range(2, min(q_max, n_players) + 1):
        for t in range(L):
            idx[t] = t
        while True:
            for t in range(L):
                members[t] = idx[t]
            l, d = best_shift(members, L, slot, n, forb, infl, cnt, ps, acc, fc, eps, tol)
            if l > 0:
                _record(members, L, l, d, slot, n, tr_members, tr_size, tr_shift, tr_delta, n_tr)
                apply_shift(members, L, l, slot, n, forb, infl, cnt, ps, acc, fc)
                repark(slot, n, n_players, cnt)
                n_tr += 1
            # next combination
            t = L - 1
            while t >= 0 and idx[t] == n_players - L + t:
                t -= 1
            if t < 0:
                break
            idx[t] += 1
            for t2 in range(t + 1, L):
                idx[t2] = idx[t2 - 1] + 1
    return n_tr, n_tr - start
