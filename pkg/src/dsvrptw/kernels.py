"""Hot numeric kernels: route scheduling, insertion scans, scenario simulation.

Everything here is nopython-compatible plain loops over numpy arrays; see
:mod:`dsvrptw._accel` for the jit/fallback switch.

Route encoding (one row per vehicle in the 2D variants):
  verts[i]    vertex id of planned visit i
  reloc[i]    1 for relocation waypoints (no window, no demand, no duration)
  minstart[i] earliest service start beyond the window (the request's reveal)
  cwait[i]    custom wait inserted before departure (custom-wait strategy)

Strategy codes: 0 drive-first, 1 wait-first, 2 custom-wait, 3 relocation-only.
Window/capacity comparisons carry a 1e-9 tolerance; boundary ties count as
feasible (closed intervals).
"""

from ._accel import maybe_njit

EPS = 1e-9
DF, WF, CW, RO = 0, 1, 2, 3

STRATEGY_CODES = {"DF": DF, "WF": WF, "CW": CW, "RO": RO}


@maybe_njit
def latest_starts(verts, reloc, n, travel, lw, dur, depot_close, out):
    # out[i] = latest service start (= latest arrival) at visit i that keeps
    # every later window and the depot return feasible.
    lim = depot_close
    nxt = 0
    for i in range(n - 1, -1, -1):
        v = verts[i]
        s = lim - travel[v, nxt]
        if reloc[i] == 0:
            s -= dur[v]
            if s > lw[v]:
                s = lw[v]
        out[i] = s
        lim = s
        nxt = v


@maybe_njit
def schedule_route(verts, reloc, minstart, cwait, n, pos0, free0, load0, ready,
                   travel, ew, lw, dur, dem, cap, depot_close, strategy,
                   lst, arr, sst, dep, dtw):
    """Schedule one route from state (pos0, free0, load0).

    ``ready`` floors the first (and every) departure: planned actions cannot
    predate the epoch the plan takes effect. Outputs are written to
    arr/sst/dep/dtw[0:n]; dtw[i] is the departure toward visit i. Returns
    (feasible, return_departure, return_arrival, load_end). The departure for
    the depot leg lingers at the last stop until the latest feasible time.
    """
    load = load0
    for i in range(n):
        if reloc[i] == 0:
            load += dem[verts[i]]
    if load > cap + EPS:
        return False, 0.0, 0.0, load
    t0 = free0 if free0 > ready else ready
    if n == 0:
        if pos0 == 0:
            return True, t0, t0, load
        tt = travel[pos0, 0]
        if t0 + tt > depot_close + EPS:
            return False, t0, t0 + tt, load
        d0 = depot_close - tt
        if d0 < t0:
            d0 = t0
        return True, d0, d0 + tt, load
    if strategy == WF or strategy == RO:
        latest_starts(verts, reloc, n, travel, lw, dur, depot_close, lst)
    cur = pos0
    t = t0
    for i in range(n):
        v = verts[i]
        tt = travel[cur, v]
        dprev = t
        if strategy == WF:
            target = lst[i] - tt
            if target > dprev:
                dprev = target
        dtw[i] = dprev
        a = dprev + tt
        arr[i] = a
        if reloc[i] == 0:
            s = a
            if ew[v] > s:
                s = ew[v]
            if minstart[i] > s:
                s = minstart[i]
            if s > lw[v] + EPS:
                return False, 0.0, 0.0, load
            e = s + dur[v]
        else:
            s = a
            e = a
        sst[i] = s
        d = e
        if strategy == CW:
            d = e + cwait[i]
        elif strategy == RO and reloc[i] == 1:
            if i + 1 < n:
                lim = lst[i + 1] - travel[v, verts[i + 1]]
            else:
                lim = depot_close - travel[v, 0]
            if lim > d:
                d = lim
        if i == n - 1:
            lim = depot_close - travel[v, 0]
            if lim > d:
                d = lim
        dep[i] = d
        t = d
        cur = v
    ret = t + travel[cur, 0]
    if ret > depot_close + EPS:
        return False, t, ret, load
    return True, t, ret, load


@maybe_njit
def fill_insertion(verts, reloc, minstart, cwait, head, length, slot, jv, jmin,
                   tverts, treloc, tminst, tcwait):
    # Copy the [head:length) suffix into scratch with (jv, jmin) inserted at
    # the absolute position ``slot``; returns the scratch length.
    m = 0
    for i in range(head, length + 1):
        if i == slot:
            tverts[m] = jv
            treloc[m] = 0
            tminst[m] = jmin
            tcwait[m] = 0.0
            m += 1
        if i < length:
            tverts[m] = verts[i]
            treloc[m] = reloc[i]
            tminst[m] = minstart[i]
            tcwait[m] = cwait[i]
            m += 1
    return m


@maybe_njit
def collect_insertions(verts2, reloc2, minst2, cwait2, lens, heads, closed,
                       pos, free, load, jv, jmin, ready,
                       travel, ew, lw, dur, dem, cap, depot_close, strategy,
                       tverts, treloc, tminst, tcwait, tlst, tarr, tsst, tdep, tdtw,
                       out_r, out_slot, out_cost):
    """All feasible insertion slots for vertex ``jv`` in scan order
    (vehicle ascending, slot ascending); returns the count."""
    k = lens.shape[0]
    cnt = 0
    for r in range(k):
        if closed[r] == 1:
            continue
        rdy = ready
        for slot in range(heads[r], lens[r] + 1):
            m = fill_insertion(verts2[r], reloc2[r], minst2[r], cwait2[r],
                               heads[r], lens[r], slot, jv, jmin,
                               tverts, treloc, tminst, tcwait)
            feas, _rd, _ra, _ld = schedule_route(
                tverts, treloc, tminst, tcwait, m, pos[r], free[r], load[r], rdy,
                travel, ew, lw, dur, dem, cap, depot_close, strategy,
                tlst, tarr, tsst, tdep, tdtw)
            if feas:
                if slot == heads[r]:
                    prev = pos[r]
                else:
                    prev = verts2[r, slot - 1]
                if slot == lens[r]:
                    nxt = 0
                else:
                    nxt = verts2[r, slot]
                out_r[cnt] = r
                out_slot[cnt] = slot
                out_cost[cnt] = travel[prev, jv] + travel[jv, nxt] - travel[prev, nxt]
                cnt += 1
    return cnt


@maybe_njit
def simulate_pool(bverts, breloc, bminst, bcwait, blens, bclosed,
                  pos0, free0, load0, ready0, walk_start,
                  srev_v, srev_t, soff,
                  travel, ew, lw, dur, dem, cap, depot_close, strategy,
                  wverts, wreloc, wminst, wcwait, lens, heads, closed,
                  pos, free, load, rdep,
                  arr2, sst2, dep2, dtw2,
                  tverts, treloc, tminst, tcwait, tlst, tarr, tsst, tdep, tdtw,
                  out_rej):
    """Greedy per-scenario simulation of the plan against every scenario.

    For each scenario: replay epochs from ``walk_start``; visits whose
    departure already happened are frozen into the vehicle state; each
    sampled reveal is inserted at its cheapest feasible position (lowest
    vehicle id, earliest slot on ties) or counted as a rejection. Earlier
    actions are never revised, so scenarios sharing a reveal prefix share the
    simulated action prefix. Returns 0, or -1 if the base plan itself does
    not schedule.
    """
    k = blens.shape[0]
    for r in range(k):
        feas, _rd, _ra, _ld = schedule_route(
            bverts[r], breloc[r], bminst[r], bcwait[r], blens[r],
            pos0[r], free0[r], load0[r], ready0,
            travel, ew, lw, dur, dem, cap, depot_close, strategy,
            tlst, tarr, tsst, tdep, tdtw)
        if not feas:
            return -1
    nscen = soff.shape[0] - 1
    for s in range(nscen):
        for r in range(k):
            length = blens[r]
            for i in range(length):
                wverts[r, i] = bverts[r, i]
                wreloc[r, i] = breloc[r, i]
                wminst[r, i] = bminst[r, i]
                wcwait[r, i] = bcwait[r, i]
            lens[r] = length
            heads[r] = 0
            closed[r] = bclosed[r]
            pos[r] = pos0[r]
            free[r] = free0[r]
            load[r] = load0[r]
            _f, rd, _ra, _ld = schedule_route(
                wverts[r], wreloc[r], wminst[r], wcwait[r], length,
                pos[r], free[r], load[r], ready0,
                travel, ew, lw, dur, dem, cap, depot_close, strategy,
                tlst, arr2[r], sst2[r], dep2[r], dtw2[r])
            rdep[r] = rd
        rej = 0
        idx = soff[s]
        hi = soff[s + 1]
        while idx < hi:
            te = srev_t[idx]
            if te < walk_start:
                idx += 1
                continue
            tef = float(te)
            for r in range(k):
                while heads[r] < lens[r] and dtw2[r, heads[r]] < tef - EPS:
                    h = heads[r]
                    v = wverts[r, h]
                    if wreloc[r, h] == 1:
                        # the waypoint arrival commits, but the visit is only
                        # consumed at its (postponed) departure; until then the
                        # vehicle is parked on it and the linger stays revisable
                        if dep2[r, h] >= tef - EPS:
                            if pos[r] != v:
                                pos[r] = v
                                free[r] = arr2[r, h]
                            break
                        pos[r] = v
                        free[r] = dep2[r, h]
                    else:
                        pos[r] = v
                        free[r] = sst2[r, h] + dur[v]
                        load[r] += dem[v]
                    heads[r] += 1
                if (heads[r] == lens[r] and closed[r] == 0 and pos[r] != 0
                        and rdep[r] < tef - EPS):
                    closed[r] = 1
                    pos[r] = 0
            while idx < hi and srev_t[idx] == te:
                jv = srev_v[idx]
                best_cost = 1e18
                best_r = -1
                best_slot = -1
                for r in range(k):
                    if closed[r] == 1:
                        continue
                    for slot in range(heads[r], lens[r] + 1):
                        m = fill_insertion(wverts[r], wreloc[r], wminst[r], wcwait[r],
                                           heads[r], lens[r], slot, jv, tef,
                                           tverts, treloc, tminst, tcwait)
                        feas, _rd, _ra, _ld = schedule_route(
                            tverts, treloc, tminst, tcwait, m,
                            pos[r], free[r], load[r], tef,
                            travel, ew, lw, dur, dem, cap, depot_close, strategy,
                            tlst, tarr, tsst, tdep, tdtw)
                        if feas:
                            if slot == heads[r]:
                                prev = pos[r]
                            else:
                                prev = wverts[r, slot - 1]
                            if slot == lens[r]:
                                nxt = 0
                            else:
                                nxt = wverts[r, slot]
                            cost = (travel[prev, jv] + travel[jv, nxt]
                                    - travel[prev, nxt])
                            if cost < best_cost - EPS:
                                best_cost = cost
                                best_r = r
                                best_slot = slot
                if best_r >= 0:
                    r = best_r
                    for i in range(lens[r], best_slot, -1):
                        wverts[r, i] = wverts[r, i - 1]
                        wreloc[r, i] = wreloc[r, i - 1]
                        wminst[r, i] = wminst[r, i - 1]
                        wcwait[r, i] = wcwait[r, i - 1]
                    wverts[r, best_slot] = jv
                    wreloc[r, best_slot] = 0
                    wminst[r, best_slot] = tef
                    wcwait[r, best_slot] = 0.0
                    lens[r] += 1
                    h = heads[r]
                    length = lens[r]
                    _f, rd, _ra, _ld = schedule_route(
                        wverts[r, h:length], wreloc[r, h:length],
                        wminst[r, h:length], wcwait[r, h:length], length - h,
                        pos[r], free[r], load[r], tef,
                        travel, ew, lw, dur, dem, cap, depot_close, strategy,
                        tlst, arr2[r, h:length], sst2[r, h:length],
                        dep2[r, h:length], dtw2[r, h:length])
                    rdep[r] = rd
                else:
                    rej += 1
                idx += 1
        out_rej[s] = rej
    return 0
