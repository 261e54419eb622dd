# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event-driven chain engine (hot kernel).

Mirrors rdtorus._pyref operation-for-operation: the same Philox draw
protocol, the same rate-class walk order, and the same update sequence,
so trajectories under a fixed (seed, replica) key are identical across
engines.  See _pyref.py for the readable reference.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, sqrt
from numpy.random cimport bitgen_t

cnp.import_array()


cdef inline long wrap(long z, long n) nogil:
    z = z % n
    if z < 0:
        z += n
    return z


cdef inline long iset_add(long[::1] members, long[::1] pos, long count, long item) nogil:
    if pos[item] >= 0:
        return count
    members[count] = item
    pos[item] = count
    return count + 1


cdef inline long iset_remove(long[::1] members, long[::1] pos, long count, long item) nogil:
    cdef long p = pos[item]
    cdef long last
    if p < 0:
        return count
    last = members[count - 1]
    members[p] = last
    pos[last] = p
    pos[item] = -1
    return count - 1


cdef inline int class_of(cnp.uint8_t[::1] eta, cnp.int32_t[:, ::1] nbr, int d, long x) nogil:
    cdef int m = 0
    cdef int j
    if eta[x]:
        return 0
    for j in range(d):
        m += eta[nbr[x, 2 * j]] * eta[nbr[x, 2 * j + 1]]
    return 1 + m


cdef inline double cterm(cnp.uint8_t[::1] eta, long x, long n, double lam) nogil:
    # c_x (1 - 2 eta_x) = (1 - eta_x)(1 + lam eta_{x-1} eta_{x+1}) - eta_x
    cdef double e = eta[x]
    cdef double pair = eta[wrap(x - 1, n)] * eta[wrap(x + 1, n)]
    return (1.0 - e) * (1.0 + lam * pair) - e


cdef inline double crate(cnp.uint8_t[::1] eta, long x, long n, double lam) nogil:
    cdef double e = eta[x]
    cdef double pair = eta[wrap(x - 1, n)] * eta[wrap(x + 1, n)]
    return e + (1.0 - e) * (1.0 + lam * pair)


cdef struct RateBook:
    long edge_count


cdef long _move_site(long[:, ::1] cls_members, long[:, ::1] cls_pos, long[::1] cls_count,
                     long[::1] site_class, int newc, long x) nogil:
    cdef long old = site_class[x]
    if old == newc:
        return 0
    if old >= 0:
        cls_count[old] = iset_remove(cls_members[old], cls_pos[old], cls_count[old], x)
    cls_count[newc] = iset_add(cls_members[newc], cls_pos[newc], cls_count[newc], x)
    site_class[x] = newc
    return 0


cdef long _after_bit_change(cnp.uint8_t[::1] eta, cnp.int32_t[:, ::1] nbr, int d, long w,
                            long[:, ::1] cls_members, long[:, ::1] cls_pos,
                            long[::1] cls_count, long[::1] site_class,
                            long[::1] edge_members, long[::1] edge_pos,
                            long edge_count) nogil:
    """Refresh classes of w and its neighbors and the 2d incident edges."""
    cdef int j
    cdef long xx, e
    _move_site(cls_members, cls_pos, cls_count, site_class,
               class_of(eta, nbr, d, w), w)
    for j in range(d):
        xx = nbr[w, 2 * j]
        _move_site(cls_members, cls_pos, cls_count, site_class,
                   class_of(eta, nbr, d, xx), xx)
        xx = nbr[w, 2 * j + 1]
        _move_site(cls_members, cls_pos, cls_count, site_class,
                   class_of(eta, nbr, d, xx), xx)
        e = w * d + j
        if eta[w] != eta[nbr[w, 2 * j]]:
            edge_count = iset_add(edge_members, edge_pos, edge_count, e)
        else:
            edge_count = iset_remove(edge_members, edge_pos, edge_count, e)
        xx = nbr[w, 2 * j + 1]
        e = xx * d + j
        if eta[xx] != eta[nbr[xx, 2 * j]]:
            edge_count = iset_add(edge_members, edge_pos, edge_count, e)
        else:
            edge_count = iset_remove(edge_members, edge_pos, edge_count, e)
    return edge_count


def run_chain(
    eta0,
    nbr_in,
    int d,
    long n,
    double lam,
    double rho,
    sample_times,
    seed_key,
    field_spec=None,
    poly_specs=None,
    record_events=False,
    want_eta_samples=False,
    field_mode="full",
):
    """Run one trajectory; see engine.run_chain_raw for the public contract.

    field_mode "sample-only" skips the per-event decomposition accumulators
    and reports only fresh field values at the sample times (J, Ddir, Ddyn
    and the quadratic-variation integrals come back as zeros).
    """
    cdef long Mwork_flag = 0 if field_mode == "sample-only" else 1
    cdef cnp.uint8_t[::1] eta = np.array(eta0, dtype=np.uint8)
    cdef cnp.int32_t[:, ::1] nbr = np.ascontiguousarray(nbr_in, dtype=np.int32)
    cdef long N = eta.shape[0]
    cdef double n2 = (<double> n) * (<double> n)
    cdef double inv_sqrt_n = 1.0 / sqrt(<double> n)
    cdef double[::1] st = np.ascontiguousarray(sample_times, dtype=np.float64)
    cdef long S = st.shape[0]
    cdef double T_end = st[S - 1]

    # RNG: counter-based stream keyed by (seed, replica)
    bitgen_obj = np.random.Philox(key=np.array(seed_key, dtype=np.uint64))
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bitgen_obj.capsule, "BitGenerator")

    # rate classes
    cdef int nclasses = d + 2
    cdef double[::1] class_rate = np.array([1.0] + [1.0 + lam * m for m in range(d + 1)])
    cdef long[:, ::1] cls_members = np.empty((nclasses, N), dtype=np.int64)
    cdef long[:, ::1] cls_pos = np.full((nclasses, N), -1, dtype=np.int64)
    cdef long[::1] cls_count = np.zeros(nclasses, dtype=np.int64)
    cdef long[::1] site_class = np.full(N, -1, dtype=np.int64)
    cdef long[::1] edge_members = np.empty(N * d, dtype=np.int64)
    cdef long[::1] edge_pos = np.full(N * d, -1, dtype=np.int64)
    cdef long edge_count = 0

    cdef long x, e, w, y
    cdef int j, c
    for x in range(N):
        c = class_of(eta, nbr, d, x)
        cls_count[c] = iset_add(cls_members[c], cls_pos[c], cls_count[c], x)
        site_class[x] = c
        for j in range(d):
            if eta[x] != eta[nbr[x, 2 * j]]:
                edge_count = iset_add(edge_members, edge_pos, edge_count, x * d + j)

    # field / polynomial accumulators (d = 1 only)
    cdef long M = 0, P = 0
    cdef double[:, ::1] tf, tgrad, tqexc, tqreac, tlin, tqa, tqb, tqc
    cdef double[::1] tconst
    empty2 = np.zeros((0, 1))
    empty1 = np.zeros(0)
    if field_spec is not None:
        tf = np.ascontiguousarray(field_spec["f"])
        tgrad = np.ascontiguousarray(field_spec["grad"])
        tqexc = np.ascontiguousarray(field_spec["qexc"])
        tqreac = np.ascontiguousarray(field_spec["qreac"])
        tlin = np.ascontiguousarray(field_spec["lin"])
        tqa = np.ascontiguousarray(field_spec["qa"])
        tqb = np.ascontiguousarray(field_spec["qb"])
        tqc = np.ascontiguousarray(field_spec["qc"])
        tconst = np.ascontiguousarray(field_spec["const"])
        M = tf.shape[0]
    else:
        tf = tgrad = tqexc = tqreac = tlin = tqa = tqb = tqc = empty2
        tconst = empty1
    cdef double[::1] aJ = np.zeros(M), aS1 = np.zeros(M), aS2 = np.zeros(M)
    cdef double[::1] aGlin = np.zeros(M), aGqa = np.zeros(M)
    cdef double[::1] aGqb = np.zeros(M), aGqc = np.zeros(M)
    cdef double[::1] aQ1 = np.zeros(M), aQ2 = np.zeros(M)
    cdef double[::1] iDir = np.zeros(M), iDyn = np.zeros(M)
    cdef double[::1] iQ1 = np.zeros(M), iQ2 = np.zeros(M)

    # polynomial observables, padded rectangular
    cdef double[:, ::1] pw
    cdef double[:, ::1] pcoef
    cdef long[:, :, ::1] poffs
    cdef long[:, ::1] parity
    cdef long[::1] pterms
    cdef long tmax, amax
    polys = poly_specs or []
    P = len(polys)
    if P:
        tmax = max(len(spec["coeffs"]) for spec in polys)
        amax = max(max(len(o) for o in spec["offsets"]) for spec in polys)
        pw_np = np.zeros((P, n))
        pcoef_np = np.zeros((P, tmax))
        poffs_np = np.zeros((P, tmax, amax), dtype=np.int64)
        parity_np = np.zeros((P, tmax), dtype=np.int64)
        pterms_np = np.zeros(P, dtype=np.int64)
        for ip, spec in enumerate(polys):
            pw_np[ip, :] = spec["weights"]
            nt = len(spec["coeffs"])
            pterms_np[ip] = nt
            pcoef_np[ip, :nt] = spec["coeffs"]
            for it, offs in enumerate(spec["offsets"]):
                parity_np[ip, it] = len(offs)
                poffs_np[ip, it, : len(offs)] = offs
        pw = pw_np; pcoef = pcoef_np; poffs = poffs_np
        parity = parity_np; pterms = pterms_np
    else:
        pw = empty2; pcoef = empty2
        poffs = np.zeros((0, 1, 1), dtype=np.int64)
        parity = np.zeros((0, 1), dtype=np.int64)
        pterms = np.zeros(0, dtype=np.int64)
    cdef double[::1] aV = np.zeros(P), iV = np.zeros(P)

    # outputs
    out_X_np = np.zeros((S, M)); out_J_np = np.zeros((S, M))
    out_Ddir_np = np.zeros((S, M)); out_Ddyn_np = np.zeros((S, M))
    out_Q1_np = np.zeros((S, M)); out_Q2_np = np.zeros((S, M))
    out_V_np = np.zeros((S, P))
    out_particles_np = np.zeros(S, dtype=np.int64)
    cdef double[:, ::1] out_X = out_X_np, out_J = out_J_np
    cdef double[:, ::1] out_Ddir = out_Ddir_np, out_Ddyn = out_Ddyn_np
    cdef double[:, ::1] out_Q1 = out_Q1_np, out_Q2 = out_Q2_np
    cdef double[:, ::1] out_V = out_V_np
    cdef long[::1] out_particles = out_particles_np
    eta_samples_np = np.zeros((S, N), dtype=np.uint8) if want_eta_samples else None
    cdef cnp.uint8_t[:, ::1] eta_samples
    cdef bint want_eta = 1 if want_eta_samples else 0
    if want_eta_samples:
        eta_samples = eta_samples_np
    flips_np = np.zeros(N, dtype=np.int64)
    cdef long[::1] flips_per_site = flips_np
    occ_np = np.zeros(N)
    last_np = np.zeros(N)
    cdef double[::1] occ_int = occ_np
    cdef double[::1] last_change = last_np
    cdef long n_ex = 0, n_up = 0, n_down = 0

    cdef bint rec = 1 if record_events else 0
    cdef long ev_cap = 65536 if rec else 0
    ev_t_np = np.empty(ev_cap); ev_kind_np = np.empty(ev_cap, dtype=np.int8)
    ev_site_np = np.empty(ev_cap, dtype=np.int32); ev_axis_np = np.empty(ev_cap, dtype=np.int8)
    cdef double[::1] ev_t = ev_t_np
    cdef cnp.int8_t[::1] ev_kind = ev_kind_np
    cdef cnp.int32_t[::1] ev_site = ev_site_np
    cdef cnp.int8_t[::1] ev_axis = ev_axis_np
    cdef long ev_n = 0

    # main loop
    cdef double t = 0.0, t_next, u1, u2, u3, r, R, R_ex, R_fl, block, val
    cdef long si = 0, idx, kk, xx, m, ii, x_ev
    cdef int chosen, axis_ev

    cdef long Mwork = M * Mwork_flag
    _refresh(eta, n, N, rho, lam, Mwork, tf, tgrad, tqexc, tqreac, tlin, tqa, tqb, tqc,
             aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
             P, pw, pcoef, poffs, parity, pterms, aV)

    while si < S:
        R_ex = n2 * edge_count
        R_fl = 0.0
        for c in range(nclasses):
            R_fl += cls_count[c] * class_rate[c]
        R = R_ex + R_fl
        u1 = rng.next_double(rng.state)
        t_next = t + (-log(u1) / R)
        while si < S and st[si] <= t_next:
            _advance(st[si] - t, n, inv_sqrt_n, Mwork, tconst,
                     aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
                     iDir, iDyn, iQ1, iQ2, P, aV, iV)
            t = st[si]
            for m in range(M):
                val = 0.0
                for xx in range(n):
                    val += tf[m, xx] * ((<double> eta[xx]) - rho)
                out_X[si, m] = inv_sqrt_n * val
                out_J[si, m] = aJ[m]
                out_Ddir[si, m] = iDir[m]
                out_Ddyn[si, m] = iDyn[m]
                out_Q1[si, m] = iQ1[m]
                out_Q2[si, m] = iQ2[m]
            for ii in range(P):
                out_V[si, ii] = iV[ii]
            kk = 0
            for xx in range(N):
                kk += eta[xx]
            out_particles[si] = kk
            if want_eta:
                for xx in range(N):
                    eta_samples[si, xx] = eta[xx]
            _refresh(eta, n, N, rho, lam, Mwork, tf, tgrad, tqexc, tqreac, tlin, tqa, tqb, tqc,
                     aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
                     P, pw, pcoef, poffs, parity, pterms, aV)
            si += 1
        if si >= S or t_next > T_end:
            break
        _advance(t_next - t, n, inv_sqrt_n, Mwork, tconst,
                 aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
                 iDir, iDyn, iQ1, iQ2, P, aV, iV)
        t = t_next

        u2 = rng.next_double(rng.state)
        r = u2 * R
        if r < R_ex and edge_count > 0:
            u3 = rng.next_double(rng.state)
            idx = <long> (u3 * edge_count)
            if idx >= edge_count:
                idx = edge_count - 1
            e = edge_members[idx]
            x_ev = e / d
            axis_ev = <int> (e % d)
            y = nbr[x_ev, 2 * axis_ev]
            for kk in range(2):
                w = x_ev if kk == 0 else y
                occ_int[w] += (<double> eta[w]) * (t - last_change[w])
                last_change[w] = t
                _apply_site(eta, w, n, rho, lam, inv_sqrt_n,
                            Mwork, tf, tgrad, tqexc, tqreac, tlin, tqa, tqb, tqc,
                            aJ, aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
                            P, pw, pcoef, poffs, parity, pterms, aV)
                edge_count = _after_bit_change(
                    eta, nbr, d, w, cls_members, cls_pos, cls_count, site_class,
                    edge_members, edge_pos, edge_count)
            n_ex += 1
            if rec:
                if ev_n >= ev_cap:
                    ev_cap *= 2
                    ev_t_np = np.resize(ev_t_np, ev_cap); ev_t = ev_t_np
                    ev_kind_np = np.resize(ev_kind_np, ev_cap); ev_kind = ev_kind_np
                    ev_site_np = np.resize(ev_site_np, ev_cap); ev_site = ev_site_np
                    ev_axis_np = np.resize(ev_axis_np, ev_cap); ev_axis = ev_axis_np
                ev_t[ev_n] = t
                ev_kind[ev_n] = 0
                ev_site[ev_n] = <cnp.int32_t> x_ev
                ev_axis[ev_n] = <cnp.int8_t> axis_ev
                ev_n += 1
        else:
            r -= R_ex
            chosen = -1
            for c in range(nclasses):
                block = cls_count[c] * class_rate[c]
                if r < block and cls_count[c] > 0:
                    chosen = c
                    break
                r -= block
            if chosen < 0:
                for c in range(nclasses - 1, -1, -1):
                    if cls_count[c] > 0:
                        chosen = c
                        break
            u3 = rng.next_double(rng.state)
            idx = <long> (u3 * cls_count[chosen])
            if idx >= cls_count[chosen]:
                idx = cls_count[chosen] - 1
            w = cls_members[chosen, idx]
            if eta[w]:
                n_down += 1
            else:
                n_up += 1
            flips_per_site[w] += 1
            occ_int[w] += (<double> eta[w]) * (t - last_change[w])
            last_change[w] = t
            _apply_site(eta, w, n, rho, lam, inv_sqrt_n,
                        Mwork, tf, tgrad, tqexc, tqreac, tlin, tqa, tqb, tqc,
                        aJ, aS1, aS2, aGlin, aGqa, aGqb, aGqc, aQ1, aQ2,
                        P, pw, pcoef, poffs, parity, pterms, aV)
            edge_count = _after_bit_change(
                eta, nbr, d, w, cls_members, cls_pos, cls_count, site_class,
                edge_members, edge_pos, edge_count)
            if rec:
                if ev_n >= ev_cap:
                    ev_cap *= 2
                    ev_t_np = np.resize(ev_t_np, ev_cap); ev_t = ev_t_np
                    ev_kind_np = np.resize(ev_kind_np, ev_cap); ev_kind = ev_kind_np
                    ev_site_np = np.resize(ev_site_np, ev_cap); ev_site = ev_site_np
                    ev_axis_np = np.resize(ev_axis_np, ev_cap); ev_axis = ev_axis_np
                ev_t[ev_n] = t
                ev_kind[ev_n] = 1
                ev_site[ev_n] = <cnp.int32_t> w
                ev_axis[ev_n] = -1
                ev_n += 1

    for xx in range(N):
        occ_int[xx] += (<double> eta[xx]) * (T_end - last_change[xx])

    out = {
        "t": np.array(st, dtype=np.float64),
        "X": out_X_np, "J": out_J_np,
        "Ddir": out_Ddir_np, "Ddyn": out_Ddyn_np,
        "Qexc": out_Q1_np, "Qreac": out_Q2_np,
        "P": out_V_np,
        "particles": out_particles_np,
        "site_occupancy_integral": occ_np,
        "flips_per_site": flips_np,
        "exchange_count": n_ex,
        "flip_up_count": n_up,
        "flip_down_count": n_down,
        "eta_final": np.array(eta, dtype=np.uint8),
    }
    if want_eta_samples:
        out["eta_samples"] = eta_samples_np
    if rec:
        out["events_t"] = ev_t_np[:ev_n].copy()
        out["events_kind"] = ev_kind_np[:ev_n].copy()
        out["events_site"] = ev_site_np[:ev_n].copy()
        out["events_axis"] = ev_axis_np[:ev_n].copy()
    return out


cdef void _refresh(cnp.uint8_t[::1] eta, long n, long N, double rho, double lam,
                   long M, double[:, ::1] tf, double[:, ::1] tgrad,
                   double[:, ::1] tqexc, double[:, ::1] tqreac,
                   double[:, ::1] tlin, double[:, ::1] tqa,
                   double[:, ::1] tqb, double[:, ::1] tqc,
                   double[::1] aS1, double[::1] aS2,
                   double[::1] aGlin, double[::1] aGqa, double[::1] aGqb, double[::1] aGqc,
                   double[::1] aQ1, double[::1] aQ2,
                   long P, double[:, ::1] pw, double[:, ::1] pcoef,
                   long[:, :, ::1] poffs, long[:, ::1] parity, long[::1] pterms,
                   double[::1] aV) nogil:
    cdef long m, x, p, it, ib
    cdef double s1, s2, gl, ga, gb, gc, q1, q2, ebx, eb1, eb2, prod, tot
    for m in range(M):
        s1 = 0.0; s2 = 0.0; gl = 0.0; ga = 0.0; gb = 0.0; gc = 0.0; q1 = 0.0; q2 = 0.0
        for x in range(n):
            ebx = (<double> eta[x]) - rho
            eb1 = (<double> eta[wrap(x - 1, n)]) - rho
            eb2 = (<double> eta[wrap(x - 2, n)]) - rho
            s1 += tgrad[m, x] * ((<double> eta[x]) - (<double> eta[wrap(x + 1, n)]))
            s2 += tf[m, x] * cterm(eta, x, n, lam)
            gl += tlin[m, x] * ebx
            ga += tqa[m, x] * eb1 * ebx
            gb += tqb[m, x] * eb2 * ebx
            gc += tqc[m, x] * eb2 * eb1 * ebx
            if eta[x] != eta[wrap(x + 1, n)]:
                q1 += tqexc[m, x]
            q2 += tqreac[m, x] * crate(eta, x, n, lam)
        aS1[m] = s1; aS2[m] = s2
        aGlin[m] = gl; aGqa[m] = ga; aGqb[m] = gb; aGqc[m] = gc
        aQ1[m] = q1; aQ2[m] = q2
    for p in range(P):
        tot = 0.0
        for it in range(pterms[p]):
            for x in range(n):
                prod = 1.0
                for ib in range(parity[p, it]):
                    prod *= (<double> eta[wrap(x + poffs[p, it, ib], n)]) - rho
                tot += pcoef[p, it] * pw[p, x] * prod
        aV[p] = tot


cdef void _advance(double dt, long n, double inv_sqrt_n, long M, double[::1] tconst,
                   double[::1] aS1, double[::1] aS2,
                   double[::1] aGlin, double[::1] aGqa, double[::1] aGqb, double[::1] aGqc,
                   double[::1] aQ1, double[::1] aQ2,
                   double[::1] iDir, double[::1] iDyn, double[::1] iQ1, double[::1] iQ2,
                   long P, double[::1] aV, double[::1] iV) nogil:
    cdef long m, p
    cdef double nn = (<double> n) * (<double> n)
    if dt == 0.0:
        return
    for m in range(M):
        iDir[m] += (nn * inv_sqrt_n * aS1[m] + inv_sqrt_n * aS2[m]) * dt
        iDyn[m] += (inv_sqrt_n * (aGlin[m] + aGqa[m] + aGqb[m] + aGqc[m] + tconst[m])) * dt
        iQ1[m] += aQ1[m] * dt
        iQ2[m] += aQ2[m] * dt
    for p in range(P):
        iV[p] += aV[p] * dt


cdef void _apply_site(cnp.uint8_t[::1] eta, long w, long n, double rho, double lam,
                      double inv_sqrt_n,
                      long M, double[:, ::1] tf, double[:, ::1] tgrad,
                      double[:, ::1] tqexc, double[:, ::1] tqreac,
                      double[:, ::1] tlin, double[:, ::1] tqa,
                      double[:, ::1] tqb, double[:, ::1] tqc,
                      double[::1] aJ, double[::1] aS1, double[::1] aS2,
                      double[::1] aGlin, double[::1] aGqa, double[::1] aGqb, double[::1] aGqc,
                      double[::1] aQ1, double[::1] aQ2,
                      long P, double[:, ::1] pw, double[:, ::1] pcoef,
                      long[:, :, ::1] poffs, long[:, ::1] parity, long[::1] pterms,
                      double[::1] aV) nogil:
    cdef long b_old = eta[w]
    cdef double delta = 1.0 - 2.0 * (<double> b_old)
    cdef long wl = wrap(w - 1, n), wr = wrap(w + 1, n)
    cdef long wll = wrap(w - 2, n), wrr = wrap(w + 2, n)
    cdef long m, p, it, ia, ib, x
    cdef double old_ct0, old_ct1, old_ct2, new_ct0, new_ct1, new_ct2
    cdef double old_c0, old_c1, old_c2, new_c0, new_c1, new_c2
    cdef double old_d1, old_d2, new_d1, new_d2
    cdef double dv, prod

    if M:
        old_ct0 = cterm(eta, wl, n, lam); old_ct1 = cterm(eta, w, n, lam); old_ct2 = cterm(eta, wr, n, lam)
        old_c0 = crate(eta, wl, n, lam); old_c1 = crate(eta, w, n, lam); old_c2 = crate(eta, wr, n, lam)
        old_d1 = 1.0 if eta[wl] != eta[w] else 0.0
        old_d2 = 1.0 if eta[w] != eta[wr] else 0.0
        eta[w] ^= 1
        new_ct0 = cterm(eta, wl, n, lam); new_ct1 = cterm(eta, w, n, lam); new_ct2 = cterm(eta, wr, n, lam)
        new_c0 = crate(eta, wl, n, lam); new_c1 = crate(eta, w, n, lam); new_c2 = crate(eta, wr, n, lam)
        new_d1 = 1.0 if eta[wl] != eta[w] else 0.0
        new_d2 = 1.0 if eta[w] != eta[wr] else 0.0
        for m in range(M):
            aJ[m] += inv_sqrt_n * tf[m, w] * delta
            aS1[m] += delta * (tgrad[m, w] - tgrad[m, wl])
            aS2[m] += tf[m, wl] * (new_ct0 - old_ct0)
            aS2[m] += tf[m, w] * (new_ct1 - old_ct1)
            aS2[m] += tf[m, wr] * (new_ct2 - old_ct2)
            aQ2[m] += tqreac[m, wl] * (new_c0 - old_c0)
            aQ2[m] += tqreac[m, w] * (new_c1 - old_c1)
            aQ2[m] += tqreac[m, wr] * (new_c2 - old_c2)
            aGlin[m] += tlin[m, w] * delta
            aGqa[m] += delta * (tqa[m, w] * ((<double> eta[wl]) - rho)
                                + tqa[m, wr] * ((<double> eta[wr]) - rho))
            aGqb[m] += delta * (tqb[m, w] * ((<double> eta[wll]) - rho)
                                + tqb[m, wrr] * ((<double> eta[wrr]) - rho))
            aGqc[m] += delta * (
                tqc[m, w] * ((<double> eta[wll]) - rho) * ((<double> eta[wl]) - rho)
                + tqc[m, wr] * ((<double> eta[wl]) - rho) * ((<double> eta[wr]) - rho)
                + tqc[m, wrr] * ((<double> eta[wr]) - rho) * ((<double> eta[wrr]) - rho))
            aQ1[m] += tqexc[m, wl] * (new_d1 - old_d1) + tqexc[m, w] * (new_d2 - old_d2)
    else:
        eta[w] ^= 1

    for p in range(P):
        dv = 0.0
        for it in range(pterms[p]):
            for ia in range(parity[p, it]):
                x = wrap(w - poffs[p, it, ia], n)
                prod = 1.0
                for ib in range(parity[p, it]):
                    if ib != ia:
                        prod *= (<double> eta[wrap(x + poffs[p, it, ib], n)]) - rho
                dv += pcoef[p, it] * pw[p, x] * prod
        aV[p] += delta * dv
