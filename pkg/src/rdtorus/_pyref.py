"""Pure-Python event-driven chain engine (reference implementation).

This is the fallback twin of the compiled kernel in _speed.pyx.  Both
consume the Philox stream through the same protocol (three uniforms per
event: waiting time, class pick, member pick), walk rate classes in the
same order, and apply the same single-site update sequence, so a fixed
(seed, replica) key produces the identical trajectory on either engine.

Rate classes: one indexed set of discordant generator edges (each edge
(x, axis) at rate n^2), one set of occupied sites (death rate 1), and one
set per diagonal-pair count m of empty sites (birth rate 1 + lam * m).
"""

from __future__ import annotations

import math

import numpy as np


class IndexedSet:
    """O(1) add/remove/uniform-pick over a fixed universe of ints."""

    __slots__ = ("members", "pos", "count")

    def __init__(self, universe: int):
        self.members = np.empty(universe, dtype=np.int64)
        self.pos = np.full(universe, -1, dtype=np.int64)
        self.count = 0

    def add(self, item: int) -> None:
        if self.pos[item] >= 0:
            return
        self.members[self.count] = item
        self.pos[item] = self.count
        self.count += 1

    def remove(self, item: int) -> None:
        p = self.pos[item]
        if p < 0:
            return
        last = self.members[self.count - 1]
        self.members[p] = last
        self.pos[last] = p
        self.pos[item] = -1
        self.count -= 1

    def get(self, idx: int) -> int:
        return int(self.members[idx])


class _RateState:
    """Discordant-edge set and birth-death rate classes, updated locally."""

    def __init__(self, eta, nbr, d, n, lam):
        self.eta = eta
        self.nbr = nbr
        self.d = d
        self.lam = lam
        N = eta.shape[0]
        self.N = N
        self.edges = IndexedSet(N * d)
        # site classes: 0 = occupied; 1 + m = empty with m diagonal pairs
        self.nclasses = d + 2
        self.rates = np.array([1.0] + [1.0 + lam * m for m in range(d + 1)])
        self.site_class = np.full(N, -1, dtype=np.int64)
        self.classes = [IndexedSet(N) for _ in range(self.nclasses)]
        for x in range(N):
            self._place_site(x)
            for j in range(d):
                self._update_edge(x, j)

    def _class_of(self, x: int) -> int:
        if self.eta[x]:
            return 0
        m = 0
        for j in range(self.d):
            m += int(self.eta[self.nbr[x, 2 * j]]) * int(self.eta[self.nbr[x, 2 * j + 1]])
        return 1 + m

    def _place_site(self, x: int) -> None:
        c = self._class_of(x)
        old = self.site_class[x]
        if old == c:
            return
        if old >= 0:
            self.classes[old].remove(x)
        self.classes[c].add(x)
        self.site_class[x] = c

    def _update_edge(self, x: int, j: int) -> None:
        e = x * self.d + j
        if self.eta[x] != self.eta[self.nbr[x, 2 * j]]:
            self.edges.add(e)
        else:
            self.edges.remove(e)

    def after_bit_change(self, w: int) -> None:
        """Refresh classes of w and its neighbors, and the 2d incident edges."""
        self._place_site(w)
        for j in range(self.d):
            self._place_site(self.nbr[w, 2 * j])
            self._place_site(self.nbr[w, 2 * j + 1])
            self._update_edge(w, j)
            self._update_edge(self.nbr[w, 2 * j + 1], j)

    def flip_total_rate(self) -> float:
        total = 0.0
        for c in range(self.nclasses):
            total += self.classes[c].count * self.rates[c]
        return total


class _Accum:
    """Maintained integrand values and their exact piecewise time integrals (d=1).

    light=True keeps the field tables only for fresh snapshots of X and
    skips every per-event decomposition accumulator.
    """

    def __init__(self, n, rho, lam, fs, polys, light=False):
        self.n = n
        self.rho = rho
        self.lam = lam
        self.fs = fs  # field spec dict or None
        self.polys = polys  # list of poly spec dicts
        self.light = light
        self.inv_sqrt_n = 1.0 / math.sqrt(n)
        M = 0 if fs is None else fs["f"].shape[0]
        P = len(polys)
        self.M, self.P = M, P
        self.J = np.zeros(M)
        self.S1 = np.zeros(M)
        self.S2 = np.zeros(M)
        self.Glin = np.zeros(M)
        self.Gqa = np.zeros(M)
        self.Gqb = np.zeros(M)
        self.Gqc = np.zeros(M)
        self.Q1 = np.zeros(M)
        self.Q2 = np.zeros(M)
        self.V = np.zeros(P)
        self.I_dir = np.zeros(M)
        self.I_dyn = np.zeros(M)
        self.I_q1 = np.zeros(M)
        self.I_q2 = np.zeros(M)
        self.I_V = np.zeros(P)

    # -- full recomputation (used at start and at sample boundaries) -------
    def refresh(self, eta) -> None:
        if self.fs is not None and not self.light:
            fs = self.fs
            e = eta.astype(np.float64)
            eb = e - self.rho
            eb1 = np.roll(eb, 1)
            eb2 = np.roll(eb, 2)
            c = e + (1.0 - e) * (1.0 + self.lam * np.roll(e, 1) * np.roll(e, -1))
            self.S1[:] = fs["grad"] @ (e - np.roll(e, -1))
            self.S2[:] = fs["f"] @ (c * (1.0 - 2.0 * e))
            self.Glin[:] = fs["lin"] @ eb
            self.Gqa[:] = fs["qa"] @ (eb1 * eb)
            self.Gqb[:] = fs["qb"] @ (eb2 * eb)
            self.Gqc[:] = fs["qc"] @ (eb2 * eb1 * eb)
            discord = (eta != np.roll(eta, -1)).astype(np.float64)
            self.Q1[:] = fs["qexc"] @ discord
            self.Q2[:] = fs["qreac"] @ c
        for p, spec in enumerate(self.polys):
            eb = eta.astype(np.float64) - self.rho
            total = 0.0
            for coeff, offs in zip(spec["coeffs"], spec["offsets"]):
                prod = np.ones(self.n)
                for b in offs:
                    prod = prod * np.roll(eb, -int(b))
                total += coeff * float(spec["weights"] @ prod)
            self.V[p] = total

    # -- integrand values ---------------------------------------------------
    def drift_direct(self, m: int) -> float:
        n = self.n
        return n * n * self.inv_sqrt_n * self.S1[m] + self.inv_sqrt_n * self.S2[m]

    def drift_dynkin(self, m: int) -> float:
        fs = self.fs
        return self.inv_sqrt_n * (
            self.Glin[m] + self.Gqa[m] + self.Gqb[m] + self.Gqc[m] + fs["const"][m]
        )

    def advance(self, dt: float) -> None:
        if dt == 0.0:
            return
        for m in range(0 if self.light else self.M):
            self.I_dir[m] += self.drift_direct(m) * dt
            self.I_dyn[m] += self.drift_dynkin(m) * dt
            self.I_q1[m] += self.Q1[m] * dt
            self.I_q2[m] += self.Q2[m] * dt
        for p in range(self.P):
            self.I_V[p] += self.V[p] * dt

    # -- single-site update (flips eta[w] itself) ---------------------------
    def apply_site(self, eta, w: int) -> None:
        n = self.n
        lam, rho = self.lam, self.rho
        b_old = int(eta[w])
        delta = 1.0 - 2.0 * b_old
        wl, wr = (w - 1) % n, (w + 1) % n

        if self.fs is not None and not self.light:
            fs = self.fs
            locs = (wl, w, wr)
            old_ct = [self._cterm(eta, x) for x in locs]
            old_c = [self._crate(eta, x) for x in locs]
            old_d1 = 1.0 if eta[wl] != eta[w] else 0.0
            old_d2 = 1.0 if eta[w] != eta[wr] else 0.0
            eta[w] ^= 1
            new_ct = [self._cterm(eta, x) for x in locs]
            new_c = [self._crate(eta, x) for x in locs]
            new_d1 = 1.0 if eta[wl] != eta[w] else 0.0
            new_d2 = 1.0 if eta[w] != eta[wr] else 0.0
            wll, wrr = (w - 2) % n, (w + 2) % n
            eb = lambda z: float(eta[z]) - rho
            for m in range(self.M):
                self.J[m] += self.inv_sqrt_n * fs["f"][m, w] * delta
                self.S1[m] += delta * (fs["grad"][m, w] - fs["grad"][m, wl])
                for i in range(3):
                    self.S2[m] += fs["f"][m, locs[i]] * (new_ct[i] - old_ct[i])
                    self.Q2[m] += fs["qreac"][m, locs[i]] * (new_c[i] - old_c[i])
                self.Glin[m] += fs["lin"][m, w] * delta
                self.Gqa[m] += delta * (fs["qa"][m, w] * eb(wl) + fs["qa"][m, wr] * eb(wr))
                self.Gqb[m] += delta * (fs["qb"][m, w] * eb(wll) + fs["qb"][m, wrr] * eb(wrr))
                self.Gqc[m] += delta * (
                    fs["qc"][m, w] * eb(wll) * eb(wl)
                    + fs["qc"][m, wr] * eb(wl) * eb(wr)
                    + fs["qc"][m, wrr] * eb(wr) * eb(wrr)
                )
                self.Q1[m] += fs["qexc"][m, wl] * (new_d1 - old_d1) + fs["qexc"][m, w] * (
                    new_d2 - old_d2
                )
        else:
            eta[w] ^= 1

        if self.P:
            eb = lambda z: float(eta[z]) - rho
            for p, spec in enumerate(self.polys):
                wvec = spec["weights"]
                dv = 0.0
                for coeff, offs in zip(spec["coeffs"], spec["offsets"]):
                    for a in offs:
                        x = (w - int(a)) % n
                        prod = 1.0
                        for b in offs:
                            if b != a:
                                prod *= eb((x + int(b)) % n)
                        dv += coeff * wvec[x] * prod
                self.V[p] += delta * dv

    def _cterm(self, eta, x: int) -> float:
        # c_x (1 - 2 eta_x) = (1-eta_x)(1 + lam eta_{x-1} eta_{x+1}) - eta_x
        n = self.n
        e = float(eta[x])
        pair = float(eta[(x - 1) % n]) * float(eta[(x + 1) % n])
        return (1.0 - e) * (1.0 + self.lam * pair) - e

    def _crate(self, eta, x: int) -> float:
        n = self.n
        e = float(eta[x])
        pair = float(eta[(x - 1) % n]) * float(eta[(x + 1) % n])
        return e + (1.0 - e) * (1.0 + self.lam * pair)


def run_chain(
    eta0,
    nbr,
    d,
    n,
    lam,
    rho,
    sample_times,
    seed_key,
    field_spec=None,
    poly_specs=None,
    record_events=False,
    want_eta_samples=False,
    field_mode="full",
):
    """Run one trajectory; see engine.run_chain_raw for the public contract."""
    rng = np.random.Generator(np.random.Philox(key=np.array(seed_key, dtype=np.uint64)))
    eta = np.array(eta0, dtype=np.uint8)
    N = eta.shape[0]
    n2 = float(n) * float(n)
    S = len(sample_times)
    polys = poly_specs or []
    acc = _Accum(n, rho, lam, field_spec, polys, light=(field_mode == "sample-only"))
    acc.refresh(eta)
    rates = _RateState(eta, nbr, d, n, lam)
    M, P = acc.M, acc.P

    out_X = np.zeros((S, M))
    out_J = np.zeros((S, M))
    out_Ddir = np.zeros((S, M))
    out_Ddyn = np.zeros((S, M))
    out_Q1 = np.zeros((S, M))
    out_Q2 = np.zeros((S, M))
    out_V = np.zeros((S, P))
    out_particles = np.zeros(S, dtype=np.int64)
    eta_samples = np.zeros((S, N), dtype=np.uint8) if want_eta_samples else None
    flips_per_site = np.zeros(N, dtype=np.int64)
    occ_int = np.zeros(N)
    last_change = np.zeros(N)
    ev_t, ev_kind, ev_site, ev_axis = [], [], [], []
    n_ex = n_up = n_down = 0

    inv_sqrt_n = 1.0 / math.sqrt(n)
    T_end = float(sample_times[-1])
    t = 0.0  # integrated-up-to time
    si = 0

    def snapshot(i):
        if M:
            eb = eta.astype(np.float64) - rho
            out_X[i, :] = inv_sqrt_n * (field_spec["f"] @ eb)
            out_J[i, :] = acc.J
            out_Ddir[i, :] = acc.I_dir
            out_Ddyn[i, :] = acc.I_dyn
            out_Q1[i, :] = acc.I_q1
            out_Q2[i, :] = acc.I_q2
        if P:
            out_V[i, :] = acc.I_V
        out_particles[i] = int(eta.sum())
        if eta_samples is not None:
            eta_samples[i, :] = eta
        acc.refresh(eta)  # kill float drift in the maintained sums

    while si < S:
        R_ex = n2 * rates.edges.count
        R_fl = rates.flip_total_rate()
        R = R_ex + R_fl
        u1 = rng.random()
        t_next = t + (-math.log(u1) / R)
        while si < S and sample_times[si] <= t_next:
            acc.advance(sample_times[si] - t)
            t = float(sample_times[si])
            snapshot(si)
            si += 1
        if si >= S or t_next > T_end:
            break
        acc.advance(t_next - t)
        t = t_next

        u2 = rng.random()
        r = u2 * R
        if r < R_ex and rates.edges.count > 0:
            u3 = rng.random()
            idx = int(u3 * rates.edges.count)
            if idx >= rates.edges.count:
                idx = rates.edges.count - 1
            e = rates.edges.get(idx)
            x, axis = e // d, e % d
            y = int(nbr[x, 2 * axis])
            for w in (x, y):
                occ_int[w] += float(eta[w]) * (t - last_change[w])
                last_change[w] = t
                acc.apply_site(eta, w)
                rates.after_bit_change(w)
            n_ex += 1
            if record_events:
                ev_t.append(t)
                ev_kind.append(0)
                ev_site.append(x)
                ev_axis.append(axis)
        else:
            r -= R_ex
            chosen = -1
            for c in range(rates.nclasses):
                block = rates.classes[c].count * rates.rates[c]
                if r < block and rates.classes[c].count > 0:
                    chosen = c
                    break
                r -= block
            if chosen < 0:  # numerical spill: last nonempty class
                for c in range(rates.nclasses - 1, -1, -1):
                    if rates.classes[c].count > 0:
                        chosen = c
                        break
            u3 = rng.random()
            cnt = rates.classes[chosen].count
            idx = int(u3 * cnt)
            if idx >= cnt:
                idx = cnt - 1
            w = rates.classes[chosen].get(idx)
            if eta[w]:
                n_down += 1
            else:
                n_up += 1
            flips_per_site[w] += 1
            occ_int[w] += float(eta[w]) * (t - last_change[w])
            last_change[w] = t
            acc.apply_site(eta, w)
            rates.after_bit_change(w)
            if record_events:
                ev_t.append(t)
                ev_kind.append(1)
                ev_site.append(w)
                ev_axis.append(-1)

    occ_int += eta.astype(np.float64) * (T_end - last_change)

    out = {
        "t": np.array(sample_times, dtype=np.float64),
        "X": out_X,
        "J": out_J,
        "Ddir": out_Ddir,
        "Ddyn": out_Ddyn,
        "Qexc": out_Q1,
        "Qreac": out_Q2,
        "P": out_V,
        "particles": out_particles,
        "site_occupancy_integral": occ_int,
        "flips_per_site": flips_per_site,
        "exchange_count": n_ex,
        "flip_up_count": n_up,
        "flip_down_count": n_down,
        "eta_final": eta.copy(),
    }
    if eta_samples is not None:
        out["eta_samples"] = eta_samples
    if record_events:
        out["events_t"] = np.array(ev_t, dtype=np.float64)
        out["events_kind"] = np.array(ev_kind, dtype=np.int8)
        out["events_site"] = np.array(ev_site, dtype=np.int32)
        out["events_axis"] = np.array(ev_axis, dtype=np.int8)
    return out
