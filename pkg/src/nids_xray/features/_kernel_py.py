"""Pure-Python streaming statistics kernel.

Reference implementation of the per-packet update; the compiled kernel
in ``_speedups`` mirrors it operation for operation.  One kernel holds
every keyed stream; :meth:`PacketStatsKernel.process` folds a packet in
and writes the full 115-value row for that packet.

Per stream and per decay rate lambda the kernel keeps damped sums
(weight, linear sum, squared sum) that are multiplied by
``2**(-lambda*dt)`` before each contribution.  Directed stream pairs
additionally keep a damped sum of residual products: on insert, the
sender's residual (value minus post-insert mean) is multiplied by the
receiver's most recent residual, which is stored undamped.
"""

from __future__ import annotations

import math

from .names import LAMBDAS, N_FEATURES

_NL = len(LAMBDAS)
_LN2 = math.log(2.0)

# Streams idle longer than this many half-lives of the slowest decay
# rate carry a relative weight below 2**-128 and may be dropped.
EVICT_HALF_LIVES = 128.0
EVICT_IDLE_SECONDS = EVICT_HALF_LIVES * _LN2 / min(LAMBDAS)

_ZEROS = (0.0,) * _NL


class _Stream:
    """Damped sums for one directed stream, one slot per lambda."""

    __slots__ = ("w", "ls", "ss", "last_res", "t_last")

    def __init__(self):
        self.w = [0.0] * _NL
        self.ls = [0.0] * _NL
        self.ss = [0.0] * _NL
        self.last_res = [0.0] * _NL
        self.t_last = math.nan


class _Pair:
    """Damped residual-product sums for an unordered stream pair."""

    __slots__ = ("sr", "t_sr")

    def __init__(self):
        self.sr = [0.0] * _NL
        self.t_sr = math.nan


class PacketStatsKernel:
    backend = "python"

    def __init__(self):
        self._mi = {}
        self._h = {}
        self._hh = {}
        self._hh_pairs = {}
        self._jit = {}
        self._hp = {}
        self._hp_pairs = {}
        self.clock_regressions = 0
        self._t_high = math.nan

    # -- per-family primitives ------------------------------------------

    def _insert_1d(self, st: _Stream, t: float, v: float) -> None:
        tl = st.t_last
        w, ls, ss = st.w, st.ls, st.ss
        dt = t - tl if tl == tl else 0.0
        if dt > 0.0:
            for k in range(_NL):
                g = 2.0 ** (-LAMBDAS[k] * dt)
                w[k] = w[k] * g + 1.0
                ls[k] = ls[k] * g + v
                ss[k] = ss[k] * g + v * v
        else:
            for k in range(_NL):
                w[k] += 1.0
                ls[k] += v
                ss[k] += v * v
        st.t_last = t

    @staticmethod
    def _read_1d(st: _Stream, out, off: int) -> None:
        w, ls, ss = st.w, st.ls, st.ss
        for k in range(_NL):
            wk = w[k]
            if wk > 0.0:
                m = ls[k] / wk
                var = ss[k] / wk - m * m
            else:
                m = 0.0
                var = 0.0
            out[off] = wk
            out[off + 1] = m
            out[off + 2] = math.sqrt(abs(var))
            off += 3

    def _decay_to(self, st: _Stream, t: float) -> None:
        tl = st.t_last
        dt = t - tl if tl == tl else 0.0
        if dt > 0.0:
            w, ls, ss = st.w, st.ls, st.ss
            for k in range(_NL):
                g = 2.0 ** (-LAMBDAS[k] * dt)
                w[k] *= g
                ls[k] *= g
                ss[k] *= g
            st.t_last = t

    def _insert_2d(self, st_i: _Stream, st_j: _Stream | None, pr: _Pair, t: float, v: float) -> None:
        self._insert_1d(st_i, t, v)
        if st_j is not None:
            self._decay_to(st_j, t)
        tp = pr.t_sr
        dtp = t - tp if tp == tp else 0.0
        sr = pr.sr
        w, ls, lr = st_i.w, st_i.ls, st_i.last_res
        lrj = st_j.last_res if st_j is not None else _ZEROS
        for k in range(_NL):
            r = v - ls[k] / w[k]
            if dtp > 0.0:
                sr[k] = sr[k] * (2.0 ** (-LAMBDAS[k] * dtp)) + r * lrj[k]
            else:
                sr[k] += r * lrj[k]
            lr[k] = r
        pr.t_sr = t

    @staticmethod
    def _read_2d(st_i: _Stream, st_j: _Stream | None, pr: _Pair, out, off: int) -> None:
        sr = pr.sr
        for k in range(_NL):
            wi = st_i.w[k]
            mi = st_i.ls[k] / wi
            vi = abs(st_i.ss[k] / wi - mi * mi)
            si = math.sqrt(vi)
            if st_j is not None and st_j.w[k] > 0.0:
                wj = st_j.w[k]
                mj = st_j.ls[k] / wj
                vj = abs(st_j.ss[k] / wj - mj * mj)
                sj = math.sqrt(vj)
            else:
                wj = mj = vj = sj = 0.0
            cov = sr[k] / (wi + wj)
            den = si * sj
            if den == 0.0:
                pcc = 0.0
            else:
                pcc = cov / den
                if pcc > 1.0:
                    pcc = 1.0
                elif pcc < -1.0:
                    pcc = -1.0
            out[off] = wi
            out[off + 1] = mi
            out[off + 2] = si
            out[off + 3] = math.sqrt(vi * vi + vj * vj)
            out[off + 4] = math.sqrt(mi * mi + mj * mj)
            out[off + 5] = cov
            out[off + 6] = pcc
            off += 7

    # -- public interface -----------------------------------------------

    def process(self, ts, src_mac, src_ip, dst_ip, src_port, dst_port, frame_len, out) -> None:
        """Fold one packet in and write its 115 statistics into ``out``."""
        t = float(ts)
        v = float(frame_len)
        high = self._t_high
        if high == high and t < high:
            self.clock_regressions += 1
        else:
            self._t_high = t

        # MI_dir: sender MAC+IP, frame length
        key = (src_mac, src_ip)
        st = self._mi.get(key)
        if st is None:
            st = self._mi[key] = _Stream()
        self._insert_1d(st, t, v)
        self._read_1d(st, out, 0)

        # H: sender IP, frame length
        st = self._h.get(src_ip)
        if st is None:
            st = self._h[src_ip] = _Stream()
        self._insert_1d(st, t, v)
        self._read_1d(st, out, 15)

        # HH: IP pair, frame length, with reverse-direction coupling
        fwd = (src_ip, dst_ip)
        rev = (dst_ip, src_ip)
        st = self._hh.get(fwd)
        if st is None:
            st = self._hh[fwd] = _Stream()
        st_j = self._hh.get(rev)
        pkey = fwd if fwd <= rev else rev
        pr = self._hh_pairs.get(pkey)
        if pr is None:
            pr = self._hh_pairs[pkey] = _Pair()
        self._insert_2d(st, st_j, pr, t, v)
        self._read_2d(st, st_j, pr, out, 30)

        # HH_jit: IP pair, inter-arrival gap (0 on first sighting)
        st = self._jit.get(fwd)
        if st is None:
            st = self._jit[fwd] = _Stream()
        tl = st.t_last
        gap = t - tl if tl == tl else 0.0
        if gap < 0.0:
            gap = 0.0
        self._insert_1d(st, t, gap)
        self._read_1d(st, out, 65)

        # HpHp: socket pair, frame length, with reverse-direction coupling
        fwd4 = (src_ip, src_port, dst_ip, dst_port)
        rev4 = (dst_ip, dst_port, src_ip, src_port)
        st = self._hp.get(fwd4)
        if st is None:
            st = self._hp[fwd4] = _Stream()
        st_j = self._hp.get(rev4)
        pkey4 = fwd4 if fwd4 <= rev4 else rev4
        pr = self._hp_pairs.get(pkey4)
        if pr is None:
            pr = self._hp_pairs[pkey4] = _Pair()
        self._insert_2d(st, st_j, pr, t, v)
        self._read_2d(st, st_j, pr, out, 80)

    def sweep(self, now: float, idle_limit: float = EVICT_IDLE_SECONDS) -> int:
        """Drop streams idle longer than ``idle_limit`` seconds; returns the
        number of entries removed."""
        removed = 0
        for table in (self._mi, self._h, self._hh, self._jit, self._hp):
            stale = [k for k, st in table.items() if now - st.t_last > idle_limit]
            for k in stale:
                del table[k]
            removed += len(stale)
        for table in (self._hh_pairs, self._hp_pairs):
            stale = [k for k, pr in table.items() if now - pr.t_sr > idle_limit]
            for k in stale:
                del table[k]
            removed += len(stale)
        return removed

    def stream_count(self) -> int:
        return (
            len(self._mi)
            + len(self._h)
            + len(self._hh)
            + len(self._jit)
            + len(self._hp)
            + len(self._hh_pairs)
            + len(self._hp_pairs)
        )


assert N_FEATURES == 115
