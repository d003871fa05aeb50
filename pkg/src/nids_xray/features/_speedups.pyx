# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statistics kernel.

Mirrors ``_kernel_py.PacketStatsKernel`` operation for operation so the
two backends produce bit-identical rows; keep the implementations in
sync when touching either.
"""

from libc.math cimport NAN, fabs, log, pow, sqrt

cdef int NL = 5
cdef double LAMBDAS_C[5]
LAMBDAS_C[0] = 5.0
LAMBDAS_C[1] = 3.0
LAMBDAS_C[2] = 1.0
LAMBDAS_C[3] = 0.1
LAMBDAS_C[4] = 0.01

EVICT_HALF_LIVES = 128.0
EVICT_IDLE_SECONDS = 128.0 * log(2.0) / 0.01


cdef class _Stream:
    cdef double w[5]
    cdef double ls[5]
    cdef double ss[5]
    cdef double last_res[5]
    cdef double t_last

    def __cinit__(self):
        cdef int k
        for k in range(NL):
            self.w[k] = 0.0
            self.ls[k] = 0.0
            self.ss[k] = 0.0
            self.last_res[k] = 0.0
        self.t_last = NAN


cdef class _Pair:
    cdef double sr[5]
    cdef double t_sr

    def __cinit__(self):
        cdef int k
        for k in range(NL):
            self.sr[k] = 0.0
        self.t_sr = NAN


cdef void _insert_1d(_Stream st, double t, double v):
    cdef double tl = st.t_last
    cdef double dt = t - tl if tl == tl else 0.0
    cdef double g
    cdef int k
    if dt > 0.0:
        for k in range(NL):
            g = pow(2.0, -LAMBDAS_C[k] * dt)
            st.w[k] = st.w[k] * g + 1.0
            st.ls[k] = st.ls[k] * g + v
            st.ss[k] = st.ss[k] * g + v * v
    else:
        for k in range(NL):
            st.w[k] += 1.0
            st.ls[k] += v
            st.ss[k] += v * v
    st.t_last = t


cdef void _read_1d(_Stream st, double[::1] out, int off):
    cdef double wk, m, var
    cdef int k
    for k in range(NL):
        wk = st.w[k]
        if wk > 0.0:
            m = st.ls[k] / wk
            var = st.ss[k] / wk - m * m
        else:
            m = 0.0
            var = 0.0
        out[off] = wk
        out[off + 1] = m
        out[off + 2] = sqrt(fabs(var))
        off += 3


cdef void _decay_to(_Stream st, double t):
    cdef double tl = st.t_last
    cdef double dt = t - tl if tl == tl else 0.0
    cdef double g
    cdef int k
    if dt > 0.0:
        for k in range(NL):
            g = pow(2.0, -LAMBDAS_C[k] * dt)
            st.w[k] *= g
            st.ls[k] *= g
            st.ss[k] *= g
        st.t_last = t


cdef void _insert_2d(_Stream st_i, _Stream st_j, _Pair pr, double t, double v):
    _insert_1d(st_i, t, v)
    if st_j is not None:
        _decay_to(st_j, t)
    cdef double tp = pr.t_sr
    cdef double dtp = t - tp if tp == tp else 0.0
    cdef double r, lrj
    cdef int k
    for k in range(NL):
        r = v - st_i.ls[k] / st_i.w[k]
        lrj = st_j.last_res[k] if st_j is not None else 0.0
        if dtp > 0.0:
            pr.sr[k] = pr.sr[k] * pow(2.0, -LAMBDAS_C[k] * dtp) + r * lrj
        else:
            pr.sr[k] += r * lrj
        st_i.last_res[k] = r
    pr.t_sr = t


cdef void _read_2d(_Stream st_i, _Stream st_j, _Pair pr, double[::1] out, int off):
    cdef double wi, mi, vi, si, wj, mj, vj, sj, cov, den, pcc
    cdef int k
    for k in range(NL):
        wi = st_i.w[k]
        mi = st_i.ls[k] / wi
        vi = fabs(st_i.ss[k] / wi - mi * mi)
        si = sqrt(vi)
        if st_j is not None and st_j.w[k] > 0.0:
            wj = st_j.w[k]
            mj = st_j.ls[k] / wj
            vj = fabs(st_j.ss[k] / wj - mj * mj)
            sj = sqrt(vj)
        else:
            wj = 0.0
            mj = 0.0
            vj = 0.0
            sj = 0.0
        cov = pr.sr[k] / (wi + wj)
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
        out[off + 3] = sqrt(vi * vi + vj * vj)
        out[off + 4] = sqrt(mi * mi + mj * mj)
        out[off + 5] = cov
        out[off + 6] = pcc
        off += 7


cdef class PacketStatsKernel:
    cdef dict _mi, _h, _hh, _hh_pairs, _jit, _hp, _hp_pairs
    cdef public long clock_regressions
    cdef double _t_high

    def __cinit__(self):
        self._mi = {}
        self._h = {}
        self._hh = {}
        self._hh_pairs = {}
        self._jit = {}
        self._hp = {}
        self._hp_pairs = {}
        self.clock_regressions = 0
        self._t_high = NAN

    @property
    def backend(self):
        return "compiled"

    def process(self, ts, src_mac, src_ip, dst_ip, src_port, dst_port, frame_len, double[::1] out):
        cdef double t = ts
        cdef double v = frame_len
        cdef double high = self._t_high
        if high == high and t < high:
            self.clock_regressions += 1
        else:
            self._t_high = t

        cdef _Stream st, st_j
        cdef _Pair pr
        cdef double tl, gap
        cdef object obj, key, fwd, rev, pkey

        key = (src_mac, src_ip)
        obj = self._mi.get(key)
        if obj is None:
            st = _Stream()
            self._mi[key] = st
        else:
            st = <_Stream> obj
        _insert_1d(st, t, v)
        _read_1d(st, out, 0)

        obj = self._h.get(src_ip)
        if obj is None:
            st = _Stream()
            self._h[src_ip] = st
        else:
            st = <_Stream> obj
        _insert_1d(st, t, v)
        _read_1d(st, out, 15)

        fwd = (src_ip, dst_ip)
        rev = (dst_ip, src_ip)
        obj = self._hh.get(fwd)
        if obj is None:
            st = _Stream()
            self._hh[fwd] = st
        else:
            st = <_Stream> obj
        obj = self._hh.get(rev)
        st_j = <_Stream> obj if obj is not None else None
        pkey = fwd if fwd <= rev else rev
        obj = self._hh_pairs.get(pkey)
        if obj is None:
            pr = _Pair()
            self._hh_pairs[pkey] = pr
        else:
            pr = <_Pair> obj
        _insert_2d(st, st_j, pr, t, v)
        _read_2d(st, st_j, pr, out, 30)

        obj = self._jit.get(fwd)
        if obj is None:
            st = _Stream()
            self._jit[fwd] = st
        else:
            st = <_Stream> obj
        tl = st.t_last
        gap = t - tl if tl == tl else 0.0
        if gap < 0.0:
            gap = 0.0
        _insert_1d(st, t, gap)
        _read_1d(st, out, 65)

        fwd = (src_ip, src_port, dst_ip, dst_port)
        rev = (dst_ip, dst_port, src_ip, src_port)
        obj = self._hp.get(fwd)
        if obj is None:
            st = _Stream()
            self._hp[fwd] = st
        else:
            st = <_Stream> obj
        obj = self._hp.get(rev)
        st_j = <_Stream> obj if obj is not None else None
        pkey = fwd if fwd <= rev else rev
        obj = self._hp_pairs.get(pkey)
        if obj is None:
            pr = _Pair()
            self._hp_pairs[pkey] = pr
        else:
            pr = <_Pair> obj
        _insert_2d(st, st_j, pr, t, v)
        _read_2d(st, st_j, pr, out, 80)

    def sweep(self, double now, double idle_limit=EVICT_IDLE_SECONDS):
        cdef int removed = 0
        cdef list stale
        cdef _Stream st
        cdef _Pair pr
        for table in (self._mi, self._h, self._hh, self._jit, self._hp):
            stale = []
            for k, obj in (<dict> table).items():
                st = <_Stream> obj
                if now - st.t_last > idle_limit:
                    stale.append(k)
            for k in stale:
                del (<dict> table)[k]
            removed += len(stale)
        for table in (self._hh_pairs, self._hp_pairs):
            stale = []
            for k, obj in (<dict> table).items():
                pr = <_Pair> obj
                if now - pr.t_sr > idle_limit:
                    stale.append(k)
            for k in stale:
                del (<dict> table)[k]
            removed += len(stale)
        return removed

    def stream_count(self):
        return (
            len(self._mi)
            + len(self._h)
            + len(self._hh)
            + len(self._jit)
            + len(self._hp)
            + len(self._hh_pairs)
            + len(self._hp_pairs)
        )
