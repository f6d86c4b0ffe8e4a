"""Banded-diagonal compiled kernels for whole-trajectory integration.

Every operator appearing in the scenarios (ladder operators, number
operators, Pauli matrices and their embeddings/products) has only a few
nonzero matrix diagonals in the natural product basis.  The integrators
exploit that: each operator is stored as a set of (offset, value-vector)
diagonals with ``val[i] = A[i, i + offset]``, and all superoperator
pieces reduce to O(d^2) passes per diagonal instead of O(d^3) matrix
products.  The decomposition is exact, so these kernels implement the
same update as :mod:`qzeno.dynamics.steps`, just faster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

MAX_DIAGONALS = 32


def banded_form(arr: np.ndarray):
    """Exact decomposition of a square matrix into its nonzero diagonals.

    Returns (offsets int64[m], values complex128[m, d]) with
    values[p, i] = arr[i, i + offsets[p]] (zero where out of range).
    """
    d = arr.shape[0]
    offs, vals = [], []
    for o in range(-(d - 1), d):
        diag = np.diagonal(arr, offset=o)
        if not np.any(diag != 0):
            continue
        v = np.zeros(d, dtype=np.complex128)
        if o >= 0:
            v[: d - o] = diag
        else:
            v[-o:] = diag
        offs.append(o)
        vals.append(v)
    if len(offs) > MAX_DIAGONALS:
        raise ValueError(
            f"operator has {len(offs)} nonzero diagonals; banded kernels support "
            f"up to {MAX_DIAGONALS} (use the dense reference steps instead)"
        )
    if not offs:  # zero operator
        return np.zeros(0, dtype=np.int64), np.zeros((0, d), dtype=np.complex128)
    return np.asarray(offs, dtype=np.int64), np.stack(vals)


def _stack(op_arrays, d):
    """Concatenate banded forms of several operators with an op-id per diagonal."""
    offs, vals, ids = [], [], []
    for i, arr in enumerate(op_arrays):
        o, v = banded_form(arr)
        offs.append(o)
        vals.append(v if v.size else v.reshape(0, d))
        ids.append(np.full(o.shape[0], i, dtype=np.int64))
    if not op_arrays:
        return (np.zeros(0, dtype=np.int64), np.zeros((0, d), dtype=np.complex128),
                np.zeros(0, dtype=np.int64))
    return np.concatenate(offs), np.concatenate(vals, axis=0), np.concatenate(ids)


# ---------------------------------------------------------------------------
# numba primitives


@nb.njit(cache=True)
def _acc_left(out, rho, off, val, c, d):
    # out += c * A @ rho for a single diagonal of A
    lo = 0 if off >= 0 else -off
    hi = d - off if off >= 0 else d
    for i in range(lo, hi):
        vv = c * val[i]
        if vv != 0:
            src = i + off
            for q in range(d):
                out[i, q] += vv * rho[src, q]


@nb.njit(cache=True)
def _acc_right(out, rho, off, val, c, d):
    # out += c * rho @ A
    jlo = off if off >= 0 else 0
    jhi = d if off >= 0 else d + off
    for i in range(d):
        for j in range(jlo, jhi):
            out[i, j] += c * val[j - off] * rho[i, j - off]


@nb.njit(cache=True)
def _acc_sandwich(out, rho, oa, va, ob, vb, c, d):
    # out += c * A @ rho @ B, B banded as B[m, m+ob] = vb[m]
    ilo = 0 if oa >= 0 else -oa
    ihi = d - oa if oa >= 0 else d
    jlo = ob if ob >= 0 else 0
    jhi = d if ob >= 0 else d + ob
    for i in range(ilo, ihi):
        vv = c * va[i]
        if vv != 0:
            src = i + oa
            for j in range(jlo, jhi):
                out[i, j] += vv * rho[src, j - ob] * vb[j - ob]


@nb.njit(cache=True)
def _band_trace(rho, off, val, d):
    # tr(A @ rho) contribution of one diagonal
    lo = 0 if off >= 0 else -off
    hi = d - off if off >= 0 else d
    acc = 0.0 + 0.0j
    for i in range(lo, hi):
        acc += val[i] * rho[i + off, i]
    return acc


@nb.njit(cache=True)
def _acc_mv(out, off, val, x, c, d):
    # out += c * A @ x
    lo = 0 if off >= 0 else -off
    hi = d - off if off >= 0 else d
    for i in range(lo, hi):
        out[i] += c * val[i] * x[i + off]


@nb.njit(cache=True)
def _coeff(p_term, t, lam, term_amp, term_cos, term_freq, term_coup):
    c = lam if term_coup[p_term] == 1 else term_amp[p_term]
    if term_cos[p_term] == 1:
        c = c * np.cos(term_freq[p_term] * t)
    return c


# --- upper-triangle variants (drift of a Hermitian rho is Hermitian, so the
#     fast path only computes entries with j >= i and mirrors) ---


@nb.njit(cache=True)
def _acc_left_u(out, rho, off, val, c, d):
    lo = 0 if off >= 0 else -off
    hi = d - off if off >= 0 else d
    for i in range(lo, hi):
        vv = c * val[i]
        if vv != 0:
            src = i + off
            for q in range(i, d):
                out[i, q] += vv * rho[src, q]


@nb.njit(cache=True)
def _acc_right_u(out, rho, off, val, c, d):
    jlo = off if off >= 0 else 0
    jhi = d if off >= 0 else d + off
    for i in range(d):
        lo = jlo if jlo > i else i
        for j in range(lo, jhi):
            out[i, j] += c * val[j - off] * rho[i, j - off]


@nb.njit(cache=True)
def _acc_sandwich_u(out, rho, oa, va, ob, vb, c, d):
    ilo = 0 if oa >= 0 else -oa
    ihi = d - oa if oa >= 0 else d
    jlo = ob if ob >= 0 else 0
    jhi = d if ob >= 0 else d + ob
    for i in range(ilo, ihi):
        vv = c * va[i]
        if vv != 0:
            src = i + oa
            lo = jlo if jlo > i else i
            for j in range(lo, jhi):
                out[i, j] += vv * rho[src, j - ob] * vb[j - ob]


@nb.njit(cache=True)
def _sme_drift_upper(rho, t, lam, out,
                     h_off, h_val, h_term, term_amp, term_cos, term_freq,
                     term_coup, xd, k,
                     c_off, c_val, c_op, cd_off, cd_val, cd_op,
                     cc_off, cc_val, cc_op, rates, d):
    # measurement dephasing for diagonal X: -k (x_i - x_j)^2 rho_ij
    for i in range(d):
        xi = xd[i]
        for j in range(i, d):
            w = xi - xd[j]
            out[i, j] = (-k * w * w) * rho[i, j]
    for p in range(h_off.shape[0]):
        c = _coeff(h_term[p], t, lam, term_amp, term_cos, term_freq, term_coup)
        if c != 0.0:
            _acc_left_u(out, rho, h_off[p], h_val[p], -1j * c, d)
            _acc_right_u(out, rho, h_off[p], h_val[p], 1j * c, d)
    for ic in range(rates.shape[0]):
        r = rates[ic]
        for p in range(c_off.shape[0]):
            if c_op[p] != ic:
                continue
            for q in range(cd_off.shape[0]):
                if cd_op[q] != ic:
                    continue
                _acc_sandwich_u(out, rho, c_off[p], c_val[p], cd_off[q],
                                cd_val[q], 2.0 * r + 0.0j, d)
        for p in range(cc_off.shape[0]):
            if cc_op[p] != ic:
                continue
            _acc_left_u(out, rho, cc_off[p], cc_val[p], -r + 0.0j, d)
            _acc_right_u(out, rho, cc_off[p], cc_val[p], -r + 0.0j, d)


@nb.njit(cache=True)
def _sme_drift(rho, t, lam, out,
               h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
               x_off, x_val, x2_off, x2_val, x_is_diag, xd, k,
               c_off, c_val, c_op, cd_off, cd_val, cd_op,
               cc_off, cc_val, cc_op, rates, d):
    if x_is_diag == 1:
        # -k (X^2 rho + rho X^2 - 2 X rho X) = -k (x_i - x_j)^2 rho_ij
        for i in range(d):
            xi = xd[i]
            for j in range(d):
                w = xi - xd[j]
                out[i, j] = (-k * w * w) * rho[i, j]
    else:
        for i in range(d):
            for j in range(d):
                out[i, j] = 0.0 + 0.0j
        for p in range(x2_off.shape[0]):
            _acc_left(out, rho, x2_off[p], x2_val[p], -k + 0.0j, d)
            _acc_right(out, rho, x2_off[p], x2_val[p], -k + 0.0j, d)
        for p in range(x_off.shape[0]):
            for q in range(x_off.shape[0]):
                _acc_sandwich(out, rho, x_off[p], x_val[p], x_off[q], x_val[q],
                              2.0 * k + 0.0j, d)
    for p in range(h_off.shape[0]):
        c = _coeff(h_term[p], t, lam, term_amp, term_cos, term_freq, term_coup)
        if c != 0.0:
            _acc_left(out, rho, h_off[p], h_val[p], -1j * c, d)
            _acc_right(out, rho, h_off[p], h_val[p], 1j * c, d)
    # dissipators: r (2 c rho c^dag - c^dag c rho - rho c^dag c)
    for ic in range(rates.shape[0]):
        r = rates[ic]
        for p in range(c_off.shape[0]):
            if c_op[p] != ic:
                continue
            for q in range(cd_off.shape[0]):
                if cd_op[q] != ic:
                    continue
                _acc_sandwich(out, rho, c_off[p], c_val[p], cd_off[q], cd_val[q],
                              2.0 * r + 0.0j, d)
        for p in range(cc_off.shape[0]):
            if cc_op[p] != ic:
                continue
            _acc_left(out, rho, cc_off[p], cc_val[p], -r + 0.0j, d)
            _acc_right(out, rho, cc_off[p], cc_val[p], -r + 0.0j, d)


@nb.njit(cache=True, inline="always")
def _flush_tiny(z):
    # values this small are pure roundoff tails of exponentially decayed
    # coherences; leaving them denormal stalls the arithmetic pipeline
    re = z.real
    im = z.imag
    if -1e-280 < re < 1e-280:
        re = 0.0
    if -1e-280 < im < 1e-280:
        im = 0.0
    return complex(re, im)


@nb.njit(cache=True, inline="always")
def _drift_row_upper(rho, out, i, d, xd, k, n_h, ch, h_off, h_val,
                     cc_off, cc_val, cc_coef,
                     sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val, cd_val):
    # one row (j >= i) of the Hermitian drift; out row stays cache-hot
    xi = xd[i]
    for j in range(i, d):
        w = xi - xd[j]
        out[i, j] = (-k * w * w) * rho[i, j]
    for p in range(n_h):
        c = ch[p]
        if c == 0:
            continue
        off = h_off[p]
        lo = 0 if off >= 0 else -off
        hi = d - off if off >= 0 else d
        if lo <= i < hi:
            vv = c * h_val[p, i]
            if vv != 0:
                src = i + off
                for j in range(i, d):
                    out[i, j] += vv * rho[src, j]
        jlo = off if off >= 0 else 0
        jhi = d if off >= 0 else d + off
        lo2 = jlo if jlo > i else i
        cr = -c  # right side of -i[H, rho] carries the opposite sign
        for j in range(lo2, jhi):
            out[i, j] += cr * h_val[p, j - off] * rho[i, j - off]
    for p in range(cc_off.shape[0]):
        coef = cc_coef[p]
        off = cc_off[p]
        lo = 0 if off >= 0 else -off
        hi = d - off if off >= 0 else d
        if lo <= i < hi:
            vv = coef * cc_val[p, i]
            if vv != 0:
                src = i + off
                for j in range(i, d):
                    out[i, j] += vv * rho[src, j]
        jlo = off if off >= 0 else 0
        jhi = d if off >= 0 else d + off
        lo2 = jlo if jlo > i else i
        for j in range(lo2, jhi):
            out[i, j] += coef * cc_val[p, j - off] * rho[i, j - off]
    for m in range(sw_oa.shape[0]):
        oa = sw_oa[m]
        ilo = 0 if oa >= 0 else -oa
        ihi = d - oa if oa >= 0 else d
        if not (ilo <= i < ihi):
            continue
        vv = sw_coef[m] * c_val[sw_a[m], i]
        if vv == 0:
            continue
        src = i + oa
        ob = sw_ob[m]
        jlo = ob if ob >= 0 else 0
        jhi = d if ob >= 0 else d + ob
        lo2 = jlo if jlo > i else i
        vb = cd_val[sw_b[m]]
        for j in range(lo2, jhi):
            out[i, j] += vv * rho[src, j - ob] * vb[j - ob]


@nb.njit(cache=True, inline="always")
def _pred_row(pred, rho, f1, dt, i, d):
    pred[i, i] = rho[i, i] + dt * f1[i, i]
    for j in range(i + 1, d):
        a = rho[i, j] + dt * f1[i, j]
        pred[i, j] = a
        pred[j, i] = np.conj(a)


@nb.njit(cache=True, inline="always")
def _combine_row(rho, f1, f2, dt, g, xd, xbar, i, d, trd_r, tr_r, herm_r, wit_r):
    xi = xd[i]
    inc = 0.5 * dt * (f1[i, i] + f2[i, i]) + (g * 2.0 * (xi - xbar)) * rho[i, i]
    trd_r[i] = inc
    aii = rho[i, i] + inc
    herm_r[i] = 2.0 * abs(aii.imag)
    rho[i, i] = aii.real + 0.0j
    tr_r[i] = aii.real
    wit_i = abs(aii.real) + abs(aii.imag)
    for j in range(i + 1, d):
        a = rho[i, j] + 0.5 * dt * (f1[i, j] + f2[i, j]) + (
            g * (xi + xd[j] - 2.0 * xbar)) * rho[i, j]
        a = _flush_tiny(a)
        rho[i, j] = a
        rho[j, i] = np.conj(a)
        wit_i += abs(a.real) + abs(a.imag)
    wit_r[i] = wit_i


@nb.njit(cache=True)
def _sme_kernel_large(rho, dt, n_steps, dW, lam_steps,
                      h_off, h_val, h_term, term_amp, term_cos, term_freq,
                      term_coup, xd, k,
                      cc_off, cc_val, cc_coef,
                      sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val, cd_val,
                      ob_off, ob_val, ob_op, ob2_off, ob2_val, ob2_op, n_obs,
                      leak_idx, leak_ptr, stride,
                      out_exp, out_var, out_rec, out_diag):
    """Heun + diagonal-X fast path for large spaces.

    Each pass fuses the banded drift with the predictor/update row by
    row so the working row stays cache-hot.  The trace is carried
    explicitly and the state is renormalized only at snapshots; the
    per-step trace increment is still recorded as a diagnostic.
    """
    d = rho.shape[0]
    f1 = np.zeros((d, d), dtype=np.complex128)
    f2 = np.zeros((d, d), dtype=np.complex128)
    pred = np.zeros((d, d), dtype=np.complex128)
    trd_r = np.zeros(d, dtype=np.complex128)
    tr_r = np.zeros(d, dtype=np.float64)
    herm_r = np.zeros(d, dtype=np.float64)
    wit_r = np.zeros(d, dtype=np.float64)
    n_h = h_off.shape[0]
    ch1 = np.empty(n_h, dtype=np.complex128)
    ch2 = np.empty(n_h, dtype=np.complex128)
    sqrt2k = np.sqrt(2.0 * k)
    sqrt8k = np.sqrt(8.0 * k)
    max_trd = 0.0
    max_herm = 0.0
    max_leak = 0.0
    half = (d + 1) // 2
    tau = 0.0
    for i in range(d):
        tau += rho[i, i].real

    max_leak = _sme_snapshot(rho, ob_off, ob_val, ob_op, ob2_off, ob2_val,
                             ob2_op, n_obs, leak_idx, leak_ptr, out_exp,
                             out_var, 0, max_leak, d)
    snap = 1

    for s in range(n_steps):
        t = s * dt
        diag_sum = 0.0
        for i in range(d):
            diag_sum += xd[i] * rho[i, i].real
        xbar = diag_sum / tau
        out_rec[s] = xbar * dt + dW[s] / sqrt8k
        g = sqrt2k * dW[s]
        for p in range(n_h):
            ch1[p] = -1j * _coeff(h_term[p], t, lam_steps[s], term_amp,
                                  term_cos, term_freq, term_coup)
            ch2[p] = -1j * _coeff(h_term[p], t + dt, lam_steps[s + 1],
                                  term_amp, term_cos, term_freq, term_coup)
        # pass 1: drift at the start point + Heun predictor
        for m in range(half):
            _drift_row_upper(rho, f1, m, d, xd, k, n_h, ch1, h_off, h_val,
                             cc_off, cc_val, cc_coef,
                             sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val, cd_val)
            _pred_row(pred, rho, f1, dt, m, d)
            i2 = d - 1 - m
            if i2 != m:
                _drift_row_upper(rho, f1, i2, d, xd, k, n_h, ch1, h_off, h_val,
                                 cc_off, cc_val, cc_coef,
                                 sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val,
                                 cd_val)
                _pred_row(pred, rho, f1, dt, i2, d)
        # pass 2: drift at the predictor + increment application
        for m in range(half):
            _drift_row_upper(pred, f2, m, d, xd, k, n_h, ch2, h_off, h_val,
                             cc_off, cc_val, cc_coef,
                             sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val, cd_val)
            _combine_row(rho, f1, f2, dt, g, xd, xbar, m, d,
                         trd_r, tr_r, herm_r, wit_r)
            i2 = d - 1 - m
            if i2 != m:
                _drift_row_upper(pred, f2, i2, d, xd, k, n_h, ch2, h_off,
                                 h_val, cc_off, cc_val, cc_coef,
                                 sw_oa, sw_a, sw_ob, sw_b, sw_coef, c_val,
                                 cd_val)
                _combine_row(rho, f1, f2, dt, g, xd, xbar, i2, d,
                             trd_r, tr_r, herm_r, wit_r)
        trd = 0.0 + 0.0j
        tr = 0.0
        herm = 0.0
        witness = 0.0
        for i in range(d):
            trd += trd_r[i]
            tr += tr_r[i]
            witness += wit_r[i]
            if herm_r[i] > herm:
                herm = herm_r[i]
        atrd = abs(trd) / tau
        if atrd > max_trd:
            max_trd = atrd
        if herm > max_herm:
            max_herm = herm
        if not np.isfinite(tr + witness) or tr <= 0.0:
            out_diag[0] = max_trd
            out_diag[1] = max_herm
            out_diag[2] = max_leak
            return s
        tau = tr

        if (s + 1) % stride == 0:
            inv = 1.0 / tau
            for i in range(d):
                for j in range(d):
                    rho[i, j] *= inv
            tau = 1.0
            max_leak = _sme_snapshot(rho, ob_off, ob_val, ob_op,
                                     ob2_off, ob2_val, ob2_op, n_obs,
                                     leak_idx, leak_ptr, out_exp, out_var,
                                     snap, max_leak, d)
            snap += 1

    inv = 1.0 / tau
    for i in range(d):
        for j in range(d):
            rho[i, j] *= inv
    out_diag[0] = max_trd
    out_diag[1] = max_herm
    out_diag[2] = max_leak
    return -1


@nb.njit(cache=True)
def _sme_snapshot(rho, ob_off, ob_val, ob_op, ob2_off, ob2_val, ob2_op, n_obs,
                  leak_idx, leak_ptr, out_exp, out_var, snap, max_leak, d):
    for o in range(n_obs):
        e = 0.0
        e2 = 0.0
        for p in range(ob_off.shape[0]):
            if ob_op[p] == o:
                e += _band_trace(rho, ob_off[p], ob_val[p], d).real
        for p in range(ob2_off.shape[0]):
            if ob2_op[p] == o:
                e2 += _band_trace(rho, ob2_off[p], ob2_val[p], d).real
        out_exp[o, snap] = e
        out_var[o, snap] = e2 - e * e
    for g in range(leak_ptr.shape[0] - 1):
        acc = 0.0
        for ii in range(leak_ptr[g], leak_ptr[g + 1]):
            acc += rho[leak_idx[ii], leak_idx[ii]].real
        if acc > max_leak:
            max_leak = acc
    return max_leak


@nb.njit(cache=True)
def _sme_kernel(rho, dt, n_steps, dW, lam_steps, heun,
                h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
                x_off, x_val, x2_off, x2_val, x_is_diag, xd, k,
                c_off, c_val, c_op, cd_off, cd_val, cd_op,
                cc_off, cc_val, cc_op, rates,
                ob_off, ob_val, ob_op, ob2_off, ob2_val, ob2_op, n_obs,
                leak_idx, leak_ptr, stride,
                out_exp, out_var, out_rec, out_diag):
    d = rho.shape[0]
    f1 = np.zeros((d, d), dtype=np.complex128)
    f2 = np.zeros((d, d), dtype=np.complex128)
    pred = np.zeros((d, d), dtype=np.complex128)
    nbuf = np.zeros((d, d), dtype=np.complex128)
    sqrt2k = np.sqrt(2.0 * k)
    sqrt8k = np.sqrt(8.0 * k)
    max_trd = 0.0
    max_herm = 0.0
    max_leak = 0.0

    max_leak = _sme_snapshot(rho, ob_off, ob_val, ob_op, ob2_off, ob2_val, ob2_op,
                             n_obs, leak_idx, leak_ptr, out_exp, out_var, 0,
                             max_leak, d)
    snap = 1

    for s in range(n_steps):
        t = s * dt
        if x_is_diag == 1:
            xbar = 0.0
            for i in range(d):
                xbar += xd[i] * rho[i, i].real
        else:
            xbar = 0.0
            for p in range(x_off.shape[0]):
                xbar += _band_trace(rho, x_off[p], x_val[p], d).real
        out_rec[s] = xbar * dt + dW[s] / sqrt8k

        g = sqrt2k * dW[s]
        trd = 0.0 + 0.0j
        herm = 0.0
        witness = 0.0  # becomes inf/nan if any entry does
        tr = 0.0

        if x_is_diag == 1:
            # fast path: Hermiticity-symmetric update computed on the
            # upper triangle only; the remaining per-step defect shows
            # up as the imaginary part left on the diagonal
            _sme_drift_upper(rho, t, lam_steps[s], f1,
                             h_off, h_val, h_term, term_amp, term_cos,
                             term_freq, term_coup, xd, k,
                             c_off, c_val, c_op, cd_off, cd_val, cd_op,
                             cc_off, cc_val, cc_op, rates, d)
            if heun == 1:
                for i in range(d):
                    pred[i, i] = rho[i, i] + dt * f1[i, i]
                    for j in range(i + 1, d):
                        a = rho[i, j] + dt * f1[i, j]
                        pred[i, j] = a
                        pred[j, i] = np.conj(a)
                _sme_drift_upper(pred, t + dt, lam_steps[s + 1], f2,
                                 h_off, h_val, h_term, term_amp, term_cos,
                                 term_freq, term_coup, xd, k,
                                 c_off, c_val, c_op, cd_off, cd_val, cd_op,
                                 cc_off, cc_val, cc_op, rates, d)
                for i in range(d):
                    xi = xd[i]
                    inc = 0.5 * dt * (f1[i, i] + f2[i, i]) + (
                        g * 2.0 * (xi - xbar)) * rho[i, i]
                    trd += inc
                    aii = rho[i, i] + inc
                    e = 2.0 * abs(aii.imag)
                    if e > herm:
                        herm = e
                    rho[i, i] = aii.real + 0.0j
                    tr += aii.real
                    witness += abs(aii.real) + abs(aii.imag)
                    for j in range(i + 1, d):
                        a = rho[i, j] + 0.5 * dt * (f1[i, j] + f2[i, j]) + (
                            g * (xi + xd[j] - 2.0 * xbar)) * rho[i, j]
                        a = _flush_tiny(a)
                        rho[i, j] = a
                        rho[j, i] = np.conj(a)
                        witness += abs(a.real) + abs(a.imag)
            else:
                for i in range(d):
                    xi = xd[i]
                    inc = dt * f1[i, i] + (g * 2.0 * (xi - xbar)) * rho[i, i]
                    trd += inc
                    aii = rho[i, i] + inc
                    e = 2.0 * abs(aii.imag)
                    if e > herm:
                        herm = e
                    rho[i, i] = aii.real + 0.0j
                    tr += aii.real
                    witness += abs(aii.real) + abs(aii.imag)
                    for j in range(i + 1, d):
                        a = rho[i, j] + dt * f1[i, j] + (
                            g * (xi + xd[j] - 2.0 * xbar)) * rho[i, j]
                        a = _flush_tiny(a)
                        rho[i, j] = a
                        rho[j, i] = np.conj(a)
                        witness += abs(a.real) + abs(a.imag)
        else:
            _sme_drift(rho, t, lam_steps[s], f1,
                       h_off, h_val, h_term, term_amp, term_cos, term_freq,
                       term_coup, x_off, x_val, x2_off, x2_val, x_is_diag, xd, k,
                       c_off, c_val, c_op, cd_off, cd_val, cd_op,
                       cc_off, cc_val, cc_op, rates, d)
            if heun == 1:
                for i in range(d):
                    for j in range(d):
                        pred[i, j] = rho[i, j] + dt * f1[i, j]
                _sme_drift(pred, t + dt, lam_steps[s + 1], f2,
                           h_off, h_val, h_term, term_amp, term_cos, term_freq,
                           term_coup, x_off, x_val, x2_off, x2_val, x_is_diag,
                           xd, k,
                           c_off, c_val, c_op, cd_off, cd_val, cd_op,
                           cc_off, cc_val, cc_op, rates, d)
            for i in range(d):
                for j in range(d):
                    nbuf[i, j] = 0.0 + 0.0j
            for p in range(x_off.shape[0]):
                _acc_left(nbuf, rho, x_off[p], x_val[p], 1.0 + 0.0j, d)
                _acc_right(nbuf, rho, x_off[p], x_val[p], 1.0 + 0.0j, d)
            if heun == 1:
                for i in range(d):
                    for j in range(d):
                        f1[i, j] = 0.5 * dt * (f1[i, j] + f2[i, j]) + g * (
                            nbuf[i, j] - 2.0 * xbar * rho[i, j])
            else:
                for i in range(d):
                    for j in range(d):
                        f1[i, j] = dt * f1[i, j] + g * (
                            nbuf[i, j] - 2.0 * xbar * rho[i, j])
            for i in range(d):
                trd += f1[i, i]
            for i in range(d):
                aii = rho[i, i] + f1[i, i]
                rho[i, i] = aii.real + 0.0j
                tr += aii.real
                witness += abs(aii.real) + abs(aii.imag)
                e = 2.0 * abs(aii.imag)
                if e > herm:
                    herm = e
                for j in range(i + 1, d):
                    a = rho[i, j] + f1[i, j]
                    b = rho[j, i] + f1[j, i]
                    e = abs(a - np.conj(b))
                    if e > herm:
                        herm = e
                    witness += abs(a.real) + abs(a.imag) + abs(b.real) + abs(b.imag)
                    m = _flush_tiny(0.5 * (a + np.conj(b)))
                    rho[i, j] = m
                    rho[j, i] = np.conj(m)

        atrd = abs(trd)
        if atrd > max_trd:
            max_trd = atrd
        if herm > max_herm:
            max_herm = herm
        if not np.isfinite(tr + witness) or tr <= 0.0:
            out_diag[0] = max_trd
            out_diag[1] = max_herm
            out_diag[2] = max_leak
            return s
        inv = 1.0 / tr
        for i in range(d):
            for j in range(d):
                rho[i, j] *= inv

        if (s + 1) % stride == 0:
            max_leak = _sme_snapshot(rho, ob_off, ob_val, ob_op,
                                     ob2_off, ob2_val, ob2_op, n_obs,
                                     leak_idx, leak_ptr, out_exp, out_var,
                                     snap, max_leak, d)
            snap += 1

    out_diag[0] = max_trd
    out_diag[1] = max_herm
    out_diag[2] = max_leak
    return -1


@nb.njit(cache=True)
def _sse_drift(psi, t, lam, out, w, w2,
               h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
               x_off, x_val, k, d):
    for i in range(d):
        out[i] = 0.0 + 0.0j
        w[i] = 0.0 + 0.0j
        w2[i] = 0.0 + 0.0j
    for p in range(h_off.shape[0]):
        c = _coeff(h_term[p], t, lam, term_amp, term_cos, term_freq, term_coup)
        if c != 0.0:
            _acc_mv(out, h_off[p], h_val[p], psi, -1j * c, d)
    # -k (X - <X>)^2 psi
    n2 = 0.0
    for i in range(d):
        n2 += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    for p in range(x_off.shape[0]):
        _acc_mv(w, x_off[p], x_val[p], psi, 1.0 + 0.0j, d)
    xbar = 0.0
    for i in range(d):
        xbar += (np.conj(psi[i]) * w[i]).real
    xbar /= n2
    for i in range(d):
        w[i] -= xbar * psi[i]
    for p in range(x_off.shape[0]):
        _acc_mv(w2, x_off[p], x_val[p], w, 1.0 + 0.0j, d)
    for i in range(d):
        out[i] -= k * (w2[i] - xbar * w[i])


@nb.njit(cache=True)
def _sse_kernel(psi, dt, n_steps, dW, lam_steps, heun,
                h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
                x_off, x_val, k,
                ob_off, ob_val, ob_op, ob2_off, ob2_val, ob2_op, n_obs,
                leak_idx, leak_ptr, stride,
                out_exp, out_var, out_rec, out_diag):
    d = psi.shape[0]
    f1 = np.zeros(d, dtype=np.complex128)
    f2 = np.zeros(d, dtype=np.complex128)
    pred = np.zeros(d, dtype=np.complex128)
    w = np.zeros(d, dtype=np.complex128)
    w2 = np.zeros(d, dtype=np.complex128)
    w0 = np.zeros(d, dtype=np.complex128)
    sqrt2k = np.sqrt(2.0 * k)
    sqrt8k = np.sqrt(8.0 * k)
    max_drift = 0.0
    max_leak = 0.0
    snap = 0
    n_groups = leak_ptr.shape[0] - 1

    for o in range(n_obs):
        e = 0.0
        e2 = 0.0
        for p in range(ob_off.shape[0]):
            if ob_op[p] == o:
                e += _band_trace_vec(psi, ob_off[p], ob_val[p], d)
        for p in range(ob2_off.shape[0]):
            if ob2_op[p] == o:
                e2 += _band_trace_vec(psi, ob2_off[p], ob2_val[p], d)
        out_exp[o, snap] = e
        out_var[o, snap] = e2 - e * e
    for g in range(n_groups):
        acc = 0.0
        for ii in range(leak_ptr[g], leak_ptr[g + 1]):
            idx = leak_idx[ii]
            acc += psi[idx].real * psi[idx].real + psi[idx].imag * psi[idx].imag
        if acc > max_leak:
            max_leak = acc
    snap += 1

    for s in range(n_steps):
        t = s * dt
        # start-point <X> and noise direction
        for i in range(d):
            w0[i] = 0.0 + 0.0j
        for p in range(x_off.shape[0]):
            _acc_mv(w0, x_off[p], x_val[p], psi, 1.0 + 0.0j, d)
        xbar = 0.0
        for i in range(d):
            xbar += (np.conj(psi[i]) * w0[i]).real
        for i in range(d):
            w0[i] -= xbar * psi[i]
        out_rec[s] = xbar * dt + dW[s] / sqrt8k

        _sse_drift(psi, t, lam_steps[s], f1, w, w2,
                   h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
                   x_off, x_val, k, d)
        if heun == 1:
            for i in range(d):
                pred[i] = psi[i] + dt * f1[i]
            _sse_drift(pred, t + dt, lam_steps[s + 1], f2, w, w2,
                       h_off, h_val, h_term, term_amp, term_cos, term_freq, term_coup,
                       x_off, x_val, k, d)
            for i in range(d):
                psi[i] = _flush_tiny(
                    psi[i] + 0.5 * dt * (f1[i] + f2[i]) + sqrt2k * dW[s] * w0[i])
        else:
            for i in range(d):
                psi[i] = _flush_tiny(psi[i] + dt * f1[i] + sqrt2k * dW[s] * w0[i])

        nrm2 = 0.0
        for i in range(d):
            nrm2 += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        if not np.isfinite(nrm2) or nrm2 <= 0.0:
            out_diag[0] = max_drift
            out_diag[1] = 0.0
            out_diag[2] = max_leak
            return s
        nrm = np.sqrt(nrm2)
        drift = abs(nrm - 1.0)
        if drift > max_drift:
            max_drift = drift
        inv = 1.0 / nrm
        for i in range(d):
            psi[i] *= inv

        if (s + 1) % stride == 0:
            for o in range(n_obs):
                e = 0.0
                e2 = 0.0
                for p in range(ob_off.shape[0]):
                    if ob_op[p] == o:
                        e += _band_trace_vec(psi, ob_off[p], ob_val[p], d)
                for p in range(ob2_off.shape[0]):
                    if ob2_op[p] == o:
                        e2 += _band_trace_vec(psi, ob2_off[p], ob2_val[p], d)
                out_exp[o, snap] = e
                out_var[o, snap] = e2 - e * e
            for g in range(n_groups):
                acc = 0.0
                for ii in range(leak_ptr[g], leak_ptr[g + 1]):
                    idx = leak_idx[ii]
                    acc += psi[idx].real * psi[idx].real + psi[idx].imag * psi[idx].imag
                if acc > max_leak:
                    max_leak = acc
            snap += 1

    out_diag[0] = max_drift
    out_diag[1] = 0.0
    out_diag[2] = max_leak
    return -1


@nb.njit(cache=True)
def _band_trace_vec(psi, off, val, d):
    # <psi| A |psi> real part for one diagonal of A
    lo = 0 if off >= 0 else -off
    hi = d - off if off >= 0 else d
    acc = 0.0 + 0.0j
    for i in range(lo, hi):
        acc += np.conj(psi[i]) * val[i] * psi[i + off]
    return acc.real


# ---------------------------------------------------------------------------
# python-side compilation


@dataclass
class CompiledSystem:
    """Banded arrays for one model + observable set, ready for the kernels."""

    d: int
    h_off: np.ndarray
    h_val: np.ndarray
    h_term: np.ndarray
    term_amp: np.ndarray
    term_cos: np.ndarray
    term_freq: np.ndarray
    term_coup: np.ndarray
    x_off: np.ndarray
    x_val: np.ndarray
    x2_off: np.ndarray
    x2_val: np.ndarray
    x_is_diag: int
    xd: np.ndarray
    k: float
    c_off: np.ndarray
    c_val: np.ndarray
    c_op: np.ndarray
    cd_off: np.ndarray
    cd_val: np.ndarray
    cd_op: np.ndarray
    cc_off: np.ndarray
    cc_val: np.ndarray
    cc_op: np.ndarray
    rates: np.ndarray
    cc_coef: np.ndarray
    sw_oa: np.ndarray
    sw_a: np.ndarray
    sw_ob: np.ndarray
    sw_b: np.ndarray
    sw_coef: np.ndarray
    obs_names: tuple
    ob_off: np.ndarray
    ob_val: np.ndarray
    ob_op: np.ndarray
    ob2_off: np.ndarray
    ob2_val: np.ndarray
    ob2_op: np.ndarray
    leak_idx: np.ndarray
    leak_ptr: np.ndarray


def leak_index_groups(layout):
    """Joint-space indices of the top Fock level, one group per
    oscillator factor (two-level factors have no truncation edge)."""
    dims = layout.factor_dims
    total = int(np.prod(dims))
    groups = []
    for f, df in enumerate(dims):
        if df < 3:
            continue
        stride = int(np.prod(dims[f + 1:])) if f + 1 < len(dims) else 1
        idx = [i for i in range(total) if (i // stride) % df == df - 1]
        groups.append(np.asarray(idx, dtype=np.int64))
    if not groups:
        return np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    for i, g in enumerate(groups):
        ptr[i + 1] = ptr[i] + g.size
    return np.concatenate(groups), ptr


def compile_system(model, observable_ops, k: float) -> CompiledSystem:
    """Build the banded arrays for a BuiltModel and named observables.

    ``observable_ops`` is an ordered list of (name, Operator).
    """
    d = model.dim
    terms = model.h_terms
    h_off, h_val, h_term = _stack([t.op.entries for t in terms], d)
    term_amp = np.array([t.coefficient for t in terms], dtype=np.float64)
    term_cos = np.array(
        [1 if t.modulation.value == "cosine" else 0 for t in terms], dtype=np.int64)
    term_freq = np.array([t.frequency for t in terms], dtype=np.float64)
    term_coup = np.array([1 if t.is_coupling else 0 for t in terms], dtype=np.int64)

    x = model.measured_op.entries
    x_off, x_val = banded_form(x)
    x2_off, x2_val = banded_form(x @ x)
    x_is_diag = 1 if (x_off.size == 1 and x_off[0] == 0) else 0
    xd = x_val[0].real.copy() if x_is_diag else np.zeros(d)

    c_arrs = [dis.op.entries for dis in model.dissipators]
    c_off, c_val, c_op = _stack(c_arrs, d)
    cd_off, cd_val, cd_op = _stack([c.conj().T for c in c_arrs], d)
    cc_off, cc_val, cc_op = _stack([c.conj().T @ c for c in c_arrs], d)
    rates = np.array([dis.rate for dis in model.dissipators], dtype=np.float64)
    # flattened per-diagonal coefficients for the row-parallel kernel
    cc_coef = np.array([-rates[cc_op[p]] for p in range(cc_off.shape[0])],
                       dtype=np.float64)
    sw_oa, sw_a, sw_ob, sw_b, sw_coef = [], [], [], [], []
    for p in range(c_off.shape[0]):
        for q in range(cd_off.shape[0]):
            if c_op[p] == cd_op[q]:
                sw_oa.append(c_off[p])
                sw_a.append(p)
                sw_ob.append(cd_off[q])
                sw_b.append(q)
                sw_coef.append(2.0 * rates[c_op[p]])
    sw_oa = np.asarray(sw_oa, dtype=np.int64)
    sw_a = np.asarray(sw_a, dtype=np.int64)
    sw_ob = np.asarray(sw_ob, dtype=np.int64)
    sw_b = np.asarray(sw_b, dtype=np.int64)
    sw_coef = np.asarray(sw_coef, dtype=np.float64)

    names = tuple(name for name, _ in observable_ops)
    ob_off, ob_val, ob_op = _stack([op.entries for _, op in observable_ops], d)
    ob2_off, ob2_val, ob2_op = _stack(
        [op.entries @ op.entries for _, op in observable_ops], d)

    leak_idx, leak_ptr = leak_index_groups(model.layout)

    return CompiledSystem(
        d=d, h_off=h_off, h_val=h_val, h_term=h_term,
        term_amp=term_amp, term_cos=term_cos, term_freq=term_freq,
        term_coup=term_coup,
        x_off=x_off, x_val=x_val, x2_off=x2_off, x2_val=x2_val,
        x_is_diag=x_is_diag, xd=xd, k=float(k),
        c_off=c_off, c_val=c_val, c_op=c_op,
        cd_off=cd_off, cd_val=cd_val, cd_op=cd_op,
        cc_off=cc_off, cc_val=cc_val, cc_op=cc_op, rates=rates,
        cc_coef=cc_coef, sw_oa=sw_oa, sw_a=sw_a, sw_ob=sw_ob, sw_b=sw_b,
        sw_coef=sw_coef,
        obs_names=names,
        ob_off=ob_off, ob_val=ob_val, ob_op=ob_op,
        ob2_off=ob2_off, ob2_val=ob2_val, ob2_op=ob2_op,
        leak_idx=leak_idx, leak_ptr=leak_ptr,
    )
