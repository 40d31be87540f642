"""Chance-constrained bandwidth reservation for one slicing window.

The per-slot chance constraint on served capacity is replaced by its
deterministic Gaussian-quantile equivalent, which turns the window problem
into: choose which satellites to activate (binary ``r``) and what fraction of
each activated satellite's bandwidth to reserve (``b``) so that

    sum_t  beta_res * C_res[t] + beta_delay * max_s D_M[s, t]

is minimal while every slot's capacity meets its demand threshold. For a
fixed activation set the problem is convex; it is solved with a log-barrier
Newton method on the epigraph form (one auxiliary variable per slot bounds
the worst satellite delay). Activation sets are enumerated exactly, in order
of a cheap lower bound, up to ``exact_limit`` candidate satellites; beyond
that the best of a greedy seed and all feasible single-satellite sets is
improved by single-bit flips. Without a delay weight the activation bits are
free, so the all-active problem is solved once and then pruned.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DegenerateQuantile, Infeasible, NumericalFailure
from .linkmodel import LinkParams, full_rate
from .predictor import FittedDemandDistribution, GaussianFit, PoissonFit

log = logging.getLogger(__name__)

BIG_M = 1e9


# ------------------------------------------------------------------ thresholds

def demand_threshold(dist: FittedDemandDistribution, theta: float, gamma: float) -> float:
    """Capacity needed so the effective bandwidth is covered with probability ``gamma``."""
    if not 0 < gamma < 1:
        raise DegenerateQuantile(f"gamma must lie in (0, 1), got {gamma}")
    z = norm.ppf(gamma)
    if isinstance(dist, PoissonFit):
        return float((dist.intensity + z * dist.intensity_std) * np.expm1(theta) / theta)
    if isinstance(dist, GaussianFit):
        centre = dist.mean_mean + 0.5 * theta * dist.var_mean
        spread = np.sqrt(dist.mean_std**2 + 0.25 * theta**2 * dist.var_std**2)
        return float(centre + z * spread)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def point_threshold(dist: FittedDemandDistribution, theta: float) -> float:
    """Effective bandwidth at the fitted parameters, ignoring their uncertainty."""
    if isinstance(dist, PoissonFit):
        return float(dist.intensity * np.expm1(theta) / theta)
    return float(dist.mean_mean + 0.5 * theta * dist.var_mean)


# ------------------------------------------------------------------ data types

@dataclass
class SliceProblem:
    """One window (or the remaining part of one) to be sliced.

    Arrays are indexed ``[satellite, slot]`` with satellites in ``sat_ids``
    order. ``locked`` maps already-executed satellite ids to their fixed
    fractions. ``beta_res`` is per Hz per slot, ``beta_delay`` per second.
    """

    sat_ids: np.ndarray
    visible: np.ndarray
    distance: np.ndarray
    thresholds: np.ndarray
    link: LinkParams = field(default_factory=LinkParams)
    beta_res: float = 1e-6
    beta_delay: float = 100.0
    gamma: float = 0.9
    big_m: float = BIG_M
    locked: dict = field(default_factory=dict)
    window: int = 0
    first_slot: int = 0

    def __post_init__(self):
        self.sat_ids = np.asarray(self.sat_ids, dtype=int)
        self.visible = np.asarray(self.visible, dtype=np.int8).reshape(len(self.sat_ids), -1)
        self.distance = np.asarray(self.distance, dtype=float).reshape(self.visible.shape)
        self.thresholds = np.maximum(np.asarray(self.thresholds, dtype=float), 0.0)
        if self.thresholds.shape != (self.visible.shape[1],):
            raise ValueError("one threshold per slot required")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.beta_res < 0 or self.beta_delay < 0:
            raise ValueError("cost weights must be non-negative")
        for sid, b in self.locked.items():
            if not 0 <= b <= 1:
                raise ValueError(f"locked fraction of satellite {sid} outside [0, 1]")

    @classmethod
    def from_distributions(cls, sat_ids, visible, distance, dists: Sequence,
                           link: LinkParams, gamma: float, **kw) -> "SliceProblem":
        th = [demand_threshold(d, link.qos_exponent, gamma) for d in dists]
        return cls(sat_ids, visible, distance, np.array(th), link, gamma=gamma, **kw)

    @property
    def n_slots(self) -> int:
        return self.visible.shape[1]

    def capacity_matrix(self) -> np.ndarray:
        """Full-reservation rate of each satellite in each slot (0 when not visible)."""
        vis = self.visible.astype(bool)
        d = np.where(vis, self.distance, 1.0)
        return np.where(vis, full_rate(d, self.link), 0.0)

    def to_dict(self) -> dict:
        lk = self.link
        return {
            "format": "leoslice-instance/1",
            "sat_ids": self.sat_ids.tolist(),
            "visible": self.visible.tolist(),
            "distance_km": self.distance.tolist(),
            "thresholds": self.thresholds.tolist(),
            "link": {k: getattr(lk, k) for k in lk.__dataclass_fields__},
            "beta_res": self.beta_res,
            "beta_delay": self.beta_delay,
            "gamma": self.gamma,
            "big_m": self.big_m,
            "locked": {str(k): v for k, v in self.locked.items()},
            "window": self.window,
            "first_slot": self.first_slot,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SliceProblem":
        """Build from :meth:`to_dict` output.

        Instead of ``thresholds`` a document may carry ``distributions``: a
        list of ``{"kind": "poisson", "intensity", "intensity_std"}`` or
        ``{"kind": "gaussian", "mean_mean", "mean_std", "var_mean", "var_std"}``.
        """
        link = LinkParams(**doc.get("link", {}))
        kw = dict(
            beta_res=doc.get("beta_res", 1e-6), beta_delay=doc.get("beta_delay", 100.0),
            gamma=doc.get("gamma", 0.9), big_m=doc.get("big_m", BIG_M),
            locked={int(k): float(v) for k, v in doc.get("locked", {}).items()},
            window=doc.get("window", 0), first_slot=doc.get("first_slot", 0),
        )
        if "thresholds" in doc:
            th = np.array(doc["thresholds"], dtype=float)
        else:
            dists = []
            for d in doc["distributions"]:
                d = dict(d)
                kind = d.pop("kind")
                dists.append(PoissonFit(**d) if kind == "poisson" else GaussianFit(**d))
            th = np.array([demand_threshold(d, link.qos_exponent, kw["gamma"]) for d in dists])
        return cls(doc["sat_ids"], doc["visible"], doc["distance_km"], th, link, **kw)

    @classmethod
    def load(cls, path) -> "SliceProblem":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SlicingDecision:
    """Candidate fractions, activation bits and executed (locked) fractions.

    All arrays follow ``sat_ids`` order. Executed fractions are zero until a
    satellite first covers the area, then equal the candidate and never change.
    """

    sat_ids: np.ndarray
    candidate: np.ndarray
    active: np.ndarray
    executed: np.ndarray
    locked: np.ndarray
    objective: float
    thresholds: np.ndarray
    infeasible: bool = False

    def as_dict(self) -> dict:
        return {
            "sat_ids": [int(s) for s in self.sat_ids],
            "candidate": [float(x) for x in self.candidate],
            "active": [int(x) for x in self.active],
            "executed": [float(x) for x in self.executed],
            "locked": [bool(x) for x in self.locked],
            "objective": float(self.objective),
            "thresholds": [float(x) for x in self.thresholds],
            "infeasible": bool(self.infeasible),
        }

    def locked_map(self) -> dict:
        return {int(s): float(b) for s, b, lk in zip(self.sat_ids, self.executed, self.locked) if lk}


# ------------------------------------------------------------- cost functions

def big_m_delay(b, r, a, d_km, link: LinkParams, big_m: float = BIG_M):
    """Delay with the big-M term that silences unused or invisible satellites."""
    b, r, a = (np.asarray(x, dtype=float) for x in (b, r, a))
    if np.any(b > r + 1e-15):
        raise ValueError("candidate fraction exceeds activation bit")
    ra = r * a
    C = np.where(a * b > 0, a * b * full_rate(np.where(a * b > 0, d_km, 1.0), link), 0.0)
    with np.errstate(divide="ignore"):
        out = link.queue_constant / (C + big_m * (1 - ra)) + np.asarray(d_km) / link.light_speed * ra
    return float(out) if np.ndim(out) == 0 else out


def p2_objective(b, r, visible, cap, prop, link: LinkParams, beta_res, beta_delay, big_m=BIG_M) -> float:
    """Window objective with big-M delays (``cap`` = full-reservation rates)."""
    b = np.asarray(b, dtype=float)
    vis = np.asarray(visible, dtype=float)
    res = link.bandwidth * (vis * b[:, None]).sum(axis=0)
    total = beta_res * res.sum()
    if beta_delay > 0 and vis.shape[0]:
        ra = np.asarray(r, dtype=float)[:, None] * vis
        C = vis * b[:, None] * cap
        with np.errstate(divide="ignore"):
            D = link.queue_constant / (C + big_m * (1 - ra)) + prop * ra
        total += beta_delay * D.max(axis=0).sum()
    return float(total)


def slot_costs(b, visible, cap, prop, link: LinkParams):
    """Per-slot resource usage (Hz) and max delay bound (s) for executed fractions."""
    b = np.asarray(b, dtype=float)
    vis = np.asarray(visible, dtype=float)
    res = link.bandwidth * (vis * b[:, None]).sum(axis=0)
    R = vis * b[:, None] * cap
    on = R > 0
    D = np.where(on, link.queue_constant / np.where(on, R, 1.0) + prop, 0.0)
    delay = D.max(axis=0) if D.shape[0] else np.zeros(vis.shape[1])
    return res, delay


def served_capacity(b, visible, cap) -> np.ndarray:
    """Sum of effective capacities per slot."""
    return (np.asarray(visible, float) * np.asarray(b, float)[:, None] * cap).sum(axis=0)


# ---------------------------------------------------------- barrier subproblem

class _Window:
    """Precomputed arrays shared by every activation-set subproblem."""

    def __init__(self, problem: SliceProblem):
        p = problem
        self.p = p
        self.vis = p.visible.astype(bool)
        self.cap = p.capacity_matrix()
        self.prop = np.where(self.vis, p.distance / p.link.light_speed, 0.0)
        self.cq = p.link.queue_constant
        self.B = p.link.bandwidth
        n, T = self.vis.shape
        self.n, self.T = n, T

        lk = np.zeros(n, dtype=bool)
        lb = np.zeros(n)
        for i, sid in enumerate(p.sat_ids):
            if int(sid) in p.locked:
                lk[i] = True
                lb[i] = p.locked[int(sid)]
        self.is_locked = lk
        self.locked_b = lb
        self.free = np.flatnonzero(~lk & self.vis.any(axis=1))

        on = lk & (lb > 0)
        self.cap_locked = (self.vis[on] * lb[on, None] * self.cap[on]).sum(axis=0)
        with np.errstate(divide="ignore"):
            dl = np.where(self.vis[on], self.cq / (lb[on, None] * np.where(self.vis[on], self.cap[on], 1.0))
                          + self.prop[on], -np.inf)
        self.delay_locked = dl.max(axis=0) if on.any() else np.full(T, -np.inf)
        self.deficit = p.thresholds - self.cap_locked
        # resource coefficient of each satellite's fraction
        self.c_res = p.beta_res * self.B * self.vis.sum(axis=1)
        self.best_delay = np.where(self.vis, self.cq / np.where(self.vis, self.cap, 1.0) + self.prop, -np.inf)

    def feasible(self, mask_free: np.ndarray) -> bool:
        idx = self.free[mask_free]
        cap = self.cap[idx].sum(axis=0)
        need = self.deficit > 0
        return bool(np.all(cap[need] > self.deficit[need]))

    def lower_bounds(self, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cost lower bound and feasibility for each row of ``masks`` (over free sats).

        Slots are bounded independently. With ``u`` the slot's worst delay,
        every active satellite needs ``b >= cq / (k (u - p))`` and together
        they need ``sum b >= deficit / k_max``; minimizing the resulting
        convex function of ``u`` has a closed form.
        """
        p = self.p
        capf = self.cap[self.free]                              # (m, T)
        visf = self.vis[self.free]
        A = masks[:, :, None] & visf[None]                      # (K, m, T)
        totcap = np.einsum("kmt,mt->kt", A.astype(float), capf)
        need = self.deficit > 0
        feas = np.all((totcap > self.deficit) | ~need, axis=1)
        alpha = p.beta_res * self.B
        beta = p.beta_delay
        any_on = A.any(axis=1)                                  # (K, T)
        safe_k = np.where(visf, capf, 1.0)
        kmax = np.where(A, capf[None], 0.0).max(axis=1)
        kmax = np.where(any_on, kmax, 1.0)
        dk = np.maximum(self.deficit, 0.0)[None] / kmax
        if beta > 0:
            cA = self.cq * np.where(A, 1.0 / safe_k[None], 0.0).sum(axis=1)
            p0 = np.where(A, self.prop[self.free][None], np.inf).min(axis=1)
            p0 = np.where(any_on, p0, 0.0)
            ulo = np.where(A, (self.cq / safe_k + self.prop[self.free])[None], -np.inf).max(axis=1)
            dl = np.where(np.isfinite(self.delay_locked), self.delay_locked, -np.inf)
            ulo = np.maximum(ulo, dl[None])
            with np.errstate(divide="ignore", invalid="ignore"):
                ustar = p0 + np.sqrt(alpha * cA / beta)
                uswitch = np.where(dk > 0, p0 + cA / dk, np.inf)
                u = np.maximum(ulo, np.minimum(ustar, uswitch))
                slot_lb = beta * u + alpha * np.maximum(cA / (u - p0), dk)
            idle = beta * np.maximum(dl, 0.0)[None]
            slot_lb = np.where(any_on, slot_lb, np.broadcast_to(idle, slot_lb.shape))
        else:
            slot_lb = np.where(any_on, alpha * dk, 0.0)
        lb = slot_lb.sum(axis=1) + alpha * (self.vis * self.locked_b[:, None]).sum()
        return lb, feas

    def full_vector(self, idx, b_idx) -> tuple[np.ndarray, np.ndarray]:
        b = self.locked_b.copy()
        r = (self.is_locked & (self.locked_b > 0)).astype(np.int8)
        b[idx] = b_idx
        r[idx] = 1
        return b, r

    def objective(self, b, r) -> float:
        p = self.p
        return p2_objective(b, r, self.vis, self.cap, self.prop, p.link, p.beta_res, p.beta_delay, p.big_m)


def _barrier_solve(win: _Window, idx: np.ndarray, tol: float = 1e-6, mu: float = 20.0,
                   max_newton: int = 200):
    """Minimize the window cost with exactly the satellites ``idx`` activated.

    Returns the fractions for ``idx`` or None when the set cannot meet the
    thresholds strictly.
    """
    p = win.p
    V = win.vis[idx]                      # (m, T)
    K = win.cap[idx]
    P = win.prop[idx]
    c = win.c_res[idx]
    m = len(idx)
    if m == 0:
        return np.zeros(0)

    hslots = np.flatnonzero(win.deficit > 0)
    Kh = K[:, hslots]                     # (m, nh)
    dh = win.deficit[hslots]
    if np.any(Kh.sum(axis=0) <= dh):
        return None

    use_u = p.beta_delay > 0
    uslots = np.flatnonzero(V.any(axis=0)) if use_u else np.zeros(0, dtype=int)
    Vu = V[:, uslots]
    Ku = np.where(Vu, K[:, uslots], 1.0)
    Pu = P[:, uslots]
    DL = win.delay_locked[uslots]
    has_dl = np.isfinite(DL)
    cq = win.cq
    nu = len(uslots)

    # strictly feasible start: uniform fraction halfway between need and 1
    ratio = (dh / Kh.sum(axis=0)).max() if len(hslots) else 0.0
    b = np.full(m, 0.5 * (1.0 + max(ratio, 0.0)))
    if use_u:
        g0 = np.where(Vu, cq / (Ku * b[:, None]) + Pu, -np.inf).max(axis=0)
        u = np.maximum(g0, np.where(has_dl, DL, -np.inf)) + 1.0
    else:
        u = np.zeros(0)

    n_con = 2 * m + len(hslots) + (int(Vu.sum()) + int(has_dl.sum()) if use_u else 0)

    def cost(b, u):
        return c @ b + (p.beta_delay * u.sum() if use_u else 0.0)

    def phi(b, u):
        """Barrier value, or inf outside the domain."""
        if np.any(b <= 0) or np.any(b >= 1):
            return np.inf
        h = b @ Kh - dh
        if np.any(h <= 0):
            return np.inf
        val = -np.log(b).sum() - np.log1p(-b).sum() - np.log(h).sum()
        if use_u:
            G = u[None, :] - Pu - cq / (Ku * b[:, None])
            if np.any(G[Vu] <= 0):
                return np.inf
            val -= np.log(G[Vu]).sum()
            if has_dl.any():
                gl = u[has_dl] - DL[has_dl]
                if np.any(gl <= 0):
                    return np.inf
                val -= np.log(gl).sum()
        return val

    def grad_hess(b, u, tb):
        h = b @ Kh - dh
        gb = tb * c - 1.0 / b + 1.0 / (1.0 - b) - Kh @ (1.0 / h)
        Hbb = np.diag(1.0 / b**2 + 1.0 / (1.0 - b) ** 2) + (Kh / h**2) @ Kh.T
        if not use_u:
            return gb, Hbb
        G = np.where(Vu, u[None, :] - Pu - cq / (Ku * b[:, None]), 1.0)
        e = cq / (Ku * b[:, None] ** 2)
        iG = np.where(Vu, 1.0 / G, 0.0)
        iG2 = iG * iG
        gb = gb - (e * iG).sum(axis=1)
        gu = tb * p.beta_delay - iG.sum(axis=0)
        Huu = iG2.sum(axis=0)
        if has_dl.any():
            gl = np.where(has_dl, u - np.where(has_dl, DL, 0.0), 1.0)
            gu = gu - np.where(has_dl, 1.0 / gl, 0.0)
            Huu = Huu + np.where(has_dl, 1.0 / gl**2, 0.0)
        Hbb = Hbb + np.diag((e * e * iG2 + 2.0 * cq / (Ku * b[:, None] ** 3) * iG).sum(axis=1))
        Hbu = e * iG2
        H = np.block([[Hbb, Hbu], [Hbu.T, np.diag(Huu)]])
        return np.concatenate([gb, gu]), H

    f0 = cost(b, u)
    tb = max(n_con / max(abs(f0), 1e-9), 1e-6)
    newton = 0
    while True:
        # centering
        for _ in range(60):
            g, H = grad_hess(b, u, tb)
            try:
                L = np.linalg.cholesky(H)
                step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = -g @ step
            newton += 1
            if dec / 2 <= 1e-10 or newton > max_newton:
                break
            F = tb * cost(b, u) + phi(b, u)
            s = 1.0
            while s > 1e-14:
                nb, nuv = b + s * step[:m], u + s * step[m:]
                Fn = tb * cost(nb, nuv) + phi(nb, nuv)
                if Fn <= F - 0.25 * s * dec:
                    break
                s *= 0.5
            else:
                break
            b, u = nb, nuv
        if newton > max_newton:
            raise NumericalFailure(f"barrier did not converge for activation set {idx.tolist()}")
        if n_con / tb <= tol * max(1.0, abs(cost(b, u))):
            return b
        tb *= mu


# ------------------------------------------------------------- window search

def _key(obj: float, sats: tuple):
    return obj, len(sats), sats


def _better(cand, best, rtol=1e-9) -> bool:
    if best is None:
        return True
    (o1, n1, s1), (o2, n2, s2) = cand, best
    tol = rtol * max(1.0, abs(o2))
    if o1 < o2 - tol:
        return True
    if o1 > o2 + tol:
        return False
    return (n1, s1) < (n2, s2)


def _evaluate(win: _Window, local: tuple, tol: float):
    idx = win.free[list(local)]
    b_idx = _barrier_solve(win, idx, tol=tol)
    if b_idx is None:
        return None
    b, r = win.full_vector(idx, b_idx)
    return win.objective(b, r), b, r


def _exact_search(win: _Window, tol: float):
    nf = len(win.free)
    masks = np.array(list(itertools.product((False, True), repeat=nf)), dtype=bool).reshape(-1, nf)
    lb, feas = win.lower_bounds(masks)
    order = np.flatnonzero(feas)
    sizes = masks.sum(axis=1)
    order = order[np.lexsort((sizes[order], lb[order]))]
    best = best_sol = None
    for k in order:
        if best is not None:
            slack = 1e-9 * max(1.0, abs(best[0]))
            if lb[k] > best[0] + slack:
                break
            # at best a tie, which a larger set loses
            if lb[k] >= best[0] - slack and sizes[k] > best[1]:
                continue
        local = tuple(np.flatnonzero(masks[k]).tolist())
        out = _evaluate(win, local, tol)
        if out is None:
            continue
        obj, b, r = out
        sats = tuple(int(win.p.sat_ids[win.free[i]]) for i in local)
        key = _key(obj, sats)
        if _better(key, best):
            best, best_sol = key, (b, r)
    return best, best_sol


def _local_search(win: _Window, tol: float, max_rounds: int = 50):
    nf = len(win.free)
    mask = np.zeros(nf, dtype=bool)

    def deficit(mk):
        cap = win.cap[win.free[mk]].sum(axis=0)
        return np.maximum(win.deficit - cap, 0.0).sum() if np.any(win.deficit > 0) else 0.0

    # greedy: add the satellite with the smallest bound until the set is feasible
    while not win.feasible(mask):
        cands = np.flatnonzero(~mask)
        trial = np.repeat(mask[None], len(cands), axis=0)
        trial[np.arange(len(cands)), cands] = True
        lb, _ = win.lower_bounds(trial)
        gain = np.array([deficit(mask) - deficit(t) for t in trial])
        lb = np.where(gain > 0, lb, np.inf)
        mask[cands[int(np.argmin(lb))]] = True

    def solve(mk):
        local = tuple(np.flatnonzero(mk).tolist())
        out = _evaluate(win, local, tol)
        if out is None:
            return None, None
        obj, b, r = out
        sats = tuple(int(win.p.sat_ids[win.free[i]]) for i in local)
        return _key(obj, sats), (b, r)

    best, best_sol = solve(mask)
    # also seed from every single satellite that can carry the window alone
    singles = np.eye(nf, dtype=bool)
    lb, feas = win.lower_bounds(singles)
    for j in np.argsort(lb, kind="stable"):
        if not feas[j] or (best is not None and lb[j] > best[0]):
            continue
        key, sol = solve(singles[j])
        if key is not None and _better(key, best):
            best, best_sol, mask = key, sol, singles[j].copy()
    for _ in range(max_rounds):
        flips = np.repeat(mask[None], nf, axis=0)
        flips[np.arange(nf), np.arange(nf)] ^= True
        lb, feas = win.lower_bounds(flips)
        round_best, round_sol, round_mask = best, None, None
        for j in np.argsort(lb, kind="stable"):
            if not feas[j] or (best is not None and lb[j] > best[0]):
                continue
            key, sol = solve(flips[j])
            if key is not None and _better(key, round_best):
                round_best, round_sol, round_mask = key, sol, flips[j].copy()
        if round_mask is None:
            break
        best, best_sol, mask = round_best, round_sol, round_mask
    return best, best_sol


def _delay_free_search(win: _Window, tol: float):
    """Search used when delay carries no weight.

    Activation bits then cost nothing, so the all-active convex problem is
    already optimal. Satellites are dropped from the highest id down while
    the optimum is kept, which realizes the fewer-then-lower-ids tie rule.
    """
    def solve(mk):
        local = tuple(np.flatnonzero(mk).tolist())
        if not win.feasible(mk):
            return None, None
        out = _evaluate(win, local, tol)
        if out is None:
            return None, None
        return out[0], out[1:]

    mask = np.ones(len(win.free), dtype=bool)
    if not np.any(win.deficit > 0):
        mask[:] = False
    opt, sol = solve(mask)
    if opt is None:
        return None, None
    slack = tol * max(1.0, abs(opt))
    order = np.argsort(win.p.sat_ids[win.free], kind="stable")[::-1]
    for i in order:
        if not mask[i]:
            continue
        trial = mask.copy()
        trial[i] = False
        obj, cand = solve(trial)
        if obj is not None and obj <= opt + slack:
            mask, sol = trial, cand
    b, r = sol
    sats = tuple(int(win.p.sat_ids[win.free[i]]) for i in np.flatnonzero(mask))
    return _key(win.objective(b, r), sats), (b, r)


def solve_window(problem: SliceProblem, exact_limit: int = 12, tol: float = 1e-6) -> SlicingDecision:
    """Optimal candidate fractions and activation bits for a window.

    Raises :class:`Infeasible` when even full reservation of every available
    satellite cannot meet some slot's threshold.
    """
    win = _Window(problem)
    full = np.ones(len(win.free), dtype=bool)
    if not win.feasible(full):
        cap = win.cap_locked + win.cap[win.free].sum(axis=0)
        bad = np.flatnonzero((win.deficit > 0) & (cap - win.cap_locked <= win.deficit))
        raise Infeasible(f"slot {problem.first_slot + int(bad[0])} demand exceeds capacity",
                         slot=problem.first_slot + int(bad[0]))
    if problem.beta_delay == 0:
        best, sol = _delay_free_search(win, tol)
    elif len(win.free) <= exact_limit:
        best, sol = _exact_search(win, tol)
    else:
        best, sol = _local_search(win, tol)
    if best is None:
        raise NumericalFailure("no activation set could be solved")
    b, r = sol
    b = np.where(r > 0, b, 0.0)
    return SlicingDecision(
        sat_ids=problem.sat_ids.copy(),
        candidate=b,
        active=r.astype(np.int8),
        executed=win.locked_b.copy(),
        locked=win.is_locked.copy(),
        objective=best[0],
        thresholds=problem.thresholds.copy(),
    )


def best_effort_decision(problem: SliceProblem) -> SlicingDecision:
    """Full reservation on every unlocked satellite; used when a window is infeasible."""
    win = _Window(problem)
    idx = win.free
    b, r = win.full_vector(idx, np.ones(len(idx)))
    return SlicingDecision(problem.sat_ids.copy(), b, r, win.locked_b.copy(), win.is_locked.copy(),
                           win.objective(b, r), problem.thresholds.copy(), infeasible=True)


def solve_or_best_effort(problem: SliceProblem, **kw) -> SlicingDecision:
    try:
        return solve_window(problem, **kw)
    except Infeasible as exc:
        log.info("window %d infeasible (%s); reserving everything", problem.window, exc)
        return best_effort_decision(problem)


# ------------------------------------------------------------------ execution

def execute_on_coverage(decision: SlicingDecision, visible: np.ndarray, t: int) -> SlicingDecision:
    """Lock every satellite that has covered the area at or before slot ``t``."""
    seen = np.asarray(visible)[:, : t + 1].any(axis=1)
    newly = seen & ~decision.locked
    if not newly.any():
        return decision
    executed = decision.executed.copy()
    executed[newly] = decision.candidate[newly]
    return replace(decision, executed=executed, locked=decision.locked | newly)
