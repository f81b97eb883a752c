"""Time-marginals of the limit dynamics and simulation of the limit process.

The law g(t) of the limit potential is represented in Lagrangian form,
following the structure of the dynamics itself: mass born at the reset
point 0 at past spike times s is transported along the deterministic flow
and damped by the survival kernel, while the surviving initial mass rides
the flow from its original position. Writing phi and kappa for the flow
and survival kernel of the solved drift a_t,

  * jump part, y in [0, phi_{0,t}(0)):   born at s, position phi_{s,t}(0),
    density (p_s / a_s) * exp(lam (t-s)) * kappa_{s,t}(0);
  * initial part, y >= phi_{0,t}(0):     density g0(x) kappa_{0,t}(x) e^{lam t}
    at position phi_{0,t}(x);
  * atoms of the initial law transported the same way.

The splice point phi_{0,t}(0) moves right with time and the jump density
at 0 equals p_t / a_t by construction. Time stepping is one
predictor-corrector pass per dt-slab on the self-consistent drift
a_t = lam * m_t + p_t, with per-slab survival factors accumulated
multiplicatively, so the representation never diffuses numerically.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .metrics import w1_samples_vs_law
from .model import ConfigError, DriftSeries, RateFunction, SystemConfig
from .particle import EventBudgetExceededError
from .quadrature import cumulative_trapezoid
from .rng import substream


class MassDriftError(RuntimeError):
    """Representation lost more probability mass than mass_abs allows."""


# ---------------------------------------------------------------------------
# Transported density snapshots
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TransportedDensity:
    """Frozen two-part (plus atoms) representation of g(t)."""

    t: float
    lam: float
    splice: float  # phi_{0,t}(0)
    decay0: float  # exp(-lam t)
    a_t: float
    p_t: float
    m_t: float
    jump_s: np.ndarray  # birth times, ascending (first entry 0)
    jump_pos: np.ndarray  # positions, descending in s
    jump_weight: np.ndarray  # kappa_{s,t}(0)
    jump_density: np.ndarray
    jump_p_birth: np.ndarray  # p_s at birth
    init_x: np.ndarray
    init_pos: np.ndarray
    init_g0: np.ndarray
    init_surv: np.ndarray
    atoms: list  # (origin, position, original mass, surviving mass)

    def mass(self) -> float:
        jump = float(np.trapezoid(self.jump_p_birth * self.jump_weight, self.jump_s))
        init = float(np.trapezoid(self.init_g0 * self.init_surv, self.init_x)) if self.init_x.size else 0.0
        return jump + init + sum(a[3] for a in self.atoms)

    def survived_initial_mass(self) -> float:
        """E[kappa_{0,t}(Y_0)] under the discretized initial law."""
        init = float(np.trapezoid(self.init_g0 * self.init_surv, self.init_x)) if self.init_x.size else 0.0
        return init + sum(a[3] for a in self.atoms)

    def density(self, y):
        """Pointwise density (atoms excluded); zero outside the support."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        yv = np.atleast_1d(y).astype(float)
        if np.any(yv < 0):
            raise ValueError("density evaluated at a negative position")
        out = np.zeros_like(yv)
        below = yv < self.splice
        if np.any(below):
            ys = self.jump_pos[::-1]
            ds = self.jump_density[::-1]
            out[below] = np.interp(yv[below], ys, ds)
        if np.any(~below) and self.init_x.size:
            dens = self.init_g0 * self.init_surv / self.decay0
            out[~below] = np.interp(yv[~below], self.init_pos, dens, left=dens[0], right=0.0)
        return float(out[0]) if scalar else out

    def cdf_grid(self):
        """Piecewise-linear cdf (ys, F), normalized to end at exactly 1."""
        cached = getattr(self, "_cdf_cache", None)
        if cached is not None:
            return cached
        ys = self.jump_pos[::-1]
        ds = self.jump_density[::-1]
        if self.init_x.size:
            ys = np.concatenate([ys, self.init_pos])
            ds = np.concatenate([ds, self.init_g0 * self.init_surv / self.decay0])
        cdf = cumulative_trapezoid(ds, ys)
        for _, pos, _, mass in sorted(self.atoms, key=lambda a: a[1]):
            k = np.searchsorted(ys, pos, side="right")
            ys = np.insert(ys, k, pos)
            cdf = np.insert(cdf, k, cdf[k - 1] if k > 0 else 0.0)
            cdf[k:] += mass
        total = cdf[-1]
        if total <= 0:
            raise MassDriftError("empty transported density")
        cdf = cdf / total
        self._cdf_cache = (ys, cdf)
        return self._cdf_cache

    def support(self):
        hi = self.init_pos[-1] if self.init_x.size else self.splice
        hi = max(hi, max((a[1] for a in self.atoms), default=0.0))
        return 0.0, float(hi)

    def rows(self):
        """(y, density, part) rows for CSV export."""
        out = [(float(y), float(d), "jump") for y, d in zip(self.jump_pos[::-1], self.jump_density[::-1])]
        if self.init_x.size:
            dens = self.init_g0 * self.init_surv / self.decay0
            out += [(float(y), float(d), "initial") for y, d in zip(self.init_pos, dens)]
        out += [(float(pos), float(mass), "atom") for _, pos, _, mass in self.atoms]
        return out


@dataclass(eq=False)
class MarginalSolution:
    """Drift, mean-rate and mean series plus frozen densities at snapshots."""

    lam: float
    rate: RateFunction
    times: np.ndarray
    a: np.ndarray
    p: np.ndarray
    m: np.ndarray
    snapshots: list

    def drift(self) -> DriftSeries:
        return DriftSeries(times=self.times, a=self.a)

    def snapshot_at(self, t: float) -> TransportedDensity:
        for snap in self.snapshots:
            if abs(snap.t - t) <= 1e-9 * max(1.0, abs(t)):
                return snap
        raise KeyError(f"no stored snapshot at t={t}")

    def consistency_residual(self, t: float, refine: int = 8) -> float:
        """|a_t - lam m - p| with p, m recomputed by fine quadrature in y."""
        snap = self.snapshot_at(t)
        lo, hi = snap.support()
        n = refine * max(64, snap.jump_s.size + snap.init_x.size)
        ys = np.linspace(lo, hi, n)
        dens = snap.density(ys)
        p = float(np.trapezoid(np.asarray(self.rate(ys), float) * dens, ys))
        m = float(np.trapezoid(ys * dens, ys))
        for _, pos, _, mass in snap.atoms:
            p += float(self.rate(pos)) * mass
            m += pos * mass
        return abs(snap.a_t - self.lam * m - p)


# ---------------------------------------------------------------------------
# Marginal solver
# ---------------------------------------------------------------------------


def _slab_geometry(lam: float, abar: float, dt: float):
    """Decay factors and flow offsets at {0, dt/2, dt} for constant drift."""
    if lam == 0.0:
        return (1.0, 1.0, 1.0), (0.0, 0.5 * abar * dt, abar * dt)
    d1 = math.exp(-0.5 * lam * dt)
    d2 = math.exp(-lam * dt)
    return (1.0, d1, d2), (0.0, abar * (1.0 - d1) / lam, abar * (1.0 - d2) / lam)


def _slab_survival(rate, positions, decays, offsets, dt):
    """exp(-int_slab f(phi)) for each starting position, 3-point Simpson."""
    f0 = np.asarray(rate(positions), dtype=float)
    f1 = np.asarray(rate(decays[1] * positions + offsets[1]), dtype=float)
    f2 = np.asarray(rate(decays[2] * positions + offsets[2]), dtype=float)
    return np.exp(-dt / 6.0 * (f0 + 4.0 * f1 + f2))


def solve_marginals(
    config: SystemConfig,
    dt: float | None = None,
    snapshot_times=(),
    init_nodes: int = 2000,
    corrector_passes: int = 1,
    dy_min: float = 0.0,
    adapt_rel: float | None = 0.02,
) -> MarginalSolution:
    """March the transported density over [0, horizon].

    One new jump node is born per step, so memory is O(horizon/dt); when
    dy_min > 0, interior nodes closer than dy_min in position are merged
    periodically. Steps over which the drift would change by more than
    adapt_rel (relatively) are bisected, up to 8 levels, which resolves
    fast initial transients without shrinking dt globally; pass
    adapt_rel=None for strictly fixed steps. Aborts with MassDriftError
    when the represented mass leaves [1 - mass_abs, 1 + mass_abs].
    """
    lam = config.lam
    rate = config.rate
    horizon = config.horizon
    mass_abs = config.tolerances.mass_abs
    dt = dt or config.dt

    snap_req = np.asarray(sorted(set(float(t) for t in snapshot_times)), dtype=float)
    if snap_req.size and (snap_req[0] < 0 or snap_req[-1] > horizon + 1e-12):
        raise ConfigError("snapshot times must lie in [0, horizon]")

    k = max(2, int(round(horizon / dt)))
    grid = np.union1d(np.linspace(0.0, horizon, k + 1), snap_req)
    grid = grid[np.concatenate([[True], np.diff(grid) > 1e-9 * dt])]

    xs, g0v, atom_list = config.initial.solver_nodes(init_nodes)
    atoms = [(x0, mass, 1.0) for x0, mass in atom_list]  # (origin, mass, survival)
    init_surv = np.ones_like(g0v)

    p0 = float(np.trapezoid(np.asarray(rate(xs), float) * g0v, xs)) if xs.size else 0.0
    m0 = float(np.trapezoid(xs * g0v, xs)) if xs.size else 0.0
    for x0, mass, _ in atoms:
        p0 += float(rate(x0)) * mass
        m0 += x0 * mass
    a0 = lam * m0 + p0

    # jump-part arrays; the s=0 node rides at the splice point
    s_nodes = [0.0]
    jump_pos = np.array([0.0])
    jump_w = np.array([1.0])
    jump_pb = [p0]
    jump_dv = np.array([p0 / a0 if a0 > 0 else 0.0])

    splice = 0.0
    decay0 = 1.0

    times = [0.0]
    a_series = [a0]
    p_series = [p0]
    m_series = [m0]
    snapshots: list[TransportedDensity] = []

    def freeze(t, a_t, p_t, m_t):
        init_pos = decay0 * xs + splice if xs.size else xs
        snapshots.append(
            TransportedDensity(
                t=float(t),
                lam=lam,
                splice=splice,
                decay0=decay0,
                a_t=a_t,
                p_t=p_t,
                m_t=m_t,
                jump_s=np.asarray(s_nodes).copy(),
                jump_pos=jump_pos.copy(),
                jump_weight=jump_w.copy(),
                jump_density=jump_dv.copy(),
                jump_p_birth=np.asarray(jump_pb).copy(),
                init_x=xs,
                init_pos=init_pos,
                init_g0=g0v,
                init_surv=init_surv.copy(),
                atoms=[(x0, decay0 * x0 + splice, mass, mass * surv) for x0, mass, surv in atoms],
            )
        )

    snap_set = set(np.round(snap_req, 12))
    if round(0.0, 12) in snap_set:
        freeze(0.0, a0, p0, m0)

    def attempt(t_lo: float, t_hi: float):
        """Predictor-corrector trial step [t_lo, t_hi]; nothing committed."""
        h = t_hi - t_lo
        s_arr = np.asarray(s_nodes)
        pb_arr = np.asarray(jump_pb)
        init_pos = decay0 * xs + splice if xs.size else xs
        atom_pos = np.asarray([decay0 * x0 + splice for x0, _, _ in atoms])
        atom_ms = np.asarray([mass * surv for _, mass, surv in atoms])
        abar = a_series[-1]
        ifac = afac = None
        for _ in range(1 + max(0, corrector_passes)):
            decays, offsets = _slab_geometry(lam, abar, h)
            pos_new = decays[2] * jump_pos + offsets[2]
            w_fac = _slab_survival(rate, jump_pos, decays, offsets, h)
            p_new = float(
                np.trapezoid(
                    np.append(np.asarray(rate(pos_new), float) * pb_arr * jump_w * w_fac, 0.0),
                    np.append(s_arr, t_hi),
                )
            )
            m_new = float(
                np.trapezoid(np.append(pos_new * pb_arr * jump_w * w_fac, 0.0), np.append(s_arr, t_hi))
            )
            if xs.size:
                ifac = _slab_survival(rate, init_pos, decays, offsets, h)
                ipos_new = decays[2] * init_pos + offsets[2]
                p_new += float(np.trapezoid(np.asarray(rate(ipos_new), float) * g0v * init_surv * ifac, xs))
                m_new += float(np.trapezoid(ipos_new * g0v * init_surv * ifac, xs))
            if atoms:
                afac = _slab_survival(rate, atom_pos, decays, offsets, h)
                apos_new = decays[2] * atom_pos + offsets[2]
                p_new += float(np.sum(np.asarray(rate(apos_new), float) * atom_ms * afac))
                m_new += float(np.sum(apos_new * atom_ms * afac))
            a_new = lam * m_new + p_new
            if not math.isfinite(a_new):
                raise MassDriftError(f"non-finite drift at t={t_hi}")
            abar = 0.5 * (a_series[-1] + a_new)  # trapezoidal average for the redo
        return pos_new, w_fac, ifac, afac, decays, offsets, p_new, m_new, a_new

    for step in range(grid.size - 1):
        pending = [(float(grid[step]), float(grid[step + 1]))]
        while pending:
            t, t_next = pending.pop()
            pos_new, w_fac, ifac, afac, decays, offsets, p_new, m_new, a_new = attempt(t, t_next)

            a_prev = a_series[-1]
            scale = max(abs(a_prev), abs(a_new), 1e-12)
            if (
                adapt_rel is not None
                and abs(a_new - a_prev) > adapt_rel * scale
                and (t_next - t) > (grid[step + 1] - grid[step]) / 256.0
            ):
                mid = 0.5 * (t + t_next)
                pending.append((mid, t_next))
                pending.append((t, mid))
                continue

            # commit the slab
            jump_pos = pos_new
            jump_w = jump_w * w_fac
            jump_dv = jump_dv * w_fac * (1.0 / decays[2])
            if xs.size:
                init_surv = init_surv * ifac
            atoms = [(x0, mass, surv * fac) for (x0, mass, surv), fac in zip(atoms, afac)] if atoms else atoms
            splice = decays[2] * splice + offsets[2]
            decay0 *= decays[2]

            s_nodes.append(float(t_next))
            jump_pos = np.append(jump_pos, 0.0)
            jump_w = np.append(jump_w, 1.0)
            jump_pb.append(p_new)
            jump_dv = np.append(jump_dv, p_new / a_new if a_new > 0 else 0.0)

            times.append(float(t_next))
            a_series.append(a_new)
            p_series.append(p_new)
            m_series.append(m_new)

            mass = float(np.trapezoid(np.asarray(jump_pb) * jump_w, np.asarray(s_nodes)))
            if xs.size:
                mass += float(np.trapezoid(g0v * init_surv, xs))
            mass += sum(mass0 * surv for _, mass0, surv in atoms)
            if abs(mass - 1.0) > mass_abs:
                raise MassDriftError(f"mass {mass:.8f} drifted beyond {mass_abs} at t={t_next}")

        if dy_min > 0 and step % 64 == 63 and len(s_nodes) > 8:
            keep = _prune_nodes(jump_pos, dy_min)
            s_nodes = [s_nodes[i] for i in keep]
            jump_pb = [jump_pb[i] for i in keep]
            jump_pos = jump_pos[keep]
            jump_w = jump_w[keep]
            jump_dv = jump_dv[keep]

        if round(float(grid[step + 1]), 12) in snap_set:
            freeze(grid[step + 1], a_series[-1], p_series[-1], m_series[-1])

    return MarginalSolution(
        lam=lam,
        rate=rate,
        times=np.asarray(times),
        a=np.asarray(a_series),
        p=np.asarray(p_series),
        m=np.asarray(m_series),
        snapshots=snapshots,
    )


def _prune_nodes(pos: np.ndarray, dy_min: float) -> list:
    """Indices to keep so adjacent kept positions differ by >= dy_min."""
    keep = [0]
    for k in range(1, pos.size - 1):
        if abs(pos[k] - pos[keep[-1]]) >= dy_min:
            keep.append(k)
    keep.append(pos.size - 1)
    return keep


def density_at(sol: MarginalSolution, t: float, y):
    """Density of the solved marginal at a stored snapshot time."""
    return sol.snapshot_at(t).density(y)


# ---------------------------------------------------------------------------
# Nonlinear process: single paths and the particle/limit coupling
# ---------------------------------------------------------------------------


class _FlowEval:
    """Fast scalar evaluation of I(t) = int_0^t exp(-lam (t-u)) a_u du."""

    def __init__(self, drift: DriftSeries, lam: float, tol: float = 1e-10):
        ft, fa, nodes = drift._fine_grid(lam, tol)
        self.ft = ft
        self.fa = fa
        self.nodes = nodes
        self.ft_list = ft.tolist()
        self.fa_list = fa.tolist()
        self.node_list = nodes.tolist()
        self.lam = lam
        self.t_end = float(ft[-1])

    def integral_to(self, t: float) -> float:
        ft = self.ft_list
        j = bisect.bisect_right(ft, t) - 1
        if j < 0:
            j = 0
        if j > len(ft) - 2:
            j = len(ft) - 2
        h = t - ft[j]
        lam = self.lam
        a_lo = self.fa_list[j]
        a_hi = self.fa_list[j + 1]
        seg = ft[j + 1] - ft[j]
        frac = h / seg
        a_t = a_lo + (a_hi - a_lo) * frac
        a_mid = a_lo + (a_hi - a_lo) * 0.5 * frac
        part = h / 6.0 * (math.exp(-lam * h) * a_lo + 4.0 * math.exp(-lam * 0.5 * h) * a_mid + a_t)
        return self.node_list[j] * math.exp(-lam * h) + part

    def flow(self, s: float, t: float, x: float) -> float:
        decay = math.exp(-self.lam * (t - s))
        return decay * x + self.integral_to(t) - decay * self.integral_to(s)


@dataclass
class NonlinearPath:
    """One realization of the limit process: flow between jumps, resets to 0."""

    y0: float
    jump_times: np.ndarray
    lam: float
    _flow: _FlowEval

    def value(self, t: float) -> float:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        if k == 0:
            return self._flow.flow(0.0, t, self.y0)
        return self._flow.flow(float(self.jump_times[k - 1]), t, 0.0)


def simulate_nonlinear_path(
    drift: DriftSeries,
    y0: float,
    rate: RateFunction,
    lam: float,
    rng: np.random.Generator,
    t_end: float | None = None,
) -> NonlinearPath:
    """Exact thinning of the limit process against the solved drift.

    The flow from y never exceeds max(y, sup a / lam) (lam > 0), or
    y + remaining integral of a (lam = 0), so f of that cap dominates the
    jump rate over the whole remaining horizon and acceptance needs only
    pointwise flow values.
    """
    fe = _FlowEval(drift, lam)
    t_end = fe.t_end if t_end is None else float(t_end)
    a_top = float(np.max(drift.a))
    a_total = fe.integral_to(t_end) if lam == 0.0 else 0.0
    jumps = []
    t_cur, y_cur = 0.0, float(y0)
    while True:
        if lam == 0.0:
            top = y_cur + a_total - fe.integral_to(t_cur)
        else:
            top = max(y_cur, a_top / lam)
        bound = float(rate(top))
        if bound <= 0.0:
            break
        tau = t_cur + rng.exponential() / bound
        if tau >= t_end:
            break
        y_prop = fe.flow(t_cur, tau, y_cur)
        if rng.random() * bound <= float(rate(y_prop)):
            jumps.append(tau)
            y_cur = 0.0
        else:
            y_cur = y_prop
        t_cur = tau
    return NonlinearPath(y0=float(y0), jump_times=np.asarray(jumps), lam=lam, _flow=fe)


@dataclass
class CoupledStats:
    """Per-snapshot coupling statistics, averaged within each replicate."""

    n: int
    snapshot_times: np.ndarray
    mean_abs_diff: np.ndarray
    mean_h_diff: np.ndarray
    w1: np.ndarray
    replicates: int = 1

    @staticmethod
    def combine(parts: list["CoupledStats"]) -> "CoupledStats":
        if not parts:
            raise ValueError("nothing to combine")
        n = parts[0].n
        ts = parts[0].snapshot_times
        reps = sum(p.replicates for p in parts)
        w = np.array([p.replicates for p in parts], dtype=float)[:, None]
        return CoupledStats(
            n=n,
            snapshot_times=ts,
            mean_abs_diff=np.sum(w * [p.mean_abs_diff for p in parts], axis=0) / reps,
            mean_h_diff=np.sum(w * [p.mean_h_diff for p in parts], axis=0) / reps,
            w1=np.sum(w * [p.w1 for p in parts], axis=0) / reps,
            replicates=reps,
        )


def simulate_coupled(
    config: SystemConfig,
    sol: MarginalSolution,
    snapshot_times,
    event_budget: int = 100_000_000,
) -> CoupledStats:
    """One replicate of the particle system coupled to N limit processes.

    Limit path i starts at the same draw as particle i and consumes the
    same proposal stream: each proposal (tau, u) carries the mark
    z = u * B_i, and each process jumps iff z undercuts its own current
    rate, which realizes one shared driving measure per index. Kicks reach
    only the particles; the limit paths ride the solved drift.
    """
    snap_times = np.asarray(sorted(float(t) for t in snapshot_times), dtype=float)
    if snap_times.size == 0:
        raise ConfigError("coupled run needs at least one snapshot time")
    if snap_times[-1] > config.horizon + 1e-12 or snap_times[0] < 0:
        raise ConfigError("snapshot times must lie in [0, horizon]")
    if sol.times[-1] < config.horizon - 1e-9:
        raise ConfigError("marginal solution must cover the run horizon")
    laws = [sol.snapshot_at(ts).cdf_grid() for ts in snap_times]

    n = config.n
    lam = config.lam
    f = config.rate
    horizon = config.horizon
    drift = sol.drift()
    fe = _FlowEval(drift, lam)
    a_top = float(np.max(drift.a))

    rngs = [substream(config.seed, "prop", i) for i in range(n)]
    x = np.empty(n)
    for i in range(n):
        x[i] = config.initial.sample(substream(config.seed, "init", i), 1)[0]

    xbar = float(np.sort(x).mean())
    anchor_x = x.copy()
    t_anchor = 0.0

    y_anchor = x.copy()
    ta_y = np.zeros(n)
    i_at_anchor = np.zeros(n)  # I(ta_y_i), cached for vectorized evaluation

    def y_bound(ya: float, ta: float) -> float:
        if lam == 0.0:
            return float(f(ya + fe.integral_to(horizon) - fe.integral_to(ta)))
        return float(f(max(ya, a_top / lam)))

    if lam == 0.0:
        bx = np.asarray(f(anchor_x), dtype=float)
    else:
        bx = np.asarray(f(np.maximum(anchor_x, xbar)), dtype=float)
    by = np.array([y_bound(y_anchor[i], 0.0) for i in range(n)])
    bounds = np.maximum(bx, by)

    next_time = np.empty(n)
    for i in range(n):
        next_time[i] = t_anchor + rngs[i].exponential() / bounds[i] if bounds[i] > 0 else math.inf

    spikes = 0
    mean_abs = np.zeros(snap_times.size)
    mean_h = np.zeros(snap_times.size)
    w1s = np.zeros(snap_times.size)
    snap_i = 0

    def emit_until(limit: float):
        nonlocal snap_i
        while snap_i < snap_times.size and snap_times[snap_i] <= limit + 1e-15:
            ts = snap_times[snap_i]
            decay = math.exp(-lam * (ts - t_anchor))
            xv = xbar + decay * (anchor_x - xbar)
            dy = np.exp(-lam * (ts - ta_y))
            yv = fe.integral_to(ts) + dy * (y_anchor - i_at_anchor)
            mean_abs[snap_i] = float(np.mean(np.abs(xv - yv)))
            hx = np.asarray(f(xv), float) + np.arctan(xv)
            hy = np.asarray(f(yv), float) + np.arctan(yv)
            mean_h[snap_i] = float(np.mean(np.abs(hx - hy)))
            w1s[snap_i] = w1_samples_vs_law(np.sort(xv), laws[snap_i])
            snap_i += 1

    while True:
        i = int(np.argmin(next_time))
        tau = float(next_time[i])
        if tau > horizon or not math.isfinite(tau):
            emit_until(horizon)
            break
        emit_until(tau)

        u = rngs[i].random()
        z = u * bounds[i]
        decay_i = math.exp(-lam * (tau - t_anchor))
        xi = xbar + decay_i * (anchor_x[i] - xbar)
        dyi = math.exp(-lam * (tau - ta_y[i]))
        yi = fe.integral_to(tau) + dyi * (y_anchor[i] - i_at_anchor[i])
        jump_x = z <= float(f(xi))
        jump_y = z <= float(f(yi))

        if jump_y:
            y_anchor[i] = 0.0
            ta_y[i] = tau
            i_at_anchor[i] = fe.integral_to(tau)
            by[i] = y_bound(0.0, tau)

        if jump_x:
            spikes += 1
            if spikes > event_budget:
                raise EventBudgetExceededError(f"more than {event_budget} spikes")
            decay = math.exp(-lam * (tau - t_anchor))
            x_now = xbar + decay * (anchor_x - xbar)
            x_now += 1.0 / n
            x_now[i] = 0.0
            xbar = xbar + ((n - 1) / n - xi) / n
            if spikes % 4096 == 0:
                xbar = float(np.sort(x_now).mean())
            anchor_x = x_now
            t_anchor = tau
            old = bounds
            if lam == 0.0:
                bx = np.asarray(f(anchor_x), dtype=float)
            else:
                bx = np.asarray(f(np.maximum(anchor_x, xbar)), dtype=float)
            bounds = np.maximum(bx, by)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(bounds > 0, old / bounds, math.inf)
                next_time = tau + (next_time - tau) * ratio
            for j in np.nonzero((old <= 0) & (bounds > 0))[0]:
                next_time[j] = tau + rngs[j].exponential() / bounds[j]
        else:
            bounds[i] = max(bx[i], by[i])

        next_time[i] = tau + rngs[i].exponential() / bounds[i] if bounds[i] > 0 else math.inf

    return CoupledStats(
        n=n,
        snapshot_times=snap_times,
        mean_abs_diff=mean_abs,
        mean_h_diff=mean_h,
        w1=w1s,
        replicates=1,
    )
