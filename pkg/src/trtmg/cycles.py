"""Time stepping, outer transport iterations, and multigrid inner cycles.

One time step runs transport (outer) iterations; each begins with a sweep
at the latest temperature (skipped on the very first pass, which reuses the
previous step's closures) and then drives the temperature with inner cycles
of low-order solves.  A cycle always solves the full multigroup system on
the fine grid, evaluates temperature through the grey problem, and then
walks the scheduled coarse grids, re-evaluating spectral coefficients at
each fresh temperature but weighing them with this cycle's fine solution.

Iteration accounting: a "low-order solve" is one single-interval moment
solve on any grid (the grey solve counts one), so a cycle with K scheduled
coarse visits costs n_fine + sum of coarse group counts + (K + 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grey, loqd, phys, transport
from .grids import AngularQuadrature, FrequencyGridHierarchy, SpatialMesh
from .phys import CONST, MaterialModel, PhysicalConstants


class ScheduleError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CycleSchedule:
    """Grid-visit plan for inner cycles.

    counts: groups per grid, finest first, ending in 1 (the grey grid).
    visits: 1-based grid numbers solved after each grey temperature update,
    in visit order (F walks coarsest-intermediate to finest-intermediate).
    """
    kind: str
    counts: tuple
    visits: tuple
    l_max: int

    @property
    def n_grids(self) -> int:
        return len(self.counts)


def make_schedule(kind: str, counts, l_max: int, visits=None) -> CycleSchedule:
    counts = tuple(int(n) for n in counts)
    kind = kind.upper() if kind.upper() in ("V", "W", "F") else kind.lower()
    if len(counts) < 2 or counts[-1] != 1:
        raise ScheduleError(f"grid counts must end in 1, got {counts}")
    if any(a <= b for a, b in zip(counts, counts[1:])):
        raise ScheduleError(f"grid counts must strictly decrease, got {counts}")
    if l_max < 1:
        raise ScheduleError(f"l_max must be >= 1, got {l_max}")
    n = len(counts)
    if kind == "V":
        if n != 2:
            raise ScheduleError("V cycle uses exactly two grids (fine, grey)")
        visits = ()
    elif kind == "W":
        if n != 3:
            raise ScheduleError("W cycle uses exactly three grids")
        visits = (2,)
    elif kind == "F":
        if n < 3:
            raise ScheduleError("F cycle needs at least one intermediate grid")
        visits = tuple(range(n - 1, 1, -1))
    elif kind == "custom":
        if visits is None:
            raise ScheduleError("custom schedule requires an explicit visit list")
        visits = tuple(int(g) for g in visits)
        for g in visits:
            if not 1 < g < n:
                raise ScheduleError(
                    f"visit {g} outside intermediate grid range 2..{n - 1}")
    else:
        raise ScheduleError(f"unknown cycle kind {kind!r}")
    return CycleSchedule(kind=kind, counts=counts, visits=visits, l_max=l_max)


def per_cycle_cost(schedule: CycleSchedule) -> int:
    """Low-order solves performed by one cycle."""
    coarse = sum(schedule.counts[g - 1] for g in schedule.visits)
    return schedule.counts[0] + coarse + len(schedule.visits) + 1


@dataclass(frozen=True)
class ConvergenceCriteria:
    eps: float = 1e-6        # outer (transport) relative tolerance
    eps_tilde: float = 1e-7  # inner (cycle) relative tolerance
    max_outer: int = 200
    n_newton: int = 1

    def __post_init__(self):
        if not 0.0 < self.eps_tilde <= self.eps < 1.0:
            raise ValueError("need 0 < eps_tilde <= eps < 1")


@dataclass
class IterationStats:
    n_ti: int = 0
    n_c: int = 0
    n_lo: int = 0

    def add_low_order(self, n: int):
        self.n_lo += int(n)


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    m_ti: int
    m_c: int
    m_lo: int
    material_energy: float   # integral of c_v T over the slab
    radiation_energy: float  # integral of total E over the slab
    flux_left: float         # committed spectrum-total boundary fluxes
    flux_right: float


@dataclass(frozen=True)
class ConvRecord:
    step: int
    s: int       # transport iteration
    cycle: int   # inner cycle index, 0 for the outer-iteration change
    dT: float    # max-norm temperature change


@dataclass(frozen=True)
class Problem:
    """Static problem definition: geometry, material, spectral opacity,
    quadrature, grid hierarchy, and boundary/initial data."""
    mesh: SpatialMesh
    quad: AngularQuadrature
    hierarchy: FrequencyGridHierarchy
    material: MaterialModel
    sigma: object              # callable (nu, T) -> opacity
    inc_left: np.ndarray       # (G, M) transport inflow at x=0 (mu>0 rows used)
    inc_right: np.ndarray      # (G, M) transport inflow at x=X (mu<0 rows used)
    E_in: np.ndarray           # (G, 2) incoming moment data for the low order
    F_in: np.ndarray           # (G, 2)
    T_init: float = phys.T_FLOOR
    constants: PhysicalConstants = CONST


@dataclass
class SimulationState:
    t: float
    T: np.ndarray            # (n_x,)
    T_r: np.ndarray          # (n_x,) radiation temperature for opacity weights
    psi: np.ndarray          # (G, M, n_x, 2) corner intensities
    E: np.ndarray            # (G, n_x) committed fine moments
    F: np.ndarray            # (G, n_x+1)
    closures: transport.ClosureData


def initial_state(problem: Problem) -> SimulationState:
    """Isotropic Planckian field at the initial temperature, zero flux."""
    const = problem.constants
    nx = problem.mesh.n_cells
    G = problem.hierarchy.fine.n_groups
    M = problem.quad.n_dirs
    T0 = np.broadcast_to(np.asarray(problem.T_init, dtype=float),
                         (nx,)).astype(float)
    B0 = phys.planck_groups(T0, problem.hierarchy.fine.edges, const)  # (nx, G)
    psi = np.empty((G, M, nx, 2))
    psi[:] = (0.5 * B0.T)[:, None, :, None]
    E = 2.0 * B0.T / const.c
    F = np.zeros((G, nx + 1))
    return SimulationState(
        t=0.0, T=T0, T_r=phys.radiation_temperature(E.sum(axis=0), const),
        psi=psi, E=E, F=F,
        closures=transport.ClosureData.isotropic(G, nx))


@dataclass
class _StepWork:
    """Mutable scratch shared by the stages of one time step."""
    T: np.ndarray
    T_r: np.ndarray
    psi: np.ndarray
    closures: transport.ClosureData
    E_mon: np.ndarray
    grey_E_prev: np.ndarray
    grey_F_prev: np.ndarray
    fine_sol: loqd.MomentField = None
    fine_coef: loqd.LoqdCoefficients = None
    # divided-difference stage history (T, sigma_E, emission); starts empty
    # each time step and persists across the step's transport iterations
    hist: tuple = None


def _dinf(new, old) -> float:
    return float(np.max(np.abs(np.asarray(new) - np.asarray(old))))


def _rel(change: float, new) -> float:
    scale = float(np.max(np.abs(new)))
    if scale == 0.0:
        return 0.0 if change == 0.0 else np.inf
    return change / scale


def _grey_stage(problem: Problem, prev: SimulationState, coef_src, sol_src,
                T_stage, dt, criteria, stats, hist, grey_level, work):
    const = problem.constants
    gp = grey.form_grey(sol_src, coef_src, grey_level, const)
    sig_grey = gp.coef.sig_E[0].copy()
    T_stage = np.asarray(T_stage, dtype=float)
    emis_stage = const.c * gp.coef.sig_B[0] * const.a_R * T_stage**4
    if hist is None:
        dsig = np.zeros_like(work.T)
        demis = None
    else:
        dsig = grey.frechet_update(hist[0], hist[1], T_stage, sig_grey)
        demis = grey.frechet_update(hist[0], hist[2], T_stage, emis_stage)
    T_new, _ = grey.solve_grey_meb(
        gp, dsig, prev.T, work.grey_E_prev, work.grey_F_prev, T_stage, dt,
        problem.material, problem.mesh, const,
        n_newton=criteria.n_newton, demis=demis, tally=stats)
    return T_new, (T_stage.copy(), sig_grey, emis_stage)


def run_cycle(problem: Problem, prev: SimulationState, T_tilde, work: _StepWork,
              schedule: CycleSchedule, criteria: ConvergenceCriteria,
              dt: float, stats: IterationStats, hist):
    """One inner cycle: fine-grid spectrum, grey temperature update, then the
    scheduled coarse grids (each followed by a grey update).  Returns the new
    temperature iterate and the Frechet stage history."""
    const = problem.constants
    hier = problem.hierarchy
    mesh = problem.mesh
    edges = hier.fine.edges
    grey_level = hier.n_levels - 1

    opac = phys.build_group_opacities(T_tilde, work.T_r, edges, problem.sigma,
                                      const)
    coef1 = loqd.build_fine_coefficients(opac, work.closures, problem.E_in,
                                         problem.F_in, mesh)
    sol1 = loqd.solve_moment_system(coef1, prev.E, prev.F, dt, mesh, const,
                                    tally=stats)
    work.fine_sol, work.fine_coef = sol1, coef1
    work.T_r = phys.radiation_temperature(sol1.total_E(), const)

    T_cur, hist = _grey_stage(problem, prev, coef1, sol1, T_tilde, dt,
                              criteria, stats, hist, grey_level, work)
    for gnum in schedule.visits:
        level = gnum - 1
        # spectral coefficients refresh at the newest temperature, weighted
        # with this cycle's fine solution
        opk = phys.build_group_opacities(T_cur, work.T_r, edges, problem.sigma,
                                         const)
        c1k = loqd.build_fine_coefficients(opk, work.closures, problem.E_in,
                                           problem.F_in, mesh)
        coefk = loqd.restrict_coefficients(c1k, sol1, hier, level, const)
        E_pk = hier.restrict(prev.E, level, axis=0)
        F_pk = hier.restrict(prev.F, level, axis=0)
        solk = loqd.solve_moment_system(coefk, E_pk, F_pk, dt, mesh, const,
                                        tally=stats)
        T_cur, hist = _grey_stage(problem, prev, coefk, solk, T_cur, dt,
                                  criteria, stats, hist, grey_level, work)
    stats.n_c += 1
    return T_cur, hist


def run_transport_iteration(problem: Problem, prev: SimulationState,
                            work: _StepWork, schedule: CycleSchedule,
                            criteria: ConvergenceCriteria, s: int, dt: float,
                            stats: IterationStats, conv=None, step_index=0):
    """One outer iteration: sweep (for s > 0) then inner cycles to tolerance
    or l_max.  Returns the outer relative changes (dT, dE)."""
    const = problem.constants
    if s > 0:
        opac = phys.build_group_opacities(work.T, work.T_r,
                                          problem.hierarchy.fine.edges,
                                          problem.sigma, const)
        work.psi, work.closures = transport.transport_solve(
            prev.psi, problem.inc_left, problem.inc_right, opac, problem.mesh,
            problem.quad, dt, const)
        stats.n_ti += 1

    T_entry = work.T
    E_entry = work.E_mon
    T_tilde = work.T
    for ell in range(1, schedule.l_max + 1):
        T_new, work.hist = run_cycle(problem, prev, T_tilde, work, schedule,
                                     criteria, dt, stats, work.hist)
        E_new = work.fine_sol.total_E()
        dT = _dinf(T_new, T_tilde)
        dE = _dinf(E_new, work.E_mon)
        rT, rE = _rel(dT, T_new), _rel(dE, E_new)
        if conv is not None:
            conv.append(ConvRecord(step_index, s, ell, dT))
        T_tilde, work.E_mon = T_new, E_new
        if rT <= criteria.eps_tilde and rE <= criteria.eps_tilde:
            break
    work.T = T_tilde
    dT_out = _dinf(T_tilde, T_entry)
    dE_out = _dinf(work.E_mon, E_entry)
    if conv is not None:
        conv.append(ConvRecord(step_index, s, 0, dT_out))
    return _rel(dT_out, T_tilde), _rel(dE_out, work.E_mon)


def run_time_step(problem: Problem, state: SimulationState,
                  schedule: CycleSchedule, criteria: ConvergenceCriteria,
                  dt: float, stats: IterationStats = None, conv=None,
                  step_index: int = 0) -> SimulationState:
    """Advance one time step and return the committed new state.

    At least one sweep always happens (convergence is only tested from
    s >= 1).  The committed temperature re-solves the material balance from
    the final fine-grid solution so that the discrete material + radiation
    energy bookkeeping closes to round-off.
    """
    if stats is None:
        stats = IterationStats()
    const = problem.constants
    work = _StepWork(
        T=state.T.copy(), T_r=state.T_r.copy(), psi=state.psi,
        closures=state.closures, E_mon=state.E.sum(axis=0),
        grey_E_prev=state.E.sum(axis=0, keepdims=True),
        grey_F_prev=state.F.sum(axis=0, keepdims=True))

    converged = False
    rT = rE = np.inf
    for s in range(criteria.max_outer + 1):
        rT, rE = run_transport_iteration(problem, state, work, schedule,
                                         criteria, s, dt, stats, conv,
                                         step_index)
        if s >= 1 and rT <= criteria.eps and rE <= criteria.eps:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"step {step_index}: outer iterations hit the cap "
            f"{criteria.max_outer} (dT={rT:.3e}, dE={rE:.3e})")

    # commit; temperature from the material balance at the final fine
    # solution makes the summed discrete energy budget exact
    sol, coef = work.fine_sol, work.fine_coef
    absorbed = const.c * (coef.sig_E * sol.E).sum(axis=0)
    emitted = 2.0 * (coef.sig_B * coef.B).sum(axis=0)
    T_fin = np.maximum(
        state.T + (dt / problem.material.c_v) * (absorbed - emitted),
        phys.T_FLOOR)
    return SimulationState(t=state.t + dt, T=T_fin, T_r=work.T_r,
                           psi=work.psi, E=sol.E, F=sol.F,
                           closures=work.closures)


@dataclass
class SimulationResult:
    initial: StepRecord
    steps: list
    snapshots: list          # (t, T, E_total) tuples
    conv: list
    stats: IterationStats
    state: SimulationState
    schedule: CycleSchedule


def _energy_record(problem, state, step, m_ti=0, m_c=0, m_lo=0) -> StepRecord:
    dx = problem.mesh.dx
    F_tot = state.F.sum(axis=0)
    return StepRecord(
        step=step, t=state.t, m_ti=m_ti, m_c=m_c, m_lo=m_lo,
        material_energy=float(dx @ problem.material.energy(state.T)),
        radiation_energy=float(dx @ state.E.sum(axis=0)),
        flux_left=float(F_tot[0]), flux_right=float(F_tot[-1]))


def run_simulation(problem: Problem, schedule: CycleSchedule,
                   criteria: ConvergenceCriteria, dt: float, t_end: float,
                   snapshot_times=()) -> SimulationResult:
    """Fixed-step time loop with per-step iteration counts, energy tallies,
    and field snapshots at the requested times."""
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9 * max(t_end, dt):
        raise ValueError(f"t_end={t_end} is not a positive multiple of dt={dt}")
    snap_times = sorted(float(t) for t in snapshot_times)

    state = initial_state(problem)
    stats = IterationStats()
    conv = []
    steps = []
    snapshots = []
    initial = _energy_record(problem, state, 0)
    if any(abs(ts) <= 0.5 * dt for ts in snap_times):
        snapshots.append((0.0, state.T.copy(), state.E.sum(axis=0)))

    for j in range(1, n_steps + 1):
        before = (stats.n_ti, stats.n_c, stats.n_lo)
        state = run_time_step(problem, state, schedule, criteria, dt, stats,
                              conv, j)
        state.t = j * dt  # avoid accumulation drift
        steps.append(_energy_record(
            problem, state, j, m_ti=stats.n_ti - before[0],
            m_c=stats.n_c - before[1], m_lo=stats.n_lo - before[2]))
        if any(abs(ts - state.t) < 0.5 * dt * (1.0 - 1e-9)
               for ts in snap_times):
            snapshots.append((state.t, state.T.copy(), state.E.sum(axis=0)))
    return SimulationResult(initial=initial, steps=steps, snapshots=snapshots,
                            conv=conv, stats=stats, state=state,
                            schedule=schedule)
