"""Checks of the inequality chain along a flow trace.

A trace records, per sample time t, the total area of the front, its Euler
characteristic, the Willmore energy W(t) = int H^2, a certified floor for
the ambient scalar curvature on the region swept so far, and the Hawking
mass. The checks:

* Geroch:   W(t2) <= W(t1) + int_{t1}^{t2} [4 pi chi - int R - W/2] ds
* Gronwall: W(t) <= W(0) e^{-t/2} + 4 pi e^{-t/2} int_0^t e^{s/2} chi ds
                    - (2/3) lambda |S_0| (e^t - e^{-t/2})
* the 8 pi bound and the gap bound c = 24 pi (2 - sqrt 2)/(4 - sqrt 2)
  on lambda * A0,
* monotonicity of the Hawking mass when R >= 0 and chi = 2.

All inequalities are checked one-sided: lhs <= rhs + tol.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _textio

FOUR_PI = 4.0 * math.pi
LOG2 = math.log(2.0)
BBN_CONSTANT = 8.0 * math.pi
GAP_CONSTANT = 24.0 * math.pi * (2.0 - math.sqrt(2.0)) / (4.0 - math.sqrt(2.0))

CSV_COLUMNS = ("t", "n_components", "total_area", "chi", "willmore", "min_R", "hawking", "jump")


class AuditError(ValueError):
    pass


class TraceFormatError(AuditError):
    pass


class SparseTrace(AuditError):
    pass


class CurvatureFloorViolated(AuditError):
    pass


class PreconditionUnmet(AuditError):
    pass


@dataclass(frozen=True, eq=False)
class FlowTrace:
    t: np.ndarray
    total_area: np.ndarray
    chi: np.ndarray
    willmore: np.ndarray
    min_R: np.ndarray
    hawking: np.ndarray
    is_jump: np.ndarray
    n_components: np.ndarray | None = None
    # exact int_{S_t} R when the producer knows it; not part of the CSV
    int_R: np.ndarray | None = None

    def __post_init__(self):
        n = len(np.asarray(self.t))
        for name in ("t", "total_area", "willmore", "min_R", "hawking"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "chi", np.asarray(self.chi, dtype=int))
        object.__setattr__(self, "is_jump", np.asarray(self.is_jump, dtype=bool))
        nc = self.n_components
        nc = self.chi // 2 if nc is None else np.asarray(nc, dtype=int)
        object.__setattr__(self, "n_components", nc)
        if self.int_R is not None:
            object.__setattr__(self, "int_R", np.asarray(self.int_R, dtype=float))
        for name in ("total_area", "chi", "willmore", "min_R", "hawking", "is_jump", "n_components"):
            if len(getattr(self, name)) != n:
                raise TraceFormatError(f"column {name} has wrong length")
        if n == 0:
            raise TraceFormatError("empty trace")

    def __len__(self):
        return len(self.t)

    def replace(self, **changes) -> "FlowTrace":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return FlowTrace(**data)

    def invariant_violations(self, area_tol: float) -> list[str]:
        """Structural checks: increasing times, e^t area law, even chi."""
        problems = []
        if np.any(np.diff(self.t) <= 0):
            problems.append("sample times not strictly increasing")
        ratio = self.total_area / (self.total_area[0] * np.exp(self.t - self.t[0]))
        dev = float(np.max(np.abs(ratio - 1.0)))
        if dev > area_tol:
            k = int(np.argmax(np.abs(ratio - 1.0)))
            problems.append(f"area law off by {dev:.3e} > {area_tol:.3e} at t={self.t[k]:.6g}")
        if np.any(self.chi % 2):
            problems.append("odd Euler characteristic")
        return problems

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        f = _textio.fmt_float
        for k in range(len(self.t)):
            row = (
                f(self.t[k]),
                str(int(self.n_components[k])),
                f(self.total_area[k]),
                str(int(self.chi[k])),
                f(self.willmore[k]),
                f(self.min_R[k]),
                f(self.hawking[k]),
                str(int(self.is_jump[k])),
            )
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FlowTrace":
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceFormatError("empty trace file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise TraceFormatError(f"trace header missing columns {missing}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        rows = [r for r in reader if r]
        try:
            col = {c: [float(r[idx[c]]) for r in rows] for c in CSV_COLUMNS}
        except (ValueError, IndexError) as exc:
            raise TraceFormatError(f"bad trace row: {exc}") from None
        return cls(
            t=col["t"],
            total_area=col["total_area"],
            chi=np.rint(col["chi"]).astype(int),
            willmore=col["willmore"],
            min_R=col["min_R"],
            hawking=col["hawking"],
            is_jump=np.asarray(col["jump"]) != 0,
            n_components=np.rint(col["n_components"]).astype(int),
        )


# -- Geroch / Gronwall ---------------------------------------------------------

def _roundoff(*scales) -> float:
    return 256 * np.finfo(float).eps * float(sum(abs(s) for s in scales))


def geroch_integrand(trace: FlowTrace, lam: float | None = None) -> np.ndarray:
    """4 pi chi - int R - W/2, with int R = lambda |S| if only a floor is known."""
    return FOUR_PI * trace.chi + _continuous_part(trace, lam)


def _continuous_part(trace: FlowTrace, lam: float | None) -> np.ndarray:
    if lam is not None:
        int_R = lam * trace.total_area
    elif trace.int_R is not None:
        int_R = trace.int_R
    else:
        int_R = trace.min_R * trace.total_area
    return -int_R - 0.5 * trace.willmore


def _pl_window(t, y, t1, t2):
    """Samples of the piecewise-linear interpolant of y restricted to [t1, t2]."""
    inner = (t > t1) & (t < t2)
    ts = np.concatenate(([t1], t[inner], [t2]))
    ys = np.concatenate(([np.interp(t1, t, y)], y[inner], [np.interp(t2, t, y)]))
    return ts, ys


@dataclass(frozen=True)
class GerochResult:
    residual: float
    tol: float
    exact_R: bool
    smooth: bool

    @property
    def upper_ok(self) -> bool:
        return self.residual <= self.tol

    @property
    def lower_ok(self) -> bool:
        # equality case: only meaningful with exact int R on jump-free stretches
        if not (self.exact_R and self.smooth):
            return True
        return self.residual >= -self.tol

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok

    def __float__(self):
        return self.residual


def geroch_check(
    trace: FlowTrace,
    t1: float,
    t2: float,
    lam: float | None = None,
    max_dt: float = 0.25,
    tol_scale: float = 1.0,
) -> GerochResult:
    """Residual W(t2) - W(t1) - int_{t1}^{t2} [4 pi chi - int R - W/2] ds.

    chi is a right-continuous step function and its term is integrated
    exactly; the rest uses the composite trapezoid rule of its
    piecewise-linear interpolant. Residuals therefore add exactly over
    adjacent intervals. A valid trace gives residual <= tol.
    """
    t = trace.t
    if not (t[0] <= t1 <= t2 <= t[-1]):
        raise AuditError(f"interval [{t1}, {t2}] outside trace range [{t[0]}, {t[-1]}]")
    g = _continuous_part(trace, lam)
    exact_R = lam is None and trace.int_R is not None
    if t1 == t2:
        return GerochResult(0.0, 0.0, exact_R, True)
    ts, gs = _pl_window(t, g, t1, t2)
    _, ws = _pl_window(t, trace.willmore, t1, t2)
    dt = np.diff(ts)
    if dt.max() > max_dt:
        raise SparseTrace(f"sample spacing {dt.max():.3g} exceeds {max_dt}")
    chi_left = trace.chi[np.searchsorted(t, ts[:-1], side="right") - 1]
    chi_part = float(np.sum(FOUR_PI * chi_left * dt))
    integral = float(np.sum(0.5 * (gs[:-1] + gs[1:]) * dt)) + chi_part
    residual = float(ws[-1] - ws[0] - integral)
    g_max = float(np.max(np.abs(gs))) + FOUR_PI * float(np.max(np.abs(chi_left)))
    tol = tol_scale * (
        10.0 * dt.max() ** 2 * g_max + _trapezoid_slack(dt, gs)
    ) + _roundoff(ws[-1], ws[0], chi_part, np.sum(np.abs(gs) * np.append(dt, 0.0)))
    inside = (t >= t1) & (t <= t2)
    smooth = not (np.any(trace.is_jump[inside & (t > t1)]) or np.any(np.diff(trace.chi[inside]) != 0))
    return GerochResult(residual, tol, exact_R, smooth)


def _trapezoid_slack(dt, fs):
    """Sum of per-cell bounds |int f - trapezoid| <= dt |df| / 2.

    The bound holds whenever f is monotone on a cell. On smooth stretches it
    is O(dt^2); it stays valid next to a minimal slice, where f behaves like
    sqrt(t - t0) and the dt^2 budget alone is too small.
    """
    return float(np.sum(0.5 * dt * np.abs(np.diff(fs))))


@dataclass(frozen=True)
class GronwallResult:
    t: float
    lhs: float
    rhs: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.tol

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.passed))


def chi_integral(trace: FlowTrace, t: float) -> float:
    """int_0^t e^{s/2} chi(s) ds for the right-continuous step function chi."""
    return float(_chi_integrals(trace, np.array([t]))[0])


def _chi_integrals(trace: FlowTrace, ts: np.ndarray) -> np.ndarray:
    s = trace.t - trace.t[0]
    ts = np.asarray(ts, dtype=float)
    # exact integral over each full cell, then the partial last cell
    cells = 2.0 * trace.chi[:-1] * np.diff(np.exp(s / 2))
    cum = np.concatenate(([0.0], np.cumsum(cells)))
    k = np.clip(np.searchsorted(s, ts, side="right") - 1, 0, len(s) - 1)
    return cum[k] + 2.0 * trace.chi[k] * (np.exp(ts / 2) - np.exp(s[k] / 2))


def gronwall_bound(trace: FlowTrace, lam: float, t: float, tol_scale: float = 1.0) -> GronwallResult:
    """Evaluate both sides of the backward-Gronwall bound at time t."""
    t0 = trace.t[0]
    if not (t0 <= t <= trace.t[-1]):
        raise AuditError(f"t={t} outside trace range")
    k_hi = int(np.searchsorted(trace.t, t, side="right"))
    if np.min(trace.min_R[:max(k_hi, 1)]) < lam - 1e-12 * max(1.0, abs(lam)):
        raise CurvatureFloorViolated(f"scalar curvature drops below lambda={lam} on the swept region")
    s = t - t0
    lhs = float(np.interp(t, trace.t, trace.willmore))
    W0 = float(trace.willmore[0])
    A0 = float(trace.total_area[0])
    decay = math.exp(-s / 2)
    chi_term = FOUR_PI * decay * chi_integral(trace, s)
    curv_term = (2.0 / 3.0) * lam * A0 * (math.exp(s) - decay)
    rhs = W0 * decay + chi_term - curv_term
    dt = np.diff(trace.t[: max(k_hi, 2)])
    dt_max = float(dt.max()) if dt.size else 0.0
    integrand_max = FOUR_PI * float(np.max(np.abs(trace.chi))) * math.exp(s / 2)
    tol = tol_scale * 10.0 * dt_max**2 * integrand_max + _roundoff(lhs, W0, chi_term, curv_term)
    return GronwallResult(float(t), lhs, float(rhs), tol)


# -- bounds on lambda * A0 -------------------------------------------------------

@dataclass(frozen=True)
class GapVerdict:
    lam: float
    A0: float
    product: float
    bound_used: str  # "8pi" or "c"
    bound_value: float
    passed: bool
    c_value: float
    log2_slack: float | None = None  # 16pi(1 - 1/sqrt2) - (2/3) lam A0 (2 - 1/sqrt2)

    @property
    def ratio(self) -> float:
        return self.product / self.bound_value

    def describe(self) -> str:
        op = "<=" if self.passed else ">"
        return (
            f"lambda*A0 = {self.product / math.pi:.6f} pi {op} "
            f"{self.bound_value / math.pi:.6f} pi [{self.bound_used}]"
        )


def gap_constant_log2_form() -> float:
    """c recovered from 0 <= 16 pi (1 - 1/sqrt2) - (2/3) c (2 - 1/sqrt2)."""
    r = 1.0 / math.sqrt(2.0)
    return 16.0 * math.pi * (1.0 - r) * 1.5 / (2.0 - r)


def _check_inputs(lam, A0):
    if lam < 0 or A0 <= 0:
        raise AuditError("need lambda >= 0 and A0 > 0")


def gap_certificate(lam: float, A0: float) -> GapVerdict:
    _check_inputs(lam, A0)
    c = GAP_CONSTANT
    c_alt = gap_constant_log2_form()
    if abs(c - c_alt) > 1e-12 * c:
        raise AssertionError(f"gap constant forms disagree: {c!r} vs {c_alt!r}")
    r = 1.0 / math.sqrt(2.0)
    product = lam * A0
    slack = 16.0 * math.pi * (1.0 - r) - (2.0 / 3.0) * product * (2.0 - r)
    passed = product <= c * (1 + 1e-12)
    if passed != (slack >= -1e-12 * c):
        raise AssertionError("the two forms of the gap certificate disagree")
    return GapVerdict(lam, A0, product, "c", c, passed, c, slack)


def bbn_bound(lam: float, A0: float) -> GapVerdict:
    _check_inputs(lam, A0)
    product = lam * A0
    return GapVerdict(
        lam, A0, product, "8pi", BBN_CONSTANT, product <= BBN_CONSTANT * (1 + 1e-12), GAP_CONSTANT
    )


# -- Hawking mass ---------------------------------------------------------------------

@dataclass(frozen=True)
class HawkingResult:
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual >= -self.tol

    def __float__(self):
        return self.residual


def hawking_monotone_check(trace: FlowTrace, tol_scale: float = 1.0) -> HawkingResult:
    """Smallest increment of the Hawking mass between consecutive samples."""
    if np.any(trace.chi > 2):
        raise PreconditionUnmet("Hawking monotonicity needs chi <= 2")
    # R is a difference of terms of size 2/phi^2 = 8 pi / area
    if np.min(trace.min_R) < -_roundoff(8 * math.pi / float(np.min(trace.total_area))):
        raise PreconditionUnmet("Hawking monotonicity needs R >= 0")
    m = trace.hawking
    if len(m) < 2:
        return HawkingResult(0.0, 0.0)
    inc = np.diff(m)
    dt = np.diff(trace.t)
    rate = np.abs(inc) / np.maximum(dt, 1e-300)
    tol = tol_scale * 10.0 * float(dt.max()) ** 2 * float(rate.max()) + _roundoff(np.max(np.abs(m)))
    return HawkingResult(float(inc.min()), tol)


# -- report -----------------------------------------------------------------------------

@dataclass
class CheckRecord:
    name: str
    passed: bool
    residual: float = 0.0
    t: float | None = None
    applicable: bool = True
    note: str = ""


@dataclass
class AuditReport:
    checks: list[CheckRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, *args, **kwargs) -> CheckRecord:
        rec = CheckRecord(*args, **kwargs)
        self.checks.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.applicable)

    def failures(self) -> list[CheckRecord]:
        return [c for c in self.checks if c.applicable and not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "applicable": c.applicable,
                    "residual": c.residual,
                    "t": c.t,
                    "note": c.note,
                }
                for c in self.checks
            ],
            "notes": list(self.notes),
        }

    def to_text(self) -> str:
        return _textio.dumps(self.to_dict())

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "n/a " if not c.applicable else ("PASS" if c.passed else "FAIL")
            where = "" if c.t is None else f" @t={c.t:.6g}"
            lines.append(f"[{status}] {c.name}: residual={c.residual:.3e}{where} {c.note}".rstrip())
        return "\n".join(lines)


def audit_trace(
    trace: FlowTrace,
    lam: float | None = None,
    area_tol: float = 1e-2,
    tol_scale: float = 1.0,
) -> AuditReport:
    """Run every applicable check on a trace.

    With ``lam=None`` the certified floor at each sample (the trace's
    ``min_R`` column) is used in the Gronwall bound; a user-supplied lambda
    must be respected by the trace or CurvatureFloorViolated is raised.
    """
    report = AuditReport()
    problems = trace.invariant_violations(area_tol)
    report.add("trace_invariants", not problems, note="; ".join(problems))
    if lam is not None and np.min(trace.min_R) < lam - 1e-12 * max(1.0, abs(lam)):
        raise CurvatureFloorViolated(
            f"trace min_R {np.min(trace.min_R):.6g} below requested lambda {lam}"
        )
    report.notes.append(
        "Geroch check is one-sided: the gradient and traceless second fundamental "
        "form terms cannot be reconstructed from a trace."
    )

    # Geroch: every consecutive interval plus the full range
    t = trace.t
    worst, worst_t, ok = -np.inf, None, True
    for k in range(len(t) - 1):
        res = geroch_check(trace, t[k], t[k + 1], lam=lam, max_dt=np.inf, tol_scale=tol_scale)
        if res.residual - res.tol > worst:
            worst, worst_t = res.residual - res.tol, float(t[k])
        ok &= res.passed
    if len(t) > 1:
        full = geroch_check(trace, t[0], t[-1], lam=lam, max_dt=np.inf, tol_scale=tol_scale)
        ok &= full.passed
        report.add("geroch_full", full.passed, full.residual, float(t[-1]))
    report.add("geroch_intervals", bool(ok), float(worst) if len(t) > 1 else 0.0, worst_t,
               note="max(residual - tol)")

    # Gronwall at every sample
    g_ok, g_worst, g_t = True, -np.inf, None
    for k in range(len(t)):
        floor = float(trace.min_R[k]) if lam is None else lam
        g = gronwall_bound(trace, floor, float(t[k]), tol_scale=tol_scale)
        if g.lhs - g.rhs > g_worst:
            g_worst, g_t = g.lhs - g.rhs, float(t[k])
        g_ok &= g.passed
    report.add("gronwall", bool(g_ok), float(g_worst), g_t, note="max(lhs - rhs)")

    try:
        hm = hawking_monotone_check(trace, tol_scale=tol_scale)
        report.add("hawking_monotone", hm.passed, hm.residual, note="min increment")
    except PreconditionUnmet as exc:
        report.add("hawking_monotone", True, applicable=False, note=f"not applicable: {exc}")
    return report
