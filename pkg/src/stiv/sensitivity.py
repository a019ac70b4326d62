"""Sensitivity characteristics of the normalized design matrix Psi.

All quantities are infima of |Psi d|_inf over vectors d in the cone of
dominant coordinates

    C_J = { d : |d_{J^c}|_1 <= ratio * |d_J|_1 },

with ratio (1+c)/(1-c), or (2+c)/(1-c) for the enlarged cone used in the
approximately sparse analysis.  Exact values come from enumerating sign
patterns (one small LP each); sparsity-certificate lower bounds replace the
unknown support by a bound s on its size and need only polynomially many
LPs.  Every public routine returns a SensitivityReport carrying the value,
how it was produced, and the number of LPs solved.

Indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conic import LinearProgram, Tolerances, solve_lp
from .errors import EnumerationCapError, SolverFailureError, ValidationError

ENUMERATION_CAP = 12


@dataclass(frozen=True)
class ConeSpec:
    """Cone of dominant coordinates; c=0 is the non-pivotal variant's cone."""

    c: float = 0.1
    enlarged: bool = False

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise ValidationError("cone constant c must lie in [0, 1)")

    @property
    def ratio(self) -> float:
        return ((2.0 if self.enlarged else 1.0) + self.c) / (1.0 - self.c)

    def certificate_slope(self, s: int) -> float:
        """The constant a with |d|_1 <= a |d|_inf on the cone when |J| <= s."""
        return (1.0 + self.ratio) * s


@dataclass
class SensitivityReport:
    kind: str
    value: float
    provenance: str
    lp_count: int
    witnesses: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def _check_cap(count: int, what: str, cap: int):
    if count > cap:
        raise EnumerationCapError(
            f"{what} needs sign enumeration over {count} coordinates "
            f"(cap {cap}); use the sparsity-certificate route instead"
        )


def _lp_min_sup(
    psi: np.ndarray,
    pinned: dict[int, float],
    signs: dict[int, int],
    wset: list[int],
    budget: tuple[dict[int, float], float] | None,
    equality: dict[int, float] | None = None,
    equality_rhs: float = 1.0,
    tol: Tolerances | None = None,
) -> float:
    """min v subject to |Psi d|_inf <= v and the listed linear side conditions.

    ``budget`` is (coeffs over free d-indices, rhs) encoding
    sum_{f in wset} w_f + sum coeffs_j d_j <= rhs.  Infeasible subprograms
    return +inf.
    """
    L, K = psi.shape
    free = [j for j in range(K) if j not in pinned]
    pos = {j: i for i, j in enumerate(free)}
    nf = len(free)
    nw = len(wset)
    nv = nf + nw + 1
    i_v = nf + nw

    offset = np.zeros(L)
    for j, val in pinned.items():
        offset += psi[:, j] * val

    rows = []
    rhs = []
    blk = np.zeros((L, nv))
    blk[:, :nf] = psi[:, free]
    blk[:, i_v] = -1.0
    rows.append(blk)
    rhs.append(-offset)
    rows.append(-blk.copy())
    rows[-1][:, i_v] = -1.0
    rhs.append(offset)

    for j, eps in signs.items():
        row = np.zeros(nv)
        row[pos[j]] = -float(eps)
        rows.append(row[None, :])
        rhs.append(np.zeros(1))

    for i, f in enumerate(wset):
        row = np.zeros(nv)
        row[pos[f]] = 1.0
        row[nf + i] = -1.0
        rows.append(row[None, :])
        rhs.append(np.zeros(1))
        row = np.zeros(nv)
        row[pos[f]] = -1.0
        row[nf + i] = -1.0
        rows.append(row[None, :])
        rhs.append(np.zeros(1))

    if budget is not None:
        coeffs, bound = budget
        row = np.zeros(nv)
        row[nf : nf + nw] = 1.0
        for j, coef in coeffs.items():
            row[pos[j]] += coef
        rows.append(row[None, :])
        rhs.append(np.array([bound]))

    a_eq = b_eq = None
    if equality is not None:
        row = np.zeros(nv)
        const = 0.0
        for j, coef in equality.items():
            if j in pinned:
                const += coef * pinned[j]
            else:
                row[pos[j]] = coef
        a_eq = row[None, :]
        b_eq = np.array([equality_rhs - const])

    lb = np.full(nv, -np.inf)
    lb[nf:] = 0.0  # w >= 0 and v >= 0

    lp = LinearProgram(
        c=np.eye(nv)[i_v], a_eq=a_eq, b_eq=b_eq,
        a_ub=np.vstack(rows), b_ub=np.concatenate(rhs), lb=lb,
    )
    res = solve_lp(lp, tol)
    if res.status == "infeasible":
        return math.inf
    if not res.optimal:
        raise SolverFailureError(f"sensitivity subprogram failed: {res.status}", res)
    return float(res.objective)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _sign_patterns(indices: list[int], fixed: dict[int, int]):
    """All sign vectors over ``indices`` respecting ``fixed`` entries."""
    free = [j for j in indices if j not in fixed]
    for combo in itertools.product((1, -1), repeat=len(free)):
        pattern = dict(zip(free, combo))
        pattern.update({j: fixed[j] for j in indices if j in fixed})
        yield pattern


def kappa_coord(
    psi: np.ndarray,
    k: int,
    J: set[int] | list[int],
    cone: ConeSpec = ConeSpec(),
    cap: int = ENUMERATION_CAP,
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivityReport:
    """Exact coordinate sensitivity: inf |Psi d|_inf over d in C_J with d_k = 1."""
    J = set(J)
    if not J:
        # C_empty = {0} cannot contain d_k = 1: infimum over the empty set
        return SensitivityReport("coord", math.inf, "empty-J convention", 0)
    _check_cap(len(J), "kappa_coord", cap)
    dominated = J | {k}
    wset = sorted(set(range(psi.shape[1])) - dominated)
    g = 0.0 if k in J else -1.0

    def run(pattern: dict[int, int]) -> float:
        coeffs = {j: -cone.ratio * pattern[j] for j in J if j != k}
        bound = g + (cone.ratio if k in J else 0.0)
        return _lp_min_sup(
            psi, pinned={k: 1.0},
            signs={j: pattern[j] for j in J if j != k},
            wset=wset, budget=(coeffs, bound), tol=tol,
        )

    patterns = list(_sign_patterns(sorted(J), fixed={k: 1} if k in J else {}))
    values = _pmap(run, patterns, threads)
    return SensitivityReport(
        "coord", min(values), f"exact over {len(values)} sign-pattern LPs", len(values)
    )


def kappa_coord_cert(
    psi: np.ndarray,
    k: int,
    s: int,
    cone: ConeSpec = ConeSpec(),
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivityReport:
    """Sparsity-certificate lower bound on kappa_coord(k, J) valid for all |J| <= s."""
    if s < 1:
        raise ValidationError("sparsity certificate needs s >= 1")
    K = psi.shape[1]
    a = cone.certificate_slope(s)

    jobs = []
    for j in range(K):
        if j == k:
            jobs.append((j, 1))
        else:
            jobs.append((j, 1))
            jobs.append((j, -1))

    def run(job) -> float:
        j, eps = job
        wset = sorted(set(range(K)) - {j, k})
        if j == k:
            # |d|_1 <= a d_k = a
            return _lp_min_sup(psi, pinned={k: 1.0}, signs={}, wset=wset,
                               budget=({}, a - 1.0), tol=tol)
        # sum w + 1 <= (a - 1) eps d_j
        return _lp_min_sup(
            psi, pinned={k: 1.0}, signs={j: eps}, wset=wset,
            budget=({j: -(a - 1.0) * eps}, -1.0), tol=tol,
        )

    values = _pmap(run, jobs, threads)
    return SensitivityReport(
        "coord_cert", min(values), f"certificate s={s} over {len(jobs)} LPs", len(jobs)
    )


def kappa_block(
    psi: np.ndarray,
    J0: set[int] | list[int],
    J: set[int] | list[int],
    cone: ConeSpec = ConeSpec(),
    cap: int = ENUMERATION_CAP,
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivityReport:
    """Exact block sensitivity: inf |Psi d|_inf over C_J with |d_{J0}|_1 = 1.

    Sign patterns cover J union J0: the cone constraint needs signs on J and
    linearizing |d_{J0}|_1 needs signs on J0.  The pattern count is halved by
    fixing the sign of the smallest J0 index (d -> -d symmetry).
    """
    J0, J = set(J0), set(J)
    if not J0:
        return SensitivityReport("block", math.inf, "empty-J0 convention", 0)
    if not J:
        return SensitivityReport("block", math.inf, "empty-J convention", 0)
    union = sorted(J | J0)
    _check_cap(len(union), "kappa_block", cap)
    wset = sorted(set(range(psi.shape[1])) - set(union))
    anchor = min(J0)

    def run(pattern: dict[int, int]) -> float:
        coeffs: dict[int, float] = {}
        for u in J0 - J:
            coeffs[u] = float(pattern[u])
        for j in J:
            coeffs[j] = coeffs.get(j, 0.0) - cone.ratio * pattern[j]
        return _lp_min_sup(
            psi, pinned={}, signs=pattern, wset=wset,
            budget=(coeffs, 0.0),
            equality={u: float(pattern[u]) for u in J0}, equality_rhs=1.0,
            tol=tol,
        )

    patterns = list(_sign_patterns(union, fixed={anchor: 1}))
    values = _pmap(run, patterns, threads)
    return SensitivityReport(
        "block", min(values), f"exact over {len(values)} sign-pattern LPs", len(values)
    )


def kappa_block_cert(
    psi: np.ndarray,
    J0: set[int] | list[int],
    s: int,
    cone: ConeSpec = ConeSpec(),
    cap: int = ENUMERATION_CAP,
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivityReport:
    """Certificate lower bound on block sensitivities, valid for all |J| <= s."""
    J0 = set(J0)
    if not J0:
        return SensitivityReport("block_cert", math.inf, "empty-J0 convention", 0)
    if s < 1:
        raise ValidationError("sparsity certificate needs s >= 1")
    _check_cap(len(J0), "kappa_block_cert", cap)
    K = psi.shape[1]
    a = cone.certificate_slope(s)
    j0_sorted = sorted(J0)

    jobs = []
    for j in range(K):
        for pattern in _sign_patterns(j0_sorted, fixed={}):
            jobs.append((j, pattern))

    def run(job) -> float:
        j, pattern = job
        signs = dict(pattern)
        wset = sorted(set(range(K)) - J0 - {j})
        if j in J0:
            # |d|_1 = sum_F w + 1 <= a eps_j d_j
            budget = ({j: -a * signs[j]}, -1.0)
        else:
            signs[j] = 1  # global-flip symmetry pins the certificate sign
            budget = ({j: -(a - 1.0)}, -1.0)
        return _lp_min_sup(
            psi, pinned={}, signs=signs, wset=wset, budget=budget,
            equality={u: float(pattern[u]) for u in J0}, equality_rhs=1.0,
            tol=tol,
        )

    values = _pmap(run, jobs, threads)
    return SensitivityReport(
        "block_cert", min(values), f"certificate s={s} over {len(jobs)} LPs", len(jobs)
    )


def kappa_lp_norm_bounds(
    psi: np.ndarray,
    p: float,
    source: tuple[str, object],
    cone: ConeSpec = ConeSpec(),
    cap: int = ENUMERATION_CAP,
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivityReport:
    """Certified lower bound on the l_p sensitivity kappa_{p,J}.

    The sup-norm sensitivity is bounded below by min_k of the coordinate
    sensitivities; interpolation |d|_p <= |d|_1^(1/p) |d|_inf^(1-1/p) and the
    cone l1 bound then give

        kappa_{p,J} >= ((1+ratio) m)^(-1/p) * min_k kappa*_k,

    with m = |J| for source ("direct", J) and m = s for ("certificate", s).
    p = 1 recovers the l1 bound used in the slack factors.
    """
    if not (p >= 1.0):
        raise ValidationError("p must lie in [1, inf]")
    mode, arg = source
    K = psi.shape[1]
    if mode == "direct":
        J = set(arg)  # type: ignore[arg-type]
        reports = [kappa_coord(psi, k, J, cone, cap, threads, tol) for k in range(K)]
        m = len(J)
    elif mode == "certificate":
        s = int(arg)  # type: ignore[arg-type]
        reports = [kappa_coord_cert(psi, k, s, cone, threads, tol) for k in range(K)]
        m = s
    else:
        raise ValidationError("source must be ('direct', J) or ('certificate', s)")
    k_inf = min(r.value for r in reports)
    lp_count = sum(r.lp_count for r in reports)
    if m == 0:
        return SensitivityReport(
            "lp_norm", math.inf, "empty-J convention", lp_count,
            witnesses={"coord_values": [r.value for r in reports]},
        )
    exponent = 0.0 if math.isinf(p) else 1.0 / p
    value = ((1.0 + cone.ratio) * m) ** (-exponent) * k_inf
    return SensitivityReport(
        "lp_norm", value,
        f"interpolated from sup-norm bound {k_inf:.6g} ({mode}, m={m}, p={p})",
        lp_count,
        witnesses={"coord_values": [r.value for r in reports]},
    )


def coherence_bound(
    psi: np.ndarray,
    J: set[int] | list[int],
    p: float,
    cone: ConeSpec = ConeSpec(),
) -> SensitivityReport:
    """Row-coherence lower bound on kappa_{p,J}; no LPs solved.

    For each k in J a row l qualifies when its k-entry dominates the rest of
    the row strongly enough; the per-row pair is eta1 = |psi_lk| * 2/(1+ratio)
    and eta2 = 1 - (1+ratio)|J| * offratio.  The bound takes the minimum over
    k of the best per-k product (conservative: a common pair valid for all k
    simultaneously would be weaker).  Value 0 with empty witnesses is the
    honest no-certificate answer.
    """
    J = sorted(set(J))
    if not J:
        raise ValidationError("J must be nonempty")
    if not (p >= 1.0):
        raise ValidationError("p must lie in [1, inf]")
    ratio = cone.ratio
    one_minus_c = 2.0 / (1.0 + ratio)  # equals 1-c for the plain cone
    size = len(J)
    best = math.inf
    witnesses = {}
    for k in J:
        col = np.abs(psi[:, k])
        others = np.abs(np.delete(psi, k, axis=1))
        off = others.max(axis=1) if others.shape[1] else np.zeros(len(col))
        with np.errstate(divide="ignore", invalid="ignore"):
            offratio = np.where(col > 0, off / col, np.inf)
        eta2 = 1.0 - offratio * size / one_minus_c * 2.0
        eta1 = one_minus_c * col
        products = np.where((col > 0) & (eta2 > 0), eta1 * np.clip(eta2, 0.0, 1.0), -np.inf)
        l_best = int(np.argmax(products))
        if products[l_best] == -np.inf:
            return SensitivityReport("coherence", 0.0, f"no qualifying row for k={k}", 0)
        witnesses[k] = l_best
        best = min(best, float(products[l_best]))
    exponent = 0.0 if math.isinf(p) else 1.0 / p
    value = (2.0 * size) ** (-exponent) * one_minus_c ** (-1.0 + exponent) * best
    return SensitivityReport(
        "coherence", value, "row-coherence bound", 0, witnesses={"rows": witnesses}
    )


# ---------------------------------------------------------------------------
# Bundles consumed by the inference formulas.
# ---------------------------------------------------------------------------

STANDARD = "standard"
SINGLE_ENDO_REMARK = "single-endo-remark"


@dataclass
class SensitivitySet:
    """Everything the confidence/threshold formulas need, plus bookkeeping."""

    coord: np.ndarray  # per-coordinate sensitivity (direct at J, or certificate)
    j_end_block: float  # block sensitivity (or bound) for the endogenous set
    j_end_comp_block: float  # same for its complement
    kappa1: float  # l1 sensitivity lower bound
    source: str  # "direct" or "certificate"
    variant: str
    lp_count: int

    def slack_terms(self, r: float) -> tuple[float, float]:
        t1 = r / self.j_end_block if math.isfinite(self.j_end_block) else 0.0
        t2 = r**2 / self.j_end_comp_block if math.isfinite(self.j_end_comp_block) else 0.0
        return t1, t2


def sensitivity_set(
    psi: np.ndarray,
    j_end: set[int] | list[int],
    source: tuple[str, object],
    cone: ConeSpec = ConeSpec(),
    variant: str = SINGLE_ENDO_REMARK,
    cap: int = ENUMERATION_CAP,
    threads: int = 1,
    tol: Tolerances | None = None,
) -> SensitivitySet:
    """Compute the sensitivities entering confidence intervals and thresholds.

    With the remark variant (sound whenever the block bound would be
    expensive, and the formula used on single-endogenous designs) the
    complement block is bounded below by the l1 sensitivity; the standard
    variant computes both block sensitivities head-on, which is exponential
    in the block sizes.
    """
    j_end = set(j_end)
    K = psi.shape[1]
    mode, arg = source
    lp_bound = kappa_lp_norm_bounds(psi, 1.0, source, cone, cap, threads, tol)
    coord = np.asarray(lp_bound.witnesses["coord_values"], dtype=float)
    kappa1 = lp_bound.value
    count = lp_bound.lp_count

    if variant == SINGLE_ENDO_REMARK:
        if len(j_end) == 1:
            block_end = coord[next(iter(j_end))]
        elif not j_end:
            block_end = math.inf
        else:
            block_end = kappa1  # block >= l1 sensitivity, for any block
        block_comp = kappa1 if len(j_end) < K else math.inf
    elif variant == STANDARD:
        comp = set(range(K)) - j_end
        if mode == "direct":
            block_end = kappa_block(psi, j_end, set(arg), cone, cap, threads, tol).value
            block_comp = kappa_block(psi, comp, set(arg), cone, cap, threads, tol).value
            count += 2 ** max(len(j_end | set(arg)) - 1, 0)
            count += 2 ** max(len(comp | set(arg)) - 1, 0)
        else:
            block_end = kappa_block_cert(psi, j_end, int(arg), cone, cap, threads, tol).value
            block_comp = kappa_block_cert(psi, comp, int(arg), cone, cap, threads, tol).value
            count += K * 2 ** len(j_end) + K * 2 ** len(comp)
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    return SensitivitySet(
        coord=coord, j_end_block=block_end, j_end_comp_block=block_comp,
        kappa1=kappa1, source=mode, variant=variant, lp_count=count,
    )
