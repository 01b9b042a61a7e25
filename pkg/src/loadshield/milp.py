"""Big-M MILP encodings of attack problems and an exact branch-and-bound.

Variable layout of an encoded problem: continuous variables are the
input vector, then each hidden layer's post-ReLU values, then the
forecast; binaries are the availability mask (if any) followed by one
ReLU indicator per hidden unit. Hidden units whose preactivation
interval does not span zero keep their variables but have them pinned
by bounds (stable-neuron elimination), so branching never touches them.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .bounds import IntervalStack, output_bounds
from .dataset import N_FLEX, ImputationVector
from .network import Plnn
from .simplex import EQ, GE, LE, solve_bounded_lp

INT_TOL = 1e-6  # binaries this close to an integer count as integral
GAP_TOL = 1e-6  # proved absolute optimality gap of solve_bb
PRUNE_TOL = 1e-9  # a node must beat the incumbent by this much to stay open
ROW_TOL = 1e-6  # constraint satisfaction check on reported optima


class InvalidBounds(ValueError):
    pass


class BadBudget(ValueError):
    pass


@dataclass
class MilpProblem:
    n_cont: int
    n_bin: int
    cont_lo: np.ndarray
    cont_hi: np.ndarray
    bin_lo: np.ndarray  # [0,0] / [1,1] pin a binary, [0,1] leaves it free
    bin_hi: np.ndarray
    rows: np.ndarray  # (n_rows, n_cont + n_bin)
    relations: list[str]
    rhs: np.ndarray
    objective: np.ndarray
    sense: str  # "min" | "max"
    var_names: list[str]

    @property
    def n_vars(self) -> int:
        return self.n_cont + self.n_bin


@dataclass
class MilpSolution:
    status: str  # "Optimal" | "Infeasible" | "NodeLimit"
    objective: float | None
    x_cont: np.ndarray | None
    x_bin: np.ndarray | None
    nodes_explored: int
    wall_time: float
    gap: float = 0.0


@dataclass
class AttackEncoding:
    """An encoded problem plus the index map needed to read solutions back."""

    problem: MilpProblem
    input_slice: slice
    hidden_slices: list[slice]
    output_index: int
    mask_slice: slice | None  # into the binary block
    relu_offset: int  # first ReLU indicator in the binary block


class _Builder:
    """Accumulates the big-M scaffolding shared by both attack encodings.

    Mask binaries occupy the first `n_mask` binary slots; one ReLU
    indicator per hidden unit follows.
    """

    def __init__(self, model: Plnn, stack: IntervalStack, n_mask: int):
        if stack.levels != model.depth:
            raise InvalidBounds("interval stack does not match the network depth")
        for lo, hi in zip(stack.lower, stack.upper):
            if np.any(lo > hi):
                raise InvalidBounds("interval stack has lo > hi")

        p = model.dims[0]
        widths = model.dims[1:-1]
        self.n_mask = n_mask
        self.n_cont = p + sum(widths) + 1
        self.n_bin = n_mask + sum(widths)
        self.cont_lo = np.empty(self.n_cont)
        self.cont_hi = np.empty(self.n_cont)
        self.bin_lo = np.zeros(self.n_bin)
        self.bin_hi = np.ones(self.n_bin)
        self.rows: list[np.ndarray] = []
        self.relations: list[str] = []
        self.rhs: list[float] = []

        self.input_slice = slice(0, p)
        self.cont_lo[self.input_slice] = stack.lower[0]
        self.cont_hi[self.input_slice] = stack.upper[0]

        self.hidden_slices = []
        pos = p
        for w in widths:
            self.hidden_slices.append(slice(pos, pos + w))
            pos += w
        self.output_index = pos

        self.var_names = [f"in_{j}" for j in range(p)]
        for i, w in enumerate(widths):
            self.var_names += [f"h{i}_{j}" for j in range(w)]
        self.var_names.append("out")
        self.var_names += [f"mask_{j}" for j in range(n_mask)]
        for i, w in enumerate(widths):
            self.var_names += [f"relu{i}_{j}" for j in range(w)]

        self._encode_relu_layers(model, stack)
        self._encode_output(model, stack)

    def add_row(self, coeffs: dict[int, float], rel: str, b: float):
        row = np.zeros(self.n_cont + self.n_bin)
        for j, v in coeffs.items():
            row[j] = v
        self.rows.append(row)
        self.relations.append(rel)
        self.rhs.append(b)

    def _encode_relu_layers(self, model, stack):
        vpos = self.n_cont + self.n_mask
        for i, hs in enumerate(self.hidden_slices):
            prev = self.input_slice if i == 0 else self.hidden_slices[i - 1]
            W, b = model.weights[i], model.biases[i]
            lo_i, hi_i = stack.lower[i + 1], stack.upper[i + 1]
            for j in range(hs.stop - hs.start):
                z = hs.start + j
                v = vpos
                vpos += 1
                l, u = lo_i[j], hi_i[j]
                if u <= 0.0:  # stably inactive: pinned to zero, no rows
                    self.cont_lo[z] = self.cont_hi[z] = 0.0
                    self.bin_lo[v - self.n_cont] = self.bin_hi[v - self.n_cont] = 0.0
                    continue
                wj = {prev.start + k: W[j, k] for k in range(prev.stop - prev.start) if W[j, k] != 0.0}
                if l >= 0.0:  # stably active: plain affine unit
                    self.cont_lo[z], self.cont_hi[z] = l, u
                    self.bin_lo[v - self.n_cont] = self.bin_hi[v - self.n_cont] = 1.0
                    self.add_row({z: 1.0, **{k: -c for k, c in wj.items()}}, EQ, b[j])
                    continue
                # per-unit constants clipped so the rows stay valid even if
                # an interval turns out one-signed
                u_hat = max(u, 0.0)
                l_hat = min(l, 0.0)
                self.cont_lo[z], self.cont_hi[z] = 0.0, u_hat
                self.add_row({z: 1.0, **{k: -c for k, c in wj.items()}}, GE, b[j])
                self.add_row({z: 1.0, v: -u_hat}, LE, 0.0)
                self.add_row({**wj, z: -1.0, v: l_hat}, GE, l_hat - b[j])

    def _encode_output(self, model, stack):
        out_lo, out_hi = output_bounds(model, stack)
        self.cont_lo[self.output_index] = out_lo
        self.cont_hi[self.output_index] = out_hi
        last = self.hidden_slices[-1]
        W, b = model.weights[-1], model.biases[-1]
        coeffs = {last.start + k: -W[0, k] for k in range(last.stop - last.start)}
        self.add_row({self.output_index: 1.0, **coeffs}, EQ, b[0])

    def finish(self, mode: str) -> AttackEncoding:
        if mode not in ("max", "min"):
            raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
        objective = np.zeros(self.n_cont + self.n_bin)
        objective[self.output_index] = 1.0
        problem = MilpProblem(
            n_cont=self.n_cont,
            n_bin=self.n_bin,
            cont_lo=self.cont_lo,
            cont_hi=self.cont_hi,
            bin_lo=self.bin_lo,
            bin_hi=self.bin_hi,
            rows=np.array(self.rows),
            relations=self.relations,
            rhs=np.array(self.rhs),
            objective=objective,
            sense=mode,
            var_names=self.var_names,
        )
        return AttackEncoding(
            problem=problem,
            input_slice=self.input_slice,
            hidden_slices=self.hidden_slices,
            output_index=self.output_index,
            mask_slice=slice(0, self.n_mask) if self.n_mask else None,
            relu_offset=self.n_mask,
        )


def encode_integrity(model: Plnn, x, radius: float, stack: IntervalStack, mode: str) -> AttackEncoding:
    """Forecast extremum over the sup-norm ball (flexible coordinates only).

    The ball itself is carried by the level-0 interval of `stack`, which
    must come from the matching init_bounds_integrity call.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return _Builder(model, stack, n_mask=0).finish(mode)


def encode_availability(
    model: Plnn,
    x,
    imputation: ImputationVector,
    budget: int,
    stack: IntervalStack,
    mode: str,
) -> AttackEncoding:
    """Forecast extremum over feature-blocking masks within the budget.

    Availability semantics enter through linear coupling rows
    input_j = mask_j * x_j + (1 - mask_j) * c_j (x and c constant) and
    the budget row limiting how many mask bits may be zero.
    """
    if not 0 <= budget <= N_FLEX:
        raise BadBudget(f"budget must be in [0, {N_FLEX}], got {budget}")
    x = np.asarray(x, dtype=float)
    builder = _Builder(model, stack, n_mask=N_FLEX)
    c = imputation.values
    for j in range(N_FLEX):
        builder.add_row({j: 1.0, builder.n_cont + j: c[j] - x[j]}, EQ, c[j])
    builder.add_row({builder.n_cont + j: 1.0 for j in range(N_FLEX)}, GE, float(N_FLEX - budget))
    return builder.finish(mode)


# --- solving -----------------------------------------------------------------


class _RelaxationSolver:
    """LP relaxation of one MilpProblem, resolvable under binary fixings."""

    def __init__(self, problem: MilpProblem):
        self.problem = problem
        self.lo = np.concatenate([problem.cont_lo, problem.bin_lo])
        self.hi = np.concatenate([problem.cont_hi, problem.bin_hi])
        if np.any(self.lo > self.hi):
            raise InvalidBounds("problem has a variable with lo > hi")
        self.sign = -1.0 if problem.sense == "max" else 1.0
        self.c = self.sign * problem.objective

    def solve(self, fixings: dict[int, int] | None = None):
        lo = self.lo.copy()
        hi = self.hi.copy()
        if fixings:
            for j, v in fixings.items():
                k = self.problem.n_cont + j
                lo[k] = hi[k] = float(v)
        status, obj, x = solve_bounded_lp(
            self.problem.rows, self.problem.relations, self.problem.rhs, self.c, lo, hi
        )
        if status != "optimal":
            return status, None, None
        return status, self.sign * obj, x


def lp_solve(problem: MilpProblem, extra_fixings: dict[int, int] | None = None):
    """Solve the LP relaxation (binaries in [0,1] unless fixed).

    Returns (status, objective, assignment); objective is in the
    problem's own sense.
    """
    return _RelaxationSolver(problem).solve(extra_fixings)


def check_assignment(problem: MilpProblem, x: np.ndarray, tol: float = ROW_TOL) -> float:
    """Largest violation of rows and variable bounds at x."""
    worst = 0.0
    lhs = problem.rows @ x
    for i, rel in enumerate(problem.relations):
        r = lhs[i] - problem.rhs[i]
        if rel == LE:
            worst = max(worst, r)
        elif rel == GE:
            worst = max(worst, -r)
        else:
            worst = max(worst, abs(r))
    lo = np.concatenate([problem.cont_lo, problem.bin_lo])
    hi = np.concatenate([problem.cont_hi, problem.bin_hi])
    worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    return worst


def embed_forward(encoding: AttackEncoding, model: Plnn, x_input, mask=None) -> np.ndarray:
    """Assignment realizing a forward pass: activations for the continuous
    block, activation indicators (or pinned values) for the ReLU binaries,
    the given mask bits for the mask block. Feasible by construction, so
    it doubles as the initial incumbent for solve_bb."""
    problem = encoding.problem
    x = np.zeros(problem.n_vars)
    a = np.asarray(x_input, dtype=float)
    x[encoding.input_slice] = a
    vpos = problem.n_cont + encoding.relu_offset
    for i, hs in enumerate(encoding.hidden_slices):
        pre = model.weights[i] @ a + model.biases[i]
        a = np.maximum(0.0, pre)
        x[hs] = a
        for j in range(len(pre)):
            blo, bhi = problem.bin_lo[vpos - problem.n_cont], problem.bin_hi[vpos - problem.n_cont]
            if blo == bhi:
                x[vpos] = blo
            else:
                x[vpos] = 1.0 if pre[j] > 0.0 else 0.0
            vpos += 1
    x[encoding.output_index] = float(model.weights[-1] @ a + model.biases[-1])
    if encoding.mask_slice is not None:
        if mask is None:
            mask = np.ones(N_FLEX)
        x[problem.n_cont : problem.n_cont + N_FLEX] = mask
    return x


def solve_bb(
    problem: MilpProblem,
    node_limit: int = 200_000,
    initial: np.ndarray | None = None,
) -> MilpSolution:
    """Exact branch-and-bound: best-first on the relaxation bound, branch
    on the most fractional binary (lowest index on ties), prune nodes
    that cannot beat the incumbent by more than PRUNE_TOL.

    `initial` is an optional feasible full assignment used as the
    starting incumbent.
    """
    t0 = time.perf_counter()
    solver = _RelaxationSolver(problem)
    maximize = problem.sense == "max"

    def improves(bound, best):
        if best is None:
            return True
        return bound > best + PRUNE_TOL if maximize else bound < best - PRUNE_TOL

    best_obj = None
    best_x = None
    if initial is not None:
        viol = check_assignment(problem, initial)
        if viol > ROW_TOL:
            raise ValueError(f"initial incumbent violates constraints by {viol:.2e}")
        best_obj = float(problem.objective @ initial)
        best_x = initial.copy()

    nodes = 0
    status, obj, x = solver.solve({})
    nodes += 1
    if status != "optimal":
        return MilpSolution(
            status="Infeasible",
            objective=None,
            x_cont=None,
            x_bin=None,
            nodes_explored=nodes,
            wall_time=time.perf_counter() - t0,
            gap=float("inf"),
        )

    counter = 0
    heap = []  # (key, counter, fixings, bound, x)
    key = (-obj) if maximize else obj
    heapq.heappush(heap, (key, counter, {}, obj, x))

    final_status = "Optimal"
    gap = 0.0
    while heap:
        key, _, fixings, bound, x = heapq.heappop(heap)
        if not improves(bound, best_obj):
            break  # best-first: every remaining node is at least as bad
        if nodes >= node_limit:
            final_status = "NodeLimit"
            gap = float("inf") if best_obj is None else abs(bound - best_obj)
            break

        xb = x[problem.n_cont :]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= INT_TOL:
            all_fixed = {j: int(round(v)) for j, v in enumerate(xb)}
            st, fobj, fx = solver.solve(all_fixed)
            if st != "optimal":  # bounds-tolerance corner: snap in place instead
                fobj = bound
                fx = x.copy()
                fx[problem.n_cont :] = np.round(xb)
            if best_obj is None or improves(fobj, best_obj):
                best_obj, best_x = fobj, fx
            continue

        j = int(np.argmax(frac))
        for val in (0, 1):
            child = dict(fixings)
            child[j] = val
            st, cobj, cx = solver.solve(child)
            nodes += 1
            if st != "optimal":
                continue
            if improves(cobj, best_obj):
                counter += 1
                ckey = (-cobj) if maximize else cobj
                heapq.heappush(heap, (ckey, counter, child, cobj, cx))

    if best_obj is None:
        return MilpSolution(
            status="Infeasible",
            objective=None,
            x_cont=None,
            x_bin=None,
            nodes_explored=nodes,
            wall_time=time.perf_counter() - t0,
            gap=float("inf"),
        )
    x_cont = best_x[: problem.n_cont].copy()
    x_bin = np.round(best_x[problem.n_cont :]).astype(int)
    if final_status == "Optimal":
        viol = check_assignment(problem, best_x)
        if viol > ROW_TOL:
            raise RuntimeError(f"optimal solution violates constraints by {viol:.2e}")
    return MilpSolution(
        status=final_status,
        objective=float(best_obj),
        x_cont=x_cont,
        x_bin=x_bin,
        nodes_explored=nodes,
        wall_time=time.perf_counter() - t0,
        gap=gap,
    )


def to_lp_string(problem: MilpProblem) -> str:
    """Plain-text dump in LP-file style, for eyeballing and external checks."""
    lines = [f"\\ sense: {problem.sense}"]
    lines.append("Maximize" if problem.sense == "max" else "Minimize")
    terms = [
        f"{c:+g} {problem.var_names[j]}"
        for j, c in enumerate(problem.objective)
        if c != 0.0
    ]
    lines.append(" obj: " + " ".join(terms))
    lines.append("Subject To")
    relmap = {LE: "<=", GE: ">=", EQ: "="}
    for i, row in enumerate(problem.rows):
        terms = [f"{v:+g} {problem.var_names[j]}" for j, v in enumerate(row) if v != 0.0]
        lines.append(f" r{i}: " + " ".join(terms) + f" {relmap[problem.relations[i]]} {problem.rhs[i]:g}")
    lines.append("Bounds")
    for j in range(problem.n_cont):
        lines.append(f" {problem.cont_lo[j]:g} <= {problem.var_names[j]} <= {problem.cont_hi[j]:g}")
    for j in range(problem.n_bin):
        name = problem.var_names[problem.n_cont + j]
        lines.append(f" {problem.bin_lo[j]:g} <= {name} <= {problem.bin_hi[j]:g}")
    lines.append("Binaries")
    lines.append(" " + " ".join(problem.var_names[problem.n_cont :]))
    lines.append("End")
    return "\n".join(lines) + "\n"
