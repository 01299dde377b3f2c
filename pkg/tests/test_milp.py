import itertools
import math
import random

import numpy as np
import pytest

from chargeplan import milp
from chargeplan.milp import (
    BINARY,
    EQ,
    GE,
    INF,
    LE,
    MipLimits,
    Model,
    ModelError,
    solve_lp,
    solve_mip,
)


def lp_vertex_oracle(c, rows, n):
    """Minimum of c.x over {x in [0,1]^n : rows} by enumerating vertices.

    A vertex makes n constraints active among the rows (as equalities) and the
    2n bound facets. Independent of the simplex implementation.
    """
    facets = []
    for coeffs, sense, rhs in rows:
        facets.append((np.asarray(coeffs, dtype=float), float(rhs)))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        facets.append((e.copy(), 0.0))
        facets.append((e.copy(), 1.0))
    best = math.inf
    best_x = None
    for combo in itertools.combinations(range(len(facets)), n):
        A = np.array([facets[k][0] for k in combo])
        b = np.array([facets[k][1] for k in combo])
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
            continue
        ok = True
        for coeffs, sense, rhs in rows:
            lhs = float(np.dot(coeffs, x))
            if sense == LE and lhs > rhs + 1e-9:
                ok = False
            elif sense == GE and lhs < rhs - 1e-9:
                ok = False
            elif sense == EQ and abs(lhs - rhs) > 1e-9:
                ok = False
            if not ok:
                break
        if ok:
            val = float(np.dot(c, x))
            if val < best - 1e-12:
                best = val
                best_x = x
    return best, best_x


def binary_enumeration_oracle(model):
    """Exhaustive minimum over all assignments of the binary variables,
    assuming the model has no continuous variables."""
    bids = model.binary_ids
    assert len(bids) == model.num_vars
    best = math.inf
    best_x = None
    for bits in itertools.product((0.0, 1.0), repeat=len(bids)):
        x = dict(zip(bids, bits))
        ok = True
        for con in model.cons:
            lhs = sum(coef * x[vid] for vid, coef in con.terms)
            if con.sense == LE and lhs > con.rhs + 1e-9:
                ok = False
            elif con.sense == GE and lhs < con.rhs - 1e-9:
                ok = False
            elif con.sense == EQ and abs(lhs - con.rhs) > 1e-9:
                ok = False
            if not ok:
                break
        if ok:
            val = sum(model.obj.get(vid, 0.0) * x[vid] for vid in bids) + model.obj_offset
            if val < best - 1e-12:
                best = val
                best_x = x
    return best, best_x


class TestModelContainer:
    def test_duplicate_var_in_row_rejected(self):
        m = Model()
        x = m.add_var()
        with pytest.raises(ModelError):
            m.add_constraint([(x, 1.0), (x, 2.0)], LE, 1.0)

    def test_binary_bounds_enforced(self):
        m = Model()
        with pytest.raises(ModelError):
            m.add_var(BINARY, lower=-0.5, upper=1.0)

    def test_dump_lp_mentions_everything(self):
        m = Model("demo")
        x = m.add_var(name="x")
        y = m.add_binary(name="y")
        m.add_constraint([(x, 1.0), (y, -2.0)], GE, 1.0, name="link")
        m.set_objective([(x, 1.0)], offset=3.0)
        text = m.dump_lp()
        assert "link" in text and "x" in text and "Binaries" in text


class TestSolveLp:
    def test_min_x_above_three(self):
        m = Model()
        x = m.add_var(lower=0.0, upper=INF, name="x")
        ge = m.add_constraint([(x, 1.0)], GE, 3.0)
        m.add_constraint([(x, 1.0)], LE, 10.0)
        m.set_objective([(x, 1.0)])
        sol = solve_lp(m)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(3.0, abs=1e-9)
        assert sol.values[x] == pytest.approx(3.0, abs=1e-9)
        assert sol.duals[ge] == pytest.approx(1.0, abs=1e-7)

    def test_degenerate_box_corner(self):
        m = Model()
        x = m.add_var(upper=1.0)
        y = m.add_var(upper=1.0)
        m.add_constraint([(x, 1.0), (y, 1.0)], LE, 1.0)
        m.set_objective([(x, -1.0), (y, -1.0)])
        sol = solve_lp(m)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-1.0, abs=1e-9)

    def test_infeasible(self):
        m = Model()
        x = m.add_var(upper=1.0)
        m.add_constraint([(x, 1.0)], GE, 2.0)
        m.set_objective([(x, 1.0)])
        assert solve_lp(m).status == "infeasible"

    def test_unbounded(self):
        m = Model()
        x = m.add_var()
        m.set_objective([(x, -1.0)])
        assert solve_lp(m).status == "unbounded"

    def test_equality_rows_and_offset(self):
        m = Model()
        x = m.add_var()
        y = m.add_var()
        m.add_constraint([(x, 1.0), (y, 1.0)], EQ, 2.0)
        m.set_objective([(x, 2.0), (y, 1.0)], offset=5.0)
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(7.0, abs=1e-9)  # all mass on y
        assert sol.values[y] == pytest.approx(2.0, abs=1e-9)

    def test_random_lps_match_vertex_enumeration(self):
        rng = random.Random(1234)
        for trial in range(12):
            n = 6
            rows = []
            for _ in range(2):
                coeffs = [rng.uniform(-1, 1) for _ in range(n)]
                rhs = sum(c * 0.5 for c in coeffs) + rng.uniform(0.2, 0.8)
                rows.append((coeffs, LE, rhs))
            for _ in range(2):
                coeffs = [rng.uniform(-1, 1) for _ in range(n)]
                rhs = sum(c * 0.5 for c in coeffs) - rng.uniform(0.2, 0.8)
                rows.append((coeffs, GE, rhs))
            c = [rng.uniform(-2, 2) for _ in range(n)]

            m = Model()
            xs = [m.add_var(lower=0.0, upper=1.0) for _ in range(n)]
            for coeffs, sense, rhs in rows:
                m.add_constraint(list(zip(xs, coeffs)), sense, rhs)
            m.set_objective(list(zip(xs, c)))
            sol = solve_lp(m)
            assert sol.status == "optimal"
            expect, _ = lp_vertex_oracle(np.array(c), rows, n)
            assert sol.objective == pytest.approx(expect, abs=1e-6), f"trial {trial}"

    def test_primal_feasibility_and_complementary_slackness(self):
        rng = random.Random(99)
        for _ in range(8):
            n = 5
            m = Model()
            xs = [m.add_var(lower=0.0, upper=2.0) for _ in range(n)]
            rows = []
            for _ in range(4):
                coeffs = [rng.uniform(-1, 1) for _ in range(n)]
                rhs = sum(coeffs) * 0.7 + rng.uniform(0.1, 1.0)
                rows.append(m.add_constraint(list(zip(xs, coeffs)), LE, rhs))
            rows.append(m.add_constraint([(x, 1.0) for x in xs], GE, 1.0))
            m.set_objective([(x, rng.uniform(0.1, 2.0)) for x in xs])
            sol = solve_lp(m)
            assert sol.status == "optimal"
            for idx in rows:
                con = m.cons[idx]
                lhs = sum(coef * sol.values[vid] for vid, coef in con.terms)
                if con.sense == LE:
                    assert lhs <= con.rhs + 1e-7
                    assert sol.duals[idx] <= 1e-7
                else:
                    assert lhs >= con.rhs - 1e-7
                    assert sol.duals[idx] >= -1e-7
                # complementary slackness
                assert abs(sol.duals[idx] * (lhs - con.rhs)) <= 1e-6

    def test_duality_gap_zero_without_upper_bounds(self):
        rng = random.Random(7)
        for _ in range(8):
            n = 5
            m = Model()
            xs = [m.add_var(lower=0.0, upper=INF) for _ in range(n)]
            bs = []
            for _ in range(3):
                coeffs = [rng.uniform(0.1, 1.0) for _ in range(n)]
                rhs = rng.uniform(1.0, 3.0)
                m.add_constraint(list(zip(xs, coeffs)), GE, rhs)
                bs.append(rhs)
            m.set_objective([(x, rng.uniform(0.5, 2.0)) for x in xs])
            sol = solve_lp(m)
            assert sol.status == "optimal"
            dual_obj = sum(sol.duals[i] * bs[i] for i in range(3))
            assert dual_obj == pytest.approx(sol.objective, abs=1e-6)

    def test_determinism(self):
        rng = random.Random(5)
        n = 6
        m = Model()
        xs = [m.add_var(lower=0.0, upper=1.0) for _ in range(n)]
        for _ in range(4):
            coeffs = [rng.uniform(-1, 1) for _ in range(n)]
            m.add_constraint(list(zip(xs, coeffs)), LE, sum(coeffs) * 0.5 + 0.4)
        m.set_objective([(x, rng.uniform(-1, 1)) for x in xs])
        a = solve_lp(m)
        b = solve_lp(m)
        assert a.objective == b.objective
        assert a.values == b.values
        assert a.duals == b.duals


class TestSolveMip:
    def test_knapsack_matches_enumeration(self):
        # max 5 x1 + 4 x2  s.t. 3 x1 + 2 x2 <= 4, binaries (negated to min)
        m = Model()
        x1 = m.add_binary("x1")
        x2 = m.add_binary("x2")
        m.add_constraint([(x1, 3.0), (x2, 2.0)], LE, 4.0)
        m.set_objective([(x1, -5.0), (x2, -4.0)])
        expect, expect_x = binary_enumeration_oracle(m)
        sol = solve_mip(m)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(expect, abs=1e-9)
        assert {v: sol.values[v] for v in (x1, x2)} == expect_x

    def test_integral_relaxation_solved_at_root(self):
        m = Model()
        x = m.add_binary()
        m.add_constraint([(x, 1.0)], GE, 1.0)
        m.set_objective([(x, 2.0)])
        sol = solve_mip(m)
        assert sol.status == "optimal"
        assert sol.nodes == 1
        assert sol.objective == pytest.approx(2.0)

    def test_infeasible_binary_model(self):
        m = Model()
        x1 = m.add_binary()
        x2 = m.add_binary()
        m.add_constraint([(x1, 1.0), (x2, 1.0)], GE, 3.0)
        m.set_objective([(x1, 1.0), (x2, 1.0)])
        assert solve_mip(m).status == "infeasible"

    def test_random_binary_models_bound_sandwich(self):
        rng = random.Random(2024)
        for trial in range(10):
            nb = rng.randint(4, 9)
            m = Model()
            xs = [m.add_binary() for _ in range(nb)]
            for _ in range(rng.randint(2, 4)):
                coeffs = [rng.uniform(-2, 3) for _ in range(nb)]
                sense = rng.choice([LE, GE])
                pivot = sum(coeffs) * rng.uniform(0.2, 0.7)
                m.add_constraint(list(zip(xs, coeffs)), sense, pivot)
            m.set_objective([(x, rng.uniform(-3, 3)) for x in xs])
            expect, _ = binary_enumeration_oracle(m)
            sol = solve_mip(m)
            if expect == math.inf:
                assert sol.status == "infeasible", f"trial {trial}"
            else:
                assert sol.status == "optimal", f"trial {trial}"
                assert sol.objective == pytest.approx(expect, abs=1e-6), f"trial {trial}"
                assert sol.bound <= sol.objective + 1e-6
                assert sol.gap <= 1e-6

    def test_mixed_integer_continuous(self):
        # open/close with a continuous flow: min 3 y + x, x >= 1.4, x <= 2 y
        m = Model()
        y = m.add_binary()
        x = m.add_var(upper=2.0)
        m.add_constraint([(x, 1.0)], GE, 1.4)
        m.add_constraint([(x, 1.0), (y, -2.0)], LE, 0.0)
        m.set_objective([(y, 3.0), (x, 1.0)])
        sol = solve_mip(m)
        assert sol.status == "optimal"
        assert sol.values[y] == 1.0
        assert sol.objective == pytest.approx(4.4, abs=1e-8)

    def test_node_limit_reports_honestly(self):
        rng = random.Random(3)
        nb = 14
        m = Model()
        xs = [m.add_binary() for _ in range(nb)]
        weights = [rng.uniform(1, 5) for _ in range(nb)]
        m.add_constraint(list(zip(xs, weights)), LE, sum(weights) * 0.4)
        m.set_objective([(x, -rng.uniform(1, 4)) for x in xs])
        sol = solve_mip(m, MipLimits(node_limit=3))
        assert sol.status in ("feasible", "time_limit")
        if sol.status == "feasible":
            assert sol.bound <= sol.objective + 1e-9

    def test_determinism(self):
        rng = random.Random(8)
        nb = 8
        m = Model()
        xs = [m.add_binary() for _ in range(nb)]
        for _ in range(3):
            coeffs = [rng.uniform(-1, 2) for _ in range(nb)]
            m.add_constraint(list(zip(xs, coeffs)), LE, sum(coeffs) * 0.5)
        m.set_objective([(x, rng.uniform(-2, 2)) for x in xs])
        a = solve_mip(m)
        b = solve_mip(m)
        assert a.objective == b.objective and a.values == b.values and a.nodes == b.nodes
