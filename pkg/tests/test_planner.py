import math

import numpy as np
import pytest

from roughnav.labeling import SafetyThresholds, classify
from roughnav.planner import (
    CbfForm,
    Control,
    Outcome,
    PlannerConfig,
    cbf_feasible,
    control_grid,
    goal_cost,
    navigate,
    plan_step,
    stability_cost,
)
from roughnav.terrain import Difficulty, Heightfield, TerrainSpec, generate
from roughnav.vehicle import (
    DEFAULT_GEOMETRY,
    DEFAULT_TRACTION,
    RobotState,
    settle_pose,
    step,
)

NOCBF = PlannerConfig(cbf_enabled=False)


def flat_field(extent=12.0, res=0.05):
    n = int(round(extent / res)) + 1
    return Heightfield(cols=n, rows=n, resolution=res, origin=(0.0, 0.0),
                       heights=np.zeros((n, n), dtype=np.float32))


def wall_corridor(width=2.4, length=9.0, res=0.05, wall_y=4.0, amp=0.30, sigma=0.30):
    """Flat corridor with a smooth ridge band across the full width."""
    cols = int(round(width / res)) + 1
    rows = int(round(length / res)) + 1
    ys = (np.arange(rows) * res)[:, None]
    heights = amp * np.exp(-((ys - wall_y) ** 2) / (2 * sigma**2))
    heights = np.broadcast_to(heights, (rows, cols)).astype(np.float32)
    return Heightfield(cols=cols, rows=rows, resolution=res, origin=(0.0, 0.0),
                       heights=heights.copy())


class NearFieldStub:
    """Geometric stand-in for a trained barrier: h < 0 when the terrain
    relief within ~0.5 m ahead of the anchor exceeds 0.15 m."""

    def forward_h(self, patches):
        if hasattr(patches, "values"):
            patches = patches.values
        arr = np.asarray(patches, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim == 4:
            arr = arr[:, 0]
        near = arr[:, 75:, :].reshape(arr.shape[0], -1)
        out = 0.15 - (near.max(axis=1) - near.min(axis=1))
        return out if out.size > 1 else float(out[0])

    def encode_control(self, us):
        us = np.asarray(us, dtype=np.float64)
        n = us.shape[0] if us.ndim == 2 else 1
        return np.ones(n)


class ConstStub:
    def __init__(self, value, ue=1.0):
        self.value, self.ue = value, ue

    def forward_h(self, patches):
        arr = np.asarray(patches)
        n = arr.shape[0] if arr.ndim >= 3 else 1
        out = np.full(n, self.value)
        return out if n > 1 else float(out[0])

    def encode_control(self, us):
        us = np.asarray(us)
        n = us.shape[0] if us.ndim == 2 else 1
        return np.full(n, self.ue)


class TestCosts:
    def test_goal_cost_examples(self):
        cfg = PlannerConfig()
        s = RobotState(x=1.0, y=2.0, z=0, roll=0, pitch=0, yaw=0)
        assert goal_cost(s, (1.0, 2.0), cfg) == 0.0
        cfg2 = PlannerConfig(w_x=2.0, w_y=1.0)
        assert goal_cost(s, (0.0, 2.0), cfg2) == 2.0

    def test_goal_cost_homogeneous_in_weights(self):
        s = RobotState(x=0.3, y=-1.2, z=0, roll=0, pitch=0, yaw=0)
        c1 = goal_cost(s, (2.0, 1.0), PlannerConfig(w_x=1.0, w_y=3.0))
        c2 = goal_cost(s, (2.0, 1.0), PlannerConfig(w_x=2.0, w_y=6.0))
        assert c2 == pytest.approx(2 * c1, rel=1e-12)

    def test_stability_cost(self):
        cfg = PlannerConfig(w_r=1.0, w_p=1.0)
        assert stability_cost(RobotState(0, 0, 0, 0, 0, 0), cfg) == 0.0
        s = RobotState(0, 0, 0, roll=0.1, pitch=0.2, yaw=0)
        assert stability_cost(s, cfg) == pytest.approx(0.3, abs=1e-12)
        s_neg = RobotState(0, 0, 0, roll=-0.1, pitch=-0.2, yaw=0)
        assert stability_cost(s_neg, cfg) == stability_cost(s, cfg)


class TestCbfFeasible:
    def _patch(self):
        return np.zeros((100, 40), dtype=np.float32)

    def test_positive_h_passes(self):
        net = ConstStub(1.0, ue=1.0)
        cfg = PlannerConfig(alpha_gamma=0.5)
        assert cbf_feasible(net, self._patch(), self._patch(), Control(0.5, 0), cfg)

    def test_large_negative_h_next_fails_both_forms(self):
        for form in (CbfForm.PRODUCT, CbfForm.STRICT):
            cfg = PlannerConfig(alpha_gamma=0.5, cbf_form=form)

            class Seq:
                calls = 0

                def forward_h(self, p):
                    Seq.calls += 1
                    return 0.1 if Seq.calls % 2 == 1 else -10.0

                def encode_control(self, u):
                    return 1.0

            assert not cbf_feasible(Seq(), self._patch(), self._patch(),
                                    Control(0.5, 0), cfg)

    def test_boundary_exact_zero_passes(self):
        # h_next * u_e = -gamma * h_t exactly: margin 0, non-strict pass.
        cfg = PlannerConfig(alpha_gamma=0.5, cbf_form=CbfForm.PRODUCT)

        class Boundary:
            calls = 0

            def forward_h(self, p):
                Boundary.calls += 1
                return 1.0 if Boundary.calls % 2 == 1 else -0.5

            def encode_control(self, u):
                return 1.0

        assert cbf_feasible(Boundary(), self._patch(), self._patch(),
                            Control(0.5, 0), cfg)

    def test_strict_form(self):
        cfg = PlannerConfig(alpha_gamma=0.5, cbf_form=CbfForm.STRICT)

        class Seq:
            def __init__(self, ht, hn):
                self.vals = [ht, hn]

            def forward_h(self, p):
                return self.vals.pop(0)

            def encode_control(self, u):
                return 1.0

        # needs h_next >= (1 - gamma) h_t = 0.5 * h_t
        assert cbf_feasible(Seq(1.0, 0.51), self._patch(), self._patch(),
                            Control(0.5, 0), cfg)
        assert not cbf_feasible(Seq(1.0, 0.49), self._patch(), self._patch(),
                                Control(0.5, 0), cfg)


def oracle_plan(hf, state, goal, cfg, traction=DEFAULT_TRACTION, geom=DEFAULT_GEOMETRY):
    """Independent exhaustive enumeration over the same grid using the public
    scalar step(); no barrier filtering (cbf disabled configs only)."""
    vs_scale = max(abs(cfg.u_min.v), abs(cfg.u_max.v)) or 1.0
    ws_scale = max(abs(cfg.u_min.omega), abs(cfg.u_max.omega)) or 1.0
    best_key, best_u = None, None
    for v in np.linspace(cfg.u_min.v, cfg.u_max.v, cfg.v_samples):
        for om in np.linspace(cfg.u_min.omega, cfg.u_max.omega, cfg.omega_samples):
            s = state
            stab = 0.0
            dead = False
            for _ in range(cfg.horizon):
                try:
                    r = step(hf, s, Control(float(v), float(om)), traction, geom)
                except Exception:
                    dead = True
                    break
                if r.immobilized:
                    dead = True
                    break
                s = r.next
                stab += cfg.w_r * abs(s.roll) + cfg.w_p * abs(s.pitch)
            if dead:
                continue
            effort = math.hypot(v / vs_scale, om / ws_scale)
            gc = cfg.w_x * abs(s.x - goal[0]) + cfg.w_y * abs(s.y - goal[1])
            cost = cfg.lambda1 * effort + cfg.lambda2 * gc + cfg.lambda3 * stab
            key = (cost, effort, abs(om), v, om)
            if best_key is None or key < best_key:
                best_key, best_u = key, Control(float(v), float(om))
    return best_u, best_key


class TestPlanStep:
    def test_flat_terrain_goes_straight(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 3.0, math.pi / 2)
        u = plan_step(hf, None, s, (6.0, 5.0), NOCBF)
        assert u is not None and u.omega == 0.0 and u.v > 0.0
        want, _ = oracle_plan(hf, s, (6.0, 5.0), NOCBF)
        assert u == want

    def test_matches_oracle_on_rough_terrain(self):
        hf = generate(TerrainSpec(seed=77, difficulty=Difficulty.MEDIUM,
                                  extent=(12.0, 12.0)))
        for sx, sy, yaw in ((5.0, 4.0, 0.8), (6.5, 6.0, -2.0), (4.0, 7.0, 1.9)):
            s = settle_pose(hf, sx, sy, yaw)
            got = plan_step(hf, None, s, (8.0, 9.0), NOCBF)
            want, _ = oracle_plan(hf, s, (8.0, 9.0), NOCBF)
            assert got == want

    def test_blocking_stub_yields_infeasible(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 3.0, math.pi / 2)
        assert plan_step(hf, ConstStub(-1.0), s, (6.0, 5.0), PlannerConfig()) is None

    def test_returned_control_within_bounds(self):
        hf = generate(TerrainSpec(seed=5, difficulty=Difficulty.HIGH,
                                  extent=(12.0, 12.0)))
        cfg = NOCBF
        rng = np.random.default_rng(2)
        for _ in range(10):
            s = settle_pose(hf, rng.uniform(4, 8), rng.uniform(4, 8),
                            rng.uniform(-math.pi, math.pi))
            u = plan_step(hf, None, s, (6.0, 10.0), cfg)
            if u is None:
                continue
            assert cfg.u_min.v <= u.v <= cfg.u_max.v
            assert cfg.u_min.omega <= u.omega <= cfg.u_max.omega

    def test_argmin_invariant_to_lambda_scaling(self):
        hf = generate(TerrainSpec(seed=21, difficulty=Difficulty.MEDIUM,
                                  extent=(12.0, 12.0)))
        s = settle_pose(hf, 5.0, 5.0, 0.5)
        base = PlannerConfig(cbf_enabled=False)
        scaled = PlannerConfig(cbf_enabled=False,
                               lambda1=base.lambda1 * 7.0,
                               lambda2=base.lambda2 * 7.0,
                               lambda3=base.lambda3 * 7.0)
        assert plan_step(hf, None, s, (8.0, 8.0), base) == \
            plan_step(hf, None, s, (8.0, 8.0), scaled)

    def test_grid_shape(self):
        cfg = PlannerConfig(v_samples=5, omega_samples=3)
        v, om = control_grid(cfg)
        assert v.size == 15 and om.size == 15


class TestNavigate:
    def test_start_at_goal_reaches_immediately(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 6.0, 0.0)
        traj, outcome = navigate(hf, None, s, (6.05, 6.0), NOCBF)
        assert outcome is Outcome.REACHED
        assert traj.controls == []

    def test_flat_three_meters_reached(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 3.5, math.pi / 2)
        traj, outcome = navigate(hf, None, s, (6.0, 6.5), NOCBF)
        assert outcome is Outcome.REACHED
        final = traj.states[-1]
        assert math.hypot(final.x - 6.0, final.y - 6.5) < NOCBF.goal_tol

    def test_goal_cost_monotone_on_straight_flat_run(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 3.5, math.pi / 2)
        traj, _ = navigate(hf, None, s, (6.0, 6.5), NOCBF)
        costs = [goal_cost(st, (6.0, 6.5), NOCBF) for st in traj.states]
        assert all(b < a for a, b in zip(costs, costs[1:]))

    def test_deterministic(self):
        hf = generate(TerrainSpec(seed=9, difficulty=Difficulty.MEDIUM,
                                  extent=(12.0, 12.0)))
        s = settle_pose(hf, 6.0, 3.0, math.pi / 2)
        t1, o1 = navigate(hf, None, s, (6.0, 9.0), NOCBF)
        t2, o2 = navigate(hf, None, s, (6.0, 9.0), NOCBF)
        assert o1 == o2 and t1.states == t2.states and t1.controls == t2.controls

    def test_budget_exhaustion(self):
        hf = flat_field()
        s = settle_pose(hf, 6.0, 3.0, math.pi / 2)
        traj, outcome = navigate(hf, None, s, (6.0, 9.0), NOCBF, budget=3)
        assert outcome is Outcome.BUDGET_EXHAUSTED
        assert len(traj.controls) == 3


class TestWallScenario:
    TH = SafetyThresholds()

    def _transitions_all_safe(self, traj):
        return all(
            classify(a, b, u, self.TH).safe
            for a, b, u in zip(traj.states, traj.states[1:], traj.controls)
        )

    def test_unconstrained_crosses_and_goes_unsafe(self):
        hf = wall_corridor()
        start = settle_pose(hf, 1.2, 1.5, math.pi / 2)
        traj, outcome = navigate(hf, None, start, (1.2, 6.5), NOCBF)
        assert outcome is Outcome.REACHED
        assert not self._transitions_all_safe(traj)

    def test_stub_barrier_pauses_safe(self):
        hf = wall_corridor()
        start = settle_pose(hf, 1.2, 1.5, math.pi / 2)
        traj, outcome = navigate(hf, NearFieldStub(), start, (1.2, 6.5),
                                 PlannerConfig())
        assert outcome is Outcome.PAUSED_INFEASIBLE
        assert self._transitions_all_safe(traj)
        final = traj.states[-1]
        assert classify(final, final, Control(0.0, 0.0), self.TH).safe
        assert final.y < 4.0  # stopped before the band
