import numpy as np
import pytest

from conftest import single_link
from infoprop.calibration.experiments import (
    BLOCKED_LANE_LEVELS,
    PERTURBATION_LEVELS,
    DemandPerturb,
    DemandScale,
    Incident,
    design_matrix,
    generate_experiment,
    perturbation_factors,
    run_design,
    run_experiment,
)
from infoprop.engine.simulator import Simulator
from infoprop.exceptions import ScenarioError
from oracles import godunov_link


def test_scaling_multiplies_every_entry(minimal):
    (scaled,) = generate_experiment(minimal, DemandScale(theta=0.8))

    assert scaled.name == "minimal-scale-0.8"
    assert [q for _, q in scaled.demands[0].series] == pytest.approx([720.0, 1200.0])
    assert [t for t, _ in scaled.demands[0].series] == [0.0, 0.25]


def test_perturbation_factor_formula(minimal):
    factors = perturbation_factors(minimal, 0.1, repetitions=3, seed=5)
    draws = np.random.default_rng(5).random((3, 2))

    assert factors == pytest.approx(1.0 + 2.0 * (draws - 0.5) * 0.1)
    assert np.all((factors >= 0.9) & (factors <= 1.1))
    # a draw of 0.5 leaves demand unchanged and a draw of 1 adds alpha
    assert 1.0 + 2.0 * (0.5 - 0.5) * 0.1 == 1.0
    assert 1000.0 * (1.0 + 2.0 * (1.0 - 0.5) * 0.1) == pytest.approx(1100.0)


def test_perturbed_scenarios_apply_their_row(minimal):
    spec = DemandPerturb(alpha=0.2, repetitions=4, seed=11)

    scenarios = generate_experiment(minimal, spec)
    factors = perturbation_factors(minimal, 0.2, 4, 11)

    assert [s.name for s in scenarios] == [f"minimal-perturb-0.2-{r:02d}" for r in range(4)]
    for r, scenario in enumerate(scenarios):
        demands = [q for _, q in scenario.demands[0].series]
        assert demands == pytest.approx([900.0 * factors[r, 0], 1500.0 * factors[r, 1]])


def test_perturbation_is_reproducible(minimal):
    spec = DemandPerturb(alpha=0.1, repetitions=2, seed=3)

    first = generate_experiment(minimal, spec)
    second = generate_experiment(minimal, spec)

    assert [s.demands for s in first] == [s.demands for s in second]
    assert first[0].demands != first[1].demands


def test_incident_adds_a_lane_closure(corridor):
    spec = Incident(link="m3", blocked_lanes=2, start=1.0, duration=0.5)

    (scenario,) = generate_experiment(corridor, spec)

    assert scenario.name == "corridor-incident-m3-2"
    assert scenario.incidents[-1].blocked_lanes == 2


def test_incident_cannot_block_missing_lanes(minimal):
    with pytest.raises(ScenarioError):
        generate_experiment(minimal, Incident(link="l1", blocked_lanes=2, start=0.1, duration=0.1))


def test_design_matrix():
    specs = design_matrix("m3", 1.0, 1.0, repetitions=20, seed=0)

    kinds = [s.kind for s in specs]
    assert kinds.count("scale") == 8
    assert kinds.count("perturb") == 4
    assert kinds.count("incident") == 5
    assert all(s.repetitions == 20 for s in specs if s.kind == "perturb")
    assert [s.level for s in specs if s.kind == "incident"] == [1, 2, 3, 4, 5]


def test_unscaled_run_matches_its_base(minimal):
    row = run_experiment(minimal, DemandScale(theta=1.0), workers=1)

    assert row.index.name == "scale"
    assert list(row.index) == [1.0]
    assert row[("counts", "RMSE")].iloc[0] == pytest.approx(0.0, abs=1e-9)
    assert row[("times", "U")].iloc[0] == pytest.approx(0.0, abs=1e-9)


def test_design_run_groups_by_kind(minimal):
    specs = [DemandScale(theta=1.0), DemandScale(theta=0.8)]

    tables = run_design(minimal, specs, workers=1)

    assert list(tables) == ["scale"]
    assert list(tables["scale"].index) == [1.0, 0.8]
    assert tables["scale"].loc[0.8, ("counts", "RMSE")] > 0


def test_every_generated_run_reaches_the_hook(minimal):
    seen = []

    run_experiment(
        minimal,
        DemandPerturb(alpha=0.1, repetitions=3, seed=1),
        workers=1,
        on_run=lambda scenario, output: seen.append((scenario.name, output.summary.mode)),
    )

    assert [name for name, _ in seen] == [f"minimal-perturb-0.1-{r:02d}" for r in range(3)]


def vehicles_demanded(scenario) -> float:
    total = 0.0
    for demand in scenario.demands:
        times = [t for t, _ in demand.series] + [scenario.horizon]
        total += sum(q * (end - t) for (t, q), end in zip(demand.series, times[1:], strict=True))
    return total


@pytest.mark.parametrize("alpha", PERTURBATION_LEVELS)
def test_perturbation_keeps_the_expected_total_demand(minimal, alpha):
    scenarios = generate_experiment(minimal, DemandPerturb(alpha=alpha, repetitions=400, seed=7))

    totals = np.array([vehicles_demanded(s) for s in scenarios])

    base = vehicles_demanded(minimal)
    assert totals.mean() == pytest.approx(base, rel=0.02)
    assert totals.min() >= (1 - alpha) * base - 1e-9
    assert totals.max() <= (1 + alpha) * base + 1e-9


def test_accuracy_falls_as_more_lanes_are_blocked(build):
    """A growing exit queue on a five-lane link, scored against a fine-grid Godunov run"""
    data = single_link([(0.0, 6000.0)], length=4.0, horizon=0.3)
    data["links"][0]["lanes"] = 5
    base = build(data)
    start = 0.1
    query = [round(start + 0.01 * i, 2) for i in range(21)]

    errors = []
    for blocked in BLOCKED_LANE_LEVELS:
        spec = Incident(link="l1", blocked_lanes=blocked, start=start, duration=1.0)
        sim = Simulator(generate_experiment(base, spec)[0])
        sim.run()
        history = sim.links["l1"].history
        fd = history.fd
        reduced = fd.max_flow * (5 - blocked) / 5
        reference = godunov_link(
            fd,
            4.0,
            inflow=lambda t: 6000.0,
            exit_capacity=lambda t, c=reduced: c if t >= start - 1e-9 else np.inf,
            t_query=query,
        )
        per_time = []
        for t in query[1:]:
            x, k = reference[t]
            model = np.array([history.density_at(t, xi) for xi in x])
            per_time.append(np.abs(model - k).mean() / fd.jam_density)
        errors.append(float(np.mean(per_time)))

    # one blocked lane leaves more capacity than the demand needs
    assert errors[0] < 1e-6
    assert errors[0] < errors[1] < errors[-1]
    assert np.corrcoef(BLOCKED_LANE_LEVELS, errors)[0, 1] > 0.8
    assert max(errors) < 0.02
