"""End-to-end acceptance checks. Each test carries a ``criterion`` mark; the
terminal summary prints one PASS/FAIL line per criterion."""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from oppsim.cli import main
from oppsim.engine import Simulation, audit_run, run
from oppsim.experiment import load_spec, run_experiment
from oppsim.report import buffer_estimate, convert_bytes, teci_alloc
from oppsim.social import InterestSocialState

from oracles import random_log, social_from_log
from scenarios import hand_cases, random_desk_scenario, social_log_scenario, social_mismatches

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "oppsim" / "fixtures"
ORDERING = pytest.mark.criterion(
    7, "dense: SCORP cheaper than dLife and Bubble Rap, delivers at least as well as SnW; "
       "sparse: SCORP delivery rises with load; under 5 min")


@pytest.mark.criterion(1, "TECI allocation calculator: 7.11 KB and 193.71 GB within 0.5%")
def test_teci_allocation_sizes():
    small = convert_bytes(teci_alloc(35, 24, 64) / 8, "KB")
    big = convert_bytes(teci_alloc(10**9, 24, 64) / 8, "GB")
    assert small == pytest.approx(7.11, rel=5e-3)
    assert big == pytest.approx(193.71, rel=5e-3)


@pytest.mark.criterion(2, "buffer estimator: 4.88 MB within 1%")
def test_buffer_estimate():
    mb = convert_bytes(buffer_estimate(39240, 12, 35, 52275), "MB", binary=False)
    assert mb == pytest.approx(4.88, rel=0.01)


@pytest.mark.criterion(3, "social metrics match brute force on 1000 random logs in under 30 s")
def test_social_metrics_match_brute_force():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    problems = []
    for n in range(1000):
        log = random_log(rng)
        nodes, _, t_end, interests, contacts = log
        oracle = social_from_log(contacts, lambda p: interests[p], nodes, t_end)
        sc, trace = social_log_scenario(log)
        for exact in (True, False):
            sim = Simulation(sc, trace, exact_social=exact)
            sim.run()
            problems += [f"log {n}: {p}" for p in social_mismatches(sim, oracle, exact)]
    elapsed = time.perf_counter() - t0
    assert problems == []
    assert elapsed < 30.0, f"{elapsed:.1f} s"


@pytest.mark.criterion(4, "TECI with uniform ATCTI equals the summed coefficients to 1e-12")
def test_uniform_teci_constant():
    want = float(sum(Fraction(24, 24 + d) for d in range(24)))
    assert want == pytest.approx(math.fsum(24 / (24 + d) for d in range(24)), abs=1e-15)
    s = InterestSocialState(0, [1])
    s.atcti[0, :] = 1.0
    for i in range(24):
        assert abs(s.weights(i)[0] - want) <= 1e-12


class CheckedSimulation(Simulation):
    """Asserts the conservation invariants around every transmission."""

    def _apply(self, link, carrier, peer, action):
        assert peer.buffer.get(action.message_id) is None, \
            f"node {carrier.id} re-replicated {action.message_id} to holder {peer.id}"
        moved = super()._apply(link, carrier, peer, action)
        for nd in (carrier, peer):
            assert nd.buffer.capacity is None or nd.buffer.occupancy <= nd.buffer.capacity
        if self.kind == "snw":
            total = sum(nd.copies.get(action.message_id, 0) for nd in self.nodes)
            assert total <= self.scenario.params.snw_copies
        return moved


@pytest.mark.criterion(5, "conservation over 500 random desk runs in under 2 min")
def test_conservation_over_random_runs():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    protocols = ["scorp", "dlife", "bubble", "snw"]
    for n in range(500):
        sc, trace = random_desk_scenario(rng, protocols[n % 4])
        r = CheckedSimulation(sc, trace).run()
        assert audit_run(r, trace, sc.messages) == [], f"run {n}"
        by_id = {m.id: m for m in sc.messages}
        assert all(d.delivered_at < by_id[d.message_id].expires_at for d in r.deliveries)
        assert all(p <= sc.capacity_of(k) for k, p in enumerate(r.peak_occupancy)
                   if sc.capacity_of(k) is not None)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"{elapsed:.1f} s"


@pytest.mark.criterion(6, "re-running a fixture experiment gives a byte-identical CSV")
@pytest.mark.parametrize("name", ["tiny", "sparse", "loadsweep"])
def test_fixture_rerun_byte_identical(name, tmp_path, monkeypatch):
    if name == "loadsweep":
        monkeypatch.setenv("OPPSIM_SEEDS", "1")
    spec = str(FIXTURES / f"{name}.json")
    for out in ("a", "b"):
        assert main(["run", "--spec", spec, "--out", str(tmp_path / out), "--jobs", "1"]) == 0
    assert (tmp_path / "a" / f"{name}.csv").read_bytes() == (tmp_path / "b" / f"{name}.csv").read_bytes()


@pytest.fixture(scope="module")
def dense_rows():
    t0 = time.perf_counter()
    rows = {r.protocol: r.summary for r in run_experiment(load_spec(FIXTURES / "dense.json")).rows}
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sparse_rows():
    t0 = time.perf_counter()
    rows = [r.summary for r in run_experiment(load_spec(FIXTURES / "sparse.json")).rows]
    return rows, time.perf_counter() - t0


@ORDERING
def test_dense_cost_ordering(dense_rows):
    rows, _ = dense_rows
    scorp = rows["scorp"].cost
    for other in ("dlife", "bubble"):
        assert scorp.high < rows[other].cost.low, other


@ORDERING
def test_dense_scorp_delivers_at_least_snw(dense_rows):
    rows, _ = dense_rows
    scorp, snw = rows["scorp"].delivery_probability, rows["snw"].delivery_probability
    assert scorp.mean >= snw.mean
    # SnW must not be significantly ahead
    assert snw.low <= scorp.high


@ORDERING
def test_sparse_delivery_rises_with_load(sparse_rows):
    rows, _ = sparse_rows
    dp = [s.delivery_probability for s in rows]
    for lo, hi in zip(dp, dp[1:]):
        assert lo.high < hi.low, (lo.mean, hi.mean)


@ORDERING
def test_ordering_runtime(dense_rows, sparse_rows):
    assert dense_rows[1] + sparse_rows[1] < 300.0


@pytest.mark.criterion(8, "hand-counted fixtures give the exact delivery and forwarding counts")
@pytest.mark.parametrize("case", hand_cases(), ids=lambda c: c[0])
def test_hand_fixtures(case):
    _, sc, trace, deliveries, forwardings = case
    r = run(sc, trace)
    assert (len(r.deliveries), r.forwardings) == (deliveries, forwardings)
