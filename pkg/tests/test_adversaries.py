import math

import pytest
from scipy import stats

from dbound.adversaries import (
    FraudEstimate,
    FraudKind,
    FraudStrategy,
    MafiaRelayProver,
    distance_fraud,
    distance_fraud_session,
    known_bits_mask,
    mafia_early_challenge,
    mafia_early_challenge_session,
    simulate_fraud,
    terrorist_fraud_session,
    terrorist_split_reveal,
    theorem_bound,
    wilson_interval,
)
from dbound.channel import LinkPair
from dbound.core import BitString, RngStream
from dbound.protocols import ProtocolId, ProtocolParams, ReaderDatabase, TagIdentity, run_session

SK, HIT, REID = ProtocolId.SWISS_KNIFE, ProtocolId.HITOMI, ProtocolId.REID_SPLIT


def params(protocol, n, tau=1, **kw):
    return ProtocolParams(protocol, n, tau=tau, **kw)


def exact_success(n, tau, per_round, sure_rounds=0):
    """P(fewer than tau wrong rounds) when n - sure_rounds rounds are Bernoulli(per_round)."""
    return float(stats.binom.cdf(tau - 1, n - sure_rounds, 1 - per_round))


def within(est, p, tol):
    assert abs(est.p_hat - p) <= tol, (est.p_hat, p)


# ---- documented examples -----------------------------------------------


def test_distance_fraud_n1():
    est = simulate_fraud(distance_fraud(), params(SK, 1), 100_000, RngStream(1, "df1"))
    within(est, 0.5, 0.005)


def test_distance_fraud_n8_million():
    est = simulate_fraud(distance_fraud(), params(SK, 8), 1_000_000, RngStream(2, "df8"))
    within(est, 0.5**8, 0.001)


def test_tau_above_n_always_accepts():
    for s in (distance_fraud(), mafia_early_challenge(), terrorist_split_reveal()):
        est = simulate_fraud(s, params(SK, 8, tau=9), 2000, RngStream(3, "always"))
        assert est.p_hat == 1.0


def test_mafia_vs_reid():
    within(simulate_fraud(mafia_early_challenge(), params(REID, 1), 100_000, RngStream(4, "m1")), 0.75, 0.005)
    within(simulate_fraud(mafia_early_challenge(), params(REID, 8), 100_000, RngStream(5, "m8")), 0.75**8, 0.01)


@pytest.mark.parametrize("protocol", [SK, HIT])
def test_mafia_detected_by_echo(protocol):
    est = simulate_fraud(mafia_early_challenge(), params(protocol, 8), 100_000, RngStream(6, "m-echo"))
    assert est.p_hat <= 0.01
    within(est, 0.5**8, 0.001)


def test_terrorist_examples():
    n = 16
    full = simulate_fraud(terrorist_split_reveal(0, known_bits_mask(n, 0)), params(SK, n), 5000, RngStream(7, "t0"))
    assert full.p_hat == 1.0
    v4 = simulate_fraud(terrorist_split_reveal(0, known_bits_mask(n, 4)), params(SK, n), 100_000, RngStream(8, "t4"))
    within(v4, 0.75**4, 0.02)
    z0 = simulate_fraud(terrorist_split_reveal(0), params(SK, 8), 100_000, RngStream(9, "t8"))
    within(z0, 0.75**8, 0.01)


def test_simulate_fraud_contract():
    for seed in range(5):
        est = simulate_fraud(distance_fraud(), params(SK, 4), 1, RngStream(seed, "one"))
        assert est.p_hat in (0.0, 1.0)
    a = simulate_fraud(mafia_early_challenge(), params(REID, 6), 40_000, RngStream(10, "det"))
    b = simulate_fraud(mafia_early_challenge(), params(REID, 6), 40_000, RngStream(10, "det"))
    assert a == b
    with pytest.raises(ValueError):
        simulate_fraud(distance_fraud(), params(SK, 4), 0, RngStream(0))
    with pytest.raises(ValueError):
        simulate_fraud(distance_fraud(), params(SK, 4), 10, RngStream(0), engine="gpu")


# ---- exact oracles -------------------------------------------------------


ORACLE_CASES = [
    (distance_fraud(), SK, 6, 2, 0.5, 0),
    (distance_fraud(), HIT, 5, 3, 0.5, 0),
    (mafia_early_challenge(), REID, 6, 2, 0.75, 0),
    (mafia_early_challenge(), REID, 10, 4, 0.75, 0),
    (mafia_early_challenge(), SK, 6, 3, 0.5, 0),
    (terrorist_split_reveal(1, known_bits_mask(8, 3)), SK, 8, 2, 0.75, 5),
    (terrorist_split_reveal(0, known_bits_mask(8, 3)), HIT, 8, 1, 0.75, 0),  # key bits give no share bits
    (terrorist_split_reveal(0, known_bits_mask(8, 3)), REID, 8, 1, 0.75, 5),
]


@pytest.mark.parametrize("strategy,protocol,n,tau,per_round,sure", ORACLE_CASES)
def test_vector_engine_matches_exact_binomial(strategy, protocol, n, tau, per_round, sure):
    trials = 100_000
    est = simulate_fraud(strategy, params(protocol, n, tau), trials, RngStream(12, f"oracle/{n}/{tau}"))
    p = exact_success(n, tau, per_round, sure)
    assert abs(est.p_hat - p) <= 4 * math.sqrt(p * (1 - p) / trials) + 1e-12


@pytest.mark.parametrize("strategy,protocol,n,tau,per_round,sure", ORACLE_CASES[:6])
def test_scalar_engine_matches_exact_binomial(strategy, protocol, n, tau, per_round, sure):
    trials = 4000
    est = simulate_fraud(strategy, params(protocol, n, tau, prf="mix64"), trials, RngStream(13, "scalar"), engine="scalar")
    p = exact_success(n, tau, per_round, sure)
    assert abs(est.p_hat - p) <= 4 * math.sqrt(p * (1 - p) / trials)


@pytest.mark.parametrize("strategy", [distance_fraud(), mafia_early_challenge(), terrorist_split_reveal(1)])
@pytest.mark.parametrize("protocol", [SK, REID])
def test_engines_agree_under_noise(strategy, protocol):
    p = params(protocol, 6, tau=2, prf="mix64")
    links = LinkPair.symmetric(0.05)
    vec = simulate_fraud(strategy, p, 100_000, RngStream(14, "v"), links=links)
    sca = simulate_fraud(strategy, p, 4000, RngStream(14, "s"), engine="scalar", links=links)
    se = math.sqrt(vec.p_hat * (1 - vec.p_hat) / 4000 + vec.p_hat * (1 - vec.p_hat) / 100_000)
    assert abs(vec.p_hat - sca.p_hat) <= 4 * se + 1e-9
    assert abs(vec.mean_rounds_correct - sca.mean_rounds_correct) < 0.15


# ---- properties ----------------------------------------------------------


@pytest.mark.parametrize(
    "strategy,protocol",
    [
        (distance_fraud(), SK),
        (distance_fraud(), REID),
        (mafia_early_challenge(), REID),
        (mafia_early_challenge(), SK),
        (mafia_early_challenge(), HIT),
        (terrorist_split_reveal(0, known_bits_mask(10, 6)), SK),
        (terrorist_split_reveal(1, known_bits_mask(10, 6)), REID),
    ],
)
def test_never_exceeds_theorem_bound(strategy, protocol):
    p = params(protocol, 10)
    trials = 200_000
    est = simulate_fraud(strategy, p, trials, RngStream(15, "bound"))
    bound = theorem_bound(strategy, p)
    assert est.p_hat <= bound + 4 * math.sqrt(bound * (1 - bound) / trials)
    # the simulated strategies attain their bounds
    assert est.p_hat >= bound - 4 * math.sqrt(bound * (1 - bound) / trials)


@pytest.mark.parametrize("strategy", [distance_fraud(), mafia_early_challenge(), terrorist_split_reveal(0)])
def test_monotone_in_n_and_tau(strategy):
    trials = 50_000
    grid = {}
    for n in (1, 2, 4, 8):
        for tau in sorted({1, max(1, n // 2), n}):
            est = simulate_fraud(strategy, params(REID, n, tau), trials, RngStream(16, f"mono/{n}/{tau}"))
            grid[n, tau] = est
    slack = lambda a, b: 4 * math.sqrt(a.stderr**2 + b.stderr**2) + 1e-12  # noqa: E731
    for n in (1, 2, 4):
        a, b = grid[n, 1], grid[2 * n, 1]
        assert b.p_hat <= a.p_hat + slack(a, b)
    for n in (2, 4, 8):
        taus = sorted(t for (m, t) in grid if m == n)
        for t1, t2 in zip(taus, taus[1:]):
            a, b = grid[n, t1], grid[n, t2]
            assert a.p_hat <= b.p_hat + slack(a, b)


def test_relay_wait_always_breaks_timing():
    p = params(REID, 16, tau=17)
    for i in range(50):
        rng = RngStream(i, "wait")
        tag = TagIdentity.random(rng.child("tag"), 16)
        prover = MafiaRelayProver(p, tag, rng.child("adv"), relay_delay=1.5, on_miss="wait")

        class Actor:
            def prover(self, *_):
                return prover

        t = run_session(p, tag, ReaderDatabase([tag]), actor=Actor(), rng=rng.child("s"))
        assert prover.misses
        for i_round in range(16):
            late = t.rounds[i_round].latency > p.t_max
            assert late == (i_round in prover.misses)
        assert t.verdict.err_t == len(prover.misses)


def test_waiting_never_beats_guessing():
    p = params(REID, 8, tau=2)
    wait = simulate_fraud(mafia_early_challenge(on_miss="wait"), p, 100_000, RngStream(17, "w"))
    guess = simulate_fraud(mafia_early_challenge(), p, 100_000, RngStream(17, "g"))
    assert wait.p_hat < guess.p_hat
    assert abs(wait.p_hat - exact_success(8, 2, 0.5)) <= 4 * wait.stderr + 1e-9


def test_relay_delay_validation():
    p = params(REID, 8)
    with pytest.raises(ValueError):
        mafia_early_challenge(relay_delay=0.1, on_miss="wait").prover(p, TagIdentity.random(RngStream(0), 8), RngStream(1))
    with pytest.raises(ValueError):
        simulate_fraud(mafia_early_challenge(relay_delay=0.2, on_miss="wait"), p, 10, RngStream(0))
    with pytest.raises(ValueError):
        FraudStrategy("mafia", on_miss="teleport")


def test_strategy_fields():
    with pytest.raises(ValueError):
        FraudStrategy(FraudKind.TERRORIST, revealed_share=2)
    s = terrorist_split_reveal(0, known_bits_mask(8, 3))
    assert s.unknown_bits(8) == 3
    assert known_bits_mask(8, 3) == BitString.from_str("11111000")
    with pytest.raises(ValueError):
        s.prover(params(SK, 9), TagIdentity.random(RngStream(0), 9), RngStream(1))
    with pytest.raises(ValueError):
        known_bits_mask(4, 5)


def test_session_wrappers():
    p = params(REID, 8)
    tag = TagIdentity.random(RngStream(0, "wrap"), 8)
    db = ReaderDatabase([tag])
    out = distance_fraud_session(p, tag, db, RngStream(1))
    assert 0 <= out.rounds_correct <= 8 and out.accepted == out.verdict.accepted
    out = mafia_early_challenge_session(p, tag, db, rng=RngStream(2))
    assert out.rounds_correct <= 8
    full = terrorist_split_reveal(1, known_bits_mask(8, 0))
    assert terrorist_fraud_session(p, full, tag, db, RngStream(3)).accepted
    with pytest.raises(ValueError):
        terrorist_fraud_session(p, distance_fraud(), tag, db, RngStream(3))


# ---- intervals -----------------------------------------------------------


@pytest.mark.parametrize("k,n", [(0, 1), (1, 1), (0, 50), (7, 50), (50, 50), (391, 100_000), (31_640, 100_000)])
def test_wilson_matches_scipy(k, n):
    ref = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    lo, hi = wilson_interval(k, n)
    assert math.isclose(lo, ref.low, abs_tol=1e-9) and math.isclose(hi, ref.high, abs_tol=1e-9)
    e = FraudEstimate.from_counts(k, n)
    assert e.ci_low <= e.p_hat <= e.ci_high
